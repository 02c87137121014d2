//! Skeleton learning from round-robin single-node interventions.
//!
//! Sweeps of probe arms (the empty arm, then each single-node arm) feed a
//! mean table. Nodes whose means shift by more than half the identifiability
//! margin when `i` is intervened are flagged as descendants of `i`; ancestor
//! sets follow set-algebraically, a topological order is extracted, and a
//! penalized regression on the ancestor columns screens the parent sets.

use std::collections::BTreeSet;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::graph::{self, DagSkeleton};
use crate::lasso::{lasso_fit, lasso_lambda, LassoProblem, LassoSettings};

/// Running sums and counts for the probe arms.
///
/// Probe index 0 is the empty arm; probe index `j` (for `j < N`) is the
/// single-node arm `{j}`. The reward node `N` is never probed.
#[derive(Debug, Clone)]
pub struct MeanTable {
    node_count: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl MeanTable {
    pub fn new(node_count: usize) -> Self {
        MeanTable {
            node_count,
            sums: vec![vec![0.0; node_count]; node_count],
            counts: vec![0; node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of probe arms (the empty arm plus `N-1` singletons).
    pub fn probe_count(&self) -> usize {
        self.node_count
    }

    pub fn record(&mut self, probe: usize, x: &[f64]) {
        assert_eq!(x.len(), self.node_count);
        for (slot, v) in self.sums[probe].iter_mut().zip(x) {
            *slot += v;
        }
        self.counts[probe] += 1;
    }

    pub fn count(&self, probe: usize) -> usize {
        self.counts[probe]
    }

    pub fn total_rounds(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Mean estimate of node `i` under probe arm `probe`.
    pub fn mean(&self, i: usize, probe: usize) -> f64 {
        assert!(self.counts[probe] > 0, "probe {probe} has no samples");
        self.sums[probe][i - 1] / self.counts[probe] as f64
    }

    pub fn mean_observational(&self, i: usize) -> f64 {
        self.mean(i, 0)
    }

    pub fn mean_single(&self, i: usize, intervened: usize) -> f64 {
        self.mean(i, intervened)
    }
}

/// One probe sweep: plays the empty arm, then `{1}, .., {N-1}` in order.
/// Returns the sweep's realizations indexed by probe arm.
pub fn probe_round(env: &mut dyn Environment, table: &mut MeanTable) -> Vec<Vec<f64>> {
    let n = env.node_count();
    let mut draws = Vec::with_capacity(n);
    let obs = env.play(&crate::arm::Arm::empty());
    table.record(0, &obs);
    draws.push(obs);
    for j in 1..n {
        let x = env.play(&crate::arm::Arm::single(j));
        table.record(j, &x);
        draws.push(x);
    }
    draws
}

/// Per-node descendant estimates; `None` marks unprobed nodes (the reward
/// node), which therefore never enter the candidate-ancestor universe.
pub type DescendantSets = Vec<Option<BTreeSet<usize>>>;

/// Flags `j` as a descendant of `i` when the single-node intervention on `i`
/// moves the mean of `j` by more than `eta / 2`. Non-roots flag themselves.
pub fn estimate_descendants(table: &MeanTable, eta: f64) -> DescendantSets {
    let n = table.node_count();
    for probe in 0..n {
        assert!(table.count(probe) > 0, "probe {probe} has no samples yet");
    }
    let mut de_hat: DescendantSets = vec![None; n];
    for i in 1..n {
        let set: BTreeSet<usize> = (1..=n)
            .filter(|&j| (table.mean_observational(j) - table.mean_single(j, i)).abs() > eta / 2.0)
            .collect();
        de_hat[i - 1] = Some(set);
    }
    de_hat
}

/// Candidate ancestors of `i`: every probed `j != i` that either looks like
/// a root (empty descendant set — interventions on roots change nothing) or
/// has `i` among its descendants.
pub fn estimate_ancestors(de_hat: &DescendantSets) -> Vec<BTreeSet<usize>> {
    let n = de_hat.len();
    (1..=n)
        .map(|i| {
            (1..=n)
                .filter(|&j| j != i)
                .filter(|&j| {
                    de_hat[j - 1]
                        .as_ref()
                        .is_some_and(|set| set.is_empty() || set.contains(&i))
                })
                .collect()
        })
        .collect()
}

/// False iff two nodes claim each other as descendants.
pub fn dag_consistent(de_hat: &DescendantSets) -> bool {
    let n = de_hat.len();
    for i in 1..=n {
        let Some(de_i) = de_hat[i - 1].as_ref() else {
            continue;
        };
        for j in i + 1..=n {
            let Some(de_j) = de_hat[j - 1].as_ref() else {
                continue;
            };
            if de_i.contains(&j) && de_j.contains(&i) {
                return false;
            }
        }
    }
    true
}

/// Topological order from the ancestor estimates, ascending-label tie-break.
///
/// Mutually-ancestral pairs (flagged roots list each other through the
/// empty-descendant branch) carry no orientation information and are dropped
/// from the precedence relation before running Kahn's algorithm.
pub fn order_from_ancestors(an_hat: &[BTreeSet<usize>]) -> Result<Vec<usize>> {
    let n = an_hat.len();
    let parents: Vec<Vec<usize>> = (1..=n)
        .map(|i| {
            an_hat[i - 1]
                .iter()
                .copied()
                .filter(|&j| !an_hat[j - 1].contains(&i))
                .collect()
        })
        .collect();
    graph::topological_order(n, &parents)
}

/// Output of a structure-learning run.
#[derive(Debug, Clone)]
pub struct SkeletonEstimate {
    pub de_hat: DescendantSets,
    pub an_hat: Vec<BTreeSet<usize>>,
    pub pa_hat: Vec<BTreeSet<usize>>,
    /// Topological order consistent with the ancestor estimates.
    pub order: Vec<usize>,
    /// `|pa_hat(i)| / |Pa(i)|` per node when ground truth was supplied;
    /// `None` for true roots. Diagnostics only.
    pub kappa_report: Vec<Option<f64>>,
}

impl SkeletonEstimate {
    pub fn node_count(&self) -> usize {
        self.an_hat.len()
    }

    /// Whether the learned order is topologically valid for `truth`.
    pub fn order_valid_for(&self, truth: &DagSkeleton) -> bool {
        graph::order_is_valid(truth, &self.order)
    }

    /// Whether every true parent set is contained in its estimate.
    pub fn parents_contained_in(&self, truth: &DagSkeleton) -> bool {
        (1..=truth.node_count())
            .all(|i| truth.parents(i).iter().all(|p| self.pa_hat[i - 1].contains(p)))
    }
}

/// Resolved inputs of a structure-learning run.
#[derive(Debug, Clone)]
pub struct SlConfig {
    /// Identifiability margin; the descendant test uses `eta / 2`.
    pub eta: f64,
    /// Minimum probe sweeps before the consistency gate may exit the loop.
    pub t1: usize,
    /// Target observational sample count for the regression stage; the
    /// learner tops up until `N_obs = max(t1, t2)`.
    pub t2: usize,
    pub delta: f64,
    /// Bound on `|X_i|`, used in the penalty formula.
    pub m: f64,
    /// Overrides the formula-derived penalty when set.
    pub lambda_override: Option<f64>,
    pub lasso: LassoSettings,
    /// Hard cap on environment interactions.
    pub max_rounds: Option<usize>,
}

/// Exploration constants `T1 = ceil(32 m^2 / eta^2 * ln(2 N^2 / delta))` and
/// `T2 = ceil(c d ln N)`, floored at one round each.
pub fn exploration_constants(
    m: f64,
    eta: f64,
    node_count: usize,
    d: usize,
    delta: f64,
    c: f64,
) -> Result<(usize, usize)> {
    if !(m > 0.0) || !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exploration constants need m > 0 and eta > 0, got m = {m}, eta = {eta}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(c > 1.0) {
        return Err(Error::InvalidParameter(format!("c must exceed 1, got {c}")));
    }
    let n = node_count as f64;
    let t1 = (32.0 * m * m / (eta * eta) * (2.0 * n * n / delta).ln()).ceil();
    let t2 = (c * d as f64 * n.ln()).ceil();
    Ok(((t1 as usize).max(1), (t2 as usize).max(1)))
}

/// Full structure-learning outcome.
#[derive(Debug, Clone)]
pub struct SlOutcome {
    pub estimate: SkeletonEstimate,
    /// Total environment interactions: probe sweeps plus observational top-up.
    pub rounds_used: usize,
    pub sweeps: usize,
    /// Observational sample count available to the regression stage.
    pub observational_rounds: usize,
    /// Per-node penalty actually used (None for nodes with no candidates).
    pub lambda_used: Vec<Option<f64>>,
    /// Played probe sequence as (probe index, realized reward) pairs; probe 0
    /// is the empty arm, probe `j` the single-node arm `{j}`.
    pub plays: Vec<(usize, f64)>,
}

/// Runs the learning loop: probe sweeps until the descendant estimates are
/// mutually consistent, admit a topological order, and at least `t1` sweeps
/// have accumulated; then observational top-up and per-node parent screening.
pub fn run_structure_learning(
    env: &mut dyn Environment,
    config: &SlConfig,
    truth: Option<&DagSkeleton>,
) -> Result<SlOutcome> {
    let n = env.node_count();
    if config.t1 == 0 || config.t2 == 0 || !(config.eta > 0.0) || !(config.m > 0.0) {
        return Err(Error::InvalidParameter(
            "structure learning needs positive eta, m, t1, t2".into(),
        ));
    }
    let mut table = MeanTable::new(n);
    let mut obs_rows: Vec<Vec<f64>> = Vec::new();
    let mut plays: Vec<(usize, f64)> = Vec::new();
    let mut rounds_used = 0usize;
    let mut sweeps = 0usize;

    let check_budget = |rounds_used: usize, next: usize| -> Result<()> {
        if let Some(cap) = config.max_rounds {
            if rounds_used + next > cap {
                return Err(Error::BudgetExceeded {
                    budget: cap,
                    used: rounds_used,
                    context: "structure learning did not finish within the round cap".into(),
                });
            }
        }
        Ok(())
    };

    let (de_hat, an_hat, order) = loop {
        check_budget(rounds_used, n)?;
        let draws = probe_round(env, &mut table);
        for (probe, x) in draws.iter().enumerate() {
            plays.push((probe, x[n - 1]));
        }
        obs_rows.push(draws.into_iter().next().expect("sweep has an observational draw"));
        sweeps += 1;
        rounds_used += n;
        if sweeps < config.t1 {
            continue;
        }
        let de_hat = estimate_descendants(&table, config.eta);
        if !dag_consistent(&de_hat) {
            continue;
        }
        let an_hat = estimate_ancestors(&de_hat);
        match order_from_ancestors(&an_hat) {
            Ok(order) => break (de_hat, an_hat, order),
            Err(_) => continue, // longer cycles: keep probing
        }
    };

    // Observational top-up until N_obs = max(t1, t2).
    let target_obs = config.t1.max(config.t2);
    while obs_rows.len() < target_obs {
        check_budget(rounds_used, 1)?;
        let x = env.play(&crate::arm::Arm::empty());
        table.record(0, &x);
        plays.push((0, x[n - 1]));
        obs_rows.push(x);
        rounds_used += 1;
    }
    let n_obs = obs_rows.len();
    debug_assert_eq!(rounds_used, table.total_rounds());

    // Parent screening per node over its candidate-ancestor columns.
    let mut pa_hat: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut lambda_used: Vec<Option<f64>> = vec![None; n];
    for i in 1..=n {
        let ancestors: Vec<usize> = an_hat[i - 1].iter().copied().collect();
        if ancestors.is_empty() {
            continue;
        }
        let lambda = config
            .lambda_override
            .unwrap_or_else(|| lasso_lambda(config.m, n, ancestors.len(), config.delta, n_obs));
        lambda_used[i - 1] = Some(lambda);
        let design: Vec<Vec<f64>> = obs_rows
            .iter()
            .map(|row| ancestors.iter().map(|&a| row[a - 1]).collect())
            .collect();
        let response: Vec<f64> = obs_rows.iter().map(|row| row[i - 1]).collect();
        let theta = lasso_fit(
            &LassoProblem::new(design, response, lambda)?.with_settings(config.lasso),
        )?;
        pa_hat[i - 1] = ancestors
            .iter()
            .zip(&theta)
            .filter(|(_, &coef)| coef != 0.0)
            .map(|(&a, _)| a)
            .collect();
    }

    let kappa_report = match truth {
        Some(truth) => (1..=n)
            .map(|i| {
                let true_deg = truth.parents(i).len();
                (true_deg > 0).then(|| pa_hat[i - 1].len() as f64 / true_deg as f64)
            })
            .collect(),
        None => vec![None; n],
    };

    Ok(SlOutcome {
        estimate: SkeletonEstimate {
            de_hat,
            an_hat,
            pa_hat,
            order,
            kappa_report,
        },
        rounds_used,
        sweeps,
        observational_rounds: n_obs,
        lambda_used,
        plays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::Arm;
    use crate::env::SemEnvironment;
    use crate::gallery::{hierarchical, HierarchicalSpec};
    use crate::noise::NoiseSpec;
    use crate::sem::SemInstance;
    use nalgebra::DMatrix;

    fn chain3() -> SemInstance {
        let skeleton = DagSkeleton::new(3, [(1, 2), (2, 3)]).unwrap();
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = 1.0;
        b[(1, 2)] = 1.0;
        let bs = b.clone() * 0.5;
        SemInstance::new(
            skeleton,
            &b,
            &bs,
            vec![NoiseSpec::Uniform { lo: 0.0, hi: 1.0 }; 3],
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn chain3_constant() -> SemInstance {
        let skeleton = DagSkeleton::new(3, [(1, 2), (2, 3)]).unwrap();
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = 1.0;
        b[(1, 2)] = 1.0;
        let bs = b.clone() * 0.5;
        SemInstance::new(
            skeleton,
            &b,
            &bs,
            vec![NoiseSpec::Constant { c: 0.5 }; 3],
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn exploration_constants_examples() {
        let (t1, _) = exploration_constants(1.0, 0.5, 10, 1, 0.05, 2.0).unwrap();
        assert_eq!(t1, 1062);
        let (_, t2) = exploration_constants(1.0, 0.5, 7, 3, 0.05, 2.0).unwrap();
        assert_eq!(t2, 12);
        // Degenerate margin floors at one round.
        let (t1, _) = exploration_constants(1.0, f64::INFINITY, 10, 1, 0.05, 2.0).unwrap();
        assert_eq!(t1, 1);
    }

    #[test]
    fn probe_round_accounting() {
        let inst = chain3();
        let mut env = SemEnvironment::new(&inst, 1);
        let mut table = MeanTable::new(3);
        for _ in 0..4 {
            probe_round(&mut env, &mut table);
        }
        for probe in 0..3 {
            assert_eq!(table.count(probe), 4);
        }
        assert_eq!(table.total_rounds(), 12);
        assert_eq!(env.rounds(), 12);
    }

    #[test]
    fn constant_noise_means_are_exact_after_one_sweep() {
        let inst = chain3_constant();
        let mut env = SemEnvironment::new(&inst, 1);
        let mut table = MeanTable::new(3);
        probe_round(&mut env, &mut table);
        for i in 1..=3 {
            assert_eq!(table.mean_observational(i), inst.exact_mean(&Arm::empty(), i));
            for j in 1..3 {
                assert_eq!(table.mean_single(i, j), inst.exact_mean(&Arm::single(j), i));
            }
        }
    }

    #[test]
    fn descendant_rule_applies_threshold() {
        // Exact means on chain 1 -> 2 (B = 1, B* = 0.5, nu = 0.5), eta = 0.25:
        // the self-shift of node 2 is 0.25 > eta/2.
        let skeleton = DagSkeleton::new(2, [(1, 2)]).unwrap();
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 1)] = 1.0;
        let mut bs = DMatrix::zeros(2, 2);
        bs[(0, 1)] = 0.5;
        let inst = SemInstance::new(
            skeleton,
            &b,
            &bs,
            vec![NoiseSpec::Constant { c: 0.5 }; 2],
            1.0,
            1.0,
        )
        .unwrap();
        let mut env = SemEnvironment::new(&inst, 0);
        let mut table = MeanTable::new(2);
        probe_round(&mut env, &mut table);
        let de_hat = estimate_descendants(&table, 0.25);
        assert_eq!(de_hat[0], Some(BTreeSet::new())); // root: no shift anywhere
        assert_eq!(de_hat[1], None); // reward node is never probed

        // Direct rule application on synthetic means.
        let mut table = MeanTable::new(2);
        table.record(0, &[0.0, 1.0]);
        table.record(1, &[0.0, 0.7]);
        let de_hat = estimate_descendants(&table, 0.4);
        assert!(de_hat[0].as_ref().unwrap().contains(&2)); // 0.3 > 0.2

        let mut table = MeanTable::new(2);
        table.record(0, &[0.0, 1.0]);
        table.record(1, &[0.0, 0.9]);
        let de_hat = estimate_descendants(&table, 0.4);
        assert!(!de_hat[0].as_ref().unwrap().contains(&2)); // 0.1 <= 0.2
    }

    #[test]
    fn ancestor_rule_set_algebra() {
        // All-empty descendant sets: everyone is everyone's candidate ancestor.
        let de_hat: DescendantSets = vec![Some(BTreeSet::new()); 3];
        let an_hat = estimate_ancestors(&de_hat);
        assert_eq!(an_hat[0], BTreeSet::from([2, 3]));
        assert_eq!(an_hat[1], BTreeSet::from([1, 3]));
        assert_eq!(an_hat[2], BTreeSet::from([1, 2]));

        // Rule application on exact-style sets.
        let de_hat: DescendantSets =
            vec![Some(BTreeSet::from([1, 2])), Some(BTreeSet::from([2])), None];
        let an_hat = estimate_ancestors(&de_hat);
        assert!(an_hat[1].contains(&1));
        assert!(!an_hat[0].contains(&2));
    }

    #[test]
    fn consistency_check_catches_mutual_containment() {
        assert!(dag_consistent(&vec![Some(BTreeSet::new()); 4]));
        let de_hat: DescendantSets = vec![
            Some(BTreeSet::from([1, 2])),
            Some(BTreeSet::from([1, 2])),
            None,
        ];
        assert!(!dag_consistent(&de_hat));
    }

    #[test]
    fn exact_decision_sets_of_a_dag_are_consistent() {
        let inst = hierarchical(&HierarchicalSpec {
            d: 2,
            l: 2,
            w_obs: 1.0,
            w_int: 0.5,
            noise: NoiseSpec::Constant { c: 0.5 },
        })
        .unwrap();
        let mut env = SemEnvironment::new(&inst, 9);
        let mut table = MeanTable::new(inst.node_count());
        probe_round(&mut env, &mut table); // constant noise: means are exact
        let de_hat = estimate_descendants(&table, inst.intervention_margin());
        assert!(dag_consistent(&de_hat));
        // Non-root probed nodes flag exactly themselves plus their true
        // descendants.
        for i in 1..inst.node_count() {
            let expected: BTreeSet<usize> = if inst.skeleton().is_root(i) {
                BTreeSet::new()
            } else {
                std::iter::once(i)
                    .chain(inst.skeleton().descendants(i))
                    .collect()
            };
            assert_eq!(de_hat[i - 1], Some(expected), "node {i}");
        }
        let an_hat = estimate_ancestors(&de_hat);
        let order = order_from_ancestors(&an_hat).unwrap();
        assert!(graph::order_is_valid(inst.skeleton(), &order));
    }

    #[test]
    fn root_children_are_ordered_after_roots() {
        // Edge 2 -> 1: the intervention on root 2 shifts nothing, so ordering
        // information flows through the root branch of the ancestor rule.
        let de_hat: DescendantSets = vec![Some(BTreeSet::from([1])), Some(BTreeSet::new()), None];
        let an_hat = estimate_ancestors(&de_hat);
        let order = order_from_ancestors(&an_hat).unwrap();
        let pos = |v: usize| order.iter().position(|&x| x == v).unwrap();
        assert!(pos(2) < pos(1));
    }

    #[test]
    fn full_run_recovers_a_chain() {
        let inst = chain3();
        let truth = inst.skeleton().clone();
        let mut successes = 0;
        for seed in 0..10 {
            let mut env = SemEnvironment::new(&inst, seed);
            let config = SlConfig {
                eta: inst.intervention_margin(),
                t1: 400,
                t2: 400,
                delta: 0.1,
                m: inst.value_bound(),
                lambda_override: None,
                lasso: LassoSettings::default(),
                max_rounds: None,
            };
            let out = run_structure_learning(&mut env, &config, Some(&truth)).unwrap();
            assert_eq!(out.rounds_used, 3 * out.sweeps);
            assert_eq!(out.observational_rounds, 400);
            assert_eq!(out.plays.len(), out.rounds_used);
            if out.estimate.order_valid_for(&truth) && out.estimate.parents_contained_in(&truth) {
                successes += 1;
            }
        }
        assert!(successes >= 8, "only {successes}/10 runs recovered the chain");
    }

    #[test]
    fn single_node_graph_yields_empty_parent_set() {
        let skeleton = DagSkeleton::new(1, []).unwrap();
        let z = DMatrix::zeros(1, 1);
        let inst = SemInstance::new(
            skeleton,
            &z,
            &z,
            vec![NoiseSpec::Uniform { lo: 0.0, hi: 1.0 }],
            1.0,
            1.0,
        )
        .unwrap();
        let mut env = SemEnvironment::new(&inst, 0);
        let config = SlConfig {
            eta: 1.0,
            t1: 25,
            t2: 10,
            delta: 0.1,
            m: 1.0,
            lambda_override: None,
            lasso: LassoSettings::default(),
            max_rounds: None,
        };
        let out = run_structure_learning(&mut env, &config, Some(inst.skeleton())).unwrap();
        assert_eq!(out.rounds_used, 25); // each sweep is one observational pull
        assert!(out.estimate.pa_hat[0].is_empty());
        assert_eq!(out.estimate.order, vec![1]);
    }

    #[test]
    fn budget_cap_is_honored() {
        let inst = chain3();
        let mut env = SemEnvironment::new(&inst, 4);
        let config = SlConfig {
            eta: 0.25,
            t1: 100,
            t2: 100,
            delta: 0.1,
            m: 3.0,
            lambda_override: None,
            lasso: LassoSettings::default(),
            max_rounds: Some(50),
        };
        let err = run_structure_learning(&mut env, &config, None).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 50, .. }));
    }
}
