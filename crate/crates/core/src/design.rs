//! Phased-elimination intervention design.
//!
//! Per node, two identity-regularized ridge regressions (observational and
//! interventional side) estimate the incoming weight column on the screened
//! parent support. Candidate means are assembled through the causal order,
//! and each candidate carries a recursively defined confidence width: a
//! node's width is the sum of its parents' widths plus an exploration bonus
//! scaled by `alpha`. Arms whose upper confidence bound falls more than a
//! stage-dependent band below the best are eliminated; once every width
//! clears the horizon threshold `m / sqrt(T)` the maximizer is locked in for
//! the remaining rounds.

use nalgebra::{DMatrix, DVector};

use crate::arm::{full_universe, Arm};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::graph::{self, DagSkeleton};
use crate::structure::SkeletonEstimate;

/// The graph knowledge the designer runs on: parent supports, a processing
/// order consistent with them, per-node causal depth, and the subset of
/// nodes whose regressors are maintained.
#[derive(Debug, Clone)]
pub struct SkeletonInfo {
    node_count: usize,
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
    depth: Vec<usize>,
    active: Vec<bool>,
    max_in_degree: usize,
}

impl SkeletonInfo {
    /// Builds from explicit parent lists; fails if they admit no topological
    /// order. `active` defaults to all nodes.
    pub fn new(parents: Vec<Vec<usize>>, active: Option<Vec<bool>>) -> Result<Self> {
        let node_count = parents.len();
        let mut parents: Vec<Vec<usize>> = parents;
        for list in parents.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let active = active.unwrap_or_else(|| vec![true; node_count]);
        if active.len() != node_count {
            return Err(Error::InvalidParameter("active mask length mismatch".into()));
        }
        let order_all = graph::topological_order(node_count, &parents)?;
        let order: Vec<usize> = order_all.into_iter().filter(|&i| active[i - 1]).collect();
        let mut depth = vec![0usize; node_count];
        for &i in &order {
            depth[i - 1] = parents[i - 1]
                .iter()
                .map(|&p| depth[p - 1] + 1)
                .max()
                .unwrap_or(0);
        }
        let max_in_degree = (1..=node_count)
            .filter(|&i| active[i - 1])
            .map(|i| parents[i - 1].len())
            .max()
            .unwrap_or(0);
        Ok(SkeletonInfo {
            node_count,
            parents,
            order,
            depth,
            active,
            max_in_degree,
        })
    }

    /// Known-skeleton mode: true parent sets.
    pub fn from_skeleton(skeleton: &DagSkeleton) -> Self {
        let parents = (1..=skeleton.node_count())
            .map(|i| skeleton.parents(i).to_vec())
            .collect();
        SkeletonInfo::new(parents, None).expect("a DAG always orders")
    }

    /// Graph-agnostic mode: learned parent sets.
    pub fn from_estimate(estimate: &SkeletonEstimate) -> Result<Self> {
        let parents = estimate
            .pa_hat
            .iter()
            .map(|set| set.iter().copied().collect())
            .collect();
        SkeletonInfo::new(parents, None)
    }

    /// Graph-dependent mode: regressors restricted to the candidate
    /// ancestors of the reward node (plus the reward node itself, whose
    /// column the mean recursion needs).
    pub fn from_estimate_restricted(estimate: &SkeletonEstimate) -> Result<Self> {
        let n = estimate.node_count();
        let mut active = vec![false; n];
        active[n - 1] = true;
        for &j in &estimate.an_hat[n - 1] {
            active[j - 1] = true;
        }
        // Drop estimated parents outside the active set; they cannot be
        // estimated without maintaining their ancestors' regressors.
        let parents: Vec<Vec<usize>> = estimate
            .pa_hat
            .iter()
            .enumerate()
            .map(|(i0, set)| {
                if active[i0] {
                    set.iter().copied().filter(|&p| active[p - 1]).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        SkeletonInfo::new(parents, Some(active))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i - 1]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn depth_of(&self, i: usize) -> usize {
        self.depth[i - 1]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i - 1]
    }

    /// Active node labels, ascending.
    pub fn active_nodes(&self) -> Vec<usize> {
        (1..=self.node_count).filter(|&i| self.active[i - 1]).collect()
    }

    /// Estimated maximum in-degree over active nodes.
    pub fn max_in_degree(&self) -> usize {
        self.max_in_degree
    }
}

/// Default exploration scale `alpha = sqrt(0.5 ln(N T / delta)) + sqrt(d)`.
pub fn alpha_default(node_count: usize, horizon: usize, delta: f64, d_hat: usize) -> f64 {
    (0.5 * (node_count as f64 * horizon as f64 / delta).ln()).sqrt() + (d_hat as f64).sqrt()
}

/// Number of refinement stages `S = ceil(log2 sqrt(T))`, at least 1.
pub fn stage_cap(horizon: usize) -> usize {
    (((horizon as f64).sqrt()).log2().ceil() as usize).max(1)
}

/// Per-node two-sided ridge state on the screened parent support.
///
/// Gram blocks start at the identity, so they stay symmetric positive
/// definite with every eigenvalue at least 1 and the coefficient solve can
/// never go singular.
#[derive(Debug, Clone)]
pub struct NodeRegressor {
    node: usize,
    parents: Vec<usize>,
    gram_obs: DMatrix<f64>,
    gram_int: DMatrix<f64>,
    cross_obs: DVector<f64>,
    cross_int: DVector<f64>,
    coef_obs: DVector<f64>,
    coef_int: DVector<f64>,
    count_obs: usize,
    count_int: usize,
}

impl NodeRegressor {
    pub fn new(node: usize, parents: Vec<usize>) -> Self {
        let p = parents.len();
        NodeRegressor {
            node,
            parents,
            gram_obs: DMatrix::identity(p, p),
            gram_int: DMatrix::identity(p, p),
            cross_obs: DVector::zeros(p),
            cross_int: DVector::zeros(p),
            coef_obs: DVector::zeros(p),
            coef_int: DVector::zeros(p),
            count_obs: 0,
            count_int: 0,
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    /// Folds one realization into the side selected by the node's arm bit
    /// and re-solves that side's coefficients (a solve, not an inverse).
    pub fn update(&mut self, intervened: bool, x: &[f64], nu_i: f64) {
        let p = self.parents.len();
        let target = x[self.node - 1] - nu_i;
        let (gram, cross, coef, count) = if intervened {
            (&mut self.gram_int, &mut self.cross_int, &mut self.coef_int, &mut self.count_int)
        } else {
            (&mut self.gram_obs, &mut self.cross_obs, &mut self.coef_obs, &mut self.count_obs)
        };
        for a in 0..p {
            let xa = x[self.parents[a] - 1];
            cross[a] += xa * target;
            for b in a..p {
                let xb = x[self.parents[b] - 1];
                gram[(a, b)] += xa * xb;
                if a != b {
                    gram[(b, a)] = gram[(a, b)];
                }
            }
        }
        *count += 1;
        if p > 0 {
            let chol = gram
                .clone()
                .cholesky()
                .expect("identity-regularized gram is positive definite");
            *coef = chol.solve(cross);
        }
    }

    pub fn coef(&self, intervened: bool) -> &DVector<f64> {
        if intervened {
            &self.coef_int
        } else {
            &self.coef_obs
        }
    }

    pub fn gram(&self, intervened: bool) -> &DMatrix<f64> {
        if intervened {
            &self.gram_int
        } else {
            &self.gram_obs
        }
    }

    pub fn count(&self, intervened: bool) -> usize {
        if intervened {
            self.count_int
        } else {
            self.count_obs
        }
    }

    /// Seeds a side's coefficients directly (diagnostic warm starts).
    pub fn seed_coef(&mut self, intervened: bool, coef: DVector<f64>) {
        assert_eq!(coef.len(), self.parents.len());
        if intervened {
            self.coef_int = coef;
        } else {
            self.coef_obs = coef;
        }
    }
}

/// Per-depth scale of parent snapshots: the running maximum of
/// `|X_{Pa(i)}|_2` over observed rounds and nodes with that causal depth,
/// initialized to the analytic bound `sqrt(d_hat) * m` until the first
/// observation. Depth 0 is identically 0 (parentless nodes).
#[derive(Debug, Clone)]
pub struct ParentScale {
    values: Vec<f64>,
    seen: Vec<bool>,
}

impl ParentScale {
    pub fn new(max_depth: usize, d_hat: usize, m: f64) -> Self {
        let mut values = vec![(d_hat as f64).sqrt() * m; max_depth + 1];
        values[0] = 0.0;
        let mut seen = vec![false; max_depth + 1];
        seen[0] = true;
        ParentScale { values, seen }
    }

    pub fn observe(&mut self, depth: usize, norm: f64) {
        if depth == 0 {
            return;
        }
        if self.seen[depth] {
            self.values[depth] = self.values[depth].max(norm);
        } else {
            self.values[depth] = norm;
            self.seen[depth] = true;
        }
    }

    pub fn at(&self, depth: usize) -> f64 {
        self.values[depth]
    }
}

/// The shrinking candidate arm set with its elimination log.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    stage: usize,
    arms: Vec<Arm>,
    history: Vec<EliminationEvent>,
}

/// One elimination: which arms fell below the band at which stage.
#[derive(Debug, Clone)]
pub struct EliminationEvent {
    pub stage: usize,
    pub removed: Vec<Arm>,
    pub threshold: f64,
}

impl CandidateSet {
    /// Starts at stage 1 with the full candidate list (canonical order).
    pub fn new(mut arms: Vec<Arm>) -> Self {
        arms.sort();
        CandidateSet {
            stage: 1,
            arms,
            history: Vec::new(),
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn history(&self) -> &[EliminationEvent] {
        &self.history
    }

    /// Keeps arms whose UCB reaches `max UCB - m * 2^(1-s)` (inclusive) and
    /// advances the stage. `ucbs` is aligned with [`CandidateSet::arms`].
    pub fn eliminate(&mut self, ucbs: &[f64], m: f64) -> Vec<usize> {
        assert_eq!(ucbs.len(), self.arms.len());
        let best = ucbs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = best - m * 2f64.powi(1 - self.stage as i32);
        let mut removed = Vec::new();
        let mut removed_idx = Vec::new();
        let mut kept = Vec::with_capacity(self.arms.len());
        for (idx, (arm, &ucb)) in self.arms.iter().zip(ucbs).enumerate() {
            if ucb >= threshold {
                kept.push(arm.clone());
            } else {
                removed.push(arm.clone());
                removed_idx.push(idx);
            }
        }
        assert!(!kept.is_empty(), "the maximizing arm always survives");
        self.history.push(EliminationEvent {
            stage: self.stage,
            removed,
            threshold,
        });
        self.arms = kept;
        self.stage += 1;
        removed_idx
    }
}

/// How a round's arm was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// An under-explored arm whose width still exceeds the stage threshold.
    Explore,
    /// Stopping rule met: the UCB maximizer, locked for the remaining rounds.
    Exploit,
    /// One or more stage refinements happened before choosing.
    Eliminate,
}

impl SelectMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectMode::Explore => "explore",
            SelectMode::Exploit => "exploit",
            SelectMode::Eliminate => "eliminate",
        }
    }
}

/// Outcome of one selection step.
#[derive(Debug, Clone)]
pub struct Selection {
    /// Index into the (post-elimination) candidate list.
    pub arm_index: usize,
    pub mode: SelectMode,
    pub eliminations: usize,
}

/// Applies the round's decision rule, mutating the candidate set and the
/// aligned `widths`/`ucbs` vectors in lockstep when stages advance:
///
/// 1. all widths at or below `m / sqrt(horizon)`: exploit the UCB maximizer;
/// 2. otherwise, while every width is at or below `m * 2^(-s)`: eliminate and
///    advance the stage (stopping at the stage cap, where the survivors are
///    necessarily below the horizon threshold and exploitation takes over);
/// 3. otherwise explore the first arm in canonical order whose width exceeds
///    `m * 2^(-s)`.
pub fn select_arm(
    candidates: &mut CandidateSet,
    widths: &mut Vec<f64>,
    ucbs: &mut Vec<f64>,
    m: f64,
    horizon: usize,
) -> Selection {
    assert!(!candidates.is_empty());
    let stop_threshold = m / (horizon as f64).sqrt();
    let argmax = |ucbs: &[f64]| {
        let mut best = 0;
        for (i, &u) in ucbs.iter().enumerate() {
            if u > ucbs[best] {
                best = i;
            }
        }
        best
    };

    if widths.iter().all(|&w| w <= stop_threshold) {
        return Selection {
            arm_index: argmax(ucbs),
            mode: SelectMode::Exploit,
            eliminations: 0,
        };
    }

    let cap = stage_cap(horizon);
    let mut eliminations = 0;
    loop {
        let stage_threshold = m * 2f64.powi(-(candidates.stage() as i32));
        if widths.iter().any(|&w| w > stage_threshold) {
            let arm_index = widths
                .iter()
                .position(|&w| w > stage_threshold)
                .expect("checked above");
            let mode = if eliminations > 0 {
                SelectMode::Eliminate
            } else {
                SelectMode::Explore
            };
            return Selection {
                arm_index,
                mode,
                eliminations,
            };
        }
        if candidates.stage() >= cap {
            // All surviving widths sit at or below m * 2^(-S) <= m / sqrt(T).
            return Selection {
                arm_index: argmax(ucbs),
                mode: SelectMode::Exploit,
                eliminations,
            };
        }
        let removed = candidates.eliminate(ucbs, m);
        for &idx in removed.iter().rev() {
            widths.remove(idx);
            ucbs.remove(idx);
        }
        eliminations += 1;
    }
}

/// Inputs of an intervention-design run. `alpha` and `m` arrive resolved.
#[derive(Debug, Clone)]
pub struct DesignConfig {
    pub horizon: usize,
    pub alpha: f64,
    /// Bound on `|X_i|`; sets the stopping and elimination thresholds.
    pub m: f64,
    /// Candidate arms; defaults to the full (guarded) universe.
    pub arm_universe: Option<Vec<Arm>>,
    /// When set, record mean/width snapshots every this many rounds.
    pub checkpoint_every: Option<usize>,
    /// Inflate the eigenvalue bonus term by sqrt(2) (the constant the
    /// coverage analysis carries).
    pub proof_faithful_width: bool,
}

/// A recorded `(round, arm)` mean/width snapshot for coverage checks.
#[derive(Debug, Clone)]
pub struct CoverageSample {
    pub round: usize,
    pub arm: Arm,
    pub mu_hat: f64,
    pub width: f64,
}

/// One played round.
#[derive(Debug, Clone)]
pub struct DesignRow {
    pub arm: Arm,
    pub reward: f64,
    pub stage: usize,
    pub mode: SelectMode,
    pub candidate_count: usize,
}

/// Full outcome of a design run.
#[derive(Debug)]
pub struct DesignOutcome {
    pub rows: Vec<DesignRow>,
    pub candidates: CandidateSet,
    pub locked_arm: Option<Arm>,
    pub coverage: Vec<CoverageSample>,
    /// Smallest effective gram eigenvalue seen across the run (>= 1 always).
    pub min_lambda_eff: f64,
    pub regressors: Vec<NodeRegressor>,
}

// Per-(node, side) factorization cache for one round.
struct SideCache {
    inv: DMatrix<f64>,
    lambda_eff_inv_sqrt: f64,
    lambda_eff: f64,
}

fn side_cache(gram: &DMatrix<f64>) -> SideCache {
    let p = gram.nrows();
    if p == 0 {
        return SideCache {
            inv: DMatrix::zeros(0, 0),
            lambda_eff_inv_sqrt: 1.0,
            lambda_eff: 1.0,
        };
    }
    let chol = gram
        .clone()
        .cholesky()
        .expect("identity-regularized gram is positive definite");
    let inv = chol.inverse();
    let eig = gram.clone().symmetric_eigenvalues();
    let lambda_eff = eig.iter().copied().fold(f64::INFINITY, f64::min);
    SideCache {
        inv,
        lambda_eff_inv_sqrt: lambda_eff.powf(-0.5),
        lambda_eff,
    }
}

/// Shared mean/width evaluator used by the run loop and by
/// [`estimate_arm_mean`] / [`width`].
struct Evaluator<'a> {
    info: &'a SkeletonInfo,
    nu: &'a [f64],
    caches: Vec<[SideCache; 2]>, // indexed by node-1; [obs, int]
    alpha: f64,
    eig_factor: f64,
    scale: &'a ParentScale,
}

impl<'a> Evaluator<'a> {
    fn new(
        info: &'a SkeletonInfo,
        regressors: &[NodeRegressor],
        nu: &'a [f64],
        alpha: f64,
        proof_faithful: bool,
        scale: &'a ParentScale,
    ) -> Self {
        let mut caches: Vec<[SideCache; 2]> = Vec::with_capacity(info.node_count());
        for i in 1..=info.node_count() {
            if info.is_active(i) {
                let reg = &regressors[i - 1];
                caches.push([side_cache(reg.gram(false)), side_cache(reg.gram(true))]);
            } else {
                caches.push([side_cache(&DMatrix::zeros(0, 0)), side_cache(&DMatrix::zeros(0, 0))]);
            }
        }
        Evaluator {
            info,
            nu,
            caches,
            alpha,
            eig_factor: if proof_faithful { std::f64::consts::SQRT_2 } else { 1.0 },
            scale,
        }
    }

    fn min_lambda_eff(&self) -> f64 {
        self.caches
            .iter()
            .flat_map(|pair| pair.iter())
            .map(|c| c.lambda_eff)
            .fold(f64::INFINITY, f64::min)
    }

    /// Fills `mu` and `w` (ambient length-N scratch vectors) for `arm`.
    fn evaluate(&self, regressors: &[NodeRegressor], arm: &Arm, mu: &mut [f64], w: &mut [f64]) {
        for &i in self.info.order() {
            let intervened = arm.contains(i);
            let reg = &regressors[i - 1];
            let coef = reg.coef(intervened);
            let parents = reg.parents();
            let mut mean = self.nu[i - 1];
            for (k, &p) in parents.iter().enumerate() {
                mean += coef[k] * mu[p - 1];
            }
            mu[i - 1] = mean;

            if parents.is_empty() {
                w[i - 1] = 0.0;
                continue;
            }
            let cache = &self.caches[i - 1][intervened as usize];
            // |mu_pa|_{V^-1} over the support block.
            let mut quad = 0.0;
            for (a, &pa) in parents.iter().enumerate() {
                let va = mu[pa - 1];
                for (b, &pb) in parents.iter().enumerate() {
                    quad += va * cache.inv[(a, b)] * mu[pb - 1];
                }
            }
            let norm = quad.max(0.0).sqrt();
            let bonus = self.alpha
                * (norm
                    + self.scale.at(self.info.depth_of(i))
                        * cache.lambda_eff_inv_sqrt
                        * self.eig_factor);
            let mut width = bonus;
            for &p in parents {
                width += w[p - 1];
            }
            w[i - 1] = width;
        }
    }
}

/// Assembles the per-node mean estimates for `arm` from the current
/// regressor coefficients, walking the causal order.
pub fn estimate_arm_mean(
    regressors: &[NodeRegressor],
    info: &SkeletonInfo,
    arm: &Arm,
    nu: &[f64],
) -> Vec<f64> {
    let mut mu = vec![0.0; info.node_count()];
    for &i in info.order() {
        let reg = &regressors[i - 1];
        let coef = reg.coef(arm.contains(i));
        let mut mean = nu[i - 1];
        for (k, &p) in reg.parents().iter().enumerate() {
            mean += coef[k] * mu[p - 1];
        }
        mu[i - 1] = mean;
    }
    mu
}

/// Computes the per-node recursive widths for `arm` at the current state.
pub fn width(
    regressors: &[NodeRegressor],
    info: &SkeletonInfo,
    scale: &ParentScale,
    arm: &Arm,
    nu: &[f64],
    alpha: f64,
) -> Vec<f64> {
    width_opts(regressors, info, scale, arm, nu, alpha, false)
}

/// [`width`] with the optional sqrt(2) inflation of the eigenvalue term.
pub fn width_opts(
    regressors: &[NodeRegressor],
    info: &SkeletonInfo,
    scale: &ParentScale,
    arm: &Arm,
    nu: &[f64],
    alpha: f64,
    proof_faithful: bool,
) -> Vec<f64> {
    let evaluator = Evaluator::new(info, regressors, nu, alpha, proof_faithful, scale);
    let mut mu = vec![0.0; info.node_count()];
    let mut w = vec![0.0; info.node_count()];
    evaluator.evaluate(regressors, arm, &mut mu, &mut w);
    w
}

/// Runs the design loop for `config.horizon` rounds against `env`.
pub fn run_intervention_design(
    env: &mut dyn Environment,
    info: &SkeletonInfo,
    nu: &[f64],
    config: &DesignConfig,
) -> Result<DesignOutcome> {
    let n = env.node_count();
    if info.node_count() != n || nu.len() != n {
        return Err(Error::InvalidParameter(
            "skeleton info and nu must match the environment's node count".into(),
        ));
    }
    if !(config.m > 0.0) || !config.alpha.is_finite() || config.alpha < 0.0 {
        return Err(Error::InvalidParameter(
            "design needs m > 0 and a finite nonnegative alpha".into(),
        ));
    }
    let universe = match &config.arm_universe {
        Some(arms) => {
            if arms.is_empty() {
                return Err(Error::InvalidParameter("empty arm universe".into()));
            }
            arms.clone()
        }
        None => full_universe(n)?,
    };
    let mut candidates = CandidateSet::new(universe);

    let mut regressors: Vec<NodeRegressor> = (1..=n)
        .map(|i| {
            if info.is_active(i) {
                NodeRegressor::new(i, info.parents(i).to_vec())
            } else {
                NodeRegressor::new(i, Vec::new())
            }
        })
        .collect();
    let mut scale = ParentScale::new(info.max_depth(), info.max_in_degree(), config.m);

    let mut rows = Vec::with_capacity(config.horizon);
    let mut coverage = Vec::new();
    let mut locked: Option<Arm> = None;
    let mut min_lambda_eff = f64::INFINITY;
    let mut mu_scratch = vec![0.0; n];
    let mut w_scratch = vec![0.0; n];

    for t in 1..=config.horizon {
        let (arm, mode) = if let Some(arm) = locked.clone() {
            (arm, SelectMode::Exploit)
        } else {
            let evaluator = Evaluator::new(
                info,
                &regressors,
                nu,
                config.alpha,
                config.proof_faithful_width,
                &scale,
            );
            min_lambda_eff = min_lambda_eff.min(evaluator.min_lambda_eff());

            let count = candidates.len();
            let mut widths = Vec::with_capacity(count);
            let mut ucbs = Vec::with_capacity(count);
            let mut means = Vec::with_capacity(count);
            for arm in candidates.arms() {
                evaluator.evaluate(&regressors, arm, &mut mu_scratch, &mut w_scratch);
                let mu_n = mu_scratch[n - 1];
                let w_n = w_scratch[n - 1];
                means.push(mu_n);
                widths.push(w_n);
                ucbs.push(mu_n + w_n);
            }

            if let Some(every) = config.checkpoint_every {
                if t % every == 0 {
                    let step = (candidates.len() / 8).max(1);
                    for idx in (0..candidates.len()).step_by(step) {
                        coverage.push(CoverageSample {
                            round: t,
                            arm: candidates.arms()[idx].clone(),
                            mu_hat: means[idx],
                            width: widths[idx],
                        });
                    }
                }
            }

            let selection = select_arm(&mut candidates, &mut widths, &mut ucbs, config.m, config.horizon);
            let arm = candidates.arms()[selection.arm_index].clone();
            if selection.mode == SelectMode::Exploit {
                locked = Some(arm.clone());
            }
            (arm, selection.mode)
        };

        let x = env.play(&arm);
        for i in 1..=n {
            if !info.is_active(i) {
                continue;
            }
            let reg = &mut regressors[i - 1];
            if !reg.parents().is_empty() {
                let norm = reg
                    .parents()
                    .iter()
                    .map(|&p| x[p - 1] * x[p - 1])
                    .sum::<f64>()
                    .sqrt();
                scale.observe(info.depth_of(i), norm);
            }
            reg.update(arm.contains(i), &x, nu[i - 1]);
        }

        rows.push(DesignRow {
            arm,
            reward: x[n - 1],
            stage: candidates.stage(),
            mode,
            candidate_count: candidates.len(),
        });
    }

    Ok(DesignOutcome {
        rows,
        candidates,
        locked_arm: locked,
        coverage,
        min_lambda_eff: if min_lambda_eff.is_finite() {
            min_lambda_eff
        } else {
            1.0
        },
        regressors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SemEnvironment;
    use crate::gallery::{hierarchical, HierarchicalSpec};
    use crate::noise::NoiseSpec;

    fn small_hierarchical() -> crate::sem::SemInstance {
        hierarchical(&HierarchicalSpec {
            d: 2,
            l: 2,
            w_obs: 1.0,
            w_int: 0.5,
            noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
        })
        .unwrap()
    }

    #[test]
    fn regressor_closed_form_two_rows() {
        // Single parent, two observational rows x_pa = 1, x_child = 2, nu = 0:
        // V = 3, cross = 4, coef = 4/3.
        let mut reg = NodeRegressor::new(2, vec![1]);
        reg.update(false, &[1.0, 2.0], 0.0);
        reg.update(false, &[1.0, 2.0], 0.0);
        assert!((reg.coef(false)[0] - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(reg.gram(false)[(0, 0)], 3.0);
        // The interventional side is untouched.
        assert_eq!(reg.coef(true)[0], 0.0);
        assert_eq!(reg.count(true), 0);
        assert_eq!(reg.count(false), 2);
    }

    #[test]
    fn fresh_regressor_coefficients_are_zero() {
        let reg = NodeRegressor::new(3, vec![1, 2]);
        assert_eq!(reg.coef(false).as_slice(), &[0.0, 0.0]);
        assert_eq!(reg.gram(true), &DMatrix::identity(2, 2));
        // With all coefficients zero the assembled means collapse to nu.
        let info = SkeletonInfo::new(vec![vec![], vec![], vec![1, 2]], None).unwrap();
        let regressors = vec![
            NodeRegressor::new(1, vec![]),
            NodeRegressor::new(2, vec![]),
            NodeRegressor::new(3, vec![1, 2]),
        ];
        let nu = [0.3, -0.1, 0.7];
        let mu = estimate_arm_mean(&regressors, &info, &Arm::empty(), &nu);
        assert_eq!(mu, nu.to_vec());
    }

    #[test]
    fn proof_faithful_flag_inflates_the_eigenvalue_term() {
        let inst = small_hierarchical();
        let n = inst.node_count();
        let info = SkeletonInfo::from_skeleton(inst.skeleton());
        let mut regressors: Vec<NodeRegressor> = (1..=n)
            .map(|i| NodeRegressor::new(i, info.parents(i).to_vec()))
            .collect();
        let mut scale = ParentScale::new(info.max_depth(), info.max_in_degree(), inst.value_bound());
        let mut env = SemEnvironment::new(&inst, 21);
        for _ in 0..30 {
            let x = env.play(&Arm::empty());
            for i in 1..=n {
                let norm = info
                    .parents(i)
                    .iter()
                    .map(|&p| x[p - 1] * x[p - 1])
                    .sum::<f64>()
                    .sqrt();
                scale.observe(info.depth_of(i), norm);
                regressors[i - 1].update(false, &x, inst.nu()[i - 1]);
            }
        }
        let plain = width(&regressors, &info, &scale, &Arm::empty(), inst.nu(), 1.0);
        let faithful =
            width_opts(&regressors, &info, &scale, &Arm::empty(), inst.nu(), 1.0, true);
        for i in 1..=n {
            if info.parents(i).is_empty() {
                assert_eq!(faithful[i - 1], 0.0);
            } else {
                assert!(faithful[i - 1] > plain[i - 1]);
            }
        }
    }

    #[test]
    fn width_identity_gram_hand_value() {
        // One parent, fresh regressor (V = I), parent mean 1, scale 1:
        // w = alpha * (1 + 1).
        let info = SkeletonInfo::new(vec![vec![], vec![1]], None).unwrap();
        let regressors = vec![NodeRegressor::new(1, vec![]), NodeRegressor::new(2, vec![1])];
        let mut scale = ParentScale::new(1, 1, 1.0);
        scale.observe(1, 1.0);
        let nu = [1.0, 0.0];
        let alpha = 0.7;
        let w = width(&regressors, &info, &scale, &Arm::empty(), &nu, alpha);
        assert_eq!(w[0], 0.0); // parentless node
        assert!((w[1] - 2.0 * alpha).abs() < 1e-12);

        // Widths are linear in alpha.
        let w2 = width(&regressors, &info, &scale, &Arm::empty(), &nu, 2.0 * alpha);
        for (a, b) in w.iter().zip(&w2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn width_composes_through_causal_depth() {
        // Chain 1 -> 2 -> 3 with fresh regressors: the width of node 3 is the
        // width of node 2 plus its own bonus, all grams still identity.
        let info = SkeletonInfo::new(vec![vec![], vec![1], vec![2]], None).unwrap();
        let regressors = vec![
            NodeRegressor::new(1, vec![]),
            NodeRegressor::new(2, vec![1]),
            NodeRegressor::new(3, vec![2]),
        ];
        let mut scale = ParentScale::new(2, 1, 5.0);
        scale.observe(1, 0.9);
        scale.observe(2, 1.7);
        let nu = [0.5, 0.25, 0.0];
        let alpha = 0.4;
        let w = width(&regressors, &info, &scale, &Arm::empty(), &nu, alpha);
        // Fresh coefficients are zero, so the recursive means are just nu.
        let w2 = alpha * (0.5 + 0.9);
        let w3 = w2 + alpha * (0.25 + 1.7);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - w2).abs() < 1e-12);
        assert!((w[2] - w3).abs() < 1e-12);
    }

    #[test]
    fn alpha_default_example() {
        let alpha = alpha_default(7, 10_000, 0.05, 3);
        assert!((alpha - 4.394).abs() < 2e-3);
        // Huge delta wipes the log term.
        let limit = alpha_default(1, 1, 1.0, 4);
        assert!((limit - 2.0).abs() < 1e-12);
    }

    #[test]
    fn elimination_rule_inclusive_threshold() {
        let arms = vec![Arm::empty(), Arm::single(1), Arm::single(2)];
        let mut c = CandidateSet::new(arms);
        c.stage = 3;
        c.eliminate(&[1.0, 0.9, 0.5], 1.0);
        // Threshold 1.0 - 2^(1-3) = 0.75; 0.9 stays, 0.5 leaves.
        assert_eq!(c.len(), 2);
        assert_eq!(c.stage(), 4);
        assert_eq!(c.history()[0].removed, vec![Arm::single(2)]);
        assert!((c.history()[0].threshold - 0.75).abs() < 1e-12);

        // Exactly at the threshold is retained.
        let mut c = CandidateSet::new(vec![Arm::empty(), Arm::single(1)]);
        c.stage = 3;
        c.eliminate(&[1.0, 0.75], 1.0);
        assert_eq!(c.len(), 2);

        // All equal: nothing is eliminated.
        let mut c = CandidateSet::new(vec![Arm::empty(), Arm::single(1)]);
        c.eliminate(&[0.3, 0.3], 1.0);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn select_arm_modes() {
        // T = 100, m = 1, all widths 0.05 <= 0.1: exploit.
        let mut c = CandidateSet::new(vec![Arm::empty(), Arm::single(1)]);
        let mut widths = vec![0.05, 0.05];
        let mut ucbs = vec![0.4, 0.6];
        let sel = select_arm(&mut c, &mut widths, &mut ucbs, 1.0, 100);
        assert_eq!(sel.mode, SelectMode::Exploit);
        assert_eq!(c.arms()[sel.arm_index], Arm::single(1));

        // s = 1, some width 0.6 > 0.5: explore that arm.
        let mut c = CandidateSet::new(vec![Arm::empty(), Arm::single(1)]);
        let mut widths = vec![0.2, 0.6];
        let mut ucbs = vec![0.4, 0.6];
        let sel = select_arm(&mut c, &mut widths, &mut ucbs, 1.0, 100);
        assert_eq!(sel.mode, SelectMode::Explore);
        assert_eq!(c.arms()[sel.arm_index], Arm::single(1));
        assert_eq!(c.stage(), 1);

        // s = 1, widths all 0.4 <= 0.5; after eliminating into stage 2 the
        // width 0.4 > 0.25 is explored in the same transition.
        let mut c = CandidateSet::new(vec![Arm::empty(), Arm::single(1)]);
        let mut widths = vec![0.4, 0.4];
        let mut ucbs = vec![3.0, 0.4];
        let sel = select_arm(&mut c, &mut widths, &mut ucbs, 1.0, 100);
        assert_eq!(sel.mode, SelectMode::Eliminate);
        assert_eq!(sel.eliminations, 1);
        assert_eq!(c.stage(), 2);
        assert_eq!(c.len(), 1); // the losing arm fell out
        assert_eq!(c.arms()[sel.arm_index], Arm::empty());
    }

    #[test]
    fn single_arm_universe_gives_zero_regret() {
        let inst = small_hierarchical();
        let mut env = SemEnvironment::new(&inst, 5);
        let info = SkeletonInfo::from_skeleton(inst.skeleton());
        let config = DesignConfig {
            horizon: 50,
            alpha: 0.1,
            m: inst.value_bound(),
            arm_universe: Some(vec![Arm::empty()]),
            checkpoint_every: None,
            proof_faithful_width: false,
        };
        let out = run_intervention_design(&mut env, &info, inst.nu(), &config).unwrap();
        assert_eq!(out.rows.len(), 50);
        let (best, _) = inst.best_arm_exhaustive().unwrap();
        assert_eq!(best, Arm::empty());
        for row in &out.rows {
            assert_eq!(row.arm, Arm::empty());
        }
    }

    #[test]
    fn oracle_warm_start_with_zero_alpha_exploits_immediately() {
        let inst = small_hierarchical();
        let n = inst.node_count();
        let info = SkeletonInfo::from_skeleton(inst.skeleton());
        let mut regressors: Vec<NodeRegressor> = (1..=n)
            .map(|i| NodeRegressor::new(i, info.parents(i).to_vec()))
            .collect();
        for i in 1..=n {
            let parents = info.parents(i).to_vec();
            let obs = DVector::from_iterator(
                parents.len(),
                parents.iter().map(|&p| inst.weight_obs(p, i)),
            );
            let int = DVector::from_iterator(
                parents.len(),
                parents.iter().map(|&p| inst.weight_int(p, i)),
            );
            regressors[i - 1].seed_coef(false, obs);
            regressors[i - 1].seed_coef(true, int);
        }
        // With truth-seeded coefficients, the assembled means equal the exact
        // means on every arm.
        for arm in crate::arm::full_universe(n).unwrap() {
            let mu = estimate_arm_mean(&regressors, &info, &arm, inst.nu());
            let exact = inst.exact_means_all(&arm);
            for i in 0..n {
                assert!((mu[i] - exact[i]).abs() < 1e-12, "arm {arm} node {}", i + 1);
            }
        }
        // And with alpha = 0 every width is 0, so the first selection locks
        // the true best arm.
        let scale = ParentScale::new(info.max_depth(), info.max_in_degree(), inst.value_bound());
        let w = width(&regressors, &info, &scale, &Arm::empty(), inst.nu(), 0.0);
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_is_unaffected_by_arms_outside_the_reward_ancestry() {
        // 1 -> 3 with an isolated node 2: intervening on 2 cannot move node 3.
        let skeleton = crate::graph::DagSkeleton::new(3, [(1, 3)]).unwrap();
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 2)] = 0.8;
        let mut bs = DMatrix::zeros(3, 3);
        bs[(0, 2)] = 0.4;
        let inst = crate::sem::SemInstance::new(
            skeleton,
            &b,
            &bs,
            vec![NoiseSpec::Uniform { lo: 0.0, hi: 1.0 }; 3],
            1.0,
            1.0,
        )
        .unwrap();
        let info = SkeletonInfo::from_skeleton(inst.skeleton());
        let n = inst.node_count();
        let mut regressors: Vec<NodeRegressor> = (1..=n)
            .map(|i| NodeRegressor::new(i, info.parents(i).to_vec()))
            .collect();
        let mut env = SemEnvironment::new(&inst, 3);
        for t in 0..10 {
            let arm = if t % 2 == 0 { Arm::empty() } else { Arm::full(n) };
            let x = env.play(&arm);
            for i in 1..=n {
                regressors[i - 1].update(arm.contains(i), &x, inst.nu()[i - 1]);
            }
        }
        let reward = inst.reward_node();
        let a = estimate_arm_mean(&regressors, &info, &Arm::empty(), inst.nu());
        let b = estimate_arm_mean(&regressors, &info, &Arm::single(2), inst.nu());
        assert_eq!(a[reward - 1], b[reward - 1]);
    }

    #[test]
    fn stage_never_exceeds_cap_and_candidates_nest() {
        let inst = small_hierarchical();
        let mut env = SemEnvironment::new(&inst, 11);
        let info = SkeletonInfo::from_skeleton(inst.skeleton());
        let horizon = 400;
        let config = DesignConfig {
            horizon,
            alpha: 0.1,
            m: inst.value_bound(),
            arm_universe: None,
            checkpoint_every: None,
            proof_faithful_width: false,
        };
        let out = run_intervention_design(&mut env, &info, inst.nu(), &config).unwrap();
        let cap = stage_cap(horizon);
        assert!(out.candidates.stage() <= cap);
        for row in &out.rows {
            assert!(row.stage <= cap);
        }
        // History sizes shrink monotonically.
        let mut size = 32;
        for event in out.candidates.history() {
            assert!(event.removed.len() <= size);
            size -= event.removed.len();
        }
        assert_eq!(size, out.candidates.len());
        assert!(out.min_lambda_eff >= 1.0);
    }
}
