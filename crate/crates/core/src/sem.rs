//! Ground-truth linear SEM environments under soft interventions.
//!
//! An instance couples a DAG with observational and interventional weight
//! matrices `B` and `B*`. Playing an arm `a` swaps in the interventional
//! column for every intervened node, and every variable is a weighted sum of
//! its parents plus bounded noise:
//!
//! `X_i = sum_{j in Pa(i)} [B_a]_{j,i} X_j + eps_i`.
//!
//! Post-intervention means are exact via path compounding: entry `j` of
//! `f_i(B_a)` accumulates the weight products over all directed paths from
//! `j` to `i`, and `mu_{i,a} = <f_i(B_a), nu>`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arm::{full_universe, Arm};
use crate::error::{Error, Result};
use crate::graph::DagSkeleton;
use crate::noise::NoiseSpec;

/// A fully specified linear-SEM causal bandit environment.
#[derive(Debug, Clone, PartialEq)]
pub struct SemInstance {
    skeleton: DagSkeleton,
    // Per-child sparse columns: cols_*[i-1] lists (parent, weight), sorted by parent.
    cols_obs: Vec<Vec<(usize, f64)>>,
    cols_int: Vec<Vec<(usize, f64)>>,
    noise: Vec<NoiseSpec>,
    nu: Vec<f64>,
    m_b: f64,
    m_eps: f64,
}

impl SemInstance {
    /// Validates and builds an instance from dense weight matrices.
    ///
    /// Checks: weights supported on the edge set and bounded by `m_b`; noise
    /// supports bounded by `m_eps`; and every single-node intervention on a
    /// non-root shifts the mean of each of its (inclusive) descendants, i.e.
    /// the intervention margin is strictly positive.
    pub fn new(
        skeleton: DagSkeleton,
        b_obs: &DMatrix<f64>,
        b_int: &DMatrix<f64>,
        noise: Vec<NoiseSpec>,
        m_b: f64,
        m_eps: f64,
    ) -> Result<Self> {
        let n = skeleton.node_count();
        for (name, m) in [("B", b_obs), ("B*", b_int)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidInstance(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !(m_b.is_finite() && m_b >= 0.0) || !(m_eps.is_finite() && m_eps >= 0.0) {
            return Err(Error::InvalidInstance(
                "m_b and m_eps must be finite and nonnegative".into(),
            ));
        }
        if noise.len() != n {
            return Err(Error::InvalidInstance(format!(
                "expected {n} noise specs, got {}",
                noise.len()
            )));
        }
        for (idx, spec) in noise.iter().enumerate() {
            spec.validate()?;
            if spec.support_bound() > m_eps + 1e-12 {
                return Err(Error::InvalidInstance(format!(
                    "noise of node {} has support bound {} exceeding m_eps = {m_eps}",
                    idx + 1,
                    spec.support_bound()
                )));
            }
        }

        let mut cols_obs = vec![Vec::new(); n];
        let mut cols_int = vec![Vec::new(); n];
        for i in 1..=n {
            for j in 1..=n {
                let (wo, wi) = (b_obs[(j - 1, i - 1)], b_int[(j - 1, i - 1)]);
                if !skeleton.has_edge(j, i) {
                    if wo != 0.0 || wi != 0.0 {
                        return Err(Error::InvalidInstance(format!(
                            "weight on ({j}, {i}) but no such edge"
                        )));
                    }
                    continue;
                }
                if wo.abs() > m_b + 1e-12 || wi.abs() > m_b + 1e-12 {
                    return Err(Error::InvalidInstance(format!(
                        "weight on ({j}, {i}) exceeds m_b = {m_b}: obs {wo}, int {wi}"
                    )));
                }
                cols_obs[i - 1].push((j, wo));
                cols_int[i - 1].push((j, wi));
            }
        }

        let nu = noise.iter().map(NoiseSpec::mean).collect();
        let instance = SemInstance {
            skeleton,
            cols_obs,
            cols_int,
            noise,
            nu,
            m_b,
            m_eps,
        };
        let margin = instance.intervention_margin();
        if margin <= 0.0 {
            return Err(Error::InvalidInstance(format!(
                "intervention margin must be strictly positive, got {margin}"
            )));
        }
        Ok(instance)
    }

    pub fn skeleton(&self) -> &DagSkeleton {
        &self.skeleton
    }

    pub fn node_count(&self) -> usize {
        self.skeleton.node_count()
    }

    pub fn reward_node(&self) -> usize {
        self.skeleton.reward_node()
    }

    pub fn noise(&self, i: usize) -> &NoiseSpec {
        &self.noise[i - 1]
    }

    /// Known noise-mean vector, index `i-1` for node `i`.
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn m_b(&self) -> f64 {
        self.m_b
    }

    pub fn m_eps(&self) -> f64 {
        self.m_eps
    }

    pub fn weight_obs(&self, j: usize, i: usize) -> f64 {
        lookup(&self.cols_obs[i - 1], j)
    }

    pub fn weight_int(&self, j: usize, i: usize) -> f64 {
        lookup(&self.cols_int[i - 1], j)
    }

    /// Incoming weight column of node `i` under membership `intervened`.
    pub fn column(&self, i: usize, intervened: bool) -> &[(usize, f64)] {
        if intervened {
            &self.cols_int[i - 1]
        } else {
            &self.cols_obs[i - 1]
        }
    }

    pub fn dense_obs(&self) -> DMatrix<f64> {
        self.dense_from(&self.cols_obs)
    }

    pub fn dense_int(&self) -> DMatrix<f64> {
        self.dense_from(&self.cols_int)
    }

    fn dense_from(&self, cols: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
        let n = self.node_count();
        let mut m = DMatrix::zeros(n, n);
        for (i0, col) in cols.iter().enumerate() {
            for &(j, w) in col {
                m[(j - 1, i0)] = w;
            }
        }
        m
    }

    /// Post-intervention weight matrix: column `i` comes from `B*` when
    /// `i` is intervened and from `B` otherwise.
    pub fn arm_matrix(&self, arm: &Arm) -> DMatrix<f64> {
        let n = self.node_count();
        let mut m = DMatrix::zeros(n, n);
        for i in 1..=n {
            for &(j, w) in self.column(i, arm.contains(i)) {
                m[(j - 1, i - 1)] = w;
            }
        }
        m
    }

    /// Draws one realization under `arm` from an explicit RNG stream.
    ///
    /// Noise is drawn in node-label order first, then variables are filled in
    /// topological order; the noise stream therefore does not depend on the
    /// arm, matching the shared-noise coupling used for exact comparisons.
    pub fn sample_with(&self, arm: &Arm, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x: Vec<f64> = self.noise.iter().map(|spec| spec.sample(rng)).collect();
        for &i in self.skeleton.order() {
            let mut acc = x[i - 1];
            for &(j, w) in self.column(i, arm.contains(i)) {
                acc += w * x[j - 1];
            }
            x[i - 1] = acc;
        }
        x
    }

    /// Seeded convenience wrapper around [`SemInstance::sample_with`].
    pub fn sample(&self, arm: &Arm, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(arm, &mut rng)
    }

    /// Path-compounding vector `f_i(B_a)` by the forward recursion
    /// `f_i = e_i + sum_{j in Pa(i)} [B_a]_{j,i} f_j`.
    ///
    /// Entry `j-1` sums the weight products over all directed paths from `j`
    /// to `i`, the empty path contributing 1 at `j = i`.
    pub fn path_sum(&self, arm: &Arm, node: usize) -> Vec<f64> {
        let n = self.node_count();
        let mut f: Vec<Vec<f64>> = vec![Vec::new(); n];
        for &i in self.skeleton.order() {
            let mut fi = vec![0.0; n];
            fi[i - 1] = 1.0;
            for &(j, w) in self.column(i, arm.contains(i)) {
                for (slot, fj) in fi.iter_mut().zip(&f[j - 1]) {
                    *slot += w * fj;
                }
            }
            f[i - 1] = fi;
            if i == node {
                break;
            }
        }
        std::mem::take(&mut f[node - 1])
    }

    /// Exact post-intervention mean of node `i`: `<f_i(B_a), nu>`.
    pub fn exact_mean(&self, arm: &Arm, node: usize) -> f64 {
        self.path_sum(arm, node)
            .iter()
            .zip(&self.nu)
            .map(|(f, nu)| f * nu)
            .sum()
    }

    /// Exact means of all nodes under `arm`, via the equivalent mean
    /// recursion `mu_i = nu_i + sum_{j in Pa(i)} [B_a]_{j,i} mu_j`.
    pub fn exact_means_all(&self, arm: &Arm) -> Vec<f64> {
        let n = self.node_count();
        let mut mu = vec![0.0; n];
        for &i in self.skeleton.order() {
            let mut acc = self.nu[i - 1];
            for &(j, w) in self.column(i, arm.contains(i)) {
                acc += w * mu[j - 1];
            }
            mu[i - 1] = acc;
        }
        mu
    }

    /// The candidate maximizing the reward node's exact mean; ties break by
    /// canonical arm order (fewest intervened nodes, then lexicographic).
    pub fn best_arm_brute_force(&self, candidates: &[Arm]) -> (Arm, f64) {
        assert!(!candidates.is_empty(), "candidate set must be non-empty");
        let mut sorted: Vec<&Arm> = candidates.iter().collect();
        sorted.sort();
        let reward = self.reward_node();
        let mut best: Option<(&Arm, f64)> = None;
        for arm in sorted {
            let mu = self.exact_means_all(arm)[reward - 1];
            match best {
                Some((_, cur)) if mu <= cur => {}
                _ => best = Some((arm, mu)),
            }
        }
        let (arm, mu) = best.expect("non-empty candidate set");
        (arm.clone(), mu)
    }

    /// Brute force over the full `2^N` universe (guarded).
    pub fn best_arm_exhaustive(&self) -> Result<(Arm, f64)> {
        let universe = full_universe(self.node_count())?;
        Ok(self.best_arm_brute_force(&universe))
    }

    /// Minimum mean shift any single-node intervention on a non-root causes
    /// at that node or any of its descendants; `+inf` when no node has a
    /// parent.
    pub fn intervention_margin(&self) -> f64 {
        let n = self.node_count();
        let base = self.exact_means_all(&Arm::empty());
        let mut margin = f64::INFINITY;
        for i in 1..=n {
            if self.skeleton.depth_of(i) == 0 {
                continue;
            }
            let shifted = self.exact_means_all(&Arm::single(i));
            let mut targets = vec![i];
            targets.extend(self.skeleton.descendants(i));
            for j in targets {
                margin = margin.min((base[j - 1] - shifted[j - 1]).abs());
            }
        }
        margin
    }

    /// Sound bound on `|X_i|` under every arm:
    /// `m = m_eps * sum_{l=0}^{L} (d * m_b)^l`.
    pub fn value_bound(&self) -> f64 {
        let d = self.skeleton.max_in_degree() as f64;
        let depth = self.skeleton.max_depth();
        let mut total = 0.0;
        let mut term = 1.0;
        for _ in 0..=depth {
            total += term;
            term *= d * self.m_b;
        }
        self.m_eps * total
    }
}

fn lookup(col: &[(usize, f64)], j: usize) -> f64 {
    col.iter()
        .find_map(|&(p, w)| (p == j).then_some(w))
        .unwrap_or(0.0)
}
