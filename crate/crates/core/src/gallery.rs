//! Instance generators: layered hierarchical graphs, the two-instance
//! minimax pair, and seeded random DAGs.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arm::{Arm, ENUMERATION_GUARD};
use crate::error::{Error, Result};
use crate::graph::DagSkeleton;
use crate::noise::NoiseSpec;
use crate::sem::SemInstance;

/// A hierarchical graph: `l` fully-connected layers of `d` nodes feeding a
/// single reward node, `N = d*l + 1`.
#[derive(Debug, Clone)]
pub struct HierarchicalSpec {
    pub d: usize,
    pub l: usize,
    /// Weight on every observational edge.
    pub w_obs: f64,
    /// Weight on every interventional edge.
    pub w_int: f64,
    pub noise: NoiseSpec,
}

/// Node label of the `j`-th node (1-based) on layer `layer` (1-based).
fn layer_node(d: usize, layer: usize, j: usize) -> usize {
    (layer - 1) * d + j
}

/// Builds the layered skeleton shared by [`hierarchical`] and
/// [`lower_bound_pair`].
fn layered_skeleton(d: usize, l: usize) -> Result<DagSkeleton> {
    let n = d * l + 1;
    let mut edges = Vec::new();
    for layer in 1..l {
        for j in 1..=d {
            for k in 1..=d {
                edges.push((layer_node(d, layer, j), layer_node(d, layer + 1, k)));
            }
        }
    }
    for j in 1..=d {
        edges.push((layer_node(d, l, j), n));
    }
    DagSkeleton::new(n, edges)
}

/// Generates a hierarchical instance with constant edge weights.
pub fn hierarchical(spec: &HierarchicalSpec) -> Result<SemInstance> {
    if spec.d < 1 || spec.l < 1 {
        return Err(Error::InvalidParameter(
            "hierarchical generator needs d >= 1 and l >= 1".into(),
        ));
    }
    let skeleton = layered_skeleton(spec.d, spec.l)?;
    let n = skeleton.node_count();
    let mut b_obs = DMatrix::zeros(n, n);
    let mut b_int = DMatrix::zeros(n, n);
    for (i, j) in skeleton.edges() {
        b_obs[(i - 1, j - 1)] = spec.w_obs;
        b_int[(i - 1, j - 1)] = spec.w_int;
    }
    let m_b = spec.w_obs.abs().max(spec.w_int.abs());
    let m_eps = spec.noise.support_bound();
    SemInstance::new(
        skeleton,
        &b_obs,
        &b_int,
        vec![spec.noise.clone(); n],
        m_b,
        m_eps,
    )
}

/// How to realize the Gaussian noise of the minimax construction within the
/// bounded noise families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianMode {
    /// Truncation at 12 standard deviations: the rejection probability is
    /// below 1e-30, so samples are indistinguishable from the untruncated
    /// Gaussian in double precision. Intended for oracle and divergence
    /// checks.
    Faithful,
    /// Truncation at 6 standard deviations, for feeding the bandit
    /// algorithms with honestly bounded noise.
    Bounded,
}

impl GaussianMode {
    fn halfwidth(self) -> f64 {
        match self {
            GaussianMode::Faithful => 12.0,
            GaussianMode::Bounded => 6.0,
        }
    }
}

/// The hard two-instance family: a pair of hierarchical bandits that differ
/// only in the incoming weight columns of the depth-1 nodes, with the
/// perturbation sized so the divergence between their observation processes
/// over `horizon` rounds is exactly 1.
#[derive(Debug, Clone)]
pub struct LowerBoundPair {
    pub d: usize,
    pub l: usize,
    pub horizon: usize,
    /// The weight perturbation `delta = 1 / sqrt(d^2 (1+d) T)`.
    pub delta_gap: f64,
    /// Closed-form divergence `T d^2 (1+d) delta^2` between the two
    /// observation processes.
    pub kl_value: f64,
    /// Instance with all observational weights at `m_b` (best arm: empty).
    pub base: SemInstance,
    /// Instance with the depth-1 columns swapped (best arm: the depth-1
    /// nodes `{d+1, .., 2d}`).
    pub twin: SemInstance,
}

/// Builds the minimax pair for the given layer width `d >= 1`, depth
/// `l >= 2` and horizon `T >= 1`.
///
/// Layer-1 noise is mean-1 Gaussian and all other noise is standard
/// Gaussian, realized per `mode`. Both claimed best arms are verified by
/// brute force whenever the graph is small enough to enumerate.
pub fn lower_bound_pair(
    d: usize,
    l: usize,
    horizon: usize,
    m_b: f64,
    mode: GaussianMode,
) -> Result<LowerBoundPair> {
    if d < 1 || l < 2 || horizon < 1 {
        return Err(Error::InvalidParameter(
            "lower-bound pair needs d >= 1, l >= 2, horizon >= 1".into(),
        ));
    }
    let delta = 1.0 / ((d * d * (1 + d)) as f64 * horizon as f64).sqrt();
    if !(delta < m_b) {
        return Err(Error::InvalidParameter(format!(
            "perturbation delta = {delta} must stay below m_b = {m_b}; increase the horizon"
        )));
    }
    let kl_value = horizon as f64 * (d * d * (1 + d)) as f64 * delta * delta;

    let skeleton = layered_skeleton(d, l)?;
    let n = skeleton.node_count();
    let sd = 1.0;
    let halfwidth = mode.halfwidth() * sd;
    let noise: Vec<NoiseSpec> = (1..=n)
        .map(|i| NoiseSpec::TruncatedGaussian {
            mean: if i <= d { 1.0 } else { 0.0 },
            sd,
            halfwidth,
        })
        .collect();
    let m_eps = 1.0 + halfwidth;

    let mut base_obs = DMatrix::zeros(n, n);
    let mut base_int = DMatrix::zeros(n, n);
    for (i, j) in skeleton.edges() {
        base_obs[(i - 1, j - 1)] = m_b;
        base_int[(i - 1, j - 1)] = m_b - delta;
    }
    // The twin swaps observational and interventional weights exactly on the
    // incoming columns of the depth-1 nodes d+1 .. 2d.
    let mut twin_obs = base_obs.clone();
    let mut twin_int = base_int.clone();
    for target in d + 1..=2 * d {
        for source in 1..=d {
            twin_obs[(source - 1, target - 1)] = m_b - delta;
            twin_int[(source - 1, target - 1)] = m_b;
        }
    }

    let base = SemInstance::new(
        skeleton.clone(),
        &base_obs,
        &base_int,
        noise.clone(),
        m_b,
        m_eps,
    )?;
    let twin = SemInstance::new(skeleton, &twin_obs, &twin_int, noise, m_b, m_eps)?;

    if n <= ENUMERATION_GUARD {
        let (best_base, _) = base.best_arm_exhaustive()?;
        if best_base != Arm::empty() {
            return Err(Error::InvalidInstance(format!(
                "base instance best arm should be empty, got {best_base}"
            )));
        }
        let expected = Arm::from_members((d + 1..=2 * d).collect());
        let (best_twin, _) = twin.best_arm_exhaustive()?;
        if best_twin != expected {
            return Err(Error::InvalidInstance(format!(
                "twin instance best arm should be {expected}, got {best_twin}"
            )));
        }
    }

    Ok(LowerBoundPair {
        d,
        l,
        horizon,
        delta_gap: delta,
        kl_value,
        base,
        twin,
    })
}

/// Parameters for [`random_dag`].
#[derive(Debug, Clone)]
pub struct RandomDagSpec {
    pub node_count: usize,
    pub max_in_degree: usize,
    pub seed: u64,
    /// Observational weights are drawn uniformly from this range; must be
    /// positive.
    pub w_obs_range: (f64, f64),
    /// Interventional weight = observational weight minus a gap drawn from
    /// this range. Requires `0 < gap <= w_obs_range.0` so interventional
    /// weights stay nonnegative and every intervention shifts its
    /// descendants.
    pub gap_range: (f64, f64),
    /// Noise applied to every node; must have a strictly positive mean.
    pub noise: NoiseSpec,
}

impl Default for RandomDagSpec {
    fn default() -> Self {
        RandomDagSpec {
            node_count: 6,
            max_in_degree: 2,
            seed: 0,
            w_obs_range: (0.5, 1.0),
            gap_range: (0.25, 0.5),
            noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
        }
    }
}

/// Samples a random DAG instance: a uniformly random topological order (with
/// the reward node placed last), up to `max_in_degree` parents per node among
/// its predecessors, and positive weights with a per-edge interventional gap
/// bounded away from zero. Deterministic per seed.
pub fn random_dag(spec: &RandomDagSpec) -> Result<SemInstance> {
    let n = spec.node_count;
    if n < 1 {
        return Err(Error::InvalidParameter("node_count must be >= 1".into()));
    }
    let (w_lo, w_hi) = spec.w_obs_range;
    let (g_lo, g_hi) = spec.gap_range;
    if !(0.0 < w_lo && w_lo <= w_hi) {
        return Err(Error::InvalidParameter(format!(
            "w_obs_range must satisfy 0 < lo <= hi, got ({w_lo}, {w_hi})"
        )));
    }
    if !(0.0 < g_lo && g_lo <= g_hi && g_hi <= w_lo) {
        return Err(Error::InvalidParameter(format!(
            "gap_range must satisfy 0 < lo <= hi <= w_obs_range.0, got ({g_lo}, {g_hi})"
        )));
    }
    spec.noise.validate()?;
    if spec.noise.mean() <= 0.0 {
        return Err(Error::InvalidParameter(
            "random_dag requires a noise family with strictly positive mean".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Reward node last keeps it a sink, which the structure learner relies on.
    let mut order: Vec<usize> = (1..n).collect();
    order.shuffle(&mut rng);
    order.push(n);

    let mut edges = Vec::new();
    for pos in 1..n {
        let node = order[pos];
        let cap = spec.max_in_degree.min(pos);
        let k = rng.gen_range(0..=cap);
        let mut predecessors: Vec<usize> = order[..pos].to_vec();
        predecessors.shuffle(&mut rng);
        for &p in predecessors.iter().take(k) {
            edges.push((p, node));
        }
    }
    let skeleton = DagSkeleton::new(n, edges)?;

    let mut b_obs = DMatrix::zeros(n, n);
    let mut b_int = DMatrix::zeros(n, n);
    for (i, j) in skeleton.edges() {
        let w = rng.gen_range(w_lo..=w_hi);
        let gap = rng.gen_range(g_lo..=g_hi);
        b_obs[(i - 1, j - 1)] = w;
        b_int[(i - 1, j - 1)] = w - gap;
    }

    SemInstance::new(
        skeleton,
        &b_obs,
        &b_int,
        vec![spec.noise.clone(); n],
        w_hi,
        spec.noise.support_bound(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appendix_hierarchical(d: usize, l: usize) -> SemInstance {
        hierarchical(&HierarchicalSpec {
            d,
            l,
            w_obs: 1.0,
            w_int: 0.5,
            noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
        })
        .unwrap()
    }

    #[test]
    fn hierarchical_shape() {
        let inst = appendix_hierarchical(3, 2);
        assert_eq!(inst.node_count(), 7);
        assert_eq!(inst.skeleton().parents(7).len(), 3);
        // Layer depth: layer l nodes have causal depth l-1, the reward node L.
        for layer in 1..=2 {
            for j in 1..=3 {
                assert_eq!(inst.skeleton().depth_of(layer_node(3, layer, j)), layer - 1);
            }
        }
        assert_eq!(inst.skeleton().depth_of(7), 2);
        assert_eq!(inst.skeleton().max_in_degree(), 3);
    }

    #[test]
    fn single_cell_is_a_chain() {
        let inst = appendix_hierarchical(1, 1);
        assert_eq!(inst.node_count(), 2);
        assert!(inst.skeleton().has_edge(1, 2));
    }

    #[test]
    fn hand_counted_reward_mean() {
        // d=2, L=2, unit observational weights, noise mean 0.5:
        // one empty path + 2 length-1 + 4 length-2 paths.
        let inst = appendix_hierarchical(2, 2);
        let mu = inst.exact_mean(&Arm::empty(), 5);
        assert!((mu - 3.5).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_pair_best_arms_and_divergence() {
        for d in [2usize, 3] {
            let pair = lower_bound_pair(d, 2, 10_000, 1.0, GaussianMode::Faithful).unwrap();
            assert!((pair.kl_value - 1.0).abs() < 1e-12);
            assert!(pair.delta_gap < 1.0);
            let (best_base, _) = pair.base.best_arm_exhaustive().unwrap();
            assert_eq!(best_base, Arm::empty());
            let (best_twin, _) = pair.twin.best_arm_exhaustive().unwrap();
            assert_eq!(best_twin, Arm::from_members((d + 1..=2 * d).collect()));
        }
    }

    #[test]
    fn pair_difference_is_supported_on_depth_one_columns() {
        let pair = lower_bound_pair(2, 2, 5_000, 1.0, GaussianMode::Bounded).unwrap();
        let diff = pair.base.dense_obs() - pair.twin.dense_obs();
        let n = pair.base.node_count();
        for i in 1..=n {
            for j in 1..=n {
                let v = diff[(i - 1, j - 1)];
                let depth_one_column = pair.base.skeleton().depth_of(j) == 1
                    && pair.base.skeleton().has_edge(i, j);
                if depth_one_column {
                    assert!((v - pair.delta_gap).abs() < 1e-15);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn pair_rejects_horizons_that_break_the_perturbation() {
        // With m_b this small the canonical delta exceeds it.
        assert!(lower_bound_pair(2, 2, 1, 0.1, GaussianMode::Bounded).is_err());
    }

    #[test]
    fn random_dag_is_deterministic_and_valid() {
        for seed in 0..20 {
            let spec = RandomDagSpec {
                node_count: 6,
                max_in_degree: 2,
                seed,
                ..RandomDagSpec::default()
            };
            let a = random_dag(&spec).unwrap();
            let b = random_dag(&spec).unwrap();
            assert_eq!(a, b);
            assert!(a.intervention_margin() > 0.0);
            assert!(a.skeleton().max_in_degree() <= 2);
            assert!(a.skeleton().children(6).is_empty());
        }
    }

    #[test]
    fn degree_zero_gives_edgeless_graph() {
        let spec = RandomDagSpec {
            node_count: 4,
            max_in_degree: 0,
            seed: 3,
            ..RandomDagSpec::default()
        };
        let inst = random_dag(&spec).unwrap();
        assert_eq!(inst.skeleton().edge_count(), 0);
    }
}
