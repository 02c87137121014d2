//! Reference implementations kept deliberately independent of the production
//! code paths, used for cross-checking in tests and the acceptance suite.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arm::Arm;
use crate::sem::SemInstance;

/// Path compounding via explicit matrix powers:
/// `f_i(B_a) = sum_{l=0}^{L_i} [B_a^l]_i` (column `i` of each power).
pub fn path_sum_matrix_power(instance: &SemInstance, arm: &Arm, node: usize) -> Vec<f64> {
    let n = instance.node_count();
    let b = instance.arm_matrix(arm);
    let depth = instance.skeleton().depth_of(node);
    let mut f = vec![0.0; n];
    f[node - 1] = 1.0; // l = 0 term
    let mut power = DMatrix::<f64>::identity(n, n);
    for _ in 1..=depth {
        power = &power * &b;
        for j in 0..n {
            f[j] += power[(j, node - 1)];
        }
    }
    f
}

/// Naive per-node sampler: dense arm matrix, full-vector substitution.
///
/// Consumes the noise stream in node-label order, matching the production
/// sampler, so the same seed yields the same realization.
pub fn naive_sample(instance: &SemInstance, arm: &Arm, seed: u64) -> Vec<f64> {
    let n = instance.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: Vec<f64> = (1..=n).map(|i| instance.noise(i).sample(&mut rng)).collect();
    let b = instance.arm_matrix(arm);
    let mut x = vec![0.0; n];
    for &i in instance.skeleton().order() {
        let mut acc = eps[i - 1];
        for j in 1..=n {
            acc += b[(j - 1, i - 1)] * x[j - 1];
        }
        x[i - 1] = acc;
    }
    x
}

/// Monte-Carlo estimate of the reward-node mean under `arm`.
///
/// Returns `(mean, sample_sd)` over `rounds` independent draws from the
/// seeded stream.
pub fn monte_carlo_mean(
    instance: &SemInstance,
    arm: &Arm,
    node: usize,
    rounds: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(rounds >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..rounds {
        let x = instance.sample_with(arm, &mut rng);
        let v = x[node - 1];
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / rounds as f64;
    let var = (sum_sq - rounds as f64 * mean * mean) / (rounds as f64 - 1.0);
    (mean, var.max(0.0).sqrt())
}
