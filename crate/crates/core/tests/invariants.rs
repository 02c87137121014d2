//! Cross-module invariants on randomized instances: dual-route path sums,
//! sampling consistency and boundedness, exact-mean recovery of descendant
//! sets, order validity, and the warm-start equivalence of the design-phase
//! mean estimator.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use linsem_bandit::arm::{full_universe, Arm};
use linsem_bandit::design::{estimate_arm_mean, NodeRegressor, SkeletonInfo};
use linsem_bandit::env::{Environment, SemEnvironment};
use linsem_bandit::gallery::{hierarchical, random_dag, HierarchicalSpec, RandomDagSpec};
use linsem_bandit::graph::order_is_valid;
use linsem_bandit::noise::NoiseSpec;
use linsem_bandit::oracle;
use linsem_bandit::sem::SemInstance;
use linsem_bandit::structure::{estimate_ancestors, estimate_descendants, order_from_ancestors, MeanTable};

fn random_instance(seed: u64, n: usize, d: usize) -> SemInstance {
    random_dag(&RandomDagSpec {
        node_count: n,
        max_in_degree: d,
        seed,
        ..RandomDagSpec::default()
    })
    .unwrap()
}

#[test]
fn path_sum_duality_on_small_instances() {
    let mut runner = TestRunner::new(Config::with_cases(40));
    runner
        .run(&(0u64..5_000, 2usize..=8, 1usize..=3), |(seed, n, d)| {
            let instance = random_instance(seed, n, d);
            for arm in full_universe(n).unwrap() {
                for node in 1..=n {
                    let a = instance.path_sum(&arm, node);
                    let b = oracle::path_sum_matrix_power(&instance, &arm, node);
                    for (x, y) in a.iter().zip(&b) {
                        prop_assert!((x - y).abs() <= 1e-10);
                    }
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn samples_match_naive_oracle_and_stay_bounded() {
    let mut runner = TestRunner::new(Config::with_cases(40));
    runner
        .run(&(0u64..5_000, 2usize..=7, 1usize..=3), |(seed, n, d)| {
            let instance = random_instance(seed, n, d);
            let bound = instance.value_bound();
            for (k, arm) in [Arm::empty(), Arm::full(n), Arm::single(1)].iter().enumerate() {
                for draw in 0..5u64 {
                    let s = seed * 31 + draw + k as u64;
                    let fast = instance.sample(arm, s);
                    let naive = oracle::naive_sample(&instance, arm, s);
                    for (a, b) in fast.iter().zip(&naive) {
                        prop_assert!((a - b).abs() <= 1e-12);
                        prop_assert!(a.abs() <= bound + 1e-9);
                    }
                }
            }
            Ok(())
        })
        .unwrap();
}

/// Empirical means converge to the exact means at Hoeffding scale.
#[test]
fn sampling_consistency_on_the_layered_graph() {
    let instance = hierarchical(&HierarchicalSpec {
        d: 2,
        l: 2,
        w_obs: 1.0,
        w_int: 0.5,
        noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
    })
    .unwrap();
    let n_draws = 100_000;
    for (k, arm) in [Arm::empty(), Arm::from_members(vec![3, 4]), Arm::full(5)]
        .iter()
        .enumerate()
    {
        let reward = instance.reward_node();
        let (mc, sd) = oracle::monte_carlo_mean(&instance, arm, reward, n_draws, 40 + k as u64);
        let exact = instance.exact_mean(arm, reward);
        assert!(
            (mc - exact).abs() <= 4.0 * sd / (n_draws as f64).sqrt(),
            "arm {arm}: {mc} vs {exact}"
        );
    }
}

/// With exact means substituted for the estimates and the threshold set to
/// the true margin, every probed non-root recovers exactly itself plus its
/// true descendants, and the derived order is valid.
#[test]
fn monotone_recovery_from_exact_means() {
    let mut instances: Vec<SemInstance> = (0..30u64)
        .map(|seed| random_instance(seed, 3 + (seed as usize % 6), 1 + (seed as usize % 3)))
        .collect();
    instances.push(hierarchical(&HierarchicalSpec {
        d: 3,
        l: 2,
        w_obs: 1.0,
        w_int: 0.5,
        noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
    })
    .unwrap());

    for instance in &instances {
        let n = instance.node_count();
        let mut table = MeanTable::new(n);
        table.record(0, &instance.exact_means_all(&Arm::empty()));
        for j in 1..n {
            table.record(j, &instance.exact_means_all(&Arm::single(j)));
        }
        let eta = instance.intervention_margin();
        let eta = if eta.is_finite() { eta } else { 1.0 };
        let de_hat = estimate_descendants(&table, eta);
        for i in 1..n {
            let expected: std::collections::BTreeSet<usize> = if instance.skeleton().is_root(i) {
                Default::default()
            } else {
                std::iter::once(i)
                    .chain(instance.skeleton().descendants(i))
                    .collect()
            };
            assert_eq!(de_hat[i - 1].as_ref(), Some(&expected), "node {i}");
        }
        let an_hat = estimate_ancestors(&de_hat);
        let order = order_from_ancestors(&an_hat).unwrap();
        assert!(order_is_valid(instance.skeleton(), &order));
    }
}

/// Regressors frozen at the true weights make the assembled means equal the
/// exact means on every arm (exhaustive over graphs with up to 6 nodes).
#[test]
fn mean_estimator_oracle_equality() {
    for seed in 0..15u64 {
        let n = 3 + (seed as usize % 4); // 3..=6
        let instance = random_instance(seed + 400, n, 2);
        let info = SkeletonInfo::from_skeleton(instance.skeleton());
        let mut regressors: Vec<NodeRegressor> = (1..=n)
            .map(|i| NodeRegressor::new(i, info.parents(i).to_vec()))
            .collect();
        for i in 1..=n {
            let parents = info.parents(i).to_vec();
            let obs = nalgebra::DVector::from_iterator(
                parents.len(),
                parents.iter().map(|&p| instance.weight_obs(p, i)),
            );
            let int = nalgebra::DVector::from_iterator(
                parents.len(),
                parents.iter().map(|&p| instance.weight_int(p, i)),
            );
            regressors[i - 1].seed_coef(false, obs);
            regressors[i - 1].seed_coef(true, int);
        }
        for arm in full_universe(n).unwrap() {
            let estimated = estimate_arm_mean(&regressors, &info, &arm, instance.nu());
            let exact = instance.exact_means_all(&arm);
            for i in 0..n {
                assert!(
                    (estimated[i] - exact[i]).abs() <= 1e-12,
                    "seed {seed} arm {arm} node {}",
                    i + 1
                );
            }
        }
    }
}

/// After 500 probe sweeps the table means sit within the Hoeffding band of
/// the exact means for at least 99% of (node, probe) entries.
#[test]
fn probe_means_concentrate() {
    let instance = hierarchical(&HierarchicalSpec {
        d: 2,
        l: 2,
        w_obs: 1.0,
        w_int: 0.5,
        noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
    })
    .unwrap();
    let n = instance.node_count();
    let sweeps = 500;
    let mut env = SemEnvironment::new(&instance, 77);
    let mut table = MeanTable::new(n);
    for _ in 0..sweeps {
        linsem_bandit::structure::probe_round(&mut env, &mut table);
    }
    let band = instance.value_bound() * ((2.0f64 / 0.01).ln() / (2.0 * sweeps as f64)).sqrt();
    let mut within = 0;
    let mut total = 0;
    for probe in 0..n {
        let arm = if probe == 0 { Arm::empty() } else { Arm::single(probe) };
        let exact = instance.exact_means_all(&arm);
        for i in 1..=n {
            total += 1;
            if (table.mean(i, probe) - exact[i - 1]).abs() <= band {
                within += 1;
            }
        }
    }
    assert!(
        within as f64 >= 0.99 * total as f64,
        "{within}/{total} entries within the band"
    );
}

/// Environment draws are deterministic per seed and independent per stream.
#[test]
fn environments_are_reproducible() {
    let instance = random_instance(9, 5, 2);
    let mut a = SemEnvironment::new(&instance, 123);
    let mut b = SemEnvironment::new(&instance, 123);
    let mut c = SemEnvironment::new(&instance, 124);
    let arm = Arm::from_members(vec![2, 4]);
    let xa: Vec<Vec<f64>> = (0..20).map(|_| a.play(&arm)).collect();
    let xb: Vec<Vec<f64>> = (0..20).map(|_| b.play(&arm)).collect();
    let xc: Vec<Vec<f64>> = (0..20).map(|_| c.play(&arm)).collect();
    assert_eq!(xa, xb);
    assert_ne!(xa, xc);
}
