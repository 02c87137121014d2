//! Microbenchmarks for the hot paths: sampling, exact means, the Lasso
//! solver and one full design round's worth of mean/width evaluations.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use linsem_bandit::arm::{full_universe, Arm};
use linsem_bandit::design::{
    estimate_arm_mean, width, NodeRegressor, ParentScale, SkeletonInfo,
};
use linsem_bandit::env::{Environment, SemEnvironment};
use linsem_bandit::gallery::{hierarchical, HierarchicalSpec};
use linsem_bandit::lasso::{lasso_fit, LassoProblem};
use linsem_bandit::noise::NoiseSpec;
use linsem_bandit::sem::SemInstance;

fn appendix_instance(d: usize, l: usize) -> SemInstance {
    hierarchical(&HierarchicalSpec {
        d,
        l,
        w_obs: 1.0,
        w_int: 0.5,
        noise: NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
    })
    .unwrap()
}

fn bench_sampling(c: &mut Criterion) {
    let instance = appendix_instance(3, 2);
    let arm = Arm::from_members(vec![4, 5]);
    c.bench_function("sample_d3_l2", |b| {
        let mut env = SemEnvironment::new(&instance, 7);
        b.iter(|| env.play(&arm));
    });
}

fn bench_exact_means(c: &mut Criterion) {
    let instance = appendix_instance(3, 2);
    let arms = full_universe(instance.node_count()).unwrap();
    c.bench_function("exact_means_128_arms", |b| {
        b.iter(|| {
            arms.iter()
                .map(|arm| instance.exact_means_all(arm)[instance.reward_node() - 1])
                .sum::<f64>()
        });
    });
}

fn bench_lasso(c: &mut Criterion) {
    let instance = appendix_instance(2, 2);
    let mut env = SemEnvironment::new(&instance, 3);
    let rows: Vec<Vec<f64>> = (0..500).map(|_| env.play(&Arm::empty())).collect();
    let design: Vec<Vec<f64>> = rows.iter().map(|r| r[..4].to_vec()).collect();
    let response: Vec<f64> = rows.iter().map(|r| r[4]).collect();
    c.bench_function("lasso_500x4", |b| {
        b.iter_batched(
            || LassoProblem::new(design.clone(), response.clone(), 0.1).unwrap(),
            |problem| lasso_fit(&problem).unwrap(),
            BatchSize::SmallInput,
        );
    });
}

fn bench_width_round(c: &mut Criterion) {
    let instance = appendix_instance(3, 2);
    let n = instance.node_count();
    let info = SkeletonInfo::from_skeleton(instance.skeleton());
    let mut regressors: Vec<NodeRegressor> = (1..=n)
        .map(|i| NodeRegressor::new(i, info.parents(i).to_vec()))
        .collect();
    let mut env = SemEnvironment::new(&instance, 11);
    let mut scale = ParentScale::new(info.max_depth(), info.max_in_degree(), instance.value_bound());
    for t in 0..200 {
        let arm = if t % 3 == 0 { Arm::full(n) } else { Arm::empty() };
        let x = env.play(&arm);
        for i in 1..=n {
            let norm = info
                .parents(i)
                .iter()
                .map(|&p| x[p - 1] * x[p - 1])
                .sum::<f64>()
                .sqrt();
            scale.observe(info.depth_of(i), norm);
            regressors[i - 1].update(arm.contains(i), &x, instance.nu()[i - 1]);
        }
    }
    let arms = full_universe(n).unwrap();
    c.bench_function("mean_width_128_arms", |b| {
        b.iter(|| {
            arms.iter()
                .map(|arm| {
                    let mu = estimate_arm_mean(&regressors, &info, arm, instance.nu());
                    let w = width(&regressors, &info, &scale, arm, instance.nu(), 0.1);
                    mu[n - 1] + w[n - 1]
                })
                .sum::<f64>()
        });
    });
}

criterion_group!(
    benches,
    bench_sampling,
    bench_exact_means,
    bench_lasso,
    bench_width_round
);
criterion_main!(benches);
