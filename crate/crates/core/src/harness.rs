//! Experiment orchestration: seeded replication sweeps, regret aggregation,
//! and CSV emission.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::arm::{universe_over, Arm};
use crate::design::{
    alpha_default, run_intervention_design, DesignConfig, DesignOutcome, SkeletonInfo,
};
use crate::env::SemEnvironment;
use crate::error::{Error, Result};
use crate::gallery::{self, HierarchicalSpec, RandomDagSpec};
use crate::lasso::LassoSettings;
use crate::noise::NoiseSpec;
use crate::sem::SemInstance;
use crate::structure::{exploration_constants, run_structure_learning, SlConfig, SlOutcome};
use crate::trace::{format_value, PlayMode, RegretTrace, TraceRow};

/// Environment variable overriding the replication worker count.
pub const THREADS_ENV_VAR: &str = "LINSEM_BANDIT_THREADS";

/// A parameter that is either resolved automatically or pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Fixed(f64),
}

impl AutoOr {
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoOr::Auto);
        }
        s.parse()
            .map(AutoOr::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("expected a number or 'auto', got '{s}'")))
    }

    pub fn resolve(self, auto: impl FnOnce() -> f64) -> f64 {
        match self {
            AutoOr::Auto => auto(),
            AutoOr::Fixed(v) => v,
        }
    }
}

impl std::fmt::Display for AutoOr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AutoOr::Auto => write!(f, "auto"),
            AutoOr::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Which graph knowledge the bandit run assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Learn the skeleton first, then design interventions.
    UnknownGraph,
    /// Use the true parent sets; no learning phase.
    KnownGraph,
    /// Learn the skeleton, then restrict arms and regressors to the
    /// candidate ancestors of the reward node.
    GraphDependent,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "unknown-graph" => Mode::UnknownGraph,
            "known-graph" => Mode::KnownGraph,
            "graph-dependent" => Mode::GraphDependent,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown mode '{other}' (expected unknown-graph, known-graph or graph-dependent)"
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::UnknownGraph => "unknown-graph",
            Mode::KnownGraph => "known-graph",
            Mode::GraphDependent => "graph-dependent",
        }
    }
}

/// Where the experiment's instance comes from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    File(PathBuf),
    Hierarchical(HierarchicalSpec),
    Random(RandomDagSpec),
}

impl InstanceSource {
    pub fn instantiate(&self) -> Result<SemInstance> {
        match self {
            InstanceSource::File(path) => crate::io::read_instance(path),
            InstanceSource::Hierarchical(spec) => gallery::hierarchical(spec),
            InstanceSource::Random(spec) => gallery::random_dag(spec),
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    pub mode: Mode,
    pub delta: f64,
    pub alpha: AutoOr,
    pub lambda: AutoOr,
    pub eta: AutoOr,
    /// Probe-sweep floor; derived from the margin formula when absent.
    pub t1: Option<usize>,
    /// Observational-round target; derived from `c d ln N` when absent.
    pub t2: Option<usize>,
    pub c: f64,
    pub checkpoint_every: Option<usize>,
    pub proof_faithful_width: bool,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(source: InstanceSource, horizon: usize, replications: usize, seed: u64) -> Self {
        ExperimentConfig {
            source,
            horizon,
            replications,
            seed,
            mode: Mode::KnownGraph,
            delta: 0.05,
            alpha: AutoOr::Auto,
            lambda: AutoOr::Auto,
            eta: AutoOr::Auto,
            t1: None,
            t2: None,
            c: 2.0,
            checkpoint_every: None,
            proof_faithful_width: false,
            out_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 1 || self.horizon < 1 {
            return Err(Error::InvalidParameter(
                "replications and horizon must be at least 1".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.c > 1.0) {
            return Err(Error::InvalidParameter(format!("c must exceed 1, got {}", self.c)));
        }
        Ok(())
    }
}

/// Parameter values after auto-resolution, echoed for auditability.
#[derive(Debug, Clone)]
pub struct ResolvedParams {
    pub eta: f64,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub m: f64,
    pub t1: usize,
    pub t2: usize,
}

/// Structure-learning success counters across replications.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlSuccess {
    pub order_valid_frac: f64,
    pub parents_contained_frac: f64,
}

/// Aggregated regret curves and summary statistics.
#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub replications: usize,
    pub rounds: usize,
    pub mean_cum_regret: Vec<f64>,
    pub stderr_cum_regret: Vec<f64>,
    pub final_regret_mean: f64,
    pub final_regret_sd: f64,
    pub sl_success: Option<SlSuccess>,
    pub wall_clock_secs: f64,
    pub resolved: ResolvedParams,
}

/// Everything a finished experiment produced.
#[derive(Debug)]
pub struct ExperimentResult {
    pub report: AggregateReport,
    pub traces: Vec<RegretTrace>,
    pub replications: Vec<ReplicationResult>,
}

/// Per-replication artifacts beyond the trace.
#[derive(Debug)]
pub struct ReplicationResult {
    pub seed: u64,
    pub sl: Option<SlOutcome>,
    pub design: DesignOutcome,
    pub order_valid: Option<bool>,
    pub parents_contained: Option<bool>,
}

/// Memoizing exact-mean oracle for regret accounting.
struct MeanOracle<'a> {
    instance: &'a SemInstance,
    best: f64,
    cache: HashMap<Arm, f64>,
}

impl<'a> MeanOracle<'a> {
    fn new(instance: &'a SemInstance) -> Result<Self> {
        let (_, best) = instance.best_arm_exhaustive()?;
        Ok(MeanOracle {
            instance,
            best,
            cache: HashMap::new(),
        })
    }

    fn instant_regret(&mut self, arm: &Arm) -> f64 {
        let reward = self.instance.reward_node();
        let mu = *self
            .cache
            .entry(arm.clone())
            .or_insert_with(|| self.instance.exact_means_all(arm)[reward - 1]);
        self.best - mu
    }
}

fn probe_arm(probe: usize) -> Arm {
    if probe == 0 {
        Arm::empty()
    } else {
        Arm::single(probe)
    }
}

/// Runs a single seeded replication and stitches its full-horizon trace.
pub fn run_single(
    instance: &SemInstance,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(RegretTrace, ReplicationResult)> {
    run_replication(instance, config, seed)
}

/// Runs one replication and stitches its full-horizon trace.
fn run_replication(
    instance: &SemInstance,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(RegretTrace, ReplicationResult)> {
    let n = instance.node_count();
    let mut env = SemEnvironment::new(instance, seed);
    let mut oracle = MeanOracle::new(instance)?;
    let m = instance.value_bound();
    let truth = instance.skeleton();

    // Structure-learning phase (mode-dependent).
    let sl: Option<SlOutcome> = match config.mode {
        Mode::KnownGraph => None,
        Mode::UnknownGraph | Mode::GraphDependent => {
            let eta = config.eta.resolve(|| instance.intervention_margin());
            let (t1_auto, t2_auto) = exploration_constants(
                m,
                eta,
                n,
                instance.skeleton().max_in_degree(),
                config.delta,
                config.c,
            )?;
            let sl_config = SlConfig {
                eta,
                t1: config.t1.unwrap_or(t1_auto),
                t2: config.t2.unwrap_or(t2_auto),
                delta: config.delta,
                m,
                lambda_override: match config.lambda {
                    AutoOr::Auto => None,
                    AutoOr::Fixed(v) => Some(v),
                },
                lasso: LassoSettings::default(),
                max_rounds: Some(config.horizon),
            };
            Some(run_structure_learning(&mut env, &sl_config, Some(truth))?)
        }
    };

    // Graph knowledge and arm universe for the design phase.
    let (info, universe) = match (config.mode, &sl) {
        (Mode::KnownGraph, _) => (SkeletonInfo::from_skeleton(truth), None),
        (Mode::UnknownGraph, Some(out)) => (SkeletonInfo::from_estimate(&out.estimate)?, None),
        (Mode::GraphDependent, Some(out)) => {
            let info = SkeletonInfo::from_estimate_restricted(&out.estimate)?;
            let pool: Vec<usize> = out.estimate.an_hat[n - 1].iter().copied().collect();
            (info, Some(universe_over(&pool)?))
        }
        _ => unreachable!("learning phase ran for agnostic modes"),
    };

    let sl_rounds = sl.as_ref().map_or(0, |out| out.rounds_used);
    let id_horizon = config.horizon - sl_rounds;
    let alpha = config
        .alpha
        .resolve(|| alpha_default(n, config.horizon, config.delta, info.max_in_degree()));
    let design_config = DesignConfig {
        horizon: id_horizon,
        alpha,
        m,
        arm_universe: universe,
        checkpoint_every: config.checkpoint_every,
        proof_faithful_width: config.proof_faithful_width,
    };
    let design = run_intervention_design(&mut env, &info, instance.nu(), &design_config)?;

    // Stitch the trace: learning rounds first, then design rounds.
    let mut rows = Vec::with_capacity(config.horizon);
    let mut cum = 0.0;
    if let Some(out) = &sl {
        for (idx, &(probe, reward)) in out.plays.iter().enumerate() {
            let arm = probe_arm(probe);
            let inst_regret = oracle.instant_regret(&arm);
            cum += inst_regret;
            let mode = if idx < out.sweeps * n {
                PlayMode::Probe
            } else {
                PlayMode::TopUp
            };
            rows.push(TraceRow {
                round: idx + 1,
                arm,
                reward,
                inst_regret: Some(inst_regret),
                cum_regret: Some(cum),
                stage: 0,
                mode,
                candidate_count: 0,
            });
        }
    }
    for (idx, row) in design.rows.iter().enumerate() {
        let inst_regret = oracle.instant_regret(&row.arm);
        cum += inst_regret;
        rows.push(TraceRow {
            round: sl_rounds + idx + 1,
            arm: row.arm.clone(),
            reward: row.reward,
            inst_regret: Some(inst_regret),
            cum_regret: Some(cum),
            stage: row.stage,
            mode: row.mode.into(),
            candidate_count: row.candidate_count,
        });
    }

    let (order_valid, parents_contained) = match &sl {
        Some(out) => (
            Some(out.estimate.order_valid_for(truth)),
            Some(out.estimate.parents_contained_in(truth)),
        ),
        None => (None, None),
    };
    Ok((
        RegretTrace { rows },
        ReplicationResult {
            seed,
            sl,
            design,
            order_valid,
            parents_contained,
        },
    ))
}

fn resolved_params(instance: &SemInstance, config: &ExperimentConfig) -> Result<ResolvedParams> {
    let n = instance.node_count();
    let m = instance.value_bound();
    let eta = config.eta.resolve(|| instance.intervention_margin());
    let (t1_auto, t2_auto) =
        exploration_constants(m, eta, n, instance.skeleton().max_in_degree(), config.delta, config.c)?;
    let t1 = config.t1.unwrap_or(t1_auto);
    let t2 = config.t2.unwrap_or(t2_auto);
    let alpha = config.alpha.resolve(|| {
        alpha_default(n, config.horizon, config.delta, instance.skeleton().max_in_degree())
    });
    let lambda = match config.lambda {
        AutoOr::Auto => None, // per-node formula, echoed in the skeleton report
        AutoOr::Fixed(v) => Some(v),
    };
    Ok(ResolvedParams {
        eta,
        alpha,
        lambda,
        m,
        t1,
        t2,
    })
}

/// Builds a rayon pool honoring [`THREADS_ENV_VAR`].
fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV_VAR) {
        let threads: usize = value.parse().map_err(|_| {
            Error::InvalidParameter(format!("{THREADS_ENV_VAR} must be a positive integer"))
        })?;
        if threads == 0 {
            return Err(Error::InvalidParameter(format!(
                "{THREADS_ENV_VAR} must be a positive integer"
            )));
        }
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))
}

/// Runs every replication (seed = base + index, in a work pool), aggregates
/// the cumulative-regret curves, and optionally writes all artifacts to
/// `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let instance = config.source.instantiate()?;
    let resolved = resolved_params(&instance, config)?;

    let pool = worker_pool()?;
    let results: Vec<Result<(RegretTrace, ReplicationResult)>> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| run_replication(&instance, config, config.seed + r as u64))
            .collect()
    });

    let mut traces = Vec::with_capacity(config.replications);
    let mut replications = Vec::with_capacity(config.replications);
    for result in results {
        let (trace, rep) = result?;
        traces.push(trace);
        replications.push(rep);
    }

    let report = aggregate(&traces, &replications, resolved, started.elapsed().as_secs_f64())?;
    if let Some(dir) = &config.out_dir {
        write_artifacts(dir, config, &traces, &report)?;
    }
    Ok(ExperimentResult {
        report,
        traces,
        replications,
    })
}

/// Recomputes the aggregate curves from per-replication traces.
pub fn aggregate(
    traces: &[RegretTrace],
    replications: &[ReplicationResult],
    resolved: ResolvedParams,
    wall_clock_secs: f64,
) -> Result<AggregateReport> {
    let r = traces.len();
    if r == 0 {
        return Err(Error::InvalidParameter("no traces to aggregate".into()));
    }
    let rounds = traces[0].len();
    if traces.iter().any(|t| t.len() != rounds) {
        return Err(Error::InvalidParameter("traces have unequal lengths".into()));
    }
    let mut mean = vec![0.0; rounds];
    let mut stderr = vec![0.0; rounds];
    for t in 0..rounds {
        let values: Vec<f64> = traces
            .iter()
            .map(|trace| trace.rows[t].cum_regret.unwrap_or(0.0))
            .collect();
        let mu = values.iter().sum::<f64>() / r as f64;
        mean[t] = mu;
        if r > 1 {
            let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (r - 1) as f64;
            stderr[t] = (var / r as f64).sqrt();
        }
    }
    let final_regret_mean = *mean.last().unwrap_or(&0.0);
    let final_regret_sd = if r > 1 {
        let finals: Vec<f64> = traces
            .iter()
            .map(|trace| trace.final_cum_regret().unwrap_or(0.0))
            .collect();
        let var = finals
            .iter()
            .map(|v| (v - final_regret_mean) * (v - final_regret_mean))
            .sum::<f64>()
            / (r - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };

    let with_sl: Vec<&ReplicationResult> =
        replications.iter().filter(|rep| rep.sl.is_some()).collect();
    let sl_success = if with_sl.is_empty() {
        None
    } else {
        let count = with_sl.len() as f64;
        Some(SlSuccess {
            order_valid_frac: with_sl.iter().filter(|r| r.order_valid == Some(true)).count() as f64
                / count,
            parents_contained_frac: with_sl
                .iter()
                .filter(|r| r.parents_contained == Some(true))
                .count() as f64
                / count,
        })
    };

    Ok(AggregateReport {
        replications: r,
        rounds,
        mean_cum_regret: mean,
        stderr_cum_regret: stderr,
        final_regret_mean,
        final_regret_sd,
        sl_success,
        wall_clock_secs,
        resolved,
    })
}

/// Renders the per-round aggregate as CSV.
pub fn aggregate_to_csv(report: &AggregateReport) -> String {
    let mut out = String::from("round,mean_cum_regret,stderr_cum_regret\n");
    for t in 0..report.rounds {
        let _ = writeln!(
            out,
            "{},{},{}",
            t + 1,
            format_value(report.mean_cum_regret[t]),
            format_value(report.stderr_cum_regret[t])
        );
    }
    out
}

/// Key-value run summary (resolved parameters, outcomes, timing).
pub fn summary_text(config: &ExperimentConfig, report: &AggregateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode = {}", config.mode.as_str());
    let _ = writeln!(out, "horizon = {}", config.horizon);
    let _ = writeln!(out, "replications = {}", report.replications);
    let _ = writeln!(out, "seed = {}", config.seed);
    let _ = writeln!(out, "delta = {}", config.delta);
    let _ = writeln!(out, "eta_resolved = {}", report.resolved.eta);
    let _ = writeln!(out, "alpha_resolved = {}", report.resolved.alpha);
    match report.resolved.lambda {
        Some(v) => {
            let _ = writeln!(out, "lambda_resolved = {v}");
        }
        None => {
            let _ = writeln!(out, "lambda_resolved = auto (per-node formula)");
        }
    }
    let _ = writeln!(out, "m_resolved = {}", report.resolved.m);
    let _ = writeln!(out, "t1_resolved = {}", report.resolved.t1);
    let _ = writeln!(out, "t2_resolved = {}", report.resolved.t2);
    let _ = writeln!(out, "final_regret_mean = {}", report.final_regret_mean);
    let _ = writeln!(out, "final_regret_sd = {}", report.final_regret_sd);
    if let Some(sl) = report.sl_success {
        let _ = writeln!(out, "sl_order_valid_frac = {}", sl.order_valid_frac);
        let _ = writeln!(out, "sl_parents_contained_frac = {}", sl.parents_contained_frac);
    }
    let _ = writeln!(out, "wall_clock_secs = {:.3}", report.wall_clock_secs);
    out
}

fn write_artifacts(
    dir: &Path,
    config: &ExperimentConfig,
    traces: &[RegretTrace],
    report: &AggregateReport,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (r, trace) in traces.iter().enumerate() {
        let path = dir.join(format!("trace_{r:03}.csv"));
        crate::trace::write_trace_csv(trace, &path)?;
    }
    let agg_path = dir.join("aggregate.csv");
    std::fs::write(&agg_path, aggregate_to_csv(report)).map_err(|e| Error::io(&agg_path, e))?;
    let summary_path = dir.join("summary.txt");
    std::fs::write(&summary_path, summary_text(config, report))
        .map_err(|e| Error::io(&summary_path, e))?;
    Ok(())
}

/// Which hierarchical parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Depth,
    Degree,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "depth" => Ok(SweepAxis::Depth),
            "d" | "degree" => Ok(SweepAxis::Degree),
            other => Err(Error::InvalidParameter(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// A requested sweep: the axis and its ascending values.
pub type SweepSpec = (SweepAxis, Vec<usize>);

/// One sweep row: the axis value and the final mean regret it produced.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: usize,
    pub final_regret_mean: f64,
    pub final_regret_stderr: f64,
}

/// Re-parameterizes the hierarchical generator along `axis` and runs one
/// experiment per value. Requires a hierarchical source.
pub fn scaling_sweep(
    axis: SweepAxis,
    values: &[usize],
    base: &ExperimentConfig,
) -> Result<Vec<(SweepRow, AggregateReport)>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("sweep values must be ascending".into()));
    }
    let InstanceSource::Hierarchical(spec) = &base.source else {
        return Err(Error::InvalidParameter(
            "scaling sweeps re-parameterize the hierarchical generator; set a hierarchical source"
                .into(),
        ));
    };
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut spec = spec.clone();
        match axis {
            SweepAxis::Depth => spec.l = value,
            SweepAxis::Degree => spec.d = value,
        }
        let mut config = base.clone();
        config.source = InstanceSource::Hierarchical(spec);
        config.out_dir = base
            .out_dir
            .as_ref()
            .map(|dir| dir.join(format!("sweep_{value}")));
        let result = run_experiment(&config)?;
        rows.push((
            SweepRow {
                value,
                final_regret_mean: result.report.final_regret_mean,
                final_regret_stderr: result.report.stderr_cum_regret.last().copied().unwrap_or(0.0),
            },
            result.report,
        ));
    }
    if let Some(dir) = &base.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut csv = String::from("value,final_regret_mean,final_regret_stderr\n");
        for (row, _) in &rows {
            let _ = writeln!(
                csv,
                "{},{},{}",
                row.value,
                format_value(row.final_regret_mean),
                format_value(row.final_regret_stderr)
            );
        }
        let path = dir.join("sweep.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}

/// Parses the flat key-value experiment config format.
///
/// Keys: `source` (`hierarchical`, `random`, `file`), the generator fields
/// (`d`, `l`, `w_obs`, `w_int`, `noise`, `n`, `max_in_degree`, `gen_seed`),
/// `file`, `horizon`, `replications`, `seed`, `mode`, `delta`, `alpha`,
/// `lambda`, `eta`, `t1`, `t2`, `c`, `checkpoint_every`,
/// `proof_faithful_width`, `out_dir`, `sweep_axis`, `sweep_values`.
pub fn parse_experiment_config(
    text: &str,
    origin: &Path,
) -> Result<(ExperimentConfig, Option<SweepSpec>)> {
    let mut map: HashMap<String, (usize, String)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(origin, idx + 1, format!("expected 'key = value', got '{line}'")));
        };
        map.insert(
            key.trim().to_string(),
            (idx + 1, value.trim().to_string()),
        );
    }

    let mut take = |key: &str| map.remove(key);
    let parse_noise = |line: usize, s: &str| -> Result<NoiseSpec> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let bad = || Error::parse(origin, line, format!("bad noise spec '{s}'"));
        let f = |t: &str| -> Result<f64> { t.parse().map_err(|_| bad()) };
        match tokens.as_slice() {
            ["uniform", lo, hi] => Ok(NoiseSpec::Uniform { lo: f(lo)?, hi: f(hi)? }),
            ["tgauss", mean, sd, halfwidth] => Ok(NoiseSpec::TruncatedGaussian {
                mean: f(mean)?,
                sd: f(sd)?,
                halfwidth: f(halfwidth)?,
            }),
            ["constant", c] => Ok(NoiseSpec::Constant { c: f(c)? }),
            _ => Err(bad()),
        }
    };

    let source_kind = take("source")
        .map(|(_, v)| v)
        .unwrap_or_else(|| "hierarchical".to_string());
    let noise = match take("noise") {
        Some((line, v)) => parse_noise(line, &v)?,
        None => NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
    };
    macro_rules! parsed {
        ($key:expr, $default:expr) => {
            match take($key) {
                Some((line, v)) => v
                    .parse()
                    .map_err(|_| Error::parse(origin, line, format!("bad value for {}: '{v}'", $key)))?,
                None => $default,
            }
        };
    }
    let source = match source_kind.as_str() {
        "hierarchical" => InstanceSource::Hierarchical(HierarchicalSpec {
            d: parsed!("d", 2),
            l: parsed!("l", 2),
            w_obs: parsed!("w_obs", 1.0),
            w_int: parsed!("w_int", 0.5),
            noise,
        }),
        "random" => InstanceSource::Random(RandomDagSpec {
            node_count: parsed!("n", 6),
            max_in_degree: parsed!("max_in_degree", 2),
            seed: parsed!("gen_seed", 0),
            noise,
            ..RandomDagSpec::default()
        }),
        "file" => {
            let (_, path) = take("file").ok_or_else(|| {
                Error::parse(origin, 0, "source = file requires a 'file' key".to_string())
            })?;
            InstanceSource::File(PathBuf::from(path))
        }
        other => {
            return Err(Error::parse(origin, 0, format!("unknown source '{other}'")));
        }
    };

    let mut config = ExperimentConfig::new(
        source,
        parsed!("horizon", 1000),
        parsed!("replications", 1),
        parsed!("seed", 0),
    );
    if let Some((_, v)) = take("mode") {
        config.mode = Mode::parse(&v)?;
    }
    config.delta = parsed!("delta", 0.05);
    config.c = parsed!("c", 2.0);
    if let Some((_, v)) = take("alpha") {
        config.alpha = AutoOr::parse(&v)?;
    }
    if let Some((_, v)) = take("lambda") {
        config.lambda = AutoOr::parse(&v)?;
    }
    if let Some((_, v)) = take("eta") {
        config.eta = AutoOr::parse(&v)?;
    }
    if let Some((line, v)) = take("t1") {
        config.t1 = Some(
            v.parse()
                .map_err(|_| Error::parse(origin, line, format!("bad value for t1: '{v}'")))?,
        );
    }
    if let Some((line, v)) = take("t2") {
        config.t2 = Some(
            v.parse()
                .map_err(|_| Error::parse(origin, line, format!("bad value for t2: '{v}'")))?,
        );
    }
    if let Some((line, v)) = take("checkpoint_every") {
        let every: usize = v
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad value for checkpoint_every: '{v}'")))?;
        config.checkpoint_every = (every > 0).then_some(every);
    }
    if let Some((line, v)) = take("proof_faithful_width") {
        config.proof_faithful_width = v
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad boolean: '{v}'")))?;
    }
    if let Some((_, v)) = take("out_dir") {
        config.out_dir = Some(PathBuf::from(v));
    }

    let sweep = match (take("sweep_axis"), take("sweep_values")) {
        (Some((_, axis)), Some((line, values))) if axis != "none" => {
            let axis = SweepAxis::parse(&axis)?;
            let values: Vec<usize> = values
                .split_whitespace()
                .map(|v| {
                    v.parse()
                        .map_err(|_| Error::parse(origin, line, format!("bad sweep value '{v}'")))
                })
                .collect::<Result<_>>()?;
            Some((axis, values))
        }
        (Some((_, axis)), None) if axis == "none" => None,
        (Some((line, _)), None) => {
            return Err(Error::parse(origin, line, "sweep_axis without sweep_values".to_string()));
        }
        (None, Some((line, _))) => {
            return Err(Error::parse(origin, line, "sweep_values without sweep_axis".to_string()));
        }
        _ => None,
    };

    if let Some((line, _)) = map.values().next() {
        let keys: Vec<&String> = map.keys().collect();
        return Err(Error::parse(origin, *line, format!("unknown config keys: {keys:?}")));
    }
    Ok((config, sweep))
}

pub fn read_experiment_config(
    path: &Path,
) -> Result<(ExperimentConfig, Option<SweepSpec>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment_config(&text, path)
}
