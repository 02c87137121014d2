//! Command-line interface: instance generation, simulation, structure
//! learning, bandit runs and batched experiments.
//!
//! Exit codes: 0 on success, 1 on configuration errors (bad flags, files or
//! instances), 2 on runtime faults.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use linsem_bandit::arm::Arm;
use linsem_bandit::error::Error;
use linsem_bandit::gallery::{self, GaussianMode, HierarchicalSpec, RandomDagSpec};
use linsem_bandit::harness::{self, AutoOr, ExperimentConfig, InstanceSource, Mode};
use linsem_bandit::io as fmt_io;
use linsem_bandit::lasso::LassoSettings;
use linsem_bandit::noise::NoiseSpec;
use linsem_bandit::structure::{exploration_constants, run_structure_learning, SlConfig};
use linsem_bandit::trace::{format_value, write_trace_csv};

#[derive(Parser)]
#[command(name = "linsem-bandit", version, about = "Causal bandits on linear SEMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw seeded samples from an instance under a fixed intervention.
    Simulate(SimulateArgs),
    /// Learn descendant/ancestor/parent sets and a topological order.
    LearnStructure(LearnArgs),
    /// Run the phased-elimination bandit and write its regret trace.
    RunBandit(RunArgs),
    /// Generate instance files.
    MakeInstance(MakeArgs),
    /// Run a batched experiment (or scaling sweep) from a config file.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Intervened nodes: "empty", "full", or a comma list like "3,4".
    #[arg(long, default_value = "empty")]
    arm: String,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Identifiability margin, or "auto" to compute it from the instance.
    #[arg(long, default_value = "auto")]
    eta: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Probe-sweep floor; derived from the margin formula when omitted.
    #[arg(long)]
    t1: Option<usize>,
    /// Observational target; derived from c*d*ln(N) when omitted.
    #[arg(long)]
    t2: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    /// Penalty override, or "auto" for the per-node formula.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long)]
    max_rounds: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value = "auto")]
    alpha: String,
    #[arg(long, value_enum, default_value_t = CliMode::UnknownGraph)]
    mode: CliMode,
    #[arg(long)]
    t1: Option<usize>,
    #[arg(long)]
    t2: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value = "auto")]
    eta: String,
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    /// Record mean/width snapshots every this many rounds.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Inflate the eigenvalue width term by sqrt(2).
    #[arg(long, default_value_t = false)]
    proof_faithful_width: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    UnknownGraph,
    KnownGraph,
    GraphDependent,
}

impl From<CliMode> for Mode {
    fn from(mode: CliMode) -> Mode {
        match mode {
            CliMode::UnknownGraph => Mode::UnknownGraph,
            CliMode::KnownGraph => Mode::KnownGraph,
            CliMode::GraphDependent => Mode::GraphDependent,
        }
    }
}

#[derive(Args)]
struct MakeArgs {
    #[command(subcommand)]
    kind: MakeKind,
}

#[derive(Subcommand)]
enum MakeKind {
    /// Fully-connected layers feeding a single reward node.
    Hierarchical {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value_t = 1.0)]
        w_obs: f64,
        #[arg(long, default_value_t = 0.5)]
        w_int: f64,
        /// Noise spec: "uniform LO HI", "tgauss MEAN SD HALFWIDTH", "constant C".
        #[arg(long, default_value = "uniform 0 1")]
        noise: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// The hard two-instance pair; writes <out>.base.sem/.twin.sem/.meta.
    LowerBound {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        m_b: f64,
        /// Gaussian realization: 12-sigma truncation ("faithful") or 6-sigma
        /// ("bounded").
        #[arg(long, default_value = "bounded")]
        gaussian: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded random DAG with positive weights and interventional gaps.
    Random {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        max_in_degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        w_lo: f64,
        #[arg(long, default_value_t = 1.0)]
        w_hi: f64,
        #[arg(long, default_value_t = 0.25)]
        gap_lo: f64,
        #[arg(long, default_value_t = 0.5)]
        gap_hi: f64,
        #[arg(long, default_value = "uniform 0 1")]
        noise: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's out_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_noise(s: &str) -> Result<NoiseSpec, Error> {
    let tokens: Vec<&str> = s.split_whitespace().collect();
    let bad = || Error::InvalidParameter(format!("bad noise spec '{s}'"));
    let f = |t: &str| -> Result<f64, Error> { t.parse().map_err(|_| bad()) };
    let spec = match tokens.as_slice() {
        ["uniform", lo, hi] => NoiseSpec::Uniform { lo: f(lo)?, hi: f(hi)? },
        ["tgauss", mean, sd, halfwidth] => NoiseSpec::TruncatedGaussian {
            mean: f(mean)?,
            sd: f(sd)?,
            halfwidth: f(halfwidth)?,
        },
        ["constant", c] => NoiseSpec::Constant { c: f(c)? },
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_arm(s: &str, node_count: usize) -> Result<Arm, Error> {
    match s {
        "empty" | "none" => Ok(Arm::empty()),
        "full" | "all" => Ok(Arm::full(node_count)),
        list => {
            let members: Result<Vec<usize>, Error> = list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidParameter(format!("bad arm member '{t}'")))
                })
                .collect();
            let members = members?;
            if let Some(&bad) = members.iter().find(|&&m| m == 0 || m > node_count) {
                return Err(Error::InvalidParameter(format!(
                    "arm member {bad} out of range 1..={node_count}"
                )));
            }
            Ok(Arm::from_members(members))
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let instance = fmt_io::read_instance(&args.instance)?;
    let arm = parse_arm(&args.arm, instance.node_count())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let n = instance.node_count();
    let mut out = String::from("round");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for t in 1..=args.rounds {
        let x = instance.sample_with(&arm, &mut rng);
        out.push_str(&t.to_string());
        for v in x {
            out.push(',');
            out.push_str(&format_value(v));
        }
        out.push('\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, out).map_err(|e| Error::io(path, e))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn learn_structure(args: &LearnArgs) -> Result<(), Error> {
    let instance = fmt_io::read_instance(&args.instance)?;
    let eta = AutoOr::parse(&args.eta)?.resolve(|| instance.intervention_margin());
    let lambda = AutoOr::parse(&args.lambda)?;
    let m = instance.value_bound();
    let (t1_auto, t2_auto) = exploration_constants(
        m,
        eta,
        instance.node_count(),
        instance.skeleton().max_in_degree(),
        args.delta,
        args.c,
    )?;
    let config = SlConfig {
        eta,
        t1: args.t1.unwrap_or(t1_auto),
        t2: args.t2.unwrap_or(t2_auto),
        delta: args.delta,
        m,
        lambda_override: match lambda {
            AutoOr::Auto => None,
            AutoOr::Fixed(v) => Some(v),
        },
        lasso: LassoSettings::default(),
        max_rounds: args.max_rounds,
    };
    let mut env = linsem_bandit::env::SemEnvironment::new(&instance, args.seed);
    let outcome = run_structure_learning(&mut env, &config, Some(instance.skeleton()))?;
    let report = fmt_io::skeleton_report(&outcome, Some(instance.skeleton()));
    std::fs::write(&args.out, report).map_err(|e| Error::io(&args.out, e))?;
    println!(
        "learned structure in {} rounds ({} sweeps, {} observational); report: {}",
        outcome.rounds_used,
        outcome.sweeps,
        outcome.observational_rounds,
        args.out.display()
    );
    Ok(())
}

fn run_bandit(args: &RunArgs) -> Result<(), Error> {
    let instance = fmt_io::read_instance(&args.instance)?;
    let mut config = ExperimentConfig::new(
        InstanceSource::File(args.instance.clone()),
        args.horizon,
        1,
        args.seed,
    );
    config.mode = Mode::from(args.mode);
    config.delta = args.delta;
    config.alpha = AutoOr::parse(&args.alpha)?;
    config.lambda = AutoOr::parse(&args.lambda)?;
    config.eta = AutoOr::parse(&args.eta)?;
    config.t1 = args.t1;
    config.t2 = args.t2;
    config.c = args.c;
    config.checkpoint_every = args.checkpoint_every;
    config.proof_faithful_width = args.proof_faithful_width;

    let (trace, rep) = harness::run_single(&instance, &config, args.seed)?;
    write_trace_csv(&trace, &args.out)?;
    let final_regret = trace.final_cum_regret().unwrap_or(0.0);
    println!(
        "played {} rounds (mode {}); final cumulative regret {:.6}; trace: {}",
        trace.len(),
        config.mode.as_str(),
        final_regret,
        args.out.display()
    );
    if let Some(arm) = &rep.design.locked_arm {
        println!("locked arm: {arm}");
    }
    if let (Some(order_valid), Some(contained)) = (rep.order_valid, rep.parents_contained) {
        println!("structure recovery: order_valid={order_valid} parents_contained={contained}");
    }
    Ok(())
}

fn make_instance(args: &MakeArgs) -> Result<(), Error> {
    match &args.kind {
        MakeKind::Hierarchical {
            d,
            l,
            w_obs,
            w_int,
            noise,
            out,
        } => {
            let instance = gallery::hierarchical(&HierarchicalSpec {
                d: *d,
                l: *l,
                w_obs: *w_obs,
                w_int: *w_int,
                noise: parse_noise(noise)?,
            })?;
            fmt_io::write_instance(&instance, out)?;
            println!(
                "wrote hierarchical instance ({} nodes) to {}",
                instance.node_count(),
                out.display()
            );
        }
        MakeKind::LowerBound {
            d,
            l,
            horizon,
            m_b,
            gaussian,
            out,
        } => {
            let mode = match gaussian.as_str() {
                "faithful" => GaussianMode::Faithful,
                "bounded" => GaussianMode::Bounded,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian mode must be 'faithful' or 'bounded', got '{other}'"
                    )))
                }
            };
            let pair = gallery::lower_bound_pair(*d, *l, *horizon, *m_b, mode)?;
            fmt_io::write_lower_bound_pair(&pair, out)?;
            println!(
                "wrote pair (delta {:.6e}, divergence {}) to {}.base.sem / {}.twin.sem",
                pair.delta_gap,
                pair.kl_value,
                out.display(),
                out.display()
            );
        }
        MakeKind::Random {
            n,
            max_in_degree,
            seed,
            w_lo,
            w_hi,
            gap_lo,
            gap_hi,
            noise,
            out,
        } => {
            let instance = gallery::random_dag(&RandomDagSpec {
                node_count: *n,
                max_in_degree: *max_in_degree,
                seed: *seed,
                w_obs_range: (*w_lo, *w_hi),
                gap_range: (*gap_lo, *gap_hi),
                noise: parse_noise(noise)?,
            })?;
            fmt_io::write_instance(&instance, out)?;
            println!(
                "wrote random instance ({} nodes, {} edges) to {}",
                instance.node_count(),
                instance.skeleton().edge_count(),
                out.display()
            );
        }
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let (mut config, sweep) = harness::read_experiment_config(&args.config)?;
    if let Some(dir) = &args.out_dir {
        config.out_dir = Some(dir.clone());
    }
    if config.out_dir.is_none() {
        return Err(Error::InvalidParameter(
            "set out_dir in the config or pass --out-dir".into(),
        ));
    }
    match sweep {
        Some((axis, values)) => {
            let rows = harness::scaling_sweep(axis, &values, &config)?;
            for (row, _) in &rows {
                println!(
                    "sweep value {}: final mean regret {:.6} (stderr {:.6})",
                    row.value, row.final_regret_mean, row.final_regret_stderr
                );
            }
        }
        None => {
            let result = harness::run_experiment(&config)?;
            print!("{}", harness::summary_text(&config, &result.report));
        }
    }
    println!("artifacts in {}", config.out_dir.unwrap().display());
    Ok(())
}

/// Anything that fails while reading inputs is a configuration error.
fn dispatch(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::LearnStructure(args) => learn_structure(args),
        Command::RunBandit(args) => run_bandit(args),
        Command::MakeInstance(args) => make_instance(args),
        Command::Bench(args) => bench(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let kind = err.kind();
            let _ = err.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let config_error = err.is_config() || matches!(err, Error::Io { .. });
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}
