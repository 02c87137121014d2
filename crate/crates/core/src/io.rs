//! Structured-text file formats: SEM instances and skeleton-estimate reports.
//!
//! The instance format is line-based: `key value...` tokens, `#` comments.
//! Floats are written with Rust's shortest round-trip rendering, so a
//! write-then-read cycle reproduces the instance bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gallery::LowerBoundPair;
use crate::graph::DagSkeleton;
use crate::noise::NoiseSpec;
use crate::sem::SemInstance;
use crate::structure::{SlOutcome, SkeletonEstimate};

fn noise_line(spec: &NoiseSpec) -> String {
    match *spec {
        NoiseSpec::Uniform { lo, hi } => format!("uniform {lo} {hi}"),
        NoiseSpec::TruncatedGaussian { mean, sd, halfwidth } => {
            format!("tgauss {mean} {sd} {halfwidth}")
        }
        NoiseSpec::Constant { c } => format!("constant {c}"),
    }
}

/// Renders an instance in the line-based text format.
pub fn instance_to_string(instance: &SemInstance) -> String {
    let skeleton = instance.skeleton();
    let n = skeleton.node_count();
    let mut out = String::new();
    out.push_str("# linsem-bandit instance\n");
    out.push_str("format 1\n");
    let _ = writeln!(out, "nodes {n}");
    let _ = writeln!(out, "max_in_degree {}", skeleton.max_in_degree());
    let _ = writeln!(out, "depth {}", skeleton.max_depth());
    let _ = writeln!(out, "m_b {}", instance.m_b());
    let _ = writeln!(out, "m_eps {}", instance.m_eps());
    for (i, j) in skeleton.edges() {
        let _ = writeln!(out, "edge {i} {j}");
    }
    for (i, j) in skeleton.edges() {
        let _ = writeln!(out, "b {i} {j} {}", instance.weight_obs(i, j));
        let _ = writeln!(out, "bstar {i} {j} {}", instance.weight_int(i, j));
    }
    for i in 1..=n {
        let _ = writeln!(out, "noise {i} {}", noise_line(instance.noise(i)));
    }
    for i in 1..=n {
        let _ = writeln!(out, "nu {i} {}", instance.nu()[i - 1]);
    }
    out
}

pub fn write_instance(instance: &SemInstance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_string(instance)).map_err(|e| Error::io(path, e))
}

/// Parses the instance format, validating cached graph statistics and the
/// noise-mean vector against recomputed values.
pub fn parse_instance(text: &str, origin: &Path) -> Result<SemInstance> {
    let mut nodes: Option<usize> = None;
    let mut declared_d: Option<usize> = None;
    let mut declared_depth: Option<usize> = None;
    let mut m_b: Option<f64> = None;
    let mut m_eps: Option<f64> = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut b_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut bstar_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut noise: Vec<Option<NoiseSpec>> = Vec::new();
    let mut nu: Vec<Option<f64>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::parse(origin, lineno, msg);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| err(format!("bad integer: {s}")))
        };
        let parse_f64 =
            |s: &str| -> Result<f64> { s.parse().map_err(|_| err(format!("bad number: {s}"))) };
        let expect_args = |count: usize| -> Result<()> {
            if tokens.len() != count + 1 {
                return Err(err(format!(
                    "'{}' expects {count} arguments, got {}",
                    tokens[0],
                    tokens.len() - 1
                )));
            }
            Ok(())
        };
        match tokens[0] {
            "format" => {
                expect_args(1)?;
                if tokens[1] != "1" {
                    return Err(err(format!("unsupported format version {}", tokens[1])));
                }
            }
            "nodes" => {
                expect_args(1)?;
                let n = parse_usize(tokens[1])?;
                nodes = Some(n);
                noise = vec![None; n];
                nu = vec![None; n];
            }
            "max_in_degree" => {
                expect_args(1)?;
                declared_d = Some(parse_usize(tokens[1])?);
            }
            "depth" => {
                expect_args(1)?;
                declared_depth = Some(parse_usize(tokens[1])?);
            }
            "m_b" => {
                expect_args(1)?;
                m_b = Some(parse_f64(tokens[1])?);
            }
            "m_eps" => {
                expect_args(1)?;
                m_eps = Some(parse_f64(tokens[1])?);
            }
            "edge" => {
                expect_args(2)?;
                edges.push((parse_usize(tokens[1])?, parse_usize(tokens[2])?));
            }
            "b" => {
                expect_args(3)?;
                b_entries.push((
                    parse_usize(tokens[1])?,
                    parse_usize(tokens[2])?,
                    parse_f64(tokens[3])?,
                ));
            }
            "bstar" => {
                expect_args(3)?;
                bstar_entries.push((
                    parse_usize(tokens[1])?,
                    parse_usize(tokens[2])?,
                    parse_f64(tokens[3])?,
                ));
            }
            "noise" => {
                let n = nodes.ok_or_else(|| err("'noise' before 'nodes'".into()))?;
                let i = parse_usize(tokens[1])?;
                if i == 0 || i > n {
                    return Err(err(format!("node {i} out of range")));
                }
                let spec = match tokens.get(2).copied() {
                    Some("uniform") => {
                        expect_args(4)?;
                        NoiseSpec::Uniform {
                            lo: parse_f64(tokens[3])?,
                            hi: parse_f64(tokens[4])?,
                        }
                    }
                    Some("tgauss") => {
                        expect_args(5)?;
                        NoiseSpec::TruncatedGaussian {
                            mean: parse_f64(tokens[3])?,
                            sd: parse_f64(tokens[4])?,
                            halfwidth: parse_f64(tokens[5])?,
                        }
                    }
                    Some("constant") => {
                        expect_args(3)?;
                        NoiseSpec::Constant {
                            c: parse_f64(tokens[3])?,
                        }
                    }
                    other => {
                        return Err(err(format!("unknown noise family: {other:?}")));
                    }
                };
                noise[i - 1] = Some(spec);
            }
            "nu" => {
                let n = nodes.ok_or_else(|| err("'nu' before 'nodes'".into()))?;
                expect_args(2)?;
                let i = parse_usize(tokens[1])?;
                if i == 0 || i > n {
                    return Err(err(format!("node {i} out of range")));
                }
                nu[i - 1] = Some(parse_f64(tokens[2])?);
            }
            other => return Err(err(format!("unknown directive: {other}"))),
        }
    }

    let top_err = |msg: String| Error::parse(origin, 0, msg);
    let n = nodes.ok_or_else(|| top_err("missing 'nodes'".into()))?;
    let m_b = m_b.ok_or_else(|| top_err("missing 'm_b'".into()))?;
    let m_eps = m_eps.ok_or_else(|| top_err("missing 'm_eps'".into()))?;
    let skeleton = DagSkeleton::new(n, edges.iter().copied())?;
    if let Some(d) = declared_d {
        if d != skeleton.max_in_degree() {
            return Err(top_err(format!(
                "declared max_in_degree {d} but edges give {}",
                skeleton.max_in_degree()
            )));
        }
    }
    if let Some(depth) = declared_depth {
        if depth != skeleton.max_depth() {
            return Err(top_err(format!(
                "declared depth {depth} but edges give {}",
                skeleton.max_depth()
            )));
        }
    }

    let mut b_obs = DMatrix::zeros(n, n);
    let mut b_int = DMatrix::zeros(n, n);
    for (name, entries, matrix) in [("b", &b_entries, &mut b_obs), ("bstar", &bstar_entries, &mut b_int)] {
        for &(i, j, w) in entries.iter() {
            if !skeleton.has_edge(i, j) {
                return Err(top_err(format!("'{name} {i} {j}' does not match any edge")));
            }
            matrix[(i - 1, j - 1)] = w;
        }
        if entries.len() != skeleton.edge_count() {
            return Err(top_err(format!(
                "expected {} '{name}' entries, got {}",
                skeleton.edge_count(),
                entries.len()
            )));
        }
    }

    let noise: Vec<NoiseSpec> = noise
        .into_iter()
        .enumerate()
        .map(|(i0, spec)| spec.ok_or_else(|| top_err(format!("missing noise for node {}", i0 + 1))))
        .collect::<Result<_>>()?;
    let instance = SemInstance::new(skeleton, &b_obs, &b_int, noise, m_b, m_eps)?;
    for (i0, declared) in nu.into_iter().enumerate() {
        let declared =
            declared.ok_or_else(|| top_err(format!("missing nu for node {}", i0 + 1)))?;
        let derived = instance.nu()[i0];
        if declared != derived {
            return Err(top_err(format!(
                "nu[{}] = {declared} disagrees with the noise mean {derived}",
                i0 + 1
            )));
        }
    }
    Ok(instance)
}

pub fn read_instance(path: &Path) -> Result<SemInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text, path)
}

/// Writes the two instances of a minimax pair next to a metadata block:
/// `<stem>.base.sem`, `<stem>.twin.sem` and `<stem>.meta`.
pub fn write_lower_bound_pair(pair: &LowerBoundPair, stem: &Path) -> Result<()> {
    let base_path = stem.with_extension("base.sem");
    let twin_path = stem.with_extension("twin.sem");
    let meta_path = stem.with_extension("meta");
    write_instance(&pair.base, &base_path)?;
    write_instance(&pair.twin, &twin_path)?;
    let mut meta = String::new();
    meta.push_str("# lower-bound pair metadata\n");
    let _ = writeln!(meta, "d {}", pair.d);
    let _ = writeln!(meta, "l {}", pair.l);
    let _ = writeln!(meta, "horizon {}", pair.horizon);
    let _ = writeln!(meta, "delta {}", pair.delta_gap);
    let _ = writeln!(meta, "kl {}", pair.kl_value);
    let _ = writeln!(meta, "base {}", base_path.display());
    let _ = writeln!(meta, "twin {}", twin_path.display());
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
}

/// Renders a structure-learning outcome (sets, order, penalties, optional
/// recovery diagnostics against ground truth).
pub fn skeleton_report(outcome: &SlOutcome, truth: Option<&DagSkeleton>) -> String {
    let estimate: &SkeletonEstimate = &outcome.estimate;
    let n = estimate.node_count();
    let mut out = String::new();
    out.push_str("# skeleton estimate\n");
    let _ = writeln!(out, "nodes {n}");
    let _ = writeln!(out, "rounds_used {}", outcome.rounds_used);
    let _ = writeln!(out, "sweeps {}", outcome.sweeps);
    let _ = writeln!(out, "observational_rounds {}", outcome.observational_rounds);
    let order: Vec<String> = estimate.order.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "order {}", order.join(" "));
    let join = |set: &std::collections::BTreeSet<usize>| {
        set.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    };
    for i in 1..=n {
        if let Some(set) = &estimate.de_hat[i - 1] {
            let _ = writeln!(out, "de {i} : {}", join(set));
        }
    }
    for i in 1..=n {
        let _ = writeln!(out, "an {i} : {}", join(&estimate.an_hat[i - 1]));
    }
    for i in 1..=n {
        let _ = writeln!(out, "pa {i} : {}", join(&estimate.pa_hat[i - 1]));
    }
    for i in 1..=n {
        if let Some(lambda) = outcome.lambda_used[i - 1] {
            let _ = writeln!(out, "lambda {i} {lambda}");
        }
    }
    if let Some(truth) = truth {
        let _ = writeln!(out, "order_valid {}", estimate.order_valid_for(truth));
        let _ = writeln!(out, "parents_contained {}", estimate.parents_contained_in(truth));
        for i in 1..=n {
            if let Some(kappa) = estimate.kappa_report[i - 1] {
                let _ = writeln!(out, "kappa {i} {kappa}");
            }
        }
    }
    out
}
