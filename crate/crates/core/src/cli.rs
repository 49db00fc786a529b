//! Command-line front end and the on-disk formats: CSV traces, JSON ensemble
//! summaries, JSON verification reports, and long-format CSV theory tables.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{drive, uniform_stream, ProcessState, RunConfig};
use crate::error::{ConfigError, Error, Result};
use crate::montecarlo::{
    ks_results, profile_level, run_ensemble, verify, ExperimentPlan, KsResult, PoolSpec, Scale,
    Suite, VerifyPlan, VerifyReport,
};
use crate::observables::{ObservableRecord, Observables};
use crate::stats::{CheckpointSummary, EnsembleSummary};
use crate::theory::{
    drift, half_normal_scaled_cdf, profile_limit_cdf, qvar_integrand_n, qvar_integrand_x,
    symdiff_limit_cdf, symdiff_limit_density, TheoryModel, Z0,
};

#[derive(Debug, Parser)]
#[command(
    name = "forget",
    version,
    about = "Simulate and verify the minimum-eviction memory process"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one path and write its records as CSV.
    Simulate(SimulateArgs),
    /// Run many replicates and write a JSON summary.
    Ensemble(EnsembleArgs),
    /// Run the verification suite and write a JSON report.
    Verify(VerifyArgs),
    /// Write constants and limit-law grids as long-format CSV.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub steps: u64,
    #[arg(long)]
    pub seed: u64,
    /// Extra tracked levels in (0,1); z0 is always tracked.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub thresholds: Vec<f64>,
    /// Step indices to record at (default: the last step only).
    #[arg(long, value_delimiter = ',', conflicts_with = "checkpoint_every")]
    pub checkpoints: Vec<u64>,
    /// Record at 0, K, 2K, ... and at the last step.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Initial memory contents (default: 0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub initial: Vec<f64>,
}

impl PathArgs {
    fn config(&self) -> RunConfig {
        let mut cfg =
            RunConfig::new(self.steps, self.seed).with_thresholds(self.thresholds.clone());
        if let Some(k) = self.checkpoint_every {
            let mut cps: Vec<u64> = (0..=self.steps).step_by(k.max(1) as usize).collect();
            if cps.last() != Some(&self.steps) {
                cps.push(self.steps);
            }
            cfg = cfg.with_checkpoints(cps);
        } else if !self.checkpoints.is_empty() {
            cfg = cfg.with_checkpoints(self.checkpoints.clone());
        }
        if !self.initial.is_empty() {
            cfg = cfg.with_initial(self.initial.clone());
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    /// Also track z0 + y/sqrt(steps) for each offset y.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub profile_offsets: Vec<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long)]
    pub replicates: u64,
    /// Worker threads (default: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Sample pools: L, R, symdiff, size, N, profile:<y>.
    #[arg(long, value_delimiter = ',', default_value = "L,R,symdiff,size")]
    pub pools: Vec<PoolSpec>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all")]
    pub suite: Suite,
    #[arg(long, default_value = "quick")]
    pub scale: Scale,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Evaluation grid `start:end:step` for the CDF and density sections.
    #[arg(long, default_value = "0:2:0.1", value_parser = parse_grid)]
    pub grid: Grid,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [a, b, h] = parts[..] else {
        return Err("expected start:end:step".into());
    };
    if !(a.is_finite() && b.is_finite() && h > 0.0 && b >= a) {
        return Err("need finite start <= end and step > 0".into());
    }
    let count = ((b - a) / h + 1e-9).floor() as u64;
    if count > 1_000_000 {
        return Err("grid has more than a million points".into());
    }
    Ok(Grid((0..=count).map(|i| a + i as f64 * h).collect()))
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(a) => simulate(&a).map(|_| 0),
        Command::Ensemble(a) => ensemble(&a).map(|_| 0),
        Command::Verify(a) => {
            let report = verify_cmd(&a)?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Theory(a) => theory(&a).map(|_| 0),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// 17 significant digits; refuses NaN and infinities.
fn fmt_float(field: &str, v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::NonFinite(field.to_string()));
    }
    Ok(format!("{v:.16e}"))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = a.path.config().with_replicate(a.replicate);
    for &y in &a.profile_offsets {
        if a.path.steps == 0 {
            return Err(ConfigError::Plan("profile offsets need at least one step".into()).into());
        }
        cfg.thresholds.push(profile_level(y, a.path.steps));
    }
    cfg.validate()?;
    let state = ProcessState::new(&cfg.initial_set)?;
    let obs = Observables::new(&cfg.thresholds, &state)?;
    let levels = obs.thresholds();
    let stream = uniform_stream(cfg.seed, cfg.replicate_index);
    let (records, _, _) = drive(state, obs, stream, cfg.steps, &cfg.checkpoints);
    write_trace(output(&a.out)?, cfg.replicate_index, &levels, &records)
}

/// Trace columns: replicate, n, s_total, L, R, min_value, then for each level
/// `s@z, W@z, Z@z, X@z, M@z, E@z`, then N.
pub fn trace_header(levels: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["replicate", "n", "s_total", "L", "R", "min_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for z in levels {
        for name in ["s", "W", "Z", "X", "M", "E"] {
            h.push(format!("{name}@{z}"));
        }
    }
    h.push("N".into());
    h
}

pub fn write_trace<W: Write>(
    out: W,
    replicate: u64,
    levels: &[f64],
    records: &[ObservableRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(levels))?;
    for r in records {
        let mut row = vec![
            replicate.to_string(),
            r.n.to_string(),
            r.s_total.to_string(),
            r.l.to_string(),
            r.r.to_string(),
            match r.min_value {
                Some(m) => fmt_float("min_value", m)?,
                None => String::new(),
            },
        ];
        for lv in &r.levels {
            row.push(lv.s.to_string());
            row.push(fmt_float("W", lv.w)?);
            row.push(fmt_float("Z", lv.z)?);
            row.push(fmt_float("X", lv.x)?);
            row.push(lv.m.to_string());
            row.push(lv.e.to_string());
        }
        row.push(fmt_float("N", r.n_martingale)?);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Top-level JSON document written by `ensemble`.
#[derive(Debug, Serialize)]
pub struct EnsembleReport<'a> {
    pub plan: &'a ExperimentPlan,
    pub per_checkpoint: &'a [CheckpointSummary],
    pub pools: &'a std::collections::BTreeMap<String, Vec<f64>>,
    pub ks_results: &'a [KsResult],
    pub version: &'static str,
    pub seed: u64,
}

fn ensure_finite_summary(s: &EnsembleSummary, ks: &[KsResult]) -> Result<()> {
    for cp in &s.per_checkpoint {
        for (k, m) in &cp.scalars {
            for (what, v) in [
                ("mean", m.mean),
                ("m2", m.m2),
                ("min", m.min),
                ("max", m.max),
            ] {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "per_checkpoint[{}].{k}.{what}",
                        cp.n
                    )));
                }
            }
        }
    }
    for (k, v) in &s.pools {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("pools.{k}")));
        }
    }
    for r in ks {
        if !r.statistic.is_finite() {
            return Err(Error::NonFinite(format!("ks_results.{}", r.pool)));
        }
    }
    Ok(())
}

fn ensemble(a: &EnsembleArgs) -> Result<()> {
    let plan = ExperimentPlan::new(a.path.config(), a.replicates).with_pools(a.pools.clone());
    let summary = run_ensemble(&plan, a.jobs)?;
    let ks = ks_results(&plan, &summary)?;
    ensure_finite_summary(&summary, &ks)?;
    let doc = EnsembleReport {
        plan: &plan,
        per_checkpoint: &summary.per_checkpoint,
        pools: &summary.pools,
        ks_results: &ks,
        version: env!("CARGO_PKG_VERSION"),
        seed: plan.base.seed,
    };
    let mut out = output(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn verify_cmd(a: &VerifyArgs) -> Result<VerifyReport> {
    let mut plan = VerifyPlan::new(a.seed, a.scale, a.suite);
    plan.jobs = a.jobs;
    let report = verify(&plan)?;
    for c in &report.checks {
        if c.runtime_s.is_finite() && c.tolerance.is_finite() {
            continue;
        }
        return Err(Error::NonFinite(format!("{}.tolerance/runtime", c.name)));
    }
    for c in &report.checks {
        let status = serde_json::to_value(c.status)?;
        eprintln!(
            "[{:>2}] {:<34} {:<15} measured={} tolerance={} ({:.1}s)",
            c.criterion,
            c.name,
            status.as_str().unwrap_or("?"),
            c.measured.map_or("-".into(), |m| format!("{m:.4e}")),
            c.tolerance,
            c.runtime_s
        );
    }
    let mut out = output(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(report)
}

/// `(section, name, x, value)`
type TheoryRow = (String, String, Option<f64>, f64);

fn theory_rows(grid: &[f64]) -> Result<Vec<TheoryRow>> {
    let mut rows = Vec::new();
    let mut row = |section: &str, name: &str, x: Option<f64>, v: f64| {
        rows.push((section.to_string(), name.to_string(), x, v));
    };
    for (name, v) in TheoryModel::default().entries() {
        row("constants", name, None, v);
    }
    for &z in grid.iter().filter(|&&z| (0.0..1.0).contains(&z)) {
        row("drift", "drift", Some(z), drift(z)?);
    }
    row("drift", "z0", Some(Z0), drift(Z0)?);
    for &m in grid.iter().filter(|&&m| (0.0..=Z0).contains(&m)) {
        row("qvar", "f_X", Some(m), qvar_integrand_x(m)?);
        row("qvar", "f_N", Some(m), qvar_integrand_n(m)?);
    }
    for &x in grid.iter().filter(|&&x| x >= 0.0) {
        row(
            "half_normal_cdf",
            "L_or_R",
            Some(x),
            half_normal_scaled_cdf(x),
        );
        row(
            "symdiff_density",
            "L_plus_R",
            Some(x),
            symdiff_limit_density(x),
        );
        row("symdiff_cdf", "L_plus_R", Some(x), symdiff_limit_cdf(x));
        for y in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            row(
                "profile_cdf",
                &format!("y={y}"),
                Some(x),
                profile_limit_cdf(x, y),
            );
        }
    }
    Ok(rows)
}

fn theory(a: &TheoryArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    w.write_record(["section", "name", "x", "value"])?;
    for (section, name, x, v) in theory_rows(&a.grid.0)? {
        let field = format!("{section}.{name}");
        let xs = match x {
            Some(x) => fmt_float(&field, x)?,
            None => String::new(),
        };
        w.write_record([section, name, xs, fmt_float(&field, v)?])?;
    }
    w.flush()?;
    Ok(())
}
