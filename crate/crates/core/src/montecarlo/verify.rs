//! The verification suite: thirteen numbered criteria, each producing one or
//! more named checks with a measured value and a tolerance.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checks::{
    coupling_check, drift_check, drifted_max_path_oracle, lipschitz_check, oracle_equivalence,
    qvar_check,
};
use super::{run_ensemble, ExperimentPlan, PoolSpec};
use crate::engine::RunConfig;
use crate::error::{ConfigError, Error, Result};
use crate::observables::Violations;
use crate::stats::{increment_stats, ks_statistic, moments, EnsembleSummary};
use crate::theory::{
    clt_variance, drifted_max_cdf, half_normal_scaled_cdf, integrate, normal_cdf,
    profile_limit_cdf, qvar_integrand_n, qvar_integrand_x, symdiff_limit_cdf,
    symdiff_limit_density, MEAN_RATE, N_QVAR, X_QVAR, Z0,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Skips the million-step ensembles and the Brownian path oracle.
    Quick,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Oracle,
    Invariants,
    Distributional,
}

impl Suite {
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::All => (1..=13).collect(),
            Suite::Oracle => vec![12],
            Suite::Invariants => vec![6, 8, 9, 10, 11, 13],
            Suite::Distributional => vec![1, 2, 3, 4, 5, 7],
        }
    }
}

macro_rules! text_enum {
    ($t:ty, $($v:ident => $s:literal),*) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = ConfigError;
            fn from_str(s: &str) -> Result<Self, ConfigError> {
                match s {
                    $($s => Ok(Self::$v),)*
                    _ => Err(ConfigError::Plan(format!("unknown value `{s}`"))),
                }
            }
        }
    };
}
text_enum!(Scale, Quick => "quick", Full => "full");
text_enum!(Suite, All => "all", Oracle => "oracle", Invariants => "invariants", Distributional => "distributional");

/// What to verify: the numbered criteria to run, at which scale, from which seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyPlan {
    pub seed: u64,
    pub scale: Scale,
    pub criteria: Vec<u8>,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

impl VerifyPlan {
    pub fn new(seed: u64, scale: Scale, suite: Suite) -> Self {
        Self {
            seed,
            scale,
            criteria: suite.criteria(),
            jobs: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "skipped(scale)")]
    SkippedScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub criterion: u8,
    pub name: String,
    pub status: CheckStatus,
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub runtime_s: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub seed: u64,
    pub scale: Scale,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    /// Checks belonging to one criterion.
    pub fn criterion(&self, c: u8) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(move |r| r.criterion == c)
    }
}

const MID_STEPS: u64 = 100_000;
const MID_REPLICATES: u64 = 2000;
const MEAN_REPLICATES: usize = 500;
const BIG_STEPS: u64 = 1_000_000;
const BIG_REPLICATES: u64 = 2000;
const PROFILE_REPLICATES: usize = 1000;
const PROFILE_OFFSETS: [f64; 3] = [-2.0, 0.0, 2.0];
const DRIFT_LEVELS: [f64; 3] = [0.3, Z0, 0.8];
const DRIFT_DRAWS: u64 = 1_000_000;
const PAIR_STEPS: u64 = 10_000;
const PAIRS: u64 = 100;

fn pair_levels() -> Vec<f64> {
    vec![0.25, 0.5, Z0 - 0.01, Z0, Z0 + 0.01, 0.75, 0.9]
}

fn oracle_levels() -> Vec<f64> {
    vec![0.25, Z0 - 0.01, Z0, Z0 + 0.01, 0.9]
}

struct Runner<'a> {
    plan: &'a VerifyPlan,
    pool: rayon::ThreadPool,
    mid: Option<EnsembleSummary>,
    big: Option<EnsembleSummary>,
    out: Vec<CheckResult>,
}

impl Runner<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        criterion: u8,
        name: &str,
        measured: f64,
        tolerance: f64,
        pass: bool,
        started: Instant,
        detail: String,
    ) -> Result<()> {
        if !measured.is_finite() {
            return Err(Error::NonFinite(format!("{name}.measured")));
        }
        self.out.push(CheckResult {
            criterion,
            name: name.to_string(),
            status: if pass {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            measured: Some(measured),
            tolerance,
            runtime_s: started.elapsed().as_secs_f64(),
            detail,
        });
        Ok(())
    }

    fn skip(&mut self, criterion: u8, name: &str, tolerance: f64, why: &str) {
        self.out.push(CheckResult {
            criterion,
            name: name.to_string(),
            status: CheckStatus::SkippedScale,
            measured: None,
            tolerance,
            runtime_s: 0.0,
            detail: why.to_string(),
        });
    }

    /// `n = 1e5`, 2000 replicates, size pool at `n/2` and `n`.
    fn mid(&mut self) -> Result<&EnsembleSummary> {
        if self.mid.is_none() {
            let base = RunConfig::new(MID_STEPS, self.plan.seed)
                .with_checkpoints(vec![MID_STEPS / 2, MID_STEPS]);
            let plan = ExperimentPlan::new(base, MID_REPLICATES).with_pools(vec![PoolSpec::Size]);
            self.mid = Some(run_ensemble(&plan, self.plan.jobs)?);
        }
        Ok(self.mid.as_ref().unwrap())
    }

    /// `n = 1e6`, 2000 replicates, `L`, `R`, `L+R` and profile pools at `n`.
    fn big(&mut self) -> Result<&EnsembleSummary> {
        if self.big.is_none() {
            let mut pools = vec![PoolSpec::L, PoolSpec::R, PoolSpec::Symdiff];
            pools.extend(PROFILE_OFFSETS.iter().map(|&y| PoolSpec::Profile(y)));
            let base = RunConfig::new(BIG_STEPS, self.plan.seed.wrapping_add(1));
            let plan = ExperimentPlan::new(base, BIG_REPLICATES).with_pools(pools);
            self.big = Some(run_ensemble(&plan, self.plan.jobs)?);
        }
        Ok(self.big.as_ref().unwrap())
    }

    fn full_only(&mut self, criterion: u8, names: &[(&str, f64)]) -> bool {
        if self.plan.scale == Scale::Full {
            return false;
        }
        for (n, tol) in names {
            self.skip(
                criterion,
                n,
                *tol,
                "needs n = 1e6 ensembles; run with --scale full",
            );
        }
        true
    }

    fn run(&mut self, criterion: u8) -> Result<()> {
        let t = Instant::now();
        let seed = self.plan.seed;
        match criterion {
            1 => {
                let pool = &self.mid()?.pool("size", MID_STEPS)?[..MEAN_REPLICATES];
                // pool holds (s - n/e)/sqrt(n)
                let (mean, _, _) = moments(pool)?;
                let rate = MEAN_RATE + mean / (MID_STEPS as f64).sqrt();
                let dev = (rate - MEAN_RATE).abs();
                self.push(
                    1,
                    "mean-size",
                    dev,
                    0.005,
                    dev <= 0.005,
                    t,
                    format!("mean s(1,n)/n = {rate:.6}, n = {MID_STEPS}, R = {MEAN_REPLICATES}"),
                )?;
            }
            2 => {
                let (_, var, _) = moments(self.mid()?.pool("size", MID_STEPS)?)?;
                let rel = var / clt_variance() - 1.0;
                self.push(
                    2,
                    "clt-variance",
                    rel.abs(),
                    0.15,
                    rel.abs() <= 0.15,
                    t,
                    format!("Var/n = {var:.6}, limit {:.6}", clt_variance()),
                )?;
            }
            3 => {
                let mid = self.mid()?;
                let inc = increment_stats(
                    mid.pool("size", MID_STEPS / 2)?,
                    mid.pool("size", MID_STEPS)?,
                )?;
                let expect = 0.5 * clt_variance();
                let rel = inc.increment_variance / expect - 1.0;
                self.push(
                    3,
                    "brownian-increment-variance",
                    rel.abs(),
                    0.20,
                    rel.abs() <= 0.20,
                    t,
                    format!(
                        "Var(f(1)-f(1/2)) = {:.6}, limit {expect:.6}",
                        inc.increment_variance
                    ),
                )?;
                let t = Instant::now();
                self.push(
                    3,
                    "brownian-increment-covariance",
                    inc.covariance.abs(),
                    0.01,
                    inc.covariance.abs() <= 0.01,
                    t,
                    format!("Cov(f(1/2), f(1)-f(1/2)) = {:.6}", inc.covariance),
                )?;
            }
            4 => {
                if self.full_only(4, &[("l-limit-law", 0.05), ("r-limit-law", 0.05)]) {
                    return Ok(());
                }
                for (name, pool) in [("l-limit-law", "L"), ("r-limit-law", "R")] {
                    let t = Instant::now();
                    let d =
                        ks_statistic(self.big()?.pool(pool, BIG_STEPS)?, half_normal_scaled_cdf)?;
                    self.push(4, name, d, 0.05, d <= 0.05, t, format!("KS({pool}/sqrt(n), half-normal), n = {BIG_STEPS}, R = {BIG_REPLICATES}"))?;
                }
            }
            5 => {
                if self.full_only(5, &[("symdiff-limit-law", 0.05)]) {
                    return Ok(());
                }
                let d = ks_statistic(self.big()?.pool("symdiff", BIG_STEPS)?, symdiff_limit_cdf)?;
                self.push(
                    5,
                    "symdiff-limit-law",
                    d,
                    0.05,
                    d <= 0.05,
                    t,
                    format!("KS((L+R)/sqrt(n)), n = {BIG_STEPS}, R = {BIG_REPLICATES}"),
                )?;
            }
            6 => {
                let (v, paths) = self.invariant_paths()?;
                self.push(
                    6,
                    "exclusion",
                    v.exclusion as f64,
                    0.0,
                    v.exclusion == 0,
                    t,
                    format!("{paths} paths"),
                )?;
            }
            7 => {
                let mut names: Vec<(String, f64)> = PROFILE_OFFSETS
                    .iter()
                    .map(|y| (format!("profile-limit-law-y={y}"), 0.06))
                    .collect();
                names.push(("drifted-max-path-oracle".into(), 0.01));
                let refs: Vec<(&str, f64)> = names.iter().map(|(n, t)| (n.as_str(), *t)).collect();
                if self.full_only(7, &refs) {
                    return Ok(());
                }
                let mus: Vec<f64> = [1.0]
                    .into_iter()
                    .chain(
                        PROFILE_OFFSETS
                            .iter()
                            .map(|y| y * std::f64::consts::E / std::f64::consts::SQRT_2),
                    )
                    .collect();
                let levels = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0];
                let grid = self
                    .pool
                    .install(|| drifted_max_path_oracle(seed, 100_000, 10_000, &mus, &levels));
                let diff = grid.max_abs_diff();
                self.push(7, "drifted-max-path-oracle", diff, 0.01, diff <= 0.01, t, format!("max |empirical - closed form| over mu in {mus:?}, a in {levels:?}; P(sup(B+s) <= 1): {:.4} vs {:.4}", grid.empirical[0][2], drifted_max_cdf(1.0, 1.0)))?;
                for y in PROFILE_OFFSETS {
                    let t = Instant::now();
                    let pool = &self.big()?.pool(&PoolSpec::Profile(y).name(), BIG_STEPS)?
                        [..PROFILE_REPLICATES];
                    let d = ks_statistic(pool, |x| profile_limit_cdf(x, y))?;
                    self.push(7, &format!("profile-limit-law-y={y}"), d, 0.06, d <= 0.06, t, format!("KS(s(z0 + y/sqrt(n), n)/sqrt(n)), n = {BIG_STEPS}, R = {PROFILE_REPLICATES}"))?;
                }
            }
            8 => {
                for z in DRIFT_LEVELS {
                    let t = Instant::now();
                    let d = drift_check(seed, z, 1000, DRIFT_DRAWS)?;
                    let dev = d.deviation();
                    let name = if z == Z0 {
                        "drift-z0".to_string()
                    } else {
                        format!("drift-z={z}")
                    };
                    let mut pass = dev <= 3.0;
                    if z == Z0 {
                        pass &= d.mean.abs() <= 3.0 * d.std_error;
                    }
                    self.push(8, &name, dev, 3.0, pass, t, format!("mean increment {:.6} +- {:.6} (1 s.e.), drift {:.6}, frozen at step {}, K = {}", d.mean, d.std_error, d.expected, d.frozen_at, d.draws))?;
                }
            }
            9 => {
                let q = qvar_check(seed, 100_000)?;
                let rx = (q.x_rate / X_QVAR - 1.0).abs();
                self.push(
                    9,
                    "x-qvar",
                    rx,
                    0.05,
                    rx <= 0.05,
                    t,
                    format!("V_n/n = {:.5}, limit {X_QVAR}", q.x_rate),
                )?;
                let rn = (q.n_rate / N_QVAR - 1.0).abs();
                self.push(
                    9,
                    "n-qvar",
                    rn,
                    0.05,
                    rn <= 0.05,
                    t,
                    format!("V_n/n = {:.5}, limit {N_QVAR:.5}", q.n_rate),
                )?;
            }
            10 => {
                let (v, paths) = self.invariant_paths()?;
                self.push(
                    10,
                    "sandwich",
                    v.sandwich as f64,
                    0.0,
                    v.sandwich == 0,
                    t,
                    format!("{paths} paths, levels {:?}", pair_levels()),
                )?;
            }
            11 => {
                let levels = pair_levels();
                let c = self
                    .pool
                    .install(|| coupling_check(seed, PAIRS, PAIR_STEPS, &levels, 100))?;
                self.push(
                    11,
                    "coupling",
                    c.violations as f64,
                    0.0,
                    c.violations == 0,
                    t,
                    format!(
                        "{} pairs, {} count checks, {} containment checks{}",
                        c.pairs,
                        c.count_checks,
                        c.containment_checks,
                        c.first_violation
                            .map(|v| format!("; {v}"))
                            .unwrap_or_default()
                    ),
                )?;
                let t = Instant::now();
                let l = self
                    .pool
                    .install(|| lipschitz_check(seed, PAIRS, PAIR_STEPS, &levels))?;
                self.push(
                    11,
                    "lipschitz",
                    l.violations as f64,
                    0.0,
                    l.violations == 0,
                    t,
                    format!(
                        "{} pairs, {} checks, max |delta s| = {}",
                        l.pairs, l.checks, l.max_delta
                    ),
                )?;
            }
            12 => {
                let o = self.pool.install(|| {
                    oracle_equivalence(seed, PAIRS, PAIR_STEPS, &oracle_levels(), 500)
                })?;
                self.push(
                    12,
                    "oracle-equivalence",
                    o.mismatches as f64,
                    0.0,
                    o.mismatches == 0,
                    t,
                    format!(
                        "{} runs, {} records{}",
                        o.runs,
                        o.records,
                        o.first_mismatch
                            .map(|m| format!("; {m}"))
                            .unwrap_or_default()
                    ),
                )?;
            }
            13 => self.theory()?,
            other => return Err(ConfigError::Plan(format!("no criterion {other}")).into()),
        }
        Ok(())
    }

    /// Violation counts over a dedicated set of paths plus any ensembles
    /// already run by this invocation.
    fn invariant_paths(&mut self) -> Result<(Violations, u64)> {
        let reps = match self.plan.scale {
            Scale::Quick => 20,
            Scale::Full => 200,
        };
        let base = RunConfig::new(MID_STEPS, self.plan.seed.wrapping_add(2))
            .with_thresholds(pair_levels());
        let own = run_ensemble(&ExperimentPlan::new(base, reps), self.plan.jobs)?;
        let mut v = own.violations;
        let mut paths = own.replicates;
        for e in [&self.mid, &self.big].into_iter().flatten() {
            v.sandwich += e.violations.sandwich;
            v.exclusion += e.violations.exclusion;
            paths += e.replicates;
        }
        Ok((v, paths))
    }

    fn theory(&mut self) -> Result<()> {
        let t = Instant::now();
        let fx = integrate(|x| qvar_integrand_x(x).unwrap() / (1.0 - x), 0.0, Z0, 1e-13);
        let d = (fx - X_QVAR).abs();
        self.push(
            13,
            "theory-x-qvar-integral",
            d,
            1e-8,
            d <= 1e-8,
            t,
            format!("integral = {fx:.12}"),
        )?;
        let t = Instant::now();
        let fnn = integrate(|x| qvar_integrand_n(x).unwrap() / (1.0 - x), 0.0, Z0, 1e-13);
        let d = (fnn - N_QVAR).abs();
        self.push(
            13,
            "theory-n-qvar-integral",
            d,
            1e-8,
            d <= 1e-8,
            t,
            format!("integral = {fnn:.12}"),
        )?;
        let t = Instant::now();
        // density is negligible beyond x = 6 (e^2 x^2 / 4 > 66)
        let mass = integrate(symdiff_limit_density, 0.0, 6.0, 1e-13);
        let tail = 1.0 - symdiff_limit_cdf(6.0);
        let d = (mass + tail - 1.0).abs();
        self.push(
            13,
            "theory-symdiff-normalization",
            d,
            1e-8,
            d <= 1e-8,
            t,
            format!("integral over [0,6] = {mass:.12}"),
        )?;
        let t = Instant::now();
        let d = (0..=400)
            .map(|i| i as f64 * 0.02)
            .map(|a| (drifted_max_cdf(a, 0.0) - (2.0 * normal_cdf(a) - 1.0)).abs())
            .fold(0.0, f64::max);
        self.push(
            13,
            "theory-drifted-max-mu0",
            d,
            1e-10,
            d <= 1e-10,
            t,
            "max over a in [0, 8]".into(),
        )?;
        Ok(())
    }
}

/// Runs the planned criteria in increasing order and collects the report.
/// An empty plan gives an empty, passing report.
pub fn verify(plan: &VerifyPlan) -> Result<VerifyReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| ConfigError::Plan(format!("cannot start worker pool: {e}")))?;
    let mut criteria = plan.criteria.clone();
    criteria.sort_unstable();
    criteria.dedup();
    let mut runner = Runner {
        plan,
        pool,
        mid: None,
        big: None,
        out: Vec::new(),
    };
    // ensemble criteria first, so the invariant checks also cover their paths
    let (ens, rest): (Vec<u8>, Vec<u8>) = criteria
        .iter()
        .partition(|c| [1, 2, 3, 4, 5, 7].contains(*c));
    for c in ens.into_iter().chain(rest) {
        runner.run(c)?;
    }
    let mut checks = runner.out;
    checks.sort_by_key(|c| c.criterion);
    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    Ok(VerifyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: plan.seed,
        scale: plan.scale,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_is_an_empty_success() {
        let plan = VerifyPlan {
            seed: 1,
            scale: Scale::Quick,
            criteria: vec![],
            jobs: 1,
        };
        let r = verify(&plan).unwrap();
        assert!(r.checks.is_empty());
        assert!(r.passed);
    }

    #[test]
    fn quick_scale_skips_large_ensembles() {
        let plan = VerifyPlan {
            seed: 1,
            scale: Scale::Quick,
            criteria: vec![4, 5, 13],
            jobs: 1,
        };
        let r = verify(&plan).unwrap();
        assert!(r.passed);
        assert_eq!(r.criterion(4).count(), 2);
        assert!(r
            .criterion(4)
            .all(|c| c.status == CheckStatus::SkippedScale));
        assert!(r.criterion(13).all(|c| c.status == CheckStatus::Pass));
    }

    #[test]
    fn names_parse() {
        assert_eq!("quick".parse::<Scale>().unwrap(), Scale::Quick);
        assert_eq!("invariants".parse::<Suite>().unwrap(), Suite::Invariants);
        assert!("everything".parse::<Suite>().is_err());
        assert_eq!(Suite::Oracle.to_string(), "oracle");
    }
}
