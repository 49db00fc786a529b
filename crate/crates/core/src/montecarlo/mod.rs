//! Replicate orchestration: every replicate `i` of a plan runs the base
//! configuration on stream `(seed, i)`, replicates execute on a rayon pool,
//! and per-replicate summaries are merged in replicate order so the result
//! does not depend on the number of workers.

mod checks;
mod verify;

pub use checks::{
    coupling_check, drift_check, drifted_max_path_oracle, lipschitz_check, oracle_equivalence,
    qvar_check, CouplingOutcome, DriftOutcome, LipschitzOutcome, OracleOutcome, PathOracleGrid,
};
pub use verify::{verify, CheckResult, CheckStatus, Scale, Suite, VerifyPlan, VerifyReport};

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{drive, uniform_stream, ProcessState, RunConfig};
use crate::error::{ConfigError, Error, Result};
use crate::observables::{ObservableRecord, Observables};
use crate::stats::{ks_statistic, pool_key, EnsembleSummary, Moments};
use crate::theory::{
    clt_variance, half_normal_scaled_cdf, normal_cdf, profile_limit_cdf, symdiff_limit_cdf, N_QVAR,
    Z0,
};

/// A per-replicate scalar collected into a sample pool. All pools are scaled
/// by `1/sqrt(n)` with `n` the run length, so a pool read at checkpoint `tn`
/// approximates the limit process at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PoolSpec {
    /// `L`
    L,
    /// `R`
    R,
    /// `L + R`
    Symdiff,
    /// `s(1,k) - k/e`
    Size,
    /// `s(z0 + y/sqrt(n), k)`
    Profile(f64),
    /// `N`
    N,
}

impl PoolSpec {
    pub fn name(&self) -> String {
        match self {
            PoolSpec::L => "L".into(),
            PoolSpec::R => "R".into(),
            PoolSpec::Symdiff => "symdiff".into(),
            PoolSpec::Size => "size".into(),
            PoolSpec::Profile(y) => format!("profile:{y}"),
            PoolSpec::N => "N".into(),
        }
    }

    /// Extra threshold this pool needs tracked in a run of `steps` steps.
    pub fn threshold(&self, steps: u64) -> Option<f64> {
        match *self {
            PoolSpec::Profile(y) => Some(profile_level(y, steps)),
            _ => None,
        }
    }

    fn value(&self, rec: &ObservableRecord, steps: u64) -> f64 {
        let root = (steps as f64).sqrt();
        let raw = match *self {
            PoolSpec::L => rec.l as f64,
            PoolSpec::R => rec.r as f64,
            PoolSpec::Symdiff => (rec.l + rec.r) as f64,
            PoolSpec::Size => rec.s_total as f64 - rec.n as f64 * (-1.0f64).exp(),
            PoolSpec::Profile(y) => {
                let z = profile_level(y, steps);
                rec.level(z).expect("profile level tracked").s as f64
            }
            PoolSpec::N => rec.n_martingale,
        };
        raw / root
    }

    /// Limit CDF of the pool read at time `t = k/n`, where one is known.
    pub fn limit_cdf(&self, t: f64) -> Option<Box<dyn Fn(f64) -> f64>> {
        if t.is_nan() || t <= 0.0 {
            return None;
        }
        let st = t.sqrt();
        match *self {
            PoolSpec::L | PoolSpec::R => Some(Box::new(move |x| half_normal_scaled_cdf(x / st))),
            PoolSpec::Symdiff => Some(Box::new(move |x| symdiff_limit_cdf(x / st))),
            PoolSpec::Size => {
                let sd = (clt_variance() * t).sqrt();
                Some(Box::new(move |x| normal_cdf(x / sd)))
            }
            PoolSpec::N => {
                let sd = (N_QVAR * t).sqrt();
                Some(Box::new(move |x| normal_cdf(x / sd)))
            }
            // only the t = 1 marginal is implemented
            PoolSpec::Profile(y) if t == 1.0 => Some(Box::new(move |x| profile_limit_cdf(x, y))),
            PoolSpec::Profile(_) => None,
        }
    }
}

impl fmt::Display for PoolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PoolSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        Ok(match s {
            "L" => PoolSpec::L,
            "R" => PoolSpec::R,
            "symdiff" => PoolSpec::Symdiff,
            "size" => PoolSpec::Size,
            "N" => PoolSpec::N,
            _ => {
                let y = s
                    .strip_prefix("profile:")
                    .and_then(|y| y.parse::<f64>().ok())
                    .filter(|y| y.is_finite())
                    .ok_or_else(|| ConfigError::Plan(format!("unknown pool `{s}`")))?;
                PoolSpec::Profile(y)
            }
        })
    }
}

/// Threshold `z0 + y/sqrt(n)`.
pub fn profile_level(y: f64, steps: u64) -> f64 {
    Z0 + y / (steps as f64).sqrt()
}

/// An ensemble: `replicates` copies of `base`, replicate `i` on stream
/// `(base.seed, i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub base: RunConfig,
    pub replicates: u64,
    pub pools: Vec<PoolSpec>,
}

impl ExperimentPlan {
    pub fn new(base: RunConfig, replicates: u64) -> Self {
        Self {
            base,
            replicates,
            pools: Vec::new(),
        }
    }

    pub fn with_pools(mut self, pools: Vec<PoolSpec>) -> Self {
        self.pools = pools;
        self
    }

    /// The per-replicate configuration, with the thresholds the pools need.
    pub fn replicate_config(&self, index: u64) -> RunConfig {
        let mut cfg = self.base.clone().with_replicate(index);
        for p in &self.pools {
            if let Some(z) = p.threshold(cfg.steps) {
                if !cfg.thresholds.contains(&z) {
                    cfg.thresholds.push(z);
                }
            }
        }
        cfg.thresholds.sort_by(f64::total_cmp);
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicates == 0 {
            return Err(ConfigError::NoReplicates);
        }
        for p in &self.pools {
            if let Some(z) = p.threshold(self.base.steps) {
                if !(z > 0.0 && z < 1.0) {
                    return Err(ConfigError::ThresholdOutOfRange(z));
                }
            }
        }
        if self.pools.iter().any(|p| matches!(p, PoolSpec::Profile(_))) && self.base.steps == 0 {
            return Err(ConfigError::Plan(
                "profile pools need at least one step".into(),
            ));
        }
        self.replicate_config(0).validate()
    }
}

/// Scalars summarized at every checkpoint.
fn record_scalars(rec: &ObservableRecord) -> Vec<(String, f64)> {
    let mut out = vec![
        ("s_total".to_string(), rec.s_total as f64),
        ("L".to_string(), rec.l as f64),
        ("R".to_string(), rec.r as f64),
        ("N".to_string(), rec.n_martingale),
    ];
    if let Some(m) = rec.min_value {
        out.push(("min_value".to_string(), m));
    }
    for lv in &rec.levels {
        out.push((format!("s@{}", lv.level), lv.s as f64));
        out.push((format!("W@{}", lv.level), lv.w));
        out.push((format!("X@{}", lv.level), lv.x));
    }
    out
}

/// Runs one replicate and summarizes it on its own.
pub fn replicate_summary(
    plan: &ExperimentPlan,
    index: u64,
) -> Result<EnsembleSummary, ConfigError> {
    let cfg = plan.replicate_config(index);
    cfg.validate()?;
    let state = ProcessState::new(&cfg.initial_set)?;
    let obs = Observables::new(&cfg.thresholds, &state)?;
    let stream = uniform_stream(cfg.seed, cfg.replicate_index);
    let (records, _, obs) = drive(state, obs, stream, cfg.steps, &cfg.checkpoints);

    let mut summary = EnsembleSummary::empty(cfg.steps, &cfg.checkpoints);
    summary.replicates = 1;
    summary.violations = obs.violations();
    for (cp, rec) in summary.per_checkpoint.iter_mut().zip(&records) {
        cp.scalars = record_scalars(rec)
            .into_iter()
            .map(|(k, v)| (k, Moments::from_slice(&[v])))
            .collect::<BTreeMap<_, _>>();
        for p in &plan.pools {
            summary
                .pools
                .insert(pool_key(&p.name(), rec.n), vec![p.value(rec, cfg.steps)]);
        }
    }
    Ok(summary)
}

/// Runs every replicate of `plan` on up to `jobs` worker threads (`0` means
/// one per core). A replicate that panics is retried once; if it fails again
/// the whole run is aborted with a report of what completed.
pub fn run_ensemble(plan: &ExperimentPlan, jobs: usize) -> Result<EnsembleSummary> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ConfigError::Plan(format!("cannot start worker pool: {e}")))?;

    let attempt = |i: u64| catch_unwind(AssertUnwindSafe(|| replicate_summary(plan, i)));
    let results: Vec<Option<EnsembleSummary>> = pool.install(|| {
        (0..plan.replicates)
            .into_par_iter()
            .map(|i| match attempt(i).or_else(|_| attempt(i)) {
                Ok(Ok(s)) => Some(s),
                _ => None,
            })
            .collect()
    });

    let failed: Vec<u64> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(i, _)| i as u64)
        .collect();
    if let Some(&first) = failed.first() {
        return Err(Error::ReplicateFailure {
            failed: failed.len(),
            total: results.len(),
            first,
            completed: results.len() - failed.len(),
        });
    }

    let cfg = plan.replicate_config(0);
    let mut total = EnsembleSummary::empty(cfg.steps, &cfg.checkpoints);
    for s in results.into_iter().flatten() {
        total.absorb(&s)?;
    }
    Ok(total)
}

/// Kolmogorov-Smirnov distance of one pool at one checkpoint to its limit law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub pool: String,
    pub checkpoint: u64,
    pub samples: u64,
    pub statistic: f64,
}

/// KS distances for every pool and checkpoint with a known limit law.
pub fn ks_results(plan: &ExperimentPlan, summary: &EnsembleSummary) -> Result<Vec<KsResult>> {
    let mut out = Vec::new();
    let n = summary.n_steps;
    for p in &plan.pools {
        for cp in &summary.per_checkpoint {
            let t = if n == 0 { 0.0 } else { cp.n as f64 / n as f64 };
            if let Some(cdf) = p.limit_cdf(t) {
                let samples = summary.pool(&p.name(), cp.n)?;
                out.push(KsResult {
                    pool: p.name(),
                    checkpoint: cp.n,
                    samples: samples.len() as u64,
                    statistic: ks_statistic(samples, cdf)?,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(steps: u64, reps: u64) -> ExperimentPlan {
        ExperimentPlan::new(
            RunConfig::new(steps, 9).with_checkpoints(vec![steps / 2, steps]),
            reps,
        )
        .with_pools(vec![PoolSpec::L, PoolSpec::Size, PoolSpec::Profile(1.0)])
    }

    #[test]
    fn pool_names_round_trip() {
        for p in [
            PoolSpec::L,
            PoolSpec::R,
            PoolSpec::Symdiff,
            PoolSpec::Size,
            PoolSpec::N,
            PoolSpec::Profile(-2.0),
            PoolSpec::Profile(0.5),
        ] {
            assert_eq!(p.name().parse::<PoolSpec>().unwrap(), p);
        }
        assert!("bogus".parse::<PoolSpec>().is_err());
        assert!("profile:x".parse::<PoolSpec>().is_err());
    }

    #[test]
    fn single_replicate_matches_its_path() {
        let p = plan(2000, 1);
        let s = run_ensemble(&p, 1).unwrap();
        let recs = crate::engine::run_path(&p.replicate_config(0)).unwrap();
        let last = recs.last().unwrap();
        assert_eq!(s.replicates, 1);
        assert_eq!(s.scalar(2000, "s_total").unwrap().mean, last.s_total as f64);
        assert_eq!(
            s.pool("L", 2000).unwrap(),
            &[last.l as f64 / 2000f64.sqrt()]
        );
    }

    #[test]
    fn worker_count_does_not_change_the_summary() {
        let p = plan(3000, 12);
        let a = run_ensemble(&p, 1).unwrap();
        let b = run_ensemble(&p, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_replicates_rejected() {
        assert!(matches!(
            run_ensemble(&plan(10, 0), 1),
            Err(Error::Config(ConfigError::NoReplicates))
        ));
    }

    #[test]
    fn profile_threshold_is_tracked() {
        let p = plan(400, 1);
        assert!(p
            .replicate_config(0)
            .thresholds
            .contains(&profile_level(1.0, 400)));
    }
}
