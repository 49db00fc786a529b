//! Moments, empirical CDF distances, and mergeable ensemble summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::StatsError;
use crate::observables::Violations;

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi.abs()).max(lo.abs());
    }
    Ok(d)
}

/// Single-pass count, mean, sum of squared deviations, min and max.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Moments {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Moments {
    pub fn from_slice(samples: &[f64]) -> Self {
        let mut m = Self::default();
        for &x in samples {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Combines two accumulators as if all samples had been pushed into one.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        Self {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Result<f64, StatsError> {
        match self.count {
            0 => Err(StatsError::Empty),
            1 => Err(StatsError::SingleSample),
            c => Ok(self.m2 / (c - 1) as f64),
        }
    }

    pub fn std_error(&self) -> Result<f64, StatsError> {
        Ok((self.variance()? / self.count as f64).sqrt())
    }
}

/// `(mean, variance, count)` of a sample.
pub fn moments(samples: &[f64]) -> Result<(f64, f64, u64), StatsError> {
    let m = Moments::from_slice(samples);
    Ok((m.mean, m.variance()?, m.count))
}

/// Unbiased sample covariance of paired samples.
pub fn covariance(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    match a.len() {
        0 => return Err(StatsError::Empty),
        1 => return Err(StatsError::SingleSample),
        _ => {}
    }
    let n = a.len() as f64;
    let (mut ma, mut mb, mut c) = (0.0, 0.0, 0.0);
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let k = (i + 1) as f64;
        let dx = x - ma;
        ma += dx / k;
        mb += (y - mb) / k;
        c += dx * (y - mb);
    }
    Ok(c / (n - 1.0))
}

/// Covariance of `f(t1)` with the increment `f(t2) - f(t1)`, plus the
/// increment's variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IncrementStats {
    pub covariance: f64,
    pub increment_variance: f64,
    pub samples: u64,
}

/// `early[i]` and `late[i]` are the same replicate observed at `t1 < t2`.
pub fn increment_stats(early: &[f64], late: &[f64]) -> Result<IncrementStats, StatsError> {
    if early.len() != late.len() {
        return Err(StatsError::LengthMismatch(early.len(), late.len()));
    }
    let incr: Vec<f64> = late.iter().zip(early).map(|(b, a)| b - a).collect();
    Ok(IncrementStats {
        covariance: covariance(early, &incr)?,
        increment_variance: Moments::from_slice(&incr).variance()?,
        samples: early.len() as u64,
    })
}

/// Key of a sample pool: scalar name and the checkpoint it was read at.
pub fn pool_key(name: &str, checkpoint: u64) -> String {
    format!("{name}@{checkpoint}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub n: u64,
    pub scalars: BTreeMap<String, Moments>,
}

/// Aggregate over replicates. Pools hold one value per replicate, in
/// replicate order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_steps: u64,
    pub replicates: u64,
    pub per_checkpoint: Vec<CheckpointSummary>,
    pub pools: BTreeMap<String, Vec<f64>>,
    pub violations: Violations,
}

impl EnsembleSummary {
    pub fn empty(n_steps: u64, checkpoints: &[u64]) -> Self {
        Self {
            n_steps,
            replicates: 0,
            per_checkpoint: checkpoints
                .iter()
                .map(|&n| CheckpointSummary {
                    n,
                    scalars: BTreeMap::new(),
                })
                .collect(),
            pools: BTreeMap::new(),
            violations: Violations::default(),
        }
    }

    /// Summary of the concatenation `self ++ other`.
    pub fn merge(&self, other: &Self) -> Result<Self, StatsError> {
        let mut out = self.clone();
        out.absorb(other)?;
        Ok(out)
    }

    /// In-place [`merge`](Self::merge): appends `other`'s replicates.
    pub fn absorb(&mut self, other: &Self) -> Result<(), StatsError> {
        let cps = |s: &Self| s.per_checkpoint.iter().map(|c| c.n).collect::<Vec<_>>();
        if self.n_steps != other.n_steps || cps(self) != cps(other) {
            let missing = cps(other)
                .into_iter()
                .find(|n| !cps(self).contains(n))
                .or_else(|| cps(self).into_iter().find(|n| !cps(other).contains(n)))
                .unwrap_or(other.n_steps);
            return Err(StatsError::MissingCheckpoint(missing));
        }
        for (a, b) in self.per_checkpoint.iter_mut().zip(&other.per_checkpoint) {
            for (k, m) in &b.scalars {
                match a.scalars.get_mut(k) {
                    Some(x) => *x = x.merge(m),
                    None => {
                        a.scalars.insert(k.clone(), *m);
                    }
                }
            }
        }
        for (k, v) in &other.pools {
            self.pools
                .entry(k.clone())
                .or_default()
                .extend_from_slice(v);
        }
        self.replicates += other.replicates;
        self.violations.sandwich += other.violations.sandwich;
        self.violations.exclusion += other.violations.exclusion;
        Ok(())
    }

    pub fn pool(&self, name: &str, checkpoint: u64) -> Result<&[f64], StatsError> {
        self.pools
            .get(&pool_key(name, checkpoint))
            .map(Vec::as_slice)
            .ok_or(StatsError::MissingCheckpoint(checkpoint))
    }

    pub fn scalar(&self, checkpoint: u64, name: &str) -> Option<&Moments> {
        self.per_checkpoint
            .iter()
            .find(|c| c.n == checkpoint)
            .and_then(|c| c.scalars.get(name))
    }

    /// Increment statistics of pool `name` between checkpoints `t1 < t2`.
    pub fn increment_covariance(
        &self,
        name: &str,
        t1: u64,
        t2: u64,
    ) -> Result<IncrementStats, StatsError> {
        increment_stats(self.pool(name, t1)?, self.pool(name, t2)?)
    }
}
