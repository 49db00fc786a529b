//! Statistics maintained step by step alongside the engine.
//!
//! For every tracked level `z` (always including the critical point
//! `z0 = 1 - 1/e`):
//!
//! * `s(z,n)`: number of retained elements strictly below `z`;
//! * `W(z,n)`: sum of `1/(1-x)` over those elements;
//! * `Z(z,n)`: sum of `W(z,k)` over the steps `k` at which `S(z,k-1)` was empty;
//! * `X(z,n) = W(z,n) - Z(z,n)`;
//! * `M(z,n)`: number of steps whose pre-step minimum was at least `z`;
//! * `E(z,n)`: number of arrivals at or above `z`.
//!
//! Globally: the memory size, `L = s(z0,n)`, `R` (arrivals at or above `z0`
//! that have since been evicted), and `N = X(z0,n) + e E(z0,n) - n`.

use serde::{Deserialize, Serialize};

use crate::engine::{ProcessState, StepEffect};
use crate::error::ConfigError;
use crate::theory::{qvar_integrand_n_unchecked, qvar_integrand_x_unchecked, Z0};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }

    #[inline]
    fn reset(&mut self) {
        *self = Self::default();
    }
}

#[derive(Clone, Debug)]
struct Level {
    z: f64,
    cap: f64, // 1/(1-z), upper end of the sandwich
    s: u64,
    w: CompensatedSum,
    restart: f64,
    min_x: f64,
    m: u64,
    e: u64,
}

impl Level {
    #[inline]
    fn x(&self) -> f64 {
        self.w.value() - self.restart
    }
}

/// Per-level part of an [`ObservableRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: f64,
    /// `s(z,n)`
    pub s: u64,
    /// `W(z,n)`
    pub w: f64,
    /// `Z(z,n)`
    pub z: f64,
    /// `X(z,n) = W - Z`
    pub x: f64,
    /// `M(z,n)`
    pub m: u64,
    /// `E(z,n)`
    pub e: u64,
}

/// Snapshot of every tracked statistic at one step index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub n: u64,
    pub s_total: u64,
    /// Retained elements below `z0`.
    pub l: u64,
    /// Arrivals at or above `z0` no longer in memory.
    pub r: u64,
    /// `N = X(z0,n) + e E(z0,n) - n`.
    pub n_martingale: f64,
    pub min_value: Option<f64>,
    pub levels: Vec<LevelRecord>,
}

impl ObservableRecord {
    /// Entry for an exactly matching tracked level.
    pub fn level(&self, z: f64) -> Option<&LevelRecord> {
        self.levels.iter().find(|l| l.level == z)
    }

    pub fn z0(&self) -> &LevelRecord {
        self.level(Z0).expect("z0 is always tracked")
    }
}

/// Path-wise violation counters for the structural invariants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// Steps at which `0 <= Z + min X <= 1/(1-z)` failed at some level.
    pub sandwich: u64,
    /// Steps at which `R` increased although `L` was positive just before.
    pub exclusion: u64,
}

/// Sums of the predictable quadratic-variation integrands along the path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QvarSums {
    /// Sum of `f_X(m_k)` over steps with `m_k <= z0`.
    pub x: f64,
    /// Sum of `f_N(m_k)` over steps with `m_k <= z0`.
    pub n: f64,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct Observables {
    levels: Vec<Level>,
    z0_index: usize,
    n: u64,
    s_total: u64,
    // initial elements >= z0 still in memory; excluded from R
    initial_high: Vec<f64>,
    evicted_high_arrivals: u64,
    violations: Violations,
    qvar: Option<QvarSums>,
}

impl Observables {
    /// Sets up the levels (sorted, deduplicated, `z0` added) for a process
    /// starting in `state`.
    pub fn new(thresholds: &[f64], state: &ProcessState) -> Result<Self, ConfigError> {
        let mut zs: Vec<f64> = Vec::with_capacity(thresholds.len() + 1);
        for &z in thresholds {
            if !(z > 0.0 && z < 1.0) {
                return Err(ConfigError::ThresholdOutOfRange(z));
            }
            zs.push(z);
        }
        zs.push(Z0);
        zs.sort_by(f64::total_cmp);
        zs.dedup();
        let z0_index = zs.iter().position(|&z| z == Z0).unwrap();

        let elements = state.elements();
        let levels = zs
            .into_iter()
            .map(|z| {
                let mut w = CompensatedSum::default();
                let mut s = 0;
                for &v in elements.iter().take_while(|&&v| v < z) {
                    w.add(1.0 / (1.0 - v));
                    s += 1;
                }
                Level {
                    z,
                    cap: 1.0 / (1.0 - z),
                    s,
                    w,
                    restart: 0.0,
                    min_x: w.value(),
                    m: 0,
                    e: 0,
                }
            })
            .collect();
        let initial_high = elements.iter().copied().filter(|&v| v >= Z0).collect();
        Ok(Self {
            levels,
            z0_index,
            n: state.step_count(),
            s_total: elements.len() as u64,
            initial_high,
            evicted_high_arrivals: 0,
            violations: Violations::default(),
            qvar: None,
        })
    }

    /// Also accumulate the quadratic-variation integrands (costs two logs per step).
    pub fn with_qvar(mut self) -> Self {
        self.qvar = Some(QvarSums::default());
        self
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.z).collect()
    }

    #[inline]
    pub fn steps(&self) -> u64 {
        self.n
    }

    pub fn violations(&self) -> Violations {
        self.violations
    }

    pub fn qvar(&self) -> Option<QvarSums> {
        self.qvar
    }

    /// Current `W(z,n)` for a tracked level.
    pub fn w_at(&self, z: f64) -> Option<f64> {
        self.levels.iter().find(|l| l.z == z).map(|l| l.w.value())
    }

    pub fn s_at(&self, z: f64) -> Option<u64> {
        self.levels.iter().find(|l| l.z == z).map(|l| l.s)
    }

    /// Applies the effects of one engine step.
    #[inline]
    pub fn on_step(&mut self, effect: &StepEffect) {
        let x = effect.inserted;
        self.n += 1;
        if effect.evicted.is_none() {
            self.s_total += 1;
        }

        if let (Some(q), Some(m)) = (self.qvar.as_mut(), effect.pre_min) {
            if m <= Z0 {
                q.x += qvar_integrand_x_unchecked(m);
                q.n += qvar_integrand_n_unchecked(m);
                q.steps += 1;
            }
        }

        if let Some(m) = effect.evicted {
            if m >= Z0 {
                if let Ok(i) = self.initial_high.binary_search_by(|v| v.total_cmp(&m)) {
                    self.initial_high.remove(i);
                } else {
                    self.evicted_high_arrivals += 1;
                    if self.levels[self.z0_index].s != 0 {
                        self.violations.exclusion += 1;
                    }
                }
            }
        }

        let gain = 1.0 / (1.0 - x);
        let loss = effect.evicted.map(|m| (m, 1.0 / (1.0 - m)));
        let pre_min = effect.pre_min.unwrap_or(f64::NEG_INFINITY);
        let mut sandwich_bad = false;
        for lv in &mut self.levels {
            lv.e += (x >= lv.z) as u64;
            lv.m += (pre_min >= lv.z) as u64;
            let was_empty = lv.s == 0;
            let mut touched = false;
            if x < lv.z {
                lv.s += 1;
                lv.w.add(gain);
                touched = true;
            }
            if let Some((m, inv)) = loss {
                if m < lv.z {
                    lv.s -= 1;
                    lv.w.add(-inv);
                    touched = true;
                }
            }
            if touched {
                if lv.s == 0 {
                    lv.w.reset();
                }
                if was_empty {
                    lv.restart += lv.w.value();
                }
                let xv = lv.x();
                if xv < lv.min_x {
                    lv.min_x = xv;
                }
                let gap = lv.restart + lv.min_x;
                let tol = 1e-9 * (1.0 + lv.restart.abs() + lv.w.value().abs());
                sandwich_bad |= gap < -tol || gap > lv.cap + tol;
            }
        }
        self.violations.sandwich += sandwich_bad as u64;
    }

    /// `(L, R)` from the online counters.
    pub fn symmetric_difference(&self) -> (u64, u64) {
        let l = self.levels[self.z0_index].s;
        (l, self.evicted_high_arrivals)
    }

    /// `N = X(z0,n) + e E(z0,n) - n`.
    pub fn n_martingale(&self) -> f64 {
        let lv = &self.levels[self.z0_index];
        lv.x() + std::f64::consts::E * lv.e as f64 - self.n as f64
    }

    /// `Z(z,n) + min_{k<=n} X(z,k)` for each tracked level.
    pub fn sandwich_gaps(&self) -> Vec<(f64, f64)> {
        self.levels
            .iter()
            .map(|l| (l.z, l.restart + l.min_x))
            .collect()
    }

    /// Snapshot; the minimum is read from the engine state the observables follow.
    pub fn record(&self, state: &ProcessState) -> ObservableRecord {
        let (l, r) = self.symmetric_difference();
        ObservableRecord {
            n: self.n,
            s_total: self.s_total,
            l,
            r,
            n_martingale: self.n_martingale(),
            min_value: state.current_min(),
            levels: self
                .levels
                .iter()
                .map(|lv| LevelRecord {
                    level: lv.z,
                    s: lv.s,
                    w: lv.w.value(),
                    z: lv.restart,
                    x: lv.x(),
                    m: lv.m,
                    e: lv.e,
                })
                .collect(),
        }
    }
}

/// Exact `W(z)` summed over the container, for auditing the running sums.
pub fn recompute_w(state: &ProcessState, z: f64) -> f64 {
    state
        .elements()
        .into_iter()
        .take_while(|&v| v < z)
        .map(|v| 1.0 / (1.0 - v))
        .sum()
}
