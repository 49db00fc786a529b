//! The minimum-eviction insertion process.
//!
//! Each step inserts one value; if the value is strictly larger than the
//! current minimum, that minimum is removed first. The memory therefore never
//! shrinks, and grows by one exactly when the arrival undercuts the minimum.
//!
//! Stream consumption is part of the contract: step `k` consumes the `k`-th
//! uniform of [`uniform_stream`]`(seed, replicate_index)` and nothing else, so
//! independent implementations (see [`crate::oracle`]) can replay a run.

mod queue;
mod stream;

pub use queue::MinQueue;
pub use stream::{uniform_stream, UniformStream};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::observables::{ObservableRecord, Observables};

/// What a single step did to the memory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEffect {
    pub inserted: f64,
    pub evicted: Option<f64>,
    /// Minimum just before the arrival (`m_k`); `None` if the memory was empty.
    pub pre_min: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ProcessState {
    queue: MinQueue,
    step_count: u64,
}

impl Default for ProcessState {
    /// The standard start `{0}`.
    fn default() -> Self {
        let mut queue = MinQueue::new();
        queue.push(0.0);
        Self {
            queue,
            step_count: 0,
        }
    }
}

impl ProcessState {
    /// Starts from an arbitrary multiset of values in [0, 1).
    pub fn new(initial: &[f64]) -> Result<Self, ConfigError> {
        let mut queue = MinQueue::new();
        for &v in initial {
            queue.push(check_unit(v).map_err(|_| ConfigError::InitialOutOfRange(v))?);
        }
        Ok(Self {
            queue,
            step_count: 0,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    #[inline]
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    #[inline]
    pub fn current_min(&self) -> Option<f64> {
        self.queue.peek_min()
    }

    /// Sorted copy of the memory contents.
    pub fn elements(&self) -> Vec<f64> {
        self.queue.sorted_values()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.queue.iter()
    }

    /// The effect `step(x)` would have, without applying it.
    #[inline]
    pub fn peek_step(&self, x: f64) -> StepEffect {
        let pre_min = self.queue.peek_min();
        let evicted = pre_min.filter(|&m| x > m);
        StepEffect {
            inserted: x,
            evicted,
            pre_min,
        }
    }

    /// Inserts `x` in [0, 1). An equal minimum is not evicted.
    #[inline]
    pub fn step(&mut self, x: f64) -> StepEffect {
        debug_assert!((0.0..1.0).contains(&x), "arrival {x} outside [0,1)");
        let x = x + 0.0; // fold -0.0 into +0.0 so bit order matches value order
        let pre_min = self.queue.peek_min();
        let evicted = match pre_min {
            Some(m) if x > m => Some(self.queue.replace_min(x)),
            _ => {
                self.queue.push(x);
                None
            }
        };
        self.step_count += 1;
        StepEffect {
            inserted: x,
            evicted,
            pre_min,
        }
    }
}

fn check_unit(v: f64) -> Result<f64, ()> {
    if (0.0..1.0).contains(&v) {
        Ok(v + 0.0)
    } else {
        Err(())
    }
}

/// Parameters of one simulated path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub steps: u64,
    pub initial_set: Vec<f64>,
    pub seed: u64,
    pub replicate_index: u64,
    /// Tracked levels; `1 - 1/e` is always added.
    pub thresholds: Vec<f64>,
    pub checkpoints: Vec<u64>,
}

impl RunConfig {
    /// Default start `{0}`, no extra thresholds, a single checkpoint at the end.
    pub fn new(steps: u64, seed: u64) -> Self {
        Self {
            steps,
            initial_set: vec![0.0],
            seed,
            replicate_index: 0,
            thresholds: Vec::new(),
            checkpoints: vec![steps],
        }
    }

    pub fn with_replicate(mut self, index: u64) -> Self {
        self.replicate_index = index;
        self
    }

    pub fn with_thresholds(mut self, thresholds: Vec<f64>) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Self {
        self.initial_set = initial;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for &z in &self.thresholds {
            if !(z > 0.0 && z < 1.0) {
                return Err(ConfigError::ThresholdOutOfRange(z));
            }
        }
        for &v in &self.initial_set {
            if !(0.0..1.0).contains(&v) {
                return Err(ConfigError::InitialOutOfRange(v));
            }
        }
        validate_checkpoints(&self.checkpoints, self.steps)
    }
}

pub(crate) fn validate_checkpoints(checkpoints: &[u64], steps: u64) -> Result<(), ConfigError> {
    for w in checkpoints.windows(2) {
        if w[1] <= w[0] {
            return Err(ConfigError::CheckpointsUnsorted {
                prev: w[0],
                next: w[1],
            });
        }
    }
    if let Some(&last) = checkpoints.last() {
        if last > steps {
            return Err(ConfigError::CheckpointBeyondSteps {
                checkpoint: last,
                steps,
            });
        }
    }
    Ok(())
}

/// Runs the path described by `config` and returns one record per checkpoint.
pub fn run_path(config: &RunConfig) -> Result<Vec<ObservableRecord>, ConfigError> {
    config.validate()?;
    let state = ProcessState::new(&config.initial_set)?;
    let obs = Observables::new(&config.thresholds, &state)?;
    let values = uniform_stream(config.seed, config.replicate_index);
    let (records, _, _) = drive(state, obs, values, config.steps, &config.checkpoints);
    Ok(records)
}

/// Runs `steps` steps consuming `values` in order, emitting a record at each
/// checkpoint. Returns the final state and observables as well.
///
/// Panics if `values` runs out before `steps` arrivals.
pub fn drive<I>(
    mut state: ProcessState,
    mut obs: Observables,
    values: I,
    steps: u64,
    checkpoints: &[u64],
) -> (Vec<ObservableRecord>, ProcessState, Observables)
where
    I: IntoIterator<Item = f64>,
{
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut pending = checkpoints.iter().copied().peekable();
    let mut values = values.into_iter();
    while pending.peek() == Some(&0) {
        records.push(obs.record(&state));
        pending.next();
    }
    for k in 1..=steps {
        let x = values.next().expect("value stream exhausted");
        let effect = state.step(x);
        obs.on_step(&effect);
        while pending.peek() == Some(&k) {
            records.push(obs.record(&state));
            pending.next();
        }
    }
    (records, state, obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v: &[f64]) -> ProcessState {
        ProcessState::new(v).unwrap()
    }

    #[test]
    fn seed_element_is_evicted_by_any_positive_arrival() {
        let mut s = ProcessState::default();
        let eff = s.step(0.5);
        assert_eq!(eff.evicted, Some(0.0));
        assert_eq!(eff.pre_min, Some(0.0));
        assert_eq!(s.elements(), vec![0.5]);
    }

    #[test]
    fn arrival_below_minimum_grows_memory() {
        let mut s = state(&[0.3, 0.7]);
        let eff = s.step(0.1);
        assert_eq!(eff.evicted, None);
        assert_eq!(s.elements(), vec![0.1, 0.3, 0.7]);
    }

    #[test]
    fn arrival_above_minimum_replaces_it() {
        let mut s = state(&[0.3, 0.7]);
        let eff = s.step(0.5);
        assert_eq!(eff.evicted, Some(0.3));
        assert_eq!(s.elements(), vec![0.5, 0.7]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn tie_with_minimum_does_not_evict() {
        let mut s = state(&[0.3, 0.7]);
        let eff = s.step(0.3);
        assert_eq!(eff.evicted, None);
        assert_eq!(s.elements(), vec![0.3, 0.3, 0.7]);
    }

    #[test]
    fn empty_start_just_inserts() {
        let mut s = state(&[]);
        assert_eq!(s.current_min(), None);
        let eff = s.step(0.4);
        assert_eq!(eff.pre_min, None);
        assert_eq!(eff.evicted, None);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn initial_values_outside_unit_interval_rejected() {
        assert!(ProcessState::new(&[1.0]).is_err());
        assert!(ProcessState::new(&[-0.1]).is_err());
        assert!(ProcessState::new(&[0.0, 0.99]).is_ok());
    }

    #[test]
    fn peek_agrees_with_step() {
        let mut s = state(&[0.2, 0.6]);
        for x in [0.1, 0.15, 0.9, 0.05] {
            let peek = s.peek_step(x);
            assert_eq!(peek, s.step(x));
        }
    }

    #[test]
    fn minimum_sequence_starts_zero_then_first_arrival() {
        let mut s = ProcessState::default();
        let xs: Vec<f64> = uniform_stream(11, 0).take(2).collect();
        assert_eq!(s.step(xs[0]).pre_min, Some(0.0));
        assert_eq!(s.step(xs[1]).pre_min, Some(xs[0]));
    }

    #[test]
    fn size_never_decreases_and_grows_iff_undercut() {
        let mut s = ProcessState::default();
        for x in uniform_stream(3, 2).take(20_000) {
            let before = s.len();
            let m = s.current_min().unwrap();
            s.step(x);
            let grew = s.len() - before;
            assert!(grew <= 1);
            assert_eq!(grew == 1, x < m);
            assert_eq!(s.current_min(), s.elements().first().copied());
        }
    }

    #[test]
    fn zero_steps_gives_single_record_of_size_one() {
        let cfg = RunConfig::new(0, 1);
        let recs = run_path(&cfg).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].n, 0);
        assert_eq!(recs[0].s_total, 1);
    }

    #[test]
    fn checkpoint_beyond_run_is_rejected() {
        let cfg = RunConfig::new(10, 1).with_checkpoints(vec![5, 11]);
        assert_eq!(
            run_path(&cfg).unwrap_err(),
            ConfigError::CheckpointBeyondSteps {
                checkpoint: 11,
                steps: 10
            }
        );
        let cfg = RunConfig::new(10, 1).with_checkpoints(vec![5, 5]);
        assert!(matches!(
            run_path(&cfg),
            Err(ConfigError::CheckpointsUnsorted { .. })
        ));
    }

    #[test]
    fn bad_threshold_rejected() {
        for z in [0.0, 1.0, -0.5, f64::NAN] {
            let cfg = RunConfig::new(10, 1).with_thresholds(vec![z]);
            assert!(run_path(&cfg).is_err());
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = RunConfig::new(5_000, 99)
            .with_replicate(4)
            .with_thresholds(vec![0.3, 0.8])
            .with_checkpoints(vec![0, 1, 100, 5_000]);
        assert_eq!(run_path(&cfg).unwrap(), run_path(&cfg).unwrap());
    }

    #[test]
    fn final_size_matches_undercut_count() {
        let n = 10_000;
        let cfg = RunConfig::new(n, 17);
        let rec = run_path(&cfg).unwrap().pop().unwrap();
        // independent count on the same stream with a plain sorted vector
        let mut mem = vec![0.0f64];
        let mut undercuts = 0u64;
        for x in uniform_stream(17, 0).take(n as usize) {
            let m = mem[0];
            if x < m {
                undercuts += 1;
            } else {
                mem.remove(0);
            }
            let pos = mem.partition_point(|&v| v < x);
            mem.insert(pos, x);
        }
        assert_eq!(rec.s_total, 1 + undercuts);
        assert!(rec.s_total >= 1 && rec.s_total <= n + 1);
    }
}
