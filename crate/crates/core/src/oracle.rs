//! Naive reference implementation of the process and its statistics.
//!
//! Keeps the memory as a sorted vector with linear insertion, stores the full
//! arrival and minimum histories, and recomputes every observable from those
//! at each checkpoint. Shares nothing with the engine except the uniform
//! stream, so agreement between the two is meaningful.

use std::f64::consts::E;

use crate::engine::{uniform_stream, RunConfig};
use crate::error::ConfigError;
use crate::observables::{LevelRecord, ObservableRecord};
use crate::theory::Z0;

/// Records plus the memory contents at each checkpoint.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub records: Vec<ObservableRecord>,
    pub elements: Vec<Vec<f64>>,
}

pub fn oracle_run(config: &RunConfig) -> Result<OracleRun, ConfigError> {
    config.validate()?;
    let mut levels: Vec<f64> = config.thresholds.clone();
    levels.push(Z0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let mut memory: Vec<f64> = config.initial_set.clone();
    memory.sort_by(f64::total_cmp);
    let initial = memory.clone();

    let mut arrivals: Vec<f64> = Vec::new();
    let mut minima: Vec<f64> = Vec::new();
    // W(z,k) at each step k where S(z,k-1) was empty
    let mut restarts: Vec<Vec<f64>> = vec![Vec::new(); levels.len()];

    let mut stream = uniform_stream(config.seed, config.replicate_index);
    let mut out = OracleRun {
        records: Vec::new(),
        elements: Vec::new(),
    };
    let mut checkpoints = config.checkpoints.iter().peekable();
    for k in 0..=config.steps {
        if k > 0 {
            let x = stream.next_uniform();
            let empty_before: Vec<bool> = levels
                .iter()
                .map(|&z| memory.first().is_none_or(|&m| m >= z))
                .collect();
            if let Some(&m) = memory.first() {
                minima.push(m);
                if x > m {
                    memory.remove(0);
                }
            }
            let pos = memory.iter().position(|&v| v > x).unwrap_or(memory.len());
            memory.insert(pos, x);
            arrivals.push(x);
            for (i, &z) in levels.iter().enumerate() {
                if empty_before[i] {
                    restarts[i].push(w_sum(&memory, z));
                }
            }
        }
        while checkpoints.peek() == Some(&&k) {
            checkpoints.next();
            out.records.push(snapshot(
                k, &levels, &memory, &initial, &arrivals, &minima, &restarts,
            ));
            out.elements.push(memory.clone());
        }
    }
    Ok(out)
}

// memory is sorted, so S(z) is a prefix
fn w_sum(memory: &[f64], z: f64) -> f64 {
    memory
        .iter()
        .take_while(|&&v| v < z)
        .map(|&v| 1.0 / (1.0 - v))
        .sum()
}

fn snapshot(
    n: u64,
    levels: &[f64],
    memory: &[f64],
    initial: &[f64],
    arrivals: &[f64],
    minima: &[f64],
    restarts: &[Vec<f64>],
) -> ObservableRecord {
    let level_records: Vec<LevelRecord> = levels
        .iter()
        .zip(restarts)
        .map(|(&z, rs)| {
            let w = w_sum(memory, z);
            let zc: f64 = rs.iter().sum();
            LevelRecord {
                level: z,
                s: memory.iter().filter(|&&v| v < z).count() as u64,
                w,
                z: zc,
                x: w - zc,
                m: minima.iter().filter(|&&m| m >= z).count() as u64,
                e: arrivals.iter().filter(|&&x| x >= z).count() as u64,
            }
        })
        .collect();

    // R = |{arrivals >= z0} \ S| as multisets, ignoring initial elements
    let mut high_arrivals: Vec<f64> = arrivals.iter().copied().filter(|&x| x >= Z0).collect();
    high_arrivals.sort_by(f64::total_cmp);
    let mut present: Vec<f64> = memory.to_vec();
    for v in initial {
        if let Some(i) = present.iter().position(|p| p == v) {
            present.remove(i);
        }
    }
    let r = multiset_difference(&high_arrivals, &present);

    let z0 = level_records.iter().find(|l| l.level == Z0).unwrap();
    let n_martingale = z0.x + E * z0.e as f64 - n as f64;
    ObservableRecord {
        n,
        s_total: memory.len() as u64,
        l: z0.s,
        r,
        n_martingale,
        min_value: memory.first().copied(),
        levels: level_records,
    }
}

/// `|a \ b|` for sorted multisets.
pub fn multiset_difference(a: &[f64], b: &[f64]) -> u64 {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() {
        if j >= b.len() || a[i] < b[j] {
            count += 1;
            i += 1;
        } else if a[i] > b[j] {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    count
}

/// Size of the symmetric difference between the memory and the arrivals at
/// or above `z0`, both as multisets.
pub fn symmetric_difference_size(memory: &[f64], arrivals: &[f64]) -> u64 {
    let mut mem = memory.to_vec();
    mem.sort_by(f64::total_cmp);
    let mut high: Vec<f64> = arrivals.iter().copied().filter(|&x| x >= Z0).collect();
    high.sort_by(f64::total_cmp);
    multiset_difference(&mem, &high) + multiset_difference(&high, &mem)
}

fn rel_close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

/// Compares engine and oracle records: integers exactly, floats to 1e-9
/// relative to the magnitude of the terms they are built from.
pub fn compare_records(engine: &ObservableRecord, oracle: &ObservableRecord) -> Result<(), String> {
    let ctx = |what: &str, a: &dyn std::fmt::Debug, b: &dyn std::fmt::Debug| {
        format!("n={}: {what} engine={a:?} oracle={b:?}", oracle.n)
    };
    if engine.n != oracle.n {
        return Err(ctx("n", &engine.n, &oracle.n));
    }
    if engine.s_total != oracle.s_total {
        return Err(ctx("s_total", &engine.s_total, &oracle.s_total));
    }
    if engine.l != oracle.l {
        return Err(ctx("L", &engine.l, &oracle.l));
    }
    if engine.r != oracle.r {
        return Err(ctx("R", &engine.r, &oracle.r));
    }
    if engine.min_value != oracle.min_value {
        return Err(ctx("min", &engine.min_value, &oracle.min_value));
    }
    if engine.levels.len() != oracle.levels.len() {
        return Err(ctx("levels", &engine.levels.len(), &oracle.levels.len()));
    }
    for (a, b) in engine.levels.iter().zip(&oracle.levels) {
        if a.level != b.level || a.s != b.s || a.m != b.m || a.e != b.e {
            return Err(ctx("level counts", a, b));
        }
        if !rel_close(a.w, b.w, b.w.abs()) {
            return Err(ctx("W", a, b));
        }
        if !rel_close(a.z, b.z, b.z.abs()) {
            return Err(ctx("Z", a, b));
        }
        if !rel_close(a.x, b.x, b.w.abs() + b.z.abs()) {
            return Err(ctx("X", a, b));
        }
    }
    let z0 = oracle.z0();
    let scale = z0.w.abs() + z0.z.abs() + E * z0.e as f64 + oracle.n as f64;
    if !rel_close(engine.n_martingale, oracle.n_martingale, scale) {
        return Err(ctx("N", &engine.n_martingale, &oracle.n_martingale));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiset_difference_counts_multiplicity() {
        assert_eq!(multiset_difference(&[0.1, 0.1, 0.5], &[0.1, 0.7]), 2);
        assert_eq!(multiset_difference(&[], &[0.3]), 0);
        assert_eq!(multiset_difference(&[0.3], &[]), 1);
    }

    #[test]
    fn zero_step_oracle_record() {
        let run = oracle_run(&RunConfig::new(0, 3).with_checkpoints(vec![0])).unwrap();
        let rec = &run.records[0];
        assert_eq!((rec.s_total, rec.l, rec.r), (1, 1, 0));
        assert_eq!(run.elements[0], vec![0.0]);
        // W(z,0) = 1/(1-0) for every level above 0
        assert!(rec.levels.iter().all(|l| l.w == 1.0 && l.z == 0.0));
    }

    #[test]
    fn symmetric_difference_matches_l_plus_r() {
        let cfg = RunConfig::new(3000, 12).with_checkpoints(vec![3000]);
        let run = oracle_run(&cfg).unwrap();
        let arrivals: Vec<f64> = uniform_stream(12, 0).take(3000).collect();
        let rec = &run.records[0];
        assert_eq!(
            symmetric_difference_size(&run.elements[0], &arrivals),
            rec.l + rec.r
        );
    }
}
