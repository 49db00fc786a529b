//! Single-path and paired-path checks used by the verification suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{uniform_stream, ProcessState, RunConfig};
use crate::error::{ConfigError, Result};
use crate::observables::{Observables, Violations};
use crate::oracle::{compare_records, multiset_difference, oracle_run};
use crate::stats::Moments;
use crate::theory::{drift, drifted_max_cdf};

// stream ids for auxiliary randomness, far from any replicate index in use
const AUX_STREAM: u64 = 1 << 62;

fn step_both(state: &mut ProcessState, obs: &mut Observables, x: f64) {
    let eff = state.step(x);
    obs.on_step(&eff);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftOutcome {
    pub z: f64,
    /// Step index of the frozen state.
    pub frozen_at: u64,
    pub draws: u64,
    pub mean: f64,
    pub std_error: f64,
    pub expected: f64,
}

impl DriftOutcome {
    /// `|mean - expected|` in standard errors.
    pub fn deviation(&self) -> f64 {
        (self.mean - self.expected).abs() / self.std_error
    }
}

/// Runs a path until step `burn_in` or later with `S(z)` nonempty, freezes it,
/// and samples `draws` independent one-step continuations of `W(z,.)`.
pub fn drift_check(seed: u64, z: f64, burn_in: u64, draws: u64) -> Result<DriftOutcome> {
    let expected = drift(z)?;
    let mut state = ProcessState::default();
    let mut obs = Observables::new(&[z], &state)?;
    let mut stream = uniform_stream(seed, 0);
    let limit = burn_in.saturating_add(10_000_000);
    while state.step_count() < burn_in || obs.s_at(z) == Some(0) {
        if state.step_count() >= limit {
            return Err(ConfigError::Plan(format!("no state with S({z}) nonempty found")).into());
        }
        step_both(&mut state, &mut obs, stream.next_uniform());
    }
    let w0 = obs.w_at(z).expect("level tracked");
    let mut cont = uniform_stream(seed, AUX_STREAM);
    let mut m = Moments::default();
    for _ in 0..draws {
        let mut o = obs.clone();
        o.on_step(&state.peek_step(cont.next_uniform()));
        m.push(o.w_at(z).expect("level tracked") - w0);
    }
    Ok(DriftOutcome {
        z,
        frozen_at: state.step_count(),
        draws,
        mean: m.mean,
        std_error: m.std_error()?,
        expected,
    })
}

/// Per-step rates of the summed quadratic-variation integrands on one path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvarOutcome {
    pub steps: u64,
    /// `(1/n) sum f_X(m_k) 1{m_k <= z0}`
    pub x_rate: f64,
    /// `(1/n) sum f_N(m_k) 1{m_k <= z0}`
    pub n_rate: f64,
}

pub fn qvar_check(seed: u64, steps: u64) -> Result<QvarOutcome> {
    let mut state = ProcessState::default();
    let mut obs = Observables::new(&[], &state)?.with_qvar();
    for x in uniform_stream(seed, 0).take(steps as usize) {
        step_both(&mut state, &mut obs, x);
    }
    let q = obs.qvar().expect("enabled above");
    let n = steps.max(1) as f64;
    Ok(QvarOutcome {
        steps,
        x_rate: q.x / n,
        n_rate: q.n / n,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub pairs: u64,
    /// Threshold comparisons made (one per step, level and pair).
    pub count_checks: u64,
    /// Full multiset containment checks made.
    pub containment_checks: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

/// Runs, on a common stream, the process from `T1` and from `T1 + T2` for
/// random disjoint `T1` (containing 0) and nonempty `T2`. At every step,
/// for every level `x` in `levels` and for the whole memory, the larger run
/// must hold between 0 and `|T2|` more elements; every `every` steps the
/// smaller memory must be a sub-multiset of the larger.
pub fn coupling_check(
    seed: u64,
    pairs: u64,
    steps: u64,
    levels: &[f64],
    every: u64,
) -> Result<CouplingOutcome> {
    let outcomes: Vec<Result<CouplingOutcome>> = (0..pairs)
        .into_par_iter()
        .map(|p| coupled_pair(seed, p, steps, levels, every.max(1)))
        .collect();
    let mut total = CouplingOutcome::default();
    for o in outcomes {
        let o = o?;
        total.pairs += o.pairs;
        total.count_checks += o.count_checks;
        total.containment_checks += o.containment_checks;
        total.violations += o.violations;
        if total.first_violation.is_none() {
            total.first_violation = o.first_violation;
        }
    }
    Ok(total)
}

fn coupled_pair(
    seed: u64,
    pair: u64,
    steps: u64,
    levels: &[f64],
    every: u64,
) -> Result<CouplingOutcome> {
    let mut aux = uniform_stream(seed, AUX_STREAM + 1 + pair);
    let k1 = (aux.next_uniform() * 4.0) as usize;
    let k2 = 1 + (aux.next_uniform() * 5.0) as usize;
    let mut t1 = vec![0.0];
    t1.extend((&mut aux).take(k1));
    let t2: Vec<f64> = aux.filter(|v| !t1.contains(v)).take(k2).collect();
    let mut both = t1.clone();
    both.extend_from_slice(&t2);

    let mut small = ProcessState::new(&t1)?;
    let mut large = ProcessState::new(&both)?;
    let mut obs_s = Observables::new(levels, &small)?;
    let mut obs_l = Observables::new(levels, &large)?;
    let bound = t2.len() as u64;
    let mut out = CouplingOutcome {
        pairs: 1,
        ..Default::default()
    };
    let flag = |out: &mut CouplingOutcome, msg: String| {
        out.violations += 1;
        out.first_violation
            .get_or_insert(format!("pair {pair}: {msg}"));
    };

    let mut stream = uniform_stream(seed, pair);
    for k in 0..=steps {
        if k > 0 {
            let x = stream.next_uniform();
            step_both(&mut small, &mut obs_s, x);
            step_both(&mut large, &mut obs_l, x);
        }
        for &z in levels {
            let (a, b) = (obs_s.s_at(z).unwrap_or(0), obs_l.s_at(z).unwrap_or(0));
            out.count_checks += 1;
            if b < a || b - a > bound {
                flag(
                    &mut out,
                    format!("step {k}, level {z}: {a} vs {b}, |T2| = {bound}"),
                );
            }
        }
        let (a, b) = (small.len() as u64, large.len() as u64);
        out.count_checks += 1;
        if b < a || b - a > bound {
            flag(
                &mut out,
                format!("step {k}: sizes {a} vs {b}, |T2| = {bound}"),
            );
        }
        if k % every == 0 || k == steps {
            out.containment_checks += 1;
            if multiset_difference(&small.elements(), &large.elements()) != 0 {
                flag(&mut out, format!("step {k}: memory not contained"));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOutcome {
    pub pairs: u64,
    pub checks: u64,
    /// Largest `|s(x,l) - s'(x,l)|` seen.
    pub max_delta: u64,
    pub violations: u64,
}

/// Reruns each path with one arrival replaced by a fresh uniform and compares
/// `s(x,l)` for every level in `levels` and for the whole memory at every step.
pub fn lipschitz_check(
    seed: u64,
    pairs: u64,
    steps: u64,
    levels: &[f64],
) -> Result<LipschitzOutcome> {
    let outcomes: Vec<Result<LipschitzOutcome>> = (0..pairs)
        .into_par_iter()
        .map(|p| perturbed_pair(seed, p, steps, levels))
        .collect();
    let mut total = LipschitzOutcome::default();
    for o in outcomes {
        let o = o?;
        total.pairs += o.pairs;
        total.checks += o.checks;
        total.max_delta = total.max_delta.max(o.max_delta);
        total.violations += o.violations;
    }
    Ok(total)
}

fn perturbed_pair(seed: u64, pair: u64, steps: u64, levels: &[f64]) -> Result<LipschitzOutcome> {
    let values: Vec<f64> = uniform_stream(seed, pair).take(steps as usize).collect();
    let mut changed = values.clone();
    let mut aux = uniform_stream(seed, AUX_STREAM + 1 + pair);
    if steps > 0 {
        let j = ((aux.next_uniform() * steps as f64) as usize).min(changed.len() - 1);
        changed[j] = aux.next_uniform();
    }

    let mut a = ProcessState::default();
    let mut b = ProcessState::default();
    let mut oa = Observables::new(levels, &a)?;
    let mut ob = Observables::new(levels, &b)?;
    let mut out = LipschitzOutcome {
        pairs: 1,
        ..Default::default()
    };
    for (&x, &y) in values.iter().zip(&changed) {
        step_both(&mut a, &mut oa, x);
        step_both(&mut b, &mut ob, y);
        let counts = levels
            .iter()
            .map(|&z| (oa.s_at(z).unwrap_or(0), ob.s_at(z).unwrap_or(0)))
            .chain(std::iter::once((a.len() as u64, b.len() as u64)));
        for (u, v) in counts {
            let d = u.abs_diff(v);
            out.checks += 1;
            out.max_delta = out.max_delta.max(d);
            out.violations += (d > 2) as u64;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub runs: u64,
    pub records: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<String>,
    /// Invariant violations seen by the engine on these runs.
    pub violations: Violations,
}

/// Runs engine and oracle on replicates `0..runs` of `seed` and compares all
/// records and memory contents at every checkpoint.
pub fn oracle_equivalence(
    seed: u64,
    runs: u64,
    steps: u64,
    thresholds: &[f64],
    every: u64,
) -> Result<OracleOutcome> {
    let checkpoints: Vec<u64> = (0..=steps).step_by(every.max(1) as usize).collect();
    let outcomes: Vec<Result<OracleOutcome>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let cfg = RunConfig::new(steps, seed)
                .with_replicate(i)
                .with_thresholds(thresholds.to_vec())
                .with_checkpoints(checkpoints.clone());
            oracle_pair(&cfg)
        })
        .collect();
    let mut total = OracleOutcome::default();
    for o in outcomes {
        let o = o?;
        total.runs += o.runs;
        total.records += o.records;
        total.mismatches += o.mismatches;
        total.violations.sandwich += o.violations.sandwich;
        total.violations.exclusion += o.violations.exclusion;
        if total.first_mismatch.is_none() {
            total.first_mismatch = o.first_mismatch;
        }
    }
    Ok(total)
}

fn oracle_pair(cfg: &RunConfig) -> Result<OracleOutcome> {
    let reference = oracle_run(cfg)?;
    let mut state = ProcessState::new(&cfg.initial_set)?;
    let mut obs = Observables::new(&cfg.thresholds, &state)?;
    let mut stream = uniform_stream(cfg.seed, cfg.replicate_index);
    let mut out = OracleOutcome {
        runs: 1,
        ..Default::default()
    };
    let mut k = 0;
    for (i, &cp) in cfg.checkpoints.iter().enumerate() {
        while k < cp {
            step_both(&mut state, &mut obs, stream.next_uniform());
            k += 1;
        }
        out.records += 1;
        let mut problem = compare_records(&obs.record(&state), &reference.records[i]).err();
        if problem.is_none() && state.elements() != reference.elements[i] {
            problem = Some(format!("n={cp}: memory contents differ"));
        }
        if let Some(p) = problem {
            out.mismatches += 1;
            out.first_mismatch
                .get_or_insert(format!("replicate {}: {p}", cfg.replicate_index));
        }
    }
    out.violations = obs.violations();
    Ok(out)
}

/// Empirical CDF of `sup_{s<=1}(B_s + mu s)` from discretized Brownian
/// paths, next to the closed form, on a grid of levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOracleGrid {
    pub paths: u64,
    pub steps: u64,
    pub mus: Vec<f64>,
    pub levels: Vec<f64>,
    /// `empirical[i][j]`: fraction of paths with drift `mus[i]` whose maximum is at most `levels[j]`.
    pub empirical: Vec<Vec<f64>>,
    pub closed_form: Vec<Vec<f64>>,
}

impl PathOracleGrid {
    pub fn max_abs_diff(&self) -> f64 {
        self.empirical
            .iter()
            .flatten()
            .zip(self.closed_form.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Simulates `paths` Gaussian random walks of `steps` steps on [0,1]; all
/// drifts share the same Brownian increments.
pub fn drifted_max_path_oracle(
    seed: u64,
    paths: u64,
    steps: u64,
    mus: &[f64],
    levels: &[f64],
) -> PathOracleGrid {
    let dt = 1.0 / steps.max(1) as f64;
    let sd = dt.sqrt();
    let cells = mus.len() * levels.len();
    let counts = (0..paths)
        .into_par_iter()
        .fold(
            || (vec![0u64; cells], vec![0.0; mus.len()]),
            |(mut counts, mut maxima), p| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p);
                maxima.iter_mut().for_each(|m| *m = 0.0);
                let mut b = 0.0;
                for k in 1..=steps {
                    let g: f64 = rng.sample(StandardNormal);
                    b += sd * g;
                    let t = k as f64 * dt;
                    for (m, &mu) in maxima.iter_mut().zip(mus) {
                        let v = b + mu * t;
                        if v > *m {
                            *m = v;
                        }
                    }
                }
                for (i, &m) in maxima.iter().enumerate() {
                    for (j, &a) in levels.iter().enumerate() {
                        counts[i * levels.len() + j] += (m <= a) as u64;
                    }
                }
                (counts, maxima)
            },
        )
        .map(|(c, _)| c)
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let empirical = (0..mus.len())
        .map(|i| {
            (0..levels.len())
                .map(|j| counts[i * levels.len() + j] as f64 / paths.max(1) as f64)
                .collect()
        })
        .collect();
    let closed_form = mus
        .iter()
        .map(|&mu| levels.iter().map(|&a| drifted_max_cdf(a, mu)).collect())
        .collect();
    PathOracleGrid {
        paths,
        steps,
        mus: mus.to_vec(),
        levels: levels.to_vec(),
        empirical,
        closed_form,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::Z0;

    #[test]
    fn drift_check_small() {
        let d = drift_check(3, 0.8, 200, 20_000).unwrap();
        assert!(d.frozen_at >= 200);
        assert!(d.deviation() < 5.0, "{d:?}");
    }

    #[test]
    fn coupling_and_lipschitz_small() {
        let levels = [0.25, 0.5, Z0, 0.9];
        let c = coupling_check(5, 4, 500, &levels, 50).unwrap();
        assert_eq!(c.violations, 0, "{:?}", c.first_violation);
        assert_eq!(c.pairs, 4);
        let l = lipschitz_check(5, 4, 500, &levels).unwrap();
        assert_eq!(l.violations, 0);
        assert!(l.max_delta <= 2);
    }

    #[test]
    fn oracle_equivalence_small() {
        let o = oracle_equivalence(8, 3, 600, &[0.25, Z0 + 0.01, 0.9], 100).unwrap();
        assert_eq!(o.mismatches, 0, "{:?}", o.first_mismatch);
        assert_eq!(o.records, 3 * 7);
    }

    #[test]
    fn path_oracle_without_drift_is_reflected_half_normal() {
        let g = drifted_max_path_oracle(1, 4000, 400, &[0.0], &[0.5, 1.0]);
        // discretization lowers the maximum, so the empirical CDF sits slightly above
        assert!(g.max_abs_diff() < 0.06, "{g:?}");
    }
}
