//! Runs all thirteen acceptance criteria at full scale and prints one line
//! per criterion. Reference values that are derived rather than closed-form
//! are recomputed here by independent means before the suite runs.

use std::f64::consts::{E, PI};
use std::io::Write;

use forget_core::engine::uniform_stream;
use forget_core::montecarlo::{verify, CheckStatus, Scale, Suite, VerifyPlan};
use forget_core::theory::{drift, drifted_max_cdf, half_normal_scaled_cdf, symdiff_limit_cdf, Z0};

const SEED: u64 = 2024;

// writes to the process stdout directly so the lines survive test output capture
fn line(msg: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{msg}");
    let _ = out.flush();
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Half-normal and symmetric-difference CDFs against composite Simpson
/// quadrature of their densities.
fn limit_law_references() -> Result<(), String> {
    let half = |t: f64| 2.0 / (2.0 * PI).sqrt() * (-t * t / 2.0).exp();
    let scale = 2f64.sqrt() / E;
    let sym = |x: f64| E.powi(3) * x * x / (2.0 * PI.sqrt()) * (-E * E * x * x / 4.0).exp();
    for x in [0.1, 0.35, 0.7, 1.2, 2.0] {
        let h = simpson(half, 0.0, x / scale, 20_000);
        if (h - half_normal_scaled_cdf(x)).abs() > 1e-10 {
            return Err(format!(
                "half-normal at {x}: {h} vs {}",
                half_normal_scaled_cdf(x)
            ));
        }
        let s = simpson(sym, 0.0, x, 20_000);
        if (s - symdiff_limit_cdf(x)).abs() > 1e-10 {
            return Err(format!("symdiff at {x}: {s} vs {}", symdiff_limit_cdf(x)));
        }
    }
    Ok(())
}

/// `P(sup_{s<=1}(B_s + s) <= 1)` from Box-Muller Gaussian walks.
fn drifted_max_reference() -> Result<(), String> {
    let (paths, steps) = (50_000u64, 10_000u64);
    let dt = 1.0 / steps as f64;
    let sd = dt.sqrt();
    let mut below = 0u64;
    for p in 0..paths {
        let mut u = uniform_stream(SEED ^ 0x5eed, p);
        let (mut b, mut max) = (0.0f64, 0.0f64);
        let mut k = 0;
        while k < steps {
            let r = (-2.0 * u.next_uniform().ln()).sqrt();
            let th = 2.0 * PI * u.next_uniform();
            for g in [r * th.cos(), r * th.sin()] {
                k += 1;
                b += sd * g;
                max = max.max(b + k as f64 * dt);
            }
        }
        below += (max <= 1.0) as u64;
    }
    let est = below as f64 / paths as f64;
    let closed = drifted_max_cdf(1.0, 1.0);
    if (est - closed).abs() > 0.01 {
        return Err(format!("walk estimate {est} vs closed form {closed}"));
    }
    Ok(())
}

/// Expected one-step change of `W(z,.)` with the minimum below `z`: the gain
/// integrated over arrivals below `z` minus the certain loss of the minimum.
fn drift_reference() -> Result<(), String> {
    for z in [0.3, Z0, 0.8] {
        let gain = simpson(|x| 1.0 / (1.0 - x), 0.0, z, 2000);
        let d = drift(z).map_err(|e| e.to_string())?;
        if (gain - 1.0 - d).abs() > 1e-10 {
            return Err(format!("drift at {z}: {} vs {d}", gain - 1.0));
        }
    }
    Ok(())
}

#[test]
fn acceptance_criteria() {
    let refs = [
        ("limit-law CDFs vs quadrature", limit_law_references()),
        ("drifted max vs Gaussian walks", drifted_max_reference()),
        ("drift vs quadrature", drift_reference()),
    ];
    let mut failures = Vec::new();
    for (name, r) in &refs {
        match r {
            Ok(()) => line(format!("reference {name}: PASS")),
            Err(e) => {
                line(format!("reference {name}: FAIL ({e})"));
                failures.push(name.to_string());
            }
        }
    }

    let report = verify(&VerifyPlan::new(SEED, Scale::Full, Suite::All)).expect("suite runs");
    for c in 1..=13u8 {
        let checks: Vec<_> = report.criterion(c).collect();
        let ok = !checks.is_empty() && checks.iter().all(|r| r.status == CheckStatus::Pass);
        let detail: Vec<String> = checks
            .iter()
            .map(|r| match r.measured {
                Some(m) => format!("{}={m:.4e} (tol {:e})", r.name, r.tolerance),
                None => format!("{}=skipped", r.name),
            })
            .collect();
        line(format!(
            "criterion {c:>2}: {} {}",
            if ok { "PASS" } else { "FAIL" },
            detail.join(", ")
        ));
        if !ok {
            failures.push(format!("criterion {c}"));
        }
    }
    assert!(failures.is_empty(), "failed: {failures:?}");
}
