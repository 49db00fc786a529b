use forget_core::engine::{drive, uniform_stream};
use forget_core::oracle::{compare_records, oracle_run};
use forget_core::{run_path, Observables, ProcessState, RunConfig, Z0};
use proptest::prelude::*;

fn levels() -> Vec<f64> {
    vec![0.25, Z0 - 0.01, Z0 + 0.01, 0.9]
}

#[test]
fn engine_matches_oracle_on_default_starts() {
    for seed in 0..10 {
        let cfg = RunConfig::new(4000, seed)
            .with_thresholds(levels())
            .with_checkpoints((0..=4000).step_by(400).collect());
        let engine = run_path(&cfg).unwrap();
        let oracle = oracle_run(&cfg).unwrap();
        assert_eq!(engine.len(), oracle.records.len());
        for (e, o) in engine.iter().zip(&oracle.records) {
            compare_records(e, o).unwrap();
        }
    }
}

#[test]
fn final_size_is_one_plus_undercuts() {
    let n = 10_000;
    let cfg = RunConfig::new(n, 99);
    let rec = run_path(&cfg).unwrap().pop().unwrap();
    let mut sorted: Vec<f64> = vec![0.0];
    let mut undercuts = 0;
    for x in uniform_stream(99, 0).take(n as usize) {
        if x < sorted[0] {
            undercuts += 1;
        } else {
            sorted.remove(0);
        }
        let i = sorted.partition_point(|&v| v < x);
        sorted.insert(i, x);
    }
    assert_eq!(rec.s_total, 1 + undercuts);
    assert!(rec.s_total >= 1 && rec.s_total <= n + 1);
    assert_eq!(rec.s_total as usize, sorted.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn engine_matches_oracle_from_any_start(
        initial in prop::collection::vec(0.0f64..1.0, 0..6),
        seed in any::<u64>(),
        steps in 0u64..600,
        extra in prop::collection::vec(0.01f64..0.99, 0..3),
    ) {
        let cps = vec![0, steps / 3, steps];
        let mut cps_dedup = cps.clone();
        cps_dedup.dedup();
        let cfg = RunConfig::new(steps, seed)
            .with_thresholds(extra)
            .with_initial(initial.clone())
            .with_checkpoints(cps_dedup.clone());
        let oracle = oracle_run(&cfg).unwrap();

        let state = ProcessState::new(&initial).unwrap();
        let obs = Observables::new(&cfg.thresholds, &state).unwrap();
        let (records, state, _) = drive(state, obs, uniform_stream(seed, 0), steps, &cps_dedup);
        for (e, o) in records.iter().zip(&oracle.records) {
            prop_assert!(compare_records(e, o).is_ok(), "{:?}", compare_records(e, o));
        }
        prop_assert_eq!(state.elements(), oracle.elements.last().unwrap().clone());
    }
}
