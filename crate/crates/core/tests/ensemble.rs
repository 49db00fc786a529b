use forget_core::montecarlo::{ks_results, run_ensemble, ExperimentPlan, PoolSpec};
use forget_core::theory::MEAN_RATE;
use forget_core::RunConfig;

#[test]
fn mean_size_at_moderate_scale() {
    let n = 100_000;
    let plan = ExperimentPlan::new(RunConfig::new(n, 31), 200).with_pools(vec![PoolSpec::Size]);
    let s = run_ensemble(&plan, 0).unwrap();
    let mean = s.scalar(n, "s_total").unwrap().mean / n as f64;
    assert!((mean - MEAN_RATE).abs() <= 0.005, "{mean}");
    assert_eq!(s.violations.sandwich, 0);
    assert_eq!(s.violations.exclusion, 0);
}

#[test]
fn summary_is_independent_of_worker_count_and_split() {
    let base = RunConfig::new(5000, 8).with_checkpoints(vec![1000, 5000]);
    let pools = vec![
        PoolSpec::L,
        PoolSpec::R,
        PoolSpec::Size,
        PoolSpec::Profile(-1.0),
    ];
    let plan = ExperimentPlan::new(base, 24).with_pools(pools);
    let one = run_ensemble(&plan, 1).unwrap();
    let many = run_ensemble(&plan, 5).unwrap();
    assert_eq!(one, many);

    // merging the per-replicate summaries in order reproduces the ensemble
    let mut parts = (0..24).map(|i| forget_core::montecarlo::replicate_summary(&plan, i).unwrap());
    let mut acc = parts.next().unwrap();
    for p in parts {
        acc = acc.merge(&p).unwrap();
    }
    assert_eq!(acc.pools, one.pools);
    assert_eq!(acc.replicates, 24);
    for (a, b) in acc.per_checkpoint.iter().zip(&one.per_checkpoint) {
        for (k, m) in &a.scalars {
            let o = &b.scalars[k];
            assert_eq!(m.count, o.count);
            assert!((m.mean - o.mean).abs() <= 1e-9 * (1.0 + o.mean.abs()));
        }
    }
    let ks = ks_results(&plan, &one).unwrap();
    assert!(ks.iter().all(|k| k.statistic >= 0.0 && k.statistic <= 1.0));
}
