use proptest::prelude::*;

use vodsim::metrics::MetricsReport;
use vodsim::replication::Strategy as Policy;
use vodsim::sim::{run, run_audited, run_seeds};
use vodsim::SimConfig;

fn small() -> SimConfig {
    SimConfig {
        peers: 100,
        serving_fraction: 0.6,
        movies: 10,
        proxy_channels: 8,
        arrival_per_hour: 25.0,
        movie_duration_s: 2400.0,
        sim_duration_s: 7200.0,
        ..SimConfig::default()
    }
}

#[test]
fn every_strategy_passes_the_audit() {
    for strategy in Policy::ALL {
        let cfg = SimConfig { strategy, ..small() };
        let r = run_audited(&cfg, 11).unwrap();
        let c = r.counts;
        assert_eq!(c.immediate + c.via_main_server, c.admitted);
        assert!(c.completed + c.failed <= c.admitted);
        assert!(c.batches > 0);
    }
}

#[test]
fn same_seed_same_report() {
    let a = run(&small(), 4).unwrap();
    let b = run(&small(), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.counts, run(&small(), 5).unwrap().counts);
}

#[test]
fn seeds_merge_like_individual_runs() {
    let cfg = SimConfig { seeds: vec![1, 2, 3], ..small() };
    let each: Vec<MetricsReport> = cfg.seeds.iter().map(|&s| run(&cfg, s).unwrap()).collect();
    let merged = run_seeds(&cfg).unwrap();
    assert_eq!(merged, MetricsReport::merge(&each).unwrap());
    assert_eq!(merged.runs, 3);
    assert_eq!(merged.counts.admitted, each.iter().map(|r| r.counts.admitted).sum::<u64>());
}

#[test]
fn more_proxy_channels_never_reject_more() {
    let tight = run_seeds(&SimConfig { proxy_channels: 2, seeds: vec![1, 2], ..small() }).unwrap();
    let wide = run_seeds(&SimConfig { proxy_channels: 200, seeds: vec![1, 2], ..small() }).unwrap();
    assert_eq!(wide.counts.rejected, 0);
    assert!(tight.counts.rejected >= wide.counts.rejected);
}

#[test]
fn lifetime_rows_carry_the_analytic_value() {
    let cfg = SimConfig { mean_dn_s: 3600.0, ..small() };
    let r = run(&cfg, 2).unwrap();
    for row in &r.lifetimes {
        let p = vodsim::reliability::CtmcParams::with_gamma(row.n, 1.0 / cfg.mean_up_s, row.gamma).unwrap();
        let exact = vodsim::reliability::mean_time_to_failure(&p).unwrap();
        assert!((row.mttf_analytic - exact).abs() <= 1e-9 * exact);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn random_configs_keep_invariants(
        seed in 0u64..1000,
        rate in 5.0f64..150.0,
        channels in 0u32..10,
        slots in 1usize..4,
        serving in 0.1f64..1.0,
        handoff in 0.0f64..1.0,
        strategy in prop::sample::select(Policy::ALL.to_vec()),
    ) {
        let cfg = SimConfig {
            peers: 50,
            serving_fraction: serving,
            movies: 6,
            arrival_per_hour: rate,
            movie_duration_s: 1200.0,
            max_movies_per_peer: slots,
            proxy_channels: channels,
            handoff_fraction: handoff,
            mean_dn_s: 5400.0,
            sim_duration_s: 5400.0,
            strategy,
            ..SimConfig::default()
        };
        let r = run_audited(&cfg, seed).unwrap();
        if let Some(p) = r.success_playback_prob.value() {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        for w in &r.utilization {
            prop_assert!((0.0..=1.0).contains(&w.bandwidth_frac));
            prop_assert!((0.0..=1.0).contains(&w.buffer_frac));
        }
    }
}
