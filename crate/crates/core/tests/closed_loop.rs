use proptest::prelude::*;

use wncs::delay_approx::{discretize_series, ApproxKind};
use wncs::scenario::{
    compute_metrics, run_closed_loop, ChannelSettings, ChannelSpec, ScenarioConfig, SetpointProfile, SmithSettings,
    VacantPolicy, PRESETS,
};

fn intermediate(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::base(ChannelSettings::symmetric(ChannelSpec::UniformRandom {
        lo_ms: 80,
        hi_ms: 200,
        seed: None,
    }));
    cfg.seed = seed;
    cfg
}

#[test]
fn wired_step_settles_quickly() {
    let rec = run_closed_loop(&ScenarioConfig::preset("wired").unwrap()).unwrap();
    let m = compute_metrics(&rec, 100.0);
    assert!(m.settling_time_s.unwrap() < 1.0);
    assert!(m.overshoot_pct.unwrap() < 10.0);
    assert_eq!(m.steady_state_error, 0.0);
}

#[test]
fn adaptive_dfr_holds_band_on_intermediate_link() {
    for seed in 0..10 {
        let rec = run_closed_loop(&intermediate(seed).with_smith(SmithSettings::adaptive(ApproxKind::Dfr))).unwrap();
        let late = rec.rows.iter().rposition(|r| (f64::from(r.speed_meas) - 100.0).abs() > 5.0);
        assert!(late.is_none_or(|k| rec.rows[k].t_ms < 5000), "seed {seed} leaves the band after 5 s");
    }
}

#[test]
fn pi_alone_oscillates_on_intermediate_link() {
    let pi = compute_metrics(&run_closed_loop(&intermediate(3)).unwrap(), 100.0);
    let dfr = run_closed_loop(&intermediate(3).with_smith(SmithSettings::adaptive(ApproxKind::Dfr))).unwrap();
    assert!(pi.trailing_half_ise > 10.0 * compute_metrics(&dfr, 100.0).trailing_half_ise.max(1.0));
}

#[test]
fn frames_are_conserved_in_every_preset() {
    for name in PRESETS {
        for seed in [0, 9] {
            let mut cfg = ScenarioConfig::preset(name).unwrap();
            cfg.seed = seed;
            let rec = run_closed_loop(&cfg).unwrap();
            for link in [rec.uplink, rec.downlink] {
                assert_eq!(link.sent, link.delivered + link.in_flight, "{name}");
            }
            assert_eq!(rec.uplink.sent, rec.rows.len() as u64);
            assert_eq!(rec.downlink.sent, rec.executions);
        }
    }
}

#[test]
fn classical_predictor_matches_its_delay() {
    let plain = compute_metrics(&run_closed_loop(&ScenarioConfig::base(ChannelSettings::fixed_rtt(300))).unwrap(), 100.0);
    let cfg = ScenarioConfig::base(ChannelSettings::fixed_rtt(300)).with_smith(SmithSettings::classical(300.0));
    let smith = compute_metrics(&run_closed_loop(&cfg).unwrap(), 100.0);
    assert!(smith.ise < plain.ise / 5.0);
    assert_eq!(smith.trailing_half_ise, 0.0);
}

#[test]
fn hold_policy_and_clocked_controller_run() {
    let mut cfg = intermediate(1);
    cfg.controller.vacant_policy = VacantPolicy::Hold;
    let held = run_closed_loop(&cfg).unwrap();
    cfg.controller.event_driven = false;
    let clocked = run_closed_loop(&cfg).unwrap();
    assert_eq!(clocked.executions, clocked.rows.len() as u64);
    assert!(held.executions >= held.rows.len() as u64 / 2);
}

#[test]
fn pade_discretization_matches_expanded_form() {
    for tau in [0.06, 0.24, 0.4] {
        let a = 100.0 * tau;
        let (hi, mid, lo) = (12.0 - 6.0 * a + a * a, 24.0 - 2.0 * a * a, 12.0 + 6.0 * a + a * a);
        // (hi z² + mid z + lo)/(lo z² + mid z + hi), ascending z⁻¹, normalized
        let tf = discretize_series(ApproxKind::Pade2, tau, 0.02).unwrap();
        let expect_num = [hi / lo, mid / lo, 1.0];
        let expect_den = [1.0, mid / lo, hi / lo];
        for i in 0..3 {
            assert!((tf.num()[i] - expect_num[i]).abs() < 1e-12);
            assert!((tf.den()[i] - expect_den[i]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_deterministic_and_bounded(sp in 0.0f64..=200.0, rtt in 0u64..500, seed in 0u64..1000) {
        let mut cfg = ScenarioConfig::base(ChannelSettings::fixed_rtt(rtt));
        cfg.duration_s = 4.0;
        cfg.seed = seed;
        cfg.setpoint = SetpointProfile::Step { value_rps: sp, start_ms: 0 };
        let a = run_closed_loop(&cfg).unwrap();
        let b = run_closed_loop(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.rows.windows(2).all(|w| w[1].t_ms == w[0].t_ms + 20));
        prop_assert!(a.rows.iter().all(|r| r.speed_true >= 0.0 && r.speed_true <= 200.0 * 0.0831 / 0.08 + 1e-9));
    }

    #[test]
    fn square_setpoint_follows_profile(period in 2u64..4000, t in 0u64..20_000) {
        let p = SetpointProfile::Square { low_rps: 20.0, high_rps: 80.0, period_ms: period };
        let v = p.at(t);
        prop_assert!(v == 20.0 || v == 80.0);
        prop_assert_eq!(p.at(t + period), v);
    }
}

#[test]
fn fixed_60ms_predictor_fails_on_long_delays() {
    for rtt in [300, 400] {
        let base = ScenarioConfig::base(ChannelSettings::fixed_rtt(rtt));
        let classical = run_closed_loop(&base.clone().with_smith(SmithSettings::classical(60.0))).unwrap();
        let adaptive = run_closed_loop(&base.with_smith(SmithSettings::adaptive(ApproxKind::Dfr))).unwrap();
        let (c, a) = (compute_metrics(&classical, 100.0), compute_metrics(&adaptive, 100.0));
        assert!(c.trailing_half_ise > 3.0 * a.trailing_half_ise && c.trailing_half_ise > 0.0, "{rtt}: {c:?} vs {a:?}");
    }
}
