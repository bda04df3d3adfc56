use fro_core::dynamics::{rocof, FrequencyWindow};
use fro_core::grid::{AttackerCapability, GridConfig, GridParams, RelayMode};
use fro_core::{simulate, validate_config, AttackSignal, SimError, ValidatedGridConfig};
use proptest::prelude::*;

fn config(h: f64, r: f64, t: f64, m: usize, mode: RelayMode) -> ValidatedGridConfig {
    let mut raw = GridConfig::five_bus(
        GridParams::with_cycle_step(h, r, t, m),
        AttackerCapability { toi: 1.0, ad: 1.0, der_total: 1.5, kappa: 1.0 },
    );
    raw.engine.relay_mode = mode;
    validate_config(raw).unwrap()
}

fn mode() -> impl Strategy<Value = RelayMode> {
    prop_oneof![Just(RelayMode::Latched), Just(RelayMode::LiteralAccumulation)]
}

#[test]
fn horizon_shorter_than_window_is_rejected() {
    let cfg = config(4.0, 0.5, 0.5, 6, RelayMode::Latched);
    assert!(matches!(
        simulate(&cfg, &AttackSignal::none(), 5),
        Err(SimError::HorizonTooShort { horizon: 5, window: 6 })
    ));
    assert_eq!(simulate(&cfg, &AttackSignal::none(), 6).unwrap().rows.len(), 7);
}

#[test]
fn delayed_attack_leaves_prefix_untouched() {
    let cfg = config(4.0, 0.5, 0.5, 6, RelayMode::Latched);
    let trace = simulate(&cfg, &AttackSignal::new(0.3, 10), 30).unwrap();
    for row in &trace.rows[..=10] {
        assert_eq!(row.f_hz, 60.0);
    }
    assert!(trace.rows[11].f_hz < 60.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulation_is_deterministic(
        h in 1.0f64..12.0, r in 0.1f64..1.2, t in 0.1f64..1.2,
        dp in -1.5f64..1.5, step in 0usize..20, mode in mode(),
    ) {
        let cfg = config(h, r, t, 6, mode);
        let a = simulate(&cfg, &AttackSignal::new(dp, step), 120).unwrap();
        let b = simulate(&cfg, &AttackSignal::new(dp, step), 120).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn accumulators_never_decrease(
        h in 1.0f64..12.0, r in 0.1f64..1.2, t in 0.1f64..1.2,
        dp in -1.5f64..1.5, mode in mode(),
    ) {
        let cfg = config(h, r, t, 6, mode);
        let trace = simulate(&cfg, &AttackSignal::new(dp, 0), 200).unwrap();
        for w in trace.rows.windows(2) {
            prop_assert!(w[1].dp_sh_cum >= w[0].dp_sh_cum);
            prop_assert!(w[1].dp_tg_cum >= w[0].dp_tg_cum);
        }
        if mode == RelayMode::Latched {
            let last = trace.rows.last().unwrap();
            prop_assert!(last.dp_tg_cum <= cfg.config().total_generation() + 1e-12);
            let ids: std::collections::HashSet<_> = trace.events.iter().map(|e| &e.relay_id).collect();
            prop_assert_eq!(ids.len(), trace.events.len());
        }
    }

    #[test]
    fn rocof_equals_mean_of_step_increments(
        samples in prop::collection::vec(59.0f64..61.0, 2..40),
        m in 1usize..12,
    ) {
        let params = GridParams::with_cycle_step(4.0, 0.5, 0.5, m);
        let take = samples.len().min(m + 1);
        let tail = &samples[samples.len() - take..];
        let window = FrequencyWindow::from_hz(tail, &params);
        let got = rocof(&window, &params);
        if take < m + 1 {
            prop_assert!(got.is_none());
        } else {
            let increments: f64 = tail.windows(2).map(|w| (w[1] - w[0]) / params.dt).sum();
            let oracle = increments / m as f64;
            prop_assert!((got.unwrap() - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn trace_rocof_matches_frequency_column(
        h in 1.0f64..12.0, r in 0.1f64..1.2, t in 0.1f64..1.2,
        dp in -1.0f64..1.0, m in 1usize..10,
    ) {
        let cfg = config(h, r, t, m, RelayMode::Latched);
        let trace = simulate(&cfg, &AttackSignal::new(dp, 0), 60).unwrap();
        let dt = cfg.params().dt;
        for (n, row) in trace.rows.iter().enumerate() {
            if n < m {
                prop_assert!(row.rocof.is_none());
            } else {
                let oracle = (row.f_hz - trace.rows[n - m].f_hz) / (m as f64 * dt);
                prop_assert!((row.rocof.unwrap() - oracle).abs() <= 1e-9);
            }
        }
    }
}
