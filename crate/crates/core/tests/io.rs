use std::fs;

use fro_core::grid::{AttackerCapability, GridConfig, GridParams};
use fro_core::io::{
    load_config, load_sweep, load_sweep_spec, save_synthesis_result, save_sweep, save_trace, save_trend_report,
    SynthesisResult, SynthesisStatus, SWEEP_HEADER, TRACE_HEADER,
};
use fro_core::sweep::{run_sweep, trend_report, SweepMode, SweepSpec};
use fro_core::synth::synthesize_min_attack;
use fro_core::{simulate, AttackGoal, AttackSignal, IoError, TargetKind};
use tempfile::tempdir;

fn base() -> GridConfig {
    GridConfig::five_bus(
        GridParams::with_cycle_step(2.0, 0.2, 0.2, 6),
        AttackerCapability { toi: 0.02, ad: 0.2, der_total: 1.5, kappa: 60.0 },
    )
}

#[test]
fn config_file_round_trip() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, serde_json::to_string_pretty(&base()).unwrap()).unwrap();
    let loaded = load_config(&path).unwrap();
    assert_eq!(loaded.config(), &base());
}

#[test]
fn config_errors_are_typed() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert!(matches!(load_config(&missing), Err(IoError::Io { .. })));

    let garbage = dir.path().join("g.json");
    fs::write(&garbage, "{ not json").unwrap();
    assert!(matches!(load_config(&garbage), Err(IoError::Json { .. })));

    let mut bad = base();
    bad.params.h_inertia = -1.0;
    let invalid = dir.path().join("bad.json");
    fs::write(&invalid, serde_json::to_string(&bad).unwrap()).unwrap();
    assert!(matches!(load_config(&invalid), Err(IoError::Config { .. })));
}

#[test]
fn trace_file_has_one_row_per_step() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let cfg = load_config_from(&base());
    let trace = simulate(&cfg, &AttackSignal::new(0.322, 0), 30).unwrap();
    save_trace(&path, &trace).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 31);
    for (n, row) in rows.iter().enumerate() {
        assert_eq!(row[0], n.to_string());
        let f: f64 = row[2].parse().unwrap();
        assert!((f - trace.rows[n].f_hz).abs() < 1e-7);
    }
}

fn load_config_from(raw: &GridConfig) -> fro_core::ValidatedGridConfig {
    fro_core::validate_config(raw.clone()).unwrap()
}

#[test]
fn synthesis_result_round_trip() {
    let dir = tempdir().unwrap();
    let cfg = load_config_from(&base());
    let out = synthesize_min_attack(&cfg, &AttackGoal::new(TargetKind::Any, 12), 1e-4).unwrap();
    let trace_path = dir.path().join("t.csv");
    let result = SynthesisResult::from_outcome(&out, Some(&trace_path));
    let path = dir.path().join("r.json");
    save_synthesis_result(&path, &result).unwrap();
    let back: SynthesisResult = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, result);
    assert_eq!(back.status, SynthesisStatus::Success);
    assert_eq!(back.relay_id.as_deref(), Some("G4"));
    assert_eq!(back.relay_kind.as_deref(), Some("rocof"));

    let none = SynthesisResult::from_outcome(&fro_core::FeasibilityOutcome::NoAttackExists, None);
    let json = serde_json::to_value(&none).unwrap();
    assert_eq!(json, serde_json::json!({ "status": "no_attack" }));
}

#[test]
fn sweep_csv_round_trip_and_report_files() {
    let dir = tempdir().unwrap();
    let mut spec = SweepSpec::case_study(base(), SweepMode::Random { count: 200, seed: 9 });
    spec.base_config.capability.kappa = 2.0;
    let records = run_sweep(&spec);
    let path = dir.path().join("sweep.csv");
    save_sweep(&path, &records).unwrap();
    assert!(fs::read_to_string(&path).unwrap().starts_with(SWEEP_HEADER));
    let back = load_sweep(&path).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in back.iter().zip(&records) {
        assert_eq!((a.combo_id, a.success, a.attack_type, a.trip_step), (b.combo_id, b.success, b.attack_type, b.trip_step));
        assert_eq!((a.h_s, a.r_pu, a.t_s, a.toi_pct, a.ad_pct), (b.h_s, b.r_pu, b.t_s, b.toi_pct, b.ad_pct));
        match (a.min_dp_a, b.min_dp_a) {
            (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0)),
            (x, y) => assert_eq!(x, y),
        }
    }
    let report = trend_report(&back).unwrap();
    let written = save_trend_report(&dir.path().join("report"), &report).unwrap();
    assert_eq!(written.len(), 6);
    let h = fs::read_to_string(dir.path().join("report/h_s.csv")).unwrap();
    assert_eq!(h.lines().next(), Some("h_s,success_count"));
    assert_eq!(h.lines().count(), 6);
}

#[test]
fn malformed_sweep_files_are_rejected() {
    let dir = tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{SWEEP_HEADER}\n")).unwrap();
    assert!(matches!(load_sweep(&empty), Err(IoError::Malformed { .. })));

    let header = dir.path().join("header.csv");
    fs::write(&header, "a,b,c\n1,2,3\n").unwrap();
    assert!(matches!(load_sweep(&header), Err(IoError::Malformed { .. })));

    let inconsistent = dir.path().join("bad.csv");
    fs::write(&inconsistent, format!("{SWEEP_HEADER}\n0,2,0.2,0.2,2,20,true,NONE,,\n")).unwrap();
    assert!(matches!(load_sweep(&inconsistent), Err(IoError::Malformed { .. })));
}

#[test]
fn sweep_spec_defaults_fill_value_lists() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("spec.json");
    let body = serde_json::json!({ "base_config": base(), "mode": { "kind": "cartesian" } });
    fs::write(&path, body.to_string()).unwrap();
    let spec = load_sweep_spec(&path).unwrap();
    assert_eq!(spec.h_s, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    assert_eq!(spec.goal().horizon, 12);

    let bad = dir.path().join("bad.json");
    let body = serde_json::json!({ "base_config": base(), "h_s": [] });
    fs::write(&bad, body.to_string()).unwrap();
    assert!(matches!(load_sweep_spec(&bad), Err(IoError::Malformed { .. })));
}
