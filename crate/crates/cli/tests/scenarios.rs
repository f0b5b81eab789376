use std::fs;
use std::process::Command;

use lamb_lab::monitors::DiagnosticsRecord;
use lamb_lab::GriddedField;
use lamb_lab_cli::emit::{CSV_NAME, REPORT_NAME};
use lamb_lab_cli::{emit, execute, exit, parse_config, parse_str, preset_dir, ScenarioConfig};

fn small_lamb() -> ScenarioConfig {
    parse_str(
        r#"{
            "name": "small",
            "scenario": "single_dipole",
            "dipoles": [{ "speed": 1.0, "radius": 1.0, "center": 0.0 }],
            "h": 0.0625,
            "integrator": { "dt": 0.02, "t_end": 0.2 },
            "monitor": { "cadence": 2 }
        }"#,
    )
    .unwrap()
}

#[test]
fn every_preset_parses_and_validates() {
    let mut n = 0;
    for entry in fs::read_dir(preset_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(cfg.violations().is_empty(), "{}: {:?}", path.display(), cfg.violations());
        n += 1;
    }
    assert_eq!(n, 7);
}

#[test]
fn csv_and_report_round_trip() {
    let out = execute(&small_lamb(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit(&out, dir.path()).unwrap();

    let text = fs::read_to_string(dir.path().join(CSV_NAME)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# schema: {}", DiagnosticsRecord::SCHEMA));
    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let (p, b) = out.layout();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, DiagnosticsRecord::header(p, b));
    let rows: Vec<Vec<f64>> = rd.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), out.records.len());
    for (row, rec) in rows.iter().zip(&out.records) {
        let want = rec.row();
        assert_eq!(row.len(), want.len());
        for (a, b) in row.iter().zip(&want) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_NAME)).unwrap()).unwrap();
    assert_eq!(report["schema"], "lamb-lab-report/1");
    assert_eq!(report["samples"].as_u64().unwrap() as usize, out.records.len());
    assert_eq!(report["healthy"].as_bool().unwrap(), out.report.healthy);
}

#[test]
fn runs_are_deterministic() {
    let a = execute(&small_lamb(), None).unwrap();
    let b = execute(&small_lamb(), None).unwrap();
    let rows = |o: &lamb_lab_cli::Outcome| o.records.iter().map(|r| r.row()).collect::<Vec<_>>();
    let (ra, rb) = (rows(&a), rows(&b));
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        for (u, v) in x.iter().zip(y) {
            assert!(u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan()));
        }
    }
}

#[test]
fn snapshots_reload_with_the_circulation() {
    let mut cfg = small_lamb();
    cfg.output.snapshot_every = 2;
    let dir = tempfile::tempdir().unwrap();
    let out = execute(&cfg, Some(dir.path())).unwrap();
    let mut snaps: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    snaps.sort();
    assert_eq!(snaps.len(), out.records.len().div_ceil(2));
    let g = GriddedField::read_snapshot(std::io::BufReader::new(fs::File::open(&snaps[0]).unwrap())).unwrap();
    let c0 = out.records[0].circulation;
    assert!((g.integral() - c0).abs() < 1e-9 * c0, "{} vs {c0}", g.integral());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_lamblab");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(bin)
        .args(["run", preset_dir().join("point_vortex_ladder.json").to_str().unwrap(), "--out"])
        .arg(dir.path().join("pv"))
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(exit::OK));
    assert!(dir.path().join("pv").join(REPORT_NAME).exists());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{ "name": "x", "scenario": "single_dipole", "dipoles": [], "h": -1.0 }"#).unwrap();
    let err = Command::new(bin).args(["run", bad.to_str().unwrap()]).status().unwrap();
    assert_eq!(err.code(), Some(exit::ERROR));
}
