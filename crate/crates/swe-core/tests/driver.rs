mod common;

use std::fs;

use swe_core::config::{Indicator, RunConfig, Settings};
use swe_core::driver::{run_full, volume, Simulation};
use swe_core::output::{FrameRow, CSV_HEADER};
use swe_core::scenario::ScenarioId;

fn short(id: ScenarioId, t_end: f64) -> Settings {
    let mut s = Settings::preset(id);
    s.base_n = 10;
    s.t_end = t_end;
    s
}

/// Pull the values of a named ASCII `DataArray` out of a VTU file.
fn data_array(vtu: &str, name: &str) -> Vec<f64> {
    let tag = format!("Name=\"{name}\"");
    let start = vtu.find(&tag).unwrap_or_else(|| panic!("no array {name}"));
    let body = &vtu[start..];
    let open = body.find('>').unwrap() + 1;
    let close = body.find("</DataArray>").unwrap();
    body[open..close]
        .split_whitespace()
        .map(|x| x.parse().unwrap())
        .collect()
}

#[test]
fn every_preset_starts_consistently() {
    for id in ScenarioId::ALL {
        let sim = Simulation::new(short(id, 0.01)).unwrap();
        let (vol, _, min_h) = sim.diagnostics();
        assert!(vol > 0.0, "{id}");
        assert!(min_h >= 0.0, "{id}");
        assert_eq!(vol, volume(&sim.snap, &sim.state));
    }
}

#[test]
fn outputs_are_written_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(ScenarioId::Ex3Dambreak, 0.1);
    s.output_interval = Some(0.05);
    s.output_dir = Some(dir.path().to_path_buf());
    let (rep, snap, u) = run_full(s).unwrap();
    assert_eq!(rep.frames.len(), 3);

    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<FrameRow> = lines.map(|l| FrameRow::parse_csv(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(
        rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        vec![0.0, 0.05, 0.1]
    );
    assert!(dir.path().join("report.json").exists());

    let last = fs::read_to_string(dir.path().join("frame_00002.vtu")).unwrap();
    let (w, h, b) = (
        data_array(&last, "w"),
        data_array(&last, "h"),
        data_array(&last, "B"),
    );
    assert_eq!(w.len(), snap.tri.num_cells());
    assert_eq!(&w[..], &u.u.iter().map(|x| x[0]).collect::<Vec<_>>()[..]);
    // Point data B comes first; the cell array follows it.
    let tag = "Name=\"B\"";
    let second = &last[last.find(tag).unwrap() + tag.len()..];
    let cell_b = data_array(second, "B");
    assert_eq!(b.len(), snap.tri.num_vertices());
    for j in 0..w.len() {
        assert!((w[j] - cell_b[j] - h[j]).abs() <= 1e-15 * w[j].abs().max(1.0));
    }
}

/// Reductions run in a fixed order, so the thread count does not change
/// results.
#[test]
fn results_do_not_depend_on_thread_count() {
    let mut out = Vec::new();
    for threads in [1, 3] {
        let mut s = short(ScenarioId::Ex2Perturb, 0.05);
        s.threads = Some(threads);
        let (rep, _, u) = run_full(s).unwrap();
        let rows: Vec<(f64, f64, f64, f64, usize)> = rep
            .frames
            .iter()
            .map(|f| (f.t, f.mass, f.max_dev, f.min_h, f.active_cells))
            .collect();
        out.push((rows, u.u, rep.steps, rep.adapt_events));
    }
    assert_eq!(out[0], out[1]);
}

#[test]
fn gradient_indicator_runs_adapt() {
    let mut s = short(ScenarioId::Ex2Perturb, 0.05);
    s.indicator = Indicator::Gradient;
    let (rep, snap, _) = run_full(s).unwrap();
    assert!(rep.adapt_events > 0);
    assert!(snap.levels.iter().any(|&l| l > 0));
}

#[test]
fn config_files_overlay_presets() {
    let cfg =
        RunConfig::parse(r#"{"scenario": "ex1", "base_n": 12, "g": 2.0, "indicator": "gradient"}"#)
            .unwrap();
    let s = cfg.resolve().unwrap();
    assert_eq!(
        (s.base_n, s.solver.g, s.indicator),
        (12, 2.0, Indicator::Gradient)
    );
    assert_eq!(s.t_end, 0.07);
    assert!(RunConfig::parse(r#"{"scenario": "ex1", "bogus": 1}"#).is_err());
    assert!(RunConfig::parse(r#"{"scenario": "ex9"}"#).is_err());
    assert!(RunConfig::parse(r#"{"scenario": "ex1", "sigma_tol": 2.0}"#)
        .unwrap()
        .resolve()
        .is_err());
    assert!(RunConfig::parse(r#"{"base_n": 4}"#)
        .unwrap()
        .resolve()
        .is_err());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"scenario": "ex3_dambreak", "t_end": 0.2}"#).unwrap();
    assert_eq!(RunConfig::load(&p).unwrap().resolve().unwrap().t_end, 0.2);
    assert!(RunConfig::load(dir.path().join("missing.json")).is_err());
}
