#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stocast_core::synth::SyntheticConfig;

/// Eight by ten cells, 400 transformers and two 30-hour storms whose eyes
/// pass over the grid.
pub fn small_config() -> SyntheticConfig {
    let mut cfg = SyntheticConfig::default();
    cfg.grid.n_rows = 8;
    cfg.grid.n_cols = 10;
    cfg.grid.ref_lat = 28.15;
    cfg.n_transformers = 400;
    cfg.n_stations = 40;
    cfg.window_hours = 30;
    cfg.storms.truncate(2);
    for s in &mut cfg.storms {
        s.waypoints = vec![
            stocast_core::synth::Waypoint { hour: 0.0, lat: 27.2, lon: 120.9 },
            stocast_core::synth::Waypoint { hour: 29.0, lat: 28.9, lon: 119.6 },
        ];
    }
    cfg
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stocast")
}

pub fn stocast(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = stocast(args);
    assert!(
        out.status.success(),
        "stocast {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes the small config and runs `synth` plus `ingest` for every storm.
/// Returns the panel directories.
pub fn synth_and_ingest(root: &Path) -> Vec<PathBuf> {
    let cfg_path = root.join("synth.json");
    std::fs::write(&cfg_path, serde_json::to_vec_pretty(&small_config()).unwrap()).unwrap();
    let data = root.join("data");
    ok(&["synth", "--config", s(&cfg_path), "--out", s(&data)]);
    let grid = data.join("grid.csv");
    small_config()
        .storms
        .iter()
        .map(|st| {
            let out = root.join("panels").join(&st.event_id);
            ok(&["ingest", "--event", s(&data.join(&st.event_id)), "--grid", s(&grid), "--out", s(&out)]);
            out
        })
        .collect()
}
