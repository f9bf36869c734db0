mod common;

use stocast::formats::{
    format_hour, format_minute, parse_hour, parse_time, read_asc, read_event_dir, read_grid, read_panel, write_asc,
    write_event_dir, write_grid, write_panel, Grid,
};
use stocast::pipeline::{event_files, ingest_files, synthetic_issues, write_synthetic};
use stocast::runs::{read_issue, read_run, write_issue, write_run};
use stocast::Error;
use stocast_core::forecast::{run_nowcast, WeatherMode};
use stocast_core::geo::Raster;
use stocast_core::net::{init_params, Architecture};
use stocast_core::synth::{gen_event, generate_world, IssuePerturbation};

#[test]
fn time_parsing_and_formatting() {
    assert_eq!(parse_time("1970-01-01T01:30:00Z"), Ok(90));
    assert_eq!(parse_time("1970-01-01T09:30:59+08:00"), Ok(90));
    assert_eq!(format_minute(90), "1970-01-01T01:30:00+00:00");
    assert_eq!(parse_hour("2019-08-10T01:00:00Z"), Ok(434_833));
    assert_eq!(format_hour(434_833), "2019-08-10T01:00:00+00:00");
    assert!(parse_hour("2019-08-10T01:30:00Z").is_err());
    assert!(parse_time("yesterday").is_err());
    // Before the epoch the minute still floors.
    assert_eq!(parse_time("1969-12-31T23:59:30Z"), Ok(-1));
}

#[test]
fn ascii_raster_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = Raster::new(2, 3, 120.0, 28.0, 0.01, -9999.0, vec![1.0, 2.5, -9999.0, 4.0, 5.0, 6.25]).unwrap();
    let p = dir.path().join("r.asc");
    write_asc(&p, &r).unwrap();
    let back = read_asc(&p).unwrap();
    assert_eq!(back, r);
}

#[test]
fn truncated_raster_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.asc");
    std::fs::write(&p, "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3\n").unwrap();
    assert!(matches!(read_asc(&p), Err(Error::Format { .. })));
}

#[test]
fn grid_and_event_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config();
    let world = generate_world(&cfg).unwrap();
    let grid = Grid { spec: world.spec, cells: world.cells.clone() };
    write_grid(&dir.path().join("grid.csv"), &grid).unwrap();
    let back = read_grid(&dir.path().join("grid.csv")).unwrap();
    assert_eq!(back.spec, grid.spec);
    assert_eq!(back.cells.len(), grid.cells.len());
    for (a, b) in back.cells.iter().zip(&grid.cells) {
        assert_eq!(a.cell_id, b.cell_id);
        assert_eq!(a.features.transformer_count, b.features.transformer_count);
        assert!((a.features.elevation - b.features.elevation).abs() < 1e-9);
        assert_eq!(a.county_id, b.county_id);
    }

    let ev = gen_event(&cfg, &world, 0).unwrap();
    let files = event_files(&ev);
    let ev_dir = dir.path().join("storm");
    write_event_dir(&ev_dir, &files, Some(&ev.truth)).unwrap();
    let read = read_event_dir(&ev_dir).unwrap();
    assert_eq!(read.info, files.info);
    assert_eq!(read.outages, files.outages);
    assert_eq!(read.transformers.len(), files.transformers.len());
    assert_eq!(read.observations.len(), files.observations.len());

    // Panels built from the written files equal panels built in memory.
    let (p_mem, _) = ingest_files(&files, &grid).unwrap();
    let (p_disk, _) = ingest_files(&read, &back).unwrap();
    assert_eq!(p_mem.total_outages(), p_disk.total_outages());
    let max_diff = p_mem.values.iter().zip(&p_disk.values).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(max_diff < 1e-4, "panel differs by {max_diff}");
}

#[test]
fn missing_event_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config();
    let world = generate_world(&cfg).unwrap();
    let ev = gen_event(&cfg, &world, 0).unwrap();
    write_event_dir(dir.path(), &event_files(&ev), None).unwrap();
    std::fs::remove_file(dir.path().join("track.csv")).unwrap();
    let err = read_event_dir(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("track.csv"), "{err}");
}

#[test]
fn panel_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (_, events) = write_synthetic(&common::small_config(), dir.path()).unwrap();
    let grid = read_grid(&dir.path().join("grid.csv")).unwrap();
    let (panel, _) = ingest_files(&event_files(&events[0]), &grid).unwrap();
    write_panel(&dir.path().join("panel"), &panel).unwrap();
    let back = read_panel(&dir.path().join("panel")).unwrap();
    assert_eq!(back, panel);
}

#[test]
fn issue_file_round_trip_and_grid_check() {
    let dir = tempfile::tempdir().unwrap();
    let (_, events) = write_synthetic(&common::small_config(), dir.path()).unwrap();
    let grid = read_grid(&dir.path().join("grid.csv")).unwrap();
    let (panel, _) = ingest_files(&event_files(&events[0]), &grid).unwrap();
    let pert = IssuePerturbation { wind_bias: 0.1, rain_bias: -0.2, noise_sd: 0.05, seed: 9 };
    let issues = synthetic_issues(&panel, &events[0].track, 12, &pert).unwrap();
    assert_eq!(issues.len(), 3);
    let p = dir.path().join("i.issue");
    write_issue(&p, &issues[1], &grid.spec).unwrap();
    let back = read_issue(&p, &grid.spec).unwrap();
    assert_eq!(back.wind, issues[1].wind);
    assert_eq!(back.rain, issues[1].rain);
    assert_eq!(back.issue_hour, issues[1].issue_hour);

    let mut other = grid.spec;
    other.n_cols += 1;
    assert!(matches!(read_issue(&p, &other), Err(Error::Format { .. })));
}

#[test]
fn run_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, events) = write_synthetic(&common::small_config(), dir.path()).unwrap();
    let grid = read_grid(&dir.path().join("grid.csv")).unwrap();
    let (panel, _) = ingest_files(&event_files(&events[0]), &grid).unwrap();
    let model = init_params(Architecture::STOCAST, 4);
    let run = run_nowcast(&model, &grid.cells, &panel, &[], WeatherMode::Ideal, panel.start_hour + 6, 3).unwrap();
    let out = dir.path().join("run");
    let summary = write_run(&out, &run, &grid.cells, &grid.spec, true).unwrap();
    assert!(out.join("iteration_02.pgm").is_file());
    let back = read_run(&out).unwrap();
    assert_eq!(back.n_iterations, 3);
    for (a, b) in back.iterations.iter().zip(&run.iterations) {
        assert_eq!(a.origin_hour, b.origin_hour);
        assert_eq!(a.pred_counts, b.pred_counts);
        assert_eq!(a.obs_counts, b.obs_counts);
    }
    let pgm = std::fs::read(out.join("iteration_00.pgm")).unwrap();
    let header = format!("P5\n{} {}\n255\n", grid.spec.n_cols, grid.spec.n_rows);
    assert_eq!(&pgm[..header.len()], header.as_bytes());
    assert_eq!(pgm.len(), header.len() + grid.cells.len());
    assert_eq!(summary.n_iterations, 3);
}
