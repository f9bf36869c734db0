use super::*;
use crate::ingest::{build_event_panel, clean_outages, count_transformers, IdwParams, PanelInputs, CH_OUTAGE};
use proptest::prelude::*;

fn small_config() -> SyntheticConfig {
    let mut cfg = SyntheticConfig::default();
    cfg.grid.n_rows = 8;
    cfg.grid.n_cols = 10;
    cfg.n_transformers = 400;
    cfg.n_stations = 25;
    cfg.window_hours = 24;
    cfg.storms.truncate(1);
    cfg.storms[0].waypoints = vec![
        Waypoint { hour: 0.0, lat: 27.7, lon: 120.6 },
        Waypoint { hour: 23.0, lat: 28.6, lon: 120.2 },
    ];
    cfg
}

fn flat_hazard_config(beta0: f64, n_transformers: usize, hours: usize) -> SyntheticConfig {
    let mut cfg = small_config();
    cfg.n_transformers = n_transformers;
    cfg.window_hours = hours;
    cfg.fragility = FragilityParams { beta0, beta_w: 0.0, beta_r: 0.0, cell_sd: 0.0 };
    cfg
}

fn event(cfg: &SyntheticConfig) -> (World, SyntheticEvent) {
    let world = generate_world(cfg).unwrap();
    let ev = gen_event(cfg, &world, 0).unwrap();
    (world, ev)
}

fn ingest_event(world: &World, ev: &SyntheticEvent) -> (EventPanel, Vec<ingest::IngestWarning>) {
    let known: BTreeSet<String> = ev.transformers.iter().map(|t| t.transformer_id.clone()).collect();
    let end = ev.start_hour + ev.n_hours as i64;
    let cleaned = clean_outages(&ev.outages, &known, ev.start_hour, end);
    let counts = count_transformers(&world.spec, &ev.transformers);
    build_event_panel(&PanelInputs {
        event_id: &ev.event_id,
        spec: &world.spec,
        transformers: &ev.transformers,
        observations: &ev.observations,
        track: &ev.track,
        outages: &cleaned,
        start_hour: ev.start_hour,
        n_hours: ev.n_hours,
        idw: IdwParams::default(),
        transformer_counts: Some(&counts),
    })
    .unwrap()
}

#[test]
fn rankine_profile_examples() {
    let v = VortexParams { v_max: 50.0, r_max_km: 40.0, decay_alpha: 0.6 };
    assert_eq!(wind_at(0.0, &v), 0.0);
    assert_eq!(wind_at(40.0, &v), 50.0);
    assert!((wind_at(20.0, &v) - 25.0).abs() < 1e-12);
    let expect = 50.0 * 0.5f64.powf(0.6);
    assert!((wind_at(80.0, &v) - expect).abs() < 1e-12);
    assert!((wind_at(80.0, &v) - 32.99).abs() < 5e-3);
    // continuity at r_max from both sides
    assert!((wind_at(40.0 + 1e-9, &v) - 50.0).abs() < 1e-6);
}

#[test]
fn rain_kernel_examples() {
    let r = RainParams { peak_mm: 30.0, efold_km: 50.0 };
    assert_eq!(rain_at(0.0, &r), 30.0);
    assert!((rain_at(50.0, &r) - 30.0 / core::f64::consts::E).abs() < 1e-12);
}

proptest! {
    #[test]
    fn rain_decreases_with_distance(a in 0.0f64..500.0, b in 0.0f64..500.0, peak in 0.1f64..100.0, e in 1.0f64..200.0) {
        let p = RainParams { peak_mm: peak, efold_km: e };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(rain_at(lo, &p) >= rain_at(hi, &p));
    }

    #[test]
    fn wind_never_exceeds_peak(r in 0.0f64..1000.0, vmax in 1.0f64..80.0, rmax in 5.0f64..80.0, alpha in 0.1f64..1.5) {
        let v = VortexParams { v_max: vmax, r_max_km: rmax, decay_alpha: alpha };
        let w = wind_at(r, &v);
        prop_assert!(w >= 0.0 && w <= vmax + 1e-12);
    }
}

#[test]
fn default_config_is_valid_and_sized() {
    let cfg = SyntheticConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.grid.n_cells(), 1020);
    assert_eq!(cfg.n_transformers, 5000);
    assert_eq!(cfg.window_hours, 66);
    assert_eq!(cfg.storms.len(), 4);
}

#[test]
fn config_validation_names_the_problem() {
    let mut cfg = small_config();
    cfg.window_hours = 11;
    assert!(matches!(cfg.validate(), Err(SynthError::Config(m)) if m.contains("window_hours")));
    let mut cfg = small_config();
    cfg.storms[0].vortex.v_max = 0.0;
    assert!(matches!(cfg.validate(), Err(SynthError::Config(m)) if m.contains("v_max")));
    let mut cfg = small_config();
    cfg.storms[0].vortex.r_max_km = -1.0;
    assert!(matches!(cfg.validate(), Err(SynthError::Config(m)) if m.contains("r_max_km")));
    let mut cfg = small_config();
    cfg.storms[0].vortex.decay_alpha = 0.0;
    assert!(matches!(cfg.validate(), Err(SynthError::Config(m)) if m.contains("decay_alpha")));
}

#[test]
fn zero_hazard_sentinel_yields_no_outages() {
    let cfg = flat_hazard_config(f64::NEG_INFINITY, 300, 24);
    let (_, ev) = event(&cfg);
    assert!(ev.outages.is_empty());
    assert!(ev.truth.cell_hour_counts.is_empty());
}

#[test]
fn constant_hazard_matches_binomial_survival() {
    let p: f64 = 0.01;
    let beta0 = (p / (1.0 - p)).ln();
    let cfg = flat_hazard_config(beta0, 1000, 50);
    let (_, ev) = event(&cfg);
    let q = 1.0 - (1.0 - p).powi(50);
    let mean = 1000.0 * q;
    let sd = (1000.0 * q * (1.0 - q)).sqrt();
    assert!((mean - 394.99).abs() < 0.01);
    let n = ev.outages.len() as f64;
    assert!((n - mean).abs() <= 3.0 * sd, "{n} outages, expected {mean} +- {}", 3.0 * sd);
}

#[test]
fn each_transformer_fails_at_most_once() {
    let (_, ev) = event(&small_config());
    let mut seen = BTreeSet::new();
    for o in &ev.truth.outages {
        assert!(seen.insert(o.transformer_id.as_str()));
    }
    assert!(!ev.outages.is_empty());
    let total: u32 = ev.truth.cell_hour_counts.iter().map(|c| c.count).sum();
    assert_eq!(total as usize, ev.truth.total_outages());
}

#[test]
fn stronger_storm_never_reduces_outages() {
    let base = small_config();
    let world = generate_world(&base).unwrap();
    let mut prev: Option<BTreeMap<String, i64>> = None;
    for v_max in [20.0, 35.0, 50.0, 65.0] {
        let mut cfg = base.clone();
        cfg.storms[0].vortex.v_max = v_max;
        let ev = gen_event(&cfg, &world, 0).unwrap();
        let times: BTreeMap<String, i64> =
            ev.truth.outages.iter().map(|o| (o.transformer_id.clone(), o.time / 60)).collect();
        if let Some(prev) = &prev {
            assert!(times.len() >= prev.len());
            for (id, hour) in prev {
                assert!(times[id] <= *hour, "{id} failed later under a stronger storm");
            }
        }
        prev = Some(times);
    }
}

#[test]
fn ingest_round_trip_reproduces_truth() {
    let mut cfg = small_config();
    cfg.observation_noise = 0.0;
    let (world, ev) = event(&cfg);
    let (panel, warnings) = ingest_event(&world, &ev);
    assert!(warnings.is_empty(), "{warnings:?}");
    let mut expected = vec![0u32; panel.n_cells * panel.n_hours];
    for c in &ev.truth.cell_hour_counts {
        expected[c.cell_id * panel.n_hours + (c.hour - panel.start_hour) as usize] = c.count;
    }
    for cell in 0..panel.n_cells {
        for h in 0..panel.n_hours {
            assert_eq!(panel.get(cell, h, CH_OUTAGE), expected[cell * panel.n_hours + h] as f64);
        }
    }
    assert_eq!(panel.total_outages() as usize, ev.truth.total_outages());
}

#[test]
fn noisy_round_trip_still_matches_outages() {
    let (world, ev) = event(&small_config());
    let (panel, _) = ingest_event(&world, &ev);
    assert_eq!(panel.total_outages() as usize, ev.truth.total_outages());
}

#[test]
fn track_covers_the_window_and_matches_truth_eye() {
    let (_, ev) = event(&small_config());
    assert_eq!(ev.track[0].time, ev.start_hour * 60);
    assert!(ev.track.last().unwrap().time >= (ev.start_hour + ev.n_hours as i64 - 1) * 60);
    assert_eq!(ev.truth.eye.len(), ev.n_hours);
    let knot = ev.track[2];
    assert_eq!(ev.truth.eye[6], knot.eye);
}

#[test]
fn noise_free_stations_sample_the_analytic_field() {
    let mut cfg = small_config();
    cfg.observation_noise = 0.0;
    let (_, ev) = event(&cfg);
    let s = &cfg.storms[0];
    for o in ev.observations.iter().step_by(37) {
        let eye = ev.truth.eye[(o.hour - ev.start_hour) as usize];
        let r = geo::haversine_unchecked(o.location, eye);
        assert_eq!(o.wind, wind_at(r, &s.vortex));
        assert_eq!(o.rain, rain_at(r, &s.rain));
    }
}

#[test]
fn world_is_deterministic_and_consistent() {
    let cfg = small_config();
    let a = generate_world(&cfg).unwrap();
    let b = generate_world(&cfg).unwrap();
    assert_eq!(a, b);
    let total: u32 = a.cells.iter().map(|c| c.transformer_count()).sum();
    assert_eq!(total as usize, cfg.n_transformers);
    for c in &a.cells {
        c.validate().unwrap();
        assert!(c.town_id.is_some() && c.county_id.is_some() && c.city_id.is_some());
    }
    assert_eq!(count_transformers(&a.spec, &a.transformers), a.cells.iter().map(|c| c.transformer_count()).collect::<Vec<_>>());
    let e1 = gen_event(&cfg, &a, 0).unwrap();
    let e2 = gen_event(&cfg, &b, 0).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn zero_bias_issue_equals_ideal_weather() {
    let (world, ev) = event(&small_config());
    let (panel, _) = ingest_event(&world, &ev);
    let issue = gen_forecast_issue(&panel, &ev.track, ev.start_hour + 6, 12, &IssuePerturbation::default()).unwrap();
    issue.validate(panel.n_cells).unwrap();
    for c in 0..panel.n_cells {
        for h in 0..12 {
            assert_eq!(issue.wind[c * 12 + h], panel.values[panel.index(c, h + 6, CH_WIND)]);
            assert_eq!(issue.rain[c * 12 + h], panel.values[panel.index(c, h + 6, CH_RAIN)]);
        }
    }
    let d = issue.distances(&world.cells).unwrap();
    for c in 0..panel.n_cells {
        for h in 0..12 {
            assert_eq!(d[c * 12 + h], panel.values[panel.index(c, h + 6, ingest::CH_DIST)]);
        }
    }
}

#[test]
fn wind_bias_scales_every_value() {
    let (world, ev) = event(&small_config());
    let (panel, _) = ingest_event(&world, &ev);
    let pert = IssuePerturbation { wind_bias: 0.3, ..Default::default() };
    let issue = gen_forecast_issue(&panel, &ev.track, ev.start_hour, 24, &pert).unwrap();
    for c in 0..panel.n_cells {
        for h in 0..24 {
            assert_eq!(issue.wind[c * 24 + h], (panel.get(c, h, CH_WIND) * 1.3) as f32);
            assert_eq!(issue.rain[c * 24 + h], panel.values[panel.index(c, h, CH_RAIN)]);
        }
    }
}

#[test]
fn seeded_issue_noise_is_reproducible() {
    let (world, ev) = event(&small_config());
    let (panel, _) = ingest_event(&world, &ev);
    let pert = IssuePerturbation { noise_sd: 0.1, seed: 9, ..Default::default() };
    let a = gen_forecast_issue(&panel, &ev.track, ev.start_hour, 12, &pert).unwrap();
    let b = gen_forecast_issue(&panel, &ev.track, ev.start_hour, 12, &pert).unwrap();
    assert_eq!(a, b);
    let c = gen_forecast_issue(&panel, &ev.track, ev.start_hour, 12, &IssuePerturbation { seed: 10, ..pert }).unwrap();
    assert_ne!(a.wind, c.wind);
    assert!(matches!(
        gen_forecast_issue(&panel, &ev.track, ev.start_hour + 20, 12, &pert),
        Err(SynthError::IssueOutsidePanel { .. })
    ));
}

#[test]
fn beta0_sentinel_survives_serialization() {
    let f = FragilityParams { beta0: f64::NEG_INFINITY, beta_w: 0.0, beta_r: 0.0, cell_sd: 0.0 };
    assert_eq!(f.hazard(100.0, 100.0, 5.0), 0.0);
    let mut cfg = small_config();
    cfg.fragility = f;
    cfg.validate().unwrap();
}
