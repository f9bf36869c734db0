//! Property tests against the public API of the core crate.

use std::collections::BTreeSet;

use proptest::prelude::*;
use stocast_core::dataset::{slide_windows, window_count, WindowSample, N_STATIC, STRIDE_HOURS, WINDOW_HOURS};
use stocast_core::eval::{compose, exact_shapley, N_GROUPS};
use stocast_core::geo::{GridCell, GridSpec, LatLon};
use stocast_core::ingest::{clean_outages, idw_interpolate, EventPanel, IdwParams, OutageRecord, StationValue};
use stocast_core::train::{huber, whl};

fn sample(seed: u8) -> WindowSample {
    let v = f64::from(seed);
    WindowSample {
        event: 0,
        cell_id: 0,
        t0: 0,
        // Future outage slots are masked in real samples and belong to no group.
        dynamic_in: std::array::from_fn(|h| std::array::from_fn(|c| if c == 3 && h >= 6 { 0.0 } else { v + (h * 4 + c) as f64 })),
        static_in: [v; N_STATIC],
        label: [0.0; 6],
        transformer_count: u32::from(seed) + 1,
    }
}

proptest! {
    #[test]
    fn huber_is_symmetric_and_below_half_square(y in -50.0..50.0f64, f in -50.0..50.0f64, d in 0.01..20.0f64) {
        let h = huber(y, f, d);
        prop_assert!(h >= 0.0);
        prop_assert_eq!(h, huber(f, y, d));
        prop_assert!(h <= (y - f) * (y - f) / 2.0 + 1e-12);
    }

    #[test]
    fn whl_weights_only_above_threshold(y in 0.0..30.0f64, f in 0.0..30.0f64, w in 1.0..2000.0f64, t in 0.0..10.0f64) {
        let base = huber(y, f, 10.0);
        let expect = if y > t { w * base } else { base };
        prop_assert_eq!(whl(y, f, 10.0, w, t), expect);
    }

    #[test]
    fn sliding_windows_match_the_count(n_hours in 12usize..80) {
        let spec = GridSpec { origin_lat: 28.0, origin_lon: 120.0, cell_km: 4.0, n_rows: 1, n_cols: 1, ref_lat: 28.0 };
        let mut cell = GridCell::bare(&spec, 0);
        cell.features.transformer_count = 2;
        let panel = EventPanel::zeros("p", 0, 1, n_hours);
        let w = slide_windows(&panel, 0, &cell, STRIDE_HOURS).unwrap();
        prop_assert_eq!(w.len(), window_count(n_hours, WINDOW_HOURS, STRIDE_HOURS));
        prop_assert!(w.iter().all(|s| s.t0 + WINDOW_HOURS <= n_hours));
    }

    #[test]
    fn idw_stays_within_station_range(
        values in prop::collection::vec((27.0..30.0f64, 119.0..122.0f64, 0.0..80.0f64), 1..30),
        target in (27.0..30.0f64, 119.0..122.0f64),
    ) {
        let ids: Vec<String> = (0..values.len()).map(|i| format!("S{i}")).collect();
        let stations: Vec<StationValue> = values
            .iter()
            .zip(&ids)
            .map(|(&(lat, lon, value), id)| StationValue { station_id: id, location: LatLon::new(lat, lon), value })
            .collect();
        let out = idw_interpolate(&stations, &[LatLon::new(target.0, target.1)], &IdwParams::default()).unwrap().unwrap();
        let lo = values.iter().map(|v| v.2).fold(f64::INFINITY, f64::min);
        let hi = values.iter().map(|v| v.2).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out[0] >= lo - 1e-9 && out[0] <= hi + 1e-9);
    }

    #[test]
    fn cleaning_keeps_at_most_one_hour_per_transformer_inside_the_window(
        recs in prop::collection::vec((0usize..5, 0i64..(48 * 60)), 0..60),
    ) {
        let known: BTreeSet<String> = (0..4).map(|i| format!("T{i}")).collect();
        let records: Vec<OutageRecord> =
            recs.iter().map(|&(t, m)| OutageRecord { transformer_id: format!("T{t}"), time: m }).collect();
        let c = clean_outages(&records, &known, 6, 30);
        prop_assert!(c.first_hour.len() <= known.len());
        for (id, &h) in &c.first_hour {
            prop_assert!(known.contains(id));
            prop_assert!((6..30).contains(&h));
            // No surviving record for this transformer sits in an earlier clean hour.
            let in_hour = |hh: i64| records.iter().filter(|r| &r.transformer_id == id && r.time.div_euclid(60) == hh).count();
            prop_assert!((6..h).all(|hh| in_hour(hh) == 0 || in_hour(hh) > 3));
        }
        prop_assert_eq!(c.unknown_transformer_records, recs.iter().filter(|r| r.0 == 4).count());
    }

    #[test]
    fn compose_selects_groups_by_mask(a in 0u8..100, b in 0u8..100, mask in 0u32..(1 << N_GROUPS)) {
        let (x, z) = (sample(a), sample(b));
        let full = (1u32 << N_GROUPS) - 1;
        prop_assert_eq!(compose(&x, &z, full), x.clone());
        prop_assert_eq!(compose(&x, &z, 0), z.clone());
        // Complementary masks swap roles.
        prop_assert_eq!(compose(&x, &z, mask), compose(&z, &x, full ^ mask));
    }

    #[test]
    fn shapley_is_efficient_and_ignores_dummies(table in prop::collection::vec(-100.0..100.0f64, 16)) {
        let f = |m: u32| table[m as usize] - table[0];
        let phi = exact_shapley(4, f);
        prop_assert!((phi.iter().sum::<f64>() - f(15)).abs() < 1e-9);
        // A player whose marginal contribution is always zero gets zero.
        let dummy = |m: u32| table[(m & 7) as usize];
        prop_assert!(exact_shapley(4, dummy)[3].abs() < 1e-12);
    }
}
