//! Spatial grid, static cell features, great-circle distance and
//! raster-to-grid aggregation.
//!
//! Cells are laid out on an equirectangular projection about a reference
//! latitude. Row 0 is the southernmost row, column 0 the westernmost column,
//! and `cell_id = row * n_cols + col`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Kilometres per degree of arc on the reference sphere (2*pi*R/360).
pub const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    CoordinateOutOfRange { lat: f64, lon: f64 },
    #[error("invalid grid spec: {0}")]
    InvalidSpec(&'static str),
    #[error("raster has {got} values, expected {expected}")]
    RasterSize { expected: usize, got: usize },
    #[error("raster does not overlap the grid envelope")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Great-circle distance by the haversine formula on a 6371 km sphere.
pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64, GeoError> {
    for p in [a, b] {
        if !(-90.0..=90.0).contains(&p.lat) || !(-180.0..=180.0).contains(&p.lon) {
            return Err(GeoError::CoordinateOutOfRange { lat: p.lat, lon: p.lon });
        }
    }
    Ok(haversine_unchecked(a, b))
}

/// Haversine without the domain check, for hot loops over validated points.
#[inline]
pub fn haversine_unchecked(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = libm::sin(dphi * 0.5);
    let s2 = libm::sin(dlambda * 0.5);
    let h = s1 * s1 + libm::cos(phi1) * libm::cos(phi2) * s2 * s2;
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(h.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// South-west corner of cell (0, 0).
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_km: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Latitude at which the longitudinal cell width is exactly `cell_km`.
    pub ref_lat: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.cell_km > 0.0) {
            return Err(GeoError::InvalidSpec("cell_km must be positive"));
        }
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(GeoError::InvalidSpec("grid needs at least one row and one column"));
        }
        if !(-89.0..=89.0).contains(&self.ref_lat) {
            return Err(GeoError::InvalidSpec("ref_lat must lie within [-89, 89]"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn lat_step(&self) -> f64 {
        self.cell_km / KM_PER_DEGREE
    }

    pub fn lon_step(&self) -> f64 {
        self.cell_km / (KM_PER_DEGREE * libm::cos(self.ref_lat.to_radians()))
    }

    pub fn cell_id(&self, row: usize, col: usize) -> Option<usize> {
        (row < self.n_rows && col < self.n_cols).then(|| row * self.n_cols + col)
    }

    pub fn row_col(&self, cell_id: usize) -> (usize, usize) {
        (cell_id / self.n_cols, cell_id % self.n_cols)
    }

    pub fn center(&self, cell_id: usize) -> LatLon {
        let (r, c) = self.row_col(cell_id);
        LatLon::new(
            self.origin_lat + (r as f64 + 0.5) * self.lat_step(),
            self.origin_lon + (c as f64 + 0.5) * self.lon_step(),
        )
    }

    /// Continuous (row, col) coordinates of a point; integer parts index cells.
    fn fractional_index(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (lat - self.origin_lat) / self.lat_step(),
            (lon - self.origin_lon) / self.lon_step(),
        )
    }
}

/// Returns every cell center in `cell_id` order.
pub fn build_grid(spec: &GridSpec) -> Result<Vec<LatLon>, GeoError> {
    spec.validate()?;
    Ok((0..spec.n_cells()).map(|id| spec.center(id)).collect())
}

/// Cell containing a point; `None` outside the grid envelope. Shared edges
/// belong to the higher-index cell.
pub fn assign_point(spec: &GridSpec, lat: f64, lon: f64) -> Option<usize> {
    let (fr, fc) = spec.fractional_index(lat, lon);
    if !(fr >= 0.0 && fc >= 0.0) {
        return None;
    }
    let r = libm::floor(fr) as usize;
    let c = libm::floor(fc) as usize;
    spec.cell_id(r, c)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub elevation: f64,
    pub slope: f64,
    pub aspect: f64,
    pub green_ratio: f64,
    pub impervious_ratio: f64,
    pub transformer_count: u32,
}

impl StaticFeatures {
    /// Feature vector in model order (E, S, A, G, I, C).
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.elevation,
            self.slope,
            self.aspect,
            self.green_ratio,
            self.impervious_ratio,
            self.transformer_count as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cell_id: usize,
    pub row: usize,
    pub col: usize,
    pub center: LatLon,
    pub features: StaticFeatures,
    pub town_id: Option<String>,
    pub county_id: Option<String>,
    pub city_id: Option<String>,
    pub population: Option<f64>,
}

impl GridCell {
    pub fn bare(spec: &GridSpec, cell_id: usize) -> Self {
        let (row, col) = spec.row_col(cell_id);
        Self {
            cell_id,
            row,
            col,
            center: spec.center(cell_id),
            features: StaticFeatures::default(),
            town_id: None,
            county_id: None,
            city_id: None,
            population: None,
        }
    }

    pub fn transformer_count(&self) -> u32 {
        self.features.transformer_count
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let f = &self.features;
        if !(0.0..=1.0).contains(&f.green_ratio) {
            return Err("green_ratio outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&f.impervious_ratio) {
            return Err("impervious_ratio outside [0, 1]");
        }
        if f.green_ratio + f.impervious_ratio > 1.0 + 1e-9 {
            return Err("green_ratio + impervious_ratio exceeds 1");
        }
        if !(0.0..360.0).contains(&f.aspect) {
            return Err("aspect outside [0, 360)");
        }
        Ok(())
    }
}

/// North-row-first raster in geographic degrees (ESRI ASCII grid layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub n_rows: usize,
    pub n_cols: usize,
    pub x_ll: f64,
    pub y_ll: f64,
    pub cell_size: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        x_ll: f64,
        y_ll: f64,
        cell_size: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self, GeoError> {
        if values.len() != n_rows * n_cols {
            return Err(GeoError::RasterSize {
                expected: n_rows * n_cols,
                got: values.len(),
            });
        }
        Ok(Self { n_rows, n_cols, x_ll, y_ll, cell_size, nodata, values })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Geographic center of pixel (row, col); row 0 is the northern edge.
    pub fn pixel_center(&self, row: usize, col: usize) -> LatLon {
        LatLon::new(
            self.y_ll + (self.n_rows as f64 - row as f64 - 0.5) * self.cell_size,
            self.x_ll + (col as f64 + 0.5) * self.cell_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggregateMode {
    Mean,
    ClassRatio(BTreeSet<i64>),
    SlopeMean,
    AspectMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    /// Per-cell value; cells without coverage hold 0.0.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl AggregateResult {
    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }
}

/// Aggregates pixels onto grid cells by pixel-center membership.
///
/// `SlopeMean` and `AspectMean` treat the raster as elevation in metres and
/// derive per-pixel slope/aspect with Horn's 3x3 operator before
/// aggregation. Aspect is a compass bearing of the downslope direction and is
/// averaged as a circular mean; flat pixels carry no direction and are
/// skipped.
pub fn aggregate_raster(
    raster: &Raster,
    spec: &GridSpec,
    mode: &AggregateMode,
) -> Result<AggregateResult, GeoError> {
    spec.validate()?;
    let n = spec.n_cells();
    let mut sum = vec![0.0f64; n];
    let mut sum_y = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    let mut overlap = false;

    for row in 0..raster.n_rows {
        for col in 0..raster.n_cols {
            let p = raster.pixel_center(row, col);
            let Some(cell) = assign_point(spec, p.lat, p.lon) else {
                continue;
            };
            overlap = true;
            let v = raster.get(row, col);
            if raster.is_nodata(v) {
                continue;
            }
            match mode {
                AggregateMode::Mean => {
                    sum[cell] += v;
                    count[cell] += 1;
                }
                AggregateMode::ClassRatio(classes) => {
                    if classes.contains(&(libm::round(v) as i64)) {
                        sum[cell] += 1.0;
                    }
                    count[cell] += 1;
                }
                AggregateMode::SlopeMean => {
                    let (dzdx, dzdy) = horn_gradient(raster, row, col);
                    let slope = libm::atan(libm::sqrt(dzdx * dzdx + dzdy * dzdy)).to_degrees();
                    sum[cell] += slope;
                    count[cell] += 1;
                }
                AggregateMode::AspectMean => {
                    let (dzdx, dzdy) = horn_gradient(raster, row, col);
                    if let Some(aspect) = compass_aspect(dzdx, dzdy) {
                        let rad = aspect.to_radians();
                        sum[cell] += libm::sin(rad);
                        sum_y[cell] += libm::cos(rad);
                        count[cell] += 1;
                    }
                }
            }
        }
    }
    if !overlap {
        return Err(GeoError::NoOverlap);
    }

    let mut values = vec![0.0; n];
    let mut missing = vec![false; n];
    for cell in 0..n {
        if count[cell] == 0 {
            missing[cell] = true;
            continue;
        }
        values[cell] = match mode {
            AggregateMode::AspectMean => {
                let (sx, cy) = (sum[cell], sum_y[cell]);
                if sx == 0.0 && cy == 0.0 {
                    0.0
                } else {
                    let deg = libm::atan2(sx, cy).to_degrees();
                    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
                    if deg >= 360.0 { 0.0 } else { deg }
                }
            }
            _ => sum[cell] / count[cell] as f64,
        };
    }
    Ok(AggregateResult { values, missing })
}

/// Horn's weighted finite differences in metres per metre. `dzdx` grows
/// eastward, `dzdy` grows southward (ESRI convention). Edges replicate the
/// nearest pixel; nodata neighbours take the center value.
fn horn_gradient(r: &Raster, row: usize, col: usize) -> (f64, f64) {
    let center = r.get(row, col);
    let at = |dr: isize, dc: isize| -> f64 {
        let rr = (row as isize + dr).clamp(0, r.n_rows as isize - 1) as usize;
        let cc = (col as isize + dc).clamp(0, r.n_cols as isize - 1) as usize;
        let v = r.get(rr, cc);
        if r.is_nodata(v) { center } else { v }
    };
    let (a, b, c) = (at(-1, -1), at(-1, 0), at(-1, 1));
    let (d, f) = (at(0, -1), at(0, 1));
    let (g, h, i) = (at(1, -1), at(1, 0), at(1, 1));
    let lat = r.pixel_center(row, col).lat.to_radians();
    let dy_m = r.cell_size * KM_PER_DEGREE * 1000.0;
    let dx_m = dy_m * libm::cos(lat);
    let dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * dx_m);
    let dzdy = ((g + 2.0 * h + i) - (a + 2.0 * b + c)) / (8.0 * dy_m);
    (dzdx, dzdy)
}

/// Downslope bearing in degrees clockwise from north, `None` on flat ground.
fn compass_aspect(dzdx: f64, dzdy: f64) -> Option<f64> {
    if dzdx == 0.0 && dzdy == 0.0 {
        return None;
    }
    let aspect = libm::atan2(dzdy, -dzdx).to_degrees();
    let compass = if aspect < 0.0 {
        90.0 - aspect
    } else if aspect > 90.0 {
        360.0 - aspect + 90.0
    } else {
        90.0 - aspect
    };
    Some(if compass >= 360.0 { compass - 360.0 } else { compass })
}
