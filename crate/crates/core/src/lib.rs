//! Numerical core of a gridded, hourly power-outage forecaster for tropical
//! cyclones.
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! files, clocks or the command line lives in the `stocast` companion crate.
//!
//! Pipeline, bottom up:
//! - [`geo`]: 4 km grid, static cell features, haversine distance, raster aggregation.
//! - [`ingest`]: outage cleaning, IDW and track interpolation, [`ingest::EventPanel`] assembly.
//! - [`dataset`]: active cells, spatial split, 12-hour sliding windows, Z-scores.
//! - [`net`]: the GRU + fully connected network with hand-written backpropagation.
//! - [`train`]: weighted Huber loss, Adam, plateau scheduler, early stopping, leave-one-storm-out.
//! - [`forecast`]: rolling nowcast and long-term schemes, error decomposition.
//! - [`eval`]: metrics, regional aggregation, grouped Shapley attribution.
//! - [`synth`]: synthetic cyclones with known ground truth.
#![cfg_attr(not(test), no_std)]
// `!(x >= lo)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dataset;
pub mod eval;
pub mod forecast;
pub mod geo;
pub mod ingest;
pub mod net;
pub mod rng;
pub mod synth;
pub mod train;
