//! Occupancy forecasting for smart buildings from Wi-Fi session logs.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ingest`] parses raw Wi-Fi session logs and aggregates them into
//!    occupancy time series at 15/30/60-minute scales, per access point or
//!    for the whole building.
//! 2. [`preprocess`] turns a series into model-ready supervised data:
//!    differencing, scaling, lag framing, chronological splits, and the
//!    exact inverse transforms.
//! 3. [`arima`] fits ARIMA(p, d, q) models by conditional least squares and
//!    forecasts with them.
//! 4. [`lstm`] implements stacked peephole LSTM networks trained from
//!    scratch with backpropagation through time, in separate (one scale)
//!    and combined (all three scales) configurations.
//! 5. [`experiment`] holds the neuron-count cost model, RMSE evaluation,
//!    grid search, and the model-comparison matrix.
//! 6. [`synth`] generates synthetic session logs with known ground truth so
//!    the whole pipeline is testable end to end.

pub mod arima;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod lstm;
pub mod optim;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
