//! Transforms between occupancy series and model-ready supervised data.
//!
//! Differencing, scaling, lag framing, and chronological splitting, each
//! with an exact inverse where one exists. The pipeline order is:
//! difference, then frame, then scale.

use crate::error::{Error, Result};
use crate::ingest::TimedSeries;

/// What [`difference`] needs to undo itself: the first value at every
/// differencing level.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceState {
    pub order: usize,
    /// `seeds[j]` is the first value of the level-`j` series, `j < order`.
    pub seeds: Vec<f64>,
}

/// Apply first-differencing `d` times. Output length is `series.len() - d`.
pub fn difference(series: &[f64], d: usize) -> Result<(Vec<f64>, DifferenceState)> {
    if series.len() <= d {
        return Err(Error::invalid(format!(
            "series of length {} is too short to difference {d} times",
            series.len()
        )));
    }
    let mut current = series.to_vec();
    let mut seeds = Vec::with_capacity(d);
    for _ in 0..d {
        seeds.push(current[0]);
        current = current.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok((current, DifferenceState { order: d, seeds }))
}

/// Exact inverse of [`difference`]: returns the original series, seeds
/// included, of length `diffed.len() + state.order`.
pub fn invert_difference(diffed: &[f64], state: &DifferenceState) -> Result<Vec<f64>> {
    if state.seeds.len() != state.order {
        return Err(Error::invalid(format!(
            "difference state carries {} seeds for order {}",
            state.seeds.len(),
            state.order
        )));
    }
    let mut current = diffed.to_vec();
    for &seed in state.seeds.iter().rev() {
        let mut rebuilt = Vec::with_capacity(current.len() + 1);
        rebuilt.push(seed);
        let mut acc = seed;
        for v in current {
            acc += v;
            rebuilt.push(acc);
        }
        current = rebuilt;
    }
    Ok(current)
}

/// Last value of every differencing level `0..d`, the state needed to
/// integrate forecasts made in differenced units back to original units.
pub fn difference_tails(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if series.len() <= d {
        return Err(Error::invalid(format!(
            "series of length {} is too short for differencing order {d}",
            series.len()
        )));
    }
    let mut current = series.to_vec();
    let mut tails = Vec::with_capacity(d);
    for _ in 0..d {
        tails.push(*current.last().expect("non-empty by length check"));
        current = current.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(tails)
}

/// Integrate level-`d` forecast values down to original units, continuing
/// from the level tails of the observed history. Consumes the tails state
/// so successive calls keep extending the same timeline.
pub fn integrate_forecast(diffed: &[f64], tails: &mut [f64]) -> Vec<f64> {
    diffed
        .iter()
        .map(|&v| {
            let mut x = v;
            for tail in tails.iter_mut().rev() {
                x += *tail;
                *tail = x;
            }
            x
        })
        .collect()
}

/// Scaling family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerKind {
    /// Affine map of the training range onto [-1, 1], unclipped outside it.
    MinMaxSymmetric,
    /// `x -> log10(x + 1)`, for non-negative count data.
    LogPlusOne,
}

/// Fitted scaler parameters. `min`/`max` are meaningful only for
/// [`ScalerKind::MinMaxSymmetric`] and are fit on training data only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    pub min: f64,
    pub max: f64,
}

/// Fit scaler parameters on a training slice.
pub fn fit_scaler(train: &[f64], kind: ScalerKind) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit a scaler on an empty series"));
    }
    match kind {
        ScalerKind::MinMaxSymmetric => {
            let min = train.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if min >= max {
                return Err(Error::invalid(
                    "constant training series: min-max scaling is undefined",
                ));
            }
            Ok(ScalerParams { kind, min, max })
        }
        ScalerKind::LogPlusOne => {
            if let Some(bad) = train.iter().find(|v| **v < 0.0) {
                return Err(Error::invalid(format!(
                    "log scaling requires non-negative values, found {bad}"
                )));
            }
            Ok(ScalerParams {
                kind,
                min: 0.0,
                max: 0.0,
            })
        }
    }
}

impl ScalerParams {
    pub fn apply(&self, x: f64) -> Result<f64> {
        match self.kind {
            ScalerKind::MinMaxSymmetric => {
                Ok(2.0 * (x - self.min) / (self.max - self.min) - 1.0)
            }
            ScalerKind::LogPlusOne => {
                if x < 0.0 {
                    return Err(Error::invalid(format!(
                        "log scaling requires non-negative values, found {x}"
                    )));
                }
                Ok((x + 1.0).log10())
            }
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match self.kind {
            ScalerKind::MinMaxSymmetric => (y + 1.0) / 2.0 * (self.max - self.min) + self.min,
            ScalerKind::LogPlusOne => 10f64.powf(y) - 1.0,
        }
    }

    pub fn apply_slice(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.invert(y)).collect()
    }
}

/// Lagged one-scale supervised data: row `r` maps observations
/// `r..r+lag` to observation `r+lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedFrame {
    pub lag: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl SupervisedFrame {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    /// Index into the source series of row `r`'s target.
    pub fn target_index(&self, r: usize) -> usize {
        r + self.lag
    }
}

/// Frame a series into supervised rows with the given lag.
pub fn to_supervised(series: &[f64], lag: usize) -> Result<SupervisedFrame> {
    if lag == 0 {
        return Err(Error::invalid("lag must be positive"));
    }
    if series.len() <= lag {
        return Err(Error::invalid(format!(
            "series of length {} is too short for lag {lag}",
            series.len()
        )));
    }
    let rows = series.len() - lag;
    let mut inputs = Vec::with_capacity(rows);
    let mut targets = Vec::with_capacity(rows);
    for r in 0..rows {
        inputs.push(series[r..r + lag].to_vec());
        targets.push(series[r + lag]);
    }
    Ok(SupervisedFrame {
        lag,
        inputs,
        targets,
    })
}

/// Supervised data over all three scales at once.
///
/// Each row is anchored at a 60-minute boundary `t`: inputs are the last
/// `lag` observations of each scale strictly before `t` in block order
/// [15-min, 30-min, 60-min], and the targets are the next observation of
/// each scale at `t`. Input width is `3 * lag`, target width 3.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleFrame {
    /// Number of scales, always 3 here.
    pub scales: usize,
    pub lag: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// The 60-minute boundary each row is anchored at.
    pub anchors: Vec<i64>,
}

impl MultiScaleFrame {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn input_width(&self) -> usize {
        self.scales * self.lag
    }
}

/// Build a [`MultiScaleFrame`] from three aligned series (15, 30, and
/// 60-minute steps, in that order) over the same wall-clock span.
pub fn to_multiscale(
    s15: &TimedSeries,
    s30: &TimedSeries,
    s60: &TimedSeries,
    lag: usize,
) -> Result<MultiScaleFrame> {
    if lag == 0 {
        return Err(Error::invalid("lag must be positive"));
    }
    let series = [s15, s30, s60];
    let steps = [900i64, 1800, 3600];
    for (s, &step) in series.iter().zip(&steps) {
        if s.step_seconds != step {
            return Err(Error::invalid(format!(
                "expected step {step}s, found {}s",
                s.step_seconds
            )));
        }
        if (s60.start - s.start).rem_euclid(step) != 0 {
            return Err(Error::invalid(
                "series are not aligned to a common 60-minute grid",
            ));
        }
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut anchors = Vec::new();
    for k in 0..s60.len() {
        let t = s60.start + k as i64 * 3600;
        let mut row = Vec::with_capacity(3 * lag);
        let mut target = Vec::with_capacity(3);
        let mut ok = true;
        for (s, &step) in series.iter().zip(&steps) {
            let offset = t - s.start;
            if offset < 0 || offset % step != 0 {
                ok = false;
                break;
            }
            let i = (offset / step) as usize;
            if i < lag || i >= s.len() {
                ok = false;
                break;
            }
            row.extend_from_slice(&s.values[i - lag..i]);
            target.push(s.values[i]);
        }
        if ok {
            inputs.push(row);
            targets.push(target);
            anchors.push(t);
        }
    }
    if inputs.is_empty() {
        return Err(Error::invalid(
            "no 60-minute boundary has enough history across all three scales",
        ));
    }
    Ok(MultiScaleFrame {
        scales: 3,
        lag,
        inputs,
        targets,
        anchors,
    })
}

/// Chronological split: the test side is the final `ceil(fraction * len)`
/// observations, with no shuffling.
pub fn split_train_test<T>(xs: &[T], test_fraction: f64) -> Result<(&[T], &[T])> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let test_len = (test_fraction * xs.len() as f64).ceil() as usize;
    let train_len = xs.len().saturating_sub(test_len);
    if train_len == 0 || test_len == 0 {
        return Err(Error::invalid(format!(
            "split of {} observations at fraction {test_fraction} leaves an empty side",
            xs.len()
        )));
    }
    Ok(xs.split_at(train_len))
}
