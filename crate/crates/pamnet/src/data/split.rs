//! Chronological splitting and train-statistic standardization.
//!
//! Splits never shuffle: train rows strictly precede validation rows,
//! which strictly precede test rows. Standardization statistics are
//! computed on the train rows only and then applied to every row, so
//! nothing about the future leaks into the scaling of the past.

use std::ops::Range;

use crate::error::{PamError, Result};
use crate::tensor::Tensor;

use super::frame::SeriesFrame;

/// How to carve a series into train/validation/test row ranges.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    /// Fractions of the total row count, in chronological order.
    /// Boundaries use floor arithmetic: train ends at `floor(T*train)`,
    /// validation at that plus `floor(T*val)`, test takes the rest.
    Fractions { train: f64, val: f64, test: f64 },
    /// Explicit row counts. Their sum may be less than the total row
    /// count (trailing rows go unused) but never more.
    Counts {
        train: usize,
        val: usize,
        test: usize,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Disjoint, adjacent, chronological row ranges for the three splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `total_rows` chronologically and checks that each split can
/// host at least one forecasting window: the train split must hold a
/// full lookback-plus-horizon window, while validation and test only
/// need `horizon` target rows each (their lookbacks may reach back into
/// the preceding split).
pub fn split_chronological(
    total_rows: usize,
    spec: &SplitSpec,
    lookback: usize,
    horizon: usize,
) -> Result<SplitRanges> {
    if lookback == 0 || horizon == 0 {
        return Err(PamError::Config(
            "lookback and horizon must both be positive".into(),
        ));
    }
    let (t1, t2, end) = match *spec {
        SplitSpec::Fractions { train, val, test } => {
            for (name, f) in [("train", train), ("val", val), ("test", test)] {
                if !f.is_finite() || f < 0.0 {
                    return Err(PamError::Config(format!(
                        "split fraction `{name}` must be a finite non-negative number, got {f}"
                    )));
                }
            }
            let sum = train + val + test;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(PamError::Config(format!(
                    "split fractions must sum to 1, got {sum}"
                )));
            }
            let t = total_rows as f64;
            let t1 = (t * train).floor() as usize;
            let t2 = t1 + (t * val).floor() as usize;
            (t1, t2, total_rows)
        }
        SplitSpec::Counts { train, val, test } => {
            let sum = train + val + test;
            if sum > total_rows {
                return Err(PamError::Config(format!(
                    "split counts sum to {sum} but only {total_rows} rows are available"
                )));
            }
            (train, train + val, sum)
        }
    };

    let (train_len, val_len, test_len) = (t1, t2 - t1, end - t2);
    if train_len < lookback + horizon {
        return Err(PamError::Config(format!(
            "train split has {train_len} rows but needs at least lookback + horizon = {} \
             for one window",
            lookback + horizon
        )));
    }
    if val_len < horizon {
        return Err(PamError::Config(format!(
            "validation split has {val_len} rows but needs at least horizon = {horizon} \
             target rows for one window"
        )));
    }
    if test_len < horizon {
        return Err(PamError::Config(format!(
            "test split has {test_len} rows but needs at least horizon = {horizon} \
             target rows for one window"
        )));
    }

    Ok(SplitRanges {
        train: 0..t1,
        val: t1..t2,
        test: t2..end,
    })
}

/// Per-channel standardization statistics computed on train rows.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    /// Per-channel train mean.
    pub mean: Vec<f64>,
    /// Per-channel train population standard deviation.
    pub std: Vec<f64>,
}

impl NormStats {
    /// Maps a standardized value back to the original scale.
    pub fn invert(&self, channel: usize, value: f64) -> f64 {
        value * self.std[channel] + self.mean[channel]
    }
}

/// Standardizes every row of `frame` using per-channel mean and
/// population standard deviation computed on `train_range` only.
/// A channel that is constant on the train rows cannot be scaled and is
/// rejected by name.
pub fn standardize(
    frame: &SeriesFrame,
    train_range: Range<usize>,
) -> Result<(SeriesFrame, NormStats)> {
    if train_range.is_empty() || train_range.end > frame.rows() {
        return Err(PamError::Config(format!(
            "train range {}..{} is not a nonempty range within {} rows",
            train_range.start,
            train_range.end,
            frame.rows()
        )));
    }
    let n = frame.channels();
    let count = train_range.len() as f64;
    let mut mean = vec![0.0f64; n];
    let mut std = vec![0.0f64; n];
    for j in 0..n {
        let mut sum = 0.0;
        for i in train_range.clone() {
            sum += frame.values().at(i, j);
        }
        mean[j] = sum / count;
        let mut sq = 0.0;
        for i in train_range.clone() {
            let d = frame.values().at(i, j) - mean[j];
            sq += d * d;
        }
        std[j] = (sq / count).sqrt();
        if std[j] < 1e-12 {
            return Err(PamError::Config(format!(
                "channel `{}` is constant over the train rows; it cannot be standardized",
                frame.channel_names()[j]
            )));
        }
    }

    let mut data = Vec::with_capacity(frame.rows() * n);
    for i in 0..frame.rows() {
        for j in 0..n {
            data.push((frame.values().at(i, j) - mean[j]) / std[j]);
        }
    }
    let values = Tensor::new(vec![frame.rows(), n], data)?;
    let scaled = SeriesFrame::new(
        frame.channel_names().to_vec(),
        values,
        frame.origin().to_string(),
    )?;
    Ok((scaled, NormStats { mean, std }))
}
