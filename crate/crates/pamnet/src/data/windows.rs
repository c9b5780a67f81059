//! Sliding forecasting windows over a chronological row range.

use std::ops::Range;

use crate::error::{PamError, Result};
use crate::tensor::Tensor;

use super::frame::SeriesFrame;

/// One supervised forecasting example: a lookback block `x` (L rows by
/// N channels), its target block `y` (H rows by N channels), and the
/// absolute row index `tau_end` of the last lookback row, from which
/// the cycle position is derived.
#[derive(Clone, Debug)]
pub struct Window {
    pub x: Tensor<f64>,
    pub y: Tensor<f64>,
    pub tau_end: usize,
}

/// A batch of windows.
pub type WindowBatch = Vec<Window>;

/// Enumerates windows whose target rows fall inside `targets`.
///
/// The lookback of the first window may reach back before
/// `targets.start` (into the preceding split); no target row ever
/// leaves the range. Window starts advance by `stride` rows.
pub fn make_windows(
    frame: &SeriesFrame,
    targets: Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowBatch> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(PamError::Config(
            "lookback, horizon, and stride must all be positive".into(),
        ));
    }
    if targets.end > frame.rows() || targets.start > targets.end {
        return Err(PamError::Config(format!(
            "target range {}..{} does not fit within {} rows",
            targets.start,
            targets.end,
            frame.rows()
        )));
    }

    let first = targets.start.saturating_sub(lookback);
    let mut windows = Vec::new();
    let mut s = first;
    while s + lookback + horizon <= targets.end {
        let x = slice_rows(frame, s, lookback)?;
        let y = slice_rows(frame, s + lookback, horizon)?;
        windows.push(Window {
            x,
            y,
            tau_end: s + lookback - 1,
        });
        s += stride;
    }

    if windows.is_empty() {
        return Err(PamError::Window {
            reason: "target range too short to host one lookback+horizon window".into(),
            available: targets.end - first,
            required: lookback + horizon,
        });
    }
    Ok(windows)
}

fn slice_rows(frame: &SeriesFrame, start: usize, count: usize) -> Result<Tensor<f64>> {
    let n = frame.channels();
    let mut data = Vec::with_capacity(count * n);
    for i in start..start + count {
        for j in 0..n {
            data.push(frame.values().at(i, j));
        }
    }
    Tensor::new(vec![count, n], data)
}
