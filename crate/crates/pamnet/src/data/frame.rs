//! In-memory multivariate series plus CSV ingestion.
//!
//! A [`SeriesFrame`] is a dense T-by-N table of finite `f64` readings:
//! rows are time steps in chronological order, columns are named
//! channels. Loading rejects anything non-numeric or non-finite with
//! the exact row/column coordinates so bad cells can be found in the
//! source file.

use std::path::Path;

use crate::error::{PamError, Result};
use crate::tensor::Tensor;

/// A named multivariate time series: T rows by N channels.
#[derive(Clone, Debug)]
pub struct SeriesFrame {
    channel_names: Vec<String>,
    values: Tensor<f64>,
    origin: String,
}

impl SeriesFrame {
    /// Builds a frame, checking that the value table is rank-2, has one
    /// column per channel name, and contains only finite numbers.
    pub fn new(
        channel_names: Vec<String>,
        values: Tensor<f64>,
        origin: impl Into<String>,
    ) -> Result<Self> {
        if values.rank() != 2 {
            return Err(PamError::Domain(format!(
                "series values must be rank-2 (rows x channels), got rank {}",
                values.rank()
            )));
        }
        if values.cols() != channel_names.len() {
            return Err(PamError::Dimension {
                op: "series frame",
                left: vec![values.rows(), values.cols()],
                right: vec![channel_names.len()],
            });
        }
        values.check_finite("series values")?;
        Ok(Self {
            channel_names,
            values,
            origin: origin.into(),
        })
    }

    /// Number of time steps (rows).
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    /// Number of channels (columns).
    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    /// Channel names, one per column.
    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// The T-by-N value table.
    pub fn values(&self) -> &Tensor<f64> {
        &self.values
    }

    /// Where the data came from (file path or generator description).
    pub fn origin(&self) -> &str {
        &self.origin
    }

    /// Column index of a channel by name, if present.
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    /// Loads a frame from a headered CSV file.
    ///
    /// The first row names the channels. A leading `date` column
    /// (case-insensitive) is dropped; every remaining cell must parse
    /// as a finite number. Errors carry 1-based data-row numbers
    /// (excluding the header) and 1-based file-column numbers
    /// (including any date column) so they point at the source cell.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PamError::Domain(format!("{}: file is empty", path.display())))?;
        let mut names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let has_date = names
            .first()
            .map(|n| n.eq_ignore_ascii_case("date"))
            .unwrap_or(false);
        if has_date {
            names.remove(0);
        }
        if names.is_empty() || names.iter().any(|n| n.is_empty()) {
            return Err(PamError::Domain(format!(
                "{}: header must name at least one data channel",
                path.display()
            )));
        }

        let expected_cells = names.len() + usize::from(has_date);
        let mut data = Vec::new();
        let mut rows = 0usize;
        for (i, line) in lines.enumerate() {
            let row = i + 1;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != expected_cells {
                return Err(PamError::Load {
                    row,
                    col: cells.len(),
                    reason: format!("expected {expected_cells} columns, found {}", cells.len()),
                });
            }
            for (j, cell) in cells.iter().enumerate().skip(usize::from(has_date)) {
                let col = j + 1;
                let trimmed = cell.trim();
                let value: f64 = trimmed.parse().map_err(|_| PamError::Load {
                    row,
                    col,
                    reason: format!("cannot parse `{trimmed}` as a number"),
                })?;
                if !value.is_finite() {
                    return Err(PamError::Load {
                        row,
                        col,
                        reason: format!("non-finite value `{trimmed}`"),
                    });
                }
                data.push(value);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(PamError::Domain(format!(
                "{}: no data rows after the header",
                path.display()
            )));
        }

        let values = Tensor::new(vec![rows, names.len()], data)?;
        Self::new(names, values, path.display().to_string())
    }

    /// Writes the frame as a headered CSV (no date column), such that
    /// [`SeriesFrame::load_csv`] round-trips it.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.channel_names.join(","));
        out.push('\n');
        for i in 0..self.rows() {
            for j in 0..self.channels() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.values.at(i, j)));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
