//! Default cycle lengths for the standard benchmark datasets.

use crate::error::{PamError, Result};

const TABLE: [(&str, usize); 8] = [
    ("ETTh1", 24),
    ("ETTh2", 24),
    ("ETTm1", 96),
    ("ETTm2", 96),
    ("ECL", 168),
    ("Traffic", 168),
    ("Weather", 144),
    ("Solar", 144),
];

/// The built-in cycle length for a dataset tag: hourly sets cycle
/// daily (24), quarter-hourly sets cycle daily (96), weekly-patterned
/// sets cycle weekly (168), ten-minute sets cycle daily (144), and any
/// `PEMS*` traffic set cycles daily at five-minute sampling (288).
pub fn default_cycle_length(dataset_tag: &str) -> Result<usize> {
    if let Some(&(_, c)) = TABLE.iter().find(|(tag, _)| *tag == dataset_tag) {
        return Ok(c);
    }
    if dataset_tag.starts_with("PEMS") && dataset_tag.len() > 4 {
        return Ok(288);
    }
    let known: Vec<&str> = TABLE
        .iter()
        .map(|(tag, _)| *tag)
        .chain(std::iter::once("PEMS*"))
        .collect();
    Err(PamError::Lookup {
        tag: dataset_tag.to_string(),
        known: known.join(", "),
    })
}
