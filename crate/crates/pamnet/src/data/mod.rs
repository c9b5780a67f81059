//! Data pipeline: CSV ingestion, chronological splitting, train-stat
//! standardization, sliding windows with cycle positions, input
//! corruption, and the synthetic periodic generator.

mod corrupt;
mod frame;
mod split;
mod synth;
mod windows;

pub use corrupt::{corrupt, CorruptMode, CorruptionSpec};
pub use frame::SeriesFrame;
pub use split::{split_chronological, standardize, NormStats, SplitRanges, SplitSpec};
pub use synth::{synth_generate, SynthSpec};
pub use windows::{make_windows, Window, WindowBatch};
