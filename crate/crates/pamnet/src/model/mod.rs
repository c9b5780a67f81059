//! The forecasting graph: instance normalization, variate
//! tokenization, cycle indexing, dual carrier lookup, phase/amplitude
//! modulation, fusion, and the projection head.

mod config;
mod forward;
mod norm;
mod params;

pub use config::ModelConfig;
pub use forward::{
    amplitude_carrier, forward, modulate, phase_carrier, variate_tokenize, Activations,
};
pub use norm::{instance_denormalize, instance_normalize};
pub use params::ModelParams;

/// Position of a window's last observed step within the cycle:
/// `tau_end mod c`. `tau_end` is the absolute row position in the raw
/// series, so no timestamp parsing is involved.
pub fn cycle_index(tau_end: usize, cycle_len: usize) -> usize {
    debug_assert!(cycle_len >= 1);
    tau_end % cycle_len
}
