//! Deterministic forecasting engine built around cycle-indexed
//! phase/amplitude carrier tables that modulate a per-variate embedding
//! of the lookback window.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`] / [`tape`] / [`dft`] — dense rank-1..3 arrays, a
//!   reverse-mode operation tape covering exactly the primitives the
//!   model graph needs, and the direct Fourier transform behind the
//!   spectral loss term.
//! * `model` — configuration, parameter store, and the forward graph
//!   (tokenize → carrier lookup → modulate → fuse → head).
//! * `train` — hybrid time/frequency losses, Adam, the fit loop with
//!   early stopping, and finite-difference gradient checking.
//! * `data` — CSV series frames, chronological splits, standardization,
//!   sliding windows, corruption, and the synthetic cycle generator.
//! * `harness` — metrics, the ablation registry, checkpoints, and the
//!   experiment runner feeding the CLI.
//!
//! Everything is seeded: equal seeds give bit-identical artifacts.

pub mod data;
pub mod dft;
pub mod error;
pub mod harness;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;
