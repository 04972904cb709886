//! Core algorithms for self-supervised human activity recognition on
//! wearable accelerometer data.
//!
//! The crate is `no_std`-compatible (it needs `alloc` but not an OS): all
//! signal processing, pretext transformations, network training, and
//! attribution math live here, while file formats and the command-line
//! front end live in the companion `har-cli` crate.
//!
//! Modules mirror the processing pipeline:
//!
//! - [`signal`] — windows, resampling, segmentation, movement intensity.
//! - [`transforms`] — the three pretext transformations plus orientation
//!   augmentation.
//! - [`features`] / [`forest`] — hand-crafted features and the random
//!   forest baseline.
//! - [`neural`] — tensors, a 1D pre-activation ResNet, reverse-mode
//!   gradients, Adam, and the learning-rate schedule.
//! - [`ssl`] — weighted sampling, pretext batches, and the multi-task
//!   pre-training loop.
//! - [`downstream`] — fine-tuning, cross-validation, and metrics.
//! - [`explain`] — CWT scalograms, LRP, and gradient-based attribution.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod downstream;
pub mod explain;
pub mod features;
pub mod forest;
pub mod neural;
pub mod rng;
pub mod signal;
pub mod spectrum;
pub mod ssl;
pub mod transforms;

pub use rng::Rng;
pub use signal::{RawRecording, SignalWindow, WindowRecord, WindowStore};
