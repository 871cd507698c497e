//! Core library for grouped min-max multi-instance learning on feature bags.
//!
//! A bag is one slide's worth of per-patch feature vectors with a single
//! slide-level label. The model splits each feature vector into per-extractor
//! groups, aligns every group (and the full concatenation) to class-evidence
//! columns, keeps only the strongest positive and negative instances per
//! class, and classifies the selected evidence with a small shared head.
//!
//! Everything here is pure computation over in-memory matrices: the crate is
//! `no_std`-compatible (`alloc` required) so the model, optimizer, losses,
//! metrics, and preprocessing algorithms can be reused without an OS. File
//! formats, the CLI, and anything touching the filesystem live in the
//! companion `gasmil` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bag;
pub mod baseline;
pub mod codec;
pub mod error;
pub mod gradcheck;
pub mod loss;
mod math;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod train;

pub use bag::{FeatureBag, GroupLayout, Manifest, ManifestEntry, Split, SplitSpec};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::MetricsReport;
pub use model::{GasMilConfig, GasMilParams, GfebKind};
pub use optim::{AdamwConfig, Parameter};
pub use rng::RngStream;
pub use loss::LossKind;
pub use train::{Network, TrainConfig, TrainLog};
