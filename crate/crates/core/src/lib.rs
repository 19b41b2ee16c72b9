//! Wi-Fi channel-state human-to-human interaction recognition.
//!
//! The crate covers the whole pipeline:
//!
//! * [`domain`]: packet/trial types and the 13-class label codec.
//! * [`channel`]: log-distance path loss, Rician fading, multipath impulse
//!   responses, MIMO-OFDM channel application.
//! * [`synth`]: parametric class profiles and a deterministic trial generator.
//! * [`features`]: length normalization, per-packet feature extraction,
//!   robust scaling, one-hot targets and stratified splits.
//! * [`nn`]: hand-written layers with exact backward passes, Adam, schedulers
//!   and a finite-difference gradient checker.
//! * [`model`]: the Attention-BiGRU sequence labeler, k-fold training and
//!   the portable weight bundle.
//! * [`postprocess`]: mode ensembling, the prediction smoother and metrics.
//! * [`dataio`]: trial binaries, feature/prediction CSVs and manifests.
//! * [`pipeline`]: preprocessing and ensemble classification end to end.
//! * [`svg`]: static timeline plots of prediction traces.

pub mod channel;
pub mod dataio;
pub mod domain;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod rng;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
