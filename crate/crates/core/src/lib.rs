//! Coupled full-duplex dialogue simulation and analysis.
//!
//! The crate simulates two recurrent toy agents that talk to each other over a
//! corruptible token channel, then measures how their internal states line up
//! (lagged linear CKA) and how much turn-taking information can be decoded from
//! delayed states with causal recurrent probes.
//!
//! Module map:
//! - [`trace`]: dialogue traces and the on-disk trace container
//! - [`channel`]: token routing with per-frame corruption
//! - [`toyduplex`]: the toy agents and the dialogue simulator
//! - [`segmentation`]: IPUs, end-of-IPU targets and Hold/Non-Hold labels
//! - [`similarity`]: centered linear CKA across lags and curve statistics
//! - [`probe`]: LSTM probes, BCE, Adam, AUC-ROC, delay sweeps
//! - [`experiments`]: condition grids, results store, reports and plots

pub mod channel;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod probe;
pub mod rng;
pub mod segmentation;
pub mod similarity;
pub mod toyduplex;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{
    ActivationSeries, DialogueTrace, ExperimentCondition, FrameClock, Participant, Speaker,
    TokenTrack, VadTrack, Variant,
};
