//! Causal recurrent probes for turn-taking events.
//!
//! A probe reads a participant's activations delayed by `δ` frames and emits
//! one logit per frame: `y_t = w · LSTM(h_{t-δ}) + b`. Two tasks are supported:
//! frame-level end-of-IPU detection and Hold vs. Non-Hold classification at
//! IPU boundaries, each from the speaker's own states (production) or the
//! listener's states (perception).

mod adam;
mod auc;
mod dataset;
mod loss;
mod lstm;
mod sweep;
mod train;

pub use adam::{Adam, AdamConfig};
pub use auc::{auc_roc, auc_roc_pairwise};
pub use dataset::{build_probe_dataset, Perspective, ProbeDataset, ProbeSequence, Task};
pub use loss::{bce_grad, bce_loss};
pub use lstm::{LstmCache, LstmParams};
pub use sweep::{delay_sweep, DelaySweep, SweepRow};
pub use train::{
    bootstrap_auc_ci, load_probe, save_probe, shuffle_train_labels, shuffled_baseline,
    train_probe, ProbeConfig, ProbeRun, TestPrediction,
};
