use serde::{Deserialize, Serialize};

use super::dataset::{build_probe_dataset, Perspective, Task};
use super::train::{bootstrap_auc_ci, shuffled_baseline, train_probe, ProbeConfig};
use crate::error::Result;
use crate::trace::{DialogueTrace, FrameClock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delay_frames: usize,
    pub delay_ms: i64,
    pub auc: Option<f64>,
    pub auc_shuffled: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub final_train_loss: Option<f64>,
    /// Why this delay produced no AUC, if it did not.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySweep {
    pub task: Task,
    pub perspective: Perspective,
    pub rows: Vec<SweepRow>,
}

impl DelaySweep {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Real and shuffled-label probes at every delay. Failures at one delay are
/// recorded in its row and the sweep moves on.
pub fn delay_sweep(
    traces: &[DialogueTrace],
    task: Task,
    perspective: Perspective,
    delays: &[usize],
    base: &ProbeConfig,
    split_seed: u64,
) -> DelaySweep {
    let clock = traces.first().map_or_else(FrameClock::default, |t| t.clock());
    let rows = delays
        .iter()
        .map(|&delay| {
            let mut row = SweepRow {
                delay_frames: delay,
                delay_ms: clock.frames_to_ms(delay as i64),
                auc: None,
                auc_shuffled: None,
                ci_lo: None,
                ci_hi: None,
                final_train_loss: None,
                error: None,
            };
            let cfg = ProbeConfig {
                task,
                perspective,
                delay_frames: delay,
                ..base.clone()
            };
            let result: Result<()> = (|| {
                let ds = build_probe_dataset(traces, task, perspective, delay, split_seed)?;
                let real = train_probe(&ds, &cfg)?;
                let shuffled = shuffled_baseline(&ds, &cfg)?;
                row.auc = real.test_auc;
                row.auc_shuffled = shuffled.test_auc;
                row.final_train_loss = Some(real.final_train_loss);
                if let Some((lo, hi)) =
                    bootstrap_auc_ci(&real.test_predictions, BOOTSTRAP_RESAMPLES, cfg.seed)
                {
                    row.ci_lo = Some(lo);
                    row.ci_hi = Some(hi);
                }
                if real.test_auc.is_none() {
                    row.error = Some("test split lacks one of the classes".into());
                }
                Ok(())
            })();
            if let Err(e) = result {
                log::warn!("{task}/{perspective} delay {delay}: {e}");
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    DelaySweep {
        task,
        perspective,
        rows,
    }
}
