use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, labels};
use crate::segmentation::{annotate, Transition};
use crate::trace::{DialogueTrace, Speaker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Eoi,
    #[serde(rename = "hold_vs_nonhold")]
    HoldVsNonHold,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Eoi => "eoi",
            Task::HoldVsNonHold => "hold_vs_nonhold",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eoi" => Ok(Task::Eoi),
            "hold_vs_nonhold" | "hold" => Ok(Task::HoldVsNonHold),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    /// Own states, own events.
    Production,
    /// Own states, partner's events.
    Perception,
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Perspective::Production => "production",
            Perspective::Perception => "perception",
        })
    }
}

impl FromStr for Perspective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "production" => Ok(Perspective::Production),
            "perception" => Ok(Perspective::Perception),
            other => Err(Error::Config(format!("unknown perspective '{other}'"))),
        }
    }
}

/// One participant of one dialogue, in output-frame coordinates: row `t`
/// of `features` is the state from frame `t - delay` (zeros for `t < delay`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSequence {
    pub dialogue: usize,
    pub participant: Speaker,
    pub features: Array2<f64>,
    pub labels: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ProbeSequence {
    pub fn n_masked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub task: Task,
    pub perspective: Perspective,
    pub delay_frames: usize,
    pub sequences: Vec<ProbeSequence>,
    /// Indices into `sequences`.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Sequences left out because no frame carried a label.
    pub dropped: Vec<(usize, Speaker)>,
}

impl ProbeDataset {
    pub fn input_dim(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.features.ncols())
    }
}

/// Dialogue indices held out for testing: 20% (at least one when there are
/// two or more dialogues), chosen by a seeded shuffle.
pub fn test_dialogues(n_dialogues: usize, split_seed: u64) -> Vec<usize> {
    let n_test = if n_dialogues < 2 {
        0
    } else {
        ((n_dialogues as f64 * 0.2).round() as usize).clamp(1, n_dialogues - 1)
    };
    let mut order: Vec<usize> = (0..n_dialogues).collect();
    order.shuffle(&mut rng::substream(split_seed, labels::SPLIT));
    let mut test = order[..n_test].to_vec();
    test.sort_unstable();
    test
}

pub fn build_probe_dataset(
    traces: &[DialogueTrace],
    task: Task,
    perspective: Perspective,
    delay_frames: usize,
    split_seed: u64,
) -> Result<ProbeDataset> {
    if traces.is_empty() {
        return Err(Error::Config("probe dataset needs at least one trace".into()));
    }
    let held_out = test_dialogues(traces.len(), split_seed);
    let mut sequences = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dropped = Vec::new();
    for (di, trace) in traces.iter().enumerate() {
        let ann = annotate(trace);
        let n = trace.n_frames();
        for who in [Speaker::A, Speaker::B] {
            let target = match perspective {
                Perspective::Production => who,
                Perspective::Perception => who.other(),
            };
            let (labels, mut mask) = match task {
                Task::Eoi => (
                    ann.speaker(target).eoi.iter().map(|&e| f64::from(e)).collect(),
                    vec![true; n],
                ),
                Task::HoldVsNonHold => {
                    let mut labels = vec![0.0; n];
                    let mut mask = vec![false; n];
                    for l in ann.transitions_of(target) {
                        match l.label {
                            Transition::Hold => mask[l.boundary_frame] = true,
                            Transition::NonHold => {
                                mask[l.boundary_frame] = true;
                                labels[l.boundary_frame] = 1.0;
                            }
                            Transition::Excluded => {}
                        }
                    }
                    (labels, mask)
                }
            };
            mask.iter_mut().take(delay_frames).for_each(|m| *m = false);

            let act = trace.participant(who).activations.view();
            let mut features = Array2::zeros((n, act.ncols()));
            if delay_frames < n {
                features
                    .slice_mut(s![delay_frames.., ..])
                    .assign(&act.slice(s![..n - delay_frames, ..]));
            }
            let seq = ProbeSequence {
                dialogue: di,
                participant: who,
                features,
                labels,
                mask,
            };
            if seq.n_masked() == 0 {
                log::warn!(
                    "dialogue {di} participant {who}: no valid {task} targets at delay {delay_frames}, dropped"
                );
                dropped.push((di, who));
                continue;
            }
            let idx = sequences.len();
            sequences.push(seq);
            if held_out.binary_search(&di).is_ok() {
                test.push(idx);
            } else {
                train.push(idx);
            }
        }
    }
    Ok(ProbeDataset {
        task,
        perspective,
        delay_frames,
        sequences,
        train,
        test,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_split_is_32_8() {
        let t = test_dialogues(40, 3);
        assert_eq!(t.len(), 8);
        assert_eq!(test_dialogues(5, 3).len(), 1);
        assert_eq!(test_dialogues(1, 3).len(), 0);
        assert_eq!(test_dialogues(40, 3), t);
    }
}
