use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::auc::auc_roc;
use super::dataset::{Perspective, ProbeDataset, ProbeSequence, Task};
use super::loss::bce_grad;
use super::lstm::LstmParams;
use crate::error::{Error, Result};
use crate::rng::{self, labels};
use crate::similarity::percentile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub task: Task,
    pub perspective: Perspective,
    pub delay_frames: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub forget_bias: f64,
    /// Weight positives by the negative/positive ratio of the train split.
    pub class_weighting: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            task: Task::Eoi,
            perspective: Perspective::Production,
            delay_frames: 0,
            hidden_size: 64,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 200,
            seed: 0,
            forget_bias: 1.0,
            class_weighting: false,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Scores and labels of one test sequence, kept for bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPrediction {
    pub dialogue: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRun {
    pub config: ProbeConfig,
    pub params: LstmParams,
    /// Mean training loss per epoch, measured during the epoch.
    pub loss_history: Vec<f64>,
    /// Train loss of the final parameters.
    pub final_train_loss: f64,
    /// `None` when the test split lacks one of the classes.
    pub test_auc: Option<f64>,
    pub shuffled_auc: Option<f64>,
    pub test_predictions: Vec<TestPrediction>,
}

fn positive_weight(ds: &ProbeDataset, idx: &[usize], on: bool) -> f64 {
    if !on {
        return 1.0;
    }
    let (mut pos, mut neg) = (0usize, 0usize);
    for &i in idx {
        let s = &ds.sequences[i];
        for (y, &m) in s.labels.iter().zip(&s.mask) {
            if m {
                if *y > 0.5 {
                    pos += 1
                } else {
                    neg += 1
                }
            }
        }
    }
    if pos == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// Loss (batch mean) and gradient for a group of sequences. Per-sequence work
/// runs in parallel; the reduction follows sequence order so results do not
/// depend on scheduling.
fn batch_gradient(
    params: &LstmParams,
    seqs: &[&ProbeSequence],
    pos_weight: f64,
) -> Result<(f64, LstmParams)> {
    let weight = |s: &ProbeSequence, t: usize| if s.labels[t] > 0.5 { pos_weight } else { 1.0 };
    let total: f64 = seqs
        .iter()
        .map(|s| (0..s.mask.len()).filter(|&t| s.mask[t]).map(|t| weight(s, t)).sum::<f64>())
        .sum();
    if total == 0.0 {
        return Err(Error::EmptyMask);
    }
    let parts: Vec<Result<(f64, LstmParams)>> = seqs
        .par_iter()
        .map(|s| {
            let (logits, cache) = params.forward(s.features.view())?;
            let (mut loss, mut dlogits) = (0.0, vec![0.0; logits.len()]);
            if pos_weight == 1.0 {
                (loss, dlogits) = bce_grad(&logits, &s.labels, &s.mask, 1.0 / total);
            } else {
                for t in 0..logits.len() {
                    if s.mask[t] {
                        let w = weight(s, t) / total;
                        let (l, g) = bce_grad(&logits[t..=t], &s.labels[t..=t], &[true], w);
                        loss += l;
                        dlogits[t] = g[0];
                    }
                }
            }
            Ok((loss, params.backward(s.features.view(), &cache, &dlogits)))
        })
        .collect();
    let mut grad = LstmParams::zeros(params.input_dim(), params.hidden());
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        grad.add_assign(&g);
    }
    Ok((loss, grad))
}

fn mean_loss(params: &LstmParams, ds: &ProbeDataset, idx: &[usize], pos_weight: f64) -> Result<f64> {
    let seqs: Vec<&ProbeSequence> = idx.iter().map(|&i| &ds.sequences[i]).collect();
    Ok(batch_gradient(params, &seqs, pos_weight)?.0)
}

/// Scores of the masked frames of every test sequence.
pub(crate) fn predict_test(params: &LstmParams, ds: &ProbeDataset) -> Result<Vec<TestPrediction>> {
    ds.test
        .iter()
        .map(|&i| {
            let s = &ds.sequences[i];
            let (logits, _) = params.forward(s.features.view())?;
            let (scores, labels) = logits
                .iter()
                .zip(&s.labels)
                .zip(&s.mask)
                .filter(|(_, &m)| m)
                .map(|((&z, &y), _)| (z, u8::from(y > 0.5)))
                .unzip();
            Ok(TestPrediction {
                dialogue: s.dialogue,
                scores,
                labels,
            })
        })
        .collect()
}

fn pooled_auc(preds: &[&TestPrediction]) -> Option<f64> {
    let scores: Vec<f64> = preds.iter().flat_map(|p| p.scores.iter().copied()).collect();
    let labels: Vec<u8> = preds.iter().flat_map(|p| p.labels.iter().copied()).collect();
    auc_roc(&scores, &labels).ok()
}

/// Fixed-epoch training with Adam; deterministic given the config seed.
pub fn train_probe(ds: &ProbeDataset, cfg: &ProbeConfig) -> Result<ProbeRun> {
    cfg.validate()?;
    if ds.train.is_empty() {
        return Err(Error::Config("probe train split is empty".into()));
    }
    let d = ds.input_dim();
    let mut params = LstmParams::init(
        d,
        cfg.hidden_size,
        cfg.forget_bias,
        &mut rng::substream(cfg.seed, labels::PROBE_INIT),
    );
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        params.as_slice().len(),
    );
    let pos_weight = positive_weight(ds, &ds.train, cfg.class_weighting);
    let mut order_rng = rng::substream(cfg.seed, labels::PROBE_ORDER);
    let mut order = ds.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let seqs: Vec<&ProbeSequence> = chunk.iter().map(|&i| &ds.sequences[i]).collect();
            let n_masked: usize = seqs.iter().map(|s| s.n_masked()).sum();
            let (loss, grad) = batch_gradient(&params, &seqs, pos_weight)?;
            opt.step(params.as_mut_slice(), grad.as_slice())?;
            epoch_loss += loss * n_masked as f64;
            epoch_weight += n_masked as f64;
        }
        history.push(epoch_loss / epoch_weight);
    }
    let final_train_loss = mean_loss(&params, ds, &ds.train, pos_weight)?;
    let test_predictions = predict_test(&params, ds)?;
    let test_auc = pooled_auc(&test_predictions.iter().collect::<Vec<_>>());
    Ok(ProbeRun {
        config: cfg.clone(),
        params,
        loss_history: history,
        final_train_loss,
        test_auc,
        shuffled_auc: None,
        test_predictions,
    })
}

/// Copy of `ds` whose train-split labels are permuted across all masked-in
/// train frames. Test labels are untouched.
pub fn shuffle_train_labels(ds: &ProbeDataset, seed: u64) -> ProbeDataset {
    let mut out = ds.clone();
    let slots: Vec<(usize, usize)> = ds
        .train
        .iter()
        .flat_map(|&i| {
            let s = &ds.sequences[i];
            (0..s.mask.len()).filter(move |&t| s.mask[t]).map(move |t| (i, t))
        })
        .collect();
    let mut values: Vec<f64> = slots.iter().map(|&(i, t)| ds.sequences[i].labels[t]).collect();
    values.shuffle(&mut rng::substream(seed, labels::PROBE_SHUFFLE));
    for (&(i, t), v) in slots.iter().zip(values) {
        out.sequences[i].labels[t] = v;
    }
    out
}

/// Trains the same configuration on shuffled train labels to estimate chance.
pub fn shuffled_baseline(ds: &ProbeDataset, cfg: &ProbeConfig) -> Result<ProbeRun> {
    train_probe(&shuffle_train_labels(ds, cfg.seed), cfg)
}

/// Percentile interval of the pooled test AUC, resampling test dialogues with
/// replacement. Resamples missing a class are skipped.
pub fn bootstrap_auc_ci(preds: &[TestPrediction], resamples: usize, seed: u64) -> Option<(f64, f64)> {
    let mut dialogues: Vec<usize> = preds.iter().map(|p| p.dialogue).collect();
    dialogues.sort_unstable();
    dialogues.dedup();
    if dialogues.is_empty() {
        return None;
    }
    let mut r = rng::substream(seed, labels::BOOTSTRAP);
    let mut aucs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let picked: Vec<&TestPrediction> = (0..dialogues.len())
            .flat_map(|_| {
                let d = dialogues[r.random_range(0..dialogues.len())];
                preds.iter().filter(move |p| p.dialogue == d)
            })
            .collect();
        if let Some(a) = pooled_auc(&picked) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        return None;
    }
    aucs.sort_by(f64::total_cmp);
    Some((percentile(&aucs, 0.025), percentile(&aucs, 0.975)))
}

#[derive(Serialize, Deserialize)]
struct ProbeManifest {
    format_version: u32,
    input_dim: usize,
    hidden_size: usize,
    layout: String,
    config: ProbeConfig,
}

/// Stores trained parameters as `probe.json` + `params.f64` (little-endian).
pub fn save_probe(run: &ProbeRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = ProbeManifest {
        format_version: 1,
        input_dim: run.params.input_dim(),
        hidden_size: run.params.hidden(),
        layout: "wx[4H*d] wh[4H*H] b[4H] w_out[H] b_out[1], gates i,f,g,o".into(),
        config: run.config.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    let path = dir.join("probe.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = run.params.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join("params.f64");
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_probe(dir: &Path) -> Result<(ProbeConfig, LstmParams)> {
    let path = dir.join("probe.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: ProbeManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    let path = dir.join("params.f64");
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = LstmParams::len_for(m.input_dim, m.hidden_size) * 8;
    if raw.len() != expected {
        return Err(Error::SizeMismatch {
            file: "params.f64".into(),
            expected: expected as u64,
            found: raw.len() as u64,
        });
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((m.config, LstmParams::from_flat(m.input_dim, m.hidden_size, data)?))
}
