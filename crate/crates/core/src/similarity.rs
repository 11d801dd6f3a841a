//! Centered linear CKA between activation series, across temporal lags.
//!
//! Matrices are frames × features. For centered `X` (n×d1) and `Y` (n×d2):
//!
//! ```text
//! CKA(X, Y) = ‖YᵀX‖²_F / (‖XᵀX‖_F · ‖YᵀY‖_F)
//! ```
//!
//! Lag sign convention: a positive lag means A leads B, i.e. A at frame `t`
//! is compared with B at frame `t + lag`.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::ActivationSeries;

/// Values may stray outside `[0, 1]` by at most this much before clamping.
pub const RANGE_SLACK: f64 = 1e-9;

pub const DEFAULT_MAX_LAG: i64 = 60;
pub const DEFAULT_MIN_OVERLAP: usize = 50;
pub const DEFAULT_BASELINE_THRESHOLD: i64 = 50;

pub fn center_columns(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: x.nrows(),
        });
    }
    let mean = x.mean_axis(Axis(0)).expect("rows checked");
    Ok(&x - &mean)
}

fn frobenius_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Linear CKA of `x` and `y`, optionally skipping column centering (ablation).
pub fn linear_cka_with(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, centered: bool) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "CKA inputs have {} and {} frames",
            x.nrows(),
            y.nrows()
        )));
    }
    let (xc, yc) = if centered {
        (center_columns(x)?, center_columns(y)?)
    } else {
        if x.nrows() < 2 {
            return Err(Error::InsufficientFrames {
                needed: 2,
                got: x.nrows(),
            });
        }
        (x.to_owned(), y.to_owned())
    };
    let xx = frobenius_sq(&xc.t().dot(&xc)).sqrt();
    let yy = frobenius_sq(&yc.t().dot(&yc)).sqrt();
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::Degenerate(
            "activation matrix has zero variance after centering".into(),
        ));
    }
    let yx = frobenius_sq(&yc.t().dot(&xc));
    let value = yx / (xx * yy);
    debug_assert!(
        (-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&value),
        "CKA {value} outside [0, 1]"
    );
    Ok(value.clamp(0.0, 1.0))
}

pub fn linear_cka(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    linear_cka_with(x, y, true)
}

/// The grid `-max..=max` in unit steps.
pub fn symmetric_lags(max_lag: i64) -> Vec<i64> {
    (-max_lag..=max_lag).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagOptions {
    pub min_overlap: usize,
    pub centered: bool,
}

impl Default for LagOptions {
    fn default() -> Self {
        Self {
            min_overlap: DEFAULT_MIN_OVERLAP,
            centered: true,
        }
    }
}

/// CKA per lag. Lags whose overlap falls below the minimum keep their slot
/// with `None` so every curve shares the requested grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaCurve {
    pub lags_frames: Vec<i64>,
    pub values: Vec<Option<f64>>,
    pub n_overlap: Vec<usize>,
}

impl CkaCurve {
    /// `(lag, value)` of the maximum; ties go to the smallest |lag|, then the
    /// more negative lag.
    pub fn peak(&self) -> Option<(i64, f64)> {
        peak_of(&self.lags_frames, &self.values)
    }

    /// Mean value over lags with |lag| >= `threshold`.
    pub fn baseline(&self, threshold: i64) -> Option<f64> {
        baseline_of(&self.lags_frames, &self.values, threshold)
    }

    pub fn value_at(&self, lag: i64) -> Option<f64> {
        let i = self.lags_frames.iter().position(|&l| l == lag)?;
        self.values[i]
    }
}

fn peak_of(lags: &[i64], values: &[Option<f64>]) -> Option<(i64, f64)> {
    let mut best: Option<(i64, f64)> = None;
    for (&lag, v) in lags.iter().zip(values) {
        let Some(v) = *v else { continue };
        best = match best {
            None => Some((lag, v)),
            Some((bl, bv)) => {
                let better = v > bv
                    || (v == bv && (lag.abs(), lag) < (bl.abs(), bl));
                if better {
                    Some((lag, v))
                } else {
                    Some((bl, bv))
                }
            }
        };
    }
    best
}

fn baseline_of(lags: &[i64], values: &[Option<f64>], threshold: i64) -> Option<f64> {
    let picked: Vec<f64> = lags
        .iter()
        .zip(values)
        .filter(|(l, _)| l.abs() >= threshold)
        .filter_map(|(_, v)| *v)
        .collect();
    if picked.is_empty() {
        None
    } else {
        Some(picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

/// Window pair compared at `lag`: `(a_range, b_range)`.
fn windows(n: usize, lag: i64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let k = lag.unsigned_abs() as usize;
    if lag >= 0 {
        (0..n - k, k..n)
    } else {
        (k..n, 0..n - k)
    }
}

pub fn lagged_cka(
    a: &ActivationSeries,
    b: &ActivationSeries,
    lags: &[i64],
    opts: LagOptions,
) -> Result<CkaCurve> {
    let n = a.n_frames();
    if b.n_frames() != n {
        return Err(Error::ShapeMismatch(format!(
            "activation series have {} and {} frames",
            n,
            b.n_frames()
        )));
    }
    if let Some(&bad) = lags.iter().find(|l| l.unsigned_abs() as usize + 1 >= n) {
        return Err(Error::Config(format!(
            "lag {bad} too large for a {n}-frame series"
        )));
    }
    let computed: Vec<Result<(Option<f64>, usize)>> = lags
        .par_iter()
        .map(|&lag| {
            let (ra, rb) = windows(n, lag);
            let overlap = ra.len();
            if overlap < opts.min_overlap.max(2) {
                return Ok((None, overlap));
            }
            let x = a.view().slice_move(s![ra, ..]);
            let y = b.view().slice_move(s![rb, ..]);
            Ok((Some(linear_cka_with(x, y, opts.centered)?), overlap))
        })
        .collect();
    let mut values = Vec::with_capacity(lags.len());
    let mut n_overlap = Vec::with_capacity(lags.len());
    for r in computed {
        let (v, o) = r?;
        values.push(v);
        n_overlap.push(o);
    }
    Ok(CkaCurve {
        lags_frames: lags.to_vec(),
        values,
        n_overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CiMethod {
    /// mean ± 1.96 · s / √m
    Normal,
    /// Percentile bootstrap over dialogues.
    Bootstrap { resamples: usize, seed: u64 },
}

impl Default for CiMethod {
    fn default() -> Self {
        CiMethod::Normal
    }
}

/// Mean curve with 95% intervals across dialogues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub lags_frames: Vec<i64>,
    pub mean: Vec<Option<f64>>,
    /// Lower and upper interval bounds; `None` when fewer than two curves
    /// contribute at that lag.
    pub ci: Vec<Option<(f64, f64)>>,
    pub n_overlap: Vec<usize>,
    pub n_curves: usize,
    pub peak_lag: Option<i64>,
    pub peak_value: Option<f64>,
    pub baseline_value: Option<f64>,
}

impl CurveStats {
    pub fn half_width(&self, i: usize) -> Option<f64> {
        self.ci[i].map(|(lo, hi)| (hi - lo) / 2.0)
    }
}

pub fn curve_stats(
    curves: &[CkaCurve],
    baseline_threshold: i64,
    method: CiMethod,
) -> Result<CurveStats> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Config("no curves to summarize".into()))?;
    if curves.iter().any(|c| c.lags_frames != first.lags_frames) {
        return Err(Error::GridMismatch);
    }
    let n_lags = first.lags_frames.len();
    let mut mean = Vec::with_capacity(n_lags);
    let mut ci = Vec::with_capacity(n_lags);
    for i in 0..n_lags {
        let xs: Vec<f64> = curves.iter().filter_map(|c| c.values[i]).collect();
        if xs.is_empty() {
            mean.push(None);
            ci.push(None);
            continue;
        }
        let m = xs.len() as f64;
        let mu = xs.iter().sum::<f64>() / m;
        mean.push(Some(mu));
        ci.push(if xs.len() < 2 {
            None
        } else {
            Some(match method {
                CiMethod::Normal => {
                    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0);
                    let hw = 1.96 * var.sqrt() / m.sqrt();
                    (mu - hw, mu + hw)
                }
                CiMethod::Bootstrap { resamples, seed } => {
                    bootstrap_mean_ci(&xs, resamples, seed ^ i as u64)
                }
            })
        });
    }
    let n_overlap = (0..n_lags)
        .map(|i| curves.iter().map(|c| c.n_overlap[i]).max().unwrap_or(0))
        .collect();
    let peak = peak_of(&first.lags_frames, &mean);
    Ok(CurveStats {
        baseline_value: baseline_of(&first.lags_frames, &mean, baseline_threshold),
        lags_frames: first.lags_frames.clone(),
        mean,
        ci,
        n_overlap,
        n_curves: curves.len(),
        peak_lag: peak.map(|p| p.0),
        peak_value: peak.map(|p| p.1),
    })
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut r = rng::substream(seed, rng::labels::BOOTSTRAP);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            (0..xs.len())
                .map(|_| xs[r.random_range(0..xs.len())])
                .sum::<f64>()
                / xs.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    (percentile(&means, 0.025), percentile(&means, 0.975))
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Mean and normal-approximation 95% half-width.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mu, 0.0);
    }
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0);
    (mu, 1.96 * var.sqrt() / m.sqrt())
}
