use crate::error::{Error, Result};

/// `-[y log σ(z) + (1-y) log(1-σ(z))]` in the overflow-free form
/// `max(z, 0) - z y + ln(1 + e^{-|z|})`.
fn bce_one(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over masked-in frames.
pub fn bce_loss(logits: &[f64], labels: &[f64], mask: &[bool]) -> Result<f64> {
    debug_assert!(logits.len() == labels.len() && labels.len() == mask.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for ((&z, &y), &m) in logits.iter().zip(labels).zip(mask) {
        if m {
            total += bce_one(z, y);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / count as f64)
}

/// Summed loss over masked frames and `dloss/dlogit` per frame, each term
/// scaled by `scale` (use `1 / total_masked` for a batch mean).
pub fn bce_grad(logits: &[f64], labels: &[f64], mask: &[bool], scale: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .zip(mask)
        .map(|((&z, &y), &m)| {
            if m {
                loss += bce_one(z, y) * scale;
                (sigmoid(z) - y) * scale
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}
