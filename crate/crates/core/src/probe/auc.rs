use crate::error::{Error, Result};

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l != 0).count();
    (pos, labels.len() - pos)
}

/// AUC-ROC as the Mann-Whitney statistic: the probability that a random
/// positive outscores a random negative, ties counting one half. Sorts once,
/// then accumulates doubled midranks in integers so the result is exact.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Doubled rank sum of positives; ranks are 1-based, a tie block [i, j)
    // shares the midrank (i + 1 + j) / 2.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let p = order[i..j].iter().filter(|&&k| labels[k] != 0).count() as u128;
        doubled_rank_sum += p * (i + 1 + j) as u128;
        i = j;
    }
    let pos = pos as u128;
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg as u128) as f64)
}

/// O(n²) pairwise count, kept as an independent reference.
pub fn auc_roc_pairwise(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc {
            positives: pos,
            negatives: neg,
        });
    }
    let mut doubled: u128 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            if si > sj {
                doubled += 2;
            } else if si == sj {
                doubled += 1;
            }
        }
    }
    Ok(doubled as f64 / (2 * pos as u128 * neg as u128) as f64)
}
