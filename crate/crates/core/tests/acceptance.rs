//! Acceptance criteria 1 to 9, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so criteria execute sequentially and the
//! runtime limits are measured without other tests competing for cores.

#[allow(dead_code)]
mod common;
#[allow(dead_code)]
#[path = "probe.rs"]
mod probe_suite;
#[allow(dead_code)]
#[path = "segmentation.rs"]
mod segmentation_suite;
#[allow(dead_code)]
#[path = "similarity.rs"]
mod similarity_suite;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use duplex_coupling::experiments::{emit_report, run_grid, ReportOptions, RunOptions};
use duplex_coupling::probe::{delay_sweep, Perspective, ProbeConfig, Task};
use duplex_coupling::similarity::{lagged_cka, symmetric_lags, LagOptions};
use duplex_coupling::toyduplex::{simulate_dialogue, SimConfig};
use duplex_coupling::{ExperimentCondition, FrameClock, Speaker};
use rayon::prelude::*;

type Check = fn() -> Result<String, String>;

fn run_suite(parts: &[fn()]) -> Result<(), String> {
    for part in parts {
        panic::catch_unwind(AssertUnwindSafe(part)).map_err(|e| {
            e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())
        })?;
    }
    Ok(())
}

fn timed(limit: Duration, body: impl FnOnce() -> Result<String, String>) -> Result<String, String> {
    let start = Instant::now();
    let detail = body()?;
    let took = start.elapsed();
    if took > limit {
        return Err(format!("{detail}; took {:.1} s, limit {} s", took.as_secs_f64(), limit.as_secs()));
    }
    Ok(detail)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided 95% t quantile.
fn t975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    TABLE.get(df.wrapping_sub(1)).copied().unwrap_or(1.96)
}

/// Mean of paired differences with its 95% t interval.
fn paired_gap(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    let half = t975(d.len() - 1) * (var / d.len() as f64).sqrt();
    (m, m - half, m + half)
}

const SEEDS: u64 = 20;
const FRAMES_100S: usize = 1250;
const MAX_LAG: i64 = 60;
const BASELINE_FROM: i64 = 50;

/// Peak and large-lag baseline CKA for each seed of one condition.
fn peaks_and_baselines(noise_p: f64, bias: f64) -> Result<(Vec<f64>, Vec<f64>), String> {
    let lags = symmetric_lags(MAX_LAG);
    let per_seed: Vec<Result<(f64, f64), String>> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cond = ExperimentCondition {
                noise_p,
                pad_bias_a: bias,
                pad_bias_b: bias,
                seed,
                ..Default::default()
            };
            let t = simulate_dialogue(&cond, FRAMES_100S, FrameClock::default(), &SimConfig::default())
                .map_err(|e| e.to_string())?;
            let curve = lagged_cka(
                &t.participant(Speaker::A).activations,
                &t.participant(Speaker::B).activations,
                &lags,
                LagOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            let peak = curve.peak().ok_or("no defined lag")?.1;
            let base = curve.baseline(BASELINE_FROM).ok_or("no baseline lags")?;
            Ok((peak, base))
        })
        .collect();
    let pairs = per_seed.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(pairs.into_iter().unzip())
}

fn gap_line(name: &str, (m, lo, hi): (f64, f64, f64)) -> String {
    format!("{name} gap {m:.4} [{lo:.4}, {hi:.4}]")
}

fn c1() -> Result<String, String> {
    timed(Duration::from_secs(5), || {
        run_suite(&[
            similarity_suite::golden_value_against_exact_rational,
            similarity_suite::random_integer_matrices_match_exact_oracle,
            similarity_suite::invariances,
        ])?;
        Ok("golden, 200 exact-rational draws, 100 invariance draws".into())
    })
}

fn c2() -> Result<String, String> {
    timed(Duration::from_secs(10), || {
        run_suite(&[similarity_suite::shift_recovery_positive_lag_means_a_leads])?;
        Ok("peaks at +1, +5, +20".into())
    })
}

fn c3() -> Result<String, String> {
    timed(Duration::from_secs(600), || {
        let (p0, b0) = peaks_and_baselines(0.0, 0.0)?;
        let (p7, b7) = peaks_and_baselines(0.7, 0.0)?;
        let peak = paired_gap(&p0, &p7);
        let base = paired_gap(&b0, &b7);
        let detail = format!(
            "peak {:.4} vs {:.4}, {}; baseline {:.4} vs {:.4}, {}",
            mean(&p0),
            mean(&p7),
            gap_line("peak", peak),
            mean(&b0),
            mean(&b7),
            gap_line("baseline", base)
        );
        if peak.1 > 0.0 && base.1 > 0.0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn c4() -> Result<String, String> {
    timed(Duration::from_secs(600), || {
        let (p0, _) = peaks_and_baselines(0.0, 0.0)?;
        let (p4, _) = peaks_and_baselines(0.0, 2.0)?;
        let gap = paired_gap(&p0, &p4);
        let detail = format!("summed bias 0 {:.4} vs 4 {:.4}, {}", mean(&p0), mean(&p4), gap_line("peak", gap));
        if gap.1 > 0.0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn c5() -> Result<String, String> {
    timed(Duration::from_secs(30), || {
        run_suite(&[
            segmentation_suite::extract_matches_exhaustive_enumeration_up_to_12_frames,
            segmentation_suite::extract_matches_run_length_reference_on_random_tracks,
            segmentation_suite::transition_golden_table,
        ])?;
        Ok("exhaustive <= 12 frames, 10^4 run-length tracks, 10-case table".into())
    })
}

fn c6() -> Result<String, String> {
    run_suite(&[
        probe_suite::bptt_matches_central_differences,
        probe_suite::auc_matches_pairwise_count_with_ties,
        probe_suite::training_is_bit_deterministic_across_thread_counts,
    ])?;
    Ok("BPTT rel err < 1e-4, AUC == pairwise over 500 draws, bitwise training".into())
}

const PROBE_SEEDS: u64 = 5;
const PROBE_DIALOGUES: u64 = 20;
/// 30 s at 80 ms frames.
const PROBE_FRAMES: usize = 375;

fn c7() -> Result<String, String> {
    timed(Duration::from_secs(1200), || {
        let traces: Vec<_> = (0..PROBE_DIALOGUES)
            .map(|seed| {
                let cond = ExperimentCondition { seed, ..Default::default() };
                simulate_dialogue(&cond, PROBE_FRAMES, FrameClock::default(), &SimConfig::default())
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let base = ProbeConfig {
            hidden_size: 32,
            epochs: 50,
            batch_size: 4,
            learning_rate: 5e-3,
            ..ProbeConfig::default()
        };
        let (mut real0, mut shuf0, mut real24) = (vec![], vec![], vec![]);
        for seed in 0..PROBE_SEEDS {
            let sweep = delay_sweep(
                &traces,
                Task::Eoi,
                Perspective::Production,
                &[0, 24],
                &ProbeConfig { seed, ..base.clone() },
                seed,
            );
            for row in &sweep.rows {
                let auc = row.auc.ok_or_else(|| format!("seed {seed}: {:?}", row.error))?;
                if row.delay_frames == 0 {
                    real0.push(auc);
                    shuf0.push(row.auc_shuffled.ok_or("shuffled AUC undefined")?);
                } else {
                    real24.push(auc);
                }
            }
        }
        let lift = mean(&real0) - mean(&shuf0);
        let shuf = mean(&shuf0);
        let per_seed: Vec<String> = shuf0.iter().map(|s| format!("{s:.3}")).collect();
        let detail = format!(
            "AUC d0 {:.3}, shuffled mean {:.3} (per seed {}), lift {lift:.3}, d24 {:.3}",
            mean(&real0),
            shuf,
            per_seed.join(" "),
            mean(&real24)
        );
        if lift > 0.1 && (0.4..=0.6).contains(&shuf) && mean(&real0) >= mean(&real24) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn c8() -> Result<String, String> {
    run_suite(&[probe_suite::probe_scores_never_see_states_newer_than_t_minus_delay])?;
    Ok("100 random (t, delta), bitwise-equal scores".into())
}

fn c9() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = common::tiny_config(vec![0, 1]);
    let opts = RunOptions {
        deterministic: true,
        workers: None,
    };
    let mut snaps = Vec::new();
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let outcome = run_grid(&cfg, &out, opts).map_err(|e| e.to_string())?;
        if !outcome.failures.is_empty() {
            return Err(format!("{:?}", outcome.failures));
        }
        emit_report(&outcome.store, &out.join("report"), ReportOptions { deterministic: true })
            .map_err(|e| e.to_string())?;
        snaps.push(common::snapshot(&out));
    }
    let csvs: Vec<&String> = snaps[0].keys().filter(|k| k.ends_with(".csv")).collect();
    for k in &csvs {
        if snaps[1].get(*k) != snaps[0].get(*k) {
            return Err(format!("{k} differs"));
        }
    }
    if snaps[0].len() != snaps[1].len() {
        return Err("file sets differ".into());
    }
    Ok(format!("{} CSV files byte-identical", csvs.len()))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("CKA correctness", c1),
        ("shift recovery", c2),
        ("noise degrades synchronization", c3),
        ("bias degrades synchronization", c4),
        ("segmentation oracles", c5),
        ("probe machinery", c6),
        ("anticipatory information", c7),
        ("strict causality", c8),
        ("end-to-end determinism", c9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
