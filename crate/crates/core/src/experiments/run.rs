use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use super::config::{CellKey, ExperimentConfig};
use super::store::{
    cell_dir, write_atomic, write_json_atomic, CellResult, CellState, CellStatus,
    DialogueRecord, ResultsStore, StoreManifest, CELL_RESULT,
};
use crate::error::{Error, Result};
use crate::probe::delay_sweep;
use crate::segmentation::{annotate, dialogue_stats, Transition};
use crate::similarity::{curve_stats, lagged_cka, CkaCurve};
use crate::toyduplex::simulate_dialogue;
use crate::trace::{write_trace, DialogueTrace, Speaker};

/// Environment variable bounding the number of worker threads.
pub const WORKERS_ENV: &str = "DUPLEX_COUPLING_WORKERS";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Leave timestamps out of everything written.
    pub deterministic: bool,
    /// Overrides the worker-count environment variable.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub id: String,
    pub message: String,
    pub numeric_fault: bool,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub store: ResultsStore,
    /// Cells skipped because an earlier run completed them.
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
}

/// Number of worker threads: explicit value, then the environment, then the
/// machine's parallelism.
pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
        })
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every cell of the grid that the store at `out` does not already hold.
/// A failing cell is logged and recorded; the others still run.
pub fn run_grid(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<GridOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = match StoreManifest::read(out) {
        Ok(existing) => {
            if existing.config != *cfg {
                return Err(Error::Config(format!(
                    "{} holds results for a different configuration",
                    out.display()
                )));
            }
            existing
        }
        Err(Error::Io { .. }) => {
            let fresh = StoreManifest::new(cfg.clone(), opts.deterministic);
            fresh.write(out)?;
            fresh
        }
        Err(e) => return Err(e),
    };
    let cells = cfg.grid.cells();
    let todo: Vec<CellKey> = cells
        .iter()
        .filter(|k| !manifest.is_done(&k.id()))
        .copied()
        .collect();
    let skipped = cells.len() - todo.len();
    log::info!(
        "{} cells to run, {skipped} already complete",
        todo.len()
    );

    let manifest = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(opts.workers))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let failures: Vec<CellFailure> = pool.install(|| {
        todo.par_iter()
            .filter_map(|key| {
                let id = key.id();
                let result = run_cell(cfg, key, out);
                let status = match &result {
                    Ok(()) => {
                        log::info!("cell {id} done");
                        CellStatus {
                            state: CellState::Done,
                            error: None,
                            numeric_fault: false,
                        }
                    }
                    Err(e) => {
                        log::error!("cell {id} failed: {e}");
                        CellStatus {
                            state: CellState::Failed,
                            error: Some(e.to_string()),
                            numeric_fault: matches!(e, Error::NumericFault { .. }),
                        }
                    }
                };
                let mut m = manifest.lock().expect("manifest lock");
                m.cells.insert(id.clone(), status.clone());
                if let Err(e) = m.write(out) {
                    log::error!("could not update store manifest: {e}");
                }
                result.err().map(|_| CellFailure {
                    id,
                    message: status.error.unwrap_or_default(),
                    numeric_fault: status.numeric_fault,
                })
            })
            .collect()
    });
    Ok(GridOutcome {
        store: ResultsStore::open(out)?,
        skipped,
        failures,
    })
}

fn run_cell(cfg: &ExperimentConfig, key: &CellKey, root: &Path) -> Result<()> {
    let id = key.id();
    let dir = cell_dir(root, &id);
    let clock = cfg.clock()?;
    let frames = cfg.grid.duration_frames(clock)?;
    let lags = cfg.grid.lags();
    let mut traces = Vec::with_capacity(cfg.grid.seeds.len());
    let mut dialogues = Vec::with_capacity(cfg.grid.seeds.len());
    let mut curves = Vec::with_capacity(cfg.grid.seeds.len());
    for &seed in &cfg.grid.seeds {
        let rel = format!("cells/{id}/dialogues/seed{seed}");
        let ddir = root.join(&rel);
        let trace = simulate_dialogue(&key.condition(seed), frames, clock, &cfg.sim)?;
        write_trace(&trace, &ddir)?;
        let ann = annotate(&trace);
        let seg_path = ddir.join("segments.jsonl");
        let file = fs::File::create(&seg_path).map_err(|e| Error::io(&seg_path, e))?;
        ann.write_jsonl(BufWriter::new(file))?;

        let curve = lagged_cka(
            &trace.participant(Speaker::A).activations,
            &trace.participant(Speaker::B).activations,
            &lags,
            cfg.grid.lag_options(),
        )?;
        write_atomic(&ddir.join("cka.csv"), curve_csv(&curve, clock.frame_ms()).as_bytes())?;

        let count = |t: Transition| ann.transitions.iter().filter(|l| l.label == t).count();
        let peak = curve.peak();
        dialogues.push(DialogueRecord {
            seed,
            trace_dir: rel,
            stats: dialogue_stats(&trace),
            holds: count(Transition::Hold),
            non_holds: count(Transition::NonHold),
            excluded: count(Transition::Excluded),
            peak_lag_frames: peak.map(|p| p.0),
            peak_value: peak.map(|p| p.1),
            baseline_value: curve.baseline(cfg.grid.baseline_threshold_frames),
        });
        curves.push(curve);
        traces.push(trace);
    }
    let cka = curve_stats(&curves, cfg.grid.baseline_threshold_frames, cfg.grid.ci)?;
    let probes = if cfg.probe.enabled {
        run_probes(cfg, &traces)
    } else {
        Vec::new()
    };
    write_json_atomic(
        &dir.join(CELL_RESULT),
        &CellResult {
            id,
            key: *key,
            dialogues,
            curves,
            cka,
            probes,
        },
    )
}

fn run_probes(cfg: &ExperimentConfig, traces: &[DialogueTrace]) -> Vec<crate::probe::DelaySweep> {
    let base = cfg.probe.base_config();
    let mut out = Vec::new();
    for &task in &cfg.probe.tasks {
        for &perspective in &cfg.probe.perspectives {
            out.push(delay_sweep(
                traces,
                task,
                perspective,
                &cfg.probe.delays_frames,
                &base,
                cfg.probe.split_seed,
            ));
        }
    }
    out
}

/// `lag_frames,lag_ms,cka,n_overlap`, one row per lag; empty `cka` where the
/// overlap was too short.
pub fn curve_csv(curve: &CkaCurve, frame_ms: u32) -> String {
    let mut s = String::from("lag_frames,lag_ms,cka,n_overlap\n");
    for ((&lag, v), n) in curve.lags_frames.iter().zip(&curve.values).zip(&curve.n_overlap) {
        let v = v.map(|x| x.to_string()).unwrap_or_default();
        s.push_str(&format!("{lag},{},{v},{n}\n", lag * i64::from(frame_ms)));
    }
    s
}
