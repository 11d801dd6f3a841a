use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use duplex_coupling::experiments::{
    curve_csv, emit_report, run_grid, ExperimentConfig, GridSpec, ReportOptions, ResultsStore,
    RunOptions,
};
use duplex_coupling::probe::{delay_sweep, DelaySweep, Perspective, Task};
use duplex_coupling::segmentation::{annotate, dialogue_stats};
use duplex_coupling::similarity::{lagged_cka, symmetric_lags, LagOptions};
use duplex_coupling::toyduplex::simulate_dialogue;
use duplex_coupling::trace::{read_trace, write_trace};
use duplex_coupling::{DialogueTrace, Error, ExperimentCondition, Speaker, Variant};

#[derive(Parser, Debug)]
#[command(
    name = "duplex-coupling",
    version,
    about = "Simulate coupled full-duplex dialogue agents and analyse their coupling"
)]
struct Cli {
    /// Dialogue seed (simulate, cka) or probe training seed (probe, grid).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; its meaning depends on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML experiment configuration; see `defaults`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Frame duration override in milliseconds.
    #[arg(long, global = true)]
    frame_ms: Option<u32>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Leave timestamps out of every file written.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one dialogue and write its trace directory.
    Simulate {
        #[command(flatten)]
        cond: ConditionArgs,
    },
    /// Validate an external trace directory.
    Ingest { dir: PathBuf },
    /// IPUs and Hold/Non-Hold transitions of a trace as JSON lines.
    Segment { dir: PathBuf },
    /// Lagged CKA curve of a trace, or of a freshly simulated condition.
    Cka {
        /// Trace directory; simulate from condition flags when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        cond: ConditionArgs,
        /// Largest absolute lag in frames.
        #[arg(long)]
        max_lag: Option<i64>,
        #[arg(long)]
        min_overlap: Option<usize>,
    },
    /// Probe delay sweep over a set of dialogues.
    Probe {
        /// Trace directories; simulate one dialogue per `--seeds` entry when absent.
        #[arg(long, num_args = 1..)]
        traces: Vec<PathBuf>,
        #[command(flatten)]
        cond: ConditionArgs,
        /// Dialogue seeds for simulated input.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "eoi")]
        task: Task,
        #[arg(long, default_value = "production")]
        perspective: Perspective,
        /// Delays in frames; defaults to the configuration's delay grid.
        #[arg(long, value_delimiter = ',')]
        delays: Vec<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Run every cell of the condition grid into a results store.
    Grid {
        /// Print the plan and stop.
        #[arg(long)]
        plan_only: bool,
        /// Use the full-size grid instead of the desk-scale default.
        #[arg(long, conflicts_with = "config")]
        full_scale: bool,
        /// Worker threads; overrides DUPLEX_COUPLING_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// CSVs, SVG plots and a summary from a results store.
    Report {
        /// Results store written by `grid`.
        #[arg(long, default_value = "results")]
        store: PathBuf,
    },
    /// Print the default configuration as TOML.
    Defaults {
        #[arg(long)]
        full_scale: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct ConditionArgs {
    /// Per-frame token corruption probability.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    bias_a: f64,
    #[arg(long, default_value_t = 0.0)]
    bias_b: f64,
    #[arg(long, default_value = "default")]
    variant_a: Variant,
    #[arg(long, default_value = "default")]
    variant_b: Variant,
    #[arg(long, default_value_t = 100.0)]
    duration_s: f64,
}

impl ConditionArgs {
    fn condition(&self, seed: u64) -> ExperimentCondition {
        ExperimentCondition {
            noise_p: self.noise,
            pad_bias_a: self.bias_a,
            pad_bias_b: self.bias_b,
            variant_a: self.variant_a,
            variant_b: self.variant_b,
            seed,
        }
    }

    fn simulate(&self, seed: u64, cfg: &ExperimentConfig) -> Result<DialogueTrace, Error> {
        let clock = cfg.clock()?;
        let frames = GridSpec {
            duration_s: self.duration_s,
            ..GridSpec::default()
        }
        .duration_frames(clock)?;
        simulate_dialogue(&self.condition(seed), frames, clock, &cfg.sim)
    }
}

fn load_config(cli: &Cli, full_scale: bool) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if full_scale => ExperimentConfig::full_scale(),
        None => ExperimentConfig::default(),
    };
    if let Some(ms) = cli.frame_ms {
        cfg.frame_ms = ms;
    }
    cfg.clock()?;
    Ok(cfg)
}

fn stdout_line(s: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{s}").map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn print_json(v: &serde_json::Value) -> Result<(), Error> {
    stdout_line(&serde_json::to_string_pretty(v).map_err(|e| Error::Manifest(e.to_string()))?)
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn trace_summary(trace: &DialogueTrace) -> serde_json::Value {
    json!({
        "n_frames": trace.n_frames(),
        "frame_ms": trace.clock().frame_ms(),
        "duration_ms": trace.duration_ms(),
        "dim_a": trace.participant(Speaker::A).activations.dim(),
        "dim_b": trace.participant(Speaker::B).activations.dim(),
        "condition": trace.condition(),
        "vad_matches_tokens": trace.vad_matches_tokens(),
        "stats": dialogue_stats(trace),
    })
}

fn sweep_csv(sweep: &DelaySweep) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("delay_frames,delay_ms,auc,auc_shuffled,ci_lo,ci_hi,final_train_loss\n");
    for r in &sweep.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.delay_frames,
            r.delay_ms,
            opt(r.auc),
            opt(r.auc_shuffled),
            opt(r.ci_lo),
            opt(r.ci_hi),
            opt(r.final_train_loss)
        ));
    }
    s
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate { cond } => {
            let cfg = load_config(&cli, false)?;
            let trace = cond.simulate(seed, &cfg)?;
            let dir = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("trace_seed{seed}")));
            write_trace(&trace, &dir)?;
            let mut summary = trace_summary(&trace);
            summary["dir"] = dir.display().to_string().into();
            if cli.json {
                print_json(&summary)?;
            } else {
                stdout_line(&format!(
                    "wrote {} ({} frames of {} ms)",
                    dir.display(),
                    trace.n_frames(),
                    trace.clock().frame_ms()
                ))?;
            }
        }
        Command::Ingest { dir } => {
            let trace = read_trace(dir)?;
            if !trace.vad_matches_tokens() {
                log::warn!("VAD tracks differ from the token-derived VAD");
            }
            if cli.json {
                print_json(&trace_summary(&trace))?;
            } else {
                stdout_line(&format!(
                    "{}: valid trace, {} frames of {} ms, dims {}/{}",
                    dir.display(),
                    trace.n_frames(),
                    trace.clock().frame_ms(),
                    trace.participant(Speaker::A).activations.dim(),
                    trace.participant(Speaker::B).activations.dim()
                ))?;
            }
        }
        Command::Segment { dir } => {
            let trace = read_trace(dir)?;
            let ann = annotate(&trace);
            match &cli.out {
                Some(path) => {
                    let mut buf = Vec::new();
                    ann.write_jsonl(&mut buf)?;
                    write_file(path, &String::from_utf8_lossy(&buf))?;
                }
                None => ann.write_jsonl(std::io::stdout().lock())?,
            }
        }
        Command::Cka {
            trace,
            cond,
            max_lag,
            min_overlap,
        } => {
            let cfg = load_config(&cli, false)?;
            let trace = match trace {
                Some(dir) => read_trace(dir)?,
                None => cond.simulate(seed, &cfg)?,
            };
            let lags = symmetric_lags(max_lag.unwrap_or(cfg.grid.max_lag_frames));
            let opts = LagOptions {
                min_overlap: min_overlap.unwrap_or(cfg.grid.min_overlap),
                ..LagOptions::default()
            };
            let curve = lagged_cka(
                &trace.participant(Speaker::A).activations,
                &trace.participant(Speaker::B).activations,
                &lags,
                opts,
            )?;
            let frame_ms = trace.clock().frame_ms();
            if let Some(path) = &cli.out {
                write_file(path, &curve_csv(&curve, frame_ms))?;
            }
            let peak = curve.peak();
            if cli.json {
                print_json(&json!({
                    "frame_ms": frame_ms,
                    "peak_lag_frames": peak.map(|p| p.0),
                    "peak_value": peak.map(|p| p.1),
                    "baseline_value": curve.baseline(cfg.grid.baseline_threshold_frames),
                    "curve": curve,
                }))?;
            } else if cli.out.is_none() {
                stdout_line(curve_csv(&curve, frame_ms).trim_end())?;
            } else if let Some((lag, v)) = peak {
                stdout_line(&format!(
                    "peak CKA {v:.4} at lag {lag} frames ({} ms)",
                    i64::from(frame_ms) * lag
                ))?;
            }
        }
        Command::Probe {
            traces,
            cond,
            seeds,
            task,
            perspective,
            delays,
            epochs,
            hidden_size,
            learning_rate,
        } => {
            let cfg = load_config(&cli, false)?;
            let dialogues = if traces.is_empty() {
                seeds
                    .iter()
                    .map(|&s| cond.simulate(s, &cfg))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                traces.iter().map(|d| read_trace(d)).collect::<Result<Vec<_>, _>>()?
            };
            let mut base = cfg.probe.base_config();
            if let Some(s) = cli.seed {
                base.seed = s;
            }
            if let Some(e) = epochs {
                base.epochs = *e;
            }
            if let Some(h) = hidden_size {
                base.hidden_size = *h;
            }
            if let Some(lr) = learning_rate {
                base.learning_rate = *lr;
            }
            base.validate()?;
            let delays = if delays.is_empty() {
                cfg.probe.delays_frames.clone()
            } else {
                delays.clone()
            };
            let sweep = delay_sweep(&dialogues, *task, *perspective, &delays, &base, cfg.probe.split_seed);
            for r in sweep.failures() {
                log::warn!(
                    "delay {} frames: {}",
                    r.delay_frames,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            if let Some(path) = &cli.out {
                write_file(path, &sweep_csv(&sweep))?;
            }
            if cli.json {
                print_json(&serde_json::to_value(&sweep).map_err(|e| Error::Manifest(e.to_string()))?)?;
            } else if cli.out.is_none() {
                stdout_line(sweep_csv(&sweep).trim_end())?;
            }
        }
        Command::Grid {
            plan_only,
            full_scale,
            workers,
        } => {
            let mut cfg = load_config(&cli, *full_scale)?;
            if let Some(s) = cli.seed {
                cfg.probe.seed = s;
            }
            let plan = cfg.plan()?;
            if cli.json && *plan_only {
                print_json(&serde_json::to_value(&plan).map_err(|e| Error::Manifest(e.to_string()))?)?;
            } else {
                eprintln!("{plan}");
            }
            if *plan_only {
                return Ok(ExitCode::SUCCESS);
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let outcome = run_grid(
                &cfg,
                &out,
                RunOptions {
                    deterministic: cli.deterministic,
                    workers: *workers,
                },
            )?;
            let done = outcome.store.cells.len();
            if cli.json {
                print_json(&json!({
                    "store": out.display().to_string(),
                    "completed_cells": done,
                    "skipped_cells": outcome.skipped,
                    "failures": outcome.failures.iter().map(|f| json!({
                        "cell": f.id,
                        "error": f.message,
                        "numeric_fault": f.numeric_fault,
                    })).collect::<Vec<_>>(),
                }))?;
            } else {
                stdout_line(&format!(
                    "{}: {done} cells complete ({} reused), {} failed",
                    out.display(),
                    outcome.skipped,
                    outcome.failures.len()
                ))?;
            }
            if outcome.failures.iter().any(|f| f.numeric_fault) {
                return Ok(ExitCode::from(3));
            }
            if !outcome.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { store } => {
            let results = ResultsStore::open(store)?;
            let out = cli.out.clone().unwrap_or_else(|| store.join("report"));
            let summary = emit_report(
                &results,
                &out,
                ReportOptions {
                    deterministic: cli.deterministic,
                },
            )?;
            if cli.json {
                print_json(&serde_json::to_value(&summary).map_err(|e| Error::Manifest(e.to_string()))?)?;
            } else {
                stdout_line(&format!("wrote {} files to {}", summary.files.len(), out.display()))?;
                if !summary.complete {
                    stdout_line(&format!(
                        "incomplete: {} missing cells, {} probe rows without AUC",
                        summary.missing_cells.len(),
                        summary.missing_auc.len()
                    ))?;
                }
            }
        }
        Command::Defaults { full_scale } => {
            let cfg = if *full_scale {
                ExperimentConfig::full_scale()
            } else {
                ExperimentConfig::default()
            };
            let text = cfg.to_toml_string();
            match &cli.out {
                Some(path) => write_file(path, &text)?,
                None => stdout_line(text.trim_end())?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
