use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::CellKey;
use super::store::{write_atomic, write_json_atomic, CellResult, ResultsStore};
use super::svg::{Chart, Series};
use crate::error::{Error, Result};
use crate::probe::{Perspective, Task};
use crate::similarity::{curve_stats, mean_ci, CkaCurve, CurveStats};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    pub deterministic: bool,
}

/// Which factor a CKA panel varies; the others are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manipulation {
    /// Every dialogue, grouped by noise level.
    Noise,
    /// Lowest noise level, grouped by summed bias.
    Bias,
    /// Lowest noise level, grouped by pairing.
    Pairing,
}

impl Manipulation {
    pub const ALL: [Manipulation; 3] = [Self::Noise, Self::Bias, Self::Pairing];

    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Bias => "bias",
            Self::Pairing => "pairing",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Self::Noise => "CKA vs lag by channel noise",
            Self::Bias => "CKA vs lag by summed PAD bias (lowest noise)",
            Self::Pairing => "CKA vs lag by pairing (lowest noise)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaGroupSummary {
    pub level: String,
    pub n_curves: usize,
    pub peak_lag_ms: Option<i64>,
    pub peak_value: Option<f64>,
    pub baseline_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaPanelSummary {
    pub manipulation: Manipulation,
    pub groups: Vec<CkaGroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrendSummary {
    pub task: Task,
    pub perspective: Perspective,
    pub noise_p: f64,
    pub n_cells: usize,
    pub first_delay_ms: i64,
    pub last_delay_ms: i64,
    pub mean_auc_first_delay: Option<f64>,
    pub mean_auc_last_delay: Option<f64>,
    pub mean_auc_shuffled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub toolkit_version: String,
    pub cka: Vec<CkaPanelSummary>,
    pub probes: Vec<ProbeTrendSummary>,
    /// Grid cells without results; rendered as gaps.
    pub missing_cells: Vec<String>,
    /// `cell/task/perspective/delay_ms: reason` for every probe row without an AUC.
    pub missing_auc: Vec<String>,
    pub complete: bool,
    pub files: Vec<String>,
}

struct Group {
    level: String,
    curves: Vec<CkaCurve>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn groups(store: &ResultsStore, m: Manipulation) -> Vec<Group> {
    let cfg = store.config();
    let lowest = cfg
        .grid
        .noise_levels
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut levels: Vec<(String, Box<dyn Fn(&CellKey) -> bool>)> = Vec::new();
    match m {
        Manipulation::Noise => {
            for &n in &cfg.grid.noise_levels {
                levels.push((n.to_string(), Box::new(move |k: &CellKey| k.noise_p == n)));
            }
        }
        Manipulation::Bias => {
            let mut sums: Vec<f64> = cfg.grid.bias_pairs().iter().map(|(a, b)| a + b).collect();
            sums.sort_by(f64::total_cmp);
            sums.dedup();
            for s in sums {
                levels.push((
                    s.to_string(),
                    Box::new(move |k: &CellKey| k.noise_p == lowest && k.summed_bias() == s),
                ));
            }
        }
        Manipulation::Pairing => {
            for &(a, b) in &cfg.grid.pairings {
                levels.push((
                    format!("{a}/{b}"),
                    Box::new(move |k: &CellKey| {
                        k.noise_p == lowest && k.variant_a == a && k.variant_b == b
                    }),
                ));
            }
        }
    }
    levels
        .into_iter()
        .map(|(level, keep)| Group {
            level,
            curves: store
                .cells
                .iter()
                .filter(|c| keep(&c.key))
                .flat_map(|c| c.curves.iter().cloned())
                .collect(),
        })
        .collect()
}

fn stats_of(store: &ResultsStore, g: &Group) -> Result<Option<CurveStats>> {
    if g.curves.is_empty() {
        return Ok(None);
    }
    let grid = &store.config().grid;
    curve_stats(&g.curves, grid.baseline_threshold_frames, grid.ci).map(Some)
}

fn cka_panel(
    store: &ResultsStore,
    m: Manipulation,
    frame_ms: i64,
) -> Result<(String, Chart, CkaPanelSummary)> {
    let mut csv = String::from("level,lag_frames,lag_ms,mean,ci_lo,ci_hi,n_overlap,n_curves\n");
    let mut series = Vec::new();
    let mut summary = Vec::new();
    for (i, g) in groups(store, m).iter().enumerate() {
        let Some(st) = stats_of(store, g)? else {
            summary.push(CkaGroupSummary {
                level: g.level.clone(),
                n_curves: 0,
                peak_lag_ms: None,
                peak_value: None,
                baseline_value: None,
            });
            continue;
        };
        for (j, &lag) in st.lags_frames.iter().enumerate() {
            let (lo, hi) = st.ci[j].map_or((None, None), |(l, h)| (Some(l), Some(h)));
            let _ = writeln!(
                csv,
                "{},{lag},{},{},{},{},{},{}",
                g.level,
                lag * frame_ms,
                fmt_opt(st.mean[j]),
                fmt_opt(lo),
                fmt_opt(hi),
                st.n_overlap[j],
                st.n_curves
            );
        }
        let xs: Vec<f64> = st.lags_frames.iter().map(|&l| (l * frame_ms) as f64 / 1000.0).collect();
        series.push(Series {
            label: format!("{} {} (n={})", m.name(), g.level, st.n_curves),
            points: xs.iter().copied().zip(st.mean.iter().copied()).collect(),
            band: xs.iter().copied().zip(st.ci.iter().copied()).collect(),
            dashed: false,
            color: i,
        });
        summary.push(CkaGroupSummary {
            level: g.level.clone(),
            n_curves: st.n_curves,
            peak_lag_ms: st.peak_lag.map(|l| l * frame_ms),
            peak_value: st.peak_value,
            baseline_value: st.baseline_value,
        });
    }
    let chart = Chart {
        title: m.title().into(),
        x_label: "lag (s), positive = A leads B".into(),
        y_label: "linear CKA".into(),
        series,
        y_range: None,
    };
    Ok((
        csv,
        chart,
        CkaPanelSummary {
            manipulation: m,
            groups: summary,
        },
    ))
}

fn probe_csv(cells: &[CellResult]) -> (String, Vec<String>) {
    let mut csv = String::from(
        "task,perspective,noise_p,bias,variant_pair,delta_ms,auc,auc_shuffled,ci_lo,ci_hi\n",
    );
    let mut missing = Vec::new();
    for c in cells {
        for sweep in &c.probes {
            for r in &sweep.rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    sweep.task,
                    sweep.perspective,
                    c.key.noise_p,
                    c.key.bias_label(),
                    c.key.pairing_label(),
                    r.delay_ms,
                    fmt_opt(r.auc),
                    fmt_opt(r.auc_shuffled),
                    fmt_opt(r.ci_lo),
                    fmt_opt(r.ci_hi)
                );
                if r.auc.is_none() {
                    missing.push(format!(
                        "{}/{}/{}/{}ms: {}",
                        c.id,
                        sweep.task,
                        sweep.perspective,
                        r.delay_ms,
                        r.error.as_deref().unwrap_or("no AUC")
                    ));
                }
            }
        }
    }
    (csv, missing)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn probe_panel(
    store: &ResultsStore,
    task: Task,
    perspective: Perspective,
    frame_ms: i64,
) -> (Chart, Vec<ProbeTrendSummary>) {
    let cfg = store.config();
    let delays = &cfg.probe.delays_frames;
    let mut series = Vec::new();
    let mut trends = Vec::new();
    for (i, &noise) in cfg.grid.noise_levels.iter().enumerate() {
        let sweeps: Vec<_> = store
            .cells
            .iter()
            .filter(|c| c.key.noise_p == noise)
            .flat_map(|c| c.probes.iter())
            .filter(|s| s.task == task && s.perspective == perspective)
            .collect();
        let at = |d: usize, shuffled: bool| -> Vec<f64> {
            sweeps
                .iter()
                .filter_map(|s| s.rows.iter().find(|r| r.delay_frames == d))
                .filter_map(|r| if shuffled { r.auc_shuffled } else { r.auc })
                .collect()
        };
        let xs: Vec<f64> = delays.iter().map(|&d| (d as i64 * frame_ms) as f64).collect();
        let mut real = Vec::new();
        let mut band = Vec::new();
        let mut shuf = Vec::new();
        for (&x, &d) in xs.iter().zip(delays) {
            let v = at(d, false);
            real.push((x, mean(&v)));
            band.push((
                x,
                if v.len() >= 2 {
                    let (mu, hw) = mean_ci(&v);
                    Some((mu - hw, mu + hw))
                } else {
                    sweeps
                        .iter()
                        .filter_map(|s| s.rows.iter().find(|r| r.delay_frames == d))
                        .find_map(|r| r.ci_lo.zip(r.ci_hi))
                },
            ));
            shuf.push((x, mean(&at(d, true))));
        }
        series.push(Series {
            label: format!("noise {noise}"),
            points: real,
            band,
            dashed: false,
            color: i,
        });
        series.push(Series {
            label: format!("noise {noise} shuffled"),
            points: shuf,
            band: Vec::new(),
            dashed: true,
            color: i,
        });
        let first = delays.first().copied().unwrap_or(0);
        let last = delays.last().copied().unwrap_or(0);
        let all_shuffled: Vec<f64> = delays.iter().flat_map(|&d| at(d, true)).collect();
        trends.push(ProbeTrendSummary {
            task,
            perspective,
            noise_p: noise,
            n_cells: sweeps.len(),
            first_delay_ms: first as i64 * frame_ms,
            last_delay_ms: last as i64 * frame_ms,
            mean_auc_first_delay: mean(&at(first, false)),
            mean_auc_last_delay: mean(&at(last, false)),
            mean_auc_shuffled: mean(&all_shuffled),
        });
    }
    let chart = Chart {
        title: format!("AUC-ROC vs delay: {task}, {perspective}"),
        x_label: "probe delay (ms)".into(),
        y_label: "AUC-ROC".into(),
        series,
        y_range: Some((0.3, 1.0)),
    };
    (chart, trends)
}

/// Writes CSVs, SVG charts and `summary.json` for the store into `out`.
pub fn emit_report(store: &ResultsStore, out: &Path, opts: ReportOptions) -> Result<ReportSummary> {
    if store.cells.is_empty() {
        return Err(Error::Config(format!(
            "store at {} has no completed cells",
            store.root.display()
        )));
    }
    let frame_ms = i64::from(store.config().frame_ms);
    let stamp = (!opts.deterministic).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let mut files: Vec<PathBuf> = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = out.join(name);
        write_atomic(&path, body.as_bytes())?;
        files.push(path);
        Ok(())
    };

    let mut cka = Vec::new();
    for m in Manipulation::ALL {
        let (csv, chart, summary) = cka_panel(store, m, frame_ms)?;
        put(format!("cka_{}.csv", m.name()), csv)?;
        put(format!("cka_{}.svg", m.name()), chart.render(stamp))?;
        cka.push(summary);
    }

    let (csv, missing_auc) = probe_csv(&store.cells);
    let mut probes = Vec::new();
    let pcfg = &store.config().probe;
    if pcfg.enabled {
        put("probes.csv".into(), csv)?;
        for &task in &pcfg.tasks {
            for &perspective in &pcfg.perspectives {
                let (chart, trends) = probe_panel(store, task, perspective, frame_ms);
                put(format!("auc_{task}_{perspective}.svg"), chart.render(stamp))?;
                probes.extend(trends);
            }
        }
    }

    let missing_cells = store.missing_cells();
    let mut summary = ReportSummary {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        cka,
        probes,
        complete: missing_cells.is_empty() && missing_auc.is_empty(),
        missing_cells,
        missing_auc,
        files: Vec::new(),
    };
    files.push(out.join("summary.json"));
    summary.files = files
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    write_json_atomic(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
