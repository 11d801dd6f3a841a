use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::NoiseLevel;
use crate::error::{Error, Result};
use crate::probe::{Perspective, ProbeConfig, Task};
use crate::similarity::{
    CiMethod, LagOptions, DEFAULT_BASELINE_THRESHOLD, DEFAULT_MAX_LAG, DEFAULT_MIN_OVERLAP,
};
use crate::toyduplex::SimConfig;
use crate::trace::{ExperimentCondition, FrameClock, Variant, DEFAULT_FRAME_MS};

/// Everything a grid run needs, loadable from a TOML file. Missing keys fall
/// back to the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub frame_ms: u32,
    pub sim: SimConfig,
    pub grid: GridSpec,
    pub probe: ProbeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            frame_ms: DEFAULT_FRAME_MS,
            sim: SimConfig::default(),
            grid: GridSpec::default(),
            probe: ProbeSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Four noise levels, three bias levels crossed over both agents, four
    /// pairings, twenty seeds of 100 s, full delay grid and the
    /// long probe training schedule.
    pub fn full_scale() -> Self {
        Self {
            grid: GridSpec {
                noise_levels: NoiseLevel::ALL.iter().map(|n| n.probability()).collect(),
                bias_levels: vec![0.0, 1.0, 2.0],
                cross_bias: true,
                pairings: vec![
                    (Variant::Default, Variant::Default),
                    (Variant::Default, Variant::Finetuned),
                    (Variant::Finetuned, Variant::Default),
                    (Variant::Finetuned, Variant::Finetuned),
                ],
                seeds: (0..20).collect(),
                duration_s: 100.0,
                ..GridSpec::default()
            },
            probe: ProbeSettings {
                delays_frames: (0..=24).collect(),
                hidden_size: 64,
                learning_rate: 1e-3,
                batch_size: 16,
                epochs: 200,
                ..ProbeSettings::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn clock(&self) -> Result<FrameClock> {
        FrameClock::new(self.frame_ms)
    }

    pub fn validate(&self) -> Result<()> {
        self.clock()?;
        self.sim.validate()?;
        self.grid.validate(self.clock()?)?;
        self.probe.validate()
    }

    pub fn plan(&self) -> Result<Plan> {
        self.validate()?;
        Ok(Plan::new(self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub noise_levels: Vec<f64>,
    pub bias_levels: Vec<f64>,
    /// `true`: every (bias_a, bias_b) pair from `bias_levels`²; `false`: both
    /// agents share each level.
    pub cross_bias: bool,
    pub pairings: Vec<(Variant, Variant)>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub max_lag_frames: i64,
    pub min_overlap: usize,
    pub baseline_threshold_frames: i64,
    pub ci: CiMethod,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            noise_levels: vec![0.0, 0.7],
            bias_levels: vec![0.0, 2.0],
            cross_bias: false,
            pairings: vec![
                (Variant::Default, Variant::Default),
                (Variant::Default, Variant::Finetuned),
            ],
            seeds: (0..5).collect(),
            duration_s: 30.0,
            max_lag_frames: DEFAULT_MAX_LAG,
            min_overlap: DEFAULT_MIN_OVERLAP,
            baseline_threshold_frames: DEFAULT_BASELINE_THRESHOLD,
            ci: CiMethod::Normal,
        }
    }
}

impl GridSpec {
    pub fn validate(&self, clock: FrameClock) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("grid.{what} must not be empty")));
        if self.noise_levels.is_empty() {
            return empty("noise_levels");
        }
        if self.bias_levels.is_empty() {
            return empty("bias_levels");
        }
        if self.pairings.is_empty() {
            return empty("pairings");
        }
        if self.seeds.is_empty() {
            return empty("seeds");
        }
        for cell in self.cells() {
            cell.condition(0).validate()?;
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("grid.seeds contains duplicates".into()));
        }
        if self.max_lag_frames < 0 {
            return Err(Error::Config("grid.max_lag_frames must be >= 0".into()));
        }
        let n = self.duration_frames(clock)?;
        if self.max_lag_frames as usize + 1 >= n {
            return Err(Error::Config(format!(
                "grid.max_lag_frames {} too large for {n}-frame dialogues",
                self.max_lag_frames
            )));
        }
        Ok(())
    }

    pub fn duration_frames(&self, clock: FrameClock) -> Result<usize> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config("grid.duration_s must be positive".into()));
        }
        let frames = (self.duration_s * 1000.0 / f64::from(clock.frame_ms())).round() as usize;
        if frames < 2 {
            return Err(Error::InsufficientFrames {
                needed: 2,
                got: frames,
            });
        }
        Ok(frames)
    }

    pub fn bias_pairs(&self) -> Vec<(f64, f64)> {
        if self.cross_bias {
            self.bias_levels
                .iter()
                .flat_map(|&a| self.bias_levels.iter().map(move |&b| (a, b)))
                .collect()
        } else {
            self.bias_levels.iter().map(|&b| (b, b)).collect()
        }
    }

    /// Condition cells in a fixed order: noise, then pairing, then bias pair.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &noise_p in &self.noise_levels {
            for &(variant_a, variant_b) in &self.pairings {
                for (pad_bias_a, pad_bias_b) in self.bias_pairs() {
                    out.push(CellKey {
                        noise_p,
                        pad_bias_a,
                        pad_bias_b,
                        variant_a,
                        variant_b,
                    });
                }
            }
        }
        out
    }

    pub fn lags(&self) -> Vec<i64> {
        crate::similarity::symmetric_lags(self.max_lag_frames)
    }

    pub fn lag_options(&self) -> LagOptions {
        LagOptions {
            min_overlap: self.min_overlap,
            centered: true,
        }
    }
}

/// One condition of the grid, without the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub noise_p: f64,
    pub pad_bias_a: f64,
    pub pad_bias_b: f64,
    pub variant_a: Variant,
    pub variant_b: Variant,
}

impl CellKey {
    /// Directory-safe identifier, e.g. `noise0.45_bias1+2_default-finetuned`.
    pub fn id(&self) -> String {
        format!(
            "noise{}_bias{}+{}_{}-{}",
            self.noise_p, self.pad_bias_a, self.pad_bias_b, self.variant_a, self.variant_b
        )
    }

    pub fn condition(&self, seed: u64) -> ExperimentCondition {
        ExperimentCondition {
            noise_p: self.noise_p,
            pad_bias_a: self.pad_bias_a,
            pad_bias_b: self.pad_bias_b,
            variant_a: self.variant_a,
            variant_b: self.variant_b,
            seed,
        }
    }

    pub fn summed_bias(&self) -> f64 {
        self.pad_bias_a + self.pad_bias_b
    }

    /// `a+b` as written in the probe table.
    pub fn bias_label(&self) -> String {
        format!("{}+{}", self.pad_bias_a, self.pad_bias_b)
    }

    pub fn pairing_label(&self) -> String {
        format!("{}/{}", self.variant_a, self.variant_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub enabled: bool,
    pub tasks: Vec<Task>,
    pub perspectives: Vec<Perspective>,
    pub delays_frames: Vec<usize>,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub forget_bias: f64,
    pub class_weighting: bool,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            tasks: vec![Task::Eoi, Task::HoldVsNonHold],
            perspectives: vec![Perspective::Production, Perspective::Perception],
            delays_frames: vec![0, 12, 24],
            hidden_size: 16,
            learning_rate: 5e-3,
            batch_size: 4,
            epochs: 50,
            seed: 0,
            split_seed: 0,
            forget_bias: 1.0,
            class_weighting: false,
        }
    }
}

impl ProbeSettings {
    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if self.tasks.is_empty() || self.perspectives.is_empty() || self.delays_frames.is_empty() {
            return Err(Error::Config(
                "probe.tasks, probe.perspectives and probe.delays_frames must not be empty".into(),
            ));
        }
        self.base_config().validate()
    }

    /// Training settings shared by every cell; task, perspective and delay are
    /// filled in per sweep.
    pub fn base_config(&self) -> ProbeConfig {
        ProbeConfig {
            hidden_size: self.hidden_size,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            forget_bias: self.forget_bias,
            class_weighting: self.class_weighting,
            ..ProbeConfig::default()
        }
    }
}

/// What a grid run will do, printed before any work starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub noise_levels: usize,
    pub pairings: usize,
    pub bias_levels: usize,
    pub bias_pairs: usize,
    pub cross_bias: bool,
    pub seeds: usize,
    pub cells: usize,
    pub dialogues: usize,
    pub frames_per_dialogue: usize,
    pub probe_trainings: usize,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> Self {
        let g = &cfg.grid;
        let cells = g.cells().len();
        let p = &cfg.probe;
        let probe_trainings = if p.enabled {
            // Real and shuffled-label probe per (cell, task, perspective, delay).
            cells * p.tasks.len() * p.perspectives.len() * p.delays_frames.len() * 2
        } else {
            0
        };
        Self {
            noise_levels: g.noise_levels.len(),
            pairings: g.pairings.len(),
            bias_levels: g.bias_levels.len(),
            bias_pairs: g.bias_pairs().len(),
            cross_bias: g.cross_bias,
            seeds: g.seeds.len(),
            cells,
            dialogues: cells * g.seeds.len(),
            frames_per_dialogue: g
                .duration_frames(cfg.clock().unwrap_or_default())
                .unwrap_or(0),
            probe_trainings,
        }
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bias = if self.cross_bias {
            format!(
                "{} bias pairs ({} levels crossed over both agents)",
                self.bias_pairs, self.bias_levels
            )
        } else {
            format!("{} bias levels (shared by both agents)", self.bias_pairs)
        };
        writeln!(
            f,
            "{} noise levels x {} pairings x {bias} = {} condition cells",
            self.noise_levels, self.pairings, self.cells
        )?;
        writeln!(
            f,
            "{} cells x {} seeds = {} dialogues of {} frames",
            self.cells, self.seeds, self.dialogues, self.frames_per_dialogue
        )?;
        write!(f, "{} probe trainings", self.probe_trainings)
    }
}
