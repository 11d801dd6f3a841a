//! Dialogue traces and the trace container format.
//!
//! A trace directory holds `manifest.json` plus raw little-endian arrays per
//! participant:
//!
//! | file        | element        | shape            |
//! |-------------|----------------|------------------|
//! | `act_A.f32` | f32            | n_frames × dim_a |
//! | `act_B.f32` | f32            | n_frames × dim_b |
//! | `tok_A.u32` | u32            | n_frames × tokens_per_frame |
//! | `tok_B.u32` | u32            | n_frames × tokens_per_frame |
//! | `vad_A.u8`  | u8 (0 or 1)    | n_frames         |
//! | `vad_B.u8`  | u8 (0 or 1)    | n_frames         |
//!
//! Activations live in memory as f64 and on disk as f32, so a trace only
//! round-trips bit-exactly when every activation is f32-representable.
//! [`write_trace`] refuses lossy input instead of silently rounding.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_FRAME_MS: u32 = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameClock {
    frame_ms: u32,
}

impl FrameClock {
    pub fn new(frame_ms: u32) -> Result<Self> {
        if frame_ms == 0 {
            return Err(Error::Config("frame_ms must be positive".into()));
        }
        Ok(Self { frame_ms })
    }

    pub fn frame_ms(&self) -> u32 {
        self.frame_ms
    }

    pub fn frames_to_ms(&self, frames: i64) -> i64 {
        frames * i64::from(self.frame_ms)
    }

    /// Smallest whole number of frames lasting at least `ms`.
    pub fn frames_at_least(&self, ms: u32) -> usize {
        ms.div_ceil(self.frame_ms) as usize
    }
}

impl Default for FrameClock {
    fn default() -> Self {
        Self {
            frame_ms: DEFAULT_FRAME_MS,
        }
    }
}

/// Per-frame internal states of one participant, row `t` = state at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSeries {
    data: Array2<f64>,
}

impl ActivationSeries {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        for ((frame, column), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "activations".into(),
                    frame,
                    column,
                });
            }
        }
        Ok(Self { data })
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rounds every entry through f32, making the series storable without loss.
    pub fn quantize_f32(self) -> Self {
        Self {
            data: self.data.mapv(|v| f64::from(v as f32)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTrack {
    vocab_size: u32,
    pad_id: u32,
    tokens: Vec<u32>,
}

impl TokenTrack {
    pub fn new(tokens: Vec<u32>, vocab_size: u32, pad_id: u32) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidVocab(vocab_size as usize));
        }
        if pad_id >= vocab_size {
            return Err(Error::InvalidTrace(format!(
                "pad id {pad_id} outside vocabulary of size {vocab_size}"
            )));
        }
        if let Some((frame, tok)) = tokens.iter().enumerate().find(|(_, &t)| t >= vocab_size) {
            return Err(Error::InvalidTrace(format!(
                "token {tok} at frame {frame} outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(Self {
            vocab_size,
            pad_id,
            tokens,
        })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn n_frames(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadTrack {
    voiced: Vec<bool>,
}

impl VadTrack {
    pub fn new(voiced: Vec<bool>) -> Self {
        Self { voiced }
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn n_frames(&self) -> usize {
        self.voiced.len()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.voiced.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }
}

/// A frame is voiced exactly when the agent emitted something other than PAD.
pub fn derive_vad(tokens: &TokenTrack) -> VadTrack {
    VadTrack::new(tokens.tokens.iter().map(|&t| t != tokens.pad_id).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Default,
    Finetuned,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Default => "default",
            Variant::Finetuned => "finetuned",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Variant::Default),
            "finetuned" | "fine-tuned" => Ok(Variant::Finetuned),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::A => "A",
            Speaker::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCondition {
    pub noise_p: f64,
    pub pad_bias_a: f64,
    pub pad_bias_b: f64,
    pub variant_a: Variant,
    pub variant_b: Variant,
    pub seed: u64,
}

impl ExperimentCondition {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::Config(format!(
                "noise_p {} outside [0, 1]",
                self.noise_p
            )));
        }
        for (name, b) in [("pad_bias_a", self.pad_bias_a), ("pad_bias_b", self.pad_bias_b)] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {b}")));
            }
        }
        Ok(())
    }

    pub fn summed_bias(&self) -> f64 {
        self.pad_bias_a + self.pad_bias_b
    }
}

impl Default for ExperimentCondition {
    fn default() -> Self {
        Self {
            noise_p: 0.0,
            pad_bias_a: 0.0,
            pad_bias_b: 0.0,
            variant_a: Variant::Default,
            variant_b: Variant::Default,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub activations: ActivationSeries,
    pub tokens: TokenTrack,
    pub vad: VadTrack,
}

impl Participant {
    pub fn n_frames(&self) -> usize {
        self.tokens.n_frames()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueTrace {
    clock: FrameClock,
    condition: ExperimentCondition,
    a: Participant,
    b: Participant,
}

impl DialogueTrace {
    pub fn new(
        clock: FrameClock,
        condition: ExperimentCondition,
        a: Participant,
        b: Participant,
    ) -> Result<Self> {
        condition.validate()?;
        let n = a.tokens.n_frames();
        for (who, p) in [(Speaker::A, &a), (Speaker::B, &b)] {
            if p.activations.n_frames() != n || p.tokens.n_frames() != n || p.vad.n_frames() != n {
                return Err(Error::InvalidTrace(format!(
                    "participant {who}: frame counts disagree (activations {}, tokens {}, vad {}, expected {n})",
                    p.activations.n_frames(),
                    p.tokens.n_frames(),
                    p.vad.n_frames()
                )));
            }
        }
        if a.tokens.vocab_size != b.tokens.vocab_size || a.tokens.pad_id != b.tokens.pad_id {
            return Err(Error::InvalidTrace(
                "participants use different vocabularies".into(),
            ));
        }
        Ok(Self {
            clock,
            condition,
            a,
            b,
        })
    }

    pub fn clock(&self) -> FrameClock {
        self.clock
    }

    pub fn condition(&self) -> &ExperimentCondition {
        &self.condition
    }

    pub fn participant(&self, who: Speaker) -> &Participant {
        match who {
            Speaker::A => &self.a,
            Speaker::B => &self.b,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.a.n_frames()
    }

    pub fn duration_ms(&self) -> i64 {
        self.clock.frames_to_ms(self.n_frames() as i64)
    }

    /// Whether each participant's VAD matches its tokens frame by frame.
    /// Always true for simulated traces; ingested traces may differ.
    pub fn vad_matches_tokens(&self) -> bool {
        [&self.a, &self.b]
            .iter()
            .all(|p| derive_vad(&p.tokens) == p.vad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub noise_p: f64,
    pub pad_bias_a: f64,
    pub pad_bias_b: f64,
    pub variant_a: Variant,
    pub variant_b: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub noise_p: f64,
    pub seed: u64,
    pub substreams: Vec<String>,
}

/// The `manifest.json` schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub frame_ms: u32,
    pub n_frames: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub vocab_size: u32,
    pub pad_id: u32,
    #[serde(default = "one")]
    pub tokens_per_frame: usize,
    pub seed: u64,
    pub condition: ConditionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelRecord>,
}

fn one() -> usize {
    1
}

impl Manifest {
    fn for_trace(trace: &DialogueTrace) -> Self {
        let c = &trace.condition;
        Self {
            format_version: FORMAT_VERSION,
            frame_ms: trace.clock.frame_ms,
            n_frames: trace.n_frames(),
            dim_a: trace.a.activations.dim(),
            dim_b: trace.b.activations.dim(),
            vocab_size: trace.a.tokens.vocab_size,
            pad_id: trace.a.tokens.pad_id,
            tokens_per_frame: 1,
            seed: c.seed,
            condition: ConditionRecord {
                noise_p: c.noise_p,
                pad_bias_a: c.pad_bias_a,
                pad_bias_b: c.pad_bias_b,
                variant_a: c.variant_a,
                variant_b: c.variant_b,
            },
            channel: Some(ChannelRecord {
                noise_p: c.noise_p,
                seed: c.seed,
                substreams: vec![
                    crate::rng::labels::CHANNEL_A_TO_B.to_string(),
                    crate::rng::labels::CHANNEL_B_TO_A.to_string(),
                ],
            }),
        }
    }
}

fn file_name(stem: &str, who: Speaker, ext: &str) -> String {
    format!("{stem}_{who}.{ext}")
}

/// Writes `trace` as a container directory, creating it if needed.
pub fn write_trace(trace: &DialogueTrace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for who in [Speaker::A, Speaker::B] {
        let p = trace.participant(who);
        let mut act = Vec::with_capacity(p.activations.n_frames() * p.activations.dim() * 4);
        for ((frame, column), &v) in p.activations.data.indexed_iter() {
            let narrow = v as f32;
            if f64::from(narrow).to_bits() != v.to_bits() {
                return Err(Error::PrecisionLoss {
                    what: format!("activations of {who}"),
                    frame,
                    column,
                });
            }
            act.extend_from_slice(&narrow.to_le_bytes());
        }
        let tok: Vec<u8> = p.tokens.tokens.iter().flat_map(|t| t.to_le_bytes()).collect();
        let vad: Vec<u8> = p.vad.voiced.iter().map(|&v| u8::from(v)).collect();
        write_file(&dir.join(file_name("act", who, "f32")), &act)?;
        write_file(&dir.join(file_name("tok", who, "u32")), &tok)?;
        write_file(&dir.join(file_name("vad", who, "u8")), &vad)?;
    }
    let manifest = serde_json::to_string_pretty(&Manifest::for_trace(trace))
        .map_err(|e| Error::Manifest(e.to_string()))?;
    write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_sized(dir: &Path, name: &str, expected: u64) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            file: name.to_string(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            m.format_version
        )));
    }
    if m.frame_ms == 0 {
        return Err(Error::Manifest("frame_ms must be positive".into()));
    }
    if m.tokens_per_frame == 0 {
        return Err(Error::Manifest("tokens_per_frame must be positive".into()));
    }
    Ok(m)
}

/// Reads and validates a trace container. Externally produced activations
/// are accepted as long as they follow the same layout; their VAD need not
/// agree with their tokens.
pub fn read_trace(dir: &Path) -> Result<DialogueTrace> {
    let m = read_manifest(dir)?;
    let n = m.n_frames;
    let mut parts = Vec::with_capacity(2);
    for (who, dim) in [(Speaker::A, m.dim_a), (Speaker::B, m.dim_b)] {
        let act_name = file_name("act", who, "f32");
        let raw = read_sized(dir, &act_name, (n * dim * 4) as u64)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let data = Array2::from_shape_vec((n, dim), values)
            .map_err(|e| Error::InvalidTrace(e.to_string()))?;
        let activations = ActivationSeries::new(data).map_err(|e| match e {
            Error::NonFinite { frame, column, .. } => Error::NonFinite {
                what: act_name.clone(),
                frame,
                column,
            },
            other => other,
        })?;

        let k = m.tokens_per_frame;
        let raw = read_sized(dir, &file_name("tok", who, "u32"), (n * k * 4) as u64)?;
        let tokens: Vec<u32> = raw
            .chunks_exact(4 * k)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tokens = TokenTrack::new(tokens, m.vocab_size, m.pad_id)?;

        let vad_name = file_name("vad", who, "u8");
        let raw = read_sized(dir, &vad_name, n as u64)?;
        let mut voiced = Vec::with_capacity(n);
        for (frame, &b) in raw.iter().enumerate() {
            match b {
                0 => voiced.push(false),
                1 => voiced.push(true),
                other => {
                    return Err(Error::InvalidTrace(format!(
                        "{vad_name}: byte {other} at frame {frame} is not 0 or 1"
                    )))
                }
            }
        }
        parts.push(Participant {
            activations,
            tokens,
            vad: VadTrack::new(voiced),
        });
    }
    let b = parts.pop().expect("two participants");
    let a = parts.pop().expect("two participants");
    let condition = ExperimentCondition {
        noise_p: m.condition.noise_p,
        pad_bias_a: m.condition.pad_bias_a,
        pad_bias_b: m.condition.pad_bias_b,
        variant_a: m.condition.variant_a,
        variant_b: m.condition.variant_b,
        seed: m.seed,
    };
    condition
        .validate()
        .map_err(|e| Error::Manifest(e.to_string()))?;
    DialogueTrace::new(FrameClock::new(m.frame_ms)?, condition, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn tiny_trace() -> DialogueTrace {
        let p = |off: f32, toks: Vec<u32>| {
            let tokens = TokenTrack::new(toks, 4, 0).unwrap();
            Participant {
                activations: ActivationSeries::new(array![
                    [f64::from(0.5f32 + off), -1.0, f64::from(0.1f32)],
                    [0.0, f64::from(1e-7f32), f64::from(-0.333f32 - off)]
                ])
                .unwrap(),
                vad: derive_vad(&tokens),
                tokens,
            }
        };
        DialogueTrace::new(
            FrameClock::default(),
            ExperimentCondition {
                noise_p: 0.45,
                pad_bias_a: 1.0,
                pad_bias_b: 0.0,
                variant_a: Variant::Finetuned,
                variant_b: Variant::Default,
                seed: u64::MAX - 3,
            },
            p(0.0, vec![3, 0]),
            p(0.25, vec![0, 1]),
        )
        .unwrap()
    }

    #[test]
    fn vad_all_pad_is_silent() {
        let t = TokenTrack::new(vec![0; 5], 8, 0).unwrap();
        assert_eq!(derive_vad(&t).voiced(), &[false; 5]);
    }

    #[test]
    fn vad_pointwise() {
        let t = TokenTrack::new(vec![3, 0, 7], 8, 0).unwrap();
        assert_eq!(derive_vad(&t).voiced(), &[true, false, true]);
    }

    #[test]
    fn vad_matches_elementwise_oracle() {
        let mut rng = crate::rng::substream(11, "test");
        let pad = 5;
        let toks: Vec<u32> = (0..1000).map(|_| rng.random_range(0..16)).collect();
        let track = TokenTrack::new(toks.clone(), 16, pad).unwrap();
        let vad = derive_vad(&track);
        assert_eq!(vad.n_frames(), 1000);
        for (t, &tok) in toks.iter().enumerate() {
            let expect = !matches!(tok, 5);
            assert_eq!(vad.voiced()[t], expect, "frame {t}");
        }
    }

    #[test]
    fn token_track_rejects_out_of_range() {
        assert!(matches!(TokenTrack::new(vec![1], 1, 0), Err(Error::InvalidVocab(1))));
        assert!(TokenTrack::new(vec![4], 4, 0).is_err());
        assert!(TokenTrack::new(vec![1], 4, 4).is_err());
    }

    #[test]
    fn activations_reject_nan() {
        let e = ActivationSeries::new(array![[0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(e, Error::NonFinite { frame: 0, column: 1, .. }));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let trace = tiny_trace();
        write_trace(&trace, dir.path()).unwrap();
        let back = read_trace(dir.path()).unwrap();
        assert_eq!(back, trace);
        for who in [Speaker::A, Speaker::B] {
            let x = trace.participant(who).activations.data();
            let y = back.participant(who).activations.data();
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn write_refuses_lossy_activations() {
        let mut trace = tiny_trace();
        trace.a.activations = ActivationSeries::new(array![[0.1, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_trace(&trace, dir.path()),
            Err(Error::PrecisionLoss { frame: 0, column: 0, .. })
        ));
    }

    #[test]
    fn wrong_matrix_length_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_trace(&tiny_trace(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"dim_a\": 3", "\"dim_a\": 512");
        fs::write(&path, text).unwrap();
        match read_trace(dir.path()) {
            Err(Error::SizeMismatch { file, expected, found }) => {
                assert_eq!(file, "act_A.f32");
                assert_eq!(expected, 2 * 512 * 4);
                assert_eq!(found, 2 * 3 * 4);
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn malformed_manifest_and_bad_values_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_trace(&tiny_trace(), dir.path()).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{ not json").unwrap();
        assert!(matches!(read_trace(dir.path()), Err(Error::Manifest(_))));

        write_trace(&tiny_trace(), dir.path()).unwrap();
        let mut act = fs::read(dir.path().join("act_B.f32")).unwrap();
        act[4..8].copy_from_slice(&f32::INFINITY.to_le_bytes());
        fs::write(dir.path().join("act_B.f32"), act).unwrap();
        assert!(matches!(
            read_trace(dir.path()),
            Err(Error::NonFinite { frame: 0, column: 1, .. })
        ));

        write_trace(&tiny_trace(), dir.path()).unwrap();
        fs::write(dir.path().join("vad_A.u8"), [1u8, 2]).unwrap();
        assert!(matches!(read_trace(dir.path()), Err(Error::InvalidTrace(_))));
    }

    #[test]
    fn clock_rounding() {
        let c = FrameClock::default();
        assert_eq!(c.frames_at_least(80), 1);
        assert_eq!(c.frames_at_least(240), 3);
        assert_eq!(c.frames_at_least(1920), 24);
        assert_eq!(FrameClock::new(20).unwrap().frames_at_least(80), 4);
        assert!(FrameClock::new(0).is_err());
    }
}
