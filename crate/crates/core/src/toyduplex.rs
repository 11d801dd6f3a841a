//! Coupled recurrent toy agents and the full-duplex dialogue simulator.
//!
//! Each agent is a tanh recurrence driven by the token it hears and the token
//! it said last:
//!
//! ```text
//! h'     = tanh(W h + g * E[incoming] + S[prev_self]),  g = 1 - self_masking * [prev_self != PAD]
//! logits = O h' + bias + inhibition * [incoming != PAD] * onehot(PAD) - pad_bias * onehot(PAD)
//! token  ~ softmax(logits / temperature)
//! ```
//!
//! Random weights carry token identity; three reserved state units give the
//! agents turn-taking behavior without any training:
//!
//! - unit 0 integrates the agent's own speech (fatigue) and raises the PAD logit,
//! - unit 1 tracks whether the agent spoke last frame and lowers the PAD logit,
//! - unit 2 tracks whether the partner is audible.
//!
//! The last `memory_units` units are slow leaky integrators of a shared
//! lexicon: every voiced token, said or heard, adds its lexicon vector. The
//! lexicon depends only on `lexicon_seed`, so two agents built from the same
//! hyperparameters accumulate the same conversational context when the channel
//! is clean, and drift apart when it is not. The memory also tilts token
//! choice toward its lexicon direction (`topic_gain`); the PAD logit is shifted
//! by the matching log-sum-exp so the topic never changes whether the agent
//! speaks, only what it says. Above a critical gain the two agents settle on a
//! shared, slowly wandering topic.
//!
//! `W` is `blockdiag(radius, radius * Q, memory_radius * I)` with `Q`
//! Haar-orthogonal, so its spectral radius is the larger of the two radii
//! before any fine-tuning perturbation.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, labels, Rng};
use crate::trace::{
    derive_vad, ActivationSeries, DialogueTrace, ExperimentCondition, FrameClock, Participant,
    TokenTrack, Variant,
};

const FATIGUE: usize = 0;
const SELF_VOICE: usize = 1;
const PARTNER_VOICE: usize = 2;
const RESERVED_UNITS: usize = 3;

pub const PAD_ID: u32 = 0;

/// Construction constants for one agent. Every field has a documented default
/// and can be overridden from the `[agent]` table of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentHyperparams {
    /// State dimensionality.
    pub dim: usize,
    /// Vocabulary size including PAD (PAD is token 0).
    pub vocab_size: u32,
    /// Spectral radius of the fast recurrence.
    pub spectral_radius: f64,
    /// Size of the slow memory block.
    pub memory_units: usize,
    /// Spectral radius of the slow memory block.
    pub memory_radius: f64,
    /// Scale of the lexicon vectors feeding the memory block.
    pub memory_input_scale: f64,
    /// Seed of the lexicon shared by every agent built from these values.
    pub lexicon_seed: u64,
    /// How strongly the memory pulls token choice toward its lexicon direction.
    pub topic_gain: f64,
    /// Std of the random incoming-token embedding entries.
    pub input_scale: f64,
    /// Std of the random self-token embedding entries.
    pub self_scale: f64,
    /// Std of the random output weights for non-PAD tokens.
    pub output_scale: f64,
    /// Drive of the self-voicing unit (+ when the agent spoke, - otherwise).
    pub voicing_drive: f64,
    /// Drive of the partner-voicing unit.
    pub listening_drive: f64,
    /// Drive into the fatigue unit while speaking.
    pub fatigue_drive: f64,
    /// Drive into the fatigue unit while silent (recovery, applied negatively).
    pub recovery_drive: f64,
    /// How strongly speaking lowers the PAD logit.
    pub voicing_gain: f64,
    /// How strongly fatigue raises the PAD logit.
    pub fatigue_gain: f64,
    /// Base PAD logit.
    pub pad_logit: f64,
    /// Speak-inhibition added to the PAD logit while the partner is audible.
    pub inhibition: f64,
    /// Fraction of the incoming embedding lost while the agent itself speaks.
    pub self_masking: f64,
    pub temperature: f64,
    /// Relative Frobenius size of the fine-tuning perturbation.
    pub finetune_scale: f64,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        Self {
            dim: 64,
            vocab_size: 32,
            spectral_radius: 0.9,
            memory_units: 16,
            memory_radius: 0.99,
            memory_input_scale: 0.1,
            lexicon_seed: 7,
            topic_gain: 0.55,
            input_scale: 0.5,
            self_scale: 0.5,
            output_scale: 0.3,
            voicing_drive: 2.5,
            listening_drive: 2.5,
            fatigue_drive: 0.25,
            recovery_drive: 0.15,
            voicing_gain: 3.0,
            fatigue_gain: 1.6,
            pad_logit: 3.8,
            inhibition: 3.0,
            self_masking: 0.9,
            temperature: 1.0,
            finetune_scale: 0.1,
        }
    }
}

impl AgentHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < RESERVED_UNITS + 1 + self.memory_units {
            return Err(Error::Config(format!(
                "agent dim must be at least {} with {} memory units",
                RESERVED_UNITS + 1 + self.memory_units,
                self.memory_units
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidVocab(self.vocab_size as usize));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.self_masking) {
            return Err(Error::Config("self_masking must lie in [0, 1]".into()));
        }
        if !(self.inhibition >= 0.0) {
            return Err(Error::Config("inhibition must be >= 0".into()));
        }
        if !(self.finetune_scale >= 0.0) {
            return Err(Error::Config("finetune_scale must be >= 0".into()));
        }
        let all = [
            self.spectral_radius,
            self.memory_radius,
            self.memory_input_scale,
            self.topic_gain,
            self.input_scale,
            self.self_scale,
            self.output_scale,
            self.voicing_drive,
            self.listening_drive,
            self.fatigue_drive,
            self.recovery_drive,
            self.voicing_gain,
            self.fatigue_gain,
            self.pad_logit,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("agent hyperparameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyAgentParams {
    pub pad_id: u32,
    /// Recurrence, dim × dim.
    pub recurrence: Array2<f64>,
    /// Incoming-token embedding, vocab × dim.
    pub input_embedding: Array2<f64>,
    /// Own previous-token embedding, vocab × dim.
    pub self_embedding: Array2<f64>,
    /// Readout, vocab × dim.
    pub output: Array2<f64>,
    pub output_bias: Array1<f64>,
    pub inhibition: f64,
    pub self_masking: f64,
    pub temperature: f64,
    pub variant: Variant,
    /// First unit of the memory block.
    pub memory_start: usize,
}

impl ToyAgentParams {
    pub fn dim(&self) -> usize {
        self.recurrence.nrows()
    }

    pub fn vocab_size(&self) -> u32 {
        self.output.nrows() as u32
    }

    /// Deterministic weights for `(seed, variant)`.
    pub fn generate(seed: u64, variant: Variant, hp: &AgentHyperparams) -> Result<Self> {
        hp.validate()?;
        let d = hp.dim;
        let v = hp.vocab_size as usize;
        let pad = PAD_ID as usize;
        let mut rng = rng::substream(seed, "agent/weights");

        let mut recurrence = Array2::zeros((d, d));
        recurrence[[FATIGUE, FATIGUE]] = hp.spectral_radius;
        let mem = d - hp.memory_units;
        let q = linalg::random_orthogonal(mem - 1, &mut rng);
        recurrence
            .slice_mut(s![1..mem, 1..mem])
            .assign(&(q * hp.spectral_radius));
        for j in mem..d {
            recurrence[[j, j]] = hp.memory_radius;
        }

        let mut input_embedding = linalg::gaussian(v, d, hp.input_scale, &mut rng);
        let mut self_embedding = linalg::gaussian(v, d, hp.self_scale, &mut rng);
        let mut lexicon = linalg::gaussian(
            v,
            hp.memory_units,
            hp.memory_input_scale,
            &mut rng::substream(hp.lexicon_seed, labels::LEXICON),
        );
        lexicon.row_mut(pad).fill(0.0);
        input_embedding.slice_mut(s![.., mem..]).assign(&lexicon);
        self_embedding.slice_mut(s![.., mem..]).assign(&lexicon);
        let mut output = linalg::gaussian(v, d, hp.output_scale, &mut rng);
        if hp.memory_input_scale > 0.0 && v > 1 {
            // Centered over voiced tokens: the topic picks which token, not
            // whether to speak.
            let voiced_mean = lexicon.sum_axis(Axis(0)) / (v - 1) as f64;
            let topic = (&lexicon - &voiced_mean) * (hp.topic_gain / hp.memory_input_scale);
            output.slice_mut(s![.., mem..]).assign(&topic);
        }
        for tok in 0..v {
            let voiced = tok != pad;
            let sign = if voiced { 1.0 } else { -1.0 };
            input_embedding[[tok, FATIGUE]] = 0.0;
            input_embedding[[tok, SELF_VOICE]] = 0.0;
            input_embedding[[tok, PARTNER_VOICE]] = sign * hp.listening_drive;
            self_embedding[[tok, FATIGUE]] = if voiced {
                hp.fatigue_drive
            } else {
                -hp.recovery_drive
            };
            self_embedding[[tok, SELF_VOICE]] = sign * hp.voicing_drive;
            self_embedding[[tok, PARTNER_VOICE]] = 0.0;
            output[[tok, FATIGUE]] = 0.0;
            output[[tok, SELF_VOICE]] = 0.0;
            output[[tok, PARTNER_VOICE]] = 0.0;
        }
        output.row_mut(pad).fill(0.0);
        output[[pad, FATIGUE]] = hp.fatigue_gain;
        output[[pad, SELF_VOICE]] = -hp.voicing_gain;
        let mut output_bias = Array1::zeros(v);
        output_bias[pad] = hp.pad_logit;

        let mut params = Self {
            pad_id: PAD_ID,
            recurrence,
            input_embedding,
            self_embedding,
            output,
            output_bias,
            inhibition: hp.inhibition,
            self_masking: hp.self_masking,
            temperature: hp.temperature,
            variant: Variant::Default,
            memory_start: mem,
        };
        if variant == Variant::Finetuned {
            params.finetune(seed, hp.finetune_scale);
        }
        Ok(params)
    }

    /// Multiplicative perturbation along a seed-derived direction, scaled so
    /// every weight block moves by exactly `scale` in relative Frobenius norm.
    fn finetune(&mut self, seed: u64, scale: f64) {
        let mut rng = rng::substream(seed, labels::FINETUNE);
        let perturb = |m: &mut Array2<f64>, rng: &mut Rng| {
            let noise = Array2::from_shape_simple_fn(m.dim(), || rng.sample::<f64, _>(StandardNormal));
            let delta = &*m * &noise;
            let norm_m = linalg::frobenius(m);
            let norm_d = linalg::frobenius(&delta);
            if norm_m > 0.0 && norm_d > 0.0 {
                m.scaled_add(scale * norm_m / norm_d, &delta);
            }
        };
        perturb(&mut self.recurrence, &mut rng);
        perturb(&mut self.input_embedding, &mut rng);
        perturb(&mut self.self_embedding, &mut rng);
        perturb(&mut self.output, &mut rng);
        let mut bias = self.output_bias.clone().insert_axis(ndarray::Axis(0));
        perturb(&mut bias, &mut rng);
        self.output_bias = bias.remove_axis(ndarray::Axis(0));
        self.variant = Variant::Finetuned;
    }
}

#[derive(Debug, Clone)]
pub struct ToyAgentState {
    pub h: Array1<f64>,
    pub prev_self_token: u32,
    rng: Rng,
}

impl ToyAgentState {
    pub fn new(params: &ToyAgentParams, rng: Rng) -> Self {
        Self {
            h: Array1::zeros(params.dim()),
            prev_self_token: params.pad_id,
            rng,
        }
    }
}

/// Weights from `(seed, variant)` and a fresh state whose sampling stream is
/// also derived from `seed`.
pub fn init_agent(
    seed: u64,
    variant: Variant,
    hp: &AgentHyperparams,
) -> Result<(ToyAgentParams, ToyAgentState)> {
    let params = ToyAgentParams::generate(seed, variant, hp)?;
    let state = ToyAgentState::new(&params, rng::substream(seed, "agent/sampling"));
    Ok((params, state))
}

/// Lowers the PAD logit by `bias`, leaving every other entry alone.
pub fn apply_pad_bias(logits: &mut [f64], pad_id: u32, bias: f64) {
    logits[pad_id as usize] -= bias;
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .map(|&z| ((z - max) / temperature).exp())
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

fn sample(probs: &[f64], rng: &mut Rng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // Rounding left `acc` just short of 1: fall back to the last token with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// Output logits for the state `h` after hearing `incoming`.
pub fn output_logits(params: &ToyAgentParams, h: &Array1<f64>, incoming: u32, pad_bias: f64) -> Vec<f64> {
    let mut logits = params.output.dot(h) + &params.output_bias;
    let pad = params.pad_id as usize;
    let m = params.memory_start;
    if m < h.len() {
        let topic = params.output.slice(s![.., m..]).dot(&h.slice(s![m..]));
        let tau = params.temperature;
        let voiced = |with_topic: bool| {
            let z = logits
                .iter()
                .zip(&topic)
                .enumerate()
                .filter(|&(k, _)| k != pad)
                .map(|(_, (&l, &t))| if with_topic { l } else { l - t } / tau);
            let max = z.clone().fold(f64::NEG_INFINITY, f64::max);
            max + z.map(|x| (x - max).exp()).sum::<f64>().ln()
        };
        logits[pad] += tau * (voiced(true) - voiced(false));
    }
    if incoming != params.pad_id {
        logits[pad] += params.inhibition;
    }
    let mut logits = logits.to_vec();
    apply_pad_bias(&mut logits, params.pad_id, pad_bias);
    logits
}

/// One frame: update the state from what was heard, then emit a token.
/// Returns `(token, activation)`; the activation is the new state.
pub fn agent_step(
    params: &ToyAgentParams,
    state: &mut ToyAgentState,
    incoming: u32,
    pad_bias: f64,
) -> (u32, Array1<f64>) {
    debug_assert!(incoming < params.vocab_size());
    let mut pre = params.recurrence.dot(&state.h);
    let hearing = if state.prev_self_token == params.pad_id {
        1.0
    } else {
        1.0 - params.self_masking
    };
    pre.scaled_add(hearing, &params.input_embedding.row(incoming as usize));
    pre += &params.self_embedding.row(state.prev_self_token as usize);
    let h = pre.mapv(f64::tanh);
    let logits = output_logits(params, &h, incoming, pad_bias);
    let probs = softmax(&logits, params.temperature);
    let token = sample(&probs, &mut state.rng);
    state.h = h.clone();
    state.prev_self_token = token;
    (token, h)
}

/// Everything the simulator needs beyond the per-dialogue condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub agent: AgentHyperparams,
    /// Seed of the agents' weights. Fixed across dialogues: the dialogue seed
    /// only drives sampling and the channel.
    pub model_seed: u64,
    /// Scripted tokens injected into both agents' incoming streams before
    /// routing takes over.
    pub prompt: Vec<u32>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            agent: AgentHyperparams::default(),
            model_seed: 2024,
            prompt: default_prompt(),
        }
    }
}

/// Fifteen voiced frames followed by ten frames of silence (2 s at 80 ms).
pub fn default_prompt() -> Vec<u32> {
    (0..25u32)
        .map(|t| if t < 15 { 1 + (t * 7) % 31 } else { PAD_ID })
        .collect()
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if let Some(t) = self.prompt.iter().find(|&&t| t >= self.agent.vocab_size) {
            return Err(Error::Config(format!(
                "prompt token {t} outside vocabulary of size {}",
                self.agent.vocab_size
            )));
        }
        Ok(())
    }

    fn agent_seed(&self, label: &str) -> u64 {
        use rand::RngCore;
        rng::substream(self.model_seed, label).next_u64()
    }

    /// The two agents' weights for a given pairing.
    pub fn agents(&self, variant_a: Variant, variant_b: Variant) -> Result<(ToyAgentParams, ToyAgentParams)> {
        Ok((
            ToyAgentParams::generate(self.agent_seed(labels::AGENT_A_PARAMS), variant_a, &self.agent)?,
            ToyAgentParams::generate(self.agent_seed(labels::AGENT_B_PARAMS), variant_b, &self.agent)?,
        ))
    }
}

/// Runs both agents frame-synchronously through the channel.
pub fn simulate_dialogue(
    condition: &ExperimentCondition,
    duration_frames: usize,
    clock: FrameClock,
    cfg: &SimConfig,
) -> Result<DialogueTrace> {
    if duration_frames < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: duration_frames,
        });
    }
    condition.validate()?;
    cfg.validate()?;
    let (pa, pb) = cfg.agents(condition.variant_a, condition.variant_b)?;
    let mut sa = ToyAgentState::new(&pa, rng::substream(condition.seed, labels::AGENT_A_SAMPLING));
    let mut sb = ToyAgentState::new(&pb, rng::substream(condition.seed, labels::AGENT_B_SAMPLING));
    let vocab = cfg.agent.vocab_size;
    let mut channel = Channel::new(ChannelConfig::new(condition.noise_p, condition.seed)?, vocab)?;

    let d = cfg.agent.dim;
    let mut act_a = Array2::zeros((duration_frames, d));
    let mut act_b = Array2::zeros((duration_frames, d));
    let mut tok_a = Vec::with_capacity(duration_frames);
    let mut tok_b = Vec::with_capacity(duration_frames);
    let (mut in_a, mut in_b) = (PAD_ID, PAD_ID);
    for t in 0..duration_frames {
        if let Some(&p) = cfg.prompt.get(t) {
            in_a = p;
            in_b = p;
        }
        let (out_a, h_a) = agent_step(&pa, &mut sa, in_a, condition.pad_bias_a);
        let (out_b, h_b) = agent_step(&pb, &mut sb, in_b, condition.pad_bias_b);
        act_a.row_mut(t).assign(&h_a);
        act_b.row_mut(t).assign(&h_b);
        tok_a.push(out_a);
        tok_b.push(out_b);
        (in_b, in_a) = channel.route_step(out_a, out_b)?;
    }

    let participant = |act: Array2<f64>, toks: Vec<u32>| -> Result<Participant> {
        let tokens = TokenTrack::new(toks, vocab, PAD_ID)?;
        Ok(Participant {
            activations: ActivationSeries::new(act)?.quantize_f32(),
            vad: derive_vad(&tokens),
            tokens,
        })
    };
    DialogueTrace::new(
        clock,
        *condition,
        participant(act_a, tok_a)?,
        participant(act_b, tok_b)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp_small() -> AgentHyperparams {
        AgentHyperparams {
            dim: 16,
            vocab_size: 8,
            memory_units: 4,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let hp = hp_small();
        for v in [Variant::Default, Variant::Finetuned] {
            let a = ToyAgentParams::generate(5, v, &hp).unwrap();
            let b = ToyAgentParams::generate(5, v, &hp).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn finetune_moves_each_block_by_scale() {
        let hp = hp_small();
        let base = ToyAgentParams::generate(5, Variant::Default, &hp).unwrap();
        let tuned = ToyAgentParams::generate(5, Variant::Finetuned, &hp).unwrap();
        let rel = |a: &Array2<f64>, b: &Array2<f64>| linalg::frobenius(&(b - a)) / linalg::frobenius(a);
        for (a, b) in [
            (&base.recurrence, &tuned.recurrence),
            (&base.input_embedding, &tuned.input_embedding),
            (&base.self_embedding, &tuned.self_embedding),
            (&base.output, &tuned.output),
        ] {
            assert!((rel(a, b) - hp.finetune_scale).abs() < 1e-12);
        }
        let db = (&tuned.output_bias - &base.output_bias).mapv(|x| x * x).sum().sqrt();
        let nb = base.output_bias.mapv(|x| x * x).sum().sqrt();
        assert!((db / nb - hp.finetune_scale).abs() < 1e-12);
    }

    #[test]
    fn different_seeds_differ() {
        let hp = hp_small();
        let a = ToyAgentParams::generate(1, Variant::Default, &hp).unwrap();
        let b = ToyAgentParams::generate(2, Variant::Default, &hp).unwrap();
        let max_diff = a
            .input_embedding
            .iter()
            .zip(b.input_embedding.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn recurrence_has_configured_radius() {
        // Orthogonal blocks: W^T W is diagonal with r^2 on the fast units and
        // r_mem^2 on the memory units.
        let hp = hp_small();
        let p = ToyAgentParams::generate(9, Variant::Default, &hp).unwrap();
        let wtw = p.recurrence.t().dot(&p.recurrence);
        let mem = hp.dim - hp.memory_units;
        for i in 0..hp.dim {
            for j in 0..hp.dim {
                let r = if i < mem { hp.spectral_radius } else { hp.memory_radius };
                let expect = if i == j { r * r } else { 0.0 };
                assert!((wtw[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pad_bias_examples() {
        let mut l = vec![1.0, 2.0, 3.0];
        apply_pad_bias(&mut l, 0, 0.0);
        assert_eq!(l, vec![1.0, 2.0, 3.0]);
        apply_pad_bias(&mut l, 0, 0.5);
        assert_eq!(l, vec![0.5, 2.0, 3.0]);
    }

    #[test]
    fn pad_bias_lowers_pad_probability() {
        let mut rng = rng::substream(1, "pad-bias-test");
        for _ in 0..500 {
            let logits: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
            let bias = rng.random_range(1e-3..4.0);
            let before = softmax(&logits, 1.0)[0];
            let mut biased = logits.clone();
            apply_pad_bias(&mut biased, 0, bias);
            let after = softmax(&biased, 1.0)[0];
            assert!(after < before, "{before} -> {after}");
        }
    }

    #[test]
    fn strong_inhibition_silences_agent() {
        let hp = AgentHyperparams {
            inhibition: 1e9,
            ..hp_small()
        };
        let (p, mut s) = init_agent(4, Variant::Default, &hp).unwrap();
        for t in 0..200 {
            let (tok, _) = agent_step(&p, &mut s, 1 + (t % 7), 0.0);
            assert_eq!(tok, PAD_ID);
        }
    }

    #[test]
    fn near_zero_temperature_is_greedy() {
        let hp = AgentHyperparams {
            temperature: 1e-9,
            ..hp_small()
        };
        let (p, mut s) = init_agent(4, Variant::Default, &hp).unwrap();
        for t in 0..50u32 {
            let mut shadow = s.clone();
            let pre = p.recurrence.dot(&shadow.h)
                + &p.input_embedding.row((t % 8) as usize)
                + &p.self_embedding.row(shadow.prev_self_token as usize);
            let h = pre.mapv(f64::tanh);
            let logits = output_logits(&p, &h, t % 8, 0.0);
            let argmax = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0 as u32;
            let (tok, _) = agent_step(&p, &mut s, t % 8, 0.0);
            assert_eq!(tok, argmax);
            shadow.prev_self_token = tok;
        }
    }

    #[test]
    fn scripted_replay_is_bit_identical() {
        let hp = hp_small();
        let run = || {
            let (p, mut s) = init_agent(12, Variant::Finetuned, &hp).unwrap();
            (0..50u32)
                .map(|t| {
                    let incoming = if t % 5 < 2 { 0 } else { (t * 3) % 8 };
                    let (tok, h) = agent_step(&p, &mut s, incoming, 0.5);
                    (tok, h.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn simulation_requires_two_frames() {
        let cfg = SimConfig::default();
        let e = simulate_dialogue(&ExperimentCondition::default(), 1, FrameClock::default(), &cfg);
        assert!(matches!(e, Err(Error::InsufficientFrames { .. })));
    }

    #[test]
    fn hundred_seconds_is_1250_frames() {
        let cfg = SimConfig::default();
        let trace =
            simulate_dialogue(&ExperimentCondition::default(), 1250, FrameClock::default(), &cfg).unwrap();
        assert_eq!(trace.n_frames(), 1250);
        assert_eq!(trace.duration_ms(), 100_000);
        assert!(trace.vad_matches_tokens());
        for who in [crate::Speaker::A, crate::Speaker::B] {
            assert!(trace
                .participant(who)
                .activations
                .data()
                .iter()
                .all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
