//! Turn-taking annotation: IPUs, end-of-IPU targets, Hold / Non-Hold labels.
//!
//! Thresholds are real-time; frame counts follow from the clock:
//! - an IPU is a voiced stretch bounded by at least 80 ms of silence,
//! - a transition is excluded when the pause to the next IPU exceeds 1 s,
//! - or when the speakers overlap for more than 240 ms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{DialogueTrace, FrameClock, Speaker, VadTrack};

pub const MIN_SILENCE_MS: u32 = 80;
pub const MAX_OVERLAP_MS: i64 = 240;
pub const MAX_PAUSE_MS: i64 = 1000;

/// Inclusive voiced interval of one speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipu {
    pub onset_frame: usize,
    pub offset_frame: usize,
    pub speaker: Speaker,
}

impl Ipu {
    pub fn len(&self) -> usize {
        self.offset_frame - self.onset_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.onset_frame..=self.offset_frame).contains(&frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    Hold,
    NonHold,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    None,
    LongPause,
    LongOverlap,
    TraceEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionLabel {
    /// The end-of-IPU frame the decision is attached to.
    pub boundary_frame: usize,
    pub speaker: Speaker,
    pub label: Transition,
    pub exclusion_reason: Exclusion,
    /// Longest contiguous partner overlap inside the ending IPU, in ms.
    pub overlap_ms: i64,
    /// Frame of the earliest following onset (partner mid-IPU counts as `b + 1`).
    pub next_onset: Option<usize>,
    /// Silence between the boundary and `next_onset`, in ms.
    pub gap_ms: Option<i64>,
}

fn min_gap_frames(clock: FrameClock) -> usize {
    clock.frames_at_least(MIN_SILENCE_MS).max(1)
}

/// Voiced runs, with silent gaps shorter than 80 ms bridged. At the default
/// 80 ms clock every silent frame is already 80 ms, so IPUs are exactly the
/// maximal voiced runs.
pub fn extract_ipus(vad: &VadTrack, clock: FrameClock, speaker: Speaker) -> Vec<Ipu> {
    let min_gap = min_gap_frames(clock);
    let mut ipus: Vec<Ipu> = Vec::new();
    let voiced = vad.voiced();
    let mut t = 0;
    while t < voiced.len() {
        if !voiced[t] {
            t += 1;
            continue;
        }
        let onset = t;
        while t < voiced.len() && voiced[t] {
            t += 1;
        }
        let offset = t - 1;
        match ipus.last_mut() {
            Some(prev) if onset - prev.offset_frame - 1 < min_gap => prev.offset_frame = offset,
            _ => ipus.push(Ipu {
                onset_frame: onset,
                offset_frame: offset,
                speaker,
            }),
        }
    }
    ipus
}

/// Frames covered by `ipus`, as a VAD track of length `n_frames`.
pub fn render_ipus(ipus: &[Ipu], n_frames: usize) -> VadTrack {
    let mut voiced = vec![false; n_frames];
    for ipu in ipus {
        voiced[ipu.onset_frame..=ipu.offset_frame].fill(true);
    }
    VadTrack::new(voiced)
}

/// True when the IPU's offset is followed by observable qualifying silence.
fn is_eoi(ipu: &Ipu, n_frames: usize, clock: FrameClock) -> bool {
    ipu.offset_frame + min_gap_frames(clock) < n_frames
}

/// Binary end-of-IPU track: 1 at the last voiced frame of every IPU whose
/// following silence is observed inside the trace.
pub fn eoi_targets(ipus: &[Ipu], n_frames: usize, clock: FrameClock) -> Vec<u8> {
    let mut target = vec![0u8; n_frames];
    for ipu in ipus.iter().filter(|i| is_eoi(i, n_frames, clock)) {
        target[ipu.offset_frame] = 1;
    }
    target
}

/// Longest contiguous run of `partner` voicing inside `[onset, offset]`.
fn longest_overlap(ipu: &Ipu, partner: &[bool]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for &v in &partner[ipu.onset_frame..=ipu.offset_frame] {
        run = if v { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

fn label_speaker(
    own: &[Ipu],
    partner: &[Ipu],
    partner_voiced: &[bool],
    n_frames: usize,
    clock: FrameClock,
    out: &mut Vec<TransitionLabel>,
) {
    let ms = |frames: usize| clock.frames_to_ms(frames as i64);
    for (i, ipu) in own.iter().enumerate() {
        if !is_eoi(ipu, n_frames, clock) {
            continue;
        }
        let b = ipu.offset_frame;
        let overlap_ms = ms(longest_overlap(ipu, partner_voiced));
        let mut label = TransitionLabel {
            boundary_frame: b,
            speaker: ipu.speaker,
            label: Transition::Excluded,
            exclusion_reason: Exclusion::None,
            overlap_ms,
            next_onset: None,
            gap_ms: None,
        };
        if overlap_ms > MAX_OVERLAP_MS {
            label.exclusion_reason = Exclusion::LongOverlap;
            out.push(label);
            continue;
        }
        let own_next = own.get(i + 1).map(|n| n.onset_frame);
        let partner_next = if partner_voiced[b] {
            Some(b + 1)
        } else {
            partner.iter().map(|p| p.onset_frame).find(|&o| o > b)
        };
        let (next, shift) = match (own_next, partner_next) {
            (None, None) => {
                label.exclusion_reason = Exclusion::TraceEnd;
                out.push(label);
                continue;
            }
            (Some(o), None) => (o, false),
            (None, Some(p)) => (p, true),
            // Simultaneous onsets count as a turn shift.
            (Some(o), Some(p)) => {
                if p <= o {
                    (p, true)
                } else {
                    (o, false)
                }
            }
        };
        let gap_ms = ms(next - b - 1);
        label.next_onset = Some(next);
        label.gap_ms = Some(gap_ms);
        if gap_ms > MAX_PAUSE_MS {
            label.exclusion_reason = Exclusion::LongPause;
        } else {
            label.label = if shift {
                Transition::NonHold
            } else {
                Transition::Hold
            };
        }
        out.push(label);
    }
}

/// One label per end-of-IPU of either speaker, ordered by boundary frame then
/// speaker.
pub fn label_transitions(
    ipus_a: &[Ipu],
    ipus_b: &[Ipu],
    n_frames: usize,
    clock: FrameClock,
) -> Vec<TransitionLabel> {
    let voiced_a = render_ipus(ipus_a, n_frames);
    let voiced_b = render_ipus(ipus_b, n_frames);
    let mut out = Vec::new();
    label_speaker(ipus_a, ipus_b, voiced_b.voiced(), n_frames, clock, &mut out);
    label_speaker(ipus_b, ipus_a, voiced_a.voiced(), n_frames, clock, &mut out);
    out.sort_by_key(|l| (l.boundary_frame, l.speaker));
    out
}

/// Per-speaker annotation of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerAnnotation {
    pub ipus: Vec<Ipu>,
    pub eoi: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub n_frames: usize,
    pub clock: FrameClock,
    pub a: SpeakerAnnotation,
    pub b: SpeakerAnnotation,
    pub transitions: Vec<TransitionLabel>,
}

impl Annotation {
    pub fn speaker(&self, who: Speaker) -> &SpeakerAnnotation {
        match who {
            Speaker::A => &self.a,
            Speaker::B => &self.b,
        }
    }

    /// Hold/Non-Hold per frame for `who`: `Some(label)` at each boundary.
    pub fn transitions_of(&self, who: Speaker) -> impl Iterator<Item = &TransitionLabel> {
        self.transitions.iter().filter(move |l| l.speaker == who)
    }

    /// One JSON object per line: every IPU, then every transition.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::io("<annotation output>", e);
        let ms = |f: usize| self.clock.frames_to_ms(f as i64);
        for ipu in self.a.ipus.iter().chain(&self.b.ipus) {
            let rec = serde_json::json!({
                "type": "ipu",
                "speaker": ipu.speaker,
                "onset_frame": ipu.onset_frame,
                "offset_frame": ipu.offset_frame,
                "onset_ms": ms(ipu.onset_frame),
                "offset_ms": ms(ipu.offset_frame + 1),
                "eoi": is_eoi(ipu, self.n_frames, self.clock),
            });
            writeln!(w, "{rec}").map_err(io)?;
        }
        for l in &self.transitions {
            let mut rec = serde_json::to_value(l).map_err(|e| Error::Manifest(e.to_string()))?;
            rec["type"] = "transition".into();
            rec["boundary_ms"] = ms(l.boundary_frame).into();
            writeln!(w, "{rec}").map_err(io)?;
        }
        Ok(())
    }
}

pub fn annotate(trace: &DialogueTrace) -> Annotation {
    let clock = trace.clock();
    let n = trace.n_frames();
    let side = |who: Speaker| {
        let ipus = extract_ipus(&trace.participant(who).vad, clock, who);
        let eoi = eoi_targets(&ipus, n, clock);
        SpeakerAnnotation { ipus, eoi }
    };
    let a = side(Speaker::A);
    let b = side(Speaker::B);
    let transitions = label_transitions(&a.ipus, &b.ipus, n, clock);
    Annotation {
        n_frames: n,
        clock,
        a,
        b,
        transitions,
    }
}

/// Floor-occupancy statistics of one dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DialogueStats {
    pub voiced_fraction_a: f64,
    pub voiced_fraction_b: f64,
    pub overlap_fraction: f64,
    pub silence_fraction: f64,
    pub ipus_a: usize,
    pub ipus_b: usize,
}

pub fn dialogue_stats(trace: &DialogueTrace) -> DialogueStats {
    let va = trace.participant(Speaker::A).vad.voiced();
    let vb = trace.participant(Speaker::B).vad.voiced();
    let n = va.len().max(1) as f64;
    let both = va.iter().zip(vb).filter(|(a, b)| **a && **b).count() as f64;
    let none = va.iter().zip(vb).filter(|(a, b)| !**a && !**b).count() as f64;
    let clock = trace.clock();
    DialogueStats {
        voiced_fraction_a: trace.participant(Speaker::A).vad.voiced_fraction(),
        voiced_fraction_b: trace.participant(Speaker::B).vad.voiced_fraction(),
        overlap_fraction: both / n,
        silence_fraction: none / n,
        ipus_a: extract_ipus(&trace.participant(Speaker::A).vad, clock, Speaker::A).len(),
        ipus_b: extract_ipus(&trace.participant(Speaker::B).vad, clock, Speaker::B).len(),
    }
}
