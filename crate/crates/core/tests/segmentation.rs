use duplex_coupling::rng::substream;
use duplex_coupling::segmentation::{
    extract_ipus, label_transitions, Exclusion, Ipu, Transition, TransitionLabel,
};
use duplex_coupling::{FrameClock, Speaker, VadTrack};
use rand::Rng;

fn bits(n: usize, code: u32) -> Vec<bool> {
    (0..n).map(|i| code >> i & 1 == 1).collect()
}

/// Every `[i, j]` satisfying the IPU definition directly: voiced ends, no
/// interior silence of `min_gap` frames or more, and at least `min_gap`
/// silent frames (or the trace edge) on both sides.
fn enumerate_ipus(v: &[bool], min_gap: usize) -> Vec<(usize, usize)> {
    let n = v.len();
    let silent = |a: usize, b: usize| (a..b).all(|k| !v[k]);
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            if !v[i] || !v[j] {
                continue;
            }
            let mut ok = true;
            let mut run = 0;
            for &x in &v[i..=j] {
                run = if x { 0 } else { run + 1 };
                if run >= min_gap {
                    ok = false;
                }
            }
            let left = i == 0 || (i >= min_gap && silent(i - min_gap, i)) || silent(0, i);
            let right = j + 1 == n || (j + min_gap < n && silent(j + 1, j + 1 + min_gap)) || silent(j + 1, n);
            if ok && left && right {
                out.push((i, j));
            }
        }
    }
    out
}

/// Run-length reference: list the runs, then absorb silent runs shorter than
/// `min_gap` that sit between two voiced runs.
fn run_length_ipus(v: &[bool], min_gap: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(bool, usize, usize)> = Vec::new();
    for (t, &x) in v.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.0 == x => r.2 = t,
            _ => runs.push((x, t, t)),
        }
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut pending_gap: Option<usize> = None;
    for (voiced, s, e) in runs {
        if !voiced {
            pending_gap = Some(e - s + 1);
            continue;
        }
        match (out.last_mut(), pending_gap) {
            (Some(last), Some(g)) if g < min_gap => last.1 = e,
            _ => out.push((s, e)),
        }
        pending_gap = None;
    }
    out
}

fn spans(ipus: &[Ipu]) -> Vec<(usize, usize)> {
    ipus.iter().map(|i| (i.onset_frame, i.offset_frame)).collect()
}

pub fn extract_matches_exhaustive_enumeration_up_to_12_frames() {
    for frame_ms in [80, 40, 20] {
        let clock = FrameClock::new(frame_ms).unwrap();
        let min_gap = (80 / frame_ms) as usize;
        for n in 0..=12 {
            for code in 0..(1u32 << n) {
                let v = bits(n, code);
                let got = extract_ipus(&VadTrack::new(v.clone()), clock, Speaker::A);
                assert_eq!(spans(&got), enumerate_ipus(&v, min_gap), "{frame_ms} ms, {v:?}");
            }
        }
    }
}

pub fn extract_matches_run_length_reference_on_random_tracks() {
    let mut rng = substream(11, "segmentation-test");
    for frame_ms in [80, 20] {
        let clock = FrameClock::new(frame_ms).unwrap();
        let min_gap = (80 / frame_ms) as usize;
        for _ in 0..10_000 {
            let n = rng.random_range(0..=64);
            let p = rng.random_range(0.1..0.9);
            let v: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
            let got = extract_ipus(&VadTrack::new(v.clone()), clock, Speaker::B);
            assert_eq!(spans(&got), run_length_ipus(&v, min_gap), "{v:?}");
            assert!(got.iter().all(|i| i.speaker == Speaker::B));
        }
    }
}

fn track(n: usize, on: &[(usize, usize)]) -> VadTrack {
    let mut v = vec![false; n];
    for &(s, e) in on {
        v[s..=e].fill(true);
    }
    VadTrack::new(v)
}

type Row = (usize, Speaker, Transition, Exclusion, Option<i64>, i64);

fn row(l: &TransitionLabel) -> Row {
    (l.boundary_frame, l.speaker, l.label, l.exclusion_reason, l.gap_ms, l.overlap_ms)
}

pub fn transition_golden_table() {
    use Exclusion::*;
    use Speaker::{A, B};
    use Transition::*;
    #[allow(clippy::type_complexity)]
    let cases: Vec<(&str, u32, usize, Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<Row>)> = vec![
        (
            "same speaker resumes",
            80,
            12,
            vec![(0, 2), (5, 7)],
            vec![],
            vec![(2, A, Hold, None, Some(160), 0), (7, A, Excluded, TraceEnd, Option::None, 0)],
        ),
        (
            "partner takes the floor",
            80,
            10,
            vec![(0, 2)],
            vec![(4, 6)],
            vec![(2, A, NonHold, None, Some(80), 0), (6, B, Excluded, TraceEnd, Option::None, 0)],
        ),
        (
            "short overlap switch",
            80,
            10,
            vec![(0, 4)],
            vec![(3, 7)],
            vec![(4, A, NonHold, None, Some(0), 160), (7, B, Excluded, TraceEnd, Option::None, 160)],
        ),
        (
            "overlap above 240 ms",
            80,
            12,
            vec![(0, 9)],
            vec![(2, 6)],
            vec![
                (6, B, Excluded, LongOverlap, Option::None, 400),
                (9, A, Excluded, LongOverlap, Option::None, 400),
            ],
        ),
        (
            "pause above one second",
            80,
            20,
            vec![(0, 1)],
            vec![(16, 17)],
            vec![
                (1, A, Excluded, LongPause, Some(1120), 0),
                (17, B, Excluded, TraceEnd, Option::None, 0),
            ],
        ),
        (
            "960 ms pause still counts",
            80,
            18,
            vec![(0, 1), (14, 15)],
            vec![],
            vec![(1, A, Hold, None, Some(960), 0), (15, A, Excluded, TraceEnd, Option::None, 0)],
        ),
        (
            "simultaneous onsets favour the partner",
            80,
            9,
            vec![(0, 1), (4, 5)],
            vec![(4, 6)],
            vec![
                (1, A, NonHold, None, Some(160), 0),
                (5, A, NonHold, None, Some(0), 160),
                (6, B, Excluded, TraceEnd, Option::None, 160),
            ],
        ),
        (
            "IPU touching the trace end has no boundary",
            80,
            8,
            vec![(0, 2), (5, 7)],
            vec![],
            vec![(2, A, Hold, None, Some(160), 0)],
        ),
        (
            "240 ms overlap is kept",
            80,
            11,
            vec![(0, 5)],
            vec![(2, 4), (7, 8)],
            vec![
                (4, B, NonHold, None, Some(0), 240),
                (5, A, NonHold, None, Some(80), 240),
                (8, B, Excluded, TraceEnd, Option::None, 0),
            ],
        ),
        (
            "40 ms clock bridges a single silent frame",
            40,
            14,
            vec![(0, 1), (3, 4), (8, 10)],
            vec![],
            vec![(4, A, Hold, None, Some(120), 0), (10, A, Excluded, TraceEnd, Option::None, 0)],
        ),
    ];
    assert_eq!(cases.len(), 10);
    for (name, frame_ms, n, a, b, expected) in cases {
        let clock = FrameClock::new(frame_ms).unwrap();
        let ia = extract_ipus(&track(n, &a), clock, A);
        let ib = extract_ipus(&track(n, &b), clock, B);
        let got: Vec<Row> = label_transitions(&ia, &ib, n, clock).iter().map(row).collect();
        assert_eq!(got, expected, "{name}");
    }
}

mod run {
    #[test]
    fn extract_matches_exhaustive_enumeration_up_to_12_frames() {
        super::extract_matches_exhaustive_enumeration_up_to_12_frames()
    }

    #[test]
    fn extract_matches_run_length_reference_on_random_tracks() {
        super::extract_matches_run_length_reference_on_random_tracks()
    }

    #[test]
    fn transition_golden_table() {
        super::transition_golden_table()
    }
}
