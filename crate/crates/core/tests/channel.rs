use duplex_coupling::channel::{corrupt_frame, Channel, ChannelConfig};
use duplex_coupling::rng::substream;

const VOCAB: u32 = 32;

#[test]
fn replacements_are_uniform_over_other_tokens() {
    let mut rng = substream(5, "chi-square");
    let token = 7;
    let mut counts = vec![0u64; VOCAB as usize];
    let mut altered = 0u64;
    let draws = 200_000;
    for _ in 0..draws {
        let out = corrupt_frame(token, VOCAB, 0.7, &mut rng).unwrap();
        if out != token {
            counts[out as usize] += 1;
            altered += 1;
        }
    }
    assert_eq!(counts[token as usize], 0);
    let expected = altered as f64 / f64::from(VOCAB - 1);
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != token as usize)
        .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 30 degrees of freedom, upper 0.1% point.
    assert!(chi2 < 59.703, "chi2 = {chi2}");
    let rate = altered as f64 / f64::from(draws);
    // Binomial sd at p = 0.7 over 2e5 draws is about 0.001.
    assert!((rate - 0.7).abs() < 0.005, "rate = {rate}");
}

#[test]
fn boundary_probabilities() {
    let mut rng = substream(1, "edges");
    for t in 0..VOCAB {
        assert_eq!(corrupt_frame(t, VOCAB, 0.0, &mut rng).unwrap(), t);
        assert_ne!(corrupt_frame(t, VOCAB, 1.0, &mut rng).unwrap(), t);
    }
    assert!(corrupt_frame(0, 1, 0.5, &mut rng).is_err());
    assert!(ChannelConfig::new(1.5, 0).is_err());
}

#[test]
fn directions_are_independent_and_seeded() {
    let run = |seed| {
        let mut ch = Channel::new(ChannelConfig::new(0.45, seed).unwrap(), VOCAB).unwrap();
        (0..500)
            .map(|t| ch.route_step(t % VOCAB, (t * 3) % VOCAB).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
    let mut ch = Channel::new(ChannelConfig::new(0.45, 4).unwrap(), VOCAB).unwrap();
    for t in 0..20_000u32 {
        ch.route_step(t % VOCAB, 0).unwrap();
    }
    let (ab, ba) = ch.links();
    assert!((ab.alteration_rate() - 0.45).abs() < 0.02);
    assert!((ba.alteration_rate() - 0.45).abs() < 0.02);
}
