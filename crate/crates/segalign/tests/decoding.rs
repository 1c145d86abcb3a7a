mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_features, random_instance, toy_vocab};
use segalign::align::{
    brute_force_align, frame_viterbi_align, score_alignment, segment_beam_search, viterbi_score, BeamConfig,
    BruteLimits, Models,
};
use segalign::duration::{make_binning, DurationModel, PoissonDuration};
use segalign::features::{FeatureMatrix, WindowConfig};
use segalign::metrics::frame_accuracy;
use segalign::selector::{FusionConfig, MarScores, Selector, VideoContext};
use segalign::{Alignment, Segment, Transcript, VideoSample, Vocab};

fn mar_from(probs: &[Vec<f64>]) -> MarScores {
    let rows: Vec<Vec<f32>> = probs.iter().map(|r| r.iter().map(|&p| p as f32).collect()).collect();
    MarScores::from_probabilities(&FeatureMatrix::from_rows(&rows).unwrap()).unwrap()
}

fn video(vocab: &Vocab, frames: usize, actions: Vec<usize>, seed: u64) -> VideoSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = random_features(&mut rng, frames, 2);
    VideoSample::new(format!("v{seed}"), features, Transcript::new(actions).unwrap(), None, vocab).unwrap()
}

fn uniform_mar(frames: usize, classes: usize) -> MarScores {
    mar_from(&vec![vec![1.0 / classes as f64; classes]; frames])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn saturated_beam_matches_exhaustive_search(seed in 1000u64..1_000_000) {
        let inst = random_instance(seed);
        let ctx = inst.context();
        let beam = segment_beam_search(&ctx, inst.models(), &inst.beam).unwrap();
        let brute = brute_force_align(&ctx, inst.models(), &inst.beam, &BruteLimits::default()).unwrap();
        prop_assert_eq!(beam.fallback, brute.fallback);
        prop_assert_eq!(beam.alignment.segments(), brute.alignment.segments());
        if !beam.fallback {
            prop_assert!((beam.log_posterior - brute.log_posterior).abs() <= 1e-9);
            let rescored = score_alignment(&ctx, &brute.alignment, inst.models(), &inst.beam).unwrap();
            prop_assert!((rescored - brute.log_posterior).abs() <= 1e-12);
        }
    }

    #[test]
    fn every_beam_width_yields_a_valid_alignment(seed in 0u64..1_000_000, width in 1usize..8) {
        let inst = random_instance(seed);
        let ctx = inst.context();
        let cfg = BeamConfig::new(width, inst.beam.fusion).unwrap();
        let d = segment_beam_search(&ctx, inst.models(), &cfg).unwrap();
        prop_assert!(d.alignment.matches(inst.video.transcript()));
        prop_assert_eq!(d.alignment.total_frames(), inst.video.num_frames());
        prop_assert!(d.alignment.segments().iter().all(|s| s.len > 0));
        if !d.fallback {
            let rescored = score_alignment(&ctx, &d.alignment, inst.models(), &cfg).unwrap();
            prop_assert!((rescored - d.log_posterior).abs() <= 1e-12);
        }
        let again = segment_beam_search(&ctx, inst.models(), &cfg).unwrap();
        prop_assert_eq!(again.alignment, d.alignment);
        prop_assert_eq!(again.counters, d.counters);
    }
}

#[test]
fn one_bin_longer_than_the_video_gives_one_segment() {
    let vocab = toy_vocab();
    let v = video(&vocab, 17, vec![3], 1);
    let binning = make_binning(&[20.0; 3], 1).unwrap();
    let window = WindowConfig::new(4, 2).unwrap();
    let selector = Selector::uniform(&vocab, window, 2);
    let duration = DurationModel::Poisson(PoissonDuration::new(vec![6.0; 6]).unwrap());
    let models = Models { vocab: &vocab, binning: &binning, duration: &duration, selector: &selector };
    let ctx = VideoContext::new(&v, &vocab, uniform_mar(17, 6)).unwrap();
    let d = segment_beam_search(&ctx, models, &BeamConfig::default()).unwrap();
    assert_eq!(d.alignment.segments(), &[Segment::new(3, 0, 17)]);
    // One bin renormalises to probability 1, and one transcript action
    // leaves the fused distribution nothing else to share mass with.
    assert!(d.log_posterior.abs() < 1e-12);
}

#[test]
fn greedy_single_bin_counts_one_query_per_segment() {
    let vocab = toy_vocab();
    for (frames, step) in [(12, 3), (13, 3), (5, 7), (40, 1)] {
        let v = video(&vocab, frames, vec![0], frames as u64);
        let binning = make_binning(&[step as f64; 3], 1).unwrap();
        let selector = Selector::uniform(&vocab, WindowConfig::new(3, 1).unwrap(), 2);
        let models = Models { vocab: &vocab, binning: &binning, duration: &DurationModel::Uniform, selector: &selector };
        let ctx = VideoContext::new(&v, &vocab, uniform_mar(frames, 6)).unwrap();
        let d = segment_beam_search(&ctx, models, &BeamConfig::new(1, FusionConfig::default()).unwrap()).unwrap();
        let segments = frames.div_ceil(step);
        assert_eq!(d.alignment.segments().len(), segments);
        assert_eq!(d.counters.duration_evals, segments as u64);
        assert_eq!(d.counters.selector_evals, segments as u64);
    }
}

#[test]
fn score_is_a_sum_of_segment_terms() {
    // Uniform durations and a single transcript action: every segment adds
    // exactly -ln L and nothing else.
    let vocab = toy_vocab();
    let v = video(&vocab, 24, vec![2], 5);
    let binning = make_binning(&[6.0; 3], 3).unwrap();
    let selector = Selector::uniform(&vocab, WindowConfig::new(3, 1).unwrap(), 2);
    let models = Models { vocab: &vocab, binning: &binning, duration: &DurationModel::Uniform, selector: &selector };
    let ctx = VideoContext::new(&v, &vocab, uniform_mar(24, 6)).unwrap();
    let cfg = BeamConfig::default();
    for lens in [vec![6, 6, 6, 6], vec![2, 4, 6, 2, 4, 6], vec![6, 2, 6, 4, 6]] {
        let parts: Vec<(usize, usize)> = lens.iter().map(|&l| (2, l)).collect();
        let a = Alignment::from_lengths(&parts).unwrap();
        let s = score_alignment(&ctx, &a, models, &cfg).unwrap();
        assert!((s + lens.len() as f64 * 3f64.ln()).abs() < 1e-12, "{lens:?}: {s}");
        let mut swapped = lens.clone();
        swapped.swap(0, 2);
        let parts: Vec<(usize, usize)> = swapped.iter().map(|&l| (2, l)).collect();
        let b = Alignment::from_lengths(&parts).unwrap();
        assert!((score_alignment(&ctx, &b, models, &cfg).unwrap() - s).abs() < 1e-12);
    }
    let odd = Alignment::from_lengths(&[(2, 5), (2, 19)]).unwrap();
    assert!(score_alignment(&ctx, &odd, models, &cfg).is_err());
}

#[test]
fn exhaustive_search_finds_the_only_segmentation() {
    let vocab = toy_vocab();
    let v = video(&vocab, 3, vec![0, 2, 4], 9);
    let binning = make_binning(&[1.0; 3], 1).unwrap();
    let selector = Selector::uniform(&vocab, WindowConfig::new(2, 1).unwrap(), 2);
    let models = Models { vocab: &vocab, binning: &binning, duration: &DurationModel::Uniform, selector: &selector };
    let ctx = VideoContext::new(&v, &vocab, uniform_mar(3, 6)).unwrap();
    let cfg = BeamConfig::default();
    let d = brute_force_align(&ctx, models, &cfg, &BruteLimits::default()).unwrap();
    assert_eq!(
        d.alignment.segments(),
        &[Segment::new(0, 0, 1), Segment::new(2, 1, 1), Segment::new(4, 2, 1)]
    );
    let tight = BruteLimits { max_frames: 2, ..BruteLimits::default() };
    assert!(brute_force_align(&ctx, models, &cfg, &tight).is_err());
}

#[test]
fn unreachable_transcript_falls_back_to_a_valid_split() {
    let vocab = toy_vocab();
    let v = video(&vocab, 4, vec![0, 2, 4], 11);
    let binning = make_binning(&[6.0; 3], 3).unwrap();
    let selector = Selector::uniform(&vocab, WindowConfig::new(2, 1).unwrap(), 2);
    let models = Models { vocab: &vocab, binning: &binning, duration: &DurationModel::Uniform, selector: &selector };
    let ctx = VideoContext::new(&v, &vocab, uniform_mar(4, 6)).unwrap();
    let d = segment_beam_search(&ctx, models, &BeamConfig::default()).unwrap();
    assert!(d.fallback);
    assert!(d.alignment.matches(v.transcript()));
    assert_eq!(d.alignment.total_frames(), 4);
}

#[test]
fn more_actions_than_frames_is_an_input_error() {
    let vocab = toy_vocab();
    let transcript = Transcript::new(vec![0, 2, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let features = random_features(&mut rng, 2, 2);
    assert!(VideoSample::new("short", features, transcript.clone(), None, &vocab).is_err());
    let poisson = PoissonDuration::new(vec![3.0; 6]).unwrap();
    assert!(frame_viterbi_align(&uniform_mar(2, 6), &transcript, &poisson, None).is_err());
}

// Frame-level baseline.

fn log_pmf(k: usize, rate: f64) -> f64 {
    let ln_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    k as f64 * rate.ln() - rate - ln_fact
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 1..=total - (parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[test]
fn frame_dp_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..60 {
        let frames = rng.random_range(1..=15);
        let m = rng.random_range(1..=2usize.min(frames));
        let classes = 4;
        let probs: Vec<Vec<f64>> = (0..frames)
            .map(|_| {
                let w: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0f64).powi(2)).collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|x| x / z).collect()
            })
            .collect();
        let rates: Vec<f64> = (0..classes).map(|_| rng.random_range(1.0..10.0)).collect();
        let actions: Vec<usize> = if m == 1 { vec![1] } else { vec![0, 3] };
        let transcript = Transcript::new(actions.clone()).unwrap();
        let mar = mar_from(&probs);
        let poisson = PoissonDuration::new(rates.clone()).unwrap();

        let mut best: Option<(f64, Vec<usize>)> = None;
        for lens in compositions(frames, m) {
            let mut score = 0.0;
            let mut t = 0;
            for (&a, &l) in actions.iter().zip(&lens) {
                score += log_pmf(l, rates[a]);
                score += (t..t + l).map(|f| (probs[f][a] as f32 as f64).max(1e-10).ln()).sum::<f64>();
                t += l;
            }
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, lens));
            }
        }
        let (score, lens) = best.unwrap();
        let got = frame_viterbi_align(&mar, &transcript, &poisson, None).unwrap();
        let want: Vec<(usize, usize)> = actions.iter().copied().zip(lens).collect();
        assert!((got.score - score).abs() < 1e-6, "case {case}: {} vs {score}", got.score);
        assert_eq!(got.alignment, Alignment::from_lengths(&want).unwrap(), "case {case}");
        assert!((viterbi_score(&got.alignment, &mar, &poisson).unwrap() - got.score).abs() < 1e-9);
        assert!(got.states_touched >= frames as u64);
    }
}

#[test]
fn sharper_recognizer_never_hurts_the_frame_dp() {
    // Two actions, truth boundary at frame 12 of 20.
    let labels: Vec<usize> = (0..20).map(|t| if t < 12 { 0 } else { 1 }).collect();
    let transcript = Transcript::new(vec![0, 1]).unwrap();
    let poisson = PoissonDuration::new(vec![6.0, 14.0]).unwrap();
    let mut last = 0.0;
    for step in 0..=20 {
        let p = 0.5 + 0.49 * step as f64 / 20.0;
        let probs: Vec<Vec<f64>> = labels.iter().map(|&l| if l == 0 { vec![p, 1.0 - p] } else { vec![1.0 - p, p] }).collect();
        let got = frame_viterbi_align(&mar_from(&probs), &transcript, &poisson, None).unwrap();
        let acc = frame_accuracy(&got.alignment.frame_labels(), &labels).unwrap();
        assert!(acc >= last, "p {p}: {acc} < {last}");
        last = acc;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn confident_single_action_takes_the_whole_video() {
    let probs = vec![vec![0.0, 1.0, 0.0]; 9];
    let poisson = PoissonDuration::new(vec![2.0, 2.0, 2.0]).unwrap();
    let got = frame_viterbi_align(&mar_from(&probs), &Transcript::new(vec![1]).unwrap(), &poisson, None).unwrap();
    assert_eq!(got.alignment.segments(), &[Segment::new(1, 0, 9)]);
}
