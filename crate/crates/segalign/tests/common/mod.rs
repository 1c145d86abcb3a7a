#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use segalign::align::{score_alignment, BeamConfig, Decoded, Models};
use segalign::duration::{make_binning, DurNet, DurationBinning, DurationModel, PoissonDuration};
use segalign::features::{FeatureMatrix, WindowConfig};
use segalign::selector::{FusionConfig, MarScores, Selector, VideoContext};
use segalign::{Alignment, Transcript, VideoSample, Vocab};

/// A small random decoding problem with every model component random.
pub struct Instance {
    pub vocab: Vocab,
    pub video: VideoSample,
    pub binning: DurationBinning,
    pub duration: DurationModel,
    pub selector: Selector,
    pub mar: MarScores,
    pub beam: BeamConfig,
}

impl Instance {
    pub fn models(&self) -> Models<'_> {
        Models {
            vocab: &self.vocab,
            binning: &self.binning,
            duration: &self.duration,
            selector: &self.selector,
        }
    }

    pub fn context(&self) -> VideoContext<'_> {
        VideoContext::new(&self.video, &self.vocab, self.mar.clone()).unwrap()
    }
}

pub fn toy_vocab() -> Vocab {
    Vocab::new(
        &[
            ("take_cup", "take", "cup"),
            ("take_bowl", "take", "bowl"),
            ("pour_cup", "pour", "cup"),
            ("pour_bowl", "pour", "bowl"),
            ("stir_cup", "stir", "cup"),
            ("stir_bowl", "stir", "bowl"),
        ],
        None,
    )
    .unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> FeatureMatrix {
    let data = (0..frames * dim)
        .map(|_| StandardNormal.sample(rng))
        .map(|x: f64| x as f32)
        .collect();
    FeatureMatrix::new(frames, dim, data).unwrap()
}

/// Random per-frame distributions over `classes`.
pub fn random_mar(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> MarScores {
    let mut data = Vec::with_capacity(frames * classes);
    for _ in 0..frames {
        let w: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0f64).powi(3)).collect();
        let z: f64 = w.iter().sum();
        data.extend(w.iter().map(|x| (x / z) as f32));
    }
    MarScores::from_probabilities(&FeatureMatrix::new(frames, classes, data).unwrap()).unwrap()
}

/// Per-frame distributions giving `peak` to the true label, the rest spread
/// evenly over the other classes.
pub fn peaked_mar(labels: &[usize], classes: usize, peak: f64) -> MarScores {
    let rest = ((1.0 - peak) / (classes - 1) as f64) as f32;
    let mut data = Vec::with_capacity(labels.len() * classes);
    for &l in labels {
        for c in 0..classes {
            data.push(if c == l { 1.0 - rest * (classes - 1) as f32 } else { rest });
        }
    }
    MarScores::from_probabilities(&FeatureMatrix::new(labels.len(), classes, data).unwrap()).unwrap()
}

fn randomize(params: &mut [f64], rng: &mut ChaCha8Rng, scale: f64) {
    for p in params {
        *p = rng.random_range(-scale..scale);
    }
}

pub fn random_transcript(rng: &mut ChaCha8Rng, actions: usize, m: usize) -> Transcript {
    let mut t: Vec<usize> = Vec::with_capacity(m);
    while t.len() < m {
        let a = rng.random_range(0..actions);
        if t.last() != Some(&a) {
            t.push(a);
        }
    }
    Transcript::new(t).unwrap()
}

/// Random instance within the exhaustive decoder's limits
/// (T <= 40, M <= 3, L <= 3).
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = toy_vocab();
    let m: usize = rng.random_range(1..=3);
    let bins: usize = rng.random_range(1..=3);
    let frames = if rng.random_bool(0.7) {
        rng.random_range(m.max(25)..=40)
    } else {
        rng.random_range(m..=40)
    };
    let lo = frames.div_ceil(20).max(1);
    let gammas: Vec<f64> = (0..vocab.num_verbs())
        .map(|_| {
            let s = rng.random_range(lo..=lo + 3);
            (s * bins + rng.random_range(0..bins)) as f64
        })
        .collect();
    let binning = make_binning(&gammas, bins).unwrap();
    let dim = 2;
    let alpha = rng.random_range(1..=6);
    let window = WindowConfig::new(alpha, rng.random_range(1..=alpha)).unwrap();
    let transcript = random_transcript(&mut rng, vocab.num_actions(), m);
    let features = random_features(&mut rng, frames, dim);
    let video = VideoSample::new(format!("rand-{seed}"), features, transcript, None, &vocab).unwrap();

    let duration = match rng.random_range(0..3) {
        0 => DurationModel::Uniform,
        1 => DurationModel::Poisson(
            PoissonDuration::new((0..vocab.num_actions()).map(|_| rng.random_range(1.0..20.0)).collect()).unwrap(),
        ),
        _ => {
            let mut net = DurNet::zeros(window, dim, vocab.num_verbs(), bins, 3);
            randomize(net.network_mut().params_mut(), &mut rng, 1.5);
            DurationModel::DurNet(net)
        }
    };
    let mut selector = Selector::uniform(&vocab, window, dim);
    randomize(selector.vsnet.network_mut().params_mut(), &mut rng, 1.0);
    randomize(selector.osnet.network_mut().params_mut(), &mut rng, 1.0);
    let mar = random_mar(&mut rng, frames, vocab.num_actions());
    let mut exps = [0.0; 3];
    while exps.iter().all(|&e| e == 0.0) {
        for e in &mut exps {
            *e = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..3.0) };
        }
    }
    let fusion = FusionConfig::new(exps[0], exps[1], exps[2]).unwrap();
    Instance {
        vocab,
        video,
        binning,
        duration,
        selector,
        mar,
        beam: BeamConfig::new(1_000_000, fusion).unwrap(),
    }
}

/// Running record of decoder outputs re-scored independently.
#[derive(Default)]
pub struct Consistency {
    pub checked: usize,
    pub fallbacks: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Consistency {
    pub fn check(&mut self, label: &str, ctx: &VideoContext<'_>, decoded: &Decoded, models: Models<'_>, cfg: &BeamConfig) {
        if decoded.fallback {
            self.fallbacks += 1;
            return;
        }
        match score_alignment(ctx, &decoded.alignment, models, cfg) {
            Ok(s) => {
                let diff = (s - decoded.log_posterior).abs();
                self.checked += 1;
                self.worst = self.worst.max(diff);
                if diff.is_nan() || diff > 1e-12 {
                    self.failures.push(format!("{label}: reported {} rescored {s}", decoded.log_posterior));
                }
            }
            Err(e) => self.failures.push(format!("{label}: {e}")),
        }
    }
}

/// Repeats every frame twice.
pub fn stretch_features(f: &FeatureMatrix) -> FeatureMatrix {
    let rows: Vec<Vec<f32>> = (0..f.rows()).flat_map(|t| [f.row(t).to_vec(), f.row(t).to_vec()]).collect();
    FeatureMatrix::from_rows(&rows).unwrap()
}

pub fn stretch_alignment(a: &Alignment) -> Alignment {
    let parts: Vec<(usize, usize)> = a.segments().iter().map(|s| (s.action, 2 * s.len)).collect();
    Alignment::from_lengths(&parts).unwrap()
}
