//! Seeded synthetic videos with known segmentations.
//!
//! Each frame's feature vector is a unit embedding of its action (the sum of
//! a verb and an object embedding, normalised) in the first `F - 1`
//! coordinates, the instance's pace in the last one, plus Gaussian noise on
//! every coordinate. An action instance lasts
//! `max(1, round(base_v * pace * eps))` frames, with the pace drawn from a
//! mixture and `eps` log-normal.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};

use crate::alignment::{Alignment, Transcript, VideoSample};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::vocab::Vocab;

/// Generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// `(action, verb, object)` names.
    pub actions: Vec<(String, String, String)>,
    pub background: Option<String>,
    /// Base duration in frames of each verb, by name.
    pub verb_durations: Vec<(String, f64)>,
    pub paces: Vec<f64>,
    pub pace_weights: Vec<f64>,
    /// Log-scale standard deviation of the duration jitter `eps`.
    pub duration_sigma: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub embedding_seed: u64,
    pub seed: u64,
    pub train_videos: usize,
    pub test_videos: usize,
    /// Allowed action sequences, by action name.
    pub grammar: Vec<Vec<String>>,
    /// Training references are the true boundaries moved by up to this many
    /// frames, standing in for a weak aligner's output.
    pub boundary_jitter: usize,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        let actions = [
            ("take_cup", "take", "cup"),
            ("take_bowl", "take", "bowl"),
            ("take_knife", "take", "knife"),
            ("pour_milk", "pour", "milk"),
            ("pour_coffee", "pour", "coffee"),
            ("stir_milk", "stir", "milk"),
            ("stir_coffee", "stir", "coffee"),
            ("cut_bread", "cut", "bread"),
            ("put_bread", "put", "bread"),
            ("put_cup", "put", "cup"),
        ];
        SynthConfig {
            actions: actions
                .iter()
                .map(|(a, v, o)| (a.to_string(), v.to_string(), o.to_string()))
                .collect(),
            background: None,
            verb_durations: [("take", 12.0), ("pour", 30.0), ("stir", 24.0), ("cut", 40.0), ("put", 16.0)]
                .iter()
                .map(|(v, d)| (v.to_string(), *d))
                .collect(),
            paces: vec![0.7, 1.5],
            pace_weights: vec![0.5, 0.5],
            duration_sigma: 0.4,
            feature_dim: 16,
            feature_noise: 0.5,
            embedding_seed: 7,
            seed: 0,
            train_videos: 20,
            test_videos: 10,
            grammar: vec![
                strings(&["take_cup", "pour_coffee", "pour_milk", "stir_coffee", "put_cup"]),
                strings(&["take_bowl", "pour_milk", "stir_milk"]),
                strings(&["take_knife", "cut_bread", "put_bread"]),
                strings(&["take_cup", "pour_milk", "stir_milk", "take_knife", "cut_bread"]),
                strings(&["take_bowl", "take_cup", "pour_coffee", "stir_coffee"]),
            ],
            boundary_jitter: 2,
        }
    }
}

/// A generated corpus. Training samples carry jittered references; test
/// samples carry the true segmentation.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub vocab: Vocab,
    pub train: Vec<VideoSample>,
    pub train_truth: Vec<Alignment>,
    pub test: Vec<VideoSample>,
}

impl SynthConfig {
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(&self.actions, self.background.as_deref())
    }

    /// Checks the settings and resolves names.
    fn resolve(&self, vocab: &Vocab) -> Result<(Vec<f64>, Vec<Vec<usize>>)> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.grammar.is_empty() {
            return cfg("the transcript grammar is empty".into());
        }
        if self.feature_dim < 2 {
            return cfg("feature_dim must be at least 2".into());
        }
        if !(self.feature_noise.is_finite() && self.feature_noise >= 0.0) {
            return cfg(format!("feature noise {} must be >= 0", self.feature_noise));
        }
        if !(self.duration_sigma.is_finite() && self.duration_sigma >= 0.0) {
            return cfg(format!("duration sigma {} must be >= 0", self.duration_sigma));
        }
        if self.paces.is_empty() || self.paces.len() != self.pace_weights.len() {
            return cfg("need one weight per pace value".into());
        }
        if self.paces.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return cfg("pace values must be positive".into());
        }
        let mut base = vec![f64::NAN; vocab.num_verbs()];
        for (verb, d) in &self.verb_durations {
            let v = (0..vocab.num_verbs())
                .find(|&v| vocab.verb_name(v) == verb)
                .ok_or_else(|| Error::Config(format!("duration given for unknown verb '{verb}'")))?;
            if !(d.is_finite() && *d >= 2.0) {
                return cfg(format!("base duration of '{verb}' must be >= 2 frames"));
            }
            base[v] = *d;
        }
        if let Some(v) = base.iter().position(|d| d.is_nan()) {
            return cfg(format!("no base duration for verb '{}'", vocab.verb_name(v)));
        }
        let mut grammar = Vec::with_capacity(self.grammar.len());
        for seq in &self.grammar {
            if seq.is_empty() {
                return cfg("empty sequence in the transcript grammar".into());
            }
            let ids = seq
                .iter()
                .map(|name| {
                    vocab
                        .action_index(name)
                        .ok_or_else(|| Error::Config(format!("grammar names unknown action '{name}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            grammar.push(ids);
        }
        Ok((base, grammar))
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

/// Moves every internal boundary by up to `jitter` frames, keeping each
/// segment at least one frame long.
pub fn jitter_boundaries(truth: &Alignment, jitter: usize, rng: &mut impl Rng) -> Result<Alignment> {
    let segs = truth.segments();
    let mut bounds: Vec<usize> = segs.iter().map(|s| s.start).chain([truth.total_frames()]).collect();
    for k in 1..bounds.len() - 1 {
        let shift = rng.random_range(0..=2 * jitter) as isize - jitter as isize;
        let lo = bounds[k - 1] as isize + 1;
        let hi = bounds[k + 1] as isize - 1;
        bounds[k] = (bounds[k] as isize + shift).clamp(lo, hi) as usize;
    }
    let parts: Vec<_> = segs
        .iter()
        .zip(bounds.windows(2))
        .map(|(s, w)| (s.action, w[1] - w[0]))
        .collect();
    Alignment::from_lengths(&parts)
}

/// Generates the corpus described by `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    let vocab = cfg.vocab()?;
    let (base, grammar) = cfg.resolve(&vocab)?;
    let f = cfg.feature_dim;

    let mut emb_rng = ChaCha8Rng::seed_from_u64(cfg.embedding_seed);
    let unit = normal(1.0);
    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..f - 1).map(|_| unit.sample(&mut emb_rng)).collect())
            .collect()
    };
    let verb_emb = draw(vocab.num_verbs());
    let object_emb = draw(vocab.num_objects());
    let embeddings: Vec<Vec<f64>> = (0..vocab.num_actions())
        .map(|a| {
            let (v, o) = vocab.decomposition(a);
            let sum: Vec<f64> = verb_emb[v].iter().zip(&object_emb[o]).map(|(x, y)| x + y).collect();
            let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            sum.into_iter().map(|x| x / norm).collect()
        })
        .collect();

    let pace = WeightedIndex::new(&cfg.pace_weights).map_err(|e| Error::Config(format!("pace weights: {e}")))?;
    let eps = LogNormal::new(0.0, cfg.duration_sigma).map_err(|e| Error::Config(format!("duration sigma: {e}")))?;
    let noise = normal(cfg.feature_noise);

    let video = |rng: &mut ChaCha8Rng, id: String| -> Result<(VideoSample, Alignment)> {
        let seq = grammar.choose(rng).expect("grammar is not empty");
        let mut parts: Vec<(usize, usize)> = Vec::new();
        let mut paces: Vec<f64> = Vec::new();
        for &a in seq {
            let rho = cfg.paces[pace.sample(rng)];
            let e = if cfg.duration_sigma == 0.0 { 1.0 } else { eps.sample(rng) };
            let len = ((base[vocab.verb_of(a)] * rho * e).round() as usize).max(1);
            parts.push((a, len));
            paces.push(rho);
        }
        let mut data = Vec::new();
        for (&(a, len), &rho) in parts.iter().zip(&paces) {
            for _ in 0..len {
                for &x in &embeddings[a] {
                    data.push((x + noise.sample(rng)) as f32);
                }
                data.push((rho + noise.sample(rng)) as f32);
            }
        }
        let truth = Alignment::from_lengths(&parts)?;
        let features = FeatureMatrix::new(truth.total_frames(), f, data)?;
        let transcript = Transcript::new(truth.transcript_actions())?;
        let sample = VideoSample::new(id, features, transcript, None, &vocab)?;
        Ok((sample, truth))
    };

    let mut train_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a09_e667_f3bc_c908);
    let mut train = Vec::with_capacity(cfg.train_videos);
    let mut train_truth = Vec::with_capacity(cfg.train_videos);
    for i in 0..cfg.train_videos {
        let (sample, truth) = video(&mut train_rng, format!("train-{i:04}"))?;
        let pseudo = jitter_boundaries(&truth, cfg.boundary_jitter, &mut jitter_rng)?;
        train.push(sample.with_reference(Some(pseudo))?);
        train_truth.push(truth);
    }
    let mut test_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xbb67_ae85_84ca_a73b);
    let mut test = Vec::with_capacity(cfg.test_videos);
    for i in 0..cfg.test_videos {
        let (sample, truth) = video(&mut test_rng, format!("test-{i:04}"))?;
        test.push(sample.with_reference(Some(truth))?);
    }
    Ok(SynthData {
        vocab,
        train,
        train_truth,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_generator_hits_base_durations() {
        let cfg = SynthConfig {
            paces: vec![1.0],
            pace_weights: vec![1.0],
            duration_sigma: 0.0,
            feature_noise: 0.0,
            train_videos: 0,
            test_videos: 8,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for s in &data.test {
            for seg in s.reference().unwrap().segments() {
                let verb = data.vocab.verb_name(data.vocab.verb_of(seg.action));
                let base = cfg.verb_durations.iter().find(|(v, _)| v == verb).unwrap().1;
                assert_eq!(seg.len as f64, base);
            }
        }
    }

    #[test]
    fn empty_grammar_is_rejected() {
        let cfg = SynthConfig {
            grammar: vec![],
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn jitter_keeps_alignment_valid() {
        let truth = Alignment::from_lengths(&[(0, 1), (1, 2), (2, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let j = jitter_boundaries(&truth, 3, &mut rng).unwrap();
            assert_eq!(j.transcript_actions(), vec![0, 1, 2]);
            assert_eq!(j.total_frames(), 4);
        }
    }
}
