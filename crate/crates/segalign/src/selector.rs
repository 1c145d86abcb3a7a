//! Action selection: the verb selector, the verb-conditioned object
//! selector, the frame-level main action recognizer (MAR), and their fused,
//! normalised segment-level action probability
//!
//! ```text
//! p(c | x, tau) = eta[ p(o | v, w, tau)^zeta * p(v | w, tau)^beta * p(c | x)^lambda ]
//! ```
//!
//! where `eta` normalises over the actions of the transcript.

use std::path::Path;

use crate::alignment::{Transcript, VideoSample};
use crate::duration::argmax;
use crate::error::{Error, Result};
use crate::features::{extract_window, FeatureMatrix, Window, WindowConfig};
use crate::io::{self, ByteReader, ByteWriter};
use crate::nn::{self, log_sum_exp, Example, Mlp, Standardizer, TrainConfig};
use crate::vocab::{ActionId, ObjectId, VerbId, Vocab};

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-10;

fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Exponents of the object, verb and MAR terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub zeta: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            zeta: 1.0,
            beta: 30.0,
            lambda: 5.0,
        }
    }
}

impl FusionConfig {
    pub fn new(zeta: f64, beta: f64, lambda: f64) -> Result<Self> {
        let all = [zeta, beta, lambda];
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config(format!(
                "fusion exponents must be finite and >= 0, got zeta={zeta} beta={beta} lambda={lambda}"
            )));
        }
        if all.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("fusion exponents cannot all be zero".into()));
        }
        Ok(FusionConfig { zeta, beta, lambda })
    }
}

/// Verbs, objects and actions that occur in a transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptMasks {
    pub verbs: Vec<bool>,
    pub objects: Vec<bool>,
    pub actions: Vec<ActionId>,
}

impl TranscriptMasks {
    pub fn new(transcript: &Transcript, vocab: &Vocab) -> Self {
        let mut verbs = vec![false; vocab.num_verbs()];
        let mut objects = vec![false; vocab.num_objects()];
        let actions = transcript.distinct();
        for &a in &actions {
            let (v, o) = vocab.decomposition(a);
            verbs[v] = true;
            objects[o] = true;
        }
        TranscriptMasks {
            verbs,
            objects,
            actions,
        }
    }
}

/// Log-probabilities of one candidate under the three selector components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentLogProbs {
    pub object: f64,
    pub verb: f64,
    pub mar: f64,
}

/// Fuses component log-probabilities and normalises over the candidates.
/// A term whose exponent is zero is skipped entirely.
pub fn fuse(components: &[ComponentLogProbs], fusion: &FusionConfig) -> Vec<f64> {
    let term = |exp: f64, lp: f64| if exp == 0.0 { 0.0 } else { exp * lp };
    let scores: Vec<f64> = components
        .iter()
        .map(|c| term(fusion.zeta, c.object) + term(fusion.beta, c.verb) + term(fusion.lambda, c.mar))
        .collect();
    let z = log_sum_exp(&scores);
    scores.into_iter().map(|s| s - z).collect()
}

/// Per-frame action log-probabilities with prefix sums, so the mean over any
/// frame range is O(1).
#[derive(Clone, Debug, PartialEq)]
pub struct MarScores {
    frames: usize,
    actions: usize,
    prefix: Vec<f64>,
}

impl MarScores {
    /// From a `T x C` probability matrix whose rows sum to one (±1e-4).
    pub fn from_probabilities(probs: &FeatureMatrix) -> Result<Self> {
        for t in 0..probs.rows() {
            let row = probs.row(t);
            let sum: f64 = row.iter().map(|&p| f64::from(p)).sum();
            if (sum - 1.0).abs() > 1e-4 || row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(Error::Input(format!(
                    "MAR row {t} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self::from_rows(probs.rows(), probs.cols(), |t, c| f64::from(probs.row(t)[c])))
    }

    fn from_rows(frames: usize, actions: usize, prob: impl Fn(usize, usize) -> f64) -> Self {
        let mut prefix = vec![0.0; (frames + 1) * actions];
        for t in 0..frames {
            for c in 0..actions {
                prefix[(t + 1) * actions + c] = prefix[t * actions + c] + floored_ln(prob(t, c));
            }
        }
        MarScores {
            frames,
            actions,
            prefix,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    fn check(&self, a: usize, b: usize, action: ActionId) -> Result<()> {
        if a >= b || b > self.frames {
            return Err(Error::Contract(format!(
                "MAR frame range [{a}, {b}) invalid for {} frames",
                self.frames
            )));
        }
        if action >= self.actions {
            return Err(Error::Contract(format!("MAR has no action {action}")));
        }
        Ok(())
    }

    /// Sum of floored per-frame log-probabilities over `[a, b)`.
    pub fn sum_log_prob(&self, a: usize, b: usize, action: ActionId) -> Result<f64> {
        self.check(a, b, action)?;
        Ok(self.prefix[b * self.actions + action] - self.prefix[a * self.actions + action])
    }

    /// Mean floored per-frame log-probability over `[a, b)`.
    pub fn mean_log_prob(&self, a: usize, b: usize, action: ActionId) -> Result<f64> {
        Ok(self.sum_log_prob(a, b, action)? / (b - a) as f64)
    }
}

/// A shallow classifier over a sampled window, optionally conditioned on a
/// one-hot input (the verb, for the object selector).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowClassifier {
    window: WindowConfig,
    feature_dim: usize,
    condition_dim: usize,
    standardizer: Standardizer,
    net: Mlp,
}

/// A labelled window for selector training.
#[derive(Clone, Debug)]
pub struct WindowLabel {
    pub window: Window,
    pub condition: Option<usize>,
    pub target: usize,
    pub mask: Vec<bool>,
}

impl WindowClassifier {
    pub fn zeros(window: WindowConfig, feature_dim: usize, condition_dim: usize, classes: usize, hidden: usize) -> Self {
        let wdim = window.gamma_count() * feature_dim;
        WindowClassifier {
            window,
            feature_dim,
            condition_dim,
            standardizer: Standardizer::identity(wdim),
            net: Mlp::zeros(wdim + condition_dim, hidden, classes),
        }
    }

    pub fn window_config(&self) -> &WindowConfig {
        &self.window
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input(&self, window: &Window, condition: Option<usize>) -> Result<Vec<f64>> {
        if window.rows() != self.window.gamma_count() || window.cols() != self.feature_dim {
            return Err(Error::Contract(format!(
                "selector expects a {}x{} window, got {}x{}",
                self.window.gamma_count(),
                self.feature_dim,
                window.rows(),
                window.cols()
            )));
        }
        let mut x = Vec::with_capacity(self.net.input_dim());
        self.standardizer.apply_into(window.as_slice(), &mut x);
        match (condition, self.condition_dim) {
            (None, 0) => {}
            (Some(c), n) if c < n => x.extend(nn::one_hot(n, c)),
            _ => return Err(Error::Contract("selector conditioning input mismatch".into())),
        }
        Ok(x)
    }

    /// Masked softmax over the classes. The mask must allow at least one class.
    pub fn forward(&self, window: &Window, condition: Option<usize>, mask: &[bool]) -> Result<Vec<f64>> {
        if mask.len() != self.classes() {
            return Err(Error::Contract("mask length differs from class count".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract("empty selector mask".into()));
        }
        self.net.forward(&self.input(window, condition)?, Some(mask))
    }

    pub fn examples(&self, data: &[WindowLabel]) -> Result<Vec<Example>> {
        data.iter()
            .map(|d| {
                Ok(Example {
                    input: self.input(&d.window, d.condition)?,
                    target: nn::one_hot(self.classes(), d.target),
                    mask: Some(d.mask.clone()),
                })
            })
            .collect()
    }

    pub fn train(
        data: &[WindowLabel],
        window: WindowConfig,
        condition_dim: usize,
        classes: usize,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::Input("no selector training windows".into()))?;
        let feature_dim = first.window.cols();
        let wdim = window.gamma_count() * feature_dim;
        let mut model = WindowClassifier {
            window,
            feature_dim,
            condition_dim,
            standardizer: Standardizer::fit(wdim, data.iter().map(|d| d.window.as_slice())),
            net: Mlp::init(wdim + condition_dim, cfg.hidden, classes, cfg.seed),
        };
        let examples = model.examples(data)?;
        nn::train(&mut model.net, &examples, cfg)?;
        Ok(model)
    }

    pub fn accuracy(&self, data: &[WindowLabel]) -> Result<f64> {
        let mut hits = 0;
        for d in data {
            if argmax(&self.forward(&d.window, d.condition, &d.mask)?) == d.target {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    fn to_bytes(&self, magic: &[u8; 4]) -> Vec<u8> {
        let mut w = ByteWriter::new(magic, 1);
        for d in [
            self.window.alpha(),
            self.window.stride(),
            self.feature_dim,
            self.condition_dim,
            self.classes(),
            self.net.hidden_dim(),
        ] {
            w.usize(d);
        }
        w.f32_block(self.standardizer.mean());
        w.f32_block(self.standardizer.std());
        w.f32_block(self.net.params());
        w.into_bytes()
    }

    fn from_bytes(bytes: &[u8], magic: &[u8; 4], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.header(magic, 1)?;
        let (alpha, stride) = (r.usize()?, r.usize()?);
        let (feature_dim, condition_dim, classes, hidden) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let bad = |e: Error| Error::format(origin, e.to_string());
        let window = WindowConfig::new(alpha, stride).map_err(bad)?;
        let wdim = window.gamma_count() * feature_dim;
        let mean = r.f32_block_f64(wdim)?;
        let std = r.f32_block_f64(wdim)?;
        let params = r.f32_block_f64(Mlp::param_count(wdim + condition_dim, hidden, classes))?;
        r.finish()?;
        Ok(WindowClassifier {
            window,
            feature_dim,
            condition_dim,
            standardizer: Standardizer::from_parts(mean, std).map_err(bad)?,
            net: Mlp::from_params(wdim + condition_dim, hidden, classes, params).map_err(bad)?,
        })
    }
}

/// Per-frame linear softmax over actions.
#[derive(Clone, Debug, PartialEq)]
pub struct MarClassifier {
    standardizer: Standardizer,
    net: Mlp,
}

const MAR_MAGIC: [u8; 4] = *b"MARL";

impl MarClassifier {
    pub fn train(samples: &[VideoSample], vocab: &Vocab, cfg: &TrainConfig) -> Result<Self> {
        let mut rows: Vec<(Vec<f64>, ActionId)> = Vec::new();
        for s in samples {
            let reference = s
                .reference()
                .ok_or_else(|| Error::Input(format!("video {} has no reference alignment", s.id)))?;
            for (t, a) in reference.frame_labels().into_iter().enumerate() {
                rows.push((s.features().row(t).iter().map(|&x| f64::from(x)).collect(), a));
            }
        }
        let dim = rows
            .first()
            .map(|r| r.0.len())
            .ok_or_else(|| Error::Input("no MAR training frames".into()))?;
        let standardizer = Standardizer::fit(dim, rows.iter().map(|r| r.0.as_slice()));
        let examples: Vec<Example> = rows
            .iter()
            .map(|(x, a)| {
                let mut input = Vec::with_capacity(dim);
                standardizer.apply_into(x, &mut input);
                Example {
                    input,
                    target: nn::one_hot(vocab.num_actions(), *a),
                    mask: None,
                }
            })
            .collect();
        let mut net = Mlp::init(dim, 0, vocab.num_actions(), cfg.seed);
        nn::train(&mut net, &examples, cfg)?;
        Ok(MarClassifier { standardizer, net })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    /// Scores every frame of `features`.
    pub fn scores(&self, features: &FeatureMatrix) -> Result<MarScores> {
        let c = self.net.output_dim();
        let mut probs = Vec::with_capacity(features.rows() * c);
        let mut x = Vec::with_capacity(features.cols());
        for t in 0..features.rows() {
            let row: Vec<f64> = features.row(t).iter().map(|&v| f64::from(v)).collect();
            x.clear();
            self.standardizer.apply_into(&row, &mut x);
            probs.extend(self.net.forward(&x, None)?);
        }
        Ok(MarScores::from_rows(features.rows(), c, |t, k| probs[t * c + k]))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(&MAR_MAGIC, 1);
        w.usize(self.net.input_dim());
        w.usize(self.net.output_dim());
        w.f32_block(self.standardizer.mean());
        w.f32_block(self.standardizer.std());
        w.f32_block(self.net.params());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.header(&MAR_MAGIC, 1)?;
        let (dim, classes) = (r.usize()?, r.usize()?);
        let mean = r.f32_block_f64(dim)?;
        let std = r.f32_block_f64(dim)?;
        let params = r.f32_block_f64(Mlp::param_count(dim, 0, classes))?;
        r.finish()?;
        let bad = |e: Error| Error::format(origin, e.to_string());
        Ok(MarClassifier {
            standardizer: Standardizer::from_parts(mean, std).map_err(bad)?,
            net: Mlp::from_params(dim, 0, classes, params).map_err(bad)?,
        })
    }
}

/// Training settings for the three selector components.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorHyper {
    pub vsnet: TrainConfig,
    pub osnet: TrainConfig,
    pub mar: TrainConfig,
    /// Besides each run start, windows are also sampled every this many
    /// frames inside a run. Zero samples run starts only.
    pub interior_stride: usize,
}

impl Default for SelectorHyper {
    fn default() -> Self {
        let net = TrainConfig::default();
        SelectorHyper {
            vsnet: net.clone(),
            osnet: TrainConfig {
                seed: net.seed + 1,
                ..net.clone()
            },
            mar: TrainConfig {
                hidden: 0,
                seed: net.seed + 2,
                ..net
            },
            interior_stride: 15,
        }
    }
}

/// The trained selector components.
#[derive(Clone, Debug, PartialEq)]
pub struct Selector {
    pub vsnet: WindowClassifier,
    pub osnet: WindowClassifier,
    /// Absent when MAR scores are supplied externally per video.
    pub mar: Option<MarClassifier>,
}

const VSEL_MAGIC: [u8; 4] = *b"VSEL";
const OSEL_MAGIC: [u8; 4] = *b"OSEL";

/// Everything the selector needs about one video, precomputed.
#[derive(Clone, Debug)]
pub struct VideoContext<'a> {
    pub features: &'a FeatureMatrix,
    pub transcript: &'a Transcript,
    pub masks: TranscriptMasks,
    pub mar: MarScores,
}

impl<'a> VideoContext<'a> {
    pub fn new(video: &'a VideoSample, vocab: &Vocab, mar: MarScores) -> Result<Self> {
        if mar.frames() != video.num_frames() || mar.num_actions() != vocab.num_actions() {
            return Err(Error::Input(format!(
                "video {}: MAR scores are {}x{}, expected {}x{}",
                video.id,
                mar.frames(),
                mar.num_actions(),
                video.num_frames(),
                vocab.num_actions()
            )));
        }
        Ok(VideoContext {
            features: video.features(),
            transcript: video.transcript(),
            masks: TranscriptMasks::new(video.transcript(), vocab),
            mar,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }
}

/// Positions at which windows are sampled inside a merged run.
pub(crate) fn run_positions(start: usize, len: usize, stride: usize) -> impl Iterator<Item = usize> {
    let step = if stride == 0 { len.max(1) } else { stride };
    (start..start + len).step_by(step)
}

impl Selector {
    /// A selector with zero weights: uniform over masked-in verbs/objects.
    pub fn uniform(vocab: &Vocab, window: WindowConfig, feature_dim: usize) -> Self {
        Selector {
            vsnet: WindowClassifier::zeros(window, feature_dim, 0, vocab.num_verbs(), 0),
            osnet: WindowClassifier::zeros(window, feature_dim, vocab.num_verbs(), vocab.num_objects(), 0),
            mar: None,
        }
    }

    pub fn window_config(&self) -> &WindowConfig {
        self.vsnet.window_config()
    }

    /// Builds the per-video context using the trained MAR classifier.
    pub fn prepare<'a>(&self, video: &'a VideoSample, vocab: &Vocab) -> Result<VideoContext<'a>> {
        let mar = self
            .mar
            .as_ref()
            .ok_or_else(|| Error::Config("selector has no MAR classifier; supply MAR scores".into()))?
            .scores(video.features())?;
        VideoContext::new(video, vocab, mar)
    }

    /// Verb distribution for the window, restricted to the transcript's verbs.
    pub fn vsnet_prob(&self, window: &Window, masks: &TranscriptMasks) -> Result<Vec<f64>> {
        self.vsnet.forward(window, None, &masks.verbs)
    }

    /// Object distribution given the verb, restricted to the transcript's objects.
    pub fn osnet_prob(&self, window: &Window, verb: VerbId, masks: &TranscriptMasks) -> Result<Vec<f64>> {
        self.osnet.forward(window, Some(verb), &masks.objects)
    }

    /// Mean MAR log-probability of `action` over the window that starts at
    /// `start`, clipped to the video.
    pub fn mar_log_prob(&self, ctx: &VideoContext<'_>, start: usize, action: ActionId) -> Result<f64> {
        let end = (start + self.window_config().alpha()).min(ctx.num_frames());
        ctx.mar.mean_log_prob(start, end, action)
    }

    /// Normalised fused log-probability of every action in `candidates` for
    /// a segment starting at `start`.
    pub fn fused_action_log_probs(
        &self,
        ctx: &VideoContext<'_>,
        vocab: &Vocab,
        fusion: &FusionConfig,
        start: usize,
        candidates: &[ActionId],
    ) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::Contract("empty candidate set".into()));
        }
        let window = extract_window(ctx.features, start, self.window_config())?;
        let verb_probs = if fusion.beta > 0.0 {
            Some(self.vsnet_prob(&window, &ctx.masks)?)
        } else {
            None
        };
        let mut object_probs: Vec<(VerbId, Vec<f64>)> = Vec::new();
        let mut components = Vec::with_capacity(candidates.len());
        for &c in candidates {
            let (v, o): (VerbId, ObjectId) = vocab.decomposition(c);
            let object = if fusion.zeta > 0.0 {
                let idx = match object_probs.iter().position(|(pv, _)| *pv == v) {
                    Some(i) => i,
                    None => {
                        object_probs.push((v, self.osnet_prob(&window, v, &ctx.masks)?));
                        object_probs.len() - 1
                    }
                };
                floored_ln(object_probs[idx].1[o])
            } else {
                0.0
            };
            let verb = verb_probs.as_ref().map_or(0.0, |p| floored_ln(p[v]));
            let mar = if fusion.lambda > 0.0 {
                self.mar_log_prob(ctx, start, c)?
            } else {
                0.0
            };
            components.push(ComponentLogProbs { object, verb, mar });
        }
        Ok(fuse(&components, fusion))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_bytes(&dir.join("vsnet.bin"), &self.vsnet.to_bytes(&VSEL_MAGIC))?;
        io::write_bytes(&dir.join("osnet.bin"), &self.osnet.to_bytes(&OSEL_MAGIC))?;
        if let Some(mar) = &self.mar {
            io::write_bytes(&dir.join("mar.bin"), &mar.to_bytes())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            io::read_bytes(&p).map(|b| (b, p))
        };
        let (b, p) = read("vsnet.bin")?;
        let vsnet = WindowClassifier::from_bytes(&b, &VSEL_MAGIC, &p)?;
        let (b, p) = read("osnet.bin")?;
        let osnet = WindowClassifier::from_bytes(&b, &OSEL_MAGIC, &p)?;
        let mar_path = dir.join("mar.bin");
        let mar = if mar_path.exists() {
            Some(MarClassifier::from_bytes(&io::read_bytes(&mar_path)?, &mar_path)?)
        } else {
            None
        };
        Ok(Selector { vsnet, osnet, mar })
    }
}

/// Labelled windows for the verb and object selectors, sampled at every run
/// start of the reference and every `interior_stride` frames inside runs.
pub fn selector_windows(
    samples: &[VideoSample],
    vocab: &Vocab,
    window: &WindowConfig,
    interior_stride: usize,
) -> Result<(Vec<WindowLabel>, Vec<WindowLabel>)> {
    let mut verbs = Vec::new();
    let mut objects = Vec::new();
    for s in samples {
        let reference = s
            .reference()
            .ok_or_else(|| Error::Input(format!("video {} has no reference alignment", s.id)))?;
        let masks = TranscriptMasks::new(s.transcript(), vocab);
        for seg in reference.merged().segments() {
            let (v, o) = vocab.decomposition(seg.action);
            for p in run_positions(seg.start, seg.len, interior_stride) {
                let w = extract_window(s.features(), p, window)?;
                verbs.push(WindowLabel {
                    window: w.clone(),
                    condition: None,
                    target: v,
                    mask: masks.verbs.clone(),
                });
                objects.push(WindowLabel {
                    window: w,
                    condition: Some(v),
                    target: o,
                    mask: masks.objects.clone(),
                });
            }
        }
    }
    Ok((verbs, objects))
}

/// Trains the verb selector, object selector and MAR on reference
/// alignments.
pub fn train_selectors(
    samples: &[VideoSample],
    vocab: &Vocab,
    window: WindowConfig,
    hyper: &SelectorHyper,
) -> Result<Selector> {
    let (verb_data, object_data) = selector_windows(samples, vocab, &window, hyper.interior_stride)?;
    let vsnet = WindowClassifier::train(&verb_data, window, 0, vocab.num_verbs(), &hyper.vsnet)?;
    let osnet = WindowClassifier::train(&object_data, window, vocab.num_verbs(), vocab.num_objects(), &hyper.osnet)?;
    let mar = MarClassifier::train(samples, vocab, &hyper.mar)?;
    Ok(Selector {
        vsnet,
        osnet,
        mar: Some(mar),
    })
}
