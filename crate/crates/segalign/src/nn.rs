//! Shallow softmax networks with hand-written gradients.
//!
//! Every learned component shares one shape: an optional `tanh` hidden layer
//! followed by a linear layer over class logits. Parameters live in a single
//! flat vector, which keeps the optimizer and gradient checks trivial.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Smallest allowed standard deviation in [`Standardizer`].
pub const STD_FLOOR: f64 = 1e-6;

/// Numerically stable `ln(sum(exp(xs)))`. Returns `-inf` for an empty or
/// all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax restricted to the entries where `mask` is true; masked-out
/// entries get probability zero.
pub fn masked_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &x)| if allowed(i) { (x - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    masked_softmax(logits, None)
}

/// Per-dimension z-scoring fitted on training inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// The identity transform for `dim` inputs.
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Contract("standardizer mean/std length mismatch".into()));
        }
        let std = std.into_iter().map(|s| s.max(STD_FLOOR)).collect();
        Ok(Standardizer { mean, std })
    }

    /// Fits mean and standard deviation over `rows`. Values are rounded
    /// through `f32` so that saved and in-memory models agree exactly.
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for row in rows {
            n += 1;
            for (i, &x) in row.iter().enumerate() {
                sum[i] += x;
                sum_sq[i] += x * x;
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| round_f32(s / n)).collect();
        let std = sum_sq
            .iter()
            .zip(&sum)
            .map(|(sq, s)| {
                let m = s / n;
                round_f32((sq / n - m * m).max(0.0).sqrt().max(STD_FLOOR))
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Appends the standardized `x` to `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(
            x.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }
}

pub(crate) fn round_f32(x: f64) -> f64 {
    f64::from(x as f32)
}

/// `input -> [tanh(W1 x + b1)] -> W2 h + b2 -> softmax`. With `hidden == 0`
/// the network is a plain linear softmax classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

/// One training example: an input vector, a target distribution, and an
/// optional mask restricting the softmax support.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl Mlp {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        if hidden == 0 {
            output * input + output
        } else {
            hidden * input + hidden + output * hidden + output
        }
    }

    /// All-zero parameters; the output is uniform for every input.
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            input,
            hidden,
            output,
            params: vec![0.0; Self::param_count(input, hidden, output)],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero. Weights are drawn
    /// as `f32` so they survive a save/load cycle unchanged.
    pub fn init(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut net = Self::zeros(input, hidden, output);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<(usize, usize, usize)> = if hidden == 0 {
            vec![(0, output, input)]
        } else {
            vec![(0, hidden, input), (hidden * input + hidden, output, hidden)]
        };
        for (offset, rows, fan_in) in layers {
            let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
            for w in &mut net.params[offset..offset + rows * fan_in] {
                *w = f64::from(rng.random_range(-bound..=bound));
            }
        }
        net
    }

    pub fn from_params(input: usize, hidden: usize, output: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::param_count(input, hidden, output) {
            return Err(Error::Contract(format!(
                "expected {} parameters for a {input}-{hidden}-{output} network, got {}",
                Self::param_count(input, hidden, output),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Contract("non-finite network parameter".into()));
        }
        Ok(Mlp {
            input,
            hidden,
            output,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Ranges of the flat parameter vector that hold weights (not biases).
    #[allow(clippy::single_range_in_vec_init)]
    fn weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let (i, h, o) = (self.input, self.hidden, self.output);
        if h == 0 {
            vec![0..o * i]
        } else {
            let w2 = h * i + h;
            vec![0..h * i, w2..w2 + o * h]
        }
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let (i, h) = (self.input, self.hidden);
        let (w1, rest) = self.params.split_at(h * i);
        let b1 = &rest[..h];
        (0..h)
            .map(|j| {
                let row = &w1[j * i..(j + 1) * i];
                (b1[j] + dot(row, x)).tanh()
            })
            .collect()
    }

    fn output_logits(&self, features: &[f64]) -> Vec<f64> {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let (fan_in, offset) = if h == 0 { (i, 0) } else { (h, h * i + h) };
        let w2 = &self.params[offset..offset + o * fan_in];
        let b2 = &self.params[offset + o * fan_in..offset + o * fan_in + o];
        (0..o)
            .map(|k| b2[k] + dot(&w2[k * fan_in..(k + 1) * fan_in], features))
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input {
            return Err(Error::Contract(format!(
                "network expects {} inputs, got {}",
                self.input,
                x.len()
            )));
        }
        Ok(if self.hidden == 0 {
            self.output_logits(x)
        } else {
            self.output_logits(&self.hidden_activations(x))
        })
    }

    pub fn forward(&self, x: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
        Ok(masked_softmax(&self.logits(x)?, mask))
    }

    /// Cross-entropy of one example, accumulating its gradient into `grad`.
    fn example_loss_grad(&self, ex: &Example, grad: &mut [f64], scale: f64) -> f64 {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let hidden = if h == 0 { Vec::new() } else { self.hidden_activations(&ex.input) };
        let features: &[f64] = if h == 0 { &ex.input } else { &hidden };
        let logits = self.output_logits(features);
        let probs = masked_softmax(&logits, ex.mask.as_deref());
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; o];
        for k in 0..o {
            if ex.target[k] > 0.0 {
                loss -= ex.target[k] * probs[k].ln();
            }
            // Masked-out logits do not reach the loss.
            if ex.mask.as_ref().is_none_or(|m| m[k]) {
                dlogits[k] = probs[k] - ex.target[k];
            }
        }

        let (fan_in, offset) = if h == 0 { (i, 0) } else { (h, h * i + h) };
        for k in 0..o {
            let d = dlogits[k] * scale;
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[offset + k * fan_in..offset + (k + 1) * fan_in];
            for (g, &f) in row.iter_mut().zip(features) {
                *g += d * f;
            }
            grad[offset + o * fan_in + k] += d;
        }

        if h > 0 {
            let w2 = &self.params[offset..offset + o * h];
            for j in 0..h {
                let mut dh = 0.0;
                for k in 0..o {
                    dh += w2[k * h + j] * dlogits[k];
                }
                let dz = dh * (1.0 - hidden[j] * hidden[j]) * scale;
                if dz == 0.0 {
                    continue;
                }
                let row = &mut grad[j * i..(j + 1) * i];
                for (g, &x) in row.iter_mut().zip(&ex.input) {
                    *g += dz * x;
                }
                grad[h * i + j] += dz;
            }
        }
        loss
    }

    /// Mean cross-entropy over `batch` plus `l2/2 * |W|^2`, and its gradient.
    pub fn loss_and_grad(&self, batch: &[&Example], l2: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut loss = 0.0;
        for ex in batch {
            loss += self.example_loss_grad(ex, &mut grad, scale);
        }
        loss *= scale;
        if l2 > 0.0 {
            for r in self.weight_ranges() {
                for idx in r {
                    let w = self.params[idx];
                    loss += 0.5 * l2 * w * w;
                    grad[idx] += l2 * w;
                }
            }
        }
        (loss, grad)
    }

    /// Loss only, over all examples.
    pub fn loss(&self, examples: &[Example], l2: f64) -> f64 {
        let refs: Vec<&Example> = examples.iter().collect();
        self.loss_and_grad(&refs, l2).0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mini-batch optimisation settings shared by every trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Adam at 1e-5, batch 64, 64 hidden units, L2 1e-4.
    fn default() -> Self {
        TrainConfig {
            hidden: 64,
            learning_rate: 1e-5,
            batch_size: 64,
            epochs: 40,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Loss curve of a training run: entry 0 is the loss before the first
/// update, entry `e` the loss after epoch `e`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains `net` in place with Adam over shuffled mini-batches.
///
/// The run is a pure function of `cfg.seed`, the initial parameters and the
/// example order. Parameters are rounded through `f32` at the end.
pub fn train(net: &mut Mlp, examples: &[Example], cfg: &TrainConfig) -> Result<TrainLog> {
    if examples.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    for ex in examples {
        if ex.input.len() != net.input || ex.target.len() != net.output {
            return Err(Error::Contract("training example shape does not match network".into()));
        }
    }
    let batch_size = cfg.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut adam = Adam::new(net.params.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainLog {
        epoch_losses: vec![net.loss(examples, cfg.l2)],
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&k| &examples[k]).collect();
            let (loss, grad) = net.loss_and_grad(&batch, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            if cfg.learning_rate != 0.0 {
                adam.update(&mut net.params, &grad, cfg.learning_rate);
            }
        }
        log.epoch_losses.push(net.loss(examples, cfg.l2));
    }
    for p in &mut net.params {
        *p = round_f32(*p);
    }
    Ok(log)
}

/// One-hot vector of length `n`.
pub fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Draws `count` distinct coordinates from `0..n` (or all of them).
pub fn sample_coordinates(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(count);
    idx
}

/// Central finite-difference check of [`Mlp::loss_and_grad`] at the given
/// coordinates. Returns the worst relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub fn gradient_check(net: &Mlp, examples: &[Example], l2: f64, coords: &[usize], h: f64, floor: f64) -> f64 {
    let refs: Vec<&Example> = examples.iter().collect();
    let (_, grad) = net.loss_and_grad(&refs, l2);
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for &c in coords {
        let orig = probe.params[c];
        probe.params[c] = orig + h;
        let up = probe.loss(examples, l2);
        probe.params[c] = orig - h;
        let down = probe.loss(examples, l2);
        probe.params[c] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[c].abs().max(numeric.abs()).max(floor);
        worst = worst.max((grad[c] - numeric).abs() / denom);
    }
    worst
}

/// Random examples with soft targets, for gradient checks.
pub fn random_examples(input: usize, output: usize, count: usize, masked: bool, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let input_v: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mask: Option<Vec<bool>> = masked.then(|| {
                let mut m: Vec<bool> = (0..output).map(|_| rng.random_bool(0.6)).collect();
                let keep = rng.random_range(0..output);
                m[keep] = true;
                m
            });
            let mut target: Vec<f64> = (0..output)
                .map(|k| {
                    if mask.as_ref().is_none_or(|m| m[k]) {
                        rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let z: f64 = target.iter().sum();
            target.iter_mut().for_each(|t| *t /= z);
            Example {
                input: input_v,
                target,
                mask,
            }
        })
        .collect()
}
