//! Feature-conditioned duration predictor.
//!
//! Input: the standardised window `w` (flattened `gamma_count x F`), a verb
//! one-hot and an elapsed-time one-hot over the `L` bins. Output: a softmax
//! over the `L` discrete durations of that verb.

use std::path::Path;

use super::binning::DurationBinning;
use crate::error::{Error, Result};
use crate::features::{Window, WindowConfig};
use crate::io::{self, ByteReader, ByteWriter};
use crate::nn::{self, log_sum_exp, Example, Mlp, Standardizer, TrainConfig, TrainLog};
use crate::vocab::VerbId;

const MAGIC: [u8; 4] = *b"DURN";
const VERSION: u32 = 1;

/// A soft one-hot label: `exp(-(i - true_bin)^2 / (2 sigma^2))`, normalised.
/// `sigma == 0` gives the exact one-hot.
pub fn gaussian_soft_label(true_bin: usize, sigma: f64, bins: usize) -> Vec<f64> {
    assert!(true_bin < bins, "bin {true_bin} out of range for {bins} bins");
    if sigma <= 0.0 {
        return nn::one_hot(bins, true_bin);
    }
    let w: Vec<f64> = (0..bins)
        .map(|i| {
            let d = i as f64 - true_bin as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// One supervised tuple: at some frame inside an action, with `elapsed_bin`
/// already spent, the action continues for `target_bin`.
#[derive(Clone, Debug)]
pub struct DurationExample {
    pub window: Window,
    pub verb: VerbId,
    pub elapsed_bin: usize,
    pub target_bin: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DurNetHyper {
    pub train: TrainConfig,
    /// Width of the Gaussian soft label, in bins.
    pub sigma: f64,
}

impl Default for DurNetHyper {
    fn default() -> Self {
        DurNetHyper {
            train: TrainConfig::default(),
            sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DurNet {
    window: WindowConfig,
    feature_dim: usize,
    verbs: usize,
    bins: usize,
    standardizer: Standardizer,
    net: Mlp,
}

impl DurNet {
    /// A network with zero weights, whose output is uniform.
    pub fn zeros(window: WindowConfig, feature_dim: usize, verbs: usize, bins: usize, hidden: usize) -> Self {
        let wdim = window.gamma_count() * feature_dim;
        DurNet {
            window,
            feature_dim,
            verbs,
            bins,
            standardizer: Standardizer::identity(wdim),
            net: Mlp::zeros(wdim + verbs + bins, hidden, bins),
        }
    }

    pub fn from_parts(
        window: WindowConfig,
        feature_dim: usize,
        verbs: usize,
        bins: usize,
        standardizer: Standardizer,
        net: Mlp,
    ) -> Result<Self> {
        let wdim = window.gamma_count() * feature_dim;
        if standardizer.dim() != wdim || net.input_dim() != wdim + verbs + bins || net.output_dim() != bins {
            return Err(Error::Contract("duration network dimensions disagree".into()));
        }
        Ok(DurNet {
            window,
            feature_dim,
            verbs,
            bins,
            standardizer,
            net,
        })
    }

    pub fn window_config(&self) -> &WindowConfig {
        &self.window
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_verbs(&self) -> usize {
        self.verbs
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Assembles the network input for a query.
    pub fn input(&self, window: &Window, verb: VerbId, elapsed_bin: usize) -> Result<Vec<f64>> {
        if window.rows() != self.window.gamma_count() || window.cols() != self.feature_dim {
            return Err(Error::Contract(format!(
                "duration network expects a {}x{} window, got {}x{}",
                self.window.gamma_count(),
                self.feature_dim,
                window.rows(),
                window.cols()
            )));
        }
        if verb >= self.verbs || elapsed_bin >= self.bins {
            return Err(Error::Contract(format!(
                "verb {verb} / elapsed bin {elapsed_bin} outside {} verbs / {} bins",
                self.verbs, self.bins
            )));
        }
        let mut x = Vec::with_capacity(self.net.input_dim());
        self.standardizer.apply_into(window.as_slice(), &mut x);
        x.extend(nn::one_hot(self.verbs, verb));
        x.extend(nn::one_hot(self.bins, elapsed_bin));
        Ok(x)
    }

    /// Probability of each of the verb's `L` discrete durations.
    pub fn forward(&self, window: &Window, verb: VerbId, elapsed_bin: usize) -> Result<Vec<f64>> {
        self.net.forward(&self.input(window, verb, elapsed_bin)?, None)
    }

    /// Log of [`DurNet::forward`], computed directly from the logits.
    pub fn log_probs(&self, window: &Window, verb: VerbId, elapsed_bin: usize) -> Result<Vec<f64>> {
        let logits = self.net.logits(&self.input(window, verb, elapsed_bin)?)?;
        let z = log_sum_exp(&logits);
        Ok(logits.into_iter().map(|x| x - z).collect())
    }

    /// Builds soft-labelled examples under the current standardisation.
    pub fn examples(&self, data: &[DurationExample], sigma: f64) -> Result<Vec<Example>> {
        data.iter()
            .map(|d| {
                if d.target_bin >= self.bins {
                    return Err(Error::Contract(format!("target bin {} out of range", d.target_bin)));
                }
                Ok(Example {
                    input: self.input(&d.window, d.verb, d.elapsed_bin)?,
                    target: gaussian_soft_label(d.target_bin, sigma, self.bins),
                    mask: None,
                })
            })
            .collect()
    }

    /// Fits the standardisation on the training windows and trains a fresh
    /// network by soft-label cross-entropy.
    pub fn train(
        data: &[DurationExample],
        window: WindowConfig,
        verbs: usize,
        bins: usize,
        hyper: &DurNetHyper,
    ) -> Result<(DurNet, TrainLog)> {
        let first = data
            .first()
            .ok_or_else(|| Error::Input("no duration training tuples".into()))?;
        let feature_dim = first.window.cols();
        let wdim = window.gamma_count() * feature_dim;
        let standardizer = Standardizer::fit(wdim, data.iter().map(|d| d.window.as_slice()));
        let net = Mlp::init(wdim + verbs + bins, hyper.train.hidden, bins, hyper.train.seed);
        let mut model = DurNet::from_parts(window, feature_dim, verbs, bins, standardizer, net)?;
        let examples = model.examples(data, hyper.sigma)?;
        let log = nn::train(&mut model.net, &examples, &hyper.train)?;
        Ok((model, log))
    }

    /// Fraction of tuples whose argmax prediction equals the target bin.
    pub fn accuracy(&self, data: &[DurationExample]) -> Result<f64> {
        let mut hits = 0;
        for d in data {
            let p = self.forward(&d.window, d.verb, d.elapsed_bin)?;
            if argmax(&p) == d.target_bin {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(&MAGIC, VERSION);
        for d in [
            self.window.alpha(),
            self.window.stride(),
            self.feature_dim,
            self.verbs,
            self.bins,
            self.net.hidden_dim(),
        ] {
            w.usize(d);
        }
        w.f32_block(self.standardizer.mean());
        w.f32_block(self.standardizer.std());
        w.f32_block(self.net.params());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.header(&MAGIC, VERSION)?;
        let (alpha, stride) = (r.usize()?, r.usize()?);
        let (feature_dim, verbs, bins, hidden) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let bad = |e: Error| Error::format(origin, e.to_string());
        let window = WindowConfig::new(alpha, stride).map_err(bad)?;
        let wdim = window.gamma_count() * feature_dim;
        let mean = r.f32_block_f64(wdim)?;
        let std = r.f32_block_f64(wdim)?;
        let params = r.f32_block_f64(Mlp::param_count(wdim + verbs + bins, hidden, bins))?;
        r.finish()?;
        let standardizer = Standardizer::from_parts(mean, std).map_err(bad)?;
        let net = Mlp::from_params(wdim + verbs + bins, hidden, bins, params).map_err(bad)?;
        Self::from_parts(window, feature_dim, verbs, bins, standardizer, net).map_err(bad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read_bytes(path)?, path)
    }

    /// Checks that this network fits `binning`.
    pub fn check_binning(&self, binning: &DurationBinning) -> Result<()> {
        if binning.bins() != self.bins || binning.num_verbs() != self.verbs {
            return Err(Error::Contract(format!(
                "duration network has {} verbs x {} bins, binning has {} x {}",
                self.verbs,
                self.bins,
                binning.num_verbs(),
                binning.bins()
            )));
        }
        Ok(())
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_window, FeatureMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window_of(values: &[f32], cfg: &WindowConfig) -> Window {
        let m = FeatureMatrix::new(values.len(), 1, values.to_vec()).unwrap();
        extract_window(&m, 0, cfg).unwrap()
    }

    #[test]
    fn soft_label_cases() {
        assert_eq!(gaussian_soft_label(2, 0.0, 5), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        // exp(-k^2/2) for k = -2..2, normalised.
        let expected = [0.054_488_684_549_642_94, 0.244_201_342_003_233_3, 0.402_619_946_894_247_4];
        let got = gaussian_soft_label(2, 1.0, 5);
        for (i, e) in [expected[0], expected[1], expected[2], expected[1], expected[0]].iter().enumerate() {
            assert!((got[i] - e).abs() < 1e-12);
        }
        let asym = gaussian_soft_label(1, 0.7, 6);
        assert!((asym[0] - asym[2]).abs() < 1e-15);
        assert!((asym.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_label_sharpens_as_sigma_shrinks() {
        let peak = |s: f64| gaussian_soft_label(3, s, 7)[3];
        assert_eq!(peak(0.0), 1.0);
        assert!(peak(0.0) > peak(1.0) && peak(1.0) > peak(100.0));
        let flat = gaussian_soft_label(3, 100.0, 7);
        for p in flat {
            assert!((p - 1.0 / 7.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let cfg = WindowConfig::new(4, 2).unwrap();
        let net = DurNet::zeros(cfg, 1, 3, 5, 8);
        let p = net.forward(&window_of(&[1.0, 2.0, 3.0, 4.0], &cfg), 1, 2).unwrap();
        for x in p {
            assert!((x - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let cfg = WindowConfig::new(4, 2).unwrap();
        let net = DurNet::zeros(cfg, 2, 3, 5, 8);
        let w = window_of(&[1.0, 2.0, 3.0, 4.0], &cfg);
        assert!(matches!(net.forward(&w, 0, 0), Err(Error::Contract(_))));
        let net = DurNet::zeros(cfg, 1, 3, 5, 8);
        assert!(matches!(net.forward(&w, 3, 0), Err(Error::Contract(_))));
        assert!(matches!(net.forward(&w, 0, 5), Err(Error::Contract(_))));
    }

    fn verb_determined_dataset(seed: u64) -> Vec<DurationExample> {
        let cfg = WindowConfig::new(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..300)
            .map(|k| {
                let values: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let verb = k % 3;
                DurationExample {
                    window: window_of(&values, &cfg),
                    verb,
                    elapsed_bin: rng.random_range(0..5),
                    target_bin: [0, 2, 4][verb],
                }
            })
            .collect()
    }

    #[test]
    fn learns_verb_determined_durations() {
        let data = verb_determined_dataset(1);
        let hyper = DurNetHyper {
            train: TrainConfig {
                hidden: 16,
                learning_rate: 1e-2,
                batch_size: 32,
                epochs: 30,
                l2: 1e-4,
                seed: 3,
            },
            sigma: 1.0,
        };
        let (net, log) = DurNet::train(&data, WindowConfig::new(4, 2).unwrap(), 3, 5, &hyper).unwrap();
        assert!(net.accuracy(&data).unwrap() >= 0.95);
        assert!(log.epoch_losses.last().unwrap() <= &log.epoch_losses[0]);
    }

    #[test]
    fn training_is_reproducible_and_lr_zero_is_identity() {
        let data = verb_determined_dataset(2);
        let cfg = WindowConfig::new(4, 2).unwrap();
        let mut hyper = DurNetHyper::default();
        hyper.train.hidden = 8;
        hyper.train.epochs = 2;
        hyper.train.learning_rate = 1e-3;
        let (a, _) = DurNet::train(&data, cfg, 3, 5, &hyper).unwrap();
        let (b, _) = DurNet::train(&data, cfg, 3, 5, &hyper).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());

        hyper.train.learning_rate = 0.0;
        let (c, _) = DurNet::train(&data, cfg, 3, 5, &hyper).unwrap();
        let init = Mlp::init(c.network().input_dim(), 8, 5, hyper.train.seed);
        assert_eq!(c.network(), &init);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let data = verb_determined_dataset(4);
        let mut hyper = DurNetHyper::default();
        hyper.train.hidden = 4;
        hyper.train.epochs = 1;
        hyper.train.learning_rate = 1e-3;
        let (net, _) = DurNet::train(&data, WindowConfig::new(4, 2).unwrap(), 3, 5, &hyper).unwrap();
        let back = DurNet::from_bytes(&net.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, net);
    }
}
