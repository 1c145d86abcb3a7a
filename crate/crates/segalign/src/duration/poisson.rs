//! Class-conditional Poisson length model.

use std::path::Path;

use statrs::function::gamma::ln_gamma;

use super::binning::DurationBinning;
use crate::alignment::VideoSample;
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};
use crate::nn::{log_sum_exp, round_f32};
use crate::vocab::{ActionId, VerbId, Vocab};

const MAGIC: [u8; 4] = *b"POIS";
const VERSION: u32 = 1;

/// Mean length per action; lengths are modelled as `Poisson(rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonDuration {
    rates: Vec<f64>,
}

/// `ln(rate^k e^-rate / k!)`.
pub fn poisson_log_pmf(k: usize, rate: f64) -> f64 {
    let k = k as f64;
    k * rate.ln() - rate - ln_gamma(k + 1.0)
}

impl PoissonDuration {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Config(format!("Poisson rate {r} must be positive")));
        }
        Ok(PoissonDuration { rates })
    }

    /// Fits one rate per action: the mean merged-run length, at least one
    /// frame. Actions never seen fall back to the mean over all runs.
    pub fn fit(samples: &[VideoSample], vocab: &Vocab) -> Result<Self> {
        let mut sums = vec![0usize; vocab.num_actions()];
        let mut counts = vec![0usize; vocab.num_actions()];
        for s in samples {
            let reference = s
                .reference()
                .ok_or_else(|| Error::Input(format!("video {} has no reference alignment", s.id)))?;
            for seg in reference.merged().segments() {
                sums[seg.action] += seg.len;
                counts[seg.action] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Config("empty corpus: no reference segments".into()));
        }
        let global = sums.iter().sum::<usize>() as f64 / total as f64;
        let rates = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                let mean = if c == 0 { global } else { s as f64 / c as f64 };
                round_f32(mean.max(1.0))
            })
            .collect();
        Self::new(rates)
    }

    pub fn rate(&self, action: ActionId) -> f64 {
        self.rates[action]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn log_prob(&self, len: usize, action: ActionId) -> f64 {
        poisson_log_pmf(len, self.rates[action])
    }

    /// Log-probabilities of the verb's discrete durations, renormalised so
    /// they form a distribution over the `L` bins.
    pub fn bin_log_probs(&self, action: ActionId, verb: VerbId, binning: &DurationBinning) -> Vec<f64> {
        let raw: Vec<f64> = binning
            .durations(verb)
            .map(|l| self.log_prob(l, action))
            .collect();
        let z = log_sum_exp(&raw);
        raw.into_iter().map(|x| x - z).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(&MAGIC, VERSION);
        w.usize(self.rates.len());
        w.f32_block(&self.rates);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.header(&MAGIC, VERSION)?;
        let n = r.usize()?;
        let rates = r.f32_block_f64(n)?;
        r.finish()?;
        Self::new(rates).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read_bytes(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::make_binning;

    // Reference values from 50-digit evaluation of ln(rate^k e^-rate / k!).
    #[test]
    fn log_pmf_matches_high_precision_values() {
        let cases = [
            (2usize, 2.0, -1.306_852_819_440_054_7),
            (1, 1.0, -1.0),
            (14, 14.0, -2.244_418_568_125_060_9),
            (7, 3.5, -3.255_820_581_597_838_3),
            (30, 12.5, -11.386_377_019_582_501),
        ];
        for (k, rate, expected) in cases {
            let got = poisson_log_pmf(k, rate);
            assert!((got - expected).abs() <= 1e-12, "k={k} rate={rate}: {got} vs {expected}");
        }
    }

    #[test]
    fn renormalised_bins_sum_to_one() {
        let binning = make_binning(&[21.0], 3).unwrap();
        let s = binning.step(0) as f64;
        let model = PoissonDuration::new(vec![2.0 * s]).unwrap();
        let lp = model.bin_log_probs(0, 0, &binning);
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalisation_preserves_ratios() {
        // Support {1, 2, 3}: p(2)/p(1) = rate/2 = 1 at rate 2.
        let binning = make_binning(&[3.0], 3).unwrap();
        assert_eq!(binning.durations(0).collect::<Vec<_>>(), vec![1, 2, 3]);
        let model = PoissonDuration::new(vec![2.0]).unwrap();
        let lp = model.bin_log_probs(0, 0, &binning);
        assert!((lp[1] - lp[0]).abs() < 1e-12);
        assert!((lp[2] - lp[1] - (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_rates() {
        assert!(PoissonDuration::new(vec![0.0]).is_err());
        assert!(PoissonDuration::new(vec![f64::NAN]).is_err());
    }
}
