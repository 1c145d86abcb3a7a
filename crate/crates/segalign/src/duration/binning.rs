//! Verb-adaptive duration bins.
//!
//! For a verb with typical length `gamma` frames and `L` bins:
//!
//! * elapsed time is discretised with bin width `b = gamma / (floor(L/2) + 1)`,
//!   which puts `gamma` at the upper edge of the middle bin;
//! * predicted durations are `l_i = (i + 1) * s` with step
//!   `s = max(1, floor(gamma / L))`.

use std::path::Path;

use crate::alignment::VideoSample;
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};
use crate::vocab::{VerbId, Vocab};

const MAGIC: [u8; 4] = *b"DBIN";
const VERSION: u32 = 1;

/// Per-verb duration discretisation.
#[derive(Clone, Debug, PartialEq)]
pub struct DurationBinning {
    bins: usize,
    gamma: Vec<f64>,
    width: Vec<f64>,
    step: Vec<usize>,
}

/// Builds the binning for typical verb lengths `gammas` and `bins` bins.
pub fn make_binning(gammas: &[f64], bins: usize) -> Result<DurationBinning> {
    if bins == 0 {
        return Err(Error::Config("need at least one duration bin".into()));
    }
    if gammas.is_empty() {
        return Err(Error::Config("need at least one verb".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 1.0)) {
        return Err(Error::Config(format!("verb length {g} must be >= 1 frame")));
    }
    let middle = (bins / 2 + 1) as f64;
    Ok(DurationBinning {
        bins,
        gamma: gammas.to_vec(),
        width: gammas.iter().map(|g| g / middle).collect(),
        step: gammas
            .iter()
            .map(|g| ((g / bins as f64).floor() as usize).max(1))
            .collect(),
    })
}

/// Which remaining-duration bin a training tuple is labelled with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RemainingTarget {
    /// The bin whose duration `l_i` is closest to the remaining frames.
    #[default]
    Step,
    /// `floor(remaining / b)`, the same grid as the elapsed-time input.
    Width,
}

impl DurationBinning {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_verbs(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self, verb: VerbId) -> f64 {
        self.gamma[verb]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    pub fn bin_width(&self, verb: VerbId) -> f64 {
        self.width[verb]
    }

    pub fn step(&self, verb: VerbId) -> usize {
        self.step[verb]
    }

    /// The `i`-th discrete duration of `verb`, in frames.
    pub fn duration(&self, verb: VerbId, bin: usize) -> usize {
        (bin + 1) * self.step[verb]
    }

    pub fn durations(&self, verb: VerbId) -> impl Iterator<Item = usize> + '_ {
        (0..self.bins).map(move |i| self.duration(verb, i))
    }

    /// `min(floor(elapsed / b), L - 1)`.
    pub fn discretize_elapsed(&self, elapsed: usize, verb: VerbId) -> usize {
        let bin = (elapsed as f64 / self.width[verb]).floor() as usize;
        bin.min(self.bins - 1)
    }

    /// Bin label for `remaining` frames left in the current action.
    pub fn remaining_bin(&self, remaining: usize, verb: VerbId, target: RemainingTarget) -> usize {
        match target {
            RemainingTarget::Width => self.discretize_elapsed(remaining, verb),
            RemainingTarget::Step => {
                let s = self.step[verb];
                ((2 * remaining + s) / (2 * s)).saturating_sub(1).min(self.bins - 1)
            }
        }
    }

    /// The bin whose duration is exactly `len`, if any.
    pub fn bin_of_length(&self, len: usize, verb: VerbId) -> Option<usize> {
        let s = self.step[verb];
        (len.is_multiple_of(s) && len >= s && len / s <= self.bins).then(|| len / s - 1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(&MAGIC, VERSION);
        w.usize(self.bins);
        w.usize(self.gamma.len());
        w.f64_block(&self.gamma);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.header(&MAGIC, VERSION)?;
        let bins = r.usize()?;
        let verbs = r.usize()?;
        let gamma = r.f64_block(verbs)?;
        r.finish()?;
        make_binning(&gamma, bins).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read_bytes(path)?, path)
    }
}

/// Which per-verb statistic sets the step size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepMode {
    #[default]
    Median,
    Mean,
    Max,
    /// Every verb uses the same step of this many frames.
    Fixed(usize),
}

impl std::fmt::Display for StepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepMode::Median => write!(f, "median"),
            StepMode::Mean => write!(f, "mean"),
            StepMode::Max => write!(f, "max"),
            StepMode::Fixed(k) => write!(f, "fixed{k}"),
        }
    }
}

impl std::str::FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(StepMode::Median),
            "mean" => Ok(StepMode::Mean),
            "max" => Ok(StepMode::Max),
            other => other
                .strip_prefix("fixed")
                .and_then(|k| k.trim_start_matches([':', '=']).parse().ok())
                .filter(|&k: &usize| k >= 1)
                .map(StepMode::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown step mode {other:?}"))),
        }
    }
}

/// Lengths of merged reference runs, grouped by verb.
pub fn verb_run_lengths(samples: &[VideoSample], vocab: &Vocab) -> Result<Vec<Vec<usize>>> {
    let mut per_verb = vec![Vec::new(); vocab.num_verbs()];
    let mut any = false;
    for s in samples {
        let reference = s
            .reference()
            .ok_or_else(|| Error::Input(format!("video {} has no reference alignment", s.id)))?;
        for seg in reference.merged().segments() {
            per_verb[vocab.verb_of(seg.action)].push(seg.len);
            any = true;
        }
    }
    if !any {
        return Err(Error::Config("empty corpus: no reference segments".into()));
    }
    Ok(per_verb)
}

/// Median with the even-count rule `floor((a + b) / 2)`.
pub fn median_floor(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn statistic(values: &[usize], mode: StepMode) -> f64 {
    match mode {
        StepMode::Median | StepMode::Fixed(_) => median_floor(values) as f64,
        StepMode::Mean => values.iter().sum::<usize>() as f64 / values.len() as f64,
        StepMode::Max => *values.iter().max().expect("non-empty") as f64,
    }
}

/// Per-verb typical length under `mode`. Verbs absent from the corpus get
/// the statistic of all runs pooled. `Fixed(k)` yields `k * bins`, which
/// makes every step exactly `k`.
pub fn fit_verb_gammas(samples: &[VideoSample], vocab: &Vocab, mode: StepMode, bins: usize) -> Result<Vec<f64>> {
    let per_verb = verb_run_lengths(samples, vocab)?;
    if let StepMode::Fixed(k) = mode {
        return Ok(vec![(k * bins) as f64; per_verb.len()]);
    }
    let pooled: Vec<usize> = per_verb.concat();
    let global = statistic(&pooled, mode);
    Ok(per_verb
        .iter()
        .map(|v| if v.is_empty() { global } else { statistic(v, mode) })
        .collect())
}

/// Median merged-run length per verb.
pub fn fit_verb_medians(samples: &[VideoSample], vocab: &Vocab) -> Result<Vec<f64>> {
    fit_verb_gammas(samples, vocab, StepMode::Median, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_100_seven_bins() {
        let b = make_binning(&[100.0], 7).unwrap();
        assert_eq!(b.bin_width(0), 25.0);
        assert_eq!(b.step(0), 14);
        assert_eq!(b.durations(0).collect::<Vec<_>>(), vec![14, 28, 42, 56, 70, 84, 98]);
    }

    #[test]
    fn short_verb_step_clamps_to_one() {
        let b = make_binning(&[5.0], 7).unwrap();
        assert_eq!(b.step(0), 1);
        assert_eq!(b.durations(0).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn gamma_8_four_bins() {
        let b = make_binning(&[8.0], 4).unwrap();
        assert!((b.bin_width(0) - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(b.step(0), 2);
        assert_eq!(b.durations(0).collect::<Vec<_>>(), vec![2, 4, 6, 8]);
        assert_eq!(b.discretize_elapsed(8, 0), 3);
    }

    #[test]
    fn discretize_elapsed_cases() {
        let b = make_binning(&[100.0], 7).unwrap();
        assert_eq!(b.discretize_elapsed(0, 0), 0);
        assert_eq!(b.discretize_elapsed(26, 0), 1);
        assert_eq!(b.discretize_elapsed(250, 0), 6);
    }

    #[test]
    fn remaining_targets() {
        let b = make_binning(&[100.0], 7).unwrap();
        // Step grid: 14, 28, ..., 98.
        assert_eq!(b.remaining_bin(14, 0, RemainingTarget::Step), 0);
        assert_eq!(b.remaining_bin(20, 0, RemainingTarget::Step), 0);
        assert_eq!(b.remaining_bin(21, 0, RemainingTarget::Step), 1);
        assert_eq!(b.remaining_bin(1, 0, RemainingTarget::Step), 0);
        assert_eq!(b.remaining_bin(500, 0, RemainingTarget::Step), 6);
        assert_eq!(b.remaining_bin(60, 0, RemainingTarget::Width), 2);
    }

    #[test]
    fn exact_bin_lookup() {
        let b = make_binning(&[100.0], 7).unwrap();
        assert_eq!(b.bin_of_length(42, 0), Some(2));
        assert_eq!(b.bin_of_length(43, 0), None);
        assert_eq!(b.bin_of_length(112, 0), None);
        assert_eq!(b.bin_of_length(0, 0), None);
    }

    #[test]
    fn medians() {
        assert_eq!(median_floor(&[30, 10, 20]), 20);
        assert_eq!(median_floor(&[10, 20]), 15);
        assert_eq!(median_floor(&[10, 21]), 15);
    }

    #[test]
    fn step_mode_parsing() {
        assert_eq!("median".parse::<StepMode>().unwrap(), StepMode::Median);
        assert_eq!("fixed:12".parse::<StepMode>().unwrap(), StepMode::Fixed(12));
        assert_eq!("fixed12".parse::<StepMode>().unwrap(), StepMode::Fixed(12));
        assert!("fixed0".parse::<StepMode>().is_err());
        assert!("mode".parse::<StepMode>().is_err());
    }

    #[test]
    fn binning_file_round_trip() {
        let b = make_binning(&[100.0, 7.5, 33.25], 5).unwrap();
        let back = DurationBinning::from_bytes(&b.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn gamma_sits_at_top_of_middle_bin() {
        for bins in 2..12 {
            for g in bins..400 {
                let b = make_binning(&[g as f64], bins).unwrap();
                let middle = (bins / 2) as f64;
                let w = b.bin_width(0);
                let gamma = g as f64;
                assert!(middle * w < gamma && gamma <= (middle + 1.0) * w + 1e-9);
            }
        }
    }
}
