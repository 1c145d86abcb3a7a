//! Decoders that turn a video and its transcript into an [`Alignment`]:
//! the segment-level beam search, an exhaustive oracle for small inputs, and
//! a frame-level dynamic-programming baseline.

mod beam;
mod brute;
mod score;
mod viterbi;

pub use beam::segment_beam_search;
pub use brute::{brute_force_align, BruteLimits};
pub use score::score_alignment;
pub use viterbi::{frame_viterbi_align, viterbi_score, ViterbiResult};

use std::cmp::Ordering;

use crate::alignment::{Alignment, Segment, Transcript};
use crate::duration::{DurationBinning, DurationModel};
use crate::error::{Error, Result};
use crate::selector::{FusionConfig, Selector};
use crate::vocab::{ActionId, Vocab};

/// Decoder settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub fusion: FusionConfig,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 150,
            fusion: FusionConfig::default(),
        }
    }
}

impl BeamConfig {
    pub fn new(beam_size: usize, fusion: FusionConfig) -> Result<Self> {
        if beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        Ok(BeamConfig { beam_size, fusion })
    }
}

/// The trained models a decoder scores with. Shared read-only across videos.
#[derive(Clone, Copy, Debug)]
pub struct Models<'a> {
    pub vocab: &'a Vocab,
    pub binning: &'a DurationBinning,
    pub duration: &'a DurationModel,
    pub selector: &'a Selector,
}

impl Models<'_> {
    pub(crate) fn check(&self) -> Result<()> {
        if self.binning.num_verbs() != self.vocab.num_verbs() {
            return Err(Error::Contract(format!(
                "binning covers {} verbs, vocabulary has {}",
                self.binning.num_verbs(),
                self.vocab.num_verbs()
            )));
        }
        if let DurationModel::DurNet(net) = self.duration {
            net.check_binning(self.binning)?;
        }
        Ok(())
    }
}

/// Model-call instrumentation for one decode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    /// Duration distributions requested, one per hypothesis and candidate action.
    pub duration_evals: u64,
    /// Fused action probabilities requested, one per hypothesis and candidate action.
    pub selector_evals: u64,
    /// Search states generated (successor hypotheses, or DP cells).
    pub frames_touched: u64,
}

/// A decoder result.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub alignment: Alignment,
    /// Negative infinity for a fallback alignment.
    pub log_posterior: f64,
    /// Set when no hypothesis could reach the last frame and the alignment
    /// was built heuristically.
    pub fallback: bool,
    pub counters: Counters,
}

/// Candidate actions for the next segment: the first transcript action for
/// an empty hypothesis, otherwise the current action and, unless the cursor
/// is on the last action, the next one.
pub fn successor_actions(last: Option<(ActionId, usize)>, transcript: &Transcript) -> Vec<(ActionId, usize)> {
    match last {
        None => vec![(transcript.get(0), 0)],
        Some((action, cursor)) => {
            let mut out = vec![(action, cursor)];
            if cursor + 1 < transcript.len() {
                out.push((transcript.get(cursor + 1), cursor + 1));
            }
            out
        }
    }
}

/// Deterministic preference between equal-score segmentations: the earlier
/// first differing boundary wins, then the smaller action index, then the
/// shorter segment list.
pub fn tie_break(a: &[Segment], b: &[Segment]) -> Ordering {
    a.cmp(b)
}

/// Orders `(score, segments)` best first.
pub(crate) fn better(a: (f64, &[Segment]), b: (f64, &[Segment])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| tie_break(a.1, b.1))
}

/// Splits `total` frames over the transcript in proportion to each action's
/// typical verb length, each action getting at least one frame.
pub fn fallback_alignment(
    transcript: &Transcript,
    vocab: &Vocab,
    binning: &DurationBinning,
    total: usize,
) -> Result<Alignment> {
    let m = transcript.len();
    if m > total {
        return Err(Error::Input(format!(
            "transcript has {m} actions but the video only {total} frames"
        )));
    }
    let weights: Vec<f64> = transcript
        .actions()
        .iter()
        .map(|&a| binning.gamma(vocab.verb_of(a)))
        .collect();
    let spare = (total - m) as f64;
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| spare * w / sum).collect();
    let mut lens: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
    let mut left = total - lens.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        let fi = shares[i] - shares[i].floor();
        let fj = shares[j] - shares[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        lens[i] += 1;
        left -= 1;
    }
    let parts: Vec<(ActionId, usize)> = transcript.actions().iter().copied().zip(lens).collect();
    Alignment::from_lengths(&parts)
}
