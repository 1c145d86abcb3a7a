use super::score::{duration_term, Scorer};
use super::{better, fallback_alignment, successor_actions, BeamConfig, Decoded, Models};
use crate::alignment::{Alignment, Segment, Transcript};
use crate::error::{Error, Result};
use crate::selector::VideoContext;
use crate::vocab::ActionId;

/// Size limits for the exhaustive decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BruteLimits {
    pub max_frames: usize,
    pub max_actions: usize,
    pub max_bins: usize,
    /// Maximum number of enumerated segment choices.
    pub max_nodes: u64,
}

impl Default for BruteLimits {
    fn default() -> Self {
        BruteLimits {
            max_frames: 40,
            max_actions: 3,
            max_bins: 3,
            max_nodes: 20_000_000,
        }
    }
}

struct Search<'s, 'a, 'v> {
    scorer: &'s mut Scorer<'a, 'v>,
    transcript: &'a Transcript,
    total: usize,
    max_nodes: u64,
    nodes: u64,
    path: Vec<Segment>,
    best: Option<(f64, Vec<Segment>)>,
}

impl Search<'_, '_, '_> {
    fn visit(&mut self, t: usize, last: Option<(ActionId, usize)>, run_elapsed: usize, lp: f64) -> Result<()> {
        for (action, cursor) in successor_actions(last, self.transcript) {
            let run = if last.map(|l| l.0) == Some(action) { run_elapsed } else { 0 };
            let dur = self.scorer.duration_log_probs(t, action, run)?;
            let act = self.scorer.action_log_prob(t, action)?;
            let lengths = self.scorer.lengths(action);
            for (i, &l) in lengths.iter().enumerate() {
                self.nodes += 1;
                if self.nodes > self.max_nodes {
                    return Err(Error::LimitsExceeded(format!(
                        "more than {} segment choices",
                        self.max_nodes
                    )));
                }
                let len = l.min(self.total - t);
                self.path.push(Segment::new(action, t, len));
                if t + len == self.total {
                    if cursor + 1 == self.transcript.len() {
                        let d = duration_term(&dur, &lengths, len, true).expect("bin reaches the end");
                        let score = lp + (d + act);
                        let improves = self
                            .best
                            .as_ref()
                            .is_none_or(|(b, segs)| better((score, &self.path), (*b, segs)).is_lt());
                        if improves {
                            self.best = Some((score, self.path.clone()));
                        }
                    }
                } else {
                    self.visit(t + len, Some((action, cursor)), run + len, lp + (dur[i] + act))?;
                }
                self.path.pop();
            }
        }
        Ok(())
    }
}

/// Exhaustive search over every segmentation the beam search could produce,
/// scored identically. Refuses inputs beyond `limits`.
pub fn brute_force_align(
    ctx: &VideoContext<'_>,
    models: Models<'_>,
    cfg: &BeamConfig,
    limits: &BruteLimits,
) -> Result<Decoded> {
    let total = ctx.num_frames();
    let transcript = ctx.transcript;
    if total > limits.max_frames || transcript.len() > limits.max_actions || models.binning.bins() > limits.max_bins {
        return Err(Error::LimitsExceeded(format!(
            "T={total}, M={}, L={} exceeds T<={}, M<={}, L<={}",
            transcript.len(),
            models.binning.bins(),
            limits.max_frames,
            limits.max_actions,
            limits.max_bins
        )));
    }
    if total == 0 || transcript.len() > total {
        return Err(Error::Input(format!(
            "cannot align {} actions to {total} frames",
            transcript.len()
        )));
    }
    let mut scorer = Scorer::new(ctx, models, cfg)?;
    let mut search = Search {
        scorer: &mut scorer,
        transcript,
        total,
        max_nodes: limits.max_nodes,
        nodes: 0,
        path: Vec::new(),
        best: None,
    };
    search.visit(0, None, 0, 0.0)?;
    let best = search.best.take();
    let counters = scorer.counters;
    Ok(match best {
        Some((lp, segments)) => Decoded {
            alignment: Alignment::new(segments, total)?,
            log_posterior: lp,
            fallback: false,
            counters,
        },
        None => Decoded {
            alignment: fallback_alignment(transcript, models.vocab, models.binning, total)?,
            log_posterior: f64::NEG_INFINITY,
            fallback: true,
            counters,
        },
    })
}
