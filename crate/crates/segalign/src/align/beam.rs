use super::score::{duration_term, Scorer};
use super::{better, fallback_alignment, successor_actions, BeamConfig, Decoded, Models};
use crate::alignment::{Alignment, Segment};
use crate::error::{Error, Result};
use crate::selector::VideoContext;

#[derive(Clone, Debug)]
struct Hypothesis {
    segments: Vec<Segment>,
    t: usize,
    cursor: usize,
    run_elapsed: usize,
    lp: f64,
}

impl Hypothesis {
    fn last(&self) -> Option<(usize, usize)> {
        self.segments.last().map(|s| (s.action, self.cursor))
    }
}

/// Frames needed after a segment with transcript cursor `m` so the rest of
/// the transcript can still finish exactly on the last frame: one step of
/// every intermediate action plus one frame for the final one.
fn frames_needed(steps: &[usize], m: Option<usize>) -> usize {
    let last = steps.len() - 1;
    let first = m.map_or(0, |m| m + 1);
    if first > last {
        return 0;
    }
    1 + steps[first..last].iter().sum::<usize>()
}

/// Segment-level beam search.
///
/// Hypotheses grow one segment at a time. Each expansion picks the current
/// or next transcript action and one of its `L` discrete durations; a
/// duration that reaches past the last frame is cut to end there. Only
/// hypotheses whose cursor is on the last transcript action may end there.
/// Finished hypotheses leave the beam, so every live hypothesis after step
/// `n` has exactly `n` segments.
pub fn segment_beam_search(ctx: &VideoContext<'_>, models: Models<'_>, cfg: &BeamConfig) -> Result<Decoded> {
    let total = ctx.num_frames();
    let transcript = ctx.transcript;
    let m_count = transcript.len();
    if total == 0 {
        return Err(Error::Input("cannot align an empty video".into()));
    }
    if m_count > total {
        return Err(Error::Input(format!(
            "transcript has {m_count} actions but the video only {total} frames"
        )));
    }
    let mut scorer = Scorer::new(ctx, models, cfg)?;
    let steps: Vec<usize> = transcript.actions().iter().map(|&a| scorer.step(a)).collect();
    let need: Vec<usize> = (0..m_count).map(|m| frames_needed(&steps, Some(m))).collect();

    let mut best: Option<Hypothesis> = None;
    let mut live = if total >= frames_needed(&steps, None) {
        vec![Hypothesis {
            segments: Vec::new(),
            t: 0,
            cursor: 0,
            run_elapsed: 0,
            lp: 0.0,
        }]
    } else {
        Vec::new()
    };

    while !live.is_empty() {
        let mut next = Vec::with_capacity(live.len() * 2 * models.binning.bins());
        for h in &live {
            let remaining = total - h.t;
            for (action, cursor) in successor_actions(h.last(), transcript) {
                let run = match h.segments.last() {
                    Some(s) if s.action == action => h.run_elapsed,
                    _ => 0,
                };
                let dur = scorer.duration_log_probs(h.t, action, run)?;
                let act = scorer.action_log_prob(h.t, action)?;
                let lengths = scorer.lengths(action);
                let mut landed = false;
                for (i, &len) in lengths.iter().enumerate() {
                    scorer.counters.frames_touched += 1;
                    if len < remaining {
                        if remaining - len < need[cursor] {
                            continue;
                        }
                        let mut segments = h.segments.clone();
                        segments.push(Segment::new(action, h.t, len));
                        next.push(Hypothesis {
                            segments,
                            t: h.t + len,
                            cursor,
                            run_elapsed: run + len,
                            lp: h.lp + (dur[i] + act),
                        });
                    } else if !landed {
                        landed = true;
                        if cursor + 1 != m_count {
                            continue;
                        }
                        let d = duration_term(&dur, &lengths, remaining, true)
                            .expect("a bin reaches the last frame");
                        let mut segments = h.segments.clone();
                        segments.push(Segment::new(action, h.t, remaining));
                        let done = Hypothesis {
                            segments,
                            t: total,
                            cursor,
                            run_elapsed: run + remaining,
                            lp: h.lp + (d + act),
                        };
                        let improves = best.as_ref().is_none_or(|b| {
                            better((done.lp, &done.segments), (b.lp, &b.segments)).is_lt()
                        });
                        if improves {
                            best = Some(done);
                        }
                    }
                }
            }
        }
        // Every later term is a log-probability, so a live hypothesis already
        // below the best finished one can never overtake it.
        if let Some(b) = &best {
            next.retain(|h| h.lp >= b.lp);
        }
        next.sort_by(|a, b| better((a.lp, &a.segments), (b.lp, &b.segments)));
        next.truncate(cfg.beam_size);
        live = next;
    }

    let counters = scorer.counters;
    match best {
        Some(h) => Ok(Decoded {
            alignment: Alignment::new(h.segments, total)?,
            log_posterior: h.lp,
            fallback: false,
            counters,
        }),
        None => {
            log::warn!("no hypothesis reaches the last frame; using the fallback alignment");
            Ok(Decoded {
                alignment: fallback_alignment(transcript, models.vocab, models.binning, total)?,
                log_posterior: f64::NEG_INFINITY,
                fallback: true,
                counters,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_needed_counts_intermediate_steps() {
        let steps = [3, 4, 5, 6];
        assert_eq!(frames_needed(&steps, None), 1 + 3 + 4 + 5);
        assert_eq!(frames_needed(&steps, Some(0)), 1 + 4 + 5);
        assert_eq!(frames_needed(&steps, Some(2)), 1);
        assert_eq!(frames_needed(&steps, Some(3)), 0);
        assert_eq!(frames_needed(&[7], None), 1);
    }
}
