use crate::alignment::{Alignment, Transcript};
use crate::duration::PoissonDuration;
use crate::error::{Error, Result};
use crate::selector::MarScores;
use crate::vocab::ActionId;

/// Output of the frame-level baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiResult {
    pub alignment: Alignment,
    pub score: f64,
    /// `(action, end frame, run length)` states evaluated.
    pub states_touched: u64,
}

/// Exact segmental dynamic program over frames: each transcript action gets
/// one run whose score is the Poisson log-pmf of its length plus the summed
/// per-frame MAR log-probabilities. Runs are at most `max_len` frames
/// (default: the whole video).
pub fn frame_viterbi_align(
    mar: &MarScores,
    transcript: &Transcript,
    poisson: &PoissonDuration,
    max_len: Option<usize>,
) -> Result<ViterbiResult> {
    let total = mar.frames();
    let m_count = transcript.len();
    if total == 0 || m_count > total {
        return Err(Error::Input(format!("cannot align {m_count} actions to {total} frames")));
    }
    let cap = max_len.unwrap_or(total).min(total);
    if cap == 0 {
        return Err(Error::Config("run length cap must be positive".into()));
    }
    let width = total + 1;
    let mut best = vec![f64::NEG_INFINITY; m_count * width];
    let mut arg = vec![0usize; m_count * width];
    let mut touched = 0u64;
    for m in 0..m_count {
        let action = transcript.get(m);
        // Action m ends at frame t; the m earlier actions need m frames and
        // the later ones one frame each.
        for t in (m + 1)..=(total - (m_count - 1 - m)) {
            for r in 1..=cap.min(t - m) {
                touched += 1;
                let prev = if m == 0 {
                    if r != t {
                        continue;
                    }
                    0.0
                } else {
                    best[(m - 1) * width + t - r]
                };
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let score = prev + poisson.log_prob(r, action) + mar.sum_log_prob(t - r, t, action)?;
                if score > best[m * width + t] {
                    best[m * width + t] = score;
                    arg[m * width + t] = r;
                }
            }
        }
    }
    let score = best[(m_count - 1) * width + total];
    if score == f64::NEG_INFINITY {
        return Err(Error::Input(format!(
            "no segmentation with runs of at most {cap} frames covers {total} frames"
        )));
    }
    let mut lens = vec![0; m_count];
    let mut t = total;
    for m in (0..m_count).rev() {
        let r = arg[m * width + t];
        lens[m] = r;
        t -= r;
    }
    let parts: Vec<(ActionId, usize)> = transcript.actions().iter().copied().zip(lens).collect();
    Ok(ViterbiResult {
        alignment: Alignment::from_lengths(&parts)?,
        score,
        states_touched: touched,
    })
}

/// The baseline's objective for a given alignment (runs are merged first).
pub fn viterbi_score(alignment: &Alignment, mar: &MarScores, poisson: &PoissonDuration) -> Result<f64> {
    let mut score = 0.0;
    for seg in alignment.merged().segments() {
        score += poisson.log_prob(seg.len, seg.action) + mar.sum_log_prob(seg.start, seg.end(), seg.action)?;
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;

    #[test]
    fn single_action_takes_every_frame() {
        let probs = FeatureMatrix::new(5, 2, [1.0, 0.0].repeat(5)).unwrap();
        let mar = MarScores::from_probabilities(&probs).unwrap();
        let pois = PoissonDuration::new(vec![2.0, 2.0]).unwrap();
        let t = Transcript::new(vec![0]).unwrap();
        let r = frame_viterbi_align(&mar, &t, &pois, None).unwrap();
        assert_eq!(r.alignment.segments().len(), 1);
        assert_eq!(r.alignment.segments()[0].len, 5);
        assert!(r.states_touched >= 5);
    }

    #[test]
    fn follows_mar_boundary() {
        let mut data = Vec::new();
        for t in 0..10 {
            data.extend(if t < 3 { [0.9f32, 0.1] } else { [0.1, 0.9] });
        }
        let mar = MarScores::from_probabilities(&FeatureMatrix::new(10, 2, data).unwrap()).unwrap();
        let pois = PoissonDuration::new(vec![5.0, 5.0]).unwrap();
        let t = Transcript::new(vec![0, 1]).unwrap();
        let r = frame_viterbi_align(&mar, &t, &pois, None).unwrap();
        assert_eq!(r.alignment.segments()[0].len, 3);
        assert!((viterbi_score(&r.alignment, &mar, &pois).unwrap() - r.score).abs() < 1e-12);
    }

    #[test]
    fn cap_can_make_input_infeasible() {
        let probs = FeatureMatrix::new(6, 1, vec![1.0; 6]).unwrap();
        let mar = MarScores::from_probabilities(&probs).unwrap();
        let pois = PoissonDuration::new(vec![2.0]).unwrap();
        let t = Transcript::new(vec![0]).unwrap();
        assert!(frame_viterbi_align(&mar, &t, &pois, Some(5)).is_err());
        assert!(frame_viterbi_align(&mar, &t, &pois, Some(6)).is_ok());
    }
}
