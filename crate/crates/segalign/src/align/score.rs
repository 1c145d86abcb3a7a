use std::collections::HashMap;

use super::{BeamConfig, Counters, Models};
use crate::alignment::Alignment;
use crate::duration::{DurationContext, DurationModel};
use crate::error::{Error, Result};
use crate::features::{extract_window, Window};
use crate::selector::VideoContext;
use crate::vocab::ActionId;

/// Memoised per-video access to the duration and action terms.
pub(crate) struct Scorer<'a, 'v> {
    models: Models<'a>,
    ctx: &'a VideoContext<'v>,
    cfg: &'a BeamConfig,
    candidates: Vec<ActionId>,
    windows: HashMap<usize, Window>,
    durations: HashMap<(usize, ActionId, usize), Vec<f64>>,
    actions: HashMap<usize, Vec<f64>>,
    pub counters: Counters,
}

impl<'a, 'v> Scorer<'a, 'v> {
    pub fn new(ctx: &'a VideoContext<'v>, models: Models<'a>, cfg: &'a BeamConfig) -> Result<Self> {
        models.check()?;
        Ok(Scorer {
            models,
            ctx,
            cfg,
            candidates: ctx.masks.actions.clone(),
            windows: HashMap::new(),
            durations: HashMap::new(),
            actions: HashMap::new(),
            counters: Counters::default(),
        })
    }

    pub fn total(&self) -> usize {
        self.ctx.num_frames()
    }

    /// The discrete durations of `action`'s verb.
    pub fn lengths(&self, action: ActionId) -> Vec<usize> {
        self.models.binning.durations(self.models.vocab.verb_of(action)).collect()
    }

    pub fn step(&self, action: ActionId) -> usize {
        self.models.binning.step(self.models.vocab.verb_of(action))
    }

    fn window(&mut self, t: usize) -> Result<&Window> {
        if !self.windows.contains_key(&t) {
            let cfg = match self.models.duration {
                DurationModel::DurNet(net) => *net.window_config(),
                _ => *self.models.selector.window_config(),
            };
            let w = extract_window(self.ctx.features, t, &cfg)?;
            self.windows.insert(t, w);
        }
        Ok(&self.windows[&t])
    }

    /// Log-probabilities over the `L` bins for a segment of `action`
    /// starting at `t` after `run_elapsed` frames of the same action.
    pub fn duration_log_probs(&mut self, t: usize, action: ActionId, run_elapsed: usize) -> Result<Vec<f64>> {
        self.counters.duration_evals += 1;
        let verb = self.models.vocab.verb_of(action);
        let key = (t, action, self.models.binning.discretize_elapsed(run_elapsed, verb));
        if let Some(lp) = self.durations.get(&key) {
            return Ok(lp.clone());
        }
        let (binning, model) = (self.models.binning, self.models.duration);
        let window = self.window(t)?;
        let lp = model.log_probs(&DurationContext {
            window,
            action,
            verb,
            run_elapsed,
            binning,
        })?;
        self.durations.insert(key, lp.clone());
        Ok(lp)
    }

    /// Fused, normalised log-probability of `action` for a segment at `t`.
    pub fn action_log_prob(&mut self, t: usize, action: ActionId) -> Result<f64> {
        self.counters.selector_evals += 1;
        if !self.actions.contains_key(&t) {
            let lp = self.models.selector.fused_action_log_probs(
                self.ctx,
                self.models.vocab,
                &self.cfg.fusion,
                t,
                &self.candidates,
            )?;
            self.actions.insert(t, lp);
        }
        let k = self
            .candidates
            .iter()
            .position(|&c| c == action)
            .ok_or_else(|| Error::Contract(format!("action {action} is not in the transcript")))?;
        Ok(self.actions[&t][k])
    }
}

/// Duration term of a segment of length `len` given the bin distribution.
/// A segment ending on the last frame may be a truncated longer bin and takes
/// the best bin at least as long; any other segment needs an exact bin.
pub(crate) fn duration_term(dur: &[f64], lengths: &[usize], len: usize, ends_video: bool) -> Option<f64> {
    if ends_video {
        lengths
            .iter()
            .zip(dur)
            .filter(|(&l, _)| l >= len)
            .map(|(_, &d)| d)
            .reduce(f64::max)
    } else {
        lengths.iter().position(|&l| l == len).map(|i| dur[i])
    }
}

/// Log-posterior of `alignment` under the decoder's scoring rules.
pub fn score_alignment(
    ctx: &VideoContext<'_>,
    alignment: &Alignment,
    models: Models<'_>,
    cfg: &BeamConfig,
) -> Result<f64> {
    if alignment.total_frames() != ctx.num_frames() {
        return Err(Error::Input(format!(
            "alignment covers {} frames, video has {}",
            alignment.total_frames(),
            ctx.num_frames()
        )));
    }
    if !alignment.matches(ctx.transcript) {
        return Err(Error::Input("alignment does not follow the transcript".into()));
    }
    let mut scorer = Scorer::new(ctx, models, cfg)?;
    let total = scorer.total();
    let mut lp = 0.0;
    let mut run_elapsed = 0;
    let mut prev: Option<ActionId> = None;
    for seg in alignment.segments() {
        if prev != Some(seg.action) {
            run_elapsed = 0;
        }
        let dur = scorer.duration_log_probs(seg.start, seg.action, run_elapsed)?;
        let lengths = scorer.lengths(seg.action);
        let d = duration_term(&dur, &lengths, seg.len, seg.end() == total).ok_or_else(|| {
            Error::Scoring(format!(
                "segment [{}, {}) has a length no duration bin produces",
                seg.start,
                seg.end()
            ))
        })?;
        let a = scorer.action_log_prob(seg.start, seg.action)?;
        lp += d + a;
        run_elapsed += seg.len;
        prev = Some(seg.action);
    }
    Ok(lp)
}
