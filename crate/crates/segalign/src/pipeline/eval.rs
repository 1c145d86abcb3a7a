use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::train::{fit_duration, run_training, DurationChoice, PipelineConfig, TrainedModels};
use crate::align::{segment_beam_search, BeamConfig, Decoded, Models};
use crate::alignment::VideoSample;
use crate::duration::StepMode;
use crate::error::Result;
use crate::metrics::{EvalReport, VideoMetrics};
use crate::selector::train_selectors;
use crate::vocab::Vocab;

/// One decoded video.
#[derive(Clone, Debug)]
pub struct DecodeRecord {
    pub id: String,
    pub decoded: Decoded,
    pub wall_ms: f64,
}

/// Decodes videos in parallel; results are in input order.
pub fn decode_videos(
    videos: &[VideoSample],
    vocab: &Vocab,
    models: Models<'_>,
    beam: &BeamConfig,
) -> Vec<Result<DecodeRecord>> {
    videos
        .par_iter()
        .map(|v| {
            let start = Instant::now();
            let ctx = models.selector.prepare(v, vocab)?;
            let decoded = segment_beam_search(&ctx, models, beam)?;
            Ok(DecodeRecord {
                id: v.id.clone(),
                decoded,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

/// `video,logp,fallback,duration_evals,selector_evals,wall_ms` rows.
pub fn counters_csv(records: &[DecodeRecord], provenance: &[String]) -> String {
    let mut out = String::new();
    for p in provenance {
        let _ = writeln!(out, "# {p}");
    }
    out.push_str("video,logp,fallback,duration_evals,selector_evals,wall_ms\n");
    for r in records {
        let c = r.decoded.counters;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.id,
            r.decoded.log_posterior,
            u8::from(r.decoded.fallback),
            c.duration_evals,
            c.selector_evals,
            r.wall_ms
        );
    }
    out
}

/// Decodes `test` with its transcripts and scores the result against its
/// references. References are read only here, by the metrics.
pub fn run_eval(
    test: &[VideoSample],
    vocab: &Vocab,
    models: Models<'_>,
    beam: &BeamConfig,
) -> Result<(EvalReport, Vec<DecodeRecord>)> {
    let mut report = EvalReport::default();
    let mut records = Vec::with_capacity(test.len());
    for (video, result) in test.iter().zip(decode_videos(test, vocab, models, beam)) {
        match result {
            Ok(r) => {
                match video.reference() {
                    Some(gt) => report.push(VideoMetrics::compute(
                        &video.id,
                        &r.decoded.alignment.frame_labels(),
                        &gt.frame_labels(),
                        vocab.background(),
                        r.decoded.fallback,
                    )?),
                    None => report.errors.push((video.id.clone(), "no ground truth".into())),
                }
                records.push(r);
            }
            Err(e) => {
                log::error!("video {}: {e}", video.id);
                report.errors.push((video.id.clone(), e.to_string()));
            }
        }
    }
    Ok((report, records))
}

/// One cell of the ablation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub duration: DurationChoice,
    pub step_mode: StepMode,
    pub acc: Option<f64>,
    pub acc_bg: Option<f64>,
    pub iou: Option<f64>,
    pub fallbacks: usize,
}

impl AblationRow {
    fn new(duration: DurationChoice, step_mode: StepMode, report: &EvalReport) -> Self {
        AblationRow {
            duration,
            step_mode,
            acc: report.mean_acc(),
            acc_bg: report.mean_acc_bg(),
            iou: report.mean_iou(),
            fallbacks: report.fallbacks(),
        }
    }
}

/// Trains and evaluates every `(duration model, step mode)` pair with the
/// same seeds. Without realignment rounds the selector does not depend on
/// either axis and is trained once.
pub fn run_ablation(
    train: &[VideoSample],
    test: &[VideoSample],
    vocab: &Vocab,
    cfg: &PipelineConfig,
    durations: &[DurationChoice],
    modes: &[StepMode],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(durations.len() * modes.len());
    if cfg.rounds == 0 {
        let selector = train_selectors(train, vocab, cfg.window, &cfg.selector)?;
        for &mode in modes {
            let cell = PipelineConfig {
                step_mode: mode,
                ..cfg.clone()
            };
            let need_net = durations.contains(&DurationChoice::DurNet);
            let (binning, poisson, durnet) = fit_duration(train, vocab, &cell, need_net)?;
            let models = TrainedModels {
                binning,
                poisson,
                durnet: durnet.map(|(n, _)| n),
                selector: selector.clone(),
            };
            for &choice in durations {
                let duration = models.duration_model(choice)?;
                let (report, _) = run_eval(test, vocab, models.models(vocab, &duration), &cfg.beam)?;
                log::info!("{choice} / {mode}: acc {:?}", report.mean_acc());
                rows.push(AblationRow::new(choice, mode, &report));
            }
        }
    } else {
        for &mode in modes {
            for &choice in durations {
                let cell = PipelineConfig {
                    step_mode: mode,
                    duration_model: choice,
                    ..cfg.clone()
                };
                let outcome = run_training(train, vocab, &cell)?;
                let duration = outcome.models.duration_model(choice)?;
                let (report, _) = run_eval(test, vocab, outcome.models.models(vocab, &duration), &cfg.beam)?;
                rows.push(AblationRow::new(choice, mode, &report));
            }
        }
    }
    // Report rows grouped by duration model, like a results table.
    rows.sort_by_key(|r| durations.iter().position(|d| *d == r.duration));
    Ok(rows)
}
