use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::eval::decode_videos;
use crate::align::{BeamConfig, Models};
use crate::alignment::{Alignment, VideoSample};
use crate::duration::{
    fit_verb_gammas, make_binning, DurNet, DurNetHyper, DurationBinning, DurationExample, DurationModel,
    PoissonDuration, RemainingTarget, StepMode,
};
use crate::error::{Error, Result};
use crate::features::{extract_window, WindowConfig};
use crate::nn::TrainLog;
use crate::selector::{run_positions, train_selectors, MarClassifier, Selector, SelectorHyper};
use crate::vocab::Vocab;

/// Which duration model the decoder uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DurationChoice {
    #[default]
    DurNet,
    Poisson,
    Uniform,
}

impl fmt::Display for DurationChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DurationChoice::DurNet => "durnet",
            DurationChoice::Poisson => "poisson",
            DurationChoice::Uniform => "uniform",
        })
    }
}

impl FromStr for DurationChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "durnet" => Ok(DurationChoice::DurNet),
            "poisson" => Ok(DurationChoice::Poisson),
            "uniform" => Ok(DurationChoice::Uniform),
            other => Err(Error::Config(format!(
                "unknown duration model {other:?} (expected durnet, poisson or uniform)"
            ))),
        }
    }
}

/// Settings of the whole training and decoding pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Realign-and-retrain cycles after the initial fit.
    pub rounds: usize,
    pub bins: usize,
    pub step_mode: StepMode,
    pub remaining_target: RemainingTarget,
    pub window: WindowConfig,
    pub durnet: DurNetHyper,
    pub selector: SelectorHyper,
    pub beam: BeamConfig,
    pub duration_model: DurationChoice,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rounds: 1,
            bins: 7,
            step_mode: StepMode::Median,
            remaining_target: RemainingTarget::Step,
            window: WindowConfig::default(),
            durnet: DurNetHyper::default(),
            selector: SelectorHyper::default(),
            beam: BeamConfig::default(),
            duration_model: DurationChoice::DurNet,
        }
    }
}

/// Everything needed to decode.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModels {
    pub binning: DurationBinning,
    pub poisson: PoissonDuration,
    pub durnet: Option<DurNet>,
    pub selector: Selector,
}

impl TrainedModels {
    /// The duration model for `choice`; fails if DurNet was not trained.
    pub fn duration_model(&self, choice: DurationChoice) -> Result<DurationModel> {
        match choice {
            DurationChoice::Uniform => Ok(DurationModel::Uniform),
            DurationChoice::Poisson => Ok(DurationModel::Poisson(self.poisson.clone())),
            DurationChoice::DurNet => self
                .durnet
                .clone()
                .map(DurationModel::DurNet)
                .ok_or_else(|| Error::Config("no trained duration network is available".into())),
        }
    }

    pub fn models<'a>(&'a self, vocab: &'a Vocab, duration: &'a DurationModel) -> Models<'a> {
        Models {
            vocab,
            binning: &self.binning,
            duration,
            selector: &self.selector,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.binning.save(&dir.join("binning.bin"))?;
        self.poisson.save(&dir.join("poisson.bin"))?;
        if let Some(net) = &self.durnet {
            net.save(&dir.join("durnet.bin"))?;
        }
        self.selector.save(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let durnet_path = dir.join("durnet.bin");
        Ok(TrainedModels {
            binning: DurationBinning::load(&dir.join("binning.bin"))?,
            poisson: PoissonDuration::load(&dir.join("poisson.bin"))?,
            durnet: if durnet_path.exists() {
                Some(DurNet::load(&durnet_path)?)
            } else {
                None
            },
            selector: Selector::load(dir)?,
        })
    }
}

/// Duration-network training tuples: at every merged reference run's start
/// and then every `s_v` frames inside it, the window, verb and elapsed bin
/// are labelled with the bin of the frames remaining in the run.
pub fn durnet_tuples(
    samples: &[VideoSample],
    vocab: &Vocab,
    binning: &DurationBinning,
    window: &WindowConfig,
    target: RemainingTarget,
) -> Result<Vec<DurationExample>> {
    let per_video: Vec<Vec<DurationExample>> = samples
        .par_iter()
        .map(|s| {
            let reference = s
                .reference()
                .ok_or_else(|| Error::Input(format!("video {} has no reference alignment", s.id)))?;
            let mut out = Vec::new();
            for seg in reference.merged().segments() {
                let verb = vocab.verb_of(seg.action);
                for p in run_positions(seg.start, seg.len, binning.step(verb)) {
                    out.push(DurationExample {
                        window: extract_window(s.features(), p, window)?,
                        verb,
                        elapsed_bin: binning.discretize_elapsed(p - seg.start, verb),
                        target_bin: binning.remaining_bin(seg.end() - p, verb, target),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_video.concat())
}

/// Binning, Poisson rates and the duration network with its training log.
pub type FittedDurations = (DurationBinning, PoissonDuration, Option<(DurNet, TrainLog)>);

/// Binning, Poisson rates and (optionally) the duration network, fitted on
/// the references of `samples`.
pub fn fit_duration(
    samples: &[VideoSample],
    vocab: &Vocab,
    cfg: &PipelineConfig,
    train_durnet: bool,
) -> Result<FittedDurations> {
    let binning = make_binning(&fit_verb_gammas(samples, vocab, cfg.step_mode, cfg.bins)?, cfg.bins)?;
    let poisson = PoissonDuration::fit(samples, vocab)?;
    let durnet = if train_durnet {
        let tuples = durnet_tuples(samples, vocab, &binning, &cfg.window, cfg.remaining_target)?;
        log::info!("training the duration network on {} tuples", tuples.len());
        Some(DurNet::train(&tuples, cfg.window, vocab.num_verbs(), cfg.bins, &cfg.durnet)?)
    } else {
        None
    };
    Ok((binning, poisson, durnet))
}

/// Fits every model on the current references of `samples`. The duration
/// network is trained only when the configuration decodes with it.
pub fn fit_models(samples: &[VideoSample], vocab: &Vocab, cfg: &PipelineConfig) -> Result<(TrainedModels, Option<TrainLog>)> {
    let (binning, poisson, durnet) = fit_duration(samples, vocab, cfg, cfg.duration_model == DurationChoice::DurNet)?;
    log::info!("training the action selector");
    let selector = train_selectors(samples, vocab, cfg.window, &cfg.selector)?;
    let (durnet, log) = durnet.map_or((None, None), |(n, l)| (Some(n), Some(l)));
    Ok((
        TrainedModels {
            binning,
            poisson,
            durnet,
            selector,
        },
        log,
    ))
}

/// Summary of one realignment pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub fallbacks: usize,
    pub mean_log_posterior: f64,
}

/// Decodes every sample with the current models; returns the new
/// references. Fallback decodes are logged and kept.
pub fn realign(
    samples: &[VideoSample],
    vocab: &Vocab,
    models: &TrainedModels,
    cfg: &PipelineConfig,
) -> Result<(Vec<Alignment>, usize, f64)> {
    let duration = models.duration_model(cfg.duration_model)?;
    let records = decode_videos(samples, vocab, models.models(vocab, &duration), &cfg.beam);
    let mut out = Vec::with_capacity(samples.len());
    let (mut fallbacks, mut lp_sum, mut lp_count) = (0, 0.0, 0usize);
    for r in records {
        let r = r?;
        if r.decoded.fallback {
            fallbacks += 1;
            log::warn!("video {}: fallback alignment", r.id);
        } else {
            lp_sum += r.decoded.log_posterior;
            lp_count += 1;
        }
        out.push(r.decoded.alignment);
    }
    Ok((out, fallbacks, lp_sum / lp_count.max(1) as f64))
}

/// Models and the final pseudo ground truth of a training run.
#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub models: TrainedModels,
    /// The references the last MAR was trained on: the input references
    /// when `rounds == 0`, otherwise the last realignment.
    pub pseudo: Vec<Alignment>,
    pub rounds: Vec<RoundSummary>,
    pub durnet_log: Option<TrainLog>,
}

/// Fits all models on the initial references, then per round realigns the
/// training videos and retrains the frame recognizer on the result.
pub fn run_training(train: &[VideoSample], vocab: &Vocab, cfg: &PipelineConfig) -> Result<TrainingOutcome> {
    let (mut models, durnet_log) = fit_models(train, vocab, cfg)?;
    let mut data: Vec<VideoSample> = train.to_vec();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let (pseudo, fallbacks, mean_log_posterior) = realign(&data, vocab, &models, cfg)?;
        log::info!("round {round}: realigned {} videos, {fallbacks} fallbacks", pseudo.len());
        data = data
            .into_iter()
            .zip(pseudo)
            .map(|(s, a)| s.with_reference(Some(a)))
            .collect::<Result<_>>()?;
        models.selector.mar = Some(MarClassifier::train(&data, vocab, &cfg.selector.mar)?);
        rounds.push(RoundSummary {
            round,
            fallbacks,
            mean_log_posterior,
        });
    }
    let pseudo = data
        .iter()
        .map(|s| s.reference().cloned().expect("training references checked by fit_models"))
        .collect();
    Ok(TrainingOutcome {
        models,
        pseudo,
        rounds,
        durnet_log,
    })
}
