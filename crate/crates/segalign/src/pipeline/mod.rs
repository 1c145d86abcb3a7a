//! The pseudo-ground-truth training loop, batch decoding and evaluation,
//! the duration/step-mode ablation grid, the synthetic generator and the
//! dataset directory layout.

mod dataset;
mod eval;
mod synth;
mod train;

pub use dataset::{
    format_splits, parse_splits, write_alignment, write_synthetic, write_video, Dataset, Splits, ALIGNMENTS, TRUTH,
};
pub use eval::{counters_csv, decode_videos, run_ablation, run_eval, AblationRow, DecodeRecord};
pub use synth::{generate_synthetic, jitter_boundaries, SynthConfig, SynthData};
pub use train::{
    durnet_tuples, fit_duration, fit_models, realign, run_training, DurationChoice, PipelineConfig, RoundSummary, TrainedModels,
    TrainingOutcome,
};
