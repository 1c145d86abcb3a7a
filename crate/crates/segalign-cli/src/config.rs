//! Flat experiment configuration: built-in defaults, then a TOML file, then
//! `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use segalign::align::BeamConfig;
use segalign::duration::{RemainingTarget, StepMode};
use segalign::nn::TrainConfig;
use segalign::pipeline::{DurationChoice, PipelineConfig, SynthConfig};
use segalign::selector::FusionConfig;
use segalign::WindowConfig;

pub const SEED_ENV: &str = "SEGALIGN_SEED";

/// Every setting of every subcommand. List-valued synthetic settings are
/// strings so the file stays a flat table of scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: PathBuf,
    pub out: PathBuf,
    /// Worker threads for per-video work; 0 uses every core.
    pub jobs: usize,
    /// Split decoded by `align` and scored by `eval`.
    pub split: String,
    pub buckets: usize,

    /// `name:verb:object` entries separated by commas.
    pub synth_actions: String,
    pub synth_background: String,
    /// `verb=frames` entries separated by commas.
    pub synth_verb_durations: String,
    pub synth_paces: String,
    pub synth_pace_weights: String,
    pub synth_duration_sigma: f64,
    pub synth_feature_dim: usize,
    pub synth_feature_noise: f64,
    pub synth_embedding_seed: u64,
    pub synth_train_videos: usize,
    pub synth_test_videos: usize,
    /// Action sequences separated by `;`, actions by whitespace.
    pub synth_grammar: String,
    pub synth_boundary_jitter: usize,

    pub rounds: usize,
    pub bins: usize,
    pub step_mode: String,
    pub remaining_target: String,
    pub window_alpha: usize,
    pub window_stride: usize,
    pub beam_size: usize,
    pub fusion_zeta: f64,
    pub fusion_beta: f64,
    pub fusion_lambda: f64,
    pub duration_model: String,
    pub learning_rate: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub label_sigma: f64,
    pub selector_stride: usize,

    /// Step modes of the ablation grid, comma separated.
    pub ablate_modes: String,
    pub ablate_durations: String,
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

impl Default for Config {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let pipe = PipelineConfig::default();
        let net = TrainConfig::default();
        Config {
            seed: 0,
            data: "data".into(),
            out: "out".into(),
            jobs: 0,
            split: "test".into(),
            buckets: 4,
            synth_actions: join(
                &synth.actions.iter().map(|(a, v, o)| format!("{a}:{v}:{o}")).collect::<Vec<_>>(),
                ",",
            ),
            synth_background: String::new(),
            synth_verb_durations: join(
                &synth.verb_durations.iter().map(|(v, d)| format!("{v}={d}")).collect::<Vec<_>>(),
                ",",
            ),
            synth_paces: join(&synth.paces, ","),
            synth_pace_weights: join(&synth.pace_weights, ","),
            synth_duration_sigma: synth.duration_sigma,
            synth_feature_dim: synth.feature_dim,
            synth_feature_noise: synth.feature_noise,
            synth_embedding_seed: synth.embedding_seed,
            synth_train_videos: synth.train_videos,
            synth_test_videos: synth.test_videos,
            synth_grammar: join(&synth.grammar.iter().map(|g| g.join(" ")).collect::<Vec<_>>(), "; "),
            synth_boundary_jitter: synth.boundary_jitter,
            rounds: pipe.rounds,
            bins: pipe.bins,
            step_mode: pipe.step_mode.to_string(),
            remaining_target: "step".into(),
            window_alpha: pipe.window.alpha(),
            window_stride: pipe.window.stride(),
            beam_size: pipe.beam.beam_size,
            fusion_zeta: pipe.beam.fusion.zeta,
            fusion_beta: pipe.beam.fusion.beta,
            fusion_lambda: pipe.beam.fusion.lambda,
            duration_model: pipe.duration_model.to_string(),
            learning_rate: net.learning_rate,
            hidden: net.hidden,
            epochs: net.epochs,
            batch_size: net.batch_size,
            l2: net.l2,
            label_sigma: pipe.durnet.sigma,
            selector_stride: pipe.selector.interior_stride,
            ablate_modes: "median,mean,max,fixed36".into(),
            ablate_durations: "durnet,poisson".into(),
        }
    }
}

/// A `--set` value: anything TOML parses as a scalar, otherwise a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Resolves the configuration. The seed comes from, in order: `--seed`, the
/// file or `--set`, the environment variable, then the default.
pub fn resolve(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Config> {
    let mut table = match file {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?
            .parse::<toml::Table>()
            .with_context(|| format!("parsing config {}", path.display()))?,
        None => toml::Table::new(),
    };
    for set in sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got {set:?}"))?;
        table.insert(key.trim().to_string(), parse_value(value.trim()));
    }
    if let Some(s) = seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    } else if !table.contains_key("seed") {
        if let Ok(env) = std::env::var(SEED_ENV) {
            let s: u64 = env.trim().parse().with_context(|| format!("{SEED_ENV}={env:?} is not a seed"))?;
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
    }
    let origin = file.map_or_else(|| "command line".to_string(), |p| p.display().to_string());
    Config::deserialize(table).map_err(|e| anyhow!("invalid configuration ({origin}): {e}"))
}

impl Config {
    /// SHA-256 of the canonical TOML form of the resolved configuration.
    /// Locations and the worker count do not change results and are left
    /// out, so a rerun elsewhere hashes the same.
    pub fn hash(&self) -> String {
        let canonical = Config {
            data: PathBuf::new(),
            out: PathBuf::new(),
            jobs: 0,
            ..self.clone()
        };
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn provenance(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.hash()), format!("seed={}", self.seed)]
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let floats = |key: &str, s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("{key}: {x:?} is not a number")))
                .collect()
        };
        let actions = self
            .synth_actions
            .split(',')
            .map(|e| match e.trim().split(':').collect::<Vec<_>>()[..] {
                [a, v, o] => Ok((a.to_string(), v.to_string(), o.to_string())),
                _ => bail!("synth_actions: expected name:verb:object, got {e:?}"),
            })
            .collect::<Result<Vec<_>>>()?;
        let verb_durations = self
            .synth_verb_durations
            .split(',')
            .map(|e| {
                let (v, d) = e
                    .split_once('=')
                    .ok_or_else(|| anyhow!("synth_verb_durations: expected verb=frames, got {e:?}"))?;
                let d = d.trim().parse().with_context(|| format!("synth_verb_durations: {d:?}"))?;
                Ok((v.trim().to_string(), d))
            })
            .collect::<Result<Vec<_>>>()?;
        let grammar = self
            .synth_grammar
            .split(';')
            .map(|seq| seq.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|seq| !seq.is_empty())
            .collect();
        Ok(SynthConfig {
            actions,
            background: Some(self.synth_background.clone()).filter(|b| !b.is_empty()),
            verb_durations,
            paces: floats("synth_paces", &self.synth_paces)?,
            pace_weights: floats("synth_pace_weights", &self.synth_pace_weights)?,
            duration_sigma: self.synth_duration_sigma,
            feature_dim: self.synth_feature_dim,
            feature_noise: self.synth_feature_noise,
            embedding_seed: self.synth_embedding_seed,
            seed: self.seed,
            train_videos: self.synth_train_videos,
            test_videos: self.synth_test_videos,
            grammar,
            boundary_jitter: self.synth_boundary_jitter,
        })
    }

    pub fn duration_choice(&self) -> Result<DurationChoice> {
        Ok(self.duration_model.parse()?)
    }

    pub fn beam(&self) -> Result<BeamConfig> {
        let fusion = FusionConfig::new(self.fusion_zeta, self.fusion_beta, self.fusion_lambda)?;
        Ok(BeamConfig::new(self.beam_size, fusion)?)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let net = TrainConfig {
            hidden: self.hidden,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            l2: self.l2,
            seed: self.seed,
        };
        let mut cfg = PipelineConfig {
            rounds: self.rounds,
            bins: self.bins,
            step_mode: self.step_mode.parse()?,
            remaining_target: match self.remaining_target.as_str() {
                "step" => RemainingTarget::Step,
                "width" => RemainingTarget::Width,
                other => bail!("remaining_target must be step or width, got {other:?}"),
            },
            window: WindowConfig::new(self.window_alpha, self.window_stride)?,
            beam: self.beam()?,
            duration_model: self.duration_choice()?,
            ..PipelineConfig::default()
        };
        cfg.durnet.train = net.clone();
        cfg.durnet.sigma = self.label_sigma;
        cfg.selector.vsnet = net.clone();
        cfg.selector.osnet = TrainConfig { seed: self.seed + 1, ..net.clone() };
        cfg.selector.mar = TrainConfig {
            hidden: 0,
            seed: self.seed + 2,
            ..net
        };
        cfg.selector.interior_stride = self.selector_stride;
        Ok(cfg)
    }

    pub fn ablation_axes(&self) -> Result<(Vec<DurationChoice>, Vec<StepMode>)> {
        let durations = self
            .ablate_durations
            .split(',')
            .map(|d| d.trim().parse())
            .collect::<segalign::Result<_>>()?;
        let modes = self
            .ablate_modes
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<segalign::Result<_>>()?;
        Ok((durations, modes))
    }
}
