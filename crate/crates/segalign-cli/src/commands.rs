use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use segalign::io;
use segalign::metrics::{EvalReport, VideoMetrics};
use segalign::pipeline::{
    counters_csv, decode_videos, fit_models, generate_synthetic, run_ablation, run_eval, run_training,
    write_alignment, write_synthetic, Dataset, TrainedModels, ALIGNMENTS,
};

use crate::config::Config;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    /// SHA-256 over the sorted `path sha256` lines of `files`.
    content_hash: String,
    files: Vec<FileEntry>,
    config: &'a Config,
}

fn files_under(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(&path, base, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST) {
            out.push(path.strip_prefix(base).expect("under base").to_path_buf());
        }
    }
    Ok(())
}

/// Records the configuration, seed and a digest of every file under `dir`.
fn write_manifest(dir: &Path, command: &str, cfg: &Config) -> Result<String> {
    let mut paths = Vec::new();
    files_under(dir, dir, &mut paths)?;
    paths.sort();
    let mut files = Vec::with_capacity(paths.len());
    let mut all = Sha256::new();
    for p in paths {
        let bytes = fs::read(dir.join(&p)).with_context(|| format!("reading {}", dir.join(&p).display()))?;
        let path = p.to_string_lossy().replace('\\', "/");
        let sha256 = hex::encode(Sha256::digest(&bytes));
        all.update(format!("{path} {sha256}\n").as_bytes());
        files.push(FileEntry { path, sha256 });
    }
    let manifest = Manifest {
        command,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        content_hash: hex::encode(all.finalize()),
        files,
        config: cfg,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest.content_hash)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::write_bytes(path, text.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn models_dir(cfg: &Config) -> PathBuf {
    cfg.out.join("models")
}

fn save_models(cfg: &Config, command: &str, models: &TrainedModels) -> Result<()> {
    let dir = models_dir(cfg);
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    models.save(&dir)?;
    write_manifest(&dir, command, cfg)?;
    log::info!("models saved to {}", dir.display());
    Ok(())
}

fn load_models(cfg: &Config) -> Result<TrainedModels> {
    let dir = models_dir(cfg);
    TrainedModels::load(&dir).with_context(|| format!("loading models from {} (run `train` first)", dir.display()))
}

pub fn synth(cfg: &Config) -> Result<()> {
    let data = generate_synthetic(&cfg.synth()?)?;
    if cfg.data.exists() {
        fs::remove_dir_all(&cfg.data).with_context(|| format!("clearing {}", cfg.data.display()))?;
    }
    write_synthetic(&cfg.data, &data)?;
    let hash = write_manifest(&cfg.data, "synth", cfg)?;
    log::info!(
        "wrote {} train and {} test videos to {}",
        data.train.len(),
        data.test.len(),
        cfg.data.display()
    );
    println!("{hash}");
    Ok(())
}

pub fn fit(cfg: &Config) -> Result<()> {
    let dataset = Dataset::open(&cfg.data)?;
    let train = dataset.load_split("train", Some(ALIGNMENTS))?;
    let pipe = cfg.pipeline()?;
    let (models, log) = fit_models(&train, dataset.vocab(), &pipe)?;
    save_models(cfg, "fit", &models)?;
    if let Some(log) = log {
        write_text(&cfg.out.join("durnet_loss.csv"), &loss_csv(cfg, &log.epoch_losses))?;
    }
    Ok(())
}

fn loss_csv(cfg: &Config, losses: &[f64]) -> String {
    let mut out = String::new();
    for p in cfg.provenance() {
        let _ = writeln!(out, "# {p}");
    }
    out.push_str("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

pub fn train(cfg: &Config, resume: bool) -> Result<()> {
    if resume {
        match load_models(cfg) {
            Ok(_) => {
                log::info!("resuming: models in {} are kept, training skipped", models_dir(cfg).display());
                return Ok(());
            }
            Err(e) => log::warn!("cannot resume ({e:#}); training from scratch"),
        }
    }
    let dataset = Dataset::open(&cfg.data)?;
    let train = dataset.load_split("train", Some(ALIGNMENTS))?;
    let pipe = cfg.pipeline()?;
    let outcome = run_training(&train, dataset.vocab(), &pipe)?;
    save_models(cfg, "train", &outcome.models)?;

    let pseudo_dir = cfg.out.join("pseudo");
    if pseudo_dir.exists() {
        fs::remove_dir_all(&pseudo_dir).with_context(|| format!("clearing {}", pseudo_dir.display()))?;
    }
    fs::create_dir_all(&pseudo_dir).with_context(|| format!("creating {}", pseudo_dir.display()))?;
    for (video, a) in train.iter().zip(&outcome.pseudo) {
        write_alignment(&pseudo_dir, &video.id, a, dataset.vocab())?;
    }
    write_manifest(&pseudo_dir, "train", cfg)?;

    let mut rounds = String::new();
    for p in cfg.provenance() {
        let _ = writeln!(rounds, "# {p}");
    }
    rounds.push_str("round,fallbacks,mean_log_posterior\n");
    for r in &outcome.rounds {
        let _ = writeln!(rounds, "{},{},{}", r.round, r.fallbacks, r.mean_log_posterior);
    }
    write_text(&cfg.out.join("rounds.csv"), &rounds)?;
    if let Some(log) = &outcome.durnet_log {
        write_text(&cfg.out.join("durnet_loss.csv"), &loss_csv(cfg, &log.epoch_losses))?;
    }
    Ok(())
}

pub fn align(cfg: &Config) -> Result<()> {
    let dataset = Dataset::open(&cfg.data)?;
    let videos = dataset.load_split(&cfg.split, None)?;
    let models = load_models(cfg)?;
    let duration = models.duration_model(cfg.duration_choice()?)?;
    let beam = cfg.beam()?;
    let dir = cfg.out.join("aligned");
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut records = Vec::with_capacity(videos.len());
    let mut failed = 0;
    for (video, result) in videos
        .iter()
        .zip(decode_videos(&videos, dataset.vocab(), models.models(dataset.vocab(), &duration), &beam))
    {
        match result {
            Ok(r) => {
                if r.decoded.fallback {
                    log::warn!("video {}: fallback alignment", r.id);
                }
                write_alignment(&dir, &r.id, &r.decoded.alignment, dataset.vocab())?;
                records.push(r);
            }
            Err(e) => {
                failed += 1;
                log::error!("video {}: {e}", video.id);
            }
        }
    }
    write_manifest(&dir, "align", cfg)?;
    write_text(&cfg.out.join("counters.csv"), &counters_csv(&records, &cfg.provenance()))?;
    log::info!("aligned {} videos of [{}], {failed} failed", records.len(), cfg.split);
    Ok(())
}

/// Fallback flags from the decoder's counters file, if there is one.
fn fallback_flags(path: &Path) -> HashMap<String, bool> {
    let Ok(text) = fs::read_to_string(path) else {
        return HashMap::new();
    };
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f.len() >= 3).then(|| (f[0].to_string(), f[2] == "1"))
        })
        .collect()
}

pub fn eval(cfg: &Config, pred: Option<&Path>) -> Result<()> {
    let dataset = Dataset::open(&cfg.data)?;
    let vocab = dataset.vocab();
    let pred_dir = pred.map_or_else(|| cfg.out.join("aligned"), Path::to_path_buf);
    let flags = fallback_flags(&cfg.out.join("counters.csv"));
    let mut report = EvalReport::default();
    for id in dataset.ids(&cfg.split)? {
        let scored = (|| -> Result<VideoMetrics> {
            let gt = io::read_alignment(&dataset.alignment_path(ALIGNMENTS, id), vocab)?;
            let p = io::read_alignment(&pred_dir.join(format!("{id}.txt")), vocab)?;
            let fallback = flags.get(id).copied().unwrap_or(false);
            Ok(VideoMetrics::compute(id, &p.frame_labels(), &gt.frame_labels(), vocab.background(), fallback)?)
        })();
        match scored {
            Ok(m) => report.push(m),
            Err(e) => {
                log::error!("video {id}: {e:#}");
                report.errors.push((id.clone(), format!("{e:#}")));
            }
        }
    }
    write_reports(cfg, &report)
}

fn write_reports(cfg: &Config, report: &EvalReport) -> Result<()> {
    let prov = cfg.provenance();
    write_text(&cfg.out.join("report.csv"), &report.to_csv(&prov))?;
    write_text(&cfg.out.join("lenbuckets.csv"), &report.buckets_csv(cfg.buckets, &prov))?;
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    log::info!(
        "{} videos: acc {}, acc-bg {}, IoU {}, {} fallbacks, {} errors",
        report.videos.len(),
        show(report.mean_acc()),
        show(report.mean_acc_bg()),
        show(report.mean_iou()),
        report.fallbacks(),
        report.errors.len()
    );
    Ok(())
}

/// Decodes and scores the split in one pass with the trained models.
pub fn decode_and_eval(cfg: &Config) -> Result<()> {
    let dataset = Dataset::open(&cfg.data)?;
    let test = dataset.load_split(&cfg.split, Some(ALIGNMENTS))?;
    let models = load_models(cfg)?;
    let duration = models.duration_model(cfg.duration_choice()?)?;
    let (report, _) = run_eval(&test, dataset.vocab(), models.models(dataset.vocab(), &duration), &cfg.beam()?)?;
    write_reports(cfg, &report)
}

pub fn ablate(cfg: &Config) -> Result<()> {
    let dataset = Dataset::open(&cfg.data)?;
    let train = dataset.load_split("train", Some(ALIGNMENTS))?;
    let test = dataset.load_split(&cfg.split, Some(ALIGNMENTS))?;
    let (durations, modes) = cfg.ablation_axes()?;
    let rows = run_ablation(&train, &test, dataset.vocab(), &cfg.pipeline()?, &durations, &modes)?;
    let mut out = String::new();
    for p in cfg.provenance() {
        let _ = writeln!(out, "# {p}");
    }
    out.push_str("duration_model,step_mode,acc,acc_bg,iou,fallbacks\n");
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.duration,
            r.step_mode,
            opt(r.acc),
            opt(r.acc_bg),
            opt(r.iou),
            r.fallbacks
        );
    }
    write_text(&cfg.out.join("ablation.csv"), &out)
}

pub fn inspect(cfg: &Config) -> Result<()> {
    let mut shown = false;
    if cfg.data.join("vocab.txt").exists() {
        shown = true;
        let dataset = Dataset::open(&cfg.data)?;
        let vocab = dataset.vocab();
        println!("dataset {}", cfg.data.display());
        println!(
            "  {} actions, {} verbs, {} objects, background {}",
            vocab.num_actions(),
            vocab.num_verbs(),
            vocab.num_objects(),
            vocab.background().map_or("none", |b| vocab.action_name(b))
        );
        for (name, ids) in dataset.splits() {
            println!("  [{name}] {} videos", ids.len());
        }
    }
    let dir = models_dir(cfg);
    if dir.join("binning.bin").exists() {
        shown = true;
        let models = load_models(cfg)?;
        let b = &models.binning;
        println!("models {}", dir.display());
        println!("  {} bins, duration network {}", b.bins(), if models.durnet.is_some() { "present" } else { "absent" });
        println!("  verb  gamma  step  width");
        for v in 0..b.num_verbs() {
            println!("  {v:4}  {:5.1}  {:4}  {:5.2}", b.gamma(v), b.step(v), b.bin_width(v));
        }
        let rates: Vec<String> = models.poisson.rates().iter().map(|r| format!("{r:.1}")).collect();
        println!("  poisson rates per action: {}", rates.join(" "));
        println!("  frame recognizer {}", if models.selector.mar.is_some() { "present" } else { "absent" });
    }
    if !shown {
        bail!("nothing to inspect: no dataset at {} and no models at {}", cfg.data.display(), dir.display());
    }
    Ok(())
}
