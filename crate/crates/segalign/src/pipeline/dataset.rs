//! Dataset directories:
//!
//! ```text
//! vocab.txt
//! splits.txt            [train] / [test] sections, one video id per line
//! features/<id>.fseq    (or <id>.csv)
//! transcripts/<id>.txt
//! alignments/<id>.txt   ground truth, or pseudo ground truth for training
//! truth/<id>.txt        optional true segmentation of training videos
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::synth::SynthData;
use crate::alignment::{Alignment, VideoSample};
use crate::error::{Error, Result};
use crate::io;
use crate::vocab::Vocab;

pub const ALIGNMENTS: &str = "alignments";
pub const TRUTH: &str = "truth";

/// Split name and its video ids, in file order.
pub type Splits = Vec<(String, Vec<String>)>;

pub fn format_splits(splits: &Splits) -> String {
    let mut out = String::new();
    for (name, ids) in splits {
        out.push_str(&format!("[{name}]\n"));
        for id in ids {
            out.push_str(id);
            out.push('\n');
        }
    }
    out
}

pub fn parse_splits(text: &str, origin: &Path) -> Result<Splits> {
    let mut splits: Splits = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if splits.iter().any(|(n, _)| n == name) {
                return Err(Error::format(origin, format!("split [{name}] appears twice")));
            }
            splits.push((name.to_string(), Vec::new()));
        } else {
            let (_, ids) = splits.last_mut().ok_or_else(|| {
                Error::format(origin, format!("line {}: video id before any [split] header", lineno + 1))
            })?;
            ids.push(line.to_string());
        }
    }
    Ok(splits)
}

/// An opened dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    vocab: Vocab,
    splits: Splits,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let vocab = io::read_vocab(&root.join("vocab.txt"))?;
        let splits_path = root.join("splits.txt");
        let splits = parse_splits(&io::read_text(&splits_path)?, &splits_path)?;
        Ok(Dataset {
            root: root.to_path_buf(),
            vocab,
            splits,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn ids(&self, split: &str) -> Result<&[String]> {
        self.splits
            .iter()
            .find(|(n, _)| n == split)
            .map(|(_, ids)| ids.as_slice())
            .ok_or_else(|| Error::Input(format!("{} has no [{split}] section", self.root.join("splits.txt").display())))
    }

    fn features_path(&self, id: &str) -> PathBuf {
        let fseq = self.root.join("features").join(format!("{id}.fseq"));
        let csv = fseq.with_extension("csv");
        if !fseq.exists() && csv.exists() {
            csv
        } else {
            fseq
        }
    }

    pub fn alignment_path(&self, dir: &str, id: &str) -> PathBuf {
        self.root.join(dir).join(format!("{id}.txt"))
    }

    /// Loads one video. `reference` names the directory to read its
    /// reference alignment from, if any.
    pub fn load_video(&self, id: &str, reference: Option<&str>) -> Result<VideoSample> {
        let features = io::read_features(&self.features_path(id))?;
        let transcript = io::read_transcript(&self.root.join("transcripts").join(format!("{id}.txt")), &self.vocab)?;
        let reference = reference
            .map(|dir| io::read_alignment(&self.alignment_path(dir, id), &self.vocab))
            .transpose()?;
        VideoSample::new(id.to_string(), features, transcript, reference, &self.vocab)
    }

    /// Loads every video of `split`, in split order.
    pub fn load_split(&self, split: &str, reference: Option<&str>) -> Result<Vec<VideoSample>> {
        self.ids(split)?
            .par_iter()
            .map(|id| self.load_video(id, reference))
            .collect()
    }

    /// Reads alignments of `ids` from the directory `dir`.
    pub fn load_alignments(&self, dir: &str, ids: &[String]) -> Result<Vec<Alignment>> {
        ids.iter()
            .map(|id| io::read_alignment(&self.alignment_path(dir, id), &self.vocab))
            .collect()
    }
}

pub fn write_alignment(dir: &Path, id: &str, alignment: &Alignment, vocab: &Vocab) -> Result<()> {
    io::write_bytes(
        &dir.join(format!("{id}.txt")),
        io::format_alignment(alignment, vocab).as_bytes(),
    )
}

pub fn write_video(root: &Path, sample: &VideoSample, vocab: &Vocab) -> Result<()> {
    io::write_fseq(&root.join("features").join(format!("{}.fseq", sample.id)), sample.features())?;
    io::write_bytes(
        &root.join("transcripts").join(format!("{}.txt", sample.id)),
        io::format_transcript(sample.transcript(), vocab).as_bytes(),
    )?;
    if let Some(r) = sample.reference() {
        write_alignment(&root.join(ALIGNMENTS), &sample.id, r, vocab)?;
    }
    Ok(())
}

/// Writes a generated corpus in the dataset layout.
pub fn write_synthetic(root: &Path, data: &SynthData) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    io::write_bytes(&root.join("vocab.txt"), io::format_vocab(&data.vocab).as_bytes())?;
    data.train
        .par_iter()
        .chain(data.test.par_iter())
        .try_for_each(|s| write_video(root, s, &data.vocab))?;
    for (s, truth) in data.train.iter().zip(&data.train_truth) {
        write_alignment(&root.join(TRUTH), &s.id, truth, &data.vocab)?;
    }
    for sub in ["features", "transcripts", ALIGNMENTS] {
        let p = root.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let splits: Splits = vec![
        ("train".into(), data.train.iter().map(|s| s.id.clone()).collect()),
        ("test".into(), data.test.iter().map(|s| s.id.clone()).collect()),
    ];
    io::write_bytes(&root.join("splits.txt"), format_splits(&splits).as_bytes())
}
