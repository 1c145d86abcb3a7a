//! On-disk formats: FSEQ feature matrices, CSV features, transcripts,
//! alignments, vocabularies, and the tagged binary container used for
//! model files.
//!
//! All binary formats are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::alignment::{Alignment, Segment, Transcript};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::vocab::{ActionId, Vocab};

pub const FSEQ_MAGIC: [u8; 4] = *b"FSEQ";
pub const FSEQ_VERSION: u32 = 1;

/// Serialises a feature matrix as FSEQ.
pub fn encode_fseq(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * m.as_slice().len());
    out.extend_from_slice(&FSEQ_MAGIC);
    out.extend_from_slice(&FSEQ_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Parses an FSEQ byte buffer. `origin` is only used in error messages.
pub fn decode_fseq(bytes: &[u8], origin: &Path) -> Result<FeatureMatrix> {
    let mut r = ByteReader::new(bytes, origin);
    r.expect_magic(&FSEQ_MAGIC)?;
    let version = r.u32()?;
    if version != FSEQ_VERSION {
        return Err(Error::format(origin, format!("unsupported FSEQ version {version}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = r.f32_block(rows * cols)?;
    r.finish()?;
    FeatureMatrix::new(rows, cols, data).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_fseq(path: &Path, m: &FeatureMatrix) -> Result<()> {
    write_bytes(path, &encode_fseq(m))
}

pub fn read_fseq(path: &Path) -> Result<FeatureMatrix> {
    decode_fseq(&read_bytes(path)?, path)
}

/// Writes one row per frame, values comma-separated. Rust's shortest
/// round-trip formatting is used, so re-reading is exact.
pub fn write_features_csv(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut s = String::new();
    for t in 0..m.rows() {
        let row: Vec<String> = m.row(t).iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    FeatureMatrix::from_rows(&rows).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads features by extension: `.csv` as CSV, anything else as FSEQ.
pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_features_csv(path),
        _ => read_fseq(path),
    }
}

pub fn format_transcript(t: &Transcript, vocab: &Vocab) -> String {
    t.actions()
        .iter()
        .map(|&a| format!("{}\n", vocab.action_name(a)))
        .collect()
}

pub fn parse_transcript(text: &str, vocab: &Vocab, origin: &Path) -> Result<Transcript> {
    let actions = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|name| lookup(vocab, name, origin))
        .collect::<Result<Vec<_>>>()?;
    Transcript::new(actions).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn read_transcript(path: &Path, vocab: &Vocab) -> Result<Transcript> {
    parse_transcript(&read_text(path)?, vocab, path)
}

/// One line per segment: `start length action-name`.
pub fn format_alignment(a: &Alignment, vocab: &Vocab) -> String {
    a.segments()
        .iter()
        .map(|s| format!("{} {} {}\n", s.start, s.len, vocab.action_name(s.action)))
        .collect()
}

pub fn parse_alignment(text: &str, vocab: &Vocab, origin: &Path) -> Result<Alignment> {
    let mut segments = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(origin, format!("line {}: {msg}", lineno + 1));
        if fields.len() != 3 {
            return Err(bad(format!("expected `start length action`, got {line:?}")));
        }
        let start = fields[0].parse().map_err(|e| bad(format!("start: {e}")))?;
        let len = fields[1].parse().map_err(|e| bad(format!("length: {e}")))?;
        let action = lookup(vocab, fields[2], origin)?;
        segments.push(Segment::new(action, start, len));
    }
    let total = segments.last().map_or(0, Segment::end);
    Alignment::new(segments, total).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn read_alignment(path: &Path, vocab: &Vocab) -> Result<Alignment> {
    parse_alignment(&read_text(path)?, vocab, path)
}

/// One line per action, `action verb object`, plus an optional
/// `background action` line.
pub fn format_vocab(vocab: &Vocab) -> String {
    let mut s = String::new();
    for a in 0..vocab.num_actions() {
        let (v, o) = vocab.decomposition(a);
        s.push_str(&format!(
            "{} {} {}\n",
            vocab.action_name(a),
            vocab.verb_name(v),
            vocab.object_name(o)
        ));
    }
    if let Some(bg) = vocab.background() {
        s.push_str(&format!("background {}\n", vocab.action_name(bg)));
    }
    s
}

pub fn parse_vocab(text: &str, origin: &Path) -> Result<Vocab> {
    let mut entries = Vec::new();
    let mut background = None;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            ["background", name] => background = Some(name.to_string()),
            [a, v, o] => entries.push((a.to_string(), v.to_string(), o.to_string())),
            _ => {
                return Err(Error::format(
                    origin,
                    format!("line {}: expected `action verb object`", lineno + 1),
                ))
            }
        }
    }
    Vocab::new(&entries, background.as_deref()).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    parse_vocab(&read_text(path)?, path)
}

fn lookup(vocab: &Vocab, name: &str, origin: &Path) -> Result<ActionId> {
    vocab
        .action_index(name)
        .ok_or_else(|| Error::format(origin, format!("unknown action {name:?}")))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes a file, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Builder for the tagged binary container: 4-byte magic, u32 version,
/// then whatever the model appends.
pub(crate) struct ByteWriter(Vec<u8>);

impl ByteWriter {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = ByteWriter(Vec::new());
        w.0.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    pub fn f32_block(&mut self, values: &[f64]) {
        for &v in values {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }

    pub fn f64_block(&mut self, values: &[f64]) {
        for &v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], origin: &'a Path) -> Self {
        ByteReader {
            bytes,
            pos: 0,
            origin,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(self.origin, "truncated file")),
        }
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::format(
                self.origin,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    /// Reads the magic and checks the version.
    pub fn header(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        self.expect_magic(magic)?;
        let got = self.u32()?;
        if got != version {
            return Err(Error::format(self.origin, format!("unsupported version {got}")));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f32_block(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.origin, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn f32_block_f64(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.f32_block(n)?.into_iter().map(f64::from).collect())
    }

    pub fn f64_block(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.origin, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::format(
                self.origin,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ))
        }
    }
}
