//! Frame-feature matrices and fixed-length window sampling.

use crate::error::{Error, Result};

/// A dense `T x F` matrix of per-frame features, stored row-major as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "feature matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Input("ragged feature rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Number of frames `T`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Feature dimension `F`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.cols..(frame + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// How a window of `alpha` frames is subsampled into `gamma_count` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowConfig {
    alpha: usize,
    stride: usize,
    gamma_count: usize,
}

impl Default for WindowConfig {
    /// 60 frames sampled every third frame: 20 rows.
    fn default() -> Self {
        WindowConfig::new(60, 3).expect("valid default window")
    }
}

impl WindowConfig {
    /// A window of `alpha` frames sampled every `stride` frames. The number
    /// of rows is `ceil(alpha / stride)`, so every sampled frame lies inside
    /// `[start, start + alpha)`.
    pub fn new(alpha: usize, stride: usize) -> Result<Self> {
        if alpha == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "window needs alpha >= 1 and stride >= 1, got alpha={alpha} stride={stride}"
            )));
        }
        Ok(WindowConfig {
            alpha,
            stride,
            gamma_count: alpha.div_ceil(stride),
        })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of sampled rows per window.
    pub fn gamma_count(&self) -> usize {
        self.gamma_count
    }

    /// Frame indices sampled for a window starting at `start` in a video of
    /// `total` frames. Indices past the end repeat the last frame.
    pub fn sample_frames(&self, start: usize, total: usize) -> impl Iterator<Item = usize> + '_ {
        let last = total.saturating_sub(1);
        (0..self.gamma_count).map(move |k| (start + k * self.stride).min(last))
    }
}

/// A `gamma_count x F` block of sampled features, row-major, in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    /// The window flattened row-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Samples the window that starts at frame `start`.
///
/// Rows are the features at `start`, `start + stride`, ...; rows that would
/// fall past the last frame repeat the last frame's features.
pub fn extract_window(features: &FeatureMatrix, start: usize, cfg: &WindowConfig) -> Result<Window> {
    let total = features.rows();
    if start >= total {
        return Err(Error::Range {
            what: "window start",
            value: start,
            valid: format!("[0, {total})"),
        });
    }
    let cols = features.cols();
    let mut data = Vec::with_capacity(cfg.gamma_count() * cols);
    for frame in cfg.sample_frames(start, total) {
        data.extend(features.row(frame).iter().map(|&x| f64::from(x)));
    }
    Ok(Window {
        rows: cfg.gamma_count(),
        cols,
        data,
    })
}
