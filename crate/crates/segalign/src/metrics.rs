//! Frame accuracy, accuracy without background frames, and per-class IoU,
//! with per-video and corpus aggregation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::vocab::ActionId;

fn check_lengths(pred: &[ActionId], gt: &[ActionId]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Contract(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Contract("empty frame sequence".into()));
    }
    Ok(())
}

/// Fraction of frames labelled correctly.
pub fn frame_accuracy(pred: &[ActionId], gt: &[ActionId]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Frame accuracy over frames whose ground truth is not background.
/// `None` when every ground-truth frame is background.
pub fn frame_accuracy_no_bg(pred: &[ActionId], gt: &[ActionId], background: Option<ActionId>) -> Result<Option<f64>> {
    check_lengths(pred, gt)?;
    let mut hits = 0usize;
    let mut counted = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        if Some(*g) != background {
            counted += 1;
            hits += usize::from(p == g);
        }
    }
    Ok((counted > 0).then(|| hits as f64 / counted as f64))
}

/// Intersection over union per non-background ground-truth class, averaged
/// over those classes. `None` when the ground truth holds only background.
pub fn iou(pred: &[ActionId], gt: &[ActionId], background: Option<ActionId>) -> Result<Option<f64>> {
    check_lengths(pred, gt)?;
    let mut classes: Vec<ActionId> = gt.iter().copied().filter(|&g| Some(g) != background).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for &c in &classes {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&p, &g) in pred.iter().zip(gt) {
            inter += usize::from(p == c && g == c);
            union += usize::from(p == c || g == c);
        }
        sum += inter as f64 / union as f64;
    }
    Ok(Some(sum / classes.len() as f64))
}

/// Metrics of one decoded video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoMetrics {
    pub id: String,
    pub frames: usize,
    pub acc: f64,
    pub acc_bg: Option<f64>,
    pub iou: Option<f64>,
    pub fallback: bool,
}

impl VideoMetrics {
    pub fn compute(
        id: &str,
        pred: &[ActionId],
        gt: &[ActionId],
        background: Option<ActionId>,
        fallback: bool,
    ) -> Result<Self> {
        Ok(VideoMetrics {
            id: id.to_string(),
            frames: gt.len(),
            acc: frame_accuracy(pred, gt)?,
            acc_bg: frame_accuracy_no_bg(pred, gt, background)?,
            iou: iou(pred, gt, background)?,
            fallback,
        })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-video metrics and their unweighted means. Videos where a metric is
/// undefined are left out of that metric's mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub videos: Vec<VideoMetrics>,
    /// Videos that could not be scored, with the reason.
    pub errors: Vec<(String, String)>,
}

/// Mean accuracy of the videos whose length falls in one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthBucket {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub mean_acc: Option<f64>,
}

impl EvalReport {
    pub fn push(&mut self, m: VideoMetrics) {
        self.videos.push(m);
    }

    pub fn mean_acc(&self) -> Option<f64> {
        mean(self.videos.iter().map(|v| v.acc))
    }

    pub fn mean_acc_bg(&self) -> Option<f64> {
        mean(self.videos.iter().filter_map(|v| v.acc_bg))
    }

    pub fn mean_iou(&self) -> Option<f64> {
        mean(self.videos.iter().filter_map(|v| v.iou))
    }

    pub fn frames(&self) -> usize {
        self.videos.iter().map(|v| v.frames).sum()
    }

    pub fn fallbacks(&self) -> usize {
        self.videos.iter().filter(|v| v.fallback).count()
    }

    /// Splits the observed video lengths into `buckets` equal-width
    /// intervals and averages accuracy in each.
    pub fn length_buckets(&self, buckets: usize) -> Vec<LengthBucket> {
        let buckets = buckets.max(1);
        let (lo, hi) = self
            .videos
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), v| (lo.min(v.frames), hi.max(v.frames)));
        if self.videos.is_empty() {
            return Vec::new();
        }
        let (lo, hi) = (lo as f64, hi as f64);
        let width = (hi - lo) / buckets as f64;
        let mut out: Vec<LengthBucket> = (0..buckets)
            .map(|b| LengthBucket {
                low: lo + width * b as f64,
                high: if b + 1 == buckets { hi } else { lo + width * (b + 1) as f64 },
                count: 0,
                mean_acc: None,
            })
            .collect();
        let mut sums = vec![0.0; buckets];
        for v in &self.videos {
            let b = if width == 0.0 {
                0
            } else {
                (((v.frames as f64 - lo) / width) as usize).min(buckets - 1)
            };
            out[b].count += 1;
            sums[b] += v.acc;
        }
        for (bucket, sum) in out.iter_mut().zip(sums) {
            bucket.mean_acc = (bucket.count > 0).then(|| sum / bucket.count as f64);
        }
        out
    }

    /// Per-video rows, then error rows, then the mean row. `provenance`
    /// lines are written first as `#` comments.
    pub fn to_csv(&self, provenance: &[String]) -> String {
        let mut out = String::new();
        for p in provenance {
            let _ = writeln!(out, "# {p}");
        }
        out.push_str("video,frames,acc,acc_bg,iou,fallback,error\n");
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        for v in &self.videos {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{},",
                v.id,
                v.frames,
                v.acc,
                opt(v.acc_bg),
                opt(v.iou),
                u8::from(v.fallback)
            );
        }
        for (id, err) in &self.errors {
            let _ = writeln!(out, "{id},,,,,,{}", err.replace([',', '\n'], ";"));
        }
        if !self.videos.is_empty() {
            let _ = writeln!(
                out,
                "mean,{},{},{},{},{},",
                self.frames(),
                opt(self.mean_acc()),
                opt(self.mean_acc_bg()),
                opt(self.mean_iou()),
                self.fallbacks()
            );
        }
        out
    }

    pub fn buckets_csv(&self, buckets: usize, provenance: &[String]) -> String {
        let mut out = String::new();
        for p in provenance {
            let _ = writeln!(out, "# {p}");
        }
        out.push_str("bucket,low,high,count,mean_acc\n");
        for (i, b) in self.length_buckets(buckets).iter().enumerate() {
            let acc = b.mean_acc.map_or(String::new(), |a| format!("{a:.6}"));
            let _ = writeln!(out, "{i},{:.1},{:.1},{},{acc}", b.low, b.high, b.count);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_edges() {
        let mut r = EvalReport::default();
        for (i, frames) in [10, 12, 30, 50].into_iter().enumerate() {
            r.push(VideoMetrics {
                id: i.to_string(),
                frames,
                acc: i as f64 / 4.0,
                acc_bg: None,
                iou: None,
                fallback: false,
            });
        }
        let b = r.length_buckets(4);
        assert_eq!(b.len(), 4);
        assert_eq!(b.iter().map(|x| x.count).collect::<Vec<_>>(), vec![2, 0, 1, 1]);
        assert_eq!(b[0].mean_acc, Some(0.125));
        assert_eq!(b[1].mean_acc, None);
        assert_eq!(r.buckets_csv(4, &[]).lines().count(), 5);
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        let r = EvalReport::default();
        assert_eq!(r.to_csv(&[]), "video,frames,acc,acc_bg,iou,fallback,error\n");
        assert!(r.length_buckets(4).is_empty());
    }

    #[test]
    fn mismatch_is_contract_error() {
        assert!(matches!(frame_accuracy(&[0], &[0, 1]), Err(Error::Contract(_))));
    }
}
