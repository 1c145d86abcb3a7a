//! Transcripts, segmentations, and the video sample that ties them together.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::vocab::{ActionId, Vocab};

/// One labelled run of frames, `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub action: ActionId,
}

impl Segment {
    pub fn new(action: ActionId, start: usize, len: usize) -> Self {
        Segment { start, len, action }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Removes consecutive duplicates: `[a, a, b, a] -> [a, b, a]`.
pub fn collapse(labels: &[ActionId]) -> Vec<ActionId> {
    let mut out: Vec<ActionId> = Vec::with_capacity(labels.len());
    for &l in labels {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// The ordered list of actions occurring in a video, without timing.
/// No two consecutive entries are equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transcript(Vec<ActionId>);

impl Transcript {
    /// Builds a transcript, collapsing consecutive duplicates.
    pub fn new(actions: Vec<ActionId>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Input("empty transcript".into()));
        }
        let collapsed = collapse(&actions);
        if collapsed.len() != actions.len() {
            log::warn!(
                "transcript had consecutive duplicates; collapsed {} entries to {}",
                actions.len(),
                collapsed.len()
            );
        }
        Ok(Transcript(collapsed))
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, m: usize) -> ActionId {
        self.0[m]
    }

    /// Distinct actions in order of first appearance.
    pub fn distinct(&self) -> Vec<ActionId> {
        let mut out = Vec::new();
        for &a in &self.0 {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }
}

/// A contiguous segmentation of `[0, T)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alignment {
    segments: Vec<Segment>,
    total_frames: usize,
}

impl Alignment {
    /// Validates contiguity, positive lengths, and coverage of `[0, total)`.
    pub fn new(segments: Vec<Segment>, total_frames: usize) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Input("alignment has no segments".into()));
        }
        let mut expected = 0;
        for (n, seg) in segments.iter().enumerate() {
            if seg.len == 0 {
                return Err(Error::Input(format!("segment {n} has zero length")));
            }
            if seg.start != expected {
                return Err(Error::Input(format!(
                    "segment {n} starts at {} but previous ends at {expected}",
                    seg.start
                )));
            }
            expected = seg.end();
        }
        if expected != total_frames {
            return Err(Error::Input(format!(
                "segments cover {expected} frames, video has {total_frames}"
            )));
        }
        Ok(Alignment {
            segments,
            total_frames,
        })
    }

    /// Builds an alignment from `(action, length)` pairs laid end to end.
    pub fn from_lengths(parts: &[(ActionId, usize)]) -> Result<Self> {
        let mut start = 0;
        let mut segments = Vec::with_capacity(parts.len());
        for &(action, len) in parts {
            segments.push(Segment::new(action, start, len));
            start += len;
        }
        Self::new(segments, start)
    }

    /// One segment per maximal run of equal labels.
    pub fn from_frame_labels(labels: &[ActionId]) -> Result<Self> {
        let mut segments: Vec<Segment> = Vec::new();
        for (t, &a) in labels.iter().enumerate() {
            match segments.last_mut() {
                Some(seg) if seg.action == a => seg.len += 1,
                _ => segments.push(Segment::new(a, t, 1)),
            }
        }
        Self::new(segments, labels.len())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    /// Per-frame labels.
    pub fn frame_labels(&self) -> Vec<ActionId> {
        let mut out = Vec::with_capacity(self.total_frames);
        for seg in &self.segments {
            out.extend(std::iter::repeat_n(seg.action, seg.len));
        }
        out
    }

    /// Collapsed label sequence, i.e. the transcript this alignment realises.
    pub fn transcript_actions(&self) -> Vec<ActionId> {
        let labels: Vec<_> = self.segments.iter().map(|s| s.action).collect();
        collapse(&labels)
    }

    /// Merges consecutive segments that share a label.
    pub fn merged(&self) -> Alignment {
        let mut segments: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            match segments.last_mut() {
                Some(last) if last.action == seg.action => last.len += seg.len,
                _ => segments.push(*seg),
            }
        }
        Alignment {
            segments,
            total_frames: self.total_frames,
        }
    }

    /// True if the alignment realises `transcript` exactly.
    pub fn matches(&self, transcript: &Transcript) -> bool {
        self.transcript_actions() == transcript.actions()
    }
}

/// A video: features, its transcript, and optionally a reference alignment
/// (ground truth or pseudo-ground truth).
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub id: String,
    features: FeatureMatrix,
    transcript: Transcript,
    reference: Option<Alignment>,
}

impl VideoSample {
    pub fn new(
        id: impl Into<String>,
        features: FeatureMatrix,
        transcript: Transcript,
        reference: Option<Alignment>,
        vocab: &Vocab,
    ) -> Result<Self> {
        let id = id.into();
        for &a in transcript.actions() {
            vocab.check_action(a)?;
        }
        if transcript.len() > features.rows() {
            return Err(Error::Input(format!(
                "video {id}: transcript of {} actions cannot fit in {} frames",
                transcript.len(),
                features.rows()
            )));
        }
        if let Some(r) = &reference {
            check_reference(&id, r, &transcript, features.rows())?;
        }
        Ok(VideoSample {
            id,
            features,
            transcript,
            reference,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn reference(&self) -> Option<&Alignment> {
        self.reference.as_ref()
    }

    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn with_reference(mut self, reference: Option<Alignment>) -> Result<Self> {
        if let Some(r) = &reference {
            check_reference(&self.id, r, &self.transcript, self.features.rows())?;
        }
        self.reference = reference;
        Ok(self)
    }
}

fn check_reference(id: &str, r: &Alignment, transcript: &Transcript, frames: usize) -> Result<()> {
    if r.total_frames() != frames {
        return Err(Error::Input(format!(
            "video {id}: reference covers {} frames, features have {frames}",
            r.total_frames()
        )));
    }
    if !r.matches(transcript) {
        return Err(Error::Input(format!(
            "video {id}: reference alignment does not realise the transcript"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: ActionId = 0;
    const B: ActionId = 1;

    #[test]
    fn frame_labels_expand_segments() {
        let a = Alignment::new(vec![Segment::new(A, 0, 2), Segment::new(B, 2, 2)], 4).unwrap();
        assert_eq!(a.frame_labels(), vec![A, A, B, B]);
        let single = Alignment::new(vec![Segment::new(A, 0, 5)], 5).unwrap();
        assert_eq!(single.frame_labels(), vec![A; 5]);
        let aba = Alignment::from_lengths(&[(A, 1), (B, 1), (A, 1)]).unwrap();
        assert_eq!(aba.frame_labels(), vec![A, B, A]);
    }

    #[test]
    fn rejects_gaps_overlaps_and_empty_segments() {
        assert!(Alignment::new(vec![Segment::new(A, 0, 2), Segment::new(B, 3, 1)], 4).is_err());
        assert!(Alignment::new(vec![Segment::new(A, 0, 2), Segment::new(B, 1, 3)], 4).is_err());
        assert!(Alignment::new(vec![Segment::new(A, 0, 0), Segment::new(B, 0, 4)], 4).is_err());
        assert!(Alignment::new(vec![Segment::new(A, 0, 3)], 4).is_err());
    }

    #[test]
    fn transcript_collapses_duplicates() {
        let t = Transcript::new(vec![A, A, B, B, A]).unwrap();
        assert_eq!(t.actions(), &[A, B, A]);
        assert_eq!(t.distinct(), vec![A, B]);
        assert!(Transcript::new(vec![]).is_err());
    }

    #[test]
    fn merged_joins_repeated_labels() {
        let a = Alignment::from_lengths(&[(A, 2), (A, 3), (B, 1), (B, 1), (A, 4)]).unwrap();
        let m = a.merged();
        assert_eq!(
            m.segments(),
            &[Segment::new(A, 0, 5), Segment::new(B, 5, 2), Segment::new(A, 7, 4)]
        );
        assert_eq!(m.frame_labels(), a.frame_labels());
    }

    fn arb_alignment() -> impl Strategy<Value = Alignment> {
        prop::collection::vec((0usize..4, 1usize..6), 1..12)
            .prop_map(|parts| Alignment::from_lengths(&parts).unwrap())
    }

    proptest! {
        #[test]
        fn frame_label_round_trip(a in arb_alignment()) {
            let labels = a.frame_labels();
            let back = Alignment::from_frame_labels(&labels).unwrap();
            prop_assert_eq!(&back.frame_labels(), &labels);
            prop_assert_eq!(back, a.merged());
        }

        #[test]
        fn collapsed_frame_labels_equal_transcript(a in arb_alignment()) {
            prop_assert_eq!(collapse(&a.frame_labels()), a.transcript_actions());
        }
    }
}
