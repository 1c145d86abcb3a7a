//! Transcript-constrained temporal action alignment.
//!
//! Given per-frame features of a video and an ordered list of the actions it
//! contains, [`align::segment_beam_search`] labels every frame with one of
//! those actions while respecting their order. Scoring combines a duration
//! model (a learned [`duration::DurNet`] or the [`duration::PoissonDuration`]
//! baseline) with a fused action probability from [`selector::Selector`].
//!
//! The guide in `book/` walks through each piece with runnable snippets.

pub mod align;
pub mod alignment;
pub mod duration;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod selector;
pub mod vocab;

pub use alignment::{Alignment, Segment, Transcript, VideoSample};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, WindowConfig};
pub use vocab::Vocab;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/durations.md")]
    mod durations {}
    #[doc = include_str!("../../../book/src/selector.md")]
    mod selector {}
    #[doc = include_str!("../../../book/src/beam-search.md")]
    mod beam_search {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
