//! Sub-pixel stereo matching for low-resolution, low-texture image pairs
//! such as those produced by small uncooled thermal cameras.
//!
//! The pipeline has three stages:
//!
//! 1. [`phase_congruency`] turns each rectified image into a maximum-moment
//!    map `M`, a contrast- and brightness-invariant feature strength, and
//!    [`features`] thresholds it into point features.
//! 2. [`matching`] pairs left and right features along rows at integer
//!    disparity, scoring moment-map windows with the Lades similarity under
//!    uniqueness, ordering, continuity and left-right consistency constraints.
//! 3. [`poc`] refines every match to sub-pixel disparity by phase-only
//!    correlation of small windows, fitting a band-limited sinc peak model in
//!    closed form. [`triangulate`] converts the result to depth.
//!
//! [`eval`] reproduces the synthetic-shift and brightness experiments used to
//! characterize the pipeline.
//!
//! ```
//! use subtherm::{image::ShiftSpec, synth, StereoPipeline};
//!
//! # fn main() -> subtherm::Result<()> {
//! let right = synth::thermal_scene(80, 60, 3, synth::SceneStyle::default())?;
//! let left = subtherm::image::subpixel_shift(&right, ShiftSpec::horizontal(4.25))?;
//!
//! let pipeline = StereoPipeline::default();
//! let refined = pipeline.run(&left, &right)?;
//! assert!(!refined.is_empty());
//! # Ok(())
//! # }
//! ```

pub mod config;
pub mod error;
pub mod eval;
mod fft;
pub mod features;
pub mod image;
pub mod matching;
pub mod phase_congruency;
pub mod pipeline;
pub mod poc;
pub mod synth;
pub mod triangulate;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use features::{detect_features, redetection_rate, Feature};
pub use image::{apply_brightness, load_pgm, save_pgm, subpixel_shift, BitDepth, GrayImage, ShiftSpec};
pub use matching::{lades_similarity, match_features, Match, MatchConfig};
pub use phase_congruency::{compute_phase_congruency, PcConfig, PhaseCongruencyResult};
pub use pipeline::StereoPipeline;
pub use poc::{estimate_delta, refine_match, PocConfig, RefineStatus, RefinedMatch};
pub use triangulate::{depth_error_range, focal_from_hfov, triangulate, Point3D, StereoRig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/phase_congruency.md")]
    mod phase_congruency {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/subpixel.md")]
    mod subpixel {}
    #[doc = include_str!("../../../book/src/depth.md")]
    mod depth {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
