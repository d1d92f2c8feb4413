//! Extraction, matching and refinement chained for a rectified pair.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{detect_features, Feature};
use crate::image::GrayImage;
use crate::matching::{match_features, Match};
use crate::phase_congruency::{compute_phase_congruency, PhaseCongruencyResult};
use crate::poc::{refine_matches, RefineSource, RefinedMatch};

#[derive(Debug, Clone, Default)]
pub struct StereoPipeline {
    pub config: RunConfig,
}

/// Everything computed for one pair.
#[derive(Debug, Clone)]
pub struct PairResult {
    pub left: PhaseCongruencyResult,
    pub right: PhaseCongruencyResult,
    pub left_features: Vec<Feature>,
    pub right_features: Vec<Feature>,
    pub matches: Vec<Match>,
    pub refined: Vec<RefinedMatch>,
}

impl StereoPipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn extract(&self, img: &GrayImage) -> Result<(PhaseCongruencyResult, Vec<Feature>)> {
        let pc = compute_phase_congruency(img, &self.config.pc)?;
        let feats = detect_features(&pc, self.config.gamma, self.config.nms_radius);
        Ok((pc, feats))
    }

    pub fn process(&self, left: &GrayImage, right: &GrayImage) -> Result<PairResult> {
        if left.dims() != right.dims() {
            return Err(Error::Dimension(format!(
                "left image is {}x{} but right image is {}x{}",
                left.width(),
                left.height(),
                right.width(),
                right.height()
            )));
        }
        let (pc_l, feats_l) = self.extract(left)?;
        let (pc_r, feats_r) = self.extract(right)?;
        let matches = match_features(&feats_l, &feats_r, &pc_l.moment_max, &pc_r.moment_max, &self.config.matching)?;
        let (src_l, src_r) = match self.config.poc.source {
            RefineSource::MomentMap => (&pc_l.moment_max, &pc_r.moment_max),
            RefineSource::RawImage => (left, right),
        };
        let refined = refine_matches(&matches, src_l, src_r, &self.config.poc);
        Ok(PairResult {
            left: pc_l,
            right: pc_r,
            left_features: feats_l,
            right_features: feats_r,
            matches,
            refined,
        })
    }

    /// Refined matches for a rectified pair.
    pub fn run(&self, left: &GrayImage, right: &GrayImage) -> Result<Vec<RefinedMatch>> {
        Ok(self.process(left, right)?.refined)
    }
}
