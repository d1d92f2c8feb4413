//! JSON run configuration shared by the library front ends.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchConfig;
use crate::phase_congruency::PcConfig;
use crate::poc::PocConfig;
use crate::triangulate::{RigFile, StereoRig};

/// Every tunable of a pipeline run. Missing sections take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feature threshold on the maximum moment.
    pub gamma: f64,
    pub nms_radius: usize,
    pub pc: PcConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub poc: PocConfig,
    pub rig: RigFile,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            nms_radius: 0,
            pc: PcConfig::default(),
            matching: MatchConfig::default(),
            poc: PocConfig::default(),
            rig: RigFile::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        self.pc.validate()?;
        self.matching.validate()?;
        self.poc.validate()?;
        self.rig.clone().into_rig()?;
        Ok(())
    }

    pub fn stereo_rig(&self) -> Result<StereoRig> {
        self.rig.clone().into_rig()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}
