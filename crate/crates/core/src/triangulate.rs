//! Depth from disparity for a rectified rig, `z = f * b / d`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poc::RefinedMatch;

/// Baseline of the reference thermal rig, in millimeters.
pub const DEFAULT_BASELINE_MM: f64 = 16.0;
/// Horizontal field of view of the reference thermal rig, in degrees.
pub const DEFAULT_HFOV_DEGREES: f64 = 51.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub baseline_mm: f64,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for StereoRig {
    /// 16 mm baseline, 51 degree HFOV, 80x60 sensor, centered principal point.
    fn default() -> Self {
        StereoRig::from_hfov(DEFAULT_BASELINE_MM, DEFAULT_HFOV_DEGREES, 80, 60).expect("valid default rig")
    }
}

impl StereoRig {
    pub fn from_hfov(baseline_mm: f64, hfov_degrees: f64, width: usize, height: usize) -> Result<Self> {
        let rig = Self {
            baseline_mm,
            focal_px: focal_from_hfov(hfov_degrees, width)?,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            image_width: width,
            image_height: height,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_mm > 0.0) || !(self.focal_px > 0.0) {
            return Err(Error::Config(format!(
                "rig needs positive baseline and focal length, got {} mm / {} px",
                self.baseline_mm, self.focal_px
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Config("principal point must be finite".into()));
        }
        Ok(())
    }

    /// `f * b`, the constant linking depth and disparity.
    pub fn focal_baseline(&self) -> f64 {
        self.focal_px * self.baseline_mm
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: RigFile = serde_json::from_str(text)?;
        file.into_rig()
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// On-disk rig description. Either `hfov_degrees` or `focal_px` must be
/// given; the principal point defaults to the image center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    pub baseline_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hfov_degrees: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_px: Option<f64>,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
}

impl Default for RigFile {
    fn default() -> Self {
        Self {
            baseline_mm: DEFAULT_BASELINE_MM,
            hfov_degrees: Some(DEFAULT_HFOV_DEGREES),
            focal_px: None,
            width: 80,
            height: 60,
            cx: Some(39.5),
            cy: Some(29.5),
        }
    }
}

impl RigFile {
    pub fn into_rig(self) -> Result<StereoRig> {
        let focal_px = match (self.focal_px, self.hfov_degrees) {
            (Some(f), _) => f,
            (None, Some(hfov)) => focal_from_hfov(hfov, self.width)?,
            (None, None) => return Err(Error::Config("rig needs hfov_degrees or focal_px".into())),
        };
        let rig = StereoRig {
            baseline_mm: self.baseline_mm,
            focal_px,
            cx: self.cx.unwrap_or((self.width as f64 - 1.0) / 2.0),
            cy: self.cy.unwrap_or((self.height as f64 - 1.0) / 2.0),
            image_width: self.width,
            image_height: self.height,
        };
        rig.validate()?;
        Ok(rig)
    }
}

/// Pinhole focal length in pixels: `(width / 2) / tan(hfov / 2)`.
pub fn focal_from_hfov(hfov_degrees: f64, image_width: usize) -> Result<f64> {
    if !(hfov_degrees > 0.0 && hfov_degrees < 180.0) {
        return Err(Error::Range(format!("field of view {hfov_degrees} outside (0, 180) degrees")));
    }
    Ok(image_width as f64 / 2.0 / (hfov_degrees.to_radians() / 2.0).tan())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Back-projects a left-image pixel with the given disparity.
pub fn triangulate_pixel(xl: f64, yl: f64, disparity: f64, rig: &StereoRig) -> Result<Point3D> {
    if !(disparity > 0.0) {
        return Err(Error::NonPositiveDisparity(disparity));
    }
    let z = rig.focal_baseline() / disparity;
    Ok(Point3D {
        x: (xl - rig.cx) * z / rig.focal_px,
        y: (yl - rig.cy) * z / rig.focal_px,
        z,
    })
}

pub fn triangulate(m: &RefinedMatch, rig: &StereoRig) -> Result<Point3D> {
    triangulate_pixel(m.base.left.x as f64, m.base.left.y as f64, m.disparity, rig)
}

/// Depth interval induced by a symmetric disparity error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthErrorRange {
    pub z_low: f64,
    pub z_high: f64,
    pub range_mm: f64,
}

pub fn depth_error_range(z_mm: f64, rig: &StereoRig, disparity_error_px: f64) -> Result<DepthErrorRange> {
    if !(z_mm > 0.0) || !(disparity_error_px >= 0.0) {
        return Err(Error::Range(format!(
            "need z > 0 and a non-negative disparity error, got z = {z_mm}, error = {disparity_error_px}"
        )));
    }
    let fb = rig.focal_baseline();
    let d = fb / z_mm;
    if d - disparity_error_px <= 0.0 {
        return Err(Error::Range(format!(
            "disparity error {disparity_error_px} px swallows the implied disparity {d:.4} px"
        )));
    }
    let z_low = fb / (d + disparity_error_px);
    let z_high = fb / (d - disparity_error_px);
    Ok(DepthErrorRange {
        z_low,
        z_high,
        range_mm: z_high - z_low,
    })
}

/// Writes `x_mm,y_mm,z_mm,xl,yl` rows after a header.
pub fn write_points_csv<W: Write>(mut out: W, points: &[(Point3D, usize, usize)]) -> std::io::Result<()> {
    writeln!(out, "x_mm,y_mm,z_mm,xl,yl")?;
    for (p, xl, yl) in points {
        writeln!(out, "{},{},{},{},{}", p.x, p.y, p.z, xl, yl)?;
    }
    Ok(())
}

/// Writes refined matches with their triangulated coordinates appended as
/// `x_mm,y_mm,z_mm`. Matches with non-positive disparity get empty fields.
pub fn write_triangulated_csv<W: Write>(mut out: W, matches: &[RefinedMatch], rig: &StereoRig) -> std::io::Result<()> {
    writeln!(out, "xl,yl,xr,yr,disparity,status,similarity,x_mm,y_mm,z_mm")?;
    for m in matches {
        let b = &m.base;
        write!(
            out,
            "{},{},{},{},{},{},{},",
            b.left.x,
            b.left.y,
            b.right.x,
            b.right.y,
            m.disparity,
            m.status.as_str(),
            b.similarity
        )?;
        match triangulate(m, rig) {
            Ok(p) => writeln!(out, "{},{},{}", p.x, p.y, p.z)?,
            Err(_) => writeln!(out, ",,")?,
        }
    }
    Ok(())
}
