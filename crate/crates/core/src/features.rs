//! Thresholding of the maximum-moment map into discrete features.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::phase_congruency::PhaseCongruencyResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub x: usize,
    pub y: usize,
    /// Maximum moment at the pixel.
    pub strength: f64,
    /// Axis angle (radians) of the orientation with the largest PC.
    pub orientation: f64,
}

impl Feature {
    pub fn position(&self) -> (usize, usize) {
        (self.x, self.y)
    }

    pub fn chebyshev(&self, other: &Feature) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

/// Descending strength, then `(y, x)` ascending.
fn detection_order(a: &Feature, b: &Feature) -> Ordering {
    b.strength
        .total_cmp(&a.strength)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

fn is_local_max(map: &GrayImage, x: usize, y: usize, radius: usize) -> bool {
    let v = map.get(x, y);
    let x0 = x.saturating_sub(radius);
    let y0 = y.saturating_sub(radius);
    let x1 = (x + radius).min(map.width() - 1);
    let y1 = (y + radius).min(map.height() - 1);
    (y0..=y1).all(|yy| (x0..=x1).all(|xx| map.get(xx, yy) <= v))
}

/// Every pixel with `M >= gamma`. With `nms_radius > 0` only local maxima of
/// `M` in the `(2r+1)^2` neighborhood are kept, and plateaus are thinned
/// greedily so no two survivors lie within `nms_radius` (Chebyshev).
///
/// Output is sorted by descending strength, ties by `(y, x)`.
pub fn detect_features(pc: &PhaseCongruencyResult, gamma: f64, nms_radius: usize) -> Vec<Feature> {
    let map = &pc.moment_max;
    let mut out = Vec::new();
    for y in 0..map.height() {
        for x in 0..map.width() {
            let strength = map.get(x, y);
            if strength < gamma {
                continue;
            }
            if nms_radius > 0 && !is_local_max(map, x, y, nms_radius) {
                continue;
            }
            out.push(Feature {
                x,
                y,
                strength,
                orientation: pc.dominant_orientation(x, y),
            });
        }
    }
    out.sort_by(detection_order);
    if nms_radius > 0 {
        let mut kept: Vec<Feature> = Vec::with_capacity(out.len());
        for f in out {
            if kept.iter().all(|k| k.chebyshev(&f) > nms_radius) {
                kept.push(f);
            }
        }
        out = kept;
    }
    out
}

/// Fraction of `base` features with a `perturbed` feature within Chebyshev
/// distance `tol`. An empty base yields 1.
pub fn redetection_rate(base: &[Feature], perturbed: &[Feature], tol: usize) -> f64 {
    if base.is_empty() {
        return 1.0;
    }
    let hits = if tol == 0 {
        let set: HashSet<(usize, usize)> = perturbed.iter().map(Feature::position).collect();
        base.iter().filter(|f| set.contains(&f.position())).count()
    } else {
        base.iter()
            .filter(|f| perturbed.iter().any(|p| p.chebyshev(f) <= tol))
            .count()
    };
    hits as f64 / base.len() as f64
}

/// Writes `x,y,strength,orientation` rows after a one-line header.
pub fn write_features_csv<W: Write>(mut out: W, features: &[Feature]) -> std::io::Result<()> {
    writeln!(out, "x,y,strength,orientation")?;
    for f in features {
        writeln!(out, "{},{},{},{}", f.x, f.y, f.strength, f.orientation)?;
    }
    Ok(())
}
