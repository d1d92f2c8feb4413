//! Integer-pixel matching of features along rectified rows.
//!
//! Candidates are scored with the Lades similarity (normalized inner product)
//! of moment-map windows. Constraints are then applied in a fixed order:
//! similarity threshold, left-right consistency, greedy uniqueness, ordering
//! repair and finally a continuity check against the median disparity of
//! same-row neighbors.
//!
//! Disparity is `x_left - x_right`, non-negative for a parallel rig looking
//! at finite depth.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::image::GrayImage;

/// Same-row neighbors closer than this (in x, either image) take part in the
/// continuity check.
pub const CONTINUITY_NEIGHBORHOOD: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Side of the square similarity window (odd).
    pub window: usize,
    pub disparity_min: i64,
    pub disparity_max: i64,
    pub min_similarity: f64,
    pub continuity_max_jump: i64,
    /// Allowed vertical offset between matched features.
    pub row_tolerance: usize,
    /// Largest accepted difference between feature orientations (radians,
    /// modulo pi). Defaults to one orientation step of the default bank.
    pub max_orientation_diff: f64,
    /// Features closer than this to any image edge are left unmatched: the
    /// periodic filtering behind the moment maps is unreliable there.
    pub border_margin: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            window: 5,
            disparity_min: 0,
            disparity_max: 30,
            min_similarity: 0.8,
            continuity_max_jump: 3,
            row_tolerance: 0,
            max_orientation_diff: PI / 6.0,
            border_margin: 5,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config(format!("match window must be odd and >= 3, got {}", self.window)));
        }
        if self.disparity_min > self.disparity_max {
            return Err(Error::Config(format!(
                "disparity range [{}, {}] is empty",
                self.disparity_min, self.disparity_max
            )));
        }
        if !(self.min_similarity > 0.0 && self.min_similarity <= 1.0) {
            return Err(Error::Config(format!(
                "min_similarity must lie in (0, 1], got {}",
                self.min_similarity
            )));
        }
        if self.continuity_max_jump < 0 || !(self.max_orientation_diff >= 0.0) {
            return Err(Error::Config("continuity jump and orientation gate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub left: Feature,
    pub right: Feature,
    pub disparity_int: i64,
    pub similarity: f64,
}

/// `sum(l * r) / sqrt(sum(l^2) * sum(r^2))`, or 0 when either patch has no
/// energy.
pub fn lades_similarity(patch_l: &GrayImage, patch_r: &GrayImage) -> Result<f64> {
    if patch_l.dims() != patch_r.dims() {
        return Err(Error::DimensionMismatch {
            left: patch_l.dims(),
            right: patch_r.dims(),
        });
    }
    Ok(lades(patch_l.data().iter().copied().zip(patch_r.data().iter().copied())))
}

fn lades(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut lr, mut ll, mut rr) = (0.0, 0.0, 0.0);
    for (l, r) in pairs {
        lr += l * r;
        ll += l * l;
        rr += r * r;
    }
    if ll == 0.0 || rr == 0.0 {
        0.0
    } else {
        lr / (ll * rr).sqrt()
    }
}

/// Similarity of the windows centered on two pixels; caller guarantees both
/// windows fit.
fn window_similarity(map_l: &GrayImage, l: (usize, usize), map_r: &GrayImage, r: (usize, usize), half: usize) -> f64 {
    let size = 2 * half + 1;
    let pairs = (0..size).flat_map(move |dy| {
        (0..size).map(move |dx| {
            (
                map_l.get(l.0 + dx - half, l.1 + dy - half),
                map_r.get(r.0 + dx - half, r.1 + dy - half),
            )
        })
    });
    lades(pairs)
}

fn orientation_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    target: usize,
    similarity: f64,
    disparity: i64,
    dy: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.disparity.cmp(&b.disparity))
        .then(a.dy.cmp(&b.dy))
}

/// Best admissible target for each source feature. `source_is_left` fixes the
/// disparity sign.
fn best_candidates(
    sources: &[Feature],
    targets: &[Feature],
    source_map: &GrayImage,
    target_map: &GrayImage,
    rows: &BTreeMap<usize, Vec<usize>>,
    cfg: &MatchConfig,
    source_is_left: bool,
) -> Vec<Option<Candidate>> {
    let half = cfg.window / 2;
    let (w, h) = source_map.dims();
    let interior = |f: &Feature| {
        f.x >= cfg.border_margin && f.y >= cfg.border_margin && f.x + cfg.border_margin < w && f.y + cfg.border_margin < h
    };
    sources
        .par_iter()
        .map(|s| {
            if !interior(s) || !source_map.window_fits(s.x, s.y, cfg.window) {
                return None;
            }
            let y0 = s.y.saturating_sub(cfg.row_tolerance);
            let y1 = s.y + cfg.row_tolerance;
            let mut best: Option<Candidate> = None;
            for (_, idxs) in rows.range(y0..=y1) {
                for &t in idxs {
                    let tf = &targets[t];
                    let disparity = if source_is_left {
                        s.x as i64 - tf.x as i64
                    } else {
                        tf.x as i64 - s.x as i64
                    };
                    if disparity < cfg.disparity_min || disparity > cfg.disparity_max {
                        continue;
                    }
                    if orientation_gap(s.orientation, tf.orientation) > cfg.max_orientation_diff + 1e-9 {
                        continue;
                    }
                    if !interior(tf) || !target_map.window_fits(tf.x, tf.y, cfg.window) {
                        continue;
                    }
                    let similarity = if source_is_left {
                        window_similarity(source_map, (s.x, s.y), target_map, (tf.x, tf.y), half)
                    } else {
                        window_similarity(target_map, (tf.x, tf.y), source_map, (s.x, s.y), half)
                    };
                    let cand = Candidate {
                        target: t,
                        similarity,
                        disparity,
                        dy: s.y.abs_diff(tf.y),
                    };
                    if best.is_none_or(|b| candidate_order(&cand, &b) == Ordering::Less) {
                        best = Some(cand);
                    }
                }
            }
            best.filter(|b| b.similarity >= cfg.min_similarity)
        })
        .collect()
}

fn index_rows(feats: &[Feature]) -> BTreeMap<usize, Vec<usize>> {
    let mut rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, f) in feats.iter().enumerate() {
        rows.entry(f.y).or_default().push(i);
    }
    rows
}

fn median_i64(values: &mut [i64]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2]) as f64
    }
}

/// Matches left features to right features under the configured constraints.
/// Output is sorted by `(y, x)` of the left feature.
pub fn match_features(
    left_feats: &[Feature],
    right_feats: &[Feature],
    map_l: &GrayImage,
    map_r: &GrayImage,
    cfg: &MatchConfig,
) -> Result<Vec<Match>> {
    cfg.validate()?;
    if map_l.dims() != map_r.dims() {
        return Err(Error::DimensionMismatch {
            left: map_l.dims(),
            right: map_r.dims(),
        });
    }
    let right_rows = index_rows(right_feats);
    let left_rows = index_rows(left_feats);
    let forward = best_candidates(left_feats, right_feats, map_l, map_r, &right_rows, cfg, true);
    let backward = best_candidates(right_feats, left_feats, map_r, map_l, &left_rows, cfg, false);

    // left-right consistency
    let mut pairs: Vec<(usize, usize, f64, i64)> = forward
        .iter()
        .enumerate()
        .filter_map(|(l, c)| {
            let c = c.as_ref()?;
            match backward[c.target] {
                Some(back) if back.target == l => Some((l, c.target, c.similarity, c.disparity)),
                _ => None,
            }
        })
        .collect();

    // greedy uniqueness, strongest first
    pairs.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(left_feats[a.0].y.cmp(&left_feats[b.0].y))
            .then(left_feats[a.0].x.cmp(&left_feats[b.0].x))
    });
    let mut used_l = HashSet::new();
    let mut used_r = HashSet::new();
    pairs.retain(|&(l, r, _, _)| used_l.insert(l) && used_r.insert(r));

    // ordering repair per left row, in the same strongest-first order
    let mut by_row: BTreeMap<usize, Vec<(usize, usize, f64, i64)>> = BTreeMap::new();
    for p in pairs {
        let row = by_row.entry(left_feats[p.0].y).or_default();
        let (xl, xr) = (left_feats[p.0].x as i64, right_feats[p.1].x as i64);
        let consistent = row.iter().all(|q| {
            let (ql, qr) = (left_feats[q.0].x as i64, right_feats[q.1].x as i64);
            (xl - ql).signum() == (xr - qr).signum()
        });
        if consistent {
            row.push(p);
        }
    }

    // continuity against same-row neighbors
    let mut out = Vec::new();
    for row in by_row.values() {
        for p in row {
            let (xl, xr) = (left_feats[p.0].x, right_feats[p.1].x);
            let mut neighbors: Vec<i64> = row
                .iter()
                .filter(|q| q.0 != p.0)
                .filter(|q| {
                    left_feats[q.0].x.abs_diff(xl) <= CONTINUITY_NEIGHBORHOOD
                        || right_feats[q.1].x.abs_diff(xr) <= CONTINUITY_NEIGHBORHOOD
                })
                .map(|q| q.3)
                .collect();
            if !neighbors.is_empty() {
                let med = median_i64(&mut neighbors);
                if (p.3 as f64 - med).abs() > cfg.continuity_max_jump as f64 {
                    continue;
                }
            }
            out.push(Match {
                left: left_feats[p.0],
                right: right_feats[p.1],
                disparity_int: p.3,
                similarity: p.2,
            });
        }
    }
    out.sort_by(|a, b| a.left.y.cmp(&b.left.y).then(a.left.x.cmp(&b.left.x)));
    Ok(out)
}

/// Writes `xl,yl,xr,yr,disparity_int,similarity` rows after a header.
pub fn write_matches_csv<W: Write>(mut out: W, matches: &[Match]) -> std::io::Result<()> {
    writeln!(out, "xl,yl,xr,yr,disparity_int,similarity")?;
    for m in matches {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.left.x, m.left.y, m.right.x, m.right.y, m.disparity_int, m.similarity
        )?;
    }
    Ok(())
}
