//! Sub-pixel refinement by phase-only correlation (POC).
//!
//! For an integer match, a `W x W` window is cut around each feature. The
//! normalized cross-power spectrum of the pair is band-limited by a centered
//! square low-pass of half-width `U = floor(lowpass_ratio * m)` (`W = 2m + 1`)
//! and inverted. Near its peak, the row of the surface through the maximum
//! follows
//!
//! ```text
//! r(x) ~ alpha * sin(V pi (x + delta) / W) / (pi (x + delta)),   V = 2U + 1
//! ```
//!
//! For a sample `p` and offset `d` this gives the linear relation
//! `v(p, d) = delta * u(p, d)` with
//!
//! ```text
//! u = r(p - d) + r(p + d) - 2 cos(V pi d / W) r(p)
//! v = 2 p cos(V pi d / W) r(p) - (p - d) r(p - d) - (p + d) r(p + d)
//! ```
//!
//! which is solved in least squares over several `(p, d)` observations. The
//! amplitude `alpha` cancels out.
//!
//! Sign convention: `r` is the standard inverse DFT of `F_l conj(F_r)`, so
//! when the right window content sits `s` pixels to the left
//! (`sub_r(k) = sub_l(k + s)`) the peak is at `x = s = -delta`, and the
//! refined disparity is `disparity_int + s`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::image::GrayImage;
use crate::matching::Match;

/// Spectrum magnitudes below this are treated as zero.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineSource {
    #[default]
    MomentMap,
    RawImage,
}

/// One `(p_offset, d)` observation: sample `p + p_offset` and its neighbors
/// `d` pixels away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct Observation {
    pub p_offset: i64,
    pub d: i64,
}

impl From<(i64, i64)> for Observation {
    fn from((p_offset, d): (i64, i64)) -> Self {
        Self { p_offset, d }
    }
}

impl From<Observation> for (i64, i64) {
    fn from(o: Observation) -> Self {
        (o.p_offset, o.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PocConfig {
    /// Side of the correlation windows (odd, >= 7).
    pub window: usize,
    pub lowpass_ratio: f64,
    pub observations: Vec<Observation>,
    /// Largest accepted correction to the integer disparity, in pixels.
    pub max_refine: f64,
    pub source: RefineSource,
}

impl Default for PocConfig {
    fn default() -> Self {
        Self {
            window: 9,
            lowpass_ratio: 0.5,
            observations: default_observations(),
            max_refine: 1.0,
            source: RefineSource::MomentMap,
        }
    }
}

/// `p - 1, p, p + 1` crossed with `d` in `{1, 2}`: six observations.
pub fn default_observations() -> Vec<Observation> {
    [(-1, 1), (0, 1), (1, 1), (-1, 2), (0, 2), (1, 2)]
        .into_iter()
        .map(Observation::from)
        .collect()
}

impl PocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 7 || self.window % 2 == 0 {
            return Err(Error::Config(format!("poc window must be odd and >= 7, got {}", self.window)));
        }
        if !(self.lowpass_ratio > 0.0 && self.lowpass_ratio <= 1.0) {
            return Err(Error::Config(format!("lowpass_ratio must lie in (0, 1], got {}", self.lowpass_ratio)));
        }
        if self.observations.is_empty() || self.observations.iter().any(|o| o.d < 1) {
            return Err(Error::Config("observations must be non-empty with d >= 1".into()));
        }
        if !(self.max_refine > 0.0) {
            return Err(Error::Config("max_refine must be > 0".into()));
        }
        Ok(())
    }
}

/// Low-pass half-width `U` for a window of side `size`.
pub fn passband_half_width(size: usize, lowpass_ratio: f64) -> usize {
    let m = (size - 1) / 2;
    (lowpass_ratio * m as f64).floor() as usize
}

/// Band-limited normalized cross-power spectrum, in FFT bin order.
#[derive(Debug, Clone)]
pub struct CrossPowerSpectrum {
    pub size: usize,
    /// Low-pass half-width `U`.
    pub half_band: usize,
    pub data: Vec<Complex64>,
}

impl CrossPowerSpectrum {
    /// Coefficient at signed frequencies `(u, v)`.
    pub fn at(&self, u: i64, v: i64) -> Complex64 {
        let n = self.size as i64;
        let (x, y) = (u.rem_euclid(n) as usize, v.rem_euclid(n) as usize);
        self.data[y * self.size + x]
    }
}

fn check_window(img: &GrayImage) -> Result<usize> {
    let (w, h) = img.dims();
    if w != h || w % 2 == 0 {
        return Err(Error::Dimension(format!("correlation windows must be square and odd, got {w}x{h}")));
    }
    Ok(w)
}

pub fn cross_power_spectrum(sub_l: &GrayImage, sub_r: &GrayImage, lowpass_ratio: f64) -> Result<CrossPowerSpectrum> {
    let size = check_window(sub_l)?;
    if sub_r.dims() != sub_l.dims() {
        return Err(Error::DimensionMismatch {
            left: sub_l.dims(),
            right: sub_r.dims(),
        });
    }
    let plan = fft::plan(size, size);
    let fl = plan.forward_real(sub_l.data());
    let fr = plan.forward_real(sub_r.data());
    let half_band = passband_half_width(size, lowpass_ratio) as i64;
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        let v = fft::signed_index(y, size);
        for x in 0..size {
            let u = fft::signed_index(x, size);
            let k = y * size + x;
            let cross = fl[k] * fr[k].conj();
            let mag = cross.norm();
            let inside = u.abs() <= half_band && v.abs() <= half_band;
            data.push(if inside && mag >= MAGNITUDE_FLOOR {
                cross / mag
            } else {
                Complex64::new(0.0, 0.0)
            });
        }
    }
    Ok(CrossPowerSpectrum {
        size,
        half_band: half_band as usize,
        data,
    })
}

/// Inverse transform of a [`CrossPowerSpectrum`] with the profile through its
/// strongest row.
#[derive(Debug, Clone)]
pub struct CorrelationSurface {
    pub size: usize,
    pub half_band: usize,
    /// Full surface, centered: entry `(x, y)` with `x, y` in `[-m, m]` is at
    /// `(y + m) * size + (x + m)`.
    pub surface: Vec<f64>,
    /// Row of the surface holding the largest `|r|`.
    pub row: i64,
    /// `r(x)` along that row, index `x + m`.
    pub r: Vec<f64>,
    pub peak_index: i64,
    pub peak_value: f64,
}

impl CorrelationSurface {
    /// Builds a surface from a single profile, mostly for synthetic checks.
    pub fn from_profile(r: Vec<f64>, half_band: usize) -> Self {
        let size = r.len();
        assert!(size % 2 == 1, "profile length must be odd");
        let m = (size / 2) as i64;
        let (peak_index, peak_value) = argmax(&r, m);
        let mut surface = vec![0.0; size * size];
        surface[(m as usize) * size..(m as usize + 1) * size].copy_from_slice(&r);
        Self {
            size,
            half_band,
            surface,
            row: 0,
            r,
            peak_index,
            peak_value,
        }
    }

    pub fn half(&self) -> i64 {
        (self.size / 2) as i64
    }

    /// `r(x)` for `x` in `[-m, m]`.
    pub fn at(&self, x: i64) -> Option<f64> {
        let m = self.half();
        (-m..=m).contains(&x).then(|| self.r[(x + m) as usize])
    }
}

/// First index of the maximum, as a centered coordinate.
fn argmax(r: &[f64], m: i64) -> (i64, f64) {
    let mut best = 0;
    for (i, v) in r.iter().enumerate() {
        if *v > r[best] {
            best = i;
        }
    }
    (best as i64 - m, r[best])
}

pub fn poc_surface(spectrum: &CrossPowerSpectrum) -> CorrelationSurface {
    let n = spectrum.size;
    let m = (n / 2) as i64;
    let mut buf = spectrum.data.clone();
    fft::plan(n, n).inverse(&mut buf);
    let mut surface = vec![0.0; n * n];
    for yy in -m..=m {
        for xx in -m..=m {
            let src = (yy.rem_euclid(n as i64) as usize) * n + xx.rem_euclid(n as i64) as usize;
            surface[((yy + m) as usize) * n + (xx + m) as usize] = buf[src].re;
        }
    }
    let row_of = |row: usize| surface[row * n..(row + 1) * n].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut best_row = m as usize;
    for row in 0..n {
        if row_of(row) > row_of(best_row) {
            best_row = row;
        }
    }
    let r = surface[best_row * n..(best_row + 1) * n].to_vec();
    let (peak_index, peak_value) = argmax(&r, m);
    CorrelationSurface {
        size: n,
        half_band: spectrum.half_band,
        surface,
        row: best_row as i64 - m,
        r,
        peak_index,
        peak_value,
    }
}

/// Least-squares estimate of the peak-model offset `delta` (the peak lies at
/// `x = -delta`).
///
/// Fails with [`Error::DegenerateSystem`] on a flat profile or vanishing
/// `sum u^2`, with [`Error::Range`] when an observation leaves the window and
/// with [`Error::OutOfRange`] when `|delta| > max_refine`.
pub fn estimate_delta(surface: &CorrelationSurface, cfg: &PocConfig) -> Result<f64> {
    let (lo, hi) = surface
        .r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo <= MAGNITUDE_FLOOR * hi.abs().max(1.0) {
        return Err(Error::DegenerateSystem);
    }
    let band = (2 * surface.half_band + 1) as f64;
    let size = surface.size as f64;
    let p = surface.peak_index;
    let (mut uv, mut uu) = (0.0, 0.0);
    for obs in &cfg.observations {
        let pi = p + obs.p_offset;
        let d = obs.d;
        let sample = |x: i64| {
            surface
                .at(x)
                .ok_or_else(|| Error::Range(format!("observation sample {x} outside the window")))
        };
        let (r_lo, r_mid, r_hi) = (sample(pi - d)?, sample(pi)?, sample(pi + d)?);
        let c = (band * PI * d as f64 / size).cos();
        let u = r_lo + r_hi - 2.0 * c * r_mid;
        let v = 2.0 * pi as f64 * c * r_mid - (pi - d) as f64 * r_lo - (pi + d) as f64 * r_hi;
        uv += u * v;
        uu += u * u;
    }
    if uu < MAGNITUDE_FLOOR {
        return Err(Error::DegenerateSystem);
    }
    let delta = uv / uu;
    if delta.abs() > cfg.max_refine {
        return Err(Error::OutOfRange(delta));
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStatus {
    Refined,
    FallbackInteger,
}

impl RefineStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RefineStatus::Refined => "refined",
            RefineStatus::FallbackInteger => "fallback_integer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedMatch {
    pub base: Match,
    /// Correction added to the integer disparity.
    pub delta_x: f64,
    pub disparity: f64,
    pub status: RefineStatus,
}

impl RefinedMatch {
    fn fallback(base: Match) -> Self {
        Self {
            base,
            delta_x: 0.0,
            disparity: base.disparity_int as f64,
            status: RefineStatus::FallbackInteger,
        }
    }
}

/// Refines one integer match on the given maps (moment maps or raw images,
/// per `cfg.source`; the caller passes the matching pair).
pub fn refine_match(m: &Match, map_l: &GrayImage, map_r: &GrayImage, cfg: &PocConfig) -> RefinedMatch {
    let windows = map_l
        .window(m.left.x, m.left.y, cfg.window)
        .zip(map_r.window(m.right.x, m.right.y, cfg.window));
    let Some((sub_l, sub_r)) = windows else {
        return RefinedMatch::fallback(*m);
    };
    let delta = cross_power_spectrum(&sub_l, &sub_r, cfg.lowpass_ratio)
        .map(|spectrum| poc_surface(&spectrum))
        .and_then(|surface| estimate_delta(&surface, cfg));
    match delta {
        Ok(delta) => {
            let shift = -delta;
            RefinedMatch {
                base: *m,
                delta_x: shift,
                disparity: m.disparity_int as f64 + shift,
                status: RefineStatus::Refined,
            }
        }
        Err(_) => RefinedMatch::fallback(*m),
    }
}

/// Refines every match; order is preserved.
pub fn refine_matches(matches: &[Match], map_l: &GrayImage, map_r: &GrayImage, cfg: &PocConfig) -> Vec<RefinedMatch> {
    matches.par_iter().map(|m| refine_match(m, map_l, map_r, cfg)).collect()
}

/// Writes `xl,yl,xr,yr,disparity,status,similarity` rows after a header.
pub fn write_refined_csv<W: Write>(mut out: W, matches: &[RefinedMatch]) -> std::io::Result<()> {
    writeln!(out, "xl,yl,xr,yr,disparity,status,similarity")?;
    for m in matches {
        let b = &m.base;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.left.x,
            b.left.y,
            b.right.x,
            b.right.y,
            m.disparity,
            m.status.as_str(),
            b.similarity
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Feature;
    use crate::image::{circular_shift, subpixel_shift, ShiftSpec};

    /// Direct evaluation of the sinc peak model.
    pub(crate) fn model_profile(size: usize, half_band: usize, delta: f64, alpha: f64) -> Vec<f64> {
        let m = (size / 2) as i64;
        let band = (2 * half_band + 1) as f64;
        (-m..=m)
            .map(|x| {
                let t = x as f64 + delta;
                if t == 0.0 {
                    alpha * band / size as f64
                } else {
                    alpha * (band * PI * t / size as f64).sin() / (PI * t)
                }
            })
            .collect()
    }

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            0.5 + 0.2 * (fx * 0.7).sin() * (fy * 0.45).cos() + 0.15 * ((fx + 2.0 * fy) * 0.31).sin()
                + 0.05 * ((x * 13 + y * 7) % 5) as f64
        })
    }

    fn feature(x: usize, y: usize) -> Feature {
        Feature { x, y, strength: 1.0, orientation: 0.0 }
    }

    #[test]
    fn identical_windows_give_unit_zero_phase_spectrum() {
        let sub = texture(9, 9);
        let spec = cross_power_spectrum(&sub, &sub, 0.5).unwrap();
        assert_eq!(spec.half_band, 2);
        for v in -4..=4i64 {
            for u in -4..=4i64 {
                let c = spec.at(u, v);
                if u.abs() <= 2 && v.abs() <= 2 {
                    assert!((c.re - 1.0).abs() < 1e-12 && c.im.abs() < 1e-12, "({u},{v}) {c}");
                } else {
                    assert_eq!(c, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn shifted_window_phase_plane() {
        let big = texture(9, 9);
        // sub_r(k) = sub_l(k + 2)
        let sub_r = circular_shift(&big, -2, 0);
        let spec = cross_power_spectrum(&big, &sub_r, 0.5).unwrap();
        for v in -2..=2i64 {
            for u in -2..=2i64 {
                let expected = Complex64::from_polar(1.0, -2.0 * PI * 2.0 * u as f64 / 9.0);
                assert!((spec.at(u, v) - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_window_gives_zero_spectrum() {
        let spec = cross_power_spectrum(&texture(9, 9), &GrayImage::zeros(9, 9), 0.5).unwrap();
        assert!(spec.data.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        let surface = poc_surface(&spec);
        assert!(matches!(estimate_delta(&surface, &PocConfig::default()), Err(Error::DegenerateSystem)));
    }

    #[test]
    fn rejects_bad_window_shapes() {
        assert!(matches!(cross_power_spectrum(&texture(8, 8), &texture(8, 8), 0.5), Err(Error::Dimension(_))));
        assert!(matches!(cross_power_spectrum(&texture(9, 7), &texture(9, 7), 0.5), Err(Error::Dimension(_))));
        assert!(matches!(
            cross_power_spectrum(&texture(9, 9), &texture(7, 7), 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identical_windows_peak_height() {
        // oracle: direct summation of the inverse DFT over the V x V passband
        let sub = texture(9, 9);
        for ratio in [0.5, 1.0] {
            let surface = poc_surface(&cross_power_spectrum(&sub, &sub, ratio).unwrap());
            let u = passband_half_width(9, ratio) as i64;
            let mut direct = 0.0;
            for _ in -u..=u {
                for _ in -u..=u {
                    direct += 1.0;
                }
            }
            direct /= 81.0;
            assert_eq!(surface.peak_index, 0);
            assert!((surface.peak_value - direct).abs() < 1e-12);
            let band = (2 * u + 1) as f64;
            assert!((surface.peak_value - (band / 9.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_shift_peak_index() {
        let sub_l = texture(9, 9);
        let sub_r = circular_shift(&sub_l, -3, 0);
        let surface = poc_surface(&cross_power_spectrum(&sub_l, &sub_r, 1.0).unwrap());
        assert_eq!(surface.peak_index, 3);
        assert_eq!(surface.row, 0);
        assert!(surface.surface.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn model_profiles_are_recovered() {
        let cfg = PocConfig { lowpass_ratio: 1.0, ..Default::default() };
        let surface = CorrelationSurface::from_profile(model_profile(9, 4, 0.3, 0.8), 4);
        assert!((estimate_delta(&surface, &cfg).unwrap() - 0.3).abs() < 1e-9);
        let surface = CorrelationSurface::from_profile(model_profile(9, 4, 0.0, 0.8), 4);
        assert!(estimate_delta(&surface, &cfg).unwrap().abs() < 1e-12);
        // narrower passband, same identity
        let surface = CorrelationSurface::from_profile(model_profile(13, 3, -0.41, 0.5), 3);
        assert!((estimate_delta(&surface, &cfg).unwrap() + 0.41).abs() < 1e-9);
    }

    #[test]
    fn flat_profile_is_degenerate() {
        let surface = CorrelationSurface::from_profile(vec![0.2; 9], 2);
        assert!(matches!(estimate_delta(&surface, &PocConfig::default()), Err(Error::DegenerateSystem)));
    }

    #[test]
    fn large_offsets_are_rejected() {
        let cfg = PocConfig { lowpass_ratio: 1.0, ..Default::default() };
        let surface = CorrelationSurface::from_profile(model_profile(9, 4, 1.4, 0.8), 4);
        assert!(matches!(estimate_delta(&surface, &cfg), Err(Error::OutOfRange(_))));
        // peak too close to the window edge for the observations
        let surface = CorrelationSurface::from_profile(model_profile(9, 4, -2.9, 0.8), 4);
        assert!(matches!(estimate_delta(&surface, &cfg), Err(Error::Range(_))));
    }

    #[test]
    fn refine_zero_shift() {
        let img = texture(40, 30);
        let m = Match { left: feature(20, 15), right: feature(20, 15), disparity_int: 0, similarity: 1.0 };
        let r = refine_match(&m, &img, &img, &PocConfig::default());
        assert_eq!(r.status, RefineStatus::Refined);
        assert!(r.disparity.abs() < 1e-6);
    }

    #[test]
    fn refine_recovers_fractional_shift() {
        let right = texture(48, 32);
        let left = subpixel_shift(&right, ShiftSpec::horizontal(4.25)).unwrap();
        let m = Match { left: feature(24, 16), right: feature(20, 16), disparity_int: 4, similarity: 1.0 };
        let r = refine_match(&m, &left, &right, &PocConfig::default());
        assert_eq!(r.status, RefineStatus::Refined);
        assert!((r.disparity - 4.25).abs() < 0.1, "{}", r.disparity);
        assert!((r.delta_x - 0.25).abs() < 0.1);
    }

    #[test]
    fn refine_antisymmetry() {
        let right = texture(48, 32);
        let left = subpixel_shift(&right, ShiftSpec::horizontal(3.4)).unwrap();
        let m = Match { left: feature(24, 16), right: feature(21, 16), disparity_int: 3, similarity: 1.0 };
        let swapped = Match { left: m.right, right: m.left, disparity_int: -3, similarity: 1.0 };
        let a = refine_match(&m, &left, &right, &PocConfig::default());
        let b = refine_match(&swapped, &right, &left, &PocConfig::default());
        assert_eq!(a.status, RefineStatus::Refined);
        assert!((a.delta_x + b.delta_x).abs() < 1e-8);
    }

    #[test]
    fn near_border_falls_back() {
        let img = texture(40, 30);
        let m = Match { left: feature(2, 15), right: feature(2, 15), disparity_int: 0, similarity: 1.0 };
        let r = refine_match(&m, &img, &img, &PocConfig::default());
        assert_eq!(r.status, RefineStatus::FallbackInteger);
        assert_eq!(r.delta_x, 0.0);
        assert_eq!(r.disparity, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PocConfig::default().validate().is_ok());
        assert!(PocConfig { window: 5, ..Default::default() }.validate().is_err());
        assert!(PocConfig { window: 10, ..Default::default() }.validate().is_err());
        assert!(PocConfig { lowpass_ratio: 0.0, ..Default::default() }.validate().is_err());
        assert!(PocConfig { observations: vec![], ..Default::default() }.validate().is_err());
        assert!(PocConfig { max_refine: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let m = Match { left: feature(7, 2), right: feature(4, 2), disparity_int: 3, similarity: 0.9 };
        let r = RefinedMatch { base: m, delta_x: 0.25, disparity: 3.25, status: RefineStatus::Refined };
        let mut buf = Vec::new();
        write_refined_csv(&mut buf, &[r, RefinedMatch::fallback(m)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "xl,yl,xr,yr,disparity,status,similarity\n7,2,4,2,3.25,refined,0.9\n7,2,4,2,3,fallback_integer,0.9\n"
        );
    }
}
