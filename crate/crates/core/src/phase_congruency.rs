//! Phase congruency and its orientation moments.
//!
//! Every scale uses a radial log-Gabor transfer function restricted to an
//! orientation sector by an angular Gaussian. The even response is the real
//! output of that filter; the odd response applies the Riesz transform
//! projected on the sector axis, `-i (u cos(theta) + v sin(theta)) / |w|`, on
//! top of it. Both are obtained from one complex inverse FFT since the
//! combined transfer function is `G (1 + R_theta)`.
//!
//! Per orientation, phase congruency is
//!
//! ```text
//! PC = W * max(E - T, 0) / (sum_n A_n + eps),   E = |(sum e_n, sum o_n)|
//! ```
//!
//! with `W` the sigmoid frequency-spread weight and `T` a Rayleigh noise
//! threshold estimated from the finest scale. The orientation maps are then
//! combined into the principal moments `M >= m >= 0` of
//! `[a, b/2; b/2, c]`, `a = sum (PC cos)^2`, `b = 2 sum (PC cos)(PC sin)`,
//! `c = sum (PC sin)^2`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::image::{load_pgm, save_pgm, BitDepth, GrayImage};

/// Filter bank and noise model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcConfig {
    pub n_scales: usize,
    pub n_orientations: usize,
    /// Wavelength of the finest scale, in pixels.
    pub min_wavelength: f64,
    /// Wavelength ratio between successive scales.
    pub scale_mult: f64,
    /// Log-Gabor bandwidth: ratio of the Gaussian std to the center frequency.
    pub sigma_on_f: f64,
    /// Number of noise standard deviations above the mean used for `T`.
    pub noise_k: f64,
    pub epsilon: f64,
    pub weighting_cutoff: f64,
    pub weighting_gain: f64,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            n_scales: 4,
            n_orientations: 6,
            min_wavelength: 3.0,
            scale_mult: 2.1,
            sigma_on_f: 0.55,
            noise_k: 2.0,
            epsilon: 1e-3,
            weighting_cutoff: 0.4,
            weighting_gain: 10.0,
        }
    }
}

impl PcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("phase congruency: {msg}")));
        if self.n_scales < 2 {
            return bad("n_scales must be >= 2");
        }
        if self.n_orientations < 3 {
            return bad("n_orientations must be >= 3");
        }
        if !(self.min_wavelength >= 2.0) {
            return bad("min_wavelength must be >= 2");
        }
        if !(self.scale_mult > 1.0) {
            return bad("scale_mult must be > 1");
        }
        if !(self.sigma_on_f > 0.0 && self.sigma_on_f < 1.0) {
            return bad("sigma_on_f must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.noise_k >= 0.0 && self.weighting_gain.is_finite() && self.weighting_cutoff.is_finite()) {
            return bad("noise_k must be >= 0 and weighting parameters finite");
        }
        Ok(())
    }

    /// Axis angle of orientation `k`, in `[0, pi)`.
    pub fn orientation_angle(&self, k: usize) -> f64 {
        k as f64 * PI / self.n_orientations as f64
    }

    /// Center frequency (cycles/pixel) of scale `s` (0 = finest).
    pub fn center_frequency(&self, s: usize) -> f64 {
        1.0 / (self.min_wavelength * self.scale_mult.powi(s as i32))
    }

    /// Standard deviation of the angular Gaussian.
    pub fn angular_sigma(&self) -> f64 {
        PI / (2.0 * self.n_orientations as f64) * 1.5
    }
}

/// Real frequency-domain transfer functions in FFT bin order, one per
/// `(scale, orientation)`. DC and, on even-length axes, the Nyquist bins are
/// zero so that even and odd outputs are exactly real.
#[derive(Debug, Clone)]
pub struct FilterBank {
    width: usize,
    height: usize,
    n_scales: usize,
    n_orientations: usize,
    filters: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn n_scales(&self) -> usize {
        self.n_scales
    }

    pub fn n_orientations(&self) -> usize {
        self.n_orientations
    }

    /// Transfer function of `(scale, orientation)`, row-major over `(v, u)`
    /// bins in FFT order (bin 0 is DC).
    pub fn filter(&self, scale: usize, orientation: usize) -> &[f64] {
        &self.filters[scale * self.n_orientations + orientation]
    }
}

/// Radial log-Gabor factor at `radius` for center frequency `f0`.
pub fn log_gabor_radial(radius: f64, f0: f64, sigma_on_f: f64) -> f64 {
    if radius == 0.0 {
        return 0.0;
    }
    let l = (radius / f0).ln();
    let s = sigma_on_f.ln();
    (-(l * l) / (2.0 * s * s)).exp()
}

/// Distance between frequency angle `phi` and axis `theta`, modulo pi.
fn axis_distance(phi: f64, theta: f64) -> f64 {
    let d = 2.0 * (phi - theta);
    (d.sin().atan2(d.cos()) / 2.0).abs()
}

pub fn log_gabor_filter_bank(width: usize, height: usize, cfg: &PcConfig) -> Result<FilterBank> {
    cfg.validate()?;
    if width < 8 || height < 8 {
        return Err(Error::Dimension(format!("{width}x{height} is smaller than 8x8")));
    }
    let sigma_theta = cfg.angular_sigma();
    let mut filters = Vec::with_capacity(cfg.n_scales * cfg.n_orientations);
    for s in 0..cfg.n_scales {
        let f0 = cfg.center_frequency(s);
        for o in 0..cfg.n_orientations {
            let theta = cfg.orientation_angle(o);
            let mut h = Vec::with_capacity(width * height);
            for y in 0..height {
                let v = fft::frequency(y, height);
                for x in 0..width {
                    let u = fft::frequency(x, width);
                    let radius = u.hypot(v);
                    if radius == 0.0 || u == -0.5 || v == -0.5 {
                        h.push(0.0);
                        continue;
                    }
                    let d = axis_distance(v.atan2(u), theta);
                    let angular = (-(d * d) / (2.0 * sigma_theta * sigma_theta)).exp();
                    h.push(log_gabor_radial(radius, f0, cfg.sigma_on_f) * angular);
                }
            }
            filters.push(h);
        }
    }
    Ok(FilterBank {
        width,
        height,
        n_scales: cfg.n_scales,
        n_orientations: cfg.n_orientations,
        filters,
    })
}

/// Projected Riesz multiplier `(u cos(theta) + v sin(theta)) / |w|` (the
/// factor `-i` is applied by the caller), zero at DC.
pub fn riesz_projection(width: usize, height: usize, theta: f64) -> Vec<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = fft::frequency(y, height);
        for x in 0..width {
            let u = fft::frequency(x, width);
            let r = u.hypot(v);
            out.push(if r == 0.0 { 0.0 } else { (u * c + v * s) / r });
        }
    }
    out
}

/// Even and odd filter outputs for every `(scale, orientation)`.
#[derive(Debug, Clone)]
pub struct OrientedResponses {
    pub n_scales: usize,
    pub n_orientations: usize,
    even: Vec<GrayImage>,
    odd: Vec<GrayImage>,
}

impl OrientedResponses {
    pub fn even(&self, scale: usize, orientation: usize) -> &GrayImage {
        &self.even[scale * self.n_orientations + orientation]
    }

    pub fn odd(&self, scale: usize, orientation: usize) -> &GrayImage {
        &self.odd[scale * self.n_orientations + orientation]
    }

    /// Local amplitude `sqrt(e^2 + o^2)`.
    pub fn amplitude(&self, scale: usize, orientation: usize) -> GrayImage {
        let e = self.even(scale, orientation);
        let o = self.odd(scale, orientation);
        let data = e.data().iter().zip(o.data()).map(|(a, b)| a.hypot(*b)).collect();
        GrayImage::new(e.width(), e.height(), data).expect("finite responses")
    }
}

/// `(even, odd)` for each scale of one orientation.
fn orientation_stack(
    spectrum: &[Complex64],
    bank: &FilterBank,
    riesz: &[f64],
    orientation: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (w, h) = bank.dims();
    let plan = fft::plan(w, h);
    (0..bank.n_scales)
        .map(|s| {
            let filter = bank.filter(s, orientation);
            let mut buf: Vec<Complex64> = spectrum
                .iter()
                .zip(filter)
                .zip(riesz)
                .map(|((f, g), r)| f * (g * (1.0 + r)))
                .collect();
            plan.inverse(&mut buf);
            buf.iter().map(|c| (c.re, c.im)).unzip()
        })
        .collect()
}

pub fn oriented_responses(img: &GrayImage, cfg: &PcConfig) -> Result<OrientedResponses> {
    let (w, h) = img.dims();
    let bank = log_gabor_filter_bank(w, h, cfg)?;
    let spectrum = fft::plan(w, h).forward_real(img.data());
    let per_orientation: Vec<_> = (0..cfg.n_orientations)
        .into_par_iter()
        .map(|o| {
            let riesz = riesz_projection(w, h, cfg.orientation_angle(o));
            orientation_stack(&spectrum, &bank, &riesz, o)
        })
        .collect();
    let n = cfg.n_scales * cfg.n_orientations;
    let mut even = vec![None; n];
    let mut odd = vec![None; n];
    for (o, stack) in per_orientation.into_iter().enumerate() {
        for (s, (e, od)) in stack.into_iter().enumerate() {
            even[s * cfg.n_orientations + o] = Some(GrayImage::new(w, h, e)?);
            odd[s * cfg.n_orientations + o] = Some(GrayImage::new(w, h, od)?);
        }
    }
    Ok(OrientedResponses {
        n_scales: cfg.n_scales,
        n_orientations: cfg.n_orientations,
        even: even.into_iter().map(Option::unwrap).collect(),
        odd: odd.into_iter().map(Option::unwrap).collect(),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Noise threshold `T` from the finest-scale amplitudes: Rayleigh mode from
/// the median, accumulated over scales assuming amplitudes fall by
/// `1/scale_mult` per scale, then `mean + k * std`.
pub fn noise_threshold(finest_amplitude: &[f64], cfg: &PcConfig) -> f64 {
    let mode = median(finest_amplitude) / 4f64.ln().sqrt();
    let ratio = 1.0 / cfg.scale_mult;
    let total = mode * (1.0 - ratio.powi(cfg.n_scales as i32)) / (1.0 - ratio);
    let mean = total * (PI / 2.0).sqrt();
    let std = total * ((4.0 - PI) / 2.0).sqrt();
    mean + cfg.noise_k * std
}

/// Output of [`compute_phase_congruency`].
#[derive(Debug, Clone)]
pub struct PhaseCongruencyResult {
    pub pc_by_orientation: Vec<GrayImage>,
    /// Maximum moment `M`.
    pub moment_max: GrayImage,
    /// Minimum moment `m`.
    pub moment_min: GrayImage,
    /// Noise threshold used for each orientation.
    pub noise_thresholds: Vec<f64>,
    pub config: PcConfig,
}

impl PhaseCongruencyResult {
    pub fn dims(&self) -> (usize, usize) {
        self.moment_max.dims()
    }

    /// Angle of the orientation with the largest PC at `(x, y)`; the first
    /// one wins ties.
    pub fn dominant_orientation(&self, x: usize, y: usize) -> f64 {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (k, map) in self.pc_by_orientation.iter().enumerate() {
            let v = map.get(x, y);
            if v > best_val {
                best_val = v;
                best = k;
            }
        }
        self.config.orientation_angle(best)
    }
}

pub fn compute_phase_congruency(img: &GrayImage, cfg: &PcConfig) -> Result<PhaseCongruencyResult> {
    let (w, h) = img.dims();
    let bank = log_gabor_filter_bank(w, h, cfg)?;
    let spectrum = fft::plan(w, h).forward_real(img.data());

    let per_orientation: Vec<(Vec<f64>, f64)> = (0..cfg.n_orientations)
        .into_par_iter()
        .map(|o| {
            let riesz = riesz_projection(w, h, cfg.orientation_angle(o));
            let stack = orientation_stack(&spectrum, &bank, &riesz, o);
            orientation_pc(&stack, cfg)
        })
        .collect();

    let mut a = vec![0.0; w * h];
    let mut b = vec![0.0; w * h];
    let mut c = vec![0.0; w * h];
    for (o, (pc, _)) in per_orientation.iter().enumerate() {
        let theta = cfg.orientation_angle(o);
        let (ct, st) = (theta.cos(), theta.sin());
        for i in 0..w * h {
            let px = pc[i] * ct;
            let py = pc[i] * st;
            a[i] += px * px;
            b[i] += 2.0 * px * py;
            c[i] += py * py;
        }
    }
    let mut moment_max = Vec::with_capacity(w * h);
    let mut moment_min = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let root = b[i].hypot(a[i] - c[i]);
        moment_max.push(0.5 * (c[i] + a[i] + root));
        moment_min.push((0.5 * (c[i] + a[i] - root)).max(0.0));
    }

    let mut pc_by_orientation = Vec::with_capacity(cfg.n_orientations);
    let mut noise_thresholds = Vec::with_capacity(cfg.n_orientations);
    for (pc, t) in per_orientation {
        pc_by_orientation.push(GrayImage::new(w, h, pc)?);
        noise_thresholds.push(t);
    }
    Ok(PhaseCongruencyResult {
        pc_by_orientation,
        moment_max: GrayImage::new(w, h, moment_max)?,
        moment_min: GrayImage::new(w, h, moment_min)?,
        noise_thresholds,
        config: cfg.clone(),
    })
}

fn orientation_pc(stack: &[(Vec<f64>, Vec<f64>)], cfg: &PcConfig) -> (Vec<f64>, f64) {
    let n = stack[0].0.len();
    let finest: Vec<f64> = stack[0].0.iter().zip(&stack[0].1).map(|(e, o)| e.hypot(*o)).collect();
    let threshold = noise_threshold(&finest, cfg);

    let mut pc = Vec::with_capacity(n);
    for i in 0..n {
        let (mut sum_e, mut sum_o, mut sum_a, mut max_a) = (0.0, 0.0, 0.0, 0.0f64);
        for (even, odd) in stack {
            let amp = even[i].hypot(odd[i]);
            sum_e += even[i];
            sum_o += odd[i];
            sum_a += amp;
            max_a = max_a.max(amp);
        }
        // sum of A_n (|cos(phi_n - mean)| - |sin(phi_n - mean)|), mean phase
        // taken from the summed response vector
        let norm = sum_e.hypot(sum_o);
        let energy = if norm > 0.0 {
            let (ce, co) = (sum_e / norm, sum_o / norm);
            stack
                .iter()
                .map(|(even, odd)| (even[i] * ce + odd[i] * co).abs() - (even[i] * co - odd[i] * ce).abs())
                .sum::<f64>()
        } else {
            0.0
        };
        let spread = sum_a / (max_a + cfg.epsilon) / cfg.n_scales as f64;
        let weight = 1.0 / (1.0 + (cfg.weighting_gain * (cfg.weighting_cutoff - spread)).exp());
        pc.push(weight * (energy - threshold).max(0.0) / (sum_a + cfg.epsilon));
    }
    (pc, threshold)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes a moment map as a 16-bit PGM normalized by its own maximum, with
/// the maximum stored in `<path>.json` as `{"scale": max}`.
pub fn save_moment_map(map: &GrayImage, path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    let scale = map.max().max(0.0);
    let normalized = if scale > 0.0 {
        map.map(|v| v / scale)
    } else {
        map.map(|_| 0.0)
    };
    save_pgm(&normalized, path, BitDepth::Sixteen)?;
    let sidecar = sidecar_path(path);
    let body = serde_json::to_string(&serde_json::json!({ "scale": scale }))?;
    std::fs::write(&sidecar, body).map_err(|e| Error::io(sidecar, e))?;
    Ok(scale)
}

/// Inverse of [`save_moment_map`].
pub fn load_moment_map(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    #[derive(Deserialize)]
    struct Sidecar {
        scale: f64,
    }
    let Sidecar { scale } = serde_json::from_str(&text)?;
    Ok(load_pgm(path)?.map(|v| v * scale))
}
