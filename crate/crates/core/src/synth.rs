//! Deterministic thermal-like test scenes: smooth warm silhouettes over a
//! cool, slowly varying background, optically blurred and with sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::fft;
use crate::image::{subpixel_shift, GrayImage, ShiftSpec};

/// Appearance parameters of [`thermal_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneStyle {
    /// Gaussian blur applied to the rendered scene, in pixels.
    pub blur_sigma: f64,
    /// Standard deviation of the additive sensor noise.
    pub noise_sigma: f64,
    pub people: usize,
    pub objects: usize,
}

impl Default for SceneStyle {
    fn default() -> Self {
        Self {
            blur_sigma: 0.7,
            noise_sigma: 0.02,
            people: 2,
            objects: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

struct Layer {
    shape: Shape,
    level: f64,
    /// Vertical temperature gradient across the layer.
    tilt: f64,
}

fn person(rng: &mut ChaCha8Rng, w: f64, h: f64, layers: &mut Vec<Layer>) {
    let s = h / 60.0;
    let cx = rng.random_range(0.15..0.85) * w;
    let top = rng.random_range(0.05..0.35) * h;
    let level = rng.random_range(0.68..0.82);
    let head_r = rng.random_range(3.0..4.2) * s;
    let torso_w = rng.random_range(5.5..7.5) * s;
    let torso_h = rng.random_range(11.0..15.0) * s;
    let head_cy = top + head_r;
    let torso_cy = head_cy + head_r + torso_h * 0.9;
    layers.push(Layer {
        shape: Shape::Ellipse { cx, cy: torso_cy, rx: torso_w, ry: torso_h },
        level: level - 0.06,
        tilt: rng.random_range(-0.04..0.02),
    });
    for side in [-1.0, 1.0] {
        layers.push(Layer {
            shape: Shape::Ellipse {
                cx: cx + side * (torso_w + 1.2 * s),
                cy: torso_cy - 1.5 * s,
                rx: 1.6 * s,
                ry: torso_h * 0.75,
            },
            level: level - 0.1,
            tilt: 0.0,
        });
    }
    layers.push(Layer {
        shape: Shape::Ellipse { cx, cy: head_cy, rx: head_r * 0.85, ry: head_r },
        level,
        tilt: 0.0,
    });
    // cooler hair/face detail
    layers.push(Layer {
        shape: Shape::Ellipse { cx, cy: head_cy - head_r * 0.6, rx: head_r * 0.7, ry: head_r * 0.35 },
        level: level - 0.12,
        tilt: 0.0,
    });
}

/// Renders a `width x height` scene in `[0, 1]`, fully determined by `seed`.
pub fn thermal_scene(width: usize, height: usize, seed: u64, style: SceneStyle) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);

    // background: gradient plus a few slow undulations
    let gx = rng.random_range(-0.06..0.06);
    let gy = rng.random_range(0.0..0.08);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..2.5) / w,
                rng.random_range(0.5..2.5) / h,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.005..0.02),
            )
        })
        .collect();

    let mut layers = Vec::new();
    for _ in 0..style.objects {
        let x0 = rng.random_range(0.0..0.85) * w;
        let y0 = rng.random_range(0.1..0.9) * h;
        let x1 = (x0 + rng.random_range(0.08..0.3) * w).min(w);
        let y1 = (y0 + rng.random_range(0.08..0.35) * h).min(h);
        let level = rng.random_range(0.3..0.5);
        layers.push(Layer {
            shape: Shape::Rect { x0, y0, x1, y1 },
            level,
            tilt: rng.random_range(-0.03..0.03),
        });
    }
    for _ in 0..style.people {
        person(&mut rng, w, h, &mut layers);
    }

    const SUPER: usize = 4;
    let mut img = GrayImage::from_fn(width, height, |x, y| {
        let mut acc = 0.0;
        for sy in 0..SUPER {
            for sx in 0..SUPER {
                let px = x as f64 + (sx as f64 + 0.5) / SUPER as f64 - 0.5;
                let py = y as f64 + (sy as f64 + 0.5) / SUPER as f64 - 0.5;
                let mut v = 0.24 + gx * px / w + gy * py / h;
                for &(fx, fy, phase, amp) in &waves {
                    v += amp * (std::f64::consts::TAU * (fx * px + fy * py) + phase).sin();
                }
                for layer in &layers {
                    if layer.shape.contains(px, py) {
                        v = layer.level + layer.tilt * (py / h - 0.5);
                    }
                }
                acc += v;
            }
        }
        acc / (SUPER * SUPER) as f64
    });

    if style.blur_sigma > 0.0 {
        img = gaussian_blur(&img, style.blur_sigma);
    }
    if style.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, style.noise_sigma).expect("valid sigma");
        let (w, h) = img.dims();
        let data = img.data().iter().map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect();
        img = GrayImage::new(w, h, data)?;
    }
    Ok(img)
}

/// Periodic Gaussian blur in the frequency domain.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let (w, h) = img.dims();
    let plan = fft::plan(w, h);
    let mut spec = plan.forward_real(img.data());
    let k = -2.0 * (std::f64::consts::PI * sigma).powi(2);
    for y in 0..h {
        let v = fft::frequency(y, h);
        for x in 0..w {
            let u = fft::frequency(x, w);
            spec[y * w + x] *= (k * (u * u + v * v)).exp();
        }
    }
    plan.inverse(&mut spec);
    GrayImage::new(w, h, spec.iter().map(|c| c.re).collect()).expect("finite blur")
}

/// A rectified pair cut from a wider scene: the left view sees the scene
/// displaced by `disparity` pixels to the right relative to the right view,
/// so `x_left - x_right = disparity` for every visible point. Unlike a plain
/// periodic shift, no wrapped content appears in either view.
pub fn stereo_pair(width: usize, height: usize, disparity: f64, seed: u64, style: SceneStyle) -> Result<(GrayImage, GrayImage)> {
    let pad = disparity.abs().ceil() as usize + 16;
    let wide = thermal_scene(width + 2 * pad, height, seed, style)?;
    let shifted = subpixel_shift(&wide, ShiftSpec::horizontal(disparity))?;
    let crop = |img: &GrayImage| GrayImage::from_fn(width, height, |x, y| img.get(x + pad, y));
    Ok((crop(&shifted), crop(&wide)))
}
