//! Fixtures and randomized invariant suites shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use subtherm::eval::{run_shift_sweep, SweepSpec};
use subtherm::image::circular_shift;
use subtherm::poc::{cross_power_spectrum, poc_surface, CorrelationSurface};
use subtherm::synth::{thermal_scene, SceneStyle};
use subtherm::triangulate::triangulate_pixel;
use subtherm::*;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn thermal_fixture() -> GrayImage {
    load_pgm(fixture_path("thermal_80x60.pgm")).expect("bundled 80x60 fixture")
}

pub fn scene_512_fixture() -> GrayImage {
    load_pgm(fixture_path("scene_512.pgm")).expect("bundled 512x512 fixture")
}

/// Parameters the bundled fixtures were generated with.
pub fn thermal_fixture_source() -> GrayImage {
    thermal_scene(80, 60, 13, SceneStyle::default()).unwrap()
}

pub fn scene_512_source() -> GrayImage {
    let style = SceneStyle { blur_sigma: 1.0, noise_sigma: 0.01, people: 6, objects: 24 };
    thermal_scene(512, 512, 5, style).unwrap()
}

/// Sinc peak model with pass band `2 * half_band + 1`, sampled on `[-m, m]`.
pub fn sinc_peak(size: usize, half_band: usize, delta: f64, alpha: f64) -> Vec<f64> {
    let m = (size / 2) as i64;
    let v = (2 * half_band + 1) as f64;
    (-m..=m)
        .map(|x| {
            let t = x as f64 + delta;
            if t.abs() < 1e-300 {
                alpha * v / size as f64
            } else {
                alpha * (v * PI * t / size as f64).sin() / (PI * t)
            }
        })
        .collect()
}

fn orientation_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn scene(w: usize, h: usize, seed: u64) -> GrayImage {
    thermal_scene(w, h, seed, SceneStyle::default()).unwrap()
}

fn noise_image(w: usize, h: usize) -> impl Strategy<Value = GrayImage> {
    proptest::collection::vec(0.0f64..1.0, w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
}

/// Odd-sized random image, so the Fourier shift has no Nyquist bin.
fn odd_image() -> impl Strategy<Value = GrayImage> {
    (5usize..12, 5usize..12).prop_flat_map(|(a, b)| noise_image(2 * a + 1, 2 * b + 1))
}

type Suite = (&'static str, fn(u32) -> Result<(), String>);

pub fn invariant_suites() -> Vec<Suite> {
    vec![
        ("shift inverse", shift_inverse),
        ("shift composition", shift_composition),
        ("integer shift is circular", integer_shift_is_circular),
        ("brightness linearity", brightness_linearity),
        ("moment inequalities", moment_inequalities),
        ("additive brightness invariance", additive_brightness_invariance),
        ("threshold monotonicity", threshold_monotonicity),
        ("nms spacing", nms_spacing),
        ("match uniqueness and ordering", match_constraints),
        ("match symmetry", match_symmetry),
        ("peak model recovery", peak_model_recovery),
        ("refinement antisymmetry", refinement_antisymmetry),
        ("poc bounded", poc_bounded),
        ("triangulation round trip", triangulation_round_trip),
        ("depth error monotonicity", depth_error_monotonicity),
        ("precision monotonicity", precision_monotonicity),
        ("pgm round trip", pgm_round_trip),
    ]
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new(config).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn shift_inverse(cases: u32) -> Result<(), String> {
    run(cases, (odd_image(), -5.0f64..5.0), |(img, dx)| {
        let dy = dx * 0.3;
        let there = subpixel_shift(&img, ShiftSpec { dx, dy }).unwrap();
        let back = subpixel_shift(&there, ShiftSpec { dx: -dx, dy: -dy }).unwrap();
        prop_assert!(back.max_abs_diff(&img) < 1e-8);
        Ok(())
    })
}

pub fn shift_composition(cases: u32) -> Result<(), String> {
    run(cases, (odd_image(), -2.5f64..2.5, -2.5f64..2.5), |(img, a, b)| {
        let two = subpixel_shift(&subpixel_shift(&img, ShiftSpec::horizontal(a)).unwrap(), ShiftSpec::horizontal(b)).unwrap();
        let one = subpixel_shift(&img, ShiftSpec::horizontal(a + b)).unwrap();
        prop_assert!(two.max_abs_diff(&one) < 1e-8);
        Ok(())
    })
}

pub fn integer_shift_is_circular(cases: u32) -> Result<(), String> {
    let strat = (4usize..20, 4usize..20).prop_flat_map(|(w, h)| (noise_image(2 * w, 2 * h), -(w as i64 - 1)..w as i64, -(h as i64 - 1)..h as i64));
    run(cases, strat, |(img, dx, dy)| {
        let (w, h) = img.dims();
        let shifted = subpixel_shift(&img, ShiftSpec { dx: dx as f64, dy: dy as f64 }).unwrap();
        // oracle: direct index arithmetic
        let oracle = GrayImage::from_fn(w, h, |x, y| {
            img.get((x as i64 - dx).rem_euclid(w as i64) as usize, (y as i64 - dy).rem_euclid(h as i64) as usize)
        });
        prop_assert!(shifted.max_abs_diff(&oracle) <= 1e-10);
        prop_assert_eq!(circular_shift(&img, dx, dy), oracle);
        Ok(())
    })
}

pub fn brightness_linearity(cases: u32) -> Result<(), String> {
    let strat = (noise_image(9, 7), -3.0f64..3.0, -1.0f64..1.0, -3.0f64..3.0, -1.0f64..1.0);
    run(cases, strat, |(img, a1, b1, a2, b2)| {
        let twice = apply_brightness(&apply_brightness(&img, a1, b1), a2, b2);
        let once = apply_brightness(&img, a1 * a2, a2 * b1 + b2);
        prop_assert!(twice.max_abs_diff(&once) < 1e-14);
        Ok(())
    })
}

pub fn moment_inequalities(cases: u32) -> Result<(), String> {
    run(cases, (0u64..10_000, 16usize..40, 16usize..40), |(seed, w, h)| {
        let pc = compute_phase_congruency(&scene(w, h, seed), &PcConfig::default()).unwrap();
        for (big, small) in pc.moment_max.data().iter().zip(pc.moment_min.data()) {
            prop_assert!(*small >= 0.0 && small <= big);
        }
        for map in &pc.pc_by_orientation {
            prop_assert!(map.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        Ok(())
    })
}

pub fn additive_brightness_invariance(cases: u32) -> Result<(), String> {
    run(cases, (0u64..10_000, -0.5f64..0.5), |(seed, beta)| {
        let img = scene(24, 20, seed);
        let cfg = PcConfig::default();
        let base = compute_phase_congruency(&img, &cfg).unwrap();
        let lifted = compute_phase_congruency(&apply_brightness(&img, 1.0, beta), &cfg).unwrap();
        prop_assert!(base.moment_max.max_abs_diff(&lifted.moment_max) < 1e-9);
        Ok(())
    })
}

pub fn threshold_monotonicity(cases: u32) -> Result<(), String> {
    run(cases, (0u64..10_000, 0.001f64..0.99, 0.001f64..0.99), |(seed, g1, g2)| {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let pc = compute_phase_congruency(&scene(24, 20, seed), &PcConfig::default()).unwrap();
        let loose: std::collections::HashSet<_> = detect_features(&pc, lo, 0).iter().map(|f| f.position()).collect();
        let strict = detect_features(&pc, hi, 0);
        prop_assert!(strict.iter().all(|f| loose.contains(&f.position()) && f.strength >= hi));
        prop_assert!(strict.windows(2).all(|p| p[0].strength >= p[1].strength));
        Ok(())
    })
}

pub fn nms_spacing(cases: u32) -> Result<(), String> {
    run(cases, (0u64..10_000, 1usize..4, 0.01f64..0.5), |(seed, radius, gamma)| {
        let pc = compute_phase_congruency(&scene(24, 20, seed), &PcConfig::default()).unwrap();
        let all: std::collections::HashSet<_> = detect_features(&pc, gamma, 0).iter().map(|f| f.position()).collect();
        let kept = detect_features(&pc, gamma, radius);
        prop_assert!(kept.iter().all(|f| all.contains(&f.position())));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.chebyshev(b) > radius);
            }
        }
        Ok(())
    })
}

struct Pair {
    feats_l: Vec<Feature>,
    feats_r: Vec<Feature>,
    map_l: GrayImage,
    map_r: GrayImage,
}

fn stereo_features(seed: u64, delta: f64, gamma: f64) -> Pair {
    let right = scene(40, 30, seed);
    let left = subpixel_shift(&right, ShiftSpec::horizontal(delta)).unwrap();
    let cfg = PcConfig::default();
    let pl = compute_phase_congruency(&left, &cfg).unwrap();
    let pr = compute_phase_congruency(&right, &cfg).unwrap();
    Pair {
        feats_l: detect_features(&pl, gamma, 0),
        feats_r: detect_features(&pr, gamma, 0),
        map_l: pl.moment_max,
        map_r: pr.moment_max,
    }
}

fn match_inputs() -> impl Strategy<Value = (u64, f64, f64, i64)> {
    (0u64..10_000, 0.0f64..8.0, 0.05f64..0.5, 0i64..4)
}

pub fn match_constraints(cases: u32) -> Result<(), String> {
    run(cases, match_inputs(), |(seed, delta, gamma, lo)| {
        let p = stereo_features(seed, delta, gamma);
        let cfg = MatchConfig { disparity_min: lo, disparity_max: lo + 8, ..Default::default() };
        let ms = match_features(&p.feats_l, &p.feats_r, &p.map_l, &p.map_r, &cfg).unwrap();
        let mut seen_l = std::collections::HashSet::new();
        let mut seen_r = std::collections::HashSet::new();
        for m in &ms {
            prop_assert!(seen_l.insert(m.left.position()) && seen_r.insert(m.right.position()));
            prop_assert_eq!(m.left.y, m.right.y);
            prop_assert_eq!(m.disparity_int, m.left.x as i64 - m.right.x as i64);
            prop_assert!(m.disparity_int >= cfg.disparity_min && m.disparity_int <= cfg.disparity_max);
            prop_assert!(m.similarity >= cfg.min_similarity);
            // the accepted partner is the best admissible candidate
            let wl = p.map_l.window(m.left.x, m.left.y, cfg.window).unwrap();
            for r in p.feats_r.iter().filter(|r| r.y == m.left.y) {
                let d = m.left.x as i64 - r.x as i64;
                if d < cfg.disparity_min || d > cfg.disparity_max {
                    continue;
                }
                if orientation_gap(m.left.orientation, r.orientation) > cfg.max_orientation_diff + 1e-9 {
                    continue;
                }
                let (w, h) = p.map_r.dims();
                let b = cfg.border_margin;
                if r.x < b || r.x + b >= w || r.y < b || r.y + b >= h {
                    continue;
                }
                if let Some(wr) = p.map_r.window(r.x, r.y, cfg.window) {
                    prop_assert!(lades_similarity(&wl, &wr).unwrap() <= m.similarity + 1e-12);
                }
            }
        }
        for a in &ms {
            for b in ms.iter().filter(|b| b.left.y == a.left.y && b.left.x > a.left.x) {
                prop_assert!(b.right.x > a.right.x, "ordering violated");
            }
        }
        prop_assert!(ms.windows(2).all(|w| (w[0].left.y, w[0].left.x) < (w[1].left.y, w[1].left.x)));
        Ok(())
    })
}

pub fn match_symmetry(cases: u32) -> Result<(), String> {
    run(cases, match_inputs(), |(seed, delta, gamma, lo)| {
        let p = stereo_features(seed, delta, gamma);
        let cfg = MatchConfig { disparity_min: lo, disparity_max: lo + 8, ..Default::default() };
        let swapped = MatchConfig { disparity_min: -cfg.disparity_max, disparity_max: -cfg.disparity_min, ..cfg.clone() };
        let forward = match_features(&p.feats_l, &p.feats_r, &p.map_l, &p.map_r, &cfg).unwrap();
        let backward = match_features(&p.feats_r, &p.feats_l, &p.map_r, &p.map_l, &swapped).unwrap();
        let mut a: Vec<_> = forward.iter().map(|m| (m.left.position(), m.right.position(), m.disparity_int)).collect();
        let mut b: Vec<_> = backward.iter().map(|m| (m.right.position(), m.left.position(), -m.disparity_int)).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn peak_model_recovery(cases: u32) -> Result<(), String> {
    let strat = (3usize..15, prop_oneof![Just(0.5), Just(1.0)], -0.5f64..=0.5, 0.001f64..=1.0);
    run(cases, strat, |(m, ratio, delta, alpha)| {
        let size = 2 * m + 1;
        let cfg = PocConfig { window: size, lowpass_ratio: ratio, ..Default::default() };
        let u = subtherm::poc::passband_half_width(size, ratio);
        let surface = CorrelationSurface::from_profile(sinc_peak(size, u, delta, alpha), u);
        let got = estimate_delta(&surface, &cfg).unwrap();
        prop_assert!((got - delta).abs() < 1e-8, "size {size} U {u}: {got} vs {delta}");
        Ok(())
    })
}

fn textured(seed: u64) -> GrayImage {
    scene(32, 24, seed)
}

pub fn refinement_antisymmetry(cases: u32) -> Result<(), String> {
    run(cases, (0u64..10_000, -2.0f64..2.0, 4usize..12, 4usize..8), |(seed, shift, cx, cy)| {
        let a = textured(seed);
        let b = subpixel_shift(&a, ShiftSpec::horizontal(shift)).unwrap();
        let (x, y) = (cx * 2, cy * 2);
        let wa = a.window(x, y, 9).unwrap();
        let wb = b.window(x, y, 9).unwrap();
        let cfg = PocConfig::default();
        let fwd = cross_power_spectrum(&wa, &wb, cfg.lowpass_ratio).map(|s| poc_surface(&s));
        let bwd = cross_power_spectrum(&wb, &wa, cfg.lowpass_ratio).map(|s| poc_surface(&s));
        let (Ok(fwd), Ok(bwd)) = (fwd, bwd) else {
            return Ok(());
        };
        match (estimate_delta(&fwd, &cfg), estimate_delta(&bwd, &cfg)) {
            (Ok(d1), Ok(d2)) => prop_assert!((d1 + d2).abs() < 1e-8, "{d1} vs {d2}"),
            (Err(_), Err(_)) => {}
            (r1, r2) => prop_assert!(false, "one direction failed: {r1:?} / {r2:?}"),
        }
        Ok(())
    })
}

pub fn poc_bounded(cases: u32) -> Result<(), String> {
    let strat = (3usize..10, prop_oneof![Just(0.25), Just(0.5), Just(1.0)]).prop_flat_map(|(m, ratio)| {
        let n = 2 * m + 1;
        (noise_image(n, n), noise_image(n, n), Just(ratio))
    });
    run(cases, strat, |(a, b, ratio)| {
        if let Ok(spec) = cross_power_spectrum(&a, &b, ratio) {
            let s = poc_surface(&spec);
            prop_assert!(s.surface.iter().all(|v| v.abs() <= 1.0 + 1e-9));
        }
        Ok(())
    })
}

fn rigs() -> impl Strategy<Value = StereoRig> {
    (1.0f64..500.0, 10.0f64..170.0, 16usize..2000, 16usize..2000).prop_map(|(b, hfov, w, h)| StereoRig::from_hfov(b, hfov, w, h).unwrap())
}

pub fn triangulation_round_trip(cases: u32) -> Result<(), String> {
    run(cases, (rigs(), 0.0f64..2000.0, 0.0f64..2000.0, 0.01f64..200.0), |(rig, xl, yl, d)| {
        let p = triangulate_pixel(xl, yl, d, &rig).unwrap();
        let fb = rig.focal_baseline();
        prop_assert!((p.z * d - fb).abs() <= 1e-12 * fb);
        let x = p.x * rig.focal_px / p.z + rig.cx;
        let y = p.y * rig.focal_px / p.z + rig.cy;
        let d2 = fb / p.z;
        prop_assert!((x - xl).abs() < 1e-9 && (y - yl).abs() < 1e-9 && (d2 - d).abs() < 1e-9 * d.max(1.0));
        Ok(())
    })
}

pub fn depth_error_monotonicity(cases: u32) -> Result<(), String> {
    run(cases, (rigs(), 100.0f64..20_000.0, 0.001f64..2.0, 1.01f64..2.0), |(rig, z, err, k)| {
        let fb = rig.focal_baseline();
        let d = fb / z;
        // stay where both the larger error and the larger depth are admissible
        prop_assume!(err * k < d / k);
        let base = depth_error_range(z, &rig, err).unwrap().range_mm;
        let wider = depth_error_range(z, &rig, err * k).unwrap().range_mm;
        let deeper = depth_error_range(z * k, &rig, err).unwrap().range_mm;
        prop_assert!(wider > base && deeper > base);
        Ok(())
    })
}

pub fn precision_monotonicity(cases: u32) -> Result<(), String> {
    let strat = (0u64..10_000, proptest::collection::vec(0.0f64..6.0, 1..3), prop_oneof![Just(0.05), Just(0.1), Just(0.3)]);
    run(cases, strat, |(seed, deltas, gamma)| {
        let img = scene(48, 40, seed);
        let spec = SweepSpec::new(deltas, vec![7, 9], vec![gamma]);
        let report = run_shift_sweep(&img, &spec, &PcConfig::default(), &MatchConfig::default(), &PocConfig::default()).unwrap();
        prop_assert_eq!(report.cells.len(), 2);
        for cell in &report.cells {
            let rates: Vec<f64> = spec.taus.iter().map(|t| cell.rate(*t).unwrap()).collect();
            prop_assert!(rates.iter().all(|r| (0.0..=1.0).contains(r)));
            prop_assert!(rates.windows(2).all(|p| p[1] <= p[0]));
            prop_assert_eq!(cell.n_features + cell.n_excluded, cell.n_detected);
        }
        Ok(())
    })
}

pub fn pgm_round_trip(cases: u32) -> Result<(), String> {
    let strat = (1usize..20, 1usize..20).prop_flat_map(|(w, h)| noise_image(w, h));
    run(cases, strat, |img| {
        for (depth, max) in [(BitDepth::Eight, 255.0), (BitDepth::Sixteen, 65535.0)] {
            let back = subtherm::image::decode_pgm(&subtherm::image::encode_pgm(&img, depth)).unwrap();
            prop_assert!(back.max_abs_diff(&img) <= 0.5 / max + 1e-12);
        }
        Ok(())
    })
}
