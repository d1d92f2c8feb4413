mod common;

use subtherm::synth::{thermal_scene, SceneStyle};
use subtherm::image::encode_pgm;
use subtherm::BitDepth;

#[test]
fn thermal_fixture_matches_generator() {
    let img = thermal_scene(80, 60, 13, SceneStyle::default()).unwrap();
    let bytes = std::fs::read(common::fixture_path("thermal_80x60.pgm")).unwrap();
    assert_eq!(encode_pgm(&img, BitDepth::Eight), bytes);
}

#[test]
fn scene_512_fixture_matches_generator() {
    let style = SceneStyle { blur_sigma: 1.0, noise_sigma: 0.01, people: 6, objects: 24 };
    let img = thermal_scene(512, 512, 5, style).unwrap();
    let bytes = std::fs::read(common::fixture_path("scene_512.pgm")).unwrap();
    assert_eq!(encode_pgm(&img, BitDepth::Sixteen), bytes);
}
