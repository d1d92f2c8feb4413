//! Regenerates the bundled test scenes in `fixtures/`.

use subtherm::synth::{thermal_scene, SceneStyle};
use subtherm::{save_pgm, BitDepth};

fn main() -> subtherm::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).map_err(|e| subtherm::Error::Io { path: dir.clone(), source: e })?;

    let low = thermal_scene(80, 60, 13, SceneStyle::default())?;
    save_pgm(&low, dir.join("thermal_80x60.pgm"), BitDepth::Eight)?;

    let style = SceneStyle { blur_sigma: 1.0, noise_sigma: 0.01, people: 6, objects: 24 };
    let high = thermal_scene(512, 512, 5, style)?;
    save_pgm(&high, dir.join("scene_512.pgm"), BitDepth::Sixteen)?;
    Ok(())
}
