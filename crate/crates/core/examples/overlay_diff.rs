//! Compares a full render against one without the diffraction kernel and
//! writes the red/cyan overlay.
//!
//! cargo run --release --example overlay_diff -- [OUT.png]

use fidray::bench::overlay_diff;
use fidray::camera::CameraRig;
use fidray::render::{render, MarkerSpec, Pose6D, RenderOptions, Scene};

fn main() -> fidray::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "overlay.png".into());
    let scene = Scene::new(
        CameraRig::logitech_c270(),
        MarkerSpec::bench_square(50.0)?,
        Pose6D::new(0.0, 0.0, 400.0, 0.0, 25.0, 15.0),
    )?;
    let full = render(&scene, &RenderOptions::default())?;
    let sharp = render(
        &scene,
        &RenderOptions {
            diffraction: false,
            ..RenderOptions::default()
        },
    )?;
    let diff = overlay_diff(&full, &sharp)?;
    diff.write_png(&out)?;

    let changed = full.pixels.iter().zip(&sharp.pixels).filter(|(a, b)| a != b).count();
    let worst = full.pixels.iter().zip(&sharp.pixels).map(|(&a, &b)| a.abs_diff(b)).max().unwrap_or(0);
    println!("{changed} pixels differ, largest difference {worst} levels -> {out}");
    Ok(())
}
