//! Circle of confusion against depth, and the width of a rendered edge
//! ramp at a few depths.
//!
//! cargo run --release --example defocus

use fidray::camera::CameraRig;
use fidray::render::{trace, MarkerSpec, Pose6D, RenderOptions, Scene};

fn main() -> fidray::Result<()> {
    let rig = CameraRig::logitech_c270();
    let pitch_mm = rig.sensor.pixel_pitch_mm();
    println!("focus at {} mm, f/{}", rig.lens.focus_distance_mm, rig.lens.f_number);
    println!("{:>8} {:>10} {:>8} {:>10}", "z mm", "CoC um", "CoC px", "ramp px");

    // a plane wider than the view: black on the left, white on the right
    let marker = MarkerSpec::new(2, 1, vec![0.0, 1.0], 4000.0)?;
    for z in [150.0, 300.0, 500.0, 1000.0, 1500.0] {
        let coc = rig.circle_of_confusion(z);
        let scene = Scene::new(rig.clone(), marker.clone(), Pose6D::new(0.0, 0.0, z, 0.0, 0.0, 0.0))?;
        let t = trace(&scene, &RenderOptions::default())?;
        // 10%-90% rise along the center row
        let y = t.height / 2;
        let row = &t.radiance[y * t.width..(y + 1) * t.width];
        let first = |level: f64| row.iter().position(|&v| v >= level).unwrap_or(0) as f64;
        println!(
            "{z:>8.0} {:>10.2} {:>8.2} {:>10.1}",
            coc * 1e3,
            coc / pitch_mm,
            first(0.9) - first(0.1)
        );
    }
    Ok(())
}
