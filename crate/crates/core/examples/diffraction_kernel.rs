//! Airy radius and pixel-integrated diffraction kernel of both reference rigs.
//!
//! cargo run --release --example diffraction_kernel

use fidray::camera::CameraRig;
use fidray::optics::{airy_psf, airy_radius, build_kernel};

fn main() -> fidray::Result<()> {
    for (name, rig) in [
        ("Logitech C270", CameraRig::logitech_c270()),
        ("Canon Rebel XS", CameraRig::canon_rebel_xs()),
    ] {
        let r_a = airy_radius(&rig);
        let kernel = build_kernel(&rig)?;
        println!(
            "{name}: r_a = {r_a:.4} um, pitch {} um, kernel {}x{}",
            rig.sensor.pixel_pitch_um,
            kernel.side(),
            kernel.side()
        );
        println!("  psf(r_a / 2) = {:.6}", airy_psf(r_a / 2.0, r_a));
        let r = kernel.radius as isize;
        for dy in -r..=r {
            let row: Vec<String> = (-r..=r).map(|dx| format!("{:8.5}", kernel.tap(dx, dy))).collect();
            println!("  {}", row.join(" "));
        }
    }
    Ok(())
}
