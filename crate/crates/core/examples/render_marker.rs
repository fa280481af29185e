//! Renders the bench marker for the Logitech C270 rig and writes the image
//! with a few render statistics.
//!
//! cargo run --release --example render_marker -- [OUT.png] [X,Y,Z,roll,pitch,yaw]

use fidray::camera::CameraRig;
use fidray::render::{render, MarkerSpec, Pose6D, RenderOptions, Scene};

fn main() -> fidray::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "marker.png".into());
    let pose = match args.next() {
        Some(p) => Pose6D::parse(&p)?,
        None => Pose6D::new(0.0, 0.0, 700.0, 10.0, -20.0, 30.0),
    };

    let scene = Scene::new(CameraRig::logitech_c270(), MarkerSpec::bench_square(50.0)?, pose)?;
    let image = render(&scene, &RenderOptions::default())?;
    image.write(&out)?;

    let m = &image.metadata;
    println!("{} -> {out}", m.scene_hash);
    println!("{} refined pixels at {} spp, {} rays", m.refined_pixels, m.spp, m.rays_traced);
    for (name, c) in ["TL", "TR", "BR", "BL"].iter().zip(scene.projected_corners()?) {
        println!("{name} corner at ({:.3}, {:.3}) px", c[0], c[1]);
    }
    Ok(())
}
