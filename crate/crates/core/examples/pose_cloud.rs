//! Samples a Halton pose cloud, writes it as CSV and checks that every
//! marker corner projects inside the image.
//!
//! cargo run --release --example pose_cloud -- [N] [poses.csv]

use fidray::bench::{sample_pose_cloud, write_poses_csv, PoseRanges};
use fidray::camera::CameraRig;
use fidray::render::{MarkerSpec, Scene};

fn main() -> fidray::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = args.next().unwrap_or_else(|| "poses.csv".into());

    let rig = CameraRig::logitech_c270();
    let marker = MarkerSpec::bench_square(50.0)?;
    let ranges = PoseRanges::default();
    let poses = sample_pose_cloud(n, &ranges, &rig, &marker, None)?;
    write_poses_csv(&out, &poses)?;

    let mut outside = 0;
    for p in &poses {
        let scene = Scene::new(rig.clone(), marker.clone(), *p)?;
        if !scene.projected_corners()?.iter().all(|c| rig.in_image(*c)) {
            outside += 1;
        }
    }
    let zs: Vec<f64> = poses.iter().map(|p| p.z).collect();
    let mean = zs.iter().sum::<f64>() / n as f64;
    println!("{n} poses -> {out}");
    println!("mean Z {mean:.1} mm (range {:?})", ranges.z_mm);
    println!("poses with a corner outside the image: {outside}");
    Ok(())
}
