//! Renders a Halton pose cloud, detects the marker in every frame and
//! reports per-DoF accuracy.
//!
//! cargo run --release --example closed_loop -- [N]

use std::time::Instant;

use fidray::bench::{accuracy, enumerate_poses, run_closed_loop, sample_pose_cloud, BenchSetup, PoseRanges};
use fidray::camera::CameraRig;
use fidray::render::MarkerSpec;

fn main() -> fidray::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let rig = CameraRig::logitech_c270();
    let marker = MarkerSpec::bench_square(50.0)?;
    let poses = sample_pose_cloud(n, &PoseRanges::default(), &rig, &marker, None)?;
    let setup = BenchSetup::new(rig, marker);

    let start = Instant::now();
    let records = run_closed_loop(&setup, &enumerate_poses(&poses))?;
    let elapsed = start.elapsed();

    let report = accuracy(&records)?;
    print!("{}", report.summary());
    let mut abs: Vec<[f64; 3]> = records
        .iter()
        .filter_map(|r| r.errors())
        .map(|e| [e[0].abs(), e[1].abs(), e[2].abs()])
        .collect();
    for (d, name) in ["X", "Y", "Z"].iter().enumerate() {
        abs.sort_by(|a, b| a[d].total_cmp(&b[d]));
        println!("median |e{name}| = {:.3} mm", abs[abs.len() / 2][d]);
    }
    println!("{n} poses in {:.1} s", elapsed.as_secs_f64());
    Ok(())
}
