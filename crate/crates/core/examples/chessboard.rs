//! Synthetic calibration target: renders a chessboard and prints the exact
//! projections of its inner corners, the ground truth a calibration tool
//! would be scored against.
//!
//! cargo run --release --example chessboard -- [OUT.png]

use fidray::camera::CameraRig;
use fidray::render::{generate_chessboard, render, Pose6D, RenderOptions, Scene};
use nalgebra::Vector3;

fn main() -> fidray::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "chessboard.png".into());
    let (rows, cols, square) = (6, 8, 25.0);
    let board = generate_chessboard(rows, cols, square)?;
    let mut rig = CameraRig::logitech_c270();
    rig.lens.focus_distance_mm = 600.0;
    let pose = Pose6D::new(0.0, 0.0, 600.0, -15.0, 20.0, 5.0);
    let scene = Scene::new(rig.clone(), board.clone(), pose)?;
    render(&scene, &RenderOptions::default())?.write(&out)?;

    let tf = pose.to_transform();
    let (w, h) = (board.side_mm, board.height_mm());
    println!("row,col,x_px,y_px");
    for r in 1..rows {
        for c in 1..cols {
            let local = Vector3::new(c as f64 * square - w / 2.0, r as f64 * square - h / 2.0, 0.0);
            let p = tf.apply(local);
            let px = rig.project([p.x, p.y, p.z])?;
            println!("{r},{c},{:.4},{:.4}", px[0], px[1]);
        }
    }
    eprintln!("{rows}x{cols} board -> {out}");
    Ok(())
}
