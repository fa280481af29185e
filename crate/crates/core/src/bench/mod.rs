//! Pose clouds, the closed render/detect/estimate loop, and error statistics.

mod cloud;
mod detect;
mod export;
mod metrics;
mod pnp;

pub use cloud::{ideal_view_rectangle, read_poses_csv, sample_pose_cloud, write_poses_csv, PoseRanges};
pub use detect::{detect_square_marker, detect_with, Detection, DetectorConfig};
pub use export::{
    correlation_matrix, overlay_diff, read_correlation_csv, read_detections_csv, records_from_detections,
    scatter_svg, write_correlation_csv, write_detections_csv, write_report, DetectionRow, DiffImage,
};
pub use metrics::{
    accuracy, common_subset, pose_error, AccuracyReport, CommonSubset, PoseErrorRecord, DOF,
};
pub use pnp::{planar_pnp, PnpSolution};

use rayon::prelude::*;

use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::render::{render, MarkerSpec, Pose6D, RenderOptions, Scene};

/// Everything the closed loop needs besides the poses.
#[derive(Debug, Clone)]
pub struct BenchSetup {
    pub rig: CameraRig,
    pub marker: MarkerSpec,
    pub render: RenderOptions,
    pub detector: DetectorConfig,
}

impl BenchSetup {
    pub fn new(rig: CameraRig, marker: MarkerSpec) -> Self {
        Self {
            rig,
            marker,
            render: RenderOptions::default(),
            detector: DetectorConfig::default(),
        }
    }
}

/// Renders one pose, detects the marker and estimates its pose. A missed
/// detection or a failed estimate yields an undetected record.
pub fn run_pose(setup: &BenchSetup, pose_id: u64, pose: Pose6D) -> Result<PoseErrorRecord> {
    let scene = Scene::new(setup.rig.clone(), setup.marker.clone(), pose)?;
    let corners = scene.projected_corners()?;
    let marker_px = (0..4)
        .map(|i| {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .sum::<f64>()
        / 4.0;
    let image = render(&scene, &setup.render)?;
    let record = match detect_with(&image, &setup.rig, &setup.detector) {
        None => PoseErrorRecord::missed(pose_id, pose),
        Some(det) => match planar_pnp(&det.corners, &setup.marker.corners_mm(), &setup.rig) {
            Ok(sol) => PoseErrorRecord::detected(pose_id, pose, sol.pose).with_ambiguity(sol.ambiguity_margin),
            Err(Error::Estimation(_)) => PoseErrorRecord::missed(pose_id, pose),
            Err(e) => return Err(e),
        },
    };
    Ok(record.with_marker_px(marker_px))
}

/// Runs every pose through the loop; records come back in `pose_id` order.
pub fn run_closed_loop(setup: &BenchSetup, poses: &[(u64, Pose6D)]) -> Result<Vec<PoseErrorRecord>> {
    let mut records: Vec<PoseErrorRecord> = poses
        .par_iter()
        .map(|&(id, pose)| run_pose(setup, id, pose))
        .collect::<Result<_>>()?;
    records.sort_by_key(|r| r.pose_id);
    Ok(records)
}

/// Pairs poses with their position in the slice.
pub fn enumerate_poses(poses: &[Pose6D]) -> Vec<(u64, Pose6D)> {
    poses.iter().enumerate().map(|(i, p)| (i as u64, *p)).collect()
}
