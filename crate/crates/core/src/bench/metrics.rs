use serde::Serialize;

use crate::error::{Error, Result};
use crate::render::{wrap_degrees, Pose6D};

/// Degree-of-freedom labels in record order.
pub const DOF: [&str; 6] = ["X", "Y", "Z", "roll", "pitch", "yaw"];

/// Signed `estimate - truth`: mm for translations, wrapped degrees for the
/// canonical Euler angles.
pub fn pose_error(estimate: &Pose6D, truth: &Pose6D) -> [f64; 6] {
    let e = estimate.canonical();
    let t = truth.canonical();
    [
        e.x - t.x,
        e.y - t.y,
        e.z - t.z,
        wrap_degrees(e.roll - t.roll),
        wrap_degrees(e.pitch - t.pitch),
        wrap_degrees(e.yaw - t.yaw),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseErrorRecord {
    pub pose_id: u64,
    pub truth: Pose6D,
    pub estimate: Option<Pose6D>,
    errors: Option<[f64; 6]>,
    /// Mean projected side length of the marker in pixels.
    pub marker_px: Option<f64>,
    /// Reprojection error gap between the two planar pose candidates (px).
    pub ambiguity: Option<f64>,
}

impl PoseErrorRecord {
    pub fn detected(pose_id: u64, truth: Pose6D, estimate: Pose6D) -> Self {
        Self {
            pose_id,
            truth,
            errors: Some(pose_error(&estimate, &truth)),
            estimate: Some(estimate),
            marker_px: None,
            ambiguity: None,
        }
    }

    pub fn missed(pose_id: u64, truth: Pose6D) -> Self {
        Self {
            pose_id,
            truth,
            estimate: None,
            errors: None,
            marker_px: None,
            ambiguity: None,
        }
    }

    /// A detected record known only through its errors (e.g. re-imported).
    pub fn from_errors(pose_id: u64, truth: Pose6D, errors: [f64; 6]) -> Self {
        Self {
            pose_id,
            truth,
            estimate: None,
            errors: Some(errors),
            marker_px: None,
            ambiguity: None,
        }
    }

    pub fn with_marker_px(mut self, px: f64) -> Self {
        self.marker_px = Some(px);
        self
    }

    pub fn with_ambiguity(mut self, margin: f64) -> Self {
        self.ambiguity = Some(margin);
        self
    }

    pub fn is_detected(&self) -> bool {
        self.errors.is_some()
    }

    pub fn errors(&self) -> Option<[f64; 6]> {
        self.errors
    }

    /// Truth values in DoF order.
    pub fn values(&self) -> [f64; 6] {
        let t = &self.truth;
        [t.x, t.y, t.z, t.roll, t.pitch, t.yaw]
    }
}

/// Per-DoF statistics over the detected records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    /// Mean absolute error.
    pub accuracy: [f64; 6],
    pub bias: [f64; 6],
    /// Population standard deviation of the signed errors.
    pub std_dev: [f64; 6],
    pub detected: usize,
    pub total: usize,
    pub detection_rate: f64,
}

/// Aggregates the detected records. Records are visited in `pose_id` order so
/// the result does not depend on input order.
pub fn accuracy(records: &[PoseErrorRecord]) -> Result<AccuracyReport> {
    let mut errs: Vec<(u64, [f64; 6])> = records
        .iter()
        .filter_map(|r| r.errors.map(|e| (r.pose_id, e)))
        .collect();
    if errs.is_empty() {
        return Err(Error::EmptyReport);
    }
    errs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)));
    let m = errs.len() as f64;
    let mut acc = [0.0; 6];
    let mut bias = [0.0; 6];
    for (_, e) in &errs {
        for d in 0..6 {
            acc[d] += e[d].abs();
            bias[d] += e[d];
        }
    }
    for d in 0..6 {
        acc[d] /= m;
        bias[d] /= m;
    }
    let mut var = [0.0; 6];
    for (_, e) in &errs {
        for d in 0..6 {
            var[d] += (e[d] - bias[d]).powi(2);
        }
    }
    Ok(AccuracyReport {
        accuracy: acc,
        bias,
        std_dev: var.map(|v| (v / m).sqrt()),
        detected: errs.len(),
        total: records.len(),
        detection_rate: errs.len() as f64 / records.len() as f64,
    })
}

impl AccuracyReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "detected {}/{} (rate {:.4})\n{:>6} {:>12} {:>12} {:>12}\n",
            self.detected, self.total, self.detection_rate, "dof", "accuracy", "bias", "std"
        );
        for d in 0..6 {
            s.push_str(&format!(
                "{:>6} {:>12.6} {:>12.6} {:>12.6}\n",
                DOF[d], self.accuracy[d], self.bias[d], self.std_dev[d]
            ));
        }
        s
    }
}

/// Records restricted to poses detected in every set.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonSubset {
    pub pose_ids: Vec<u64>,
    pub sets: Vec<Vec<PoseErrorRecord>>,
}

impl CommonSubset {
    pub fn is_empty(&self) -> bool {
        self.pose_ids.is_empty()
    }
}

pub fn common_subset(sets: &[Vec<PoseErrorRecord>]) -> Result<CommonSubset> {
    let ids = |s: &Vec<PoseErrorRecord>| {
        let mut v: Vec<u64> = s.iter().map(|r| r.pose_id).collect();
        v.sort_unstable();
        v
    };
    if let Some(first) = sets.first() {
        let reference = ids(first);
        if let Some(i) = sets.iter().position(|s| ids(s) != reference) {
            return Err(Error::Input(format!(
                "record set {i} covers different pose ids than set 0"
            )));
        }
    }
    let mut common: Vec<u64> = sets
        .first()
        .map(|s| s.iter().filter(|r| r.is_detected()).map(|r| r.pose_id).collect())
        .unwrap_or_default();
    common.sort_unstable();
    for s in sets.iter().skip(1) {
        common.retain(|id| s.iter().any(|r| r.pose_id == *id && r.is_detected()));
    }
    let filtered = sets
        .iter()
        .map(|s| {
            let mut v: Vec<PoseErrorRecord> = s
                .iter()
                .filter(|r| common.binary_search(&r.pose_id).is_ok())
                .cloned()
                .collect();
            v.sort_by_key(|r| r.pose_id);
            v
        })
        .collect();
    Ok(CommonSubset {
        pose_ids: common,
        sets: filtered,
    })
}
