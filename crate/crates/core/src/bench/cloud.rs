use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::render::{wrap_degrees, MarkerSpec, Pose6D};
use crate::sampling::{halton_point, HaltonConfig};

/// Sampling box for pose clouds. X and Y are not listed: they follow from the
/// field of view at each sampled depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRanges {
    pub z_mm: (f64, f64),
    pub roll_deg: (f64, f64),
    pub pitch_deg: (f64, f64),
    pub yaw_deg: (f64, f64),
    /// Multiplies the marker half-diagonal kept clear of the frustum walls.
    pub margin: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            z_mm: (500.0, 1500.0),
            roll_deg: (-45.0, 45.0),
            pitch_deg: (-45.0, 45.0),
            yaw_deg: (-180.0, 180.0),
            margin: 1.0,
        }
    }
}

impl PoseRanges {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("{name} range ({lo}, {hi}) is empty")));
            }
            Ok(())
        };
        check("z", self.z_mm)?;
        check("roll", self.roll_deg)?;
        check("pitch", self.pitch_deg)?;
        check("yaw", self.yaw_deg)?;
        if !(self.z_mm.0 > 0.0) {
            return Err(Error::Config("z range must be positive".into()));
        }
        for (name, (lo, hi)) in [("roll", self.roll_deg), ("pitch", self.pitch_deg)] {
            if lo < -90.0 || hi > 90.0 {
                return Err(Error::Config(format!("{name} range must lie within [-90, 90]")));
            }
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config(format!("margin must be non-negative, got {}", self.margin)));
        }
        Ok(())
    }

    /// Parses `key=lo:hi` pairs separated by commas, e.g.
    /// `z=500:1500,roll=-45:45,pitch=-45:45,yaw=-180:180`. Unlisted keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Self::default();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("range '{part}' must be key=lo:hi")))?;
            if key == "margin" {
                r.margin = value
                    .parse()
                    .map_err(|e| Error::Input(format!("range '{part}': {e}")))?;
                continue;
            }
            let (lo, hi) = value
                .split_once(':')
                .ok_or_else(|| Error::Input(format!("range '{part}' must be key=lo:hi")))?;
            let lo: f64 = lo.parse().map_err(|e| Error::Input(format!("range '{part}': {e}")))?;
            let hi: f64 = hi.parse().map_err(|e| Error::Input(format!("range '{part}': {e}")))?;
            match key {
                "z" => r.z_mm = (lo, hi),
                "roll" => r.roll_deg = (lo, hi),
                "pitch" => r.pitch_deg = (lo, hi),
                "yaw" => r.yaw_deg = (lo, hi),
                other => return Err(Error::Input(format!("unknown range key '{other}'"))),
            }
        }
        r.validate()?;
        Ok(r)
    }
}

/// Rectangle `[u0, u1] x [v0, v1]` of ideal normalized coordinates whose
/// every point images inside the sensor.
pub fn ideal_view_rectangle(rig: &CameraRig) -> Result<[f64; 4]> {
    let w = rig.sensor.width as f64;
    let h = rig.sensor.height as f64;
    let n = 2048;
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MIN, f64::MAX, f64::MIN, f64::MAX);
    for i in 0..=n {
        let s = i as f64 / n as f64;
        let x = -0.5 + s * w;
        let y = -0.5 + s * h;
        u0 = u0.max(rig.pixel_to_ideal(-0.5, y)?[0]);
        u1 = u1.min(rig.pixel_to_ideal(w - 0.5, y)?[0]);
        v0 = v0.max(rig.pixel_to_ideal(x, -0.5)?[1]);
        v1 = v1.min(rig.pixel_to_ideal(x, h - 0.5)?[1]);
    }
    Ok([u0, u1, v0, v1])
}

/// Affine map of a Halton coordinate onto `[lo, hi]`.
fn lerp((lo, hi): (f64, f64), t: f64) -> f64 {
    lo + t * (hi - lo)
}

/// Low-discrepancy pose cloud. Pose `i` uses Halton point `i` in bases
/// 2, 3, 5, 7, 11, 13 for Z, X, Y, roll, pitch, yaw. Digits are Faure-permuted,
/// or randomly permuted when `seed` is given.
///
/// X and Y span the field of view at the sampled depth, shrunk so that a
/// sphere of `margin` times the marker half-diagonal around the marker center
/// stays inside the frustum. Every orientation then keeps the marker in frame.
/// Index 0 maps to the lower end of every range.
pub fn sample_pose_cloud(
    n: usize,
    ranges: &PoseRanges,
    rig: &CameraRig,
    marker: &MarkerSpec,
    seed: Option<u64>,
) -> Result<Vec<Pose6D>> {
    if n == 0 {
        return Err(Error::Input("pose cloud needs at least one pose".into()));
    }
    ranges.validate()?;
    let [u0, u1, v0, v1] = ideal_view_rectangle(rig)?;
    let half_diag = 0.5 * marker.side_mm.hypot(marker.height_mm()) * ranges.margin;
    let bounds = |z: f64| {
        let x = (
            u0 * z + half_diag * u0.hypot(1.0),
            u1 * z - half_diag * u1.hypot(1.0),
        );
        let y = (
            v0 * z + half_diag * v0.hypot(1.0),
            v1 * z - half_diag * v1.hypot(1.0),
        );
        (x, y)
    };
    let (bx, by) = bounds(ranges.z_mm.0);
    if bx.0 > bx.1 || by.0 > by.1 || ranges.z_mm.0 <= half_diag {
        return Err(Error::Config(format!(
            "a {:.1} mm marker does not fit the field of view at Z = {} mm",
            marker.side_mm, ranges.z_mm.0
        )));
    }
    let halton = match seed {
        Some(s) => HaltonConfig::random(6, s),
        None => HaltonConfig::faure(6),
    };
    Ok((0..n as u64)
        .map(|i| {
            let h = halton_point(i, &halton);
            let z = lerp(ranges.z_mm, h[0]);
            let (bx, by) = bounds(z);
            Pose6D::new(
                lerp(bx, h[1]),
                lerp(by, h[2]),
                z,
                lerp(ranges.roll_deg, h[3]),
                lerp(ranges.pitch_deg, h[4]),
                wrap_degrees(lerp(ranges.yaw_deg, h[5])),
            )
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    pose_id: u64,
    #[serde(rename = "X")]
    x: f64,
    #[serde(rename = "Y")]
    y: f64,
    #[serde(rename = "Z")]
    z: f64,
    roll: f64,
    pitch: f64,
    yaw: f64,
}

/// Writes `pose_id,X,Y,Z,roll,pitch,yaw`; ids are the positions in `poses`.
pub fn write_poses_csv(path: impl AsRef<Path>, poses: &[Pose6D]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (i, p) in poses.iter().enumerate() {
        w.serialize(PoseRow {
            pose_id: i as u64,
            x: p.x,
            y: p.y,
            z: p.z,
            roll: p.roll,
            pitch: p.pitch,
            yaw: p.yaw,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pose-cloud CSV as `(pose_id, pose)` pairs.
pub fn read_poses_csv(path: impl AsRef<Path>) -> Result<Vec<(u64, Pose6D)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["pose_id", "X", "Y", "Z", "roll", "pitch", "yaw"];
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            path,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (line, row) in r.deserialize::<PoseRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
        let pose = Pose6D::new(row.x, row.y, row.z, row.roll, row.pitch, row.yaw);
        pose.validate()
            .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
        out.push((row.pose_id, pose));
    }
    Ok(out)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return Error::io(path, io),
            _ => unreachable!(),
        }
    }
    Error::parse(path, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logitech_cloud(n: usize) -> (CameraRig, MarkerSpec, Vec<Pose6D>) {
        let rig = CameraRig::logitech_c270();
        let marker = MarkerSpec::bench_square(50.0).unwrap();
        let poses = sample_pose_cloud(n, &PoseRanges::default(), &rig, &marker, None).unwrap();
        (rig, marker, poses)
    }

    #[test]
    fn first_pose_sits_at_range_minima() {
        let (rig, marker, poses) = logitech_cloud(1);
        let p = poses[0];
        assert_eq!((p.z, p.roll, p.pitch), (500.0, -45.0, -45.0));
        assert_eq!(p.yaw, 180.0);
        let [u0, _, v0, _] = ideal_view_rectangle(&rig).unwrap();
        let h = 0.5 * marker.side_mm * 2f64.sqrt();
        assert!((p.x - (u0 * 500.0 + h * u0.hypot(1.0))).abs() < 1e-9);
        assert!((p.y - (v0 * 500.0 + h * v0.hypot(1.0))).abs() < 1e-9);
    }

    #[test]
    fn every_marker_corner_is_in_frame() {
        let (rig, marker, poses) = logitech_cloud(500);
        for p in &poses {
            let t = p.to_transform();
            for c in marker.corners_mm() {
                let q = t.apply(c.into());
                let px = rig.project([q.x, q.y, q.z]).unwrap();
                assert!(rig.in_image(px), "{p:?} corner at {px:?}");
            }
        }
    }

    #[test]
    fn depth_is_uniform() {
        let (_, _, poses) = logitech_cloud(10_000);
        let mut z: Vec<f64> = poses.iter().map(|p| (p.z - 500.0) / 1000.0).collect();
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = z.len() as f64;
        let ks = z
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn deterministic_and_seeded() {
        let rig = CameraRig::logitech_c270();
        let marker = MarkerSpec::bench_square(50.0).unwrap();
        let r = PoseRanges::default();
        let a = sample_pose_cloud(50, &r, &rig, &marker, None).unwrap();
        assert_eq!(a, sample_pose_cloud(50, &r, &rig, &marker, None).unwrap());
        let b = sample_pose_cloud(50, &r, &rig, &marker, Some(3)).unwrap();
        assert_eq!(b, sample_pose_cloud(50, &r, &rig, &marker, Some(3)).unwrap());
        assert_ne!(a, b);
        assert!(b.iter().all(|p| (-180.0..=180.0).contains(&p.yaw) && p.yaw > -180.0));
    }

    #[test]
    fn oversized_marker_rejected() {
        let rig = CameraRig::logitech_c270();
        let marker = MarkerSpec::bench_square(900.0).unwrap();
        let err = sample_pose_cloud(1, &PoseRanges::default(), &rig, &marker, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(sample_pose_cloud(0, &PoseRanges::default(), &rig, &MarkerSpec::bench_square(50.0).unwrap(), None).is_err());
    }

    #[test]
    fn parse_ranges() {
        let r = PoseRanges::parse("z=600:900, yaw=-90:90,margin=1.5").unwrap();
        assert_eq!(r.z_mm, (600.0, 900.0));
        assert_eq!(r.yaw_deg, (-90.0, 90.0));
        assert_eq!(r.roll_deg, (-45.0, 45.0));
        assert_eq!(r.margin, 1.5);
        assert!(PoseRanges::parse("z=900:600").is_err());
        assert!(PoseRanges::parse("w=1:2").is_err());
        assert!(PoseRanges::parse("roll=-100:0").is_err());
    }

    #[test]
    fn poses_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.csv");
        let (_, _, poses) = logitech_cloud(20);
        write_poses_csv(&path, &poses).unwrap();
        let back = read_poses_csv(&path).unwrap();
        assert_eq!(back.len(), 20);
        for (i, (id, p)) in back.iter().enumerate() {
            assert_eq!(*id, i as u64);
            assert_eq!(*p, poses[i]);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pose_id,X,Y,Z,roll,pitch,yaw\n"));
    }
}
