use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker pose in the camera frame: translation in mm and intrinsic
/// Z-Y-X Euler angles in degrees, `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// Rigid transform taking marker-local coordinates to the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera-frame point to marker-local coordinates.
    pub fn inverse_apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

/// Wraps an angle in degrees to `(-180, 180]`.
pub fn wrap_degrees(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

impl Pose6D {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll,
            pitch,
            yaw,
        }
    }

    /// Parses `X,Y,Z,roll,pitch,yaw`.
    pub fn parse(text: &str) -> Result<Self> {
        let v: Vec<f64> = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("pose '{text}': {e}")))?;
        match v.as_slice() {
            &[x, y, z, roll, pitch, yaw] => Ok(Self::new(x, y, z, roll, pitch, yaw)),
            _ => Err(Error::Input(format!(
                "pose '{text}' needs 6 comma-separated values X,Y,Z,roll,pitch,yaw"
            ))),
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw.to_radians());
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.pitch.to_radians());
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll.to_radians());
        (rz * ry * rx).into_inner()
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation(),
            translation: self.translation(),
        }
    }

    /// Recovers canonical angles from a rotation matrix: yaw and roll in
    /// `(-180, 180]`, pitch in `[-90, 90]`. At |pitch| = 90 the roll is set to 0.
    pub fn from_transform(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let r = rotation;
        let cos_pitch = r[(0, 0)].hypot(r[(1, 0)]);
        let pitch = (-r[(2, 0)]).atan2(cos_pitch);
        let (roll, yaw) = if cos_pitch < 1e-9 {
            (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
        } else {
            (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
        };
        Self {
            x: translation[0],
            y: translation[1],
            z: translation[2],
            roll: wrap_degrees(roll.to_degrees()),
            pitch: pitch.to_degrees(),
            yaw: wrap_degrees(yaw.to_degrees()),
        }
    }

    /// Same rotation expressed with canonical angles.
    pub fn canonical(&self) -> Self {
        if (-90.0..=90.0).contains(&self.pitch) {
            return Self {
                roll: wrap_degrees(self.roll),
                yaw: wrap_degrees(self.yaw),
                ..*self
            };
        }
        Self::from_transform(&self.rotation(), &self.translation())
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x, self.y, self.z, self.roll, self.pitch, self.yaw];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("pose has non-finite values: {self:?}")));
        }
        if !(self.z > 0.0) {
            return Err(Error::Input(format!(
                "marker must be in front of the camera (Z = {})",
                self.z
            )));
        }
        Ok(())
    }
}
