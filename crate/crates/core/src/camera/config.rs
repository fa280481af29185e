//! Camera file (JSON) reader and writer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraRig, DistortionCoefficients, LensRig, SensorSpec};
use crate::error::{Error, Result};

/// On-disk camera description.
///
/// The focal length may be given in mm (`f_mm`), in pixels (`fx_px`, as
/// calibration tools emit it) or both; when both are present they must agree
/// through the pixel pitch. `dist` uses the `[k1,k2,p1,p2,k3,k4,k5,k6,s1,s2,s3,s4]`
/// ordering and may be shorter than 12 entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fx_px: Option<f64>,
    pub cx_px: f64,
    pub cy_px: f64,
    pub f_number: f64,
    pub focus_mm: f64,
    #[serde(default)]
    pub dist: Vec<f64>,
    pub width: u32,
    pub height: u32,
    pub pitch_um: f64,
    pub bit_depth: u8,
    pub wavelength_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coc_classical: Option<bool>,
}

const FOCAL_CONSISTENCY: f64 = 1e-3;

impl CameraFile {
    pub fn from_rig(rig: &CameraRig) -> Self {
        Self {
            f_mm: Some(rig.lens.focal_length_mm),
            fx_px: Some(rig.focal_length_px()),
            cx_px: rig.lens.principal_point_px[0],
            cy_px: rig.lens.principal_point_px[1],
            f_number: rig.lens.f_number,
            focus_mm: rig.lens.focus_distance_mm,
            dist: rig.distortion.to_opencv().to_vec(),
            width: rig.sensor.width,
            height: rig.sensor.height,
            pitch_um: rig.sensor.pixel_pitch_um,
            bit_depth: rig.sensor.bit_depth,
            wavelength_nm: rig.wavelength_nm,
            valid_radius: Some(rig.distortion.valid_radius),
            coc_classical: Some(rig.coc_classical),
        }
    }

    pub fn into_rig(self) -> Result<CameraRig> {
        let sensor = SensorSpec::new(self.width, self.height, self.pitch_um, self.bit_depth)?;
        let pitch_mm = sensor.pixel_pitch_mm();
        let f_mm = match (self.f_mm, self.fx_px) {
            (Some(f), None) => f,
            (None, Some(fx)) => fx * pitch_mm,
            (Some(f), Some(fx)) => {
                let from_px = fx * pitch_mm;
                if ((f - from_px) / f).abs() > FOCAL_CONSISTENCY {
                    return Err(Error::Config(format!(
                        "f_mm = {f} disagrees with fx_px = {fx} at pitch {} um ({from_px:.5} mm)",
                        self.pitch_um
                    )));
                }
                f
            }
            (None, None) => {
                return Err(Error::Config("camera needs f_mm or fx_px".into()));
            }
        };
        let lens = LensRig::new(f_mm, [self.cx_px, self.cy_px], self.f_number, self.focus_mm)?;
        let mut distortion = DistortionCoefficients::from_opencv(&self.dist)?;
        if let Some(r) = self.valid_radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("valid_radius must be positive, got {r}")));
            }
            distortion.valid_radius = r;
        }
        let mut rig = CameraRig::new(lens, distortion, sensor, self.wavelength_nm)?;
        rig.coc_classical = self.coc_classical.unwrap_or(false);
        Ok(rig)
    }
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<CameraRig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CameraFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    file.into_rig().map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
