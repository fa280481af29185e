//! Synthetic camera: thin lens, calibration-style distortion and sensor.
//!
//! Pixel coordinates follow the calibration-toolkit convention: pixel `(i, j)`
//! has its center at `(i, j)` and covers `[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)`.
//! The camera frame has x right, y down and z along the optical axis.

mod config;
mod distortion;

pub use config::{load_camera, CameraFile};
pub use distortion::{distort, undistort, DistortionCoefficients};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Thin-lens parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensRig {
    pub focal_length_mm: f64,
    pub principal_point_px: [f64; 2],
    pub f_number: f64,
    pub focus_distance_mm: f64,
}

impl LensRig {
    pub fn new(
        focal_length_mm: f64,
        principal_point_px: [f64; 2],
        f_number: f64,
        focus_distance_mm: f64,
    ) -> Result<Self> {
        let lens = Self {
            focal_length_mm,
            principal_point_px,
            f_number,
            focus_distance_mm,
        };
        lens.validate()?;
        Ok(lens)
    }

    fn validate(&self) -> Result<()> {
        if !(self.focal_length_mm > 0.0 && self.focal_length_mm.is_finite()) {
            return Err(Error::Config(format!(
                "focal length must be positive, got {}",
                self.focal_length_mm
            )));
        }
        if !(self.f_number > 0.0 && self.f_number.is_finite()) {
            return Err(Error::Config(format!(
                "f-number must be positive, got {}",
                self.f_number
            )));
        }
        if self.focus_distance_mm <= self.focal_length_mm || self.focus_distance_mm.is_nan() {
            return Err(Error::Config(format!(
                "focus distance {} mm must exceed the focal length {} mm",
                self.focus_distance_mm, self.focal_length_mm
            )));
        }
        if !self.principal_point_px.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("principal point must be finite".into()));
        }
        Ok(())
    }

    /// Entrance pupil diameter `d = f / N` in mm.
    pub fn pupil_diameter_mm(&self) -> f64 {
        self.focal_length_mm / self.f_number
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub width: u32,
    pub height: u32,
    pub pixel_pitch_um: f64,
    pub bit_depth: u8,
}

impl SensorSpec {
    pub fn new(width: u32, height: u32, pixel_pitch_um: f64, bit_depth: u8) -> Result<Self> {
        if width < 16 || height < 16 {
            return Err(Error::Config(format!(
                "sensor must be at least 16x16 pixels, got {width}x{height}"
            )));
        }
        if !(pixel_pitch_um > 0.0 && pixel_pitch_um.is_finite()) {
            return Err(Error::Config(format!(
                "pixel pitch must be positive, got {pixel_pitch_um}"
            )));
        }
        if !matches!(bit_depth, 8 | 10 | 12) {
            return Err(Error::Config(format!(
                "bit depth must be 8, 10 or 12, got {bit_depth}"
            )));
        }
        Ok(Self {
            width,
            height,
            pixel_pitch_um,
            bit_depth,
        })
    }

    /// Number of quantization levels, `2^bit_depth`.
    pub fn levels(&self) -> u32 {
        1 << self.bit_depth
    }

    pub fn max_level(&self) -> u16 {
        (self.levels() - 1) as u16
    }

    pub fn pixel_pitch_mm(&self) -> f64 {
        self.pixel_pitch_um * 1e-3
    }
}

/// Complete synthetic camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub lens: LensRig,
    pub distortion: DistortionCoefficients,
    pub sensor: SensorSpec,
    pub wavelength_nm: f64,
    /// Use the classical `(z_f - f)` circle-of-confusion denominator instead of `(f + z_f)`.
    #[serde(default)]
    pub coc_classical: bool,
}

impl CameraRig {
    /// Assembles a rig and derives the valid distortion radius (sensor
    /// circumradius in normalized coordinates, scaled by 1.05) unless the
    /// coefficients already carry a finite one.
    pub fn new(
        lens: LensRig,
        distortion: DistortionCoefficients,
        sensor: SensorSpec,
        wavelength_nm: f64,
    ) -> Result<Self> {
        lens.validate()?;
        if !(300.0..=1100.0).contains(&wavelength_nm) {
            return Err(Error::Config(format!(
                "wavelength {wavelength_nm} nm outside [300, 1100]"
            )));
        }
        let mut rig = Self {
            lens,
            distortion,
            sensor,
            wavelength_nm,
            coc_classical: false,
        };
        if !rig.distortion.valid_radius.is_finite() {
            let radius = rig.sensor_circumradius()? * 1.05;
            rig.distortion.valid_radius = radius;
        }
        rig.distortion.check_denominator()?;
        Ok(rig)
    }

    /// Logitech HD C270 webcam.
    pub fn logitech_c270() -> Self {
        Self::new(
            LensRig::new(4.47, [319.5, 239.5], 2.8, 150.0).unwrap(),
            DistortionCoefficients::from_opencv(&[-0.286, 0.057, 0.0, 0.0, 0.112]).unwrap(),
            SensorSpec::new(640, 480, 8.3, 8).unwrap(),
            650.0,
        )
        .expect("preset is valid")
    }

    /// Canon EOS Rebel XS with the 18-55 mm kit lens.
    pub fn canon_rebel_xs() -> Self {
        Self::new(
            LensRig::new(26.49, [1407.5, 939.5], 4.5, 700.0).unwrap(),
            DistortionCoefficients::from_opencv(&[-0.125, 3.855, 0.0, 0.0, -40.371]).unwrap(),
            SensorSpec::new(2816, 1880, 5.7, 12).unwrap(),
            650.0,
        )
        .expect("preset is valid")
    }

    /// Focal length in pixels, `f / delta`.
    pub fn focal_length_px(&self) -> f64 {
        self.lens.focal_length_mm / self.sensor.pixel_pitch_mm()
    }

    /// Largest normalized radius (observed or ideal) reached by a sensor corner.
    fn sensor_circumradius(&self) -> Result<f64> {
        let w = self.sensor.width as f64;
        let h = self.sensor.height as f64;
        let mut radius: f64 = 0.0;
        for (x, y) in [(-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)] {
            let [ud, vd] = self.pixel_to_distorted(x, y);
            let (u, v) = distortion::undistort_unbounded(ud, vd, &self.distortion)?;
            radius = radius.max(ud.hypot(vd)).max(u.hypot(v));
        }
        Ok(radius)
    }

    /// Pixel coordinate to distorted normalized coordinate.
    pub fn pixel_to_distorted(&self, x: f64, y: f64) -> [f64; 2] {
        let f = self.focal_length_px();
        let [cx, cy] = self.lens.principal_point_px;
        [(x - cx) / f, (y - cy) / f]
    }

    pub fn distorted_to_pixel(&self, u: f64, v: f64) -> [f64; 2] {
        let f = self.focal_length_px();
        let [cx, cy] = self.lens.principal_point_px;
        [f * u + cx, f * v + cy]
    }

    /// Pixel coordinate to ideal (undistorted) normalized coordinate.
    pub fn pixel_to_ideal(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let [ud, vd] = self.pixel_to_distorted(x, y);
        let (u, v) = undistort(ud, vd, &self.distortion)?;
        Ok([u, v])
    }

    /// Ideal normalized coordinate to pixel coordinate.
    pub fn ideal_to_pixel(&self, u: f64, v: f64) -> Result<[f64; 2]> {
        let (ud, vd) = distort(u, v, &self.distortion)?;
        Ok(self.distorted_to_pixel(ud, vd))
    }

    /// Projects a camera-frame point (mm) to pixel coordinates.
    pub fn project(&self, point: [f64; 3]) -> Result<[f64; 2]> {
        let [x, y, z] = point;
        if !(z > 0.0) {
            return Err(Error::Domain(format!("point is behind the camera (z = {z})")));
        }
        self.ideal_to_pixel(x / z, y / z)
    }

    pub fn in_image(&self, p: [f64; 2]) -> bool {
        let w = self.sensor.width as f64;
        let h = self.sensor.height as f64;
        p[0] >= -0.5 && p[1] >= -0.5 && p[0] < w - 0.5 && p[1] < h - 0.5
    }

    /// Circle of confusion diameter (mm, sensor plane) for an object at depth `z` mm.
    pub fn circle_of_confusion(&self, z: f64) -> f64 {
        circle_of_confusion(z, self)
    }

    /// SHA-256 of the canonical camera file rendering.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&CameraFile::from_rig(self)).expect("serializable");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Gaussian lens equation: image distance `z_s` for an object at `z_f` through
/// a lens of focal length `f` (all mm). Infinite `z_f` yields `f`.
pub fn image_distance(z_f: f64, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Domain(format!("focal length must be positive, got {f}")));
    }
    if !(z_f > f) {
        return Err(Error::Domain(format!(
            "object distance {z_f} mm does not exceed the focal length {f} mm"
        )));
    }
    if z_f.is_infinite() {
        return Ok(f);
    }
    Ok(f * z_f / (z_f - f))
}

/// Circle of confusion diameter, `|d f (z - z_f) / (z (f + z_f))|` with `d = f / N`.
///
/// With `rig.coc_classical` the denominator uses `(z_f - f)` instead.
pub fn circle_of_confusion(z: f64, rig: &CameraRig) -> f64 {
    let f = rig.lens.focal_length_mm;
    let z_f = rig.lens.focus_distance_mm;
    let d = rig.lens.pupil_diameter_mm();
    let denom = if rig.coc_classical { z_f - f } else { f + z_f };
    (d * f * (z - z_f) / (z * denom)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_conjugate() {
        assert_abs_diff_eq!(image_distance(20.0, 10.0).unwrap(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn logitech_image_distance() {
        let zs = image_distance(150.0, 4.47).unwrap();
        assert!((1.0 / 150.0 + 1.0 / zs - 1.0 / 4.47).abs() < 1e-12);
        assert_abs_diff_eq!(zs, 4.6073, epsilon = 1e-4);
    }

    #[test]
    fn image_distance_limits() {
        assert_eq!(image_distance(f64::INFINITY, 4.47).unwrap(), 4.47);
        assert_abs_diff_eq!(image_distance(1e12, 4.47).unwrap(), 4.47, epsilon = 1e-9);
        assert!(matches!(image_distance(4.47, 4.47), Err(Error::Domain(_))));
        assert!(image_distance(2.0, 4.47).is_err());
    }

    #[test]
    fn coc_values() {
        let rig = CameraRig::logitech_c270();
        assert_eq!(rig.circle_of_confusion(150.0), 0.0);
        // d = 4.47 / 2.8; d * f * 850 / (1000 * 154.47)
        let expected = (4.47 / 2.8) * 4.47 * 850.0 / (1000.0 * 154.47);
        assert_abs_diff_eq!(rig.circle_of_confusion(1000.0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(rig.circle_of_confusion(1000.0), 0.03927, epsilon = 1e-5);
        assert!(rig.circle_of_confusion(300.0) > 0.0);
        assert!(rig.circle_of_confusion(75.0) > 0.0);
    }

    #[test]
    fn coc_classical_flag() {
        let mut rig = CameraRig::logitech_c270();
        rig.coc_classical = true;
        let expected = (4.47 / 2.8) * 4.47 * 850.0 / (1000.0 * (150.0 - 4.47));
        assert_abs_diff_eq!(rig.circle_of_confusion(1000.0), expected, epsilon = 1e-15);
    }

    #[test]
    fn project_principal_axis() {
        let rig = CameraRig::logitech_c270();
        for z in [1.0, 150.0, 1e4] {
            let p = rig.project([0.0, 0.0, z]).unwrap();
            assert_eq!(p, [319.5, 239.5]);
        }
        assert!(rig.project([0.0, 0.0, 0.0]).is_err());
        assert!(rig.project([1.0, 0.0, -5.0]).is_err());
    }

    #[test]
    fn project_pinhole_reduction() {
        let mut rig = CameraRig::logitech_c270();
        rig.distortion = DistortionCoefficients::none().with_valid_radius(2.0);
        let f = rig.focal_length_px();
        let p = rig.project([30.0, -20.0, 500.0]).unwrap();
        assert_abs_diff_eq!(p[0], f * 30.0 / 500.0 + 319.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], f * -20.0 / 500.0 + 239.5, epsilon = 1e-12);
    }

    #[test]
    fn project_logitech_barrel() {
        let rig = CameraRig::logitech_c270();
        let f = rig.focal_length_px();
        let p = rig.project([100.0, 0.0, 1000.0]).unwrap();
        let pinhole = f * 0.1 + 319.5;
        let factor = 1.0 - 0.286 * 0.01 + 0.057 * 1e-4 + 0.112 * 1e-6;
        assert!(p[0] < pinhole);
        assert_abs_diff_eq!(p[0], f * 0.1 * factor + 319.5, epsilon = 1e-10);
        assert_abs_diff_eq!(p[1], 239.5, epsilon = 1e-12);
    }

    #[test]
    fn rig_validation() {
        assert!(LensRig::new(4.47, [0.0, 0.0], 2.8, 4.0).is_err());
        assert!(LensRig::new(-1.0, [0.0, 0.0], 2.8, 100.0).is_err());
        assert!(LensRig::new(4.0, [0.0, 0.0], 0.0, 100.0).is_err());
        assert!(SensorSpec::new(8, 480, 8.3, 8).is_err());
        assert!(SensorSpec::new(640, 480, 8.3, 9).is_err());
        assert!(SensorSpec::new(640, 480, 0.0, 8).is_err());
        let base = CameraRig::logitech_c270();
        assert!(CameraRig::new(base.lens.clone(), base.distortion.clone(), base.sensor.clone(), 200.0).is_err());
        assert_eq!(base.sensor.levels(), 256);
    }

    #[test]
    fn default_valid_radius_covers_sensor() {
        let rig = CameraRig::logitech_c270();
        assert!(rig.distortion.valid_radius > 0.8 && rig.distortion.valid_radius < 1.0);
        for (x, y) in [(-0.5, -0.5), (639.49, 479.49), (0.0, 240.0)] {
            assert!(rig.pixel_to_ideal(x, y).is_ok());
        }
        let canon = CameraRig::canon_rebel_xs();
        assert!(canon.pixel_to_ideal(-0.5, -0.5).is_ok());
    }

    proptest! {
        #[test]
        fn image_distance_residual(zf in 4.48f64..1e6) {
            let zs = image_distance(zf, 4.47).unwrap();
            prop_assert!((1.0 / zf + 1.0 / zs - 1.0 / 4.47).abs() < 1e-12);
        }

        #[test]
        fn coc_monotone_away_from_focus(a in 1.0f64..5000.0, b in 1.0f64..5000.0) {
            let rig = CameraRig::logitech_c270();
            let zf = rig.lens.focus_distance_mm;
            // far side: larger z is farther from focus
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo > zf && hi > lo {
                prop_assert!(rig.circle_of_confusion(hi) > rig.circle_of_confusion(lo));
            }
            // near side, scaled to (0, z_f)
            let (n1, n2) = (lo / 5000.0 * zf, hi / 5000.0 * zf);
            if n2 > n1 && n2 < zf {
                prop_assert!(rig.circle_of_confusion(n1) > rig.circle_of_confusion(n2));
            }
            prop_assert!(rig.circle_of_confusion(a) >= 0.0);
            if (a - zf).abs() > 1e-9 {
                prop_assert!(rig.circle_of_confusion(a) > 0.0);
            }
        }

        #[test]
        fn radial_symmetry_without_tangential_terms(r in 0.0f64..0.8, t1 in 0.0f64..std::f64::consts::TAU, t2 in 0.0f64..std::f64::consts::TAU) {
            let c = DistortionCoefficients::from_opencv(&[-0.286, 0.057, 0.0, 0.0, 0.112, 0.01, -0.02, 0.003]).unwrap();
            let (a, b) = distort(r * t1.cos(), r * t1.sin(), &c).unwrap();
            let (cc, d) = distort(r * t2.cos(), r * t2.sin(), &c).unwrap();
            prop_assert!((a.hypot(b) - cc.hypot(d)).abs() < 1e-14);
        }

        #[test]
        fn distortion_round_trips(x in -0.55f64..0.55, y in -0.4f64..0.4) {
            let rig = CameraRig::logitech_c270();
            let c = &rig.distortion;
            let (du, dv) = distort(x, y, c).unwrap();
            let (u, v) = undistort(du, dv, c).unwrap();
            prop_assert!((u - x).abs() < 1e-10 && (v - y).abs() < 1e-10);
            let (u2, v2) = undistort(x, y, c).unwrap();
            let (du2, dv2) = distort(u2, v2, c).unwrap();
            prop_assert!((du2 - x).abs() < 1e-10 && (dv2 - y).abs() < 1e-10);
        }

        #[test]
        fn full_model_round_trips(x in -0.5f64..0.5, y in -0.5f64..0.5) {
            let c = DistortionCoefficients::from_opencv(&[
                -0.2, 0.05, 0.001, -0.002, 0.01, 0.02, -0.01, 0.003, 0.001, 0.002, -0.001, 0.0005,
            ]).unwrap();
            let (du, dv) = distort(x, y, &c).unwrap();
            let (u, v) = undistort(du, dv, &c).unwrap();
            prop_assert!((u - x).abs() < 1e-10 && (v - y).abs() < 1e-10);
        }
    }
}
