//! Rational radial + tangential + thin-prism lens distortion (the 12-coefficient
//! model emitted by common calibration toolkits).
//!
//! All functions operate on normalized image coordinates, i.e. `(x/z, y/z)` for
//! a camera-frame point. `distort` maps ideal pinhole coordinates to the
//! coordinates actually observed through the lens; `undistort` inverts it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNDISTORT_MAX_ITER: usize = 20;
const UNDISTORT_TOL: f64 = 1e-10;

/// Distortion coefficients `k1..k6`, `p1, p2`, `s1..s4`.
///
/// `valid_radius` bounds the ideal normalized radius the model is trusted on.
/// It is infinite until a [`CameraRig`](super::CameraRig) derives it from the
/// sensor extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionCoefficients {
    pub radial: [f64; 6],
    pub tangential: [f64; 2],
    pub prism: [f64; 4],
    #[serde(skip, default = "infinite")]
    pub valid_radius: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl Default for DistortionCoefficients {
    fn default() -> Self {
        Self::none()
    }
}

impl DistortionCoefficients {
    pub fn none() -> Self {
        Self::new([0.0; 6], [0.0; 2], [0.0; 4])
    }

    pub fn new(radial: [f64; 6], tangential: [f64; 2], prism: [f64; 4]) -> Self {
        Self {
            radial,
            tangential,
            prism,
            valid_radius: f64::INFINITY,
        }
    }

    /// Builds coefficients from the calibration-tool ordering
    /// `[k1, k2, p1, p2, k3, k4, k5, k6, s1, s2, s3, s4]`.
    /// Shorter slices are zero-padded.
    pub fn from_opencv(values: &[f64]) -> Result<Self> {
        if values.len() > 12 {
            return Err(Error::Config(format!(
                "distortion vector has {} entries, at most 12 are supported",
                values.len()
            )));
        }
        let mut v = [0.0; 12];
        v[..values.len()].copy_from_slice(values);
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("non-finite distortion coefficient {bad}")));
        }
        Ok(Self::new(
            [v[0], v[1], v[4], v[5], v[6], v[7]],
            [v[2], v[3]],
            [v[8], v[9], v[10], v[11]],
        ))
    }

    pub fn to_opencv(&self) -> [f64; 12] {
        let k = &self.radial;
        let p = &self.tangential;
        let s = &self.prism;
        [
            k[0], k[1], p[0], p[1], k[2], k[3], k[4], k[5], s[0], s[1], s[2], s[3],
        ]
    }

    pub fn with_valid_radius(mut self, radius: f64) -> Self {
        self.valid_radius = radius;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.to_opencv().iter().all(|&c| c == 0.0)
    }

    /// Denominator of the rational radial term at squared radius `r2`.
    pub fn radial_denominator(&self, r2: f64) -> f64 {
        let k = &self.radial;
        1.0 + r2 * (k[3] + r2 * (k[4] + r2 * k[5]))
    }

    /// Checks the rational denominator stays positive on `[0, valid_radius]`.
    pub fn check_denominator(&self) -> Result<()> {
        if !self.valid_radius.is_finite() {
            return Ok(());
        }
        const STEPS: usize = 1024;
        for i in 0..=STEPS {
            let r = self.valid_radius * i as f64 / STEPS as f64;
            let den = self.radial_denominator(r * r);
            if den <= 0.0 {
                return Err(Error::Config(format!(
                    "rational distortion denominator {den:.3e} is not positive at radius {r:.4}"
                )));
            }
        }
        Ok(())
    }

    fn eval(&self, u: f64, v: f64) -> Eval {
        let k = &self.radial;
        let [p1, p2] = self.tangential;
        let [s1, s2, s3, s4] = self.prism;
        let r2 = u * u + v * v;
        let num = 1.0 + r2 * (k[0] + r2 * (k[1] + r2 * k[2]));
        let den = self.radial_denominator(r2);
        let ratio = num / den;
        let du = u * ratio + 2.0 * p1 * u * v + p2 * (r2 + 2.0 * u * u) + s1 * r2 + s2 * r2 * r2;
        let dv = v * ratio + p1 * (r2 + 2.0 * v * v) + 2.0 * p2 * u * v + s3 * r2 + s4 * r2 * r2;
        Eval {
            r2,
            num,
            den,
            ratio,
            out: [du, dv],
        }
    }

    /// Jacobian of [`distort`] with respect to `(u, v)`, row-major.
    pub fn jacobian(&self, u: f64, v: f64) -> [[f64; 2]; 2] {
        let k = &self.radial;
        let [p1, p2] = self.tangential;
        let [s1, s2, s3, s4] = self.prism;
        let e = self.eval(u, v);
        let r2 = e.r2;
        let dnum = k[0] + r2 * (2.0 * k[1] + 3.0 * r2 * k[2]);
        let dden = k[3] + r2 * (2.0 * k[4] + 3.0 * r2 * k[5]);
        // d(ratio)/d(r2)
        let dl = (dnum * e.den - e.num * dden) / (e.den * e.den);
        let (dr2u, dr2v) = (2.0 * u, 2.0 * v);
        [
            [
                e.ratio + u * dl * dr2u + 2.0 * p1 * v + 6.0 * p2 * u + s1 * dr2u + 2.0 * s2 * r2 * dr2u,
                u * dl * dr2v + 2.0 * p1 * u + p2 * dr2v + s1 * dr2v + 2.0 * s2 * r2 * dr2v,
            ],
            [
                v * dl * dr2u + p1 * dr2u + 2.0 * p2 * v + s3 * dr2u + 2.0 * s4 * r2 * dr2u,
                e.ratio + v * dl * dr2v + 6.0 * p1 * v + 2.0 * p2 * u + s3 * dr2v + 2.0 * s4 * r2 * dr2v,
            ],
        ]
    }
}

struct Eval {
    r2: f64,
    num: f64,
    den: f64,
    ratio: f64,
    out: [f64; 2],
}

/// Applies the lens distortion to ideal normalized coordinates.
pub fn distort(u: f64, v: f64, coeffs: &DistortionCoefficients) -> Result<(f64, f64)> {
    let r = u.hypot(v);
    if r > coeffs.valid_radius {
        return Err(Error::Domain(format!(
            "normalized radius {r:.4} outside the valid distortion radius {:.4}",
            coeffs.valid_radius
        )));
    }
    let e = coeffs.eval(u, v);
    if e.den <= 0.0 {
        return Err(Error::Domain(format!(
            "rational distortion denominator {:.3e} is not positive at radius {r:.4}",
            e.den
        )));
    }
    Ok((e.out[0], e.out[1]))
}

/// Inverts [`distort`]: finds ideal coordinates whose distorted image is `(ud, vd)`.
///
/// Damped Newton iteration on `distort(x) - observed`, starting from the
/// observed point. Fails if the residual is still above 1e-10 after 20 steps.
pub fn undistort(ud: f64, vd: f64, coeffs: &DistortionCoefficients) -> Result<(f64, f64)> {
    let (u, v) = undistort_unbounded(ud, vd, coeffs)?;
    let r = u.hypot(v);
    if r > coeffs.valid_radius {
        return Err(Error::Domain(format!(
            "undistorted radius {r:.4} outside the valid distortion radius {:.4}",
            coeffs.valid_radius
        )));
    }
    Ok((u, v))
}

pub(crate) fn undistort_unbounded(
    ud: f64,
    vd: f64,
    coeffs: &DistortionCoefficients,
) -> Result<(f64, f64)> {
    let residual = |u: f64, v: f64| {
        let e = coeffs.eval(u, v);
        (e.out[0] - ud, e.out[1] - vd, e.den)
    };
    let (mut u, mut v) = (ud, vd);
    let (mut fu, mut fv, _) = residual(u, v);
    let mut norm = fu.hypot(fv);
    for _ in 0..UNDISTORT_MAX_ITER {
        if norm <= 1e-15 {
            break;
        }
        let j = coeffs.jacobian(u, v);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            break;
        }
        let su = -(j[1][1] * fu - j[0][1] * fv) / det;
        let sv = -(-j[1][0] * fu + j[0][0] * fv) / det;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let (nu, nv) = (u + scale * su, v + scale * sv);
            let (gu, gv, den) = residual(nu, nv);
            let n = gu.hypot(gv);
            if den > 0.0 && n < norm {
                u = nu;
                v = nv;
                fu = gu;
                fv = gv;
                norm = n;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || (su.hypot(sv) * scale) <= 1e-16 * (1.0 + u.hypot(v)) {
            break;
        }
    }
    if norm > UNDISTORT_TOL || !norm.is_finite() {
        return Err(Error::Convergence(format!(
            "undistort({ud:.6}, {vd:.6}) residual {norm:.3e} after {UNDISTORT_MAX_ITER} iterations"
        )));
    }
    Ok((u, v))
}
