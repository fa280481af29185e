use std::f64::consts::PI;

use serde::Serialize;

use super::bessel::bessel_j1;
use crate::camera::CameraRig;
use crate::error::{Error, Result};

/// First zero of J1 divided by pi.
pub const R_Z: f64 = 1.219_669_891_266_504_5;

/// Largest kernel radius (in taps) accepted before the blur is deemed implausible.
pub const MAX_KERNEL_RADIUS: usize = 25;

/// Taps weaker than this fraction of the center tap are dropped.
const TAP_FLOOR: f64 = 2e-3;

/// Landau's bound: `|J1(x)| <= LANDAU_C * x^(-1/3)` for all x > 0.
const LANDAU_C: f64 = 0.7858;

/// Airy pattern convolved with the pixel box, sampled at the pixel pitch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffractionKernel {
    /// Half-width in taps; the grid is `(2 * radius + 1)^2`.
    pub radius: usize,
    /// Row-major weights summing to one.
    pub taps: Vec<f64>,
    pub pitch_um: f64,
    pub airy_radius_um: f64,
}

impl DiffractionKernel {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Weight at offset `(dx, dy)` from the center; zero outside the grid.
    pub fn tap(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.taps[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.taps.chunks(self.side()) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Normalized Airy intensity at radius `r` for first-zero radius `r_a` (same units).
pub fn airy_psf(r: f64, r_a: f64) -> f64 {
    let x = PI * r * R_Z / r_a;
    if x.abs() < 1e-8 {
        return 1.0 - x * x / 4.0;
    }
    let a = 2.0 * bessel_j1(x) / x;
    a * a
}

/// Sensor-plane Airy radius in um: `2 r_z lambda N`.
pub fn airy_radius(rig: &CameraRig) -> f64 {
    2.0 * R_Z * rig.wavelength_nm * 1e-3 * rig.lens.f_number
}

pub fn build_kernel(rig: &CameraRig) -> Result<DiffractionKernel> {
    build_kernel_for(rig.sensor.pixel_pitch_um, airy_radius(rig))
}

/// Kernel for pixel pitch `pitch_um` and Airy radius `r_a_um`.
///
/// Each tap integrates the Airy pattern over one pixel with an SxS midpoint
/// rule. The kernel keeps the smallest square holding every tap that reaches
/// 0.2% of the center tap; rings beyond are skipped once Landau's envelope
/// proves them below that floor.
pub fn build_kernel_for(pitch_um: f64, r_a_um: f64) -> Result<DiffractionKernel> {
    if !(pitch_um > 0.0) || !(r_a_um > 0.0) {
        return Err(Error::Config(format!(
            "kernel needs positive pitch and Airy radius (got {pitch_um} um, {r_a_um} um)"
        )));
    }
    // work in pixel units
    let k = PI * R_Z * pitch_um / r_a_um;
    let subsamples = ((16.0 * pitch_um / r_a_um).ceil() as usize).clamp(16, 512);

    let tap_energy = |i: usize, j: usize| -> f64 {
        let h = 1.0 / subsamples as f64;
        let mut sum = 0.0;
        for a in 0..subsamples {
            let x = i as f64 - 0.5 + (a as f64 + 0.5) * h;
            for b in 0..subsamples {
                let y = j as f64 - 0.5 + (b as f64 + 0.5) * h;
                let kr = k * x.hypot(y);
                sum += if kr < 1e-8 {
                    1.0
                } else {
                    let g = 2.0 * bessel_j1(kr) / kr;
                    g * g
                };
            }
        }
        sum * h * h
    };
    // bound on any tap in Chebyshev ring m >= 1: g <= 4 c^2 (k r)^(-8/3), r >= m - 1/2
    let ring_bound = |m: usize| 4.0 * LANDAU_C * LANDAU_C * (k * (m as f64 - 0.5)).powf(-8.0 / 3.0);

    // octant values (j <= i), ring by ring
    let center = tap_energy(0, 0);
    let floor = TAP_FLOOR * center;
    let mut octant: Vec<Vec<f64>> = vec![vec![center]];
    let mut radius = 0;
    let mut m = 1;
    while ring_bound(m) >= floor {
        let ring: Vec<f64> = (0..=m).map(|j| tap_energy(m, j)).collect();
        if ring.iter().any(|&t| t >= floor) {
            radius = m;
            if radius > MAX_KERNEL_RADIUS {
                return Err(Error::Config(format!(
                    "diffraction kernel would exceed {MAX_KERNEL_RADIUS} taps in radius \
                     (Airy radius {r_a_um:.3} um vs pitch {pitch_um:.3} um)"
                )));
            }
        }
        octant.push(ring);
        m += 1;
    }

    let side = 2 * radius + 1;
    let mut taps = vec![0.0; side * side];
    let r = radius as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (a, b) = (dx.unsigned_abs(), dy.unsigned_abs());
            let (i, j) = if a >= b { (a, b) } else { (b, a) };
            taps[((dy + r) as usize) * side + (dx + r) as usize] = octant[i][j];
        }
    }
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(DiffractionKernel {
        radius,
        taps,
        pitch_um,
        airy_radius_um: r_a_um,
    })
}
