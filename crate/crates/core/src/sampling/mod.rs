//! Low-discrepancy point generators.
//!
//! * Sobol points drive sub-pixel and lens sampling in the renderer.
//! * Halton points (optionally digit-permuted) drive 6-DoF pose sampling.
//! * The concentric square-to-disk map turns unit-square samples into lens positions.
//!
//! Every generator is a pure function of its index, so callers can evaluate any
//! sample independently and in parallel.

mod halton;
mod joe_kuo;
mod sobol;

pub use halton::{faure_permutation, first_primes, halton_point, radical_inverse, HaltonConfig};
pub use sobol::{sobol_sample, SobolTable};

use std::f64::consts::FRAC_PI_4;

/// Shirley-Chiu concentric mapping of `[0,1]^2` onto the unit disk.
pub fn concentric_disk_map(u: f64, v: f64) -> (f64, f64) {
    let a = 2.0 * u - 1.0;
    let b = 2.0 * v - 1.0;
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, theta) = if a.abs() > b.abs() {
        (a, FRAC_PI_4 * (b / a))
    } else {
        (b, 2.0 * FRAC_PI_4 - FRAC_PI_4 * (a / b))
    };
    (r * theta.cos(), r * theta.sin())
}
