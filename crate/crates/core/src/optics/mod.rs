//! Sensor-side post-processing of the traced radiance: diffraction blur,
//! Rec. 709 encoding and quantization.

mod bessel;
mod kernel;

pub use bessel::bessel_j1;
pub use kernel::{airy_psf, airy_radius, build_kernel, build_kernel_for, DiffractionKernel, R_Z};

use rayon::prelude::*;

/// Convolves a row-major `width x height` raster with `kernel`, replicating
/// edge pixels outside the image.
pub fn convolve(image: &[f64], width: usize, height: usize, kernel: &DiffractionKernel) -> Vec<f64> {
    assert_eq!(image.len(), width * height, "raster size mismatch");
    let r = kernel.radius as isize;
    let side = kernel.side();
    let clamp_col: Vec<Vec<usize>> = (-r..=r)
        .map(|dx| {
            (0..width as isize)
                .map(|x| (x + dx).clamp(0, width as isize - 1) as usize)
                .collect()
        })
        .collect();
    let mut out = vec![0.0; image.len()];
    out.par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (ky, dy) in (-r..=r).enumerate() {
                let sy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                let src = &image[sy * width..(sy + 1) * width];
                for (kx, cols) in clamp_col.iter().enumerate() {
                    let w = kernel.taps[ky * side + kx];
                    for (o, &c) in row.iter_mut().zip(cols) {
                        *o += w * src[c];
                    }
                }
            }
        });
    out
}

/// Rec. 709 transfer function; input is clamped to `[0, 1]` first.
#[inline]
pub fn gamma_rec709(i: f64) -> f64 {
    let i = i.clamp(0.0, 1.0);
    if i <= 0.018 {
        4.5 * i
    } else {
        1.099 * i.powf(0.45) - 0.099
    }
}

/// Inverse of [`gamma_rec709`].
#[inline]
pub fn inverse_gamma_rec709(e: f64) -> f64 {
    let e = e.clamp(0.0, 1.0);
    if e <= 0.081 {
        e / 4.5
    } else {
        ((e + 0.099) / 1.099).powf(1.0 / 0.45).min(1.0)
    }
}

/// `round(i * (2^bits - 1))`, halves away from zero, clamped to the range.
#[inline]
pub fn quantize(i: f64, bit_depth: u8) -> u16 {
    let max = ((1u32 << bit_depth) - 1) as f64;
    (i.clamp(0.0, 1.0) * max).round() as u16
}

/// Full sensor pipeline: optional diffraction, then gamma, then quantization.
pub fn develop(
    radiance: &[f64],
    width: usize,
    height: usize,
    kernel: Option<&DiffractionKernel>,
    bit_depth: u8,
) -> Vec<u16> {
    let blurred;
    let linear = match kernel {
        Some(k) => {
            blurred = convolve(radiance, width, height, k);
            &blurred
        }
        None => radiance,
    };
    linear
        .iter()
        .map(|&v| quantize(gamma_rec709(v), bit_depth))
        .collect()
}
