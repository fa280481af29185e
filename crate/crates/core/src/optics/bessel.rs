use std::f64::consts::{FRAC_PI_4, PI};

/// Bessel function of the first kind, order one.
///
/// Power series below 12, Hankel asymptotic expansion above; absolute error
/// stays below 1e-12 on the real line.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x < 12.0 {
        series(x)
    } else {
        asymptotic(x)
    }
}

fn series(x: f64) -> f64 {
    let h = 0.5 * x;
    let h2 = h * h;
    let mut term = h;
    let mut sum = term;
    for k in 1..60 {
        term *= -h2 / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    let mu = 4.0;
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * z);
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - 3.0 * FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `J1(x) = (1/pi) * integral_0^pi cos(t - x sin t) dt`, trapezoid rule.
    /// The integrand is smooth and periodic, so the rule converges geometrically.
    fn j1_integral(x: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let f = |t: f64| (t - x * t.sin()).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..n {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn matches_integral_representation() {
        for i in 0..=400 {
            let x = i as f64 * 0.1;
            let a = bessel_j1(x);
            let b = j1_integral(x);
            assert!((a - b).abs() < 1e-12, "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn known_values() {
        assert_eq!(bessel_j1(0.0), 0.0);
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        // first zero
        assert!(bessel_j1(3.831_705_970_207_512).abs() < 1e-15);
        assert!((bessel_j1(-2.0) + bessel_j1(2.0)).abs() < 1e-18);
    }

    #[test]
    fn branches_agree_at_switch() {
        assert!((series(12.0) - asymptotic(12.0)).abs() < 1e-12);
        assert!((series(13.0) - asymptotic(13.0)).abs() < 1e-11);
    }
}
