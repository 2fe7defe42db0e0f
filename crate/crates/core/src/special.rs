//! Special functions. Γ and erf come from `statrs`; J₀ is evaluated here.

use std::f64::consts::PI;

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

/// Bessel function J₀.
///
/// For |x| ≤ 25 the periodic trapezoid rule on J₀(x) = π⁻¹∫₀^π cos(x sin t) dt
/// is exact up to J_{2N}(x) terms; beyond, the Hankel expansion is summed to
/// its smallest term.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        let n = x.ceil() as usize + 20;
        let h = PI / n as f64;
        let mut s = 0.5 * (1.0 + 1.0);
        for k in 1..n {
            s += (x * (k as f64 * h).sin()).cos();
        }
        return s / n as f64;
    }
    // a_k = Π_{j≤k} (−(2j−1)²) / (k! 8^k)
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let j = (2 * k - 1) as f64;
        a *= -(j * j) / (k as f64 * 8.0 * x);
        if a.abs() >= last {
            break;
        }
        last = a.abs();
        // Terms alternate between Q (odd k) and P (even k) with sign (−1)^⌊k/2⌋.
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * a;
        } else {
            p += sign * a;
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j0_series(x: f64) -> f64 {
        // Direct power series, accurate for small |x|.
        let mut term = 1.0;
        let mut sum = 1.0;
        let y = -0.25 * x * x;
        for k in 1..80 {
            term *= y / (k as f64 * k as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn j0_matches_series_for_small_arguments() {
        for i in 0..80 {
            let x = i as f64 * 0.1;
            assert!((bessel_j0(x) - j0_series(x)).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn j0_known_values() {
        // Tabulated values.
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-14);
        assert!((bessel_j0(30.0) + 0.086_367_983_581_040_2).abs() < 1e-14);
        assert!((bessel_j0(100.0) - 0.019_985_850_304_223_12).abs() < 1e-14);
        // First zero.
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
    }

    #[test]
    fn j0_continuous_across_branch_switch() {
        let a = bessel_j0(25.0);
        let b = bessel_j0(25.0 + 1e-12);
        assert!((a - b).abs() < 5e-13);
    }
}
