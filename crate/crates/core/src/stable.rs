//! Symmetric α-stable densities with characteristic function `exp(−|k|^α)`,
//! α ∈ (0, 2], in one dimension (`ρ_α`) and isotropic in two (`φ_α`).
//!
//! The transverse beam profile is a rescaled `φ_{2s}` and its parallel line
//! integrals are a rescaled `ρ_{2s}`. Evaluation uses the large-argument power
//! series where it is numerically reliable (convergent for α < 1, asymptotic
//! for α > 1) and otherwise the Fourier/Hankel integral split into half-period
//! panels; α = 1 and α = 2 have closed forms.

use crate::quad;
use crate::special::{bessel_j0, erfc, gamma, ln_gamma};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

const CLOSED_TOL: f64 = 1e-14;

fn is_alpha(alpha: f64, v: f64) -> bool {
    (alpha - v).abs() < CLOSED_TOL
}

/// Sum of `Σ_{n≥1} (−1)^{n+1} sin(παn/2) exp(ln_mag(n))`, or `None` when the
/// series is not usable to ~1e-13 relative accuracy at this argument.
fn stable_series<F: Fn(f64) -> f64>(alpha: f64, ln_mag: F) -> Option<f64> {
    let mut sum: f64 = 0.0;
    let mut max_term: f64 = 0.0;
    let mut prev_mag = f64::INFINITY;
    let convergent = alpha < 1.0;
    for n in 1..4000usize {
        let nf = n as f64;
        let sn = (0.5 * PI * alpha * nf).sin();
        if sn.abs() < 1e-12 {
            continue;
        }
        let lm = ln_mag(nf);
        if lm > 700.0 {
            return None;
        }
        let mag = lm.exp() * sn.abs();
        if !convergent && mag > prev_mag && n > 2 {
            // Asymptotic series: truncate at the smallest term.
            return if prev_mag <= 1e-14 * sum.abs() && max_term <= 1e2 * sum.abs() {
                Some(sum)
            } else {
                None
            };
        }
        prev_mag = mag;
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * sn * lm.exp();
        sum += term;
        max_term = max_term.max(term.abs());
        if mag < 1e-17 * sum.abs() && lm < max_term.ln() - 5.0 {
            return if max_term <= 1e3 * sum.abs() { Some(sum) } else { None };
        }
    }
    None
}

fn k_cutoff(alpha: f64, decades: f64) -> f64 {
    decades.powf(1.0 / alpha)
}

/// One-dimensional density ρ_α(u) = π⁻¹∫₀^∞ cos(ku) e^{−k^α} dk.
pub fn density_1d(alpha: f64, u: f64) -> f64 {
    let u = u.abs();
    if is_alpha(alpha, 2.0) {
        return (-0.25 * u * u).exp() / (2.0 * PI.sqrt());
    }
    if is_alpha(alpha, 1.0) {
        return 1.0 / (PI * (1.0 + u * u));
    }
    if u > 0.0 {
        let lu = u.ln();
        if let Some(s) =
            stable_series(alpha, |n| ln_gamma(alpha * n + 1.0) - ln_gamma(n + 1.0) - (alpha * n + 1.0) * lu)
        {
            return s / PI;
        }
    }
    let kmax = k_cutoff(alpha, 45.0);
    let half = if u > 0.0 { (PI / u).min(kmax) } else { kmax };
    let f = |k: f64| (k * u).cos() * (-k.powf(alpha)).exp();
    quad::panels_to(&f, kmax, half, 1e-16) / PI
}

/// Two-sided tail mass P(|T| > u) of the one-dimensional law.
pub fn tail_1d(alpha: f64, u: f64) -> f64 {
    let u = u.abs();
    if u == 0.0 {
        return 1.0;
    }
    if is_alpha(alpha, 2.0) {
        return erfc(0.5 * u);
    }
    if is_alpha(alpha, 1.0) {
        return 1.0 - 2.0 / PI * u.atan();
    }
    let lu = u.ln();
    if let Some(s) = stable_series(alpha, |n| ln_gamma(alpha * n) - ln_gamma(n + 1.0) - alpha * n * lu) {
        return 2.0 / PI * s;
    }
    let kmax = k_cutoff(alpha, 45.0);
    let half = (PI / u).min(kmax);
    let f = |k: f64| {
        if k == 0.0 {
            u
        } else {
            (k * u).sin() / k * (-k.powf(alpha)).exp()
        }
    };
    1.0 - 2.0 / PI * quad::panels_to(&f, kmax, half, 1e-16)
}

/// Isotropic two-dimensional density φ_α(r) = (2π)⁻¹∫₀^∞ k J₀(kr) e^{−k^α} dk.
pub fn density_2d(alpha: f64, r: f64) -> f64 {
    let r = r.abs();
    if is_alpha(alpha, 2.0) {
        return (-0.25 * r * r).exp() / (4.0 * PI);
    }
    if is_alpha(alpha, 1.0) {
        return 1.0 / (2.0 * PI * (1.0 + r * r).powf(1.5));
    }
    if r > 0.0 {
        let lr = r.ln();
        let l2 = 2f64.ln();
        if let Some(s) = stable_series(alpha, |n| {
            alpha * n * l2 + 2.0 * ln_gamma(0.5 * alpha * n + 1.0) - ln_gamma(n + 1.0) - (alpha * n + 2.0) * lr
        }) {
            return s / (PI * PI);
        }
    }
    let kmax = k_cutoff(alpha, 55.0);
    let half = if r > 0.0 { (PI / r).min(kmax) } else { kmax };
    let f = |k: f64| k * bessel_j0(k * r) * (-k.powf(alpha)).exp();
    quad::panels_to(&f, kmax, half, 1e-15) / (2.0 * PI)
}

/// Mass of the two-dimensional law outside the disk of radius `r`.
pub fn mass_outside_2d(alpha: f64, r: f64) -> f64 {
    let r = r.abs();
    if r == 0.0 {
        return 1.0;
    }
    if is_alpha(alpha, 2.0) {
        return (-0.25 * r * r).exp();
    }
    if is_alpha(alpha, 1.0) {
        return 1.0 / (1.0 + r * r).sqrt();
    }
    let lr = r.ln();
    let l2 = 2f64.ln();
    if let Some(s) = stable_series(alpha, |n| {
        alpha * n * l2 + 2.0 * ln_gamma(0.5 * alpha * n + 1.0) - ln_gamma(n + 1.0) - alpha * n * lr - (alpha * n).ln()
    }) {
        return 2.0 / PI * s;
    }
    let inner = quad::adaptive(|x| 2.0 * PI * x * density_2d(alpha, x), 0.0, r, 1e-14, 1e-13, 2000).value;
    1.0 - inner
}

/// ρ_α(0) = Γ(1/α)/(απ).
pub fn density_1d_at_zero(alpha: f64) -> f64 {
    gamma(1.0 / alpha) / (alpha * PI)
}

/// φ_α(0) = Γ(2/α)/(2πα).
pub fn density_2d_at_zero(alpha: f64) -> f64 {
    gamma(2.0 / alpha) / (2.0 * PI * alpha)
}

/// Curvature scale of the one-dimensional core, sqrt(−ρ(0)/ρ''(0)) =
/// sqrt(Γ(1/α)/Γ(3/α)).
pub fn core_width_1d(alpha: f64) -> f64 {
    (gamma(1.0 / alpha) / gamma(3.0 / alpha)).sqrt()
}

/// Tabulated ρ_α for bulk evaluation: cubic interpolation of ln ρ on nodes
/// uniform in t = asinh(u/c), series evaluation past the last node.
#[derive(Debug, Clone)]
pub struct Table1d {
    alpha: f64,
    c: f64,
    dt: f64,
    u_max: f64,
    ln_rho: Vec<f64>,
}

impl Table1d {
    pub fn build(alpha: f64) -> Self {
        let c = core_width_1d(alpha);
        let u_max = 1e3 * c.max(1.0);
        let t_max = (u_max / c).asinh();
        let dt = 0.004;
        let n = (t_max / dt).ceil() as usize + 3;
        let ln_rho = crate::par::map_indices(n, |i| {
            let u = c * (i as f64 * dt).sinh();
            density_1d(alpha, u).ln()
        });
        Table1d { alpha, c, dt, u_max, ln_rho }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u = u.abs();
        if u >= self.u_max {
            return density_1d(self.alpha, u);
        }
        let t = (u / self.c).asinh() / self.dt;
        let i = t.floor() as isize;
        let f = t - i as f64;
        let at = |j: isize| self.ln_rho[j.unsigned_abs()];
        let (y0, y1, y2, y3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        // Four-point Lagrange on nodes −1, 0, 1, 2.
        let v = -f * (f - 1.0) * (f - 2.0) / 6.0 * y0 + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * y1
            - (f + 1.0) * f * (f - 2.0) / 2.0 * y2
            + (f + 1.0) * f * (f - 1.0) / 6.0 * y3;
        v.exp()
    }
}

/// Shared table per α, built on first use.
pub fn table_1d(alpha: f64) -> Arc<Table1d> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Table1d>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("table cache poisoned").get(&alpha.to_bits()) {
        return t.clone();
    }
    let t = Arc::new(Table1d::build(alpha));
    cache.lock().expect("table cache poisoned").insert(alpha.to_bits(), t.clone());
    t
}
