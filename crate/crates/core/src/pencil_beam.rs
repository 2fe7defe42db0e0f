//! Fermi pencil-beam solutions with constant coefficients.
//!
//! In stretched coordinates `(X′, X³=z, V)` the solution for a unit point
//! source at the origin pointing along e₃ has the Fourier form
//!
//! `F[U](ξ, z, η) = F₀ e^{−λz} exp(−D̃ ∫₀^z |η + (z−t)ξ|^{2s} dt)`,
//! with `D̃ = D/2^{2s}`.

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{stereographic_project, UnitDir, Vec3};
use crate::quad;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Beam and medium parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Attenuation λ ≥ 0.
    pub lambda: f64,
    /// Angular diffusion strength D > 0.
    #[serde(rename = "D")]
    pub d: f64,
    /// Fractional exponent s ∈ (0, 1].
    pub s: f64,
    /// Beam-width parameter ε > 0.
    pub eps: f64,
    /// Source amplitude F₀ > 0.
    #[serde(rename = "F0")]
    pub f0: f64,
    /// Wide-angle scattering amplitude σ > 0.
    pub sigma: f64,
}

impl MediumParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Schema(format!("{what} out of range: {v}")));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", self.lambda);
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad("D", self.d);
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return bad("s", self.s);
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps", self.eps);
        }
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return bad("F0", self.f0);
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma);
        }
        Ok(())
    }

    /// D̃ = D/2^{2s}.
    pub fn d_tilde(&self) -> f64 {
        self.d / 4f64.powf(self.s)
    }

    /// ε^{2s}D.
    pub fn eps_d(&self) -> f64 {
        self.eps.powf(2.0 * self.s) * self.d
    }

    /// C₀ = σF₀.
    pub fn c0(&self) -> f64 {
        self.sigma * self.f0
    }
}

/// Square grid specification: `points` nodes per axis at spacing
/// `2·half_width/points`, node `j` at `(j − points/2)·dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 8 || self.points % 2 != 0 {
            return Err(Error::Schema(format!("grid needs an even count ≥ 8 points, got {}", self.points)));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::Schema(format!("grid half-width must be > 0, got {}", self.half_width)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 - (self.points / 2) as f64) * self.dx()
    }

    /// Largest resolved angular frequency π/dx.
    pub fn nyquist(&self) -> f64 {
        PI / self.dx()
    }
}

/// Real samples on a square grid, row-major with the first coordinate slow.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.points + j]
    }

    pub fn cell_area(&self) -> f64 {
        self.spec.dx().powi(2)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Second moment Σ|x|²f / Σf.
    pub fn second_moment(&self) -> f64 {
        let n = self.spec.points;
        let (mut m0, mut m2) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (self.spec.coord(i), self.spec.coord(j));
                let f = self.at(i, j);
                m0 += f;
                m2 += f * (x * x + y * y);
            }
        }
        m2 / m0
    }

    /// Rows `x,y,value`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.spec.points;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(vec![self.spec.coord(i), self.spec.coord(j), self.at(i, j)]);
            }
        }
        out
    }
}

/// Time integral `∫₀^z |η + uξ|^{2s} du`.
///
/// Closed forms are used for s = 1 and s = 1/2; other exponents use adaptive
/// Gauss-Kronrod, which also resolves the cusp where η + uξ vanishes.
pub fn time_integral(xi: [f64; 2], eta: [f64; 2], z: f64, s: f64) -> f64 {
    let a = xi[0] * xi[0] + xi[1] * xi[1];
    let b = xi[0] * eta[0] + xi[1] * eta[1];
    let c = eta[0] * eta[0] + eta[1] * eta[1];
    if s == 1.0 {
        return c * z + b * z * z + a * z * z * z / 3.0;
    }
    if c == 0.0 {
        return a.powf(s) * z.powf(2.0 * s + 1.0) / (2.0 * s + 1.0);
    }
    if a == 0.0 {
        return c.powf(s) * z;
    }
    if s == 0.5 {
        return sqrt_quadratic_integral(a, b, c, z);
    }
    time_integral_quadrature(xi, eta, z, s)
}

/// Adaptive quadrature branch of [`time_integral`], exposed for cross-checks.
pub fn time_integral_quadrature(xi: [f64; 2], eta: [f64; 2], z: f64, s: f64) -> f64 {
    let f = |u: f64| {
        let w0 = eta[0] + u * xi[0];
        let w1 = eta[1] + u * xi[1];
        (w0 * w0 + w1 * w1).powf(s)
    };
    // Split at the zero of |η + uξ|² when it lies inside the interval.
    let a = xi[0] * xi[0] + xi[1] * xi[1];
    let u0 = if a > 0.0 { -(xi[0] * eta[0] + xi[1] * eta[1]) / a } else { -1.0 };
    let q = |lo: f64, hi: f64| quad::adaptive(f, lo, hi, 1e-14, 1e-14, 2000).value;
    if u0 > 0.0 && u0 < z {
        q(0.0, u0) + q(u0, z)
    } else {
        q(0.0, z)
    }
}

/// `∫₀^z sqrt(a u² + 2b u + c) du` for a > 0.
fn sqrt_quadratic_integral(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let delta = (a * c - b * b).max(0.0);
    let sa = a.sqrt();
    let anti = |u: f64| {
        let w = a * u + b;
        let q = (a * u * u + 2.0 * b * u + c).max(0.0).sqrt();
        let mut v = w * q / (2.0 * a);
        if delta > 0.0 {
            // ln(√a·q + w), rewritten for w < 0 to avoid cancellation.
            let l = if w >= 0.0 { (sa * q + w).ln() } else { delta.ln() - (sa * q - w).ln() };
            v += delta / (2.0 * a * sa) * l;
        }
        v
    };
    anti(z) - anti(0.0)
}

/// `F[U](ξ, z, η)` for the point source.
pub fn fourier_amplitude(xi: [f64; 2], eta: [f64; 2], z: f64, p: &MediumParams) -> Result<f64> {
    if z < 0.0 {
        return Err(Error::Domain(format!("z must be ≥ 0, got {z}")));
    }
    Ok(p.f0 * (-p.lambda * z).exp() * (-p.d_tilde() * time_integral(xi, eta, z, p.s)).exp())
}

/// Relative amplitude threshold at the edge frequency.
pub const NYQUIST_TOL: f64 = 1e-3;

/// V-integrated density on an X′ grid: `F⁻¹_{X′}[F[U](ξ, z, 0)]`.
pub fn spatial_marginal_grid(z: f64, g: GridSpec, p: &MediumParams) -> Result<Grid2> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("z must be > 0, got {z}")));
    }
    g.validate()?;
    let a = p.d_tilde() * z.powf(2.0 * p.s + 1.0) / (2.0 * p.s + 1.0);
    let amp = |k2: f64| (-a * k2.powf(p.s)).exp();
    let edge = amp(g.nyquist().powi(2));
    if edge > NYQUIST_TOL {
        return Err(Error::Resolution(format!(
            "edge amplitude {edge:.3e} exceeds {NYQUIST_TOL:.0e} of the center; refine the grid"
        )));
    }
    let scale = p.f0 * (-p.lambda * z).exp();
    let (values, imag) =
        fft::inverse_2d(|k1, k2| Complex64::new(scale * amp(k1 * k1 + k2 * k2), 0.0), g.points, g.dx());
    let grid = Grid2 { spec: g, values };
    if imag > 1e-10 * grid.peak().abs() {
        return Err(Error::Resolution(format!("imaginary residue {imag:.3e} too large")));
    }
    Ok(grid)
}

/// Moments `E_k = D̃ z^{k+1}/(k+1)` of the s = 1 beam.
pub fn gaussian_moments(z: f64, p: &MediumParams) -> [f64; 3] {
    let dt = p.d_tilde();
    [dt * z, dt * z * z / 2.0, dt * z * z * z / 3.0]
}

fn require_s1(p: &MediumParams) -> Result<()> {
    if p.s != 1.0 {
        return Err(Error::Unsupported(format!("closed form requires s = 1, got s = {}", p.s)));
    }
    Ok(())
}

/// Closed-form s = 1 density `U(X′, X³, V)`.
pub fn gaussian_closed_form(x: Vec3, v: [f64; 2], p: &MediumParams) -> Result<f64> {
    require_s1(p)?;
    let z = x[2];
    if z <= 0.0 {
        return Ok(0.0);
    }
    let [e0, e1, e2] = gaussian_moments(z, p);
    let det = e2 * e0 - e1 * e1;
    let q = e0 * (x[0] * x[0] + x[1] * x[1]) - 2.0 * e1 * (x[0] * v[0] + x[1] * v[1]) + e2 * (v[0] * v[0] + v[1] * v[1]);
    Ok(p.f0 * (-p.lambda * z).exp() / ((4.0 * PI).powi(2) * det) * (-q / (4.0 * det)).exp())
}

/// V-integral of [`gaussian_closed_form`]: `F₀e^{−λz}(4πE₂)⁻¹ e^{−|X′|²/4E₂}`.
pub fn gaussian_spatial_marginal(xp: [f64; 2], z: f64, p: &MediumParams) -> Result<f64> {
    require_s1(p)?;
    if z <= 0.0 {
        return Ok(0.0);
    }
    let e2 = gaussian_moments(z, p)[2];
    let r2 = xp[0] * xp[0] + xp[1] * xp[1];
    Ok(p.f0 * (-p.lambda * z).exp() / (4.0 * PI * e2) * (-r2 / (4.0 * e2)).exp())
}

/// Largest grid accepted by the four-dimensional evaluators.
pub const MAX_4D_POINTS: usize = 48;

/// Self-similar profile `𝔍` sampled on a 4-D grid over `(Y, W)`:
/// `𝔍 = F⁻¹[exp(−D̃ ∫₀¹ |η + tξ|^{2s} dt)]`, so that
/// `U(X′, z, V) = F₀e^{−λz} z^{−2−2/s} 𝔍(X′/z^{1+1/(2s)}, V/z^{1/(2s)})`.
#[derive(Debug, Clone)]
pub struct SelfSimilarJ {
    pub s: f64,
    pub d_tilde: f64,
    pub y: GridSpec,
    pub w: GridSpec,
    /// Row-major over `(y₁, y₂, w₁, w₂)`.
    pub values: Vec<f64>,
}

impl SelfSimilarJ {
    pub fn compute(p: &MediumParams, y: GridSpec, w: GridSpec) -> Result<Self> {
        y.validate()?;
        w.validate()?;
        if y.points != w.points {
            return Err(Error::Schema("position and velocity grids need equal point counts".into()));
        }
        let n = y.points;
        if n > MAX_4D_POINTS {
            return Err(Error::Resolution(format!("4-D grids are limited to {MAX_4D_POINTS}⁴ points, got {n}⁴")));
        }
        let (s, dt) = (p.s, p.d_tilde());
        let sym = |xi: [f64; 2], eta: [f64; 2]| (-dt * time_integral(xi, eta, 1.0, s)).exp();
        let edge_y = sym([y.nyquist(), 0.0], [0.0, 0.0]);
        let edge_w = sym([0.0, 0.0], [w.nyquist(), 0.0]);
        if edge_y.max(edge_w) > NYQUIST_TOL {
            return Err(Error::Resolution(format!(
                "edge amplitudes ({edge_y:.3e}, {edge_w:.3e}) exceed {NYQUIST_TOL:.0e}; refine the grid"
            )));
        }
        let fy: Vec<f64> = (0..n).map(|m| fft::freq(m, n, y.dx())).collect();
        let fw: Vec<f64> = (0..n).map(|m| fft::freq(m, n, w.dx())).collect();
        let n2 = n * n;
        let mut data = crate::par::map_indices(n2 * n2, |idx| {
            let (a, b) = (idx / n2, idx % n2);
            let xi = [fy[a / n], fy[a % n]];
            let eta = [fw[b / n], fw[b % n]];
            Complex64::new(sym(xi, eta), 0.0)
        });
        fft::fft_nd(&mut data, &[n, n, n, n], true);
        let norm = 1.0 / ((n as f64 * y.dx()).powi(2) * (n as f64 * w.dx()).powi(2));
        let sh = |j: usize| (j + n / 2) % n;
        let mut values = vec![0.0; n2 * n2];
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    for i4 in 0..n {
                        let src = ((sh(i1) * n + sh(i2)) * n + sh(i3)) * n + sh(i4);
                        values[((i1 * n + i2) * n + i3) * n + i4] = data[src].re * norm;
                    }
                }
            }
        }
        Ok(SelfSimilarJ { s, d_tilde: dt, y, w, values })
    }

    pub fn at(&self, i: [usize; 4]) -> f64 {
        let n = self.y.points;
        self.values[((i[0] * n + i[1]) * n + i[2]) * n + i[3]]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `∫𝔍 dW` on the Y grid.
    pub fn marginal(&self) -> Grid2 {
        let n = self.y.points;
        let cell = self.w.dx().powi(2);
        let values = (0..n * n).map(|a| self.values[a * n * n..(a + 1) * n * n].iter().sum::<f64>() * cell).collect();
        Grid2 { spec: self.y, values }
    }

    /// Multilinear interpolation at `(Y, W)`; zero outside the grid.
    pub fn eval(&self, y: [f64; 2], w: [f64; 2]) -> f64 {
        let n = self.y.points;
        let pos = |x: f64, g: &GridSpec| x / g.dx() + (n / 2) as f64;
        let c = [pos(y[0], &self.y), pos(y[1], &self.y), pos(w[0], &self.w), pos(w[1], &self.w)];
        if c.iter().any(|&t| t < 0.0 || t > (n - 1) as f64) {
            return 0.0;
        }
        let base: Vec<usize> = c.iter().map(|&t| (t.floor() as usize).min(n - 2)).collect();
        let frac: Vec<f64> = c.iter().zip(&base).map(|(&t, &b)| t - b as f64).collect();
        let mut acc = 0.0;
        for corner in 0..16 {
            let mut wt = 1.0;
            let mut idx = [0usize; 4];
            for d in 0..4 {
                let bit = (corner >> d) & 1;
                idx[d] = base[d] + bit;
                wt *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            acc += wt * self.at(idx);
        }
        acc
    }

    /// Position and velocity scale factors `(z^{1+1/(2s)}, z^{1/(2s)})`.
    pub fn scales(s: f64, z: f64) -> (f64, f64) {
        (z.powf(1.0 + 0.5 / s), z.powf(0.5 / s))
    }
}

/// `U(X′, z, V)` rebuilt from a 𝔍 grid.
pub fn self_similar_u(j: &SelfSimilarJ, xp: [f64; 2], z: f64, v: [f64; 2], p: &MediumParams) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("z must be > 0, got {z}")));
    }
    let (sx, sv) = SelfSimilarJ::scales(j.s, z);
    let pre = p.f0 * (-p.lambda * z).exp() * z.powf(-2.0 - 2.0 / j.s);
    Ok(pre * j.eval([xp[0] / sx, xp[1] / sx], [v[0] / sv, v[1] / sv]))
}

/// Macroscopic density `H(x³)(2ε)^{−4} U((2ε)⁻¹x′, x³, ε⁻¹S(θ))`; zero at the
/// south pole and for x³ < 0.
pub fn pullback_density<F: Fn(Vec3, [f64; 2]) -> f64>(x: Vec3, theta: UnitDir, p: &MediumParams, u: F) -> f64 {
    if x[2] < 0.0 {
        return 0.0;
    }
    let Ok(v) = stereographic_project(theta) else {
        return 0.0;
    };
    let e = p.eps;
    let big_x = [x[0] / (2.0 * e), x[1] / (2.0 * e), x[2]];
    (2.0 * e).powi(-4) * u(big_x, [v[0] / e, v[1] / e])
}

/// Normalized smooth bump on the unit disk, `C·exp(−1/(1−|y|²))`.
fn bump_2d(r: f64) -> f64 {
    static NORM: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    let c = *NORM.get_or_init(|| {
        let m = quad::adaptive(|r: f64| 2.0 * PI * r * (-1.0 / (1.0 - r * r)).exp(), 0.0, 1.0, 1e-16, 1e-14, 500).value;
        1.0 / m
    });
    if r >= 1.0 {
        0.0
    } else {
        c * (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Ballistic beam: a bump source of radius `width` transported along e₃,
/// `H(x³) e^{−λx³} w⁻² φ(x′/w)` with unit transverse mass.
pub fn ballistic_density(x: Vec3, p: &MediumParams, width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(Error::Domain(format!("source width must be > 0, got {width}")));
    }
    if x[2] < 0.0 {
        return Ok(0.0);
    }
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt() / width;
    Ok(p.f0 * (-p.lambda * x[2]).exp() * bump_2d(r) / (width * width))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s: f64) -> MediumParams {
        MediumParams { lambda: 0.1, d: 1.0, s, eps: 0.1, f0: 1.0, sigma: 1.0 }
    }

    #[test]
    fn zero_frequency_is_mass_decay() {
        let p = params(0.6);
        let a = fourier_amplitude([0.0; 2], [0.0; 2], 3.0, &p).unwrap();
        assert!((a - (-0.3f64).exp()).abs() < 1e-15);
        assert!(fourier_amplitude([0.0; 2], [0.0; 2], -1.0, &p).is_err());
    }

    #[test]
    fn s1_exponent_is_e2_moment() {
        let p = params(1.0);
        let xi = [0.7, -0.2];
        let z = 2.5;
        let a = fourier_amplitude(xi, [0.0; 2], z, &p).unwrap();
        let k2 = xi[0] * xi[0] + xi[1] * xi[1];
        let e = p.f0 * (-p.lambda * z).exp() * (-p.d_tilde() * k2 * z.powi(3) / 3.0).exp();
        assert!((a - e).abs() < 1e-15);
    }

    #[test]
    fn half_exponent_closed_form_matches_riemann_sum() {
        let (xi, eta, z) = ([0.6, 0.8], [-1.0, 0.0], 2.0);
        let n = 1_000_000;
        let h = z / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                ((eta[0] + u * xi[0]).powi(2) + (eta[1] + u * xi[1]).powi(2)).sqrt()
            })
            .sum::<f64>()
            * h;
        let closed = time_integral(xi, eta, z, 0.5);
        assert!((closed - riemann).abs() < 1e-9, "{closed} vs {riemann}");
        assert!((time_integral_quadrature(xi, eta, z, 0.5) - closed).abs() < 1e-12);
    }

    #[test]
    fn collinear_half_exponent_is_finite() {
        // η + uξ passes through zero at u = 1: ∫₀² |u − 1| du = 1.
        let v = time_integral([1.0, 0.0], [-1.0, 0.0], 2.0, 0.5);
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn marginal_grid_rejects_coarse_grid() {
        let p = params(1.0);
        let g = GridSpec { half_width: 100.0, points: 16 };
        assert!(matches!(spatial_marginal_grid(1.0, g, &p), Err(Error::Resolution(_))));
    }

    #[test]
    fn moment_determinant() {
        let p = params(1.0);
        for z in [0.1, 1.0, 7.0] {
            let [e0, e1, e2] = gaussian_moments(z, &p);
            let dt = p.d_tilde();
            assert!((e2 * e0 - e1 * e1 - dt * dt * z.powi(4) / 12.0).abs() < 1e-12 * z.powi(4));
        }
    }

    #[test]
    fn ballistic_examples() {
        let mut p = params(1.0);
        p.lambda = 0.0;
        let a = ballistic_density([0.0, 0.0, 1.0], &p, 0.1).unwrap();
        let b = ballistic_density([0.0, 0.0, 50.0], &p, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ballistic_density([0.2, 0.0, 1.0], &p, 0.1).unwrap(), 0.0);
        p.lambda = 0.1;
        let r = ballistic_density([0.0, 0.0, 10.0], &p, 0.1).unwrap() / ballistic_density([0.0, 0.0, 0.0], &p, 0.1).unwrap();
        assert!((r - (-1f64).exp()).abs() < 1e-9);
        // Unit transverse mass.
        let m = quad::adaptive(|r| 2.0 * PI * r * ballistic_density([r, 0.0, 0.0], &p, 0.1).unwrap(), 0.0, 0.1, 1e-14, 1e-12, 500).value;
        assert!((m - 1.0).abs() < 1e-10);
    }
}
