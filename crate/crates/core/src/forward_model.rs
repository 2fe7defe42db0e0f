//! Off-axis observables: the transverse profile
//! `g(x′, z) = σF₀ e^{−λz} F⁻¹[exp(−A_s(z)|ξ|^{2s})](x′)`, its center value and
//! mass, camera measurements as line integrals of `g`, and the broad-source
//! profile.

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{self, dot, BeamAxis, Camera, Pixel, UnitDir, Vec3};
use crate::pencil_beam::{GridSpec, Grid2, MediumParams, NYQUIST_TOL};
use crate::quad;
use crate::radon::Sinogram;
use crate::special::{bessel_j0, gamma};
use crate::stable;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn require_z(z: f64) -> Result<()> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("z must be > 0, got {z}")));
    }
    Ok(())
}

/// `A_s(z) = ε^{2s} D z^{2s+1}/(2s+1)`.
pub fn a_s(z: f64, p: &MediumParams) -> Result<f64> {
    if z < 0.0 {
        return Err(Error::Domain(format!("z must be ≥ 0, got {z}")));
    }
    Ok(p.eps_d() * z.powf(2.0 * p.s + 1.0) / (2.0 * p.s + 1.0))
}

/// Transverse length scale `A_s(z)^{1/(2s)}`.
pub fn profile_width(z: f64, p: &MediumParams) -> Result<f64> {
    require_z(z)?;
    Ok(a_s(z, p)?.powf(0.5 / p.s))
}

/// `∫ g dx′ = C₀ e^{−λz}`.
pub fn g_mass(z: f64, p: &MediumParams) -> f64 {
    p.c0() * (-p.lambda * z).exp()
}

/// `g(r, z)` for the point source.
pub fn g_profile(r: f64, z: f64, p: &MediumParams) -> Result<f64> {
    require_z(z)?;
    let a = a_s(z, p)?;
    let w = a.powf(0.5 / p.s);
    Ok(g_mass(z, p) / (w * w) * stable::density_2d(2.0 * p.s, r.abs() / w))
}

/// `g(0, z) = C₀e^{−λz} Γ(1/s)/(4πs A_s^{1/s})`.
pub fn g_center(z: f64, p: &MediumParams) -> Result<f64> {
    require_z(z)?;
    let a = a_s(z, p)?;
    Ok(g_mass(z, p) * gamma(1.0 / p.s) / (4.0 * PI * p.s * a.powf(1.0 / p.s)))
}

/// `∫_{ℝ²} e^{−A|ξ|^{2s}} dξ = πΓ(1/s)/(s A^{1/s})`.
pub fn gamma_integral(a: f64, s: f64) -> f64 {
    PI * gamma(1.0 / s) / (s * a.powf(1.0 / s))
}

/// Parallel line integrals `R₁g(τ)` of the point-source profile at station `z`.
pub fn sinogram_values(z: f64, taus: &[f64], p: &MediumParams) -> Result<Vec<f64>> {
    require_z(z)?;
    let w = profile_width(z, p)?;
    let pre = g_mass(z, p) / w;
    let alpha = 2.0 * p.s;
    if alpha == 2.0 || alpha == 1.0 {
        return Ok(taus.iter().map(|t| pre * stable::density_1d(alpha, t / w)).collect());
    }
    let table = stable::table_1d(alpha);
    Ok(crate::par::map_indices(taus.len(), |i| pre * table.eval(taus[i] / w)))
}

/// Source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceProfile {
    Point,
    Broad { h: BroadShape },
}

/// Broad source `h(X′)` in stretched coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BroadShape {
    /// `h = mass/(2πb²) exp(−|X′|²/2b²)`.
    Gaussian { b: f64, mass: f64 },
    /// Samples on a centered square grid (first coordinate slow).
    Sampled { grid: GridSpec, values: Vec<f64> },
}

impl BroadShape {
    pub fn validate(&self) -> Result<()> {
        match self {
            BroadShape::Gaussian { b, mass } => {
                if !(*b > 0.0 && *mass > 0.0) {
                    return Err(Error::Schema(format!("gaussian source needs b > 0 and mass > 0, got {b}, {mass}")));
                }
            }
            BroadShape::Sampled { grid, values } => {
                grid.validate()?;
                if values.len() != grid.points * grid.points {
                    return Err(Error::Schema("sampled source size does not match its grid".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Schema("sampled source must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        match self {
            BroadShape::Gaussian { mass, .. } => *mass,
            BroadShape::Sampled { grid, values } => values.iter().sum::<f64>() * grid.dx().powi(2),
        }
    }

    /// `ĥ(k)` at a stretched-coordinate frequency.
    pub fn spectrum(&self, k: [f64; 2]) -> Complex64 {
        match self {
            BroadShape::Gaussian { b, mass } => Complex64::new(mass * (-0.5 * b * b * (k[0] * k[0] + k[1] * k[1])).exp(), 0.0),
            BroadShape::Sampled { grid, values } => {
                let n = grid.points;
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let ph = -(k[0] * grid.coord(i) + k[1] * grid.coord(j));
                        acc += values[i * n + j] * Complex64::new(ph.cos(), ph.sin());
                    }
                }
                acc * grid.dx().powi(2)
            }
        }
    }

    /// Radius in stretched units containing the source: 5b for the Gaussian,
    /// the farthest sample above 1e-12 of the peak otherwise.
    pub fn support_radius(&self) -> f64 {
        match self {
            BroadShape::Gaussian { b, .. } => 5.0 * b,
            BroadShape::Sampled { grid, values } => {
                let n = grid.points;
                let peak = values.iter().cloned().fold(0.0, f64::max);
                let mut r: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if values[i * n + j] > 1e-12 * peak {
                            r = r.max(grid.coord(i).hypot(grid.coord(j)));
                        }
                    }
                }
                r
            }
        }
    }
}

impl SourceProfile {
    /// Physical support radius `ρ = 2ε·R_stretched` (zero for a point source).
    pub fn support_radius(&self, eps: f64) -> f64 {
        match self {
            SourceProfile::Point => 0.0,
            SourceProfile::Broad { h } => 2.0 * eps * h.support_radius(),
        }
    }

    /// Enforces `ρ + ε < L₀/4` against a camera radius.
    pub fn check_support(&self, eps: f64, camera_radius: f64) -> Result<()> {
        let rho = self.support_radius(eps);
        if rho + eps >= 0.25 * camera_radius {
            return Err(Error::Aperture(format!(
                "source support {rho:.3e} plus eps {eps:.3e} is not small against camera radius {camera_radius:.3e}"
            )));
        }
        Ok(())
    }
}

fn broad_shape(src: &SourceProfile) -> Result<&BroadShape> {
    match src {
        SourceProfile::Point => Err(Error::Unsupported("point source passed to the broad-source model".into())),
        SourceProfile::Broad { h } => Ok(h),
    }
}

/// `F_{x′}[g](ξ, z) = σ e^{−λz} e^{−A_s|ξ|^{2s}} ĥ(2εξ)`.
pub fn g_broad_spectrum(xi: [f64; 2], z: f64, p: &MediumParams, src: &SourceProfile) -> Result<Complex64> {
    require_z(z)?;
    let h = broad_shape(src)?;
    let a = a_s(z, p)?;
    let k2 = xi[0] * xi[0] + xi[1] * xi[1];
    let e2 = 2.0 * p.eps;
    Ok(p.sigma * (-p.lambda * z).exp() * (-a * k2.powf(p.s)).exp() * h.spectrum([e2 * xi[0], e2 * xi[1]]))
}

/// Broad-source profile `g(x′, z)` at one point. The Gaussian source uses a
/// Hankel integral; sampled sources go through [`g_broad_grid`].
pub fn g_broad_profile(xp: [f64; 2], z: f64, p: &MediumParams, src: &SourceProfile) -> Result<f64> {
    require_z(z)?;
    let h = broad_shape(src)?;
    match h {
        BroadShape::Gaussian { b, mass } => {
            let a = a_s(z, p)?;
            let r = xp[0].hypot(xp[1]);
            let beta = 2.0 * p.eps * b;
            let kmax = (55.0 / a).powf(0.5 / p.s).min((2.0 * 40.0f64).sqrt() / beta);
            let f = |k: f64| k * bessel_j0(k * r) * (-a * k.powf(2.0 * p.s) - 0.5 * beta * beta * k * k).exp();
            let half = if r > 0.0 { (PI / r).min(kmax) } else { kmax };
            let scale = kmax.powi(2);
            let v = quad::panels_to(&f, kmax, half, 1e-16 * scale);
            Ok(p.sigma * (-p.lambda * z).exp() * mass * v / (2.0 * PI))
        }
        BroadShape::Sampled { grid, .. } => {
            let g = g_broad_grid(z, broad_physical_grid(grid, p.eps), p, src)?;
            Ok(bilinear(&g, xp))
        }
    }
}

fn broad_physical_grid(h: &GridSpec, eps: f64) -> GridSpec {
    GridSpec { half_width: 2.0 * eps * h.half_width, points: h.points }
}

fn bilinear(g: &Grid2, x: [f64; 2]) -> f64 {
    let n = g.spec.points;
    let t = |v: f64| v / g.spec.dx() + (n / 2) as f64;
    let (a, b) = (t(x[0]), t(x[1]));
    if a < 0.0 || b < 0.0 || a > (n - 1) as f64 || b > (n - 1) as f64 {
        return 0.0;
    }
    let (i, j) = ((a.floor() as usize).min(n - 2), (b.floor() as usize).min(n - 2));
    let (fa, fb) = (a - i as f64, b - j as f64);
    (1.0 - fa) * (1.0 - fb) * g.at(i, j) + fa * (1.0 - fb) * g.at(i + 1, j) + (1.0 - fa) * fb * g.at(i, j + 1) + fa * fb * g.at(i + 1, j + 1)
}

/// Broad-source profile on a physical grid via a 2-D inverse FFT. A sampled
/// source fixes the grid to its own, scaled by 2ε.
pub fn g_broad_grid(z: f64, grid: GridSpec, p: &MediumParams, src: &SourceProfile) -> Result<Grid2> {
    require_z(z)?;
    let h = broad_shape(src)?;
    h.validate()?;
    grid.validate()?;
    let a = a_s(z, p)?;
    let pre = p.sigma * (-p.lambda * z).exp();
    let n = grid.points;
    let (values, _) = match h {
        BroadShape::Gaussian { .. } => {
            let edge = (-a * grid.nyquist().powf(2.0 * p.s)).exp() * h.spectrum([2.0 * p.eps * grid.nyquist(), 0.0]).re / h.mass();
            if edge > NYQUIST_TOL {
                return Err(Error::Resolution(format!("edge amplitude {edge:.3e} exceeds {NYQUIST_TOL:.0e}")));
            }
            let e2 = 2.0 * p.eps;
            fft::inverse_2d(
                |k1, k2| pre * (-a * (k1 * k1 + k2 * k2).powf(p.s)).exp() * h.spectrum([e2 * k1, e2 * k2]),
                n,
                grid.dx(),
            )
        }
        BroadShape::Sampled { grid: hg, values } => {
            let expect = broad_physical_grid(hg, p.eps);
            if (expect.half_width - grid.half_width).abs() > 1e-12 * expect.half_width || expect.points != n {
                return Err(Error::Schema("sampled source requires the grid of h scaled by 2ε".into()));
            }
            let hat = fft::forward_2d(values, n, hg.dx());
            let freqs: Vec<f64> = (0..n).map(|m| fft::freq(m, n, grid.dx())).collect();
            let mut data: Vec<Complex64> = (0..n * n)
                .map(|idx| {
                    let (k1, k2) = (freqs[idx / n], freqs[idx % n]);
                    pre * (-a * (k1 * k1 + k2 * k2).powf(p.s)).exp() * hat[idx]
                })
                .collect();
            fft::fft_nd(&mut data, &[n, n], true);
            let norm = 1.0 / (n as f64 * grid.dx()).powi(2);
            let centered = fft::shift2(&data, n, true);
            (centered.iter().map(|c| c.re * norm).collect(), 0.0)
        }
    };
    Ok(Grid2 { spec: grid, values })
}

/// Sampled ground truth: beam axis (source at `axis.point`), medium and source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub axis: BeamAxis,
    pub medium: MediumParams,
    pub source: SourceProfile,
}

impl Beam {
    /// `(r, z)` of a world point in the beam frame.
    pub fn local(&self, x: Vec3) -> (f64, f64) {
        (geometry::norm(self.axis.transverse(x)), self.axis.axial(x))
    }

    /// Radial profile `g` at transverse distance `r` and station `z`.
    pub fn g_rz(&self, r: f64, z: f64) -> Result<f64> {
        if z <= 0.0 {
            return Ok(0.0);
        }
        match &self.source {
            SourceProfile::Point => g_profile(r, z, &self.medium),
            SourceProfile::Broad { .. } => g_broad_profile([r, 0.0], z, &self.medium, &self.source),
        }
    }

    /// `R₁g(τ)` at station `z` (line integral of `g` over a full line at
    /// transverse offset `τ`).
    pub fn line_integrals(&self, z: f64, taus: &[f64]) -> Result<Vec<f64>> {
        if z <= 0.0 {
            return Ok(vec![0.0; taus.len()]);
        }
        match &self.source {
            SourceProfile::Point => sinogram_values(z, taus, &self.medium),
            SourceProfile::Broad { h: BroadShape::Gaussian { b, mass } } => {
                let p = &self.medium;
                let a = a_s(z, p)?;
                let beta = 2.0 * p.eps * b;
                let kmax = (55.0 / a).powf(0.5 / p.s).min((2.0 * 40.0f64).sqrt() / beta);
                let pre = p.sigma * (-p.lambda * z).exp() * mass / PI;
                Ok(crate::par::map_indices(taus.len(), |i| {
                    let t = taus[i].abs();
                    let f = |k: f64| (k * t).cos() * (-a * k.powf(2.0 * p.s) - 0.5 * beta * beta * k * k).exp();
                    let half = if t > 0.0 { (PI / t).min(kmax) } else { kmax };
                    pre * quad::panels_to(&f, kmax, half, 1e-16 * kmax)
                }))
            }
            SourceProfile::Broad { .. } => {
                Err(Error::Unsupported("line integrals of non-radial sampled sources are not modeled".into()))
            }
        }
    }
}

/// One camera reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub value: f64,
    /// Set when the ray carries no measurable signal.
    pub low_signal: bool,
}

/// Multiplicative Gaussian noise `m ← m(1 + σ_n N(0,1))`.
pub fn apply_noise<R: Rng>(value: f64, rel_std: f64, rng: &mut R) -> f64 {
    if rel_std <= 0.0 {
        return value;
    }
    let n = Normal::new(0.0, rel_std).expect("finite std");
    value * (1.0 + n.sample(rng))
}

/// `m(x, θ) = ∫₀^∞ g(x + tθ) dt` by adaptive quadrature along the ray, with
/// optional multiplicative noise. The ray must be orthogonal to the axis.
pub fn synthesize_measurement<R: Rng>(
    x: Vec3,
    theta: UnitDir,
    beam: &Beam,
    noise: Option<(f64, &mut R)>,
) -> Result<Measurement> {
    let d = beam.axis.direction.v();
    if dot(theta.v(), d).abs() > 1e-9 {
        return Err(Error::Domain("ray direction must be orthogonal to the beam axis".into()));
    }
    let z = beam.axis.axial(x);
    if z <= 0.0 {
        return Ok(Measurement { value: 0.0, low_signal: true });
    }
    let q = beam.axis.transverse(x);
    let t_star = -dot(q, theta.v());
    let b2 = (dot(q, q) - t_star * t_star).max(0.0);
    let w = profile_width(z, &beam.medium).unwrap_or(1.0).max(1e-300);
    let peak = beam.g_rz(0.0, z)?;
    let f = |mu: f64| beam.g_rz((b2 + mu * mu).sqrt(), z).unwrap_or(0.0);
    // ∫_{μ₀}^∞ over panels of doubling width.
    let tail = |mu0: f64| -> f64 {
        let mut lo = mu0;
        let mut width = w;
        let mut total = 0.0;
        for _ in 0..200 {
            let hi = lo + width;
            let v = quad::adaptive(f, lo, hi, 1e-15 * peak * w, 1e-12, 400).value;
            total += v;
            if v.abs() <= 1e-13 * total.abs() && f(hi) <= 1e-12 * peak {
                break;
            }
            lo = hi;
            width *= 2.0;
        }
        total
    };
    let value = if t_star > 0.0 {
        quad::adaptive(f, 0.0, t_star, 1e-15 * peak * w, 1e-12, 2000).value + tail(0.0)
    } else {
        tail(-t_star)
    };
    let low_signal = !(value > 1e-12 * peak * w);
    let value = if low_signal { 0.0 } else { value };
    let value = match noise {
        Some((std, rng)) => apply_noise(value, std, rng),
        None => value,
    };
    Ok(Measurement { value, low_signal })
}

/// Camera image via the projection identity `m = R₁g(τ)` at each pixel's
/// station; the ray half-line is taken to cover the beam.
pub fn camera_image(c: &Camera, beam: &Beam) -> Result<(Vec<Pixel>, Vec<f64>)> {
    c.validate()?;
    let d = beam.axis.direction.v();
    if dot(c.orientation.v(), d).abs() > 1e-6 {
        return Err(Error::Domain("camera orientation must be orthogonal to the beam axis".into()));
    }
    let pixels = geometry::camera_points(c);
    let e_tau = geometry::cross(c.orientation.v(), d);
    // Group pixels by station so each row is one vectorized sinogram call.
    let mut out = vec![0.0; pixels.len()];
    let mut rows: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
    for (i, px) in pixels.iter().enumerate() {
        let z = beam.axis.axial(px.x);
        rows.entry((z / c.pitch * 1e6).round() as i64).or_default().push(i);
    }
    for idx in rows.values() {
        let z = beam.axis.axial(pixels[idx[0]].x);
        let taus: Vec<f64> = idx.iter().map(|&i| dot(beam.axis.transverse(pixels[i].x), e_tau)).collect();
        let vals = beam.line_integrals(z, &taus)?;
        for (k, &i) in idx.iter().enumerate() {
            out[i] = vals[k];
        }
    }
    Ok((pixels, out))
}

/// Pixel row through the camera center, transverse to the axis, as a
/// sinogram at the station of the camera center.
pub fn sinogram(c: &Camera, beam: &Beam) -> Result<Sinogram> {
    c.validate()?;
    let d = beam.axis.direction.v();
    if dot(c.orientation.v(), d).abs() > 1e-6 {
        return Err(Error::Domain("camera orientation must be orthogonal to the beam axis".into()));
    }
    let z = beam.axis.axial(c.center);
    let e_tau = geometry::cross(c.orientation.v(), d);
    let tau_c = dot(beam.axis.transverse(c.center), e_tau);
    let m = (c.radius / c.pitch).ceil() as i64;
    let taus: Vec<f64> = (-m..=m)
        .map(|k| k as f64 * c.pitch)
        .filter(|o| o.abs() < c.radius)
        .map(|o| tau_c + o)
        .collect();
    let values = beam.line_integrals(z, &taus)?;
    let sino = Sinogram { z, taus, values };
    sino.check_tail(1e-3).map_err(|e| match e {
        Error::Tail(m) => Error::Aperture(format!("camera too small for the beam: {m}")),
        other => other,
    })?;
    Ok(sino)
}
