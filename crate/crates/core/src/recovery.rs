//! Parameter recovery from center values, masses and Fourier samples of `g`
//! at a few axial stations.

use crate::error::{Error, Result};
use crate::fft;
use crate::forward_model;
use crate::pencil_beam::{Grid2, GridSpec, MediumParams};
use crate::special::gamma;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Bisection bracket for `α = 1/z₀`.
pub const ALPHA_BRACKET: (f64, f64) = (1e-8, 1e6);
pub const MAX_BISECTIONS: usize = 200;
/// Default spectral amplification cutoff for the source deconvolution.
pub const AMPLIFICATION_BOUND: f64 = 1e6;

/// `g(z₀ + t_j)` and `M_j = ∫g dx′` at stations with known spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationData {
    pub offsets: Vec<f64>,
    pub centers: Vec<f64>,
    pub masses: Vec<f64>,
}

impl StationData {
    pub fn validate(&self, min_stations: usize) -> Result<()> {
        let n = self.offsets.len();
        if self.centers.len() != n || self.masses.len() != n {
            return Err(Error::Schema("offsets, centers and masses must have equal length".into()));
        }
        if n < min_stations {
            return Err(Error::Schema(format!("need at least {min_stations} stations, got {n}")));
        }
        if self.offsets[0] != 0.0 || self.offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema("offsets must start at 0 and increase strictly".into()));
        }
        if self.centers.iter().chain(&self.masses).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("center and mass values must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Recovered `(λ, s, ε^{2s}D, C₀, z₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredParams {
    pub lambda: f64,
    pub s: f64,
    #[serde(rename = "epsD")]
    pub eps_d: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    pub z0: f64,
    /// Max relative mismatch of the fitted forward model at the stations.
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RecoveredParams {
    /// Medium with `D = ε^{2s}D`, `ε = 1`, `σ = C₀`, `F₀ = 1`: same `A_s` and `C₀`.
    pub fn medium(&self) -> MediumParams {
        MediumParams { lambda: self.lambda, d: self.eps_d, s: self.s, eps: 1.0, f0: 1.0, sigma: self.c0 }
    }
}

/// `λ = ln(M₀/M₁)/dz`, anchor `C₀e^{−λz₀} = M₀`.
pub fn recover_lambda(m0: f64, m1: f64, dz: f64) -> Result<(f64, f64)> {
    if !(m0 > 0.0 && m1 > 0.0 && dz > 0.0) {
        return Err(Error::Domain("masses and spacing must be positive".into()));
    }
    let lambda = (m0 / m1).ln() / dz;
    if lambda <= 0.0 {
        log::warn!("nonphysical attenuation: recovered lambda = {lambda:.3e}");
    }
    Ok((lambda, m0))
}

/// Least-squares `ln M_j = ln anchor − λ t_j`; exact for two stations.
fn fit_lambda(d: &StationData) -> Result<(f64, f64)> {
    if d.offsets.len() == 2 {
        return recover_lambda(d.masses[0], d.masses[1], d.offsets[1]);
    }
    let n = d.offsets.len() as f64;
    let tm = d.offsets.iter().sum::<f64>() / n;
    let ym = d.masses.iter().map(|m| m.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, m) in d.offsets.iter().zip(&d.masses) {
        sxy += (t - tm) * (m.ln() - ym);
        sxx += (t - tm) * (t - tm);
    }
    let lambda = -sxy / sxx;
    if lambda <= 0.0 {
        log::warn!("nonphysical attenuation: recovered lambda = {lambda:.3e}");
    }
    Ok((lambda, (ym + lambda * tm).exp()))
}

/// `A_s = (anchor·Γ(1/s)/(4πs·g_center))^s`.
pub fn extract_as(g_center: f64, anchor: f64, s: f64) -> Result<f64> {
    if !(g_center > 0.0 && anchor > 0.0 && s > 0.0) {
        return Err(Error::Domain("extract_as needs positive inputs".into()));
    }
    Ok((anchor * gamma(1.0 / s) / (4.0 * PI * s * g_center)).powf(s))
}

/// `R(α) = ln(1+αt₁)/ln(1+αt₂)`.
pub fn ratio_r(alpha: f64, t1: f64, t2: f64) -> f64 {
    (alpha * t1).ln_1p() / (alpha * t2).ln_1p()
}

/// `H(α) = ((1+αt₁)^{2s+1}−1)/((1+αt₂)^{2s+1}−1)`.
pub fn ratio_h(alpha: f64, t1: f64, t2: f64, s: f64) -> f64 {
    let e = 2.0 * s + 1.0;
    (e * (alpha * t1).ln_1p()).exp_m1() / (e * (alpha * t2).ln_1p()).exp_m1()
}

/// Solves `f(α) = target` for monotone `f` on [`ALPHA_BRACKET`] by geometric
/// bisection until the bracket is narrower than `1e-12·α`.
pub fn bisect_alpha<F: Fn(f64) -> f64>(f: F, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = ALPHA_BRACKET;
    let (flo, fhi) = (f(lo) - target, f(hi) - target);
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return Err(Error::NoSolution(format!(
            "target {target:.6e} outside [{:.6e}, {:.6e}] on the bracket",
            f(lo).min(f(hi)),
            f(lo).max(f(hi))
        )));
    }
    let rising = fhi > flo;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo < 1e-12 * lo {
            break;
        }
        let mid = (lo * hi).sqrt();
        let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
        if (f(mid) - target > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Clamps `s = 1/(μ − 2)` into (0, 1].
fn exponent_from_mu(mu: f64, warnings: &mut Vec<String>) -> Result<f64> {
    if !(mu > 2.0) {
        return Err(Error::InvalidExponent { mu });
    }
    let s = 1.0 / (mu - 2.0);
    if s > 1.0 {
        let w = format!("model mismatch: mu = {mu:.6} implies s = {s:.6} > 1; reporting s = 1");
        log::warn!("{w}");
        warnings.push(w);
        return Ok(1.0);
    }
    Ok(s)
}

/// Max relative mismatch of centers and masses predicted by `r`.
pub fn station_residual(d: &StationData, r: &RecoveredParams) -> f64 {
    let m = r.medium();
    let mut worst: f64 = 0.0;
    for j in 0..d.offsets.len() {
        let z = r.z0 + d.offsets[j];
        let gc = forward_model::g_center(z, &m).unwrap_or(f64::NAN);
        let mass = forward_model::g_mass(z, &m);
        worst = worst.max(((gc - d.centers[j]) / d.centers[j]).abs());
        worst = worst.max(((mass - d.masses[j]) / d.masses[j]).abs());
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

fn finish(d: &StationData, lambda: f64, anchor: f64, s: f64, z0: f64, warnings: Vec<String>) -> Result<RecoveredParams> {
    let a = extract_as(d.centers[0], anchor, s)?;
    let eps_d = a * (2.0 * s + 1.0) / z0.powf(2.0 * s + 1.0);
    let mut r = RecoveredParams { lambda, s, eps_d, c0: anchor * (lambda * z0).exp(), z0, residual: 0.0, warnings };
    r.residual = station_residual(d, &r);
    Ok(r)
}

/// Point-source recovery: `λ` from masses, `α = 1/z₀` from the monotone ratio
/// `R(α)`, then `μ = 2 + 1/s`, `ε^{2s}D` and `C₀`. More than three stations
/// are fitted by least squares over `(α, μ)` seeded by the three-station root.
pub fn recover_point_source(d: &StationData) -> Result<RecoveredParams> {
    d.validate(3)?;
    let (lambda, anchor) = fit_lambda(d)?;
    let l: Vec<f64> = (0..d.offsets.len())
        .map(|j| (d.centers[0] / d.centers[j]).ln() - lambda * d.offsets[j])
        .collect();
    let (t1, t2) = (d.offsets[1], d.offsets[2]);
    if !(l[1] > 0.0 && l[2] > 0.0) {
        return Err(Error::NoSolution("center values do not decay faster than attenuation".into()));
    }
    let mut alpha = bisect_alpha(|a| ratio_r(a, t1, t2), l[1] / l[2])?;
    let mut mu = l[1] / (alpha * t1).ln_1p();
    if d.offsets.len() > 3 {
        let (a, m) = least_squares_alpha_mu(&d.offsets, &l, alpha);
        alpha = a;
        mu = m;
    }
    let mut warnings = Vec::new();
    let s = exponent_from_mu(mu, &mut warnings)?;
    finish(d, lambda, anchor, s, 1.0 / alpha, warnings)
}

/// Minimizes `Σ_j (L_j − μ ln(1+αt_j))²`; `μ` is eliminated in closed form and
/// `ln α` is scanned then refined by golden section around the best node.
fn least_squares_alpha_mu(t: &[f64], l: &[f64], seed: f64) -> (f64, f64) {
    let mu_of = |a: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 1..t.len() {
            let b = (a * t[j]).ln_1p();
            num += l[j] * b;
            den += b * b;
        }
        num / den
    };
    let cost = |la: f64| {
        let a = la.exp();
        let mu = mu_of(a);
        (1..t.len()).map(|j| (l[j] - mu * (a * t[j]).ln_1p()).powi(2)).sum::<f64>()
    };
    let (lo, hi) = (ALPHA_BRACKET.0.ln(), ALPHA_BRACKET.1.ln());
    let n = 400;
    let step = (hi - lo) / n as f64;
    let mut best = seed.ln();
    let mut best_c = cost(best);
    for k in 0..=n {
        let x = lo + k as f64 * step;
        let c = cost(x);
        if c < best_c {
            best = x;
            best_c = c;
        }
    }
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut dd) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if cost(c) < cost(dd) {
            b = dd;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        dd = a + g * (b - a);
    }
    let x = 0.5 * (a + b);
    let x = if cost(x) <= best_c { x } else { best };
    (x.exp(), mu_of(x.exp()))
}

/// `s = 1` recovery from two stations: `z₀ = t/((A₁(z₀+t)/A₁(z₀))^{1/3} − 1)`,
/// `ε²D = 3A₁(z₀)/z₀³`.
pub fn recover_point_source_s1(d: &StationData) -> Result<RecoveredParams> {
    d.validate(2)?;
    let (lambda, anchor) = fit_lambda(d)?;
    let a0 = extract_as(d.centers[0], d.masses[0], 1.0)?;
    let a1 = extract_as(d.centers[1], d.masses[1], 1.0)?;
    let q = a1 / a0;
    if !(q > 1.0) {
        return Err(Error::InconsistentSpread(format!("A1 ratio {q:.6} does not exceed 1")));
    }
    let z0 = d.offsets[1] / (q.ln() / 3.0).exp_m1();
    let mut r = RecoveredParams {
        lambda,
        s: 1.0,
        eps_d: 3.0 * a0 / z0.powi(3),
        c0: anchor * (lambda * z0).exp(),
        z0,
        residual: 0.0,
        warnings: Vec::new(),
    };
    r.residual = station_residual(d, &r);
    Ok(r)
}

/// `ĝ(ξ, z₀+t_j)` at `|ξ| = 1` and `|ξ| = e`, plus masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralStationData {
    pub offsets: Vec<f64>,
    pub at_one: Vec<f64>,
    pub at_e: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SpectralStationData {
    pub fn validate(&self) -> Result<()> {
        let n = self.offsets.len();
        if self.at_one.len() != n || self.at_e.len() != n || self.masses.len() != n {
            return Err(Error::Schema("spectral station arrays must have equal length".into()));
        }
        if n < 3 {
            return Err(Error::Schema(format!("need at least 3 stations, got {n}")));
        }
        if self.offsets[0] != 0.0 || self.offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema("offsets must start at 0 and increase strictly".into()));
        }
        if self.at_one.iter().chain(&self.at_e).chain(&self.masses).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("Fourier samples and masses must be positive".into()));
        }
        Ok(())
    }
}

/// Recovered parameters plus the unit-mass source on its stretched grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadRecovery {
    pub params: RecoveredParams,
    pub h: Grid2,
    /// Fraction of DFT frequencies zeroed by the amplification cutoff.
    pub truncated: f64,
}

/// Broad-source recovery. `g0` is the profile at the first station on a
/// physical grid; `eps` maps it to stretched coordinates `X′ = x′/2ε`.
pub fn recover_broad_source(d: &SpectralStationData, g0: &Grid2, eps: f64, bound: f64) -> Result<BroadRecovery> {
    d.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let (lambda, anchor) = recover_lambda(d.masses[0], d.masses[1], d.offsets[1])?;
    let la = |j: usize| (d.at_one[0] / d.at_one[j]).ln() - lambda * d.offsets[j];
    let le = |j: usize| (d.at_e[0] / d.at_e[j]).ln() - lambda * d.offsets[j];
    let (t1, t2) = (d.offsets[1], d.offsets[2]);
    let (da1, da2) = (la(1), la(2));
    if !(da1 > 0.0 && da2 > 0.0) {
        return Err(Error::NoSolution("spectral ratios show no spreading growth".into()));
    }
    let s_est = |j: usize, da: f64| 0.5 * (le(j) / da).ln();
    let mut warnings = Vec::new();
    let s_raw = 0.5 * (s_est(1, da1) + s_est(2, da2));
    if !(s_raw > 0.0) {
        return Err(Error::InvalidExponent { mu: 2.0 + 1.0 / s_raw });
    }
    let s = if s_raw > 1.0 {
        let w = format!("model mismatch: spectral exponent s = {s_raw:.6} > 1; reporting s = 1");
        log::warn!("{w}");
        warnings.push(w);
        1.0
    } else {
        s_raw
    };
    let alpha = bisect_alpha(|a| ratio_h(a, t1, t2, s), da1 / da2)?;
    let z0 = 1.0 / alpha;
    let e = 2.0 * s + 1.0;
    let eps_d = da1 * e / (z0.powf(e) * (e * (t1 / z0).ln_1p()).exp_m1());
    let a0 = eps_d * z0.powf(e) / e;
    let c0 = anchor * (lambda * z0).exp();

    let n = g0.spec.points;
    let dx = g0.spec.dx();
    let spec = fft::forward_2d(&g0.values, n, dx);
    let freqs: Vec<f64> = (0..n).map(|m| fft::freq(m, n, dx)).collect();
    let ln_bound = bound.ln();
    let mut cut = 0usize;
    let mut data = spec;
    for (idx, c) in data.iter_mut().enumerate() {
        let k2 = freqs[idx / n].powi(2) + freqs[idx % n].powi(2);
        let expo = a0 * k2.powf(s);
        if expo > ln_bound {
            *c = 0.0.into();
            cut += 1;
        } else {
            *c *= expo.exp();
        }
    }
    let truncated = cut as f64 / (n * n) as f64;
    if truncated > 0.5 {
        return Err(Error::IllPosedDeconvolution(format!(
            "amplification exceeds {bound:.1e} on {:.1}% of the band",
            100.0 * truncated
        )));
    }
    fft::fft_nd(&mut data, &[n, n], true);
    let centered = fft::shift2(&data, n, true);
    let norm = 1.0 / (n as f64 * dx).powi(2);
    let scale = (2.0 * eps).powi(2) / (anchor);
    let values: Vec<f64> = centered.iter().map(|c| c.re * norm * scale).collect();
    let h = Grid2 { spec: GridSpec { half_width: g0.spec.half_width / (2.0 * eps), points: n }, values };
    let mut params = RecoveredParams { lambda, s, eps_d, c0, z0, residual: 0.0, warnings };
    params.residual = spectral_residual(d, &params);
    Ok(BroadRecovery { params, h, truncated })
}

/// Max relative mismatch of the Fourier-sample ratios and masses predicted
/// by `r`.
fn spectral_residual(d: &SpectralStationData, r: &RecoveredParams) -> f64 {
    let m = r.medium();
    let a = |z: f64| forward_model::a_s(z, &m).unwrap_or(f64::NAN);
    let a0 = a(r.z0);
    let mut worst: f64 = 0.0;
    for j in 1..d.offsets.len() {
        let t = d.offsets[j];
        let da = a(r.z0 + t) - a0;
        for (xi2s, obs) in [(1.0, d.at_one[0] / d.at_one[j]), ((2.0 * r.s).exp(), d.at_e[0] / d.at_e[j])] {
            let pred = (r.lambda * t + xi2s * da).exp();
            worst = worst.max((pred / obs - 1.0).abs());
        }
        let pm = (-r.lambda * t).exp();
        worst = worst.max((pm - d.masses[j] / d.masses[0]).abs() / pm);
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}
