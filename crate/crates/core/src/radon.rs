//! Parallel-line integrals of radial functions and their radial inversion.

use crate::error::{Error, Result};
use crate::io;
use crate::quad;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Default tail-decay ratio for profiles and sinograms.
pub const TAIL_RATIO: f64 = 1e-3;
/// Relative `±τ` mismatch above which a misalignment warning is raised.
pub const ASYMMETRY_WARN: f64 = 0.05;
/// Minimum number of sinogram samples accepted by [`abel_invert`].
pub const MIN_SAMPLES: usize = 16;

fn peak_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Samples of `r ↦ g(r, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub z: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    /// Radii strictly ascending from 0, finite values, decayed last sample.
    pub fn validate(&self) -> Result<()> {
        if self.radii.len() != self.values.len() || self.radii.len() < 2 {
            return Err(Error::Domain("radial profile needs at least two (r, value) pairs".into()));
        }
        if self.radii[0] != 0.0 || self.radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("radii must ascend strictly from 0".into()));
        }
        check_finite(&self.values, "radial profile")?;
        let peak = peak_abs(&self.values);
        let last = self.values.last().unwrap().abs();
        if last > TAIL_RATIO * peak {
            return Err(Error::Tail(format!("profile ends at {:.3e} of its peak", last / peak)));
        }
        Ok(())
    }

    /// Cubic interpolant, even about `r = 0`, zero past the last radius.
    pub fn eval(&self, r: f64) -> f64 {
        cubic_even(&self.radii, &self.values, r.abs())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P, meta: &[(String, String)]) -> Result<()> {
        let mut m = meta.to_vec();
        m.push(("z".into(), io::format_f64(self.z)));
        let rows: Vec<Vec<f64>> = self.radii.iter().zip(&self.values).map(|(r, v)| vec![*r, *v]).collect();
        io::write_csv(path, &m, &["r", "value"], &rows)
    }
}

/// Parallel line integrals `R₁g(τ)` at one station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub z: f64,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
}

impl Sinogram {
    /// Errors unless both ends are below `ratio` of the peak.
    pub fn check_tail(&self, ratio: f64) -> Result<()> {
        check_finite(&self.values, "sinogram")?;
        let peak = peak_abs(&self.values);
        if peak == 0.0 {
            return Ok(());
        }
        let ends = self.values.first().unwrap().abs().max(self.values.last().unwrap().abs());
        if ends > ratio * peak {
            return Err(Error::Tail(format!("sinogram ends at {:.3e} of its peak", ends / peak)));
        }
        Ok(())
    }

    /// Trapezoid `∫R₁g dτ` over the sampled window.
    pub fn integral(&self) -> f64 {
        self.taus
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P, meta: &[(String, String)]) -> Result<()> {
        let mut m = meta.to_vec();
        m.push(("z".into(), io::format_f64(self.z)));
        let rows: Vec<Vec<f64>> = self.taus.iter().zip(&self.values).map(|(t, v)| vec![*t, *v]).collect();
        io::write_csv(path, &m, &["tau", "value"], &rows)
    }

    /// Reads a `tau,value` CSV; the station comes from the `z` metadata line.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let t = io::read_csv(path)?;
        let z = t
            .meta
            .iter()
            .find(|(k, _)| k == "z")
            .map(|(_, v)| v.trim().parse::<f64>())
            .transpose()
            .map_err(|e| Error::Schema(format!("bad z: {e}")))?
            .unwrap_or(f64::NAN);
        Ok(Sinogram { z, taus: t.column("tau")?, values: t.column("value")? })
    }
}

/// 4-point Lagrange interpolation on ascending `xs` starting at 0, mirrored
/// evenly through 0 and zero beyond the last node.
fn cubic_even(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let last = xs[n - 1];
    if x > last {
        return 0.0;
    }
    let i = match xs.partition_point(|&t| t <= x) {
        0 => 0,
        k => (k - 1).min(n - 2),
    };
    // Stencil i-1 ..= i+2 in a virtually extended index space.
    let node = |k: isize| -> (f64, f64) {
        if k < 0 {
            let m = (-k) as usize;
            (-xs[m], ys[m])
        } else if (k as usize) < n {
            (xs[k as usize], ys[k as usize])
        } else {
            let m = k as usize - (n - 1);
            (last + m as f64 * (last - xs[n - 2]), 0.0)
        }
    };
    let base = i as isize - 1;
    let pts: [(f64, f64); 4] = [node(base), node(base + 1), node(base + 2), node(base + 3)];
    let mut acc = 0.0;
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (x - pts[b].0) / (pts[a].0 - pts[b].0);
            }
        }
        acc += l * pts[a].1;
    }
    acc
}

/// `R₁g(τ) = 2∫₀^∞ g(√(τ²+μ²)) dμ` with `g` interpolated cubically between samples.
pub fn forward_radial_radon(g: &RadialProfile, taus: &[f64]) -> Result<Sinogram> {
    g.validate()?;
    let rmax = *g.radii.last().unwrap();
    let peak = peak_abs(&g.values);
    let scale = peak * rmax;
    let values = crate::par::map_indices(taus.len(), |k| {
        let t = taus[k].abs();
        if t >= rmax || peak == 0.0 {
            return 0.0;
        }
        let m = (rmax * rmax - t * t).sqrt();
        let f = |mu: f64| g.eval((t * t + mu * mu).sqrt());
        2.0 * quad::adaptive(f, 0.0, m, 1e-14 * scale, 1e-12, 4000).value
    });
    Ok(Sinogram { z: g.z, taus: taus.to_vec(), values })
}

/// One-sided sinogram on `τ_k = k h` after `±τ` averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetrized {
    pub h: f64,
    pub values: Vec<f64>,
    /// `max_k |R(kh) − R(−kh)| / peak` over the two-sided overlap.
    pub asymmetry: f64,
}

/// Uniform-spacing check and `±τ` averaging about `τ = 0`.
pub fn symmetrize(s: &Sinogram) -> Result<Symmetrized> {
    let n = s.taus.len();
    if n < MIN_SAMPLES || s.values.len() != n {
        return Err(Error::Resolution(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    check_finite(&s.values, "sinogram")?;
    let h = (s.taus[n - 1] - s.taus[0]) / (n - 1) as f64;
    if !(h > 0.0) || s.taus.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h) {
        return Err(Error::Resolution("sinogram samples must be uniformly spaced and ascending".into()));
    }
    let (lo, hi) = (s.taus[0], s.taus[n - 1]);
    // Interpolates the two-sided data at τ by 4-point Lagrange.
    let at = |t: f64| -> f64 {
        let x = (t - lo) / h;
        let i = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
        let f = x - i as f64;
        let y = |k: usize| s.values[k];
        let (ym, y0, y1, y2) = (y(i - 1), y(i), y(i + 1), y(i + 2));
        -f * (f - 1.0) * (f - 2.0) / 6.0 * ym + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * y0
            - (f + 1.0) * f * (f - 2.0) / 2.0 * y1
            + (f + 1.0) * f * (f - 1.0) / 6.0 * y2
    };
    let snap = |t: f64| -> f64 {
        let x = (t - lo) / h;
        let r = x.round();
        if (x - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < n {
            s.values[r as usize]
        } else {
            at(t)
        }
    };
    let two_sided = lo < -h && hi > h;
    let reach = if lo > 0.0 {
        return Err(Error::Domain("sinogram does not cover τ = 0".into()));
    } else {
        hi.max(-lo)
    };
    let k_max = (reach / h + 1e-9).floor() as usize;
    let mut values = Vec::with_capacity(k_max + 1);
    let mut asym: f64 = 0.0;
    for k in 0..=k_max {
        let t = k as f64 * h;
        let plus = if t <= hi + 1e-9 * h { Some(snap(t)) } else { None };
        let minus = if -t >= lo - 1e-9 * h { Some(snap(-t)) } else { None };
        let v = match (plus, minus) {
            (Some(a), Some(b)) => {
                asym = asym.max((a - b).abs());
                0.5 * (a + b)
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 0.0,
        };
        values.push(v);
    }
    let peak = peak_abs(&values);
    let asymmetry = if two_sided && peak > 0.0 { asym / peak } else { 0.0 };
    Ok(Symmetrized { h, values, asymmetry })
}

/// `D(τ) = R′(τ)/τ` on the one-sided grid: 5-point quadratic-fit derivatives
/// with the even extension of `R`, and `D(0) = R″(0)`.
fn derivative_over_tau(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let y = |k: isize| -> f64 {
        let m = k.unsigned_abs();
        if m < n {
            v[m]
        } else {
            0.0
        }
    };
    (0..n as isize)
        .map(|k| {
            if k == 0 {
                (2.0 * y(-2) - y(-1) - 2.0 * y(0) - y(1) + 2.0 * y(2)) / (7.0 * h * h)
            } else {
                let d = (-2.0 * y(k - 2) - y(k - 1) + y(k + 1) + 2.0 * y(k + 2)) / (10.0 * h);
                d / (k as f64 * h)
            }
        })
        .collect()
}

/// Inversion result plus the `±τ` mismatch of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelResult {
    pub profile: RadialProfile,
    pub asymmetry: f64,
}

/// `g(r) = −(1/π)∫₀^{W} D(√(r²+w²)) dw` with `D = R₁g′/τ`, trapezoid in `w`.
pub fn abel_invert_report(s: &Sinogram, radii: &[f64]) -> Result<AbelResult> {
    let sym = symmetrize(s)?;
    if sym.values.len() < MIN_SAMPLES / 2 {
        return Err(Error::Resolution("too few samples on one side of τ = 0".into()));
    }
    let peak = peak_abs(&sym.values);
    let last = sym.values.last().unwrap().abs();
    if peak > 0.0 && last > TAIL_RATIO * peak {
        return Err(Error::Tail(format!("sinogram ends at {:.3e} of its peak", last / peak)));
    }
    if sym.asymmetry > ASYMMETRY_WARN {
        log::warn!("sinogram asymmetry {:.3} exceeds {ASYMMETRY_WARN}: axis misalignment suspected", sym.asymmetry);
    }
    let h = sym.h;
    let tmax = (sym.values.len() - 1) as f64 * h;
    let d = derivative_over_tau(&sym.values, h);
    let nodes: Vec<f64> = (0..d.len()).map(|k| k as f64 * h).collect();
    let values = crate::par::map_indices(radii.len(), |i| {
        let r = radii[i].abs();
        if r >= tmax {
            return 0.0;
        }
        let w_max = (tmax * tmax - r * r).sqrt();
        let m = (w_max / h).ceil().max(1.0) as usize;
        let dw = w_max / m as f64;
        let mut acc = 0.0;
        for j in 0..=m {
            let w = j as f64 * dw;
            let c = if j == 0 || j == m { 0.5 } else { 1.0 };
            acc += c * cubic_even(&nodes, &d, (r * r + w * w).sqrt());
        }
        -acc * dw / PI
    });
    Ok(AbelResult { profile: RadialProfile { z: s.z, radii: radii.to_vec(), values }, asymmetry: sym.asymmetry })
}

pub fn abel_invert(s: &Sinogram, radii: &[f64]) -> Result<RadialProfile> {
    abel_invert_report(s, radii).map(|r| r.profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, half: f64) -> Vec<f64> {
        (0..n).map(|k| -half + 2.0 * half * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn gaussian_forward() {
        let radii: Vec<f64> = (0..2048).map(|k| 8.0 * k as f64 / 2047.0).collect();
        let g = RadialProfile { z: 1.0, values: radii.iter().map(|r| (-r * r).exp()).collect(), radii };
        let taus = grid(257, 4.0);
        let s = forward_radial_radon(&g, &taus).unwrap();
        let pi_sqrt = PI.sqrt();
        let err = taus.iter().zip(&s.values).map(|(t, v)| (v - pi_sqrt * (-t * t).exp()).abs()).fold(0.0, f64::max);
        assert!(err / pi_sqrt < 1e-6, "{err}");
    }

    #[test]
    fn gaussian_inverse() {
        let taus = grid(2048, 8.0);
        let s = Sinogram { z: 1.0, values: taus.iter().map(|t| PI.sqrt() * (-t * t).exp()).collect(), taus };
        let radii: Vec<f64> = (0..60).map(|k| 0.05 * k as f64).collect();
        let g = abel_invert(&s, &radii).unwrap();
        let err = radii.iter().zip(&g.values).map(|(r, v)| (v - (-r * r).exp()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn zero_in_zero_out() {
        let taus = grid(64, 3.0);
        let s = Sinogram { z: 1.0, values: vec![0.0; 64], taus };
        let g = abel_invert(&s, &[0.0, 0.5, 1.0]).unwrap();
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn too_few_samples() {
        let taus = grid(10, 3.0);
        let s = Sinogram { z: 1.0, values: taus.iter().map(|t| (-t * t).exp()).collect(), taus };
        assert!(matches!(abel_invert(&s, &[0.0]), Err(Error::Resolution(_))));
    }

    #[test]
    fn truncated_tail() {
        let taus = grid(64, 1.0);
        let s = Sinogram { z: 1.0, values: taus.iter().map(|t| (-t * t).exp()).collect(), taus };
        assert!(matches!(abel_invert(&s, &[0.0]), Err(Error::Tail(_))));
    }

    #[test]
    fn cubic_is_exact_on_cubics() {
        let xs: Vec<f64> = (0..20).map(|k| 0.1 * k as f64 + 0.01 * (k * k) as f64).collect();
        let f = |x: f64| 1.0 + x * x - 0.3 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for x in [0.35, 1.0, 2.2] {
            assert!((cubic_even(&xs, &ys, x) - f(x)).abs() < 1e-12);
        }
    }
}
