use super::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::geometry::{cross, dot, norm, scale, stereographic_inverse, sub, UnitDir, Vec3};
use crate::pencil_beam::MediumParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn particle_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64);
    r
}

/// Orthonormal tangent pair at `d` from the global e₁, e₂ (e₂, e₃ near ±e₁).
fn tangent_basis(d: Vec3) -> (Vec3, Vec3) {
    let e1 = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let t1 = sub(e1, scale(d, dot(e1, d)));
    let t1 = scale(t1, 1.0 / norm(t1));
    (t1, cross(d, t1))
}

fn check(p: &MediumParams, n: usize, dz: f64, z_last: f64) -> Result<usize> {
    if p.s != 1.0 {
        return Err(Error::Unsupported("Monte Carlo transport is implemented for s = 1 only".into()));
    }
    if n < 1000 {
        return Err(Error::Domain(format!("need at least 1000 particles, got {n}")));
    }
    if !(dz > 0.0 && dz <= 0.01 * z_last + 1e-15 * z_last) {
        return Err(Error::Domain(format!("step {dz} must not exceed 1% of the final station {z_last}")));
    }
    Ok(((z_last / dz).round()) as usize)
}

struct Coupled {
    mc: Vec<(Vec3, UnitDir)>,
    fpb: Vec<(Vec3, UnitDir)>,
}

/// One particle: sphere Brownian motion `θ ← normalize(θ + √(2ε²D dz)·ζ)` with
/// tangent Gaussian `ζ`, and the pencil-beam path driven by the same normals,
/// `w ← w + √(2ε²D dz)·N`, `x′ ← x′ + w dz`, `θ = S⁻¹(w/2)`.
fn run_particle(p: &MediumParams, dz: f64, stops: &[usize], seed: u64, i: usize, with_fpb: bool) -> Coupled {
    let mut rng = particle_rng(seed, i);
    let amp = (2.0 * p.eps * p.eps * p.d * dz).sqrt();
    let mut x = [0.0; 3];
    let mut th = [0.0, 0.0, 1.0];
    let (mut xf, mut w) = ([0.0; 2], [0.0; 2]);
    let mut out = Coupled { mc: Vec::with_capacity(stops.len()), fpb: Vec::new() };
    let mut step = 0;
    for &stop in stops {
        while step < stop {
            for k in 0..3 {
                x[k] += th[k] * dz;
            }
            let (n1, n2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let (t1, t2) = tangent_basis(th);
            let moved = [
                th[0] + amp * (n1 * t1[0] + n2 * t2[0]),
                th[1] + amp * (n1 * t1[1] + n2 * t2[1]),
                th[2] + amp * (n1 * t1[2] + n2 * t2[2]),
            ];
            th = scale(moved, 1.0 / norm(moved));
            if with_fpb {
                xf[0] += w[0] * dz;
                xf[1] += w[1] * dz;
                w[0] += amp * n1;
                w[1] += amp * n2;
            }
            step += 1;
        }
        out.mc.push((x, UnitDir::new(th).unwrap_or(UnitDir::e3())));
        if with_fpb {
            let z = step as f64 * dz;
            out.fpb.push(([xf[0], xf[1], z], stereographic_inverse([0.5 * w[0], 0.5 * w[1]])));
        }
    }
    out
}

fn collect(p: &MediumParams, n: usize, dz: f64, stops: &[usize], pick: impl Fn(&Coupled, usize) -> (Vec3, UnitDir) + Sync, parts: &[Coupled]) -> Vec<ParticleCloud> {
    stops
        .iter()
        .enumerate()
        .map(|(s, &stop)| {
            let w = p.f0 * (-p.lambda * stop as f64 * dz).exp() / n as f64;
            let mut c = ParticleCloud { positions: Vec::with_capacity(n), directions: Vec::with_capacity(n), weights: vec![w; n] };
            for part in parts {
                let (x, d) = pick(part, s);
                c.positions.push(x);
                c.directions.push(d);
            }
            c
        })
        .collect()
}

/// Monte Carlo clouds at each station in `zs` (ascending), one trajectory
/// per particle. Weights are `F₀e^{−λz}/N`.
pub fn mc_snapshots(p: &MediumParams, n: usize, dz: f64, zs: &[f64], seed: u64) -> Result<Vec<ParticleCloud>> {
    let z_last = *zs.last().ok_or_else(|| Error::Domain("no stations".into()))?;
    check(p, n, dz, z_last)?;
    let stops: Vec<usize> = zs.iter().map(|z| (z / dz).round() as usize).collect();
    if stops.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("stations must ascend".into()));
    }
    let parts = crate::par::map_indices(n, |i| run_particle(p, dz, &stops, seed, i, false));
    Ok(collect(p, n, dz, &stops, |c, s| c.mc[s], &parts))
}

/// Monte Carlo Fokker-Planck transport (s = 1) to station `z_final`.
pub fn mc_fokker_planck(p: &MediumParams, n: usize, dz: f64, z_final: f64, seed: u64) -> Result<ParticleCloud> {
    Ok(mc_snapshots(p, n, dz, &[z_final], seed)?.pop().unwrap())
}

/// Monte Carlo cloud and the pencil-beam cloud driven by the same normals.
pub fn mc_coupled(p: &MediumParams, n: usize, dz: f64, z_final: f64, seed: u64) -> Result<(ParticleCloud, ParticleCloud)> {
    let stops = [check(p, n, dz, z_final)?];
    let parts = crate::par::map_indices(n, |i| run_particle(p, dz, &stops, seed, i, true));
    let mc = collect(p, n, dz, &stops, |c, s| c.mc[s], &parts).pop().unwrap();
    let fpb = collect(p, n, dz, &stops, |c, s| c.fpb[s], &parts).pop().unwrap();
    Ok((mc, fpb))
}

/// Ballistic cloud: unit-mass bump of radius `width` at the source carried
/// along e₃ without scattering.
pub fn ballistic_cloud(p: &MediumParams, n: usize, z: f64, width: f64, seed: u64) -> Result<ParticleCloud> {
    if !(width > 0.0) || n == 0 {
        return Err(Error::Domain("ballistic cloud needs width > 0 and particles".into()));
    }
    let positions = crate::par::map_indices(n, |i| {
        let mut rng = particle_rng(seed ^ 0x6261_6c6c, i);
        // Rejection sampling of exp(−1/(1−r²)) on the unit disk; the peak is e⁻¹.
        loop {
            let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let r2 = a * a + b * b;
            if r2 >= 1.0 {
                continue;
            }
            if rng.gen::<f64>() * (-1.0f64).exp() < (-1.0 / (1.0 - r2)).exp() {
                return [width * a, width * b, z];
            }
        }
    });
    let w = p.f0 * (-p.lambda * z).exp() / n as f64;
    Ok(ParticleCloud { positions, directions: vec![UnitDir::e3(); n], weights: vec![w; n] })
}

/// Relative change of the transverse variance at `z` when `dz` is halved.
pub fn step_halving_change(p: &MediumParams, n: usize, dz: f64, z: f64, seed: u64) -> Result<f64> {
    let v = |c: &ParticleCloud| {
        let v = c.position_variance();
        v[0] + v[1]
    };
    let coarse = v(&mc_fokker_planck(p, n, dz, z, seed)?);
    let fine = v(&mc_fokker_planck(p, n, 0.5 * dz, z, seed)?);
    Ok(((coarse - fine) / fine).abs())
}
