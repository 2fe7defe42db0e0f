//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances and
//! runtime budgets are pinned below. Criteria in `KNOWN_FAILURES` are
//! implemented as stated, reported as FAIL, and must keep failing; every
//! other criterion must pass.

use offaxis::forward_model::{self, BroadShape, Beam, SourceProfile};
use offaxis::geometry::{self, BeamAxis, Camera, UnitDir};
use offaxis::pencil_beam::{self, GridSpec, MediumParams};
use offaxis::pipeline;
use offaxis::radon::{self, RadialProfile, Sinogram};
use offaxis::recovery::{self, SpectralStationData, StationData};
use offaxis::scenario::RecoveryMethod;
use offaxis::validation::{self, CompareConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

/// Criteria whose statement does not hold for the implemented mathematics.
const KNOWN_FAILURES: &[(&str, &str)] = &[
    ("5", "H(α) = ((1+αt₁)^{2s+1}−1)/((1+αt₂)^{2s+1}−1) decreases from t₁/t₂ to (t₁/t₂)^{2s+1}"),
    ("R1", "three stations at t = (0,2,4) with z₀ = 10 amplify 1% noise to ~17% median z₀ error"),
];

struct Line {
    id: &'static str,
    pass: bool,
    text: String,
}

fn line(id: &'static str, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) -> Line {
    let pass = pass && elapsed < budget;
    let text = format!(
        "{} [{id}] {name}: {detail}; runtime {:.2}s (budget {:.0}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    report(&text);
    Line { id, pass, text }
}

/// Writes past libtest's output capture so the report shows in plain
/// `cargo test` logs.
fn report(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(", ")
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Gauss-Legendre nodes and weights on [−1, 1] by Newton iteration on Pₙ.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let w = 2.0 / ((1.0 - x * x) * dp * dp);
                    return (x, w);
                }
            }
        })
        .collect()
}

/// `∫∫ e^{−A(x²+y²)^s} dx dy` over the plane in Cartesian coordinates on
/// geometrically graded tensor panels (the cusp sits at the origin).
fn cartesian_gamma_integral(a: f64, s: f64) -> f64 {
    let reach = (60.0 / a).powf(0.5 / s);
    let mut edges = vec![0.0];
    let mut h = reach * 2f64.powi(-50);
    while edges.last().unwrap() < &reach {
        edges.push(h.min(reach));
        h *= 2.0;
    }
    let nodes = gauss_legendre(20);
    let mut pts = Vec::new();
    for w in edges.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for &(x, wt) in &nodes {
            pts.push((mid + half * x, half * wt));
        }
    }
    let mut total = 0.0;
    for &(x, wx) in &pts {
        for &(y, wy) in &pts {
            total += wx * wy * (-a * (x * x + y * y).powf(s)).exp();
        }
    }
    4.0 * total
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in [0.25, 0.5, 0.75, 1.0] {
        for a in [0.5, 2.0] {
            worst = worst.max(rel(forward_model::gamma_integral(a, s), cartesian_gamma_integral(a, s)));
        }
    }
    let pi_err = (forward_model::gamma_integral(1.0, 1.0) - PI).abs();
    line(
        "1",
        "gamma_integral vs Cartesian quadrature",
        worst < 1e-6 && pi_err < 1e-12,
        format!("max rel err {worst:.2e} (tol 1e-6), |s=1,A=1 − π| {pi_err:.1e} (tol 1e-12)"),
        t.elapsed(),
        Duration::from_secs(1),
    )
}

fn criterion_2() -> Line {
    let t = Instant::now();
    let p = MediumParams { lambda: 0.2, d: 0.8, s: 1.0, eps: 0.3, f0: 1.7, sigma: 1.0 };
    let z = 1.5;
    let spec = GridSpec { half_width: 6.0, points: 256 };
    let grid = pencil_beam::spatial_marginal_grid(z, spec, &p).unwrap();
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for i in 0..256 {
        for j in 0..256 {
            let exact = pencil_beam::gaussian_spatial_marginal([spec.coord(i), spec.coord(j)], z, &p).unwrap();
            worst = worst.max((grid.at(i, j) - exact).abs());
            peak = peak.max(exact);
        }
    }
    let err = worst / peak;
    line(
        "2",
        "spectral marginal vs Gaussian closed form (256²)",
        err < 1e-6,
        format!("L∞ rel err {err:.2e} (tol 1e-6)"),
        t.elapsed(),
        Duration::from_secs(5),
    )
}

fn criterion_3() -> Line {
    let t = Instant::now();
    let half = 8.0;
    let mut fwd = Vec::new();
    let mut inv = Vec::new();
    for n in [256usize, 512, 1024, 2048] {
        let radii: Vec<f64> = (0..n).map(|k| half * k as f64 / (n - 1) as f64).collect();
        let g = RadialProfile { z: 1.0, values: radii.iter().map(|r| (-r * r).exp()).collect(), radii };
        let taus: Vec<f64> = (0..n).map(|k| -half + 2.0 * half * k as f64 / (n - 1) as f64).collect();
        let s = radon::forward_radial_radon(&g, &taus).unwrap();
        let exact = |t: f64| PI.sqrt() * (-t * t).exp();
        fwd.push(s.values.iter().zip(&taus).map(|(v, t)| (v - exact(*t)).abs()).fold(0.0, f64::max) / PI.sqrt());

        let sino = Sinogram { z: 1.0, values: taus.iter().map(|t| exact(*t)).collect(), taus };
        let out: Vec<f64> = (0..n).map(|k| 4.0 * k as f64 / (n - 1) as f64).collect();
        let h = radon::abel_invert(&sino, &out).unwrap();
        inv.push(h.values.iter().zip(&out).map(|(v, r)| (v - (-r * r).exp()).abs()).fold(0.0, f64::max));
    }
    let decreasing = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]);
    line(
        "3",
        "Radon round trip on the Gaussian pair",
        fwd[3] < 1e-3 && inv[3] < 1e-3 && decreasing(&fwd) && decreasing(&inv),
        format!(
            "forward {:.2e} inverse {:.2e} at N=2048 (tol 1e-3); forward errors [{}], inverse errors [{}] (strictly decreasing)",
            fwd[3],
            inv[3],
            sci(&fwd),
            sci(&inv)
        ),
        t.elapsed(),
        Duration::from_secs(5),
    )
}

/// Ground truths drawn uniformly (log-uniformly for scales) from the box.
fn random_truth(rng: &mut ChaCha8Rng) -> (MediumParams, f64) {
    let lu = |rng: &mut ChaCha8Rng, a: f64, b: f64| (a.ln() + rng.gen::<f64>() * (b / a).ln()).exp();
    let p = MediumParams {
        lambda: rng.gen_range(0.0..0.5),
        d: lu(rng, 1e-4, 1.0),
        s: rng.gen_range(0.2..1.0),
        eps: 1.0,
        f0: 1.0,
        sigma: lu(rng, 0.1, 10.0),
    };
    (p, rng.gen_range(1.0..100.0))
}

fn worst_error(p: &MediumParams, z0: f64, r: &recovery::RecoveredParams) -> f64 {
    [rel(r.lambda, p.lambda), rel(r.s, p.s), rel(r.eps_d, p.eps_d()), rel(r.c0, p.c0()), rel(r.z0, z0)]
        .into_iter()
        .fold(0.0, f64::max)
}

fn criterion_4() -> Line {
    let t = Instant::now();
    let offsets = [0.0, 100.0, 200.0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut chain, mut analytic): (f64, f64) = (0.0, 0.0);
    let mut failures = 0;
    for _ in 0..50 {
        let (p, z0) = random_truth(&mut rng);
        let axis = BeamAxis { point: [0.0; 3], direction: UnitDir::e3() };
        let beam = Beam { axis, medium: p, source: SourceProfile::Point };
        let run = || -> offaxis::Result<recovery::RecoveredParams> {
            let mut sinos = Vec::new();
            for t in offsets {
                let c = pipeline::station_camera(&axis, z0 + t, &beam, 50.0, 50.0)?;
                sinos.push(pipeline::station_sinogram(&c, &beam, None)?);
            }
            Ok(pipeline::recover_from_sinograms(&sinos, &offsets, RecoveryMethod::General)?.params)
        };
        match run() {
            Ok(r) => chain = chain.max(worst_error(&p, z0, &r)),
            Err(_) => failures += 1,
        }
        let d = StationData {
            offsets: offsets.to_vec(),
            centers: offsets.iter().map(|t| forward_model::g_center(z0 + t, &p).unwrap()).collect(),
            masses: offsets.iter().map(|t| forward_model::g_mass(z0 + t, &p)).collect(),
        };
        match recovery::recover_point_source(&d) {
            Ok(r) => analytic = analytic.max(worst_error(&p, z0, &r)),
            Err(_) => failures += 1,
        }
    }
    line(
        "4",
        "end-to-end identifiability, 50 random truths",
        failures == 0 && chain < 0.02 && analytic < 1e-6,
        format!("worst rel err: chain {chain:.2e} (tol 2e-2), analytic centers {analytic:.2e} (tol 1e-6), failures {failures}"),
        t.elapsed(),
        Duration::from_secs(120),
    )
}

fn criterion_5() -> Line {
    let t = Instant::now();
    let alphas: Vec<f64> = (0..1000).map(|k| 10f64.powf(-8.0 + 14.0 * k as f64 / 999.0)).collect();
    let (mut r_viol, mut h_viol) = (0, 0);
    for (t1, t2) in [(1.0, 2.0), (2.0, 4.0), (0.5, 5.0)] {
        r_viol += alphas.windows(2).filter(|a| !(recovery::ratio_r(a[1], t1, t2) > recovery::ratio_r(a[0], t1, t2))).count();
        for s in [0.25, 0.5, 0.75, 1.0] {
            h_viol += alphas
                .windows(2)
                .filter(|a| !(recovery::ratio_h(a[1], t1, t2, s) > recovery::ratio_h(a[0], t1, t2, s)))
                .count();
        }
    }
    line(
        "5",
        "R(α) and H(α) strictly increasing",
        r_viol == 0 && h_viol == 0,
        format!("violations: R {r_viol}, H {h_viol} (tol 0)"),
        t.elapsed(),
        Duration::from_secs(10),
    )
}

fn criterion_6() -> Line {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (z0, d, lambda) in [(8.0, 0.02, 0.05), (3.0, 0.5, 0.0), (40.0, 1e-3, 0.3)] {
        let p = MediumParams { lambda, d, s: 1.0, eps: 1.0, f0: 1.0, sigma: 2.0 };
        let offsets = [0.0, 3.0, 7.0];
        let data = StationData {
            offsets: offsets.to_vec(),
            centers: offsets.iter().map(|t| forward_model::g_center(z0 + t, &p).unwrap()).collect(),
            masses: offsets.iter().map(|t| forward_model::g_mass(z0 + t, &p)).collect(),
        };
        let a = recovery::recover_point_source_s1(&data).unwrap();
        let b = recovery::recover_point_source(&data).unwrap();
        for (x, y) in [(a.z0, b.z0), (a.eps_d, b.eps_d), (a.c0, b.c0), (a.s, b.s)] {
            worst = worst.max(rel(x, y));
        }
        worst = worst.max((a.lambda - b.lambda).abs() / b.lambda.max(1e-3));
    }
    line(
        "6",
        "s=1 branch vs general recovery",
        worst < 1e-6,
        format!("max rel disagreement {worst:.2e} (tol 1e-6)"),
        t.elapsed(),
        Duration::from_secs(1),
    )
}

fn spectral_data(p: &MediumParams, src: &SourceProfile, z0: f64, offsets: &[f64]) -> SpectralStationData {
    let e = std::f64::consts::E;
    let at = |k: f64, t: f64| forward_model::g_broad_spectrum([k, 0.0], z0 + t, p, src).unwrap().re;
    let mass = match src {
        SourceProfile::Broad { h } => h.mass(),
        SourceProfile::Point => 1.0,
    };
    SpectralStationData {
        offsets: offsets.to_vec(),
        at_one: offsets.iter().map(|t| at(1.0, *t)).collect(),
        at_e: offsets.iter().map(|t| at(e, *t)).collect(),
        masses: offsets.iter().map(|t| p.sigma * mass * (-p.lambda * (z0 + t)).exp()).collect(),
    }
}

fn criterion_7() -> Line {
    let t = Instant::now();
    let p = MediumParams { lambda: 0.1, d: 2e-3, s: 0.7, eps: 0.1, f0: 1.0, sigma: 1.5 };
    let (z0, offsets) = (5.0, [0.0, 2.0, 4.0]);
    let b = 1.0;
    let src = SourceProfile::Broad { h: BroadShape::Gaussian { b, mass: 2.0 } };
    let spec = GridSpec { half_width: 2.0, points: 128 };
    let g0 = forward_model::g_broad_grid(z0, spec, &p, &src).unwrap();
    let rec = recovery::recover_broad_source(&spectral_data(&p, &src, z0, &offsets), &g0, p.eps, 1e6).unwrap();
    let hs = rec.h.spec;
    let exact = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * b * b)).exp() / (2.0 * PI * b * b);
    let peak = exact(0.0, 0.0);
    let mut h_err: f64 = 0.0;
    for i in 0..hs.points {
        for j in 0..hs.points {
            h_err = h_err.max((rec.h.at(i, j) - exact(hs.coord(i), hs.coord(j))).abs() / peak);
        }
    }

    let narrow = SourceProfile::Broad { h: BroadShape::Gaussian { b: 1e-4, mass: 1.0 } };
    // Nyquist ≈ 600 resolves the point-like profile without crossing the cutoff.
    let fine = GridSpec { half_width: 0.33, points: 128 };
    let g_narrow = forward_model::g_broad_grid(z0, fine, &p, &narrow).unwrap();
    let delta = recovery::recover_broad_source(&spectral_data(&p, &narrow, z0, &offsets), &g_narrow, p.eps, 1e6).unwrap();
    let point = recovery::recover_point_source(&StationData {
        offsets: offsets.to_vec(),
        centers: offsets.iter().map(|t| forward_model::g_center(z0 + t, &p).unwrap()).collect(),
        masses: offsets.iter().map(|t| forward_model::g_mass(z0 + t, &p)).collect(),
    })
    .unwrap();
    let (a, q) = (&delta.params, &point);
    let param_err = [rel(a.lambda, q.lambda), rel(a.s, q.s), rel(a.eps_d, q.eps_d), rel(a.c0, q.c0), rel(a.z0, q.z0)]
        .into_iter()
        .fold(0.0, f64::max);
    line(
        "7",
        "broad-source recovery",
        h_err < 1e-3 && param_err < 1e-4,
        format!(
            "normalized h L∞ err {h_err:.2e} (tol 1e-3, truncated {:.1}%), delta-limit vs point source {param_err:.2e} (tol 1e-4)",
            100.0 * rec.truncated
        ),
        t.elapsed(),
        Duration::from_secs(30),
    )
}

fn comparison_medium() -> MediumParams {
    MediumParams { lambda: 0.1, d: 1.5, s: 1.0, eps: 0.1, f0: 1.0, sigma: 1.0 }
}

fn criterion_8() -> Line {
    let t = Instant::now();
    let p = comparison_medium();
    let mut ordered = true;
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let cfg = CompareConfig { seed, ..Default::default() };
        for r in validation::compare_models(&p, &[0.1, 0.05], &cfg).unwrap() {
            ordered &= r.ordered();
            rows.push((seed, r));
        }
    }
    let cfg = CompareConfig { seed: 1, ..Default::default() };
    let extra = validation::compare_models(&p, &[0.2, 0.025], &cfg).unwrap();
    let mut trend: Vec<(f64, f64)> = rows.iter().filter(|(s, _)| *s == 1).map(|(_, r)| (r.eps, r.d_fpb)).collect();
    trend.extend(extra.iter().map(|r| (r.eps, r.d_fpb)));
    let (eps, d): (Vec<f64>, Vec<f64>) = trend.iter().cloned().unzip();
    let rho = validation::spearman(&eps, &d);
    let worst_gap = rows.iter().map(|(_, r)| r.d_fpb / r.d_ballistic).fold(0.0, f64::max);
    let ball: Vec<String> = extra.iter().map(|r| format!("{:.3}", r.d_ballistic)).collect();
    line(
        "8",
        "approximation-hierarchy ordering",
        ordered && rho > 0.9,
        format!(
            "d_fpb < d_ballistic in {}/{} runs (max ratio {worst_gap:.3}), Spearman ρ(ε, d_fpb) = {rho:.3} over {:?} (tol > 0.9), d_ballistic at ε=0.2,0.025: {}",
            rows.iter().filter(|(_, r)| r.ordered()).count(),
            rows.len(),
            eps,
            ball.join(", ")
        ),
        t.elapsed(),
        Duration::from_secs(600),
    )
}

fn criterion_9() -> Line {
    let t = Instant::now();
    let p = MediumParams { lambda: 0.4, d: 1.0, s: 1.0, eps: 0.05, f0: 1.0, sigma: 1.0 };
    let zs = [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
    let clouds = validation::mc_snapshots(&p, 100_000, 0.005, &zs, 9).unwrap();
    let pts: Vec<(f64, f64)> = clouds
        .iter()
        .zip(zs)
        .map(|(c, z)| {
            let v = c.position_variance();
            (z.ln(), (v[0] + v[1]).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let decay = clouds.iter().zip(zs).map(|(c, z)| rel(c.total(), (-p.lambda * z).exp())).fold(0.0, f64::max);
    line(
        "9",
        "Monte Carlo physics",
        (2.7..=3.3).contains(&slope) && decay < 1e-12,
        format!("variance exponent {slope:.3} (range [2.7, 3.3]), weight decay rel err {decay:.1e} (tol 1e-12)"),
        t.elapsed(),
        Duration::from_secs(300),
    )
}

/// Two orthogonal-incidence cameras 30 units downstream of a tilted Gaussian
/// (s = 1) beam. The source sits at z = −30 so that the minimum-norm axis
/// point lies inside the imaged stretch.
fn criterion_10() -> Line {
    let d = UnitDir::new([0.02, -0.01, 1.0]).unwrap();
    let source = [0.5, -0.3, -30.0];
    let truth = BeamAxis { point: source, direction: d };
    let (o1, _) = geometry::plane_basis(d);
    let o2 = geometry::cross(d.v(), o1);
    let cameras: Vec<Camera> = [o1, o2]
        .iter()
        .map(|o| Camera {
            center: geometry::sub(truth.at(30.0), geometry::scale(*o, 12.0)),
            orientation: UnitDir::new(*o).unwrap(),
            radius: 12.0,
            pitch: 0.08,
        })
        .collect();
    let medium = MediumParams { lambda: 0.05, d: 0.05, s: 1.0, eps: 0.1, f0: 2.0, sigma: 0.5 };
    let beam = Beam { axis: truth, medium, source: SourceProfile::Point };
    let t = Instant::now();
    let (axis, _) = pipeline::triangulate_cameras(&cameras, &beam, None).unwrap();
    let elapsed = t.elapsed();
    let angle = geometry::norm(geometry::cross(axis.direction.v(), d.v())).asin();
    let aligned = geometry::dot(axis.direction.v(), d.v()) > 0.0;
    // Minimum-norm point of the true line.
    let closest = geometry::sub(source, geometry::scale(d.v(), geometry::dot(source, d.v())));
    let offset = geometry::norm(geometry::sub(axis.point, closest));
    line(
        "10",
        "two-camera triangulation",
        aligned && angle < 1e-6 && offset < 1e-6,
        format!("direction err {angle:.2e} rad (tol 1e-6, downstream {aligned}), point err {offset:.2e} (tol 1e-6)"),
        elapsed,
        Duration::from_secs(1),
    )
}

/// Supplementary regression bound on the point-source recovery: 1%
/// multiplicative noise on center values, 100 seeds, median z₀ error < 10%.
fn regression_noise() -> Line {
    let t = Instant::now();
    let p = MediumParams { lambda: 0.1, d: 0.01, s: 0.5, eps: 1.0, f0: 1.0, sigma: 1.0 };
    let offsets = [0.0, 2.0, 4.0];
    let mut errs = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let d = StationData {
            offsets: offsets.to_vec(),
            centers: offsets.iter().map(|t| forward_model::g_center(10.0 + t, &p).unwrap() * (1.0 + noise.sample(&mut rng))).collect(),
            masses: offsets.iter().map(|t| forward_model::g_mass(10.0 + t, &p)).collect(),
        };
        errs.push(recovery::recover_point_source(&d).map(|r| rel(r.z0, 10.0)).unwrap_or(f64::INFINITY));
    }
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[49] + errs[50]);
    line(
        "R1",
        "z₀ under 1% noise",
        median < 0.10,
        format!("median rel err {median:.3} (tol 0.10)"),
        t.elapsed(),
        Duration::from_secs(10),
    )
}

#[test]
fn acceptance() {
    let lines = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
        regression_noise(),
    ];
    for (id, why) in KNOWN_FAILURES {
        report(&format!("known failure [{id}]: {why}"));
    }
    for l in &lines {
        match KNOWN_FAILURES.iter().find(|(id, _)| *id == l.id) {
            Some(_) => assert!(!l.pass, "criterion {} now passes; remove it from KNOWN_FAILURES", l.id),
            None => assert!(l.pass, "{}", l.text),
        }
    }
}
