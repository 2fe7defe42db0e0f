//! Measurement-to-parameters chain: triangulate the axis from camera images,
//! record one sinogram per station, invert each for the center value and
//! integrate it for the mass, then recover the medium parameters.

use crate::error::{Error, Result};
use crate::forward_model::{self, apply_noise, Beam, SourceProfile};
use crate::geometry::{self, BeamAxis, Camera, Pixel, Ridge, UnitDir};
use crate::radon::{self, Sinogram};
use crate::recovery::{self, RecoveredParams, StationData};
use crate::scenario::{RecoveryMethod, Scenario};
use crate::stable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type NoiseRng = ChaCha8Rng;

/// Noise generator for one measurement set: stations use streams `0..`,
/// triangulation cameras `1_000_000 + k`.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Per-camera triangulation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeReport {
    pub angle: f64,
    pub anisotropy: f64,
    pub centroid: [f64; 2],
}

impl From<Ridge> for RidgeReport {
    fn from(r: Ridge) -> Self {
        RidgeReport { angle: r.angle, anisotropy: r.anisotropy, centroid: r.centroid }
    }
}

/// Camera images of the beam, each reduced to a ridge line and a detector
/// plane; the planes are intersected for the axis.
pub fn triangulate_cameras(
    cameras: &[Camera],
    beam: &Beam,
    noise: Option<(f64, u64)>,
) -> Result<(BeamAxis, Vec<RidgeReport>)> {
    let mut images = Vec::with_capacity(cameras.len());
    for (k, c) in cameras.iter().enumerate() {
        let (pixels, mut values) = forward_model::camera_image(c, beam)?;
        if let Some((std, seed)) = noise {
            let mut rng = noise_rng(seed, 1_000_000 + k as u64);
            values.iter_mut().for_each(|v| *v = apply_noise(*v, std, &mut rng));
        }
        images.push((pixels, values));
    }
    triangulate_images(cameras, &images)
}

/// Axis from recorded images. The line is oriented downstream, the
/// direction along which the ridge dims.
pub fn triangulate_images(cameras: &[Camera], images: &[(Vec<Pixel>, Vec<f64>)]) -> Result<(BeamAxis, Vec<RidgeReport>)> {
    if cameras.len() != images.len() {
        return Err(Error::Schema("one image per camera is required".into()));
    }
    let mut planes = Vec::with_capacity(cameras.len());
    let mut reports = Vec::with_capacity(cameras.len());
    for (c, (pixels, values)) in cameras.iter().zip(images) {
        let (point, dir, ridge) = geometry::ridge_line(c, pixels, values)?;
        planes.push(geometry::detector_plane(point, c.orientation, dir)?);
        reports.push(ridge.into());
    }
    let mut axis = geometry::triangulate(&planes)?;
    let mut cov = 0.0;
    for (pixels, values) in images {
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        let weighted = pixels.iter().zip(values).map(|(p, v)| v * axis.axial(p.x)).sum::<f64>() / total;
        let plain = pixels.iter().map(|p| axis.axial(p.x)).sum::<f64>() / pixels.len() as f64;
        cov += weighted - plain;
    }
    if cov > 0.0 {
        axis.direction = axis.direction.neg();
    }
    Ok((axis, reports))
}

/// Transverse extent used to size station cameras.
fn beam_extent(z: f64, beam: &Beam) -> Result<f64> {
    let w = forward_model::profile_width(z, &beam.medium)?;
    Ok(w.max(beam.source.support_radius(beam.medium.eps)))
}

/// Camera centered on the estimated axis at `s` along it, looking
/// orthogonally to it, with half-window `window·w` and pitch
/// `c_α·w/per_core` where `c_α` is the core width of the projected law.
pub fn station_camera(axis: &BeamAxis, s: f64, beam: &Beam, window: f64, per_core: f64) -> Result<Camera> {
    let center = axis.at(s);
    let z = beam.axis.axial(center);
    if !(z > 0.0) {
        return Err(Error::Domain(format!("station at z = {z} is not downstream of the source")));
    }
    let w = beam_extent(z, beam)?;
    let core = stable::core_width_1d(2.0 * beam.medium.s).min(1.0);
    let (e1, _) = geometry::plane_basis(axis.direction);
    Ok(Camera { center, orientation: UnitDir::new(e1)?, radius: window * w, pitch: core * w / per_core })
}

/// Sinogram of the central pixel row, with `τ` measured from the camera
/// center (the observer's axis estimate); `z` keeps the true station.
pub fn station_sinogram(c: &Camera, beam: &Beam, noise: Option<(f64, &mut ChaCha8Rng)>) -> Result<Sinogram> {
    let mut s = forward_model::sinogram(c, beam)?;
    let m = (s.taus.len() / 2) as f64;
    s.taus = (0..s.taus.len()).map(|k| (k as f64 - m) * c.pitch).collect();
    if let Some((std, rng)) = noise {
        s.values.iter_mut().for_each(|v| *v = apply_noise(*v, std, rng));
    }
    Ok(s)
}

/// Center value by Abel inversion at `r = 0` and windowed mass by
/// trapezoid integration.
pub fn invert_station(s: &Sinogram) -> Result<(f64, f64)> {
    let g = radon::abel_invert(s, &[0.0])?;
    Ok((g.values[0], s.integral()))
}

/// Recovery from per-station sinograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecovery {
    pub params: RecoveredParams,
    pub centers: Vec<f64>,
    pub window_masses: Vec<f64>,
    /// Masses after adding the modeled mass outside each window.
    pub masses: Vec<f64>,
    pub tail_iterations: usize,
}

fn recover(d: &StationData, method: RecoveryMethod) -> Result<RecoveredParams> {
    match method {
        RecoveryMethod::General => recovery::recover_point_source(d),
        RecoveryMethod::S1 => recovery::recover_point_source_s1(d),
    }
}

/// Recovers the parameters from sinograms at `offsets`. The mass outside
/// each window is modeled from the current estimate, `M = W/(1 − P(|T| > L/w))`,
/// and the recovery is repeated until the masses settle.
pub fn recover_from_sinograms(sinos: &[Sinogram], offsets: &[f64], method: RecoveryMethod) -> Result<PipelineRecovery> {
    if sinos.len() != offsets.len() {
        return Err(Error::Schema("one sinogram per station offset is required".into()));
    }
    let mut centers = Vec::with_capacity(sinos.len());
    let mut window = Vec::with_capacity(sinos.len());
    for s in sinos {
        let (c, w) = invert_station(s)?;
        centers.push(c);
        window.push(w);
    }
    let mut masses = window.clone();
    let mut params = recover(&StationData { offsets: offsets.to_vec(), centers: centers.clone(), masses: masses.clone() }, method)?;
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let m = params.medium();
        let mut next = Vec::with_capacity(sinos.len());
        for (j, s) in sinos.iter().enumerate() {
            let w = forward_model::profile_width(params.z0 + offsets[j], &m)?;
            let lo = -s.taus[0];
            let hi = *s.taus.last().unwrap();
            let outside = 0.5 * (stable::tail_1d(2.0 * params.s, lo / w) + stable::tail_1d(2.0 * params.s, hi / w));
            next.push(window[j] / (1.0 - outside));
        }
        let change = next.iter().zip(&masses).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        masses = next;
        params = recover(&StationData { offsets: offsets.to_vec(), centers: centers.clone(), masses: masses.clone() }, method)?;
        if change < 1e-14 {
            break;
        }
    }
    Ok(PipelineRecovery { params, centers, window_masses: window, masses, tail_iterations: iterations })
}

/// Everything the full chain produces.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub axis: BeamAxis,
    pub ridges: Vec<RidgeReport>,
    pub cameras: Vec<Camera>,
    pub sinograms: Vec<Sinogram>,
    pub recovery: PipelineRecovery,
}

/// Station sinograms along `axis` for a scenario.
pub fn synthesize_stations(sc: &Scenario, axis: &BeamAxis) -> Result<(Vec<Camera>, Vec<Sinogram>)> {
    let beam = sc.beam();
    let s0 = axis.axial(sc.stations.origin);
    let mut cams = Vec::new();
    let mut sinos = Vec::new();
    for (j, t) in sc.stations.offsets.iter().enumerate() {
        let c = station_camera(axis, s0 + t, &beam, sc.stations.window_widths, sc.stations.samples_per_core)?;
        let s = match (sc.noise.relative_std > 0.0, sc.seeds.noise) {
            (true, Some(seed)) => {
                let mut rng = noise_rng(seed, j as u64);
                station_sinogram(&c, &beam, Some((sc.noise.relative_std, &mut rng)))?
            }
            _ => station_sinogram(&c, &beam, None)?,
        };
        cams.push(c);
        sinos.push(s);
    }
    Ok((cams, sinos))
}

/// triangulate → sinogram → Abel inversion → recovery.
pub fn run(sc: &Scenario) -> Result<PipelineRun> {
    if !matches!(sc.source, SourceProfile::Point) {
        return Err(Error::Unsupported("the camera pipeline handles point sources; broad sources use recover_broad_source".into()));
    }
    let noise = match (sc.noise.relative_std > 0.0, sc.seeds.noise) {
        (true, Some(seed)) => Some((sc.noise.relative_std, seed)),
        _ => None,
    };
    let (axis, ridges) = triangulate_cameras(&sc.cameras, &sc.beam(), noise)?;
    let (cameras, sinograms) = synthesize_stations(sc, &axis)?;
    let recovery = recover_from_sinograms(&sinograms, &sc.stations.offsets, sc.recovery)?;
    Ok(PipelineRun { axis, ridges, cameras, sinograms, recovery })
}
