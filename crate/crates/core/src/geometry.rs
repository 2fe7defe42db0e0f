//! Coordinates and detector geometry: stereographic and stretched
//! coordinates, camera sampling sets, ridge extraction and axis triangulation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Point on the unit sphere. Norm is 1 within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct UnitDir(Vec3);

impl UnitDir {
    /// Normalizes `v`; fails on a (near) zero vector.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = norm(v);
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::Domain(format!("cannot normalize {v:?}")));
        }
        Ok(UnitDir(scale(v, 1.0 / n)))
    }

    pub const fn e3() -> Self {
        UnitDir([0.0, 0.0, 1.0])
    }

    pub fn v(&self) -> Vec3 {
        self.0
    }

    pub fn neg(&self) -> Self {
        UnitDir(scale(self.0, -1.0))
    }
}

impl TryFrom<Vec3> for UnitDir {
    type Error = Error;
    fn try_from(v: Vec3) -> Result<Self> {
        UnitDir::new(v)
    }
}

impl From<UnitDir> for Vec3 {
    fn from(u: UnitDir) -> Vec3 {
        u.0
    }
}

/// Circular detector array measuring light arriving along `orientation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub center: Vec3,
    pub orientation: UnitDir,
    pub radius: f64,
    pub pitch: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::Schema(format!("camera radius must be > 0, got {}", self.radius)));
        }
        if !(self.pitch > 0.0 && self.pitch < self.radius) {
            return Err(Error::Schema(format!(
                "camera pitch must lie in (0, radius), got {} for radius {}",
                self.pitch, self.radius
            )));
        }
        Ok(())
    }

    /// In-plane orthonormal basis `(e1, e2)` with `e1 × e2 = orientation`.
    /// `e1` is the projection of the coordinate axis least aligned with the
    /// orientation (first such axis on ties).
    pub fn basis(&self) -> (Vec3, Vec3) {
        plane_basis(self.orientation)
    }

    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        let (e1, e2) = self.basis();
        add(self.center, add(scale(e1, u), scale(e2, v)))
    }
}

pub fn plane_basis(n: UnitDir) -> (Vec3, Vec3) {
    let o = n.v();
    let mut k = 0;
    for i in 1..3 {
        if o[i].abs() < o[k].abs() - 1e-15 {
            k = i;
        }
    }
    let mut a = [0.0; 3];
    a[k] = 1.0;
    let e1 = UnitDir::new(sub(a, scale(o, dot(a, o)))).expect("axis not parallel to normal").v();
    let e2 = cross(o, e1);
    (e1, e2)
}

/// Plane through `point` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorPlane {
    pub point: Vec3,
    pub normal: UnitDir,
}

/// Line `point + t·direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamAxis {
    pub point: Vec3,
    pub direction: UnitDir,
}

impl BeamAxis {
    /// Axial coordinate of `x` relative to `point`.
    pub fn axial(&self, x: Vec3) -> f64 {
        dot(sub(x, self.point), self.direction.v())
    }

    /// Transverse offset of `x` from the axis.
    pub fn transverse(&self, x: Vec3) -> Vec3 {
        let d = sub(x, self.point);
        sub(d, scale(self.direction.v(), dot(d, self.direction.v())))
    }

    pub fn at(&self, z: f64) -> Vec3 {
        add(self.point, scale(self.direction.v(), z))
    }
}

/// S(θ) = (θ₁, θ₂)/(1 + θ₃).
pub fn stereographic_project(theta: UnitDir) -> Result<[f64; 2]> {
    let t = theta.v();
    let den = 1.0 + t[2];
    if den <= 1e-15 {
        return Err(Error::Domain("stereographic projection undefined at the south pole".into()));
    }
    Ok([t[0] / den, t[1] / den])
}

/// S⁻¹(v) = (2v, 1 − |v|²)/(1 + |v|²).
pub fn stereographic_inverse(v: [f64; 2]) -> UnitDir {
    let q = v[0] * v[0] + v[1] * v[1];
    let den = 1.0 + q;
    let w = [2.0 * v[0] / den, 2.0 * v[1] / den, (1.0 - q) / den];
    // Renormalize to absorb the rounding in the three quotients.
    let n = norm(w);
    UnitDir(scale(w, 1.0 / n))
}

/// Surface element of the sphere in stereographic coordinates, 4/(1+|v|²)².
pub fn stereographic_jacobian(v: [f64; 2]) -> f64 {
    let q = 1.0 + v[0] * v[0] + v[1] * v[1];
    4.0 / (q * q)
}

/// Stretched coordinates X = (x′/(2ε), x³), V = S(θ)/ε.
pub fn to_pencil_coords(x: Vec3, theta: UnitDir, eps: f64) -> Result<(Vec3, [f64; 2])> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    let v = stereographic_project(theta)?;
    Ok(([x[0] / (2.0 * eps), x[1] / (2.0 * eps), x[2]], [v[0] / eps, v[1] / eps]))
}

pub fn from_pencil_coords(x: Vec3, v: [f64; 2], eps: f64) -> Result<(Vec3, UnitDir)> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    Ok(([2.0 * eps * x[0], 2.0 * eps * x[1], x[2]], stereographic_inverse([eps * v[0], eps * v[1]])))
}

/// Pixel of a camera: in-plane coordinates and world position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    pub x: Vec3,
}

/// Square grid of pitch `c.pitch` clipped to the open disk of radius
/// `c.radius`, ordered row-major in (v, u). Each pixel observes along
/// `c.orientation`.
pub fn camera_points(c: &Camera) -> Vec<Pixel> {
    let (e1, e2) = c.basis();
    let m = (c.radius / c.pitch).floor() as i64;
    let r2 = c.radius * c.radius;
    let mut out = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let u = i as f64 * c.pitch;
            let v = j as f64 * c.pitch;
            if u * u + v * v < r2 {
                out.push(Pixel { u, v, x: add(c.center, add(scale(e1, u), scale(e2, v))) });
            }
        }
    }
    out
}

/// Ridge orientation from the intensity-weighted second moment of the spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ridge {
    /// Unit vector in the camera plane (world frame).
    pub direction: UnitDir,
    /// Angle of the direction in the camera basis, in (−π/2, π/2].
    pub angle: f64,
    /// Weighted centroid in camera coordinates.
    pub centroid: [f64; 2],
    /// Ratio of the larger to the smaller moment eigenvalue.
    pub anisotropy: f64,
}

pub const RIDGE_DEGENERACY: f64 = 1.05;

/// Direction φ₀ maximizing the intensity-weighted second moment (weighted
/// PCA). Fails on all-zero or negative data and on nearly isotropic spots.

pub fn ridge_direction(c: &Camera, pixels: &[Pixel], intensities: &[f64]) -> Result<Ridge> {
    if pixels.len() != intensities.len() {
        return Err(Error::Domain("pixel and intensity counts differ".into()));
    }
    if intensities.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Domain("intensities must be finite and nonnegative".into()));
    }
    let total: f64 = intensities.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoSignal("all intensities are zero".into()));
    }
    let (mut mu, mut mv) = (0.0, 0.0);
    for (p, w) in pixels.iter().zip(intensities) {
        mu += w * p.u;
        mv += w * p.v;
    }
    mu /= total;
    mv /= total;
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    for (p, w) in pixels.iter().zip(intensities) {
        let (du, dv) = (p.u - mu, p.v - mv);
        suu += w * du * du;
        svv += w * dv * dv;
        suv += w * du * dv;
    }
    let tr = 0.5 * (suu + svv);
    let disc = (0.25 * (suu - svv).powi(2) + suv * suv).sqrt();
    let (l1, l2) = (tr + disc, tr - disc);
    let anisotropy = if l2 > 0.0 { l1 / l2 } else { f64::INFINITY };
    if anisotropy < RIDGE_DEGENERACY {
        return Err(Error::DegenerateRidge { ratio: anisotropy, threshold: RIDGE_DEGENERACY });
    }
    let angle = 0.5 * (2.0 * suv).atan2(suu - svv);
    let (e1, e2) = c.basis();
    let direction = UnitDir::new(add(scale(e1, angle.cos()), scale(e2, angle.sin())))?;
    Ok(Ridge { direction, angle, centroid: [mu, mv], anisotropy })
}

/// Fraction of the band maximum bounding the core; bands whose core reaches
/// the band edge are skipped.
pub const CORE_FRACTION: f64 = 0.5;

/// Rows of the band fit are weighted by `(I/peak)^WEIGHT_POWER`, which
/// concentrates the fit on the core without a hard selection.
pub const WEIGHT_POWER: f64 = 4.0;

/// Samples below this fraction of the band maximum are left out of the fit.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Refinement passes of [`ridge_line`] after the PCA seed.
pub const RIDGE_PASSES: usize = 4;

/// Band width of [`ridge_line`] in pixel pitches. Bands several pixels wide
/// keep `s` and `t` decorrelated when the ridge runs along a pixel axis.
pub const BAND_PITCHES: f64 = 8.0;

/// Ridge line in camera coordinates refined from local fits.
///
/// Seeded by the PCA line, each pass bins pixels into bands `BAND_PITCHES`
/// wide along the current ridge estimate. Within a band, ln I is fitted by
/// weighted least squares to `P₃(s) + Q₂(s)·t + E₂(s)·t² + g·t⁴`, with
/// polynomials in the along (`s`) and across (`t`) coordinates; the vertex
/// `−Q₂(0)/2E₂(0)` is one ridge point. A least-squares line through
/// the points replaces the estimate. Returns `(point, direction)` in the
/// world frame, or the PCA line when fewer than three bands qualify.
pub fn ridge_line(c: &Camera, pixels: &[Pixel], intensities: &[f64]) -> Result<(Vec3, UnitDir, Ridge)> {
    let ridge = ridge_direction(c, pixels, intensities)?;
    let (e1, e2) = c.basis();
    let to_world = |u: f64, v: f64| add(c.center, add(scale(e1, u), scale(e2, v)));
    let mut origin = ridge.centroid;
    let mut dir = [ridge.angle.cos(), ridge.angle.sin()];
    let mut refined = false;
    for _ in 0..RIDGE_PASSES {
        match ridge_pass(c.pitch, pixels, intensities, origin, dir) {
            Some((o, d)) => {
                origin = o;
                dir = d;
                refined = true;
            }
            None => break,
        }
    }
    if !refined {
        return Ok((to_world(ridge.centroid[0], ridge.centroid[1]), ridge.direction, ridge));
    }
    let p0 = to_world(origin[0], origin[1]);
    let p1 = to_world(origin[0] + dir[0], origin[1] + dir[1]);
    Ok((p0, UnitDir::new(sub(p1, p0))?, ridge))
}

type Line2 = ([f64; 2], [f64; 2]);

fn ridge_pass(pitch: f64, pixels: &[Pixel], intensities: &[f64], origin: [f64; 2], dir: [f64; 2]) -> Option<Line2> {
    let normal = [-dir[1], dir[0]];
    let width = BAND_PITCHES * pitch;
    let mut bands: std::collections::BTreeMap<i64, Vec<(f64, f64, f64)>> = Default::default();
    for (p, &w) in pixels.iter().zip(intensities) {
        let (du, dv) = (p.u - origin[0], p.v - origin[1]);
        let s = du * dir[0] + dv * dir[1];
        let t = du * normal[0] + dv * normal[1];
        let k = (s / width).round() as i64;
        bands.entry(k).or_default().push((s - k as f64 * width, t, w));
    }
    let mut pts = Vec::new();
    for (k, band) in bands {
        let peak = band.iter().map(|x| x.2).fold(0.0, f64::max);
        if !(peak > 0.0) {
            continue;
        }
        let (tmin, tmax) = band.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x.1), b.max(x.1)));
        let core: Vec<_> = band.iter().filter(|x| x.2 >= CORE_FRACTION * peak).collect();
        if core.len() < 12 {
            continue;
        }
        let (cmin, cmax) = core.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x.1), b.max(x.1)));
        if cmin - tmin < 2.0 * pitch || tmax - cmax < 2.0 * pitch {
            continue;
        }
        let rows: Vec<([f64; 11], f64)> = band
            .iter()
            .filter(|x| x.2 >= WEIGHT_FLOOR * peak)
            .map(|&(ds, t, w)| {
                let d2 = ds * ds;
                let q = (w / peak).powf(0.5 * WEIGHT_POWER);
                let t2 = t * t;
                let x = [1.0, ds, d2, d2 * ds, t, ds * t, d2 * t, t2, ds * t2, d2 * t2, t2 * t2];
                (x.map(|v| q * v), q * (w / peak).ln())
            })
            .collect();
        let Some(b) = least_squares(&rows) else { continue };
        if !(b[7] < 0.0) {
            continue;
        }
        pts.push((k as f64 * width, -0.5 * b[4] / b[7]));
    }
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let ms = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mt = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sss: f64 = pts.iter().map(|p| (p.0 - ms).powi(2)).sum();
    let sst: f64 = pts.iter().map(|p| (p.0 - ms) * (p.1 - mt)).sum();
    let slope = sst / sss;
    let at = |s: f64, t: f64| [origin[0] + s * dir[0] + t * normal[0], origin[1] + s * dir[1] + t * normal[1]];
    let o = at(ms, mt);
    let far = at(ms + 1.0, mt + slope);
    let (du, dv) = (far[0] - o[0], far[1] - o[1]);
    let len = du.hypot(dv);
    Some((o, [du / len, dv / len]))
}

/// Least-squares coefficients by Householder QR on column-scaled data.
fn least_squares<const N: usize>(rows: &[([f64; N], f64)]) -> Option<[f64; N]> {
    let m = rows.len();
    if m < N {
        return None;
    }
    let mut scale = [0.0f64; N];
    for (x, _) in rows {
        for i in 0..N {
            scale[i] = scale[i].max(x[i].abs());
        }
    }
    if scale.iter().any(|&s| s == 0.0) {
        return None;
    }
    // Column-major copy of the scaled design matrix.
    let mut a: Vec<Vec<f64>> = (0..N).map(|j| rows.iter().map(|(x, _)| x[j] / scale[j]).collect()).collect();
    let mut y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    for k in 0..N {
        let alpha = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha == 0.0 {
            return None;
        }
        let alpha = if a[k][k] > 0.0 { -alpha } else { alpha };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k).chain(std::iter::once(&mut y)) {
            let f = 2.0 * v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum::<f64>() / vv;
            for (c, p) in col[k..].iter_mut().zip(&v) {
                *c -= f * p;
            }
        }
    }
    let mut b = [0.0; N];
    for i in (0..N).rev() {
        let acc: f64 = (i + 1..N).map(|j| a[j][i] * b[j]).sum();
        if a[i][i].abs() < 1e-14 * a[0][0].abs() {
            return None;
        }
        b[i] = (y[i] - acc) / a[i][i];
    }
    for i in 0..N {
        b[i] /= scale[i];
    }
    Some(b)
}

/// Plane spanned by the viewing direction and the ridge through `point`.
pub fn detector_plane(point: Vec3, orientation: UnitDir, ridge: UnitDir) -> Result<DetectorPlane> {
    let n = cross(orientation.v(), ridge.v());
    if norm(n) < 1e-12 {
        return Err(Error::DegenerateTriangulation("ridge parallel to the viewing direction".into()));
    }
    Ok(DetectorPlane { point, normal: UnitDir::new(n)? })
}

/// Line of intersection of two planes; the returned point is the
/// minimum-norm point on that line.
pub fn intersect_planes(p: &DetectorPlane, q: &DetectorPlane) -> Result<BeamAxis> {
    let (np, nq) = (p.normal.v(), q.normal.v());
    let d = cross(np, nq);
    if norm(d) <= 1e-9 {
        return Err(Error::DegenerateTriangulation(format!(
            "plane normals are parallel (|n_p × n_q| = {:.3e})",
            norm(d)
        )));
    }
    let (cp, cq) = (dot(np, p.point), dot(nq, q.point));
    // x = a·n_p + b·n_q with [1 k; k 1][a b]ᵀ = [cp cq]ᵀ.
    let k = dot(np, nq);
    let det = 1.0 - k * k;
    let a = (cp - k * cq) / det;
    let b = (cq - k * cp) / det;
    Ok(BeamAxis { point: add(scale(np, a), scale(nq, b)), direction: UnitDir::new(d)? })
}

/// Axis from two or more detector planes. With more than two planes, the
/// direction is the principal eigenvector of Σ dₖdₖᵀ over all non-degenerate
/// pairwise intersections and the point is the mean of their minimum-norm
/// points projected orthogonally to it.
pub fn triangulate(planes: &[DetectorPlane]) -> Result<BeamAxis> {
    if planes.len() < 2 {
        return Err(Error::DegenerateTriangulation("at least two detector planes are required".into()));
    }
    if planes.len() == 2 {
        return intersect_planes(&planes[0], &planes[1]);
    }
    let mut lines = Vec::new();
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            if let Ok(a) = intersect_planes(&planes[i], &planes[j]) {
                lines.push(a);
            }
        }
    }
    if lines.is_empty() {
        return Err(Error::DegenerateTriangulation("all plane pairs are parallel".into()));
    }
    let mut m = [[0.0; 3]; 3];
    for l in &lines {
        let d = l.direction.v();
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += d[r] * d[c];
            }
        }
    }
    // Power iteration seeded by the first direction.
    let mut d = lines[0].direction.v();
    for _ in 0..200 {
        let nd = [dot(m[0], d), dot(m[1], d), dot(m[2], d)];
        d = scale(nd, 1.0 / norm(nd));
    }
    let mut p = [0.0; 3];
    for l in &lines {
        p = add(p, l.point);
    }
    p = scale(p, 1.0 / lines.len() as f64);
    p = sub(p, scale(d, dot(p, d)));
    Ok(BeamAxis { point: p, direction: UnitDir::new(d)? })
}

/// Angle between two lines (direction sign ignored).
pub fn line_angle(a: UnitDir, b: UnitDir) -> f64 {
    let c = dot(a.v(), b.v()).abs().min(1.0);
    let s = norm(cross(a.v(), b.v()));
    s.atan2(c)
}

/// Distance from `x` to the line.
pub fn point_line_distance(x: Vec3, axis: &BeamAxis) -> f64 {
    norm(axis.transverse(x))
}
