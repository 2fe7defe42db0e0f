use crate::error::{Error, Result};
use crate::geometry::{UnitDir, Vec3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Weighted particles in phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub positions: Vec<Vec3>,
    pub directions: Vec<UnitDir>,
    pub weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Compensated (Neumaier) sum of the weights.
    pub fn total(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &w in &self.weights {
            let t = sum + w;
            comp += if sum.abs() >= w.abs() { (sum - t) + w } else { (w - t) + sum };
            sum = t;
        }
        sum + comp
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Domain("empty particle cloud".into()));
        }
        if self.directions.len() != self.len() || self.weights.len() != self.len() {
            return Err(Error::Domain("particle cloud arrays differ in length".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || !(self.total() > 0.0) {
            return Err(Error::Domain("weights must be finite, nonnegative, with positive total".into()));
        }
        Ok(())
    }

    /// Per-axis weighted variance of positions.
    pub fn position_variance(&self) -> Vec3 {
        let w = self.total();
        let mut mean = [0.0; 3];
        for (x, q) in self.positions.iter().zip(&self.weights) {
            for k in 0..3 {
                mean[k] += q * x[k] / w;
            }
        }
        let mut var = [0.0; 3];
        for (x, q) in self.positions.iter().zip(&self.weights) {
            for k in 0..3 {
                var[k] += q * (x[k] - mean[k]).powi(2) / w;
            }
        }
        var
    }

    /// Per-axis weighted second moments of the direction components.
    pub fn direction_second_moment(&self) -> Vec3 {
        let w = self.total();
        let mut m = [0.0; 3];
        for (d, q) in self.directions.iter().zip(&self.weights) {
            for k in 0..3 {
                m[k] += q * d.v()[k].powi(2) / w;
            }
        }
        m
    }

    fn feature(&self, i: usize) -> [f64; 6] {
        let (x, d) = (self.positions[i], self.directions[i].v());
        [x[0], x[1], x[2], d[0], d[1], d[2]]
    }
}

fn nearest(c: &[[f64; 6]], f: &[f64; 6]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, cj) in c.iter().enumerate() {
        let d: f64 = (0..6).map(|k| (cj[k] - f[k]).powi(2)).sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

fn lloyd(cloud: &ParticleCloud, init: &[usize], iters: usize) -> ParticleCloud {
    let mut c: Vec<[f64; 6]> = init.iter().map(|&i| cloud.feature(i)).collect();
    let k = c.len();
    let mut assign = vec![0usize; cloud.len()];
    for _ in 0..=iters {
        assign = crate::par::map_indices(cloud.len(), |i| nearest(&c, &cloud.feature(i)));
        let mut sum = vec![[0.0; 6]; k];
        let mut mass = vec![0.0; k];
        for (i, &j) in assign.iter().enumerate() {
            let (f, w) = (cloud.feature(i), cloud.weights[i]);
            for q in 0..6 {
                sum[j][q] += w * f[q];
            }
            mass[j] += w;
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                for q in 0..6 {
                    c[j][q] = sum[j][q] / mass[j];
                }
            }
        }
    }
    let mut mass = vec![0.0; k];
    for (i, &j) in assign.iter().enumerate() {
        mass[j] += cloud.weights[i];
    }
    let mut out = ParticleCloud { positions: vec![], directions: vec![], weights: vec![] };
    for j in 0..k {
        if mass[j] > 0.0 {
            out.positions.push([c[j][0], c[j][1], c[j][2]]);
            out.directions.push(UnitDir::new([c[j][3], c[j][4], c[j][5]]).unwrap_or(UnitDir::e3()));
            out.weights.push(mass[j]);
        }
    }
    out
}

const LLOYD_ITERS: usize = 8;

fn init_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b6d_6561_6e73);
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Lloyd's k-means on `(x, θ)` features with seeded initial centroids.
/// Clouds with at most `k` particles are returned unchanged.
pub fn kmeans(cloud: &ParticleCloud, k: usize, seed: u64) -> Result<ParticleCloud> {
    cloud.validate()?;
    if cloud.len() <= k {
        return Ok(cloud.clone());
    }
    Ok(lloyd(cloud, &init_indices(cloud.len(), k, seed), LLOYD_ITERS))
}

/// Aggregates two equally sized clouds from the same initial particle
/// indices, so coupled particles seed matching centroids.
pub fn aggregate_pair(a: &ParticleCloud, b: &ParticleCloud, k: usize, seed: u64) -> Result<(ParticleCloud, ParticleCloud)> {
    a.validate()?;
    b.validate()?;
    if a.len() != b.len() {
        return Err(Error::Domain("paired aggregation needs clouds of equal size".into()));
    }
    if a.len() <= k {
        return Ok((a.clone(), b.clone()));
    }
    let init = init_indices(a.len(), k, seed);
    Ok((lloyd(a, &init, LLOYD_ITERS), lloyd(b, &init, LLOYD_ITERS)))
}
