//! Desk-scale check of the approximation hierarchy: Monte Carlo
//! Fokker-Planck transport against the pencil-beam and ballistic models,
//! compared in the (1,κ) flat metric.

mod cloud;
mod mc;
mod transport;

pub use cloud::{aggregate_pair, kmeans, ParticleCloud};
pub use mc::{ballistic_cloud, mc_coupled, mc_fokker_planck, mc_snapshots, step_halving_change};
pub use transport::{flat_metric, ground_cost, FlatMetricResult, MAX_SUPPORT};

use crate::error::{Error, Result};
use crate::io;
use crate::pencil_beam::MediumParams;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Monte Carlo and aggregation settings for [`compare_models`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub particles: usize,
    pub dz: f64,
    pub z: f64,
    pub centroids: usize,
    pub seed: u64,
    /// Reject runs whose transverse variance moves more than this under dz/2.
    pub step_tolerance: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { particles: 100_000, dz: 0.005, z: 1.0, centroids: 512, seed: 1, step_tolerance: 0.02 }
    }
}

/// One row of the model comparison, `κ = 1/ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub eps: f64,
    pub kappa: f64,
    pub d_fpb: f64,
    pub d_ballistic: f64,
}

impl ComparisonRow {
    pub fn ordered(&self) -> bool {
        self.d_fpb < self.d_ballistic
    }
}

/// For each ε: flat distances from the Monte Carlo cloud to the pencil-beam
/// and ballistic clouds at station `cfg.z`, with `κ = 1/ε`.
pub fn compare_models(p: &MediumParams, eps_list: &[f64], cfg: &CompareConfig) -> Result<Vec<ComparisonRow>> {
    if p.s != 1.0 {
        return Err(Error::Unsupported("model comparison requires s = 1".into()));
    }
    eps_list
        .iter()
        .map(|&eps| {
            let q = MediumParams { eps, ..*p };
            let change = step_halving_change(&q, cfg.particles, cfg.dz, cfg.z, cfg.seed)?;
            if change > cfg.step_tolerance {
                return Err(Error::Reliability(format!(
                    "transverse variance moved {:.2}% under step halving at eps = {eps}",
                    100.0 * change
                )));
            }
            let (mc, fpb) = mc_coupled(&q, cfg.particles, cfg.dz, cfg.z, cfg.seed)?;
            let ball = ballistic_cloud(&q, cfg.particles, cfg.z, eps, cfg.seed)?;
            let kappa = 1.0 / eps;
            let (mc_a, fpb_a) = aggregate_pair(&mc, &fpb, cfg.centroids, cfg.seed)?;
            let (mc_b, ball_a) = aggregate_pair(&mc, &ball, cfg.centroids, cfg.seed)?;
            Ok(ComparisonRow {
                eps,
                kappa,
                d_fpb: flat_metric(&mc_a, &fpb_a, kappa)?.value,
                d_ballistic: flat_metric(&mc_b, &ball_a, kappa)?.value,
            })
        })
        .collect()
}

/// Writes `eps,kappa,d_fpb,d_ballistic`; the ordering verdict goes in the
/// metadata block.
pub fn write_comparison_csv<P: AsRef<Path>>(path: P, rows: &[ComparisonRow], meta: &[(String, String)]) -> Result<()> {
    let mut m = meta.to_vec();
    m.push(("ordering_fpb_below_ballistic".into(), rows.iter().all(|r| r.ordered()).to_string()));
    let data: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.eps, r.kappa, r.d_fpb, r.d_ballistic]).collect();
    io::write_csv(path, &m, &["eps", "kappa", "d_fpb", "d_ballistic"], &data)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx).powi(2);
        syy += (ry[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
