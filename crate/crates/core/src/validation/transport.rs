use super::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::geometry::{norm, sub};
use serde::{Deserialize, Serialize};

/// Support-size limit per cloud for the transport solver.
pub const MAX_SUPPORT: usize = 2000;

/// Flat-metric value with transport diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatMetricResult {
    pub value: f64,
    pub kappa: f64,
    /// Mass moved at cost below the cap 2.
    pub transported: f64,
    /// Mass paying the capped cost 2 (creation/annihilation in the dual).
    pub capped: f64,
}

/// `min(κ(|x−x′| + ∠(θ,θ′)), 2)`.
pub fn ground_cost(a: &ParticleCloud, i: usize, b: &ParticleCloud, j: usize, kappa: f64) -> f64 {
    let dx = norm(sub(a.positions[i], b.positions[j]));
    let chord = norm(sub(a.directions[i].v(), b.directions[j].v()));
    let angle = 2.0 * (0.5 * chord).min(1.0).asin();
    (kappa * (dx + angle)).min(2.0)
}

/// Flat (1,κ) distance between clouds normalized to unit mass: optimal
/// transport with capped ground cost, solved by successive shortest paths
/// with Dijkstra on reduced costs over the dense bipartite residual graph.
pub fn flat_metric(a: &ParticleCloud, b: &ParticleCloud, kappa: f64) -> Result<FlatMetricResult> {
    a.validate()?;
    b.validate()?;
    if a.len() > MAX_SUPPORT || b.len() > MAX_SUPPORT {
        return Err(Error::Domain(format!("clouds must be aggregated to at most {MAX_SUPPORT} points")));
    }
    if !(kappa > 0.0) {
        return Err(Error::Domain("kappa must be positive".into()));
    }
    let (n, m) = (a.len(), b.len());
    let cost: Vec<f64> = (0..n * m).map(|k| ground_cost(a, k / m, b, k % m, kappa)).collect();
    let (ta, tb) = (a.total(), b.total());
    let mut supply: Vec<f64> = a.weights.iter().map(|w| w / ta).collect();
    let mut demand: Vec<f64> = b.weights.iter().map(|w| w / tb).collect();
    let flow = min_cost_flow(n, m, &cost, &mut supply, &mut demand);
    let (mut value, mut transported, mut capped) = (0.0, 0.0, 0.0);
    for (k, f) in flow.iter().enumerate() {
        if *f > 0.0 {
            value += f * cost[k];
            if cost[k] < 2.0 {
                transported += f;
            } else {
                capped += f;
            }
        }
    }
    Ok(FlatMetricResult { value, kappa, transported, capped })
}

/// Node layout: 0 = source, 1..=n supplies, n+1..=n+m demands, n+m+1 = sink.
fn min_cost_flow(n: usize, m: usize, cost: &[f64], supply: &mut [f64], demand: &mut [f64]) -> Vec<f64> {
    let nodes = n + m + 2;
    let (src, sink) = (0, n + m + 1);
    let mut flow = vec![0.0; n * m];
    let mut used = vec![0.0; n];
    let mut received = vec![0.0; m];
    let mut pot = vec![0.0; nodes];
    let total: f64 = supply.iter().sum();
    let tiny = 1e-14 * total;
    let mut remaining = total;
    let mut dist = vec![0.0; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut guard = 0;
    while remaining > tiny && guard < 20 * (n + m) + 100 {
        guard += 1;
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[src] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, c: f64, dist: &mut [f64], prev: &mut [usize]| {
                let nd = dist[u] + (c + pot[u] - pot[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == src {
                for i in 0..n {
                    if supply[i] > tiny {
                        relax(1 + i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    if !done[n + 1 + j] {
                        relax(n + 1 + j, cost[i * m + j], &mut dist, &mut prev);
                    }
                }
                if used[i] > tiny && !done[src] {
                    relax(src, 0.0, &mut dist, &mut prev);
                }
            } else if u <= n + m {
                let j = u - n - 1;
                for i in 0..n {
                    if flow[i * m + j] > tiny && !done[1 + i] {
                        relax(1 + i, -cost[i * m + j], &mut dist, &mut prev);
                    }
                }
                if demand[j] > tiny {
                    relax(sink, 0.0, &mut dist, &mut prev);
                }
            } else {
                for j in 0..m {
                    if received[j] > tiny && !done[n + 1 + j] {
                        relax(n + 1 + j, 0.0, &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let cap = dist[sink];
        for v in 0..nodes {
            pot[v] += dist[v].min(cap);
        }
        // Bottleneck along sink ← … ← source.
        let mut delta = f64::INFINITY;
        let mut v = sink;
        while v != src {
            let u = prev[v];
            if u == src {
                delta = delta.min(supply[v - 1]);
            } else if v == sink {
                delta = delta.min(demand[u - n - 1]);
            } else if u > n && v <= n {
                delta = delta.min(flow[(v - 1) * m + (u - n - 1)]);
            }
            v = u;
        }
        let mut v = sink;
        while v != src {
            let u = prev[v];
            if u == src {
                supply[v - 1] -= delta;
                used[v - 1] += delta;
            } else if v == sink {
                demand[u - n - 1] -= delta;
                received[u - n - 1] += delta;
            } else if u <= n {
                flow[(u - 1) * m + (v - n - 1)] += delta;
            } else {
                flow[(v - 1) * m + (u - n - 1)] -= delta;
            }
            v = u;
        }
        remaining -= delta;
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitDir;
    use rand::{Rng, SeedableRng};

    fn cloud(pts: &[[f64; 3]], w: &[f64]) -> ParticleCloud {
        ParticleCloud { positions: pts.to_vec(), directions: vec![UnitDir::e3(); pts.len()], weights: w.to_vec() }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn point_masses() {
        let a = cloud(&[[0.0; 3]], &[1.0]);
        let b = cloud(&[[0.3, 0.4, 0.0]], &[1.0]);
        assert!((flat_metric(&a, &b, 2.0).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(flat_metric(&a, &b, 10.0).unwrap().value, 2.0);
        assert_eq!(flat_metric(&a, &a, 10.0).unwrap().value, 0.0);
    }

    #[test]
    fn matches_assignment_enumeration() {
        // Uniform equal-count marginals have permutation optima.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let n = 1 + trial % 5;
            let mut pts = |k: usize| -> Vec<[f64; 3]> { (0..k).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect() };
            let (pa, pb) = (pts(n), pts(n));
            let (a, b) = (cloud(&pa, &vec![1.0; n]), cloud(&pb, &vec![1.0; n]));
            let kappa = 0.5 + 3.0 * (trial as f64) / 40.0;
            let brute = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| ground_cost(&a, i, &b, j, kappa)).sum::<f64>() / n as f64)
                .fold(f64::INFINITY, f64::min);
            let v = flat_metric(&a, &b, kappa).unwrap().value;
            assert!((v - brute).abs() < 1e-9, "trial {trial}: {v} vs {brute}");
        }
    }

    #[test]
    fn unequal_weights_conserve_mass() {
        let a = cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]], &[0.2, 0.5, 0.3]);
        let b = cloud(&[[0.1, 0.0, 0.0], [0.9, 0.1, 0.0]], &[3.0, 1.0]);
        let r = flat_metric(&a, &b, 1.0).unwrap();
        assert!((r.transported + r.capped - 1.0).abs() < 1e-12);
        assert!(r.value <= 2.0);
    }
}
