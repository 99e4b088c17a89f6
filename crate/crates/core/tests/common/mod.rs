//! Test-only reference implementations, independent of the library code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use msq_core::queueing::{FlowTable, WeightTable};
use msq_core::{CycleId, Network, NodeId};

/// Difference form of `g(b) - g(a)` for `g(mu) = mu + sum w / (mu - lambda)`,
/// free of the cancellation in subtracting two large values.
pub fn cost_difference(terms: &[(f64, f64)], a: f64, b: f64) -> f64 {
    (b - a) * (1.0 - terms.iter().map(|(w, l)| w / ((b - l) * (a - l))).sum::<f64>())
}

/// Derivative-free minimizer: a uniform grid repeatedly narrowed around the
/// first point where the cost stops decreasing.
pub fn grid_minimum(terms: &[(f64, f64)]) -> f64 {
    let lb = terms.iter().map(|t| t.1).fold(0.0, f64::max);
    let w: f64 = terms.iter().map(|t| t.0).sum();
    let (mut lo, mut hi) = (lb, lb + w.sqrt() + 2.0 * w.max(1.0));
    for _ in 0..60 {
        let n = 64;
        let xs: Vec<f64> = (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let mut best = xs.len() - 1;
        for i in 0..xs.len() - 1 {
            if cost_difference(terms, xs[i], xs[i + 1]) >= 0.0 {
                best = i;
                break;
            }
        }
        let left = if best == 0 { lo } else { xs[best - 1] };
        let right = if best + 1 < xs.len() { xs[best + 1] } else { hi };
        lo = left;
        hi = right;
    }
    0.5 * (lo + hi)
}

pub fn dijkstra(net: &Network, s: NodeId) -> Vec<f64> {
    let n = net.node_count();
    let adj = net.adjacency();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[s.index()] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&i| !done[i]).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else { break };
        done[u] = true;
        for v in &adj[u] {
            let d = dist[u] + net.pos(NodeId(u as u32)).dist(net.pos(*v));
            if d < dist[v.index()] {
                dist[v.index()] = d;
            }
        }
    }
    dist
}

/// Delivery cost summed directly from the tables: every rate plus each
/// weighted sojourn. `None` when some loaded server is unstable.
pub fn total_cost(flows: &FlowTable, weights: &WeightTable, mu: &BTreeMap<CycleId, f64>) -> Option<f64> {
    let mut cost: f64 = mu.values().sum();
    for ((c, k), w) in weights.iter() {
        let lambda = flows.get(c, k);
        let m = mu.get(&c).copied().unwrap_or(0.0);
        if m <= lambda {
            return None;
        }
        cost += w / (m - lambda);
    }
    for ((c, k), lambda) in flows.iter() {
        if lambda > 0.0 && mu.get(&c).copied().unwrap_or(0.0) <= lambda && weights.get(c, k) == 0.0 {
            return None;
        }
    }
    Some(cost)
}
