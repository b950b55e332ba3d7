//! The weighted graph metric `d_Q`, the comparison constant `c`, and upper
//! bounds on `W` from classical optimal transport with cost `(c·d_Q)²`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::transport::{w_distance, TransportConfig};
use crate::chain::{Density, MarkovTriple};
use crate::error::Result;
use crate::logmean::theta;
use crate::quadrature::tanh_sinh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointMetric {
    /// Transport distance between Dirac densities (optimizer upper value).
    DW,
    /// Shortest path with edge length `1/√min(Q(x,y), Q(y,x))`.
    DQ,
}

#[derive(PartialEq)]
struct Visit(f64, usize);

impl Eq for Visit {}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// All-pairs `d_Q` by Dijkstra from every state.
pub fn dq_matrix(chain: &MarkovTriple) -> DMatrix<f64> {
    let n = chain.len();
    let mut adjacency = vec![Vec::new(); n];
    for e in chain.edges() {
        let q = chain.rate(e.x, e.y).min(chain.rate(e.y, e.x));
        let len = 1.0 / q.sqrt();
        adjacency[e.x].push((e.y, len));
        adjacency[e.y].push((e.x, len));
    }
    let mut out = DMatrix::from_element(n, n, f64::INFINITY);
    for source in 0..n {
        let mut heap = BinaryHeap::new();
        out[(source, source)] = 0.0;
        heap.push(Visit(0.0, source));
        while let Some(Visit(d, x)) = heap.pop() {
            if d > out[(source, x)] {
                continue;
            }
            for &(y, len) in &adjacency[x] {
                let nd = d + len;
                if nd < out[(source, y)] {
                    out[(source, y)] = nd;
                    heap.push(Visit(nd, y));
                }
            }
        }
    }
    out
}

/// `c = ∫_{-1}^{1} dr / √(2 θ(1-r, 1+r)) ≈ 1.5587`, the `d_W` length of one
/// edge with unit rates.
pub fn comparison_constant() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        // even integrand: integrate over (0, 1) and double
        let half = tanh_sinh(|r| 1.0 / (2.0 * theta(1.0 - r, 1.0 + r)).sqrt(), 0.0, 1.0, 1e-14);
        2.0 * half
    })
}

/// `c · max_{x,y} d_Q(x,y)`, a certified upper bound for the `d_W` diameter.
pub fn diameter_upper(chain: &MarkovTriple) -> f64 {
    comparison_constant() * dq_matrix(chain).max()
}

/// Distance between the states labelled `x` and `y`.
pub fn point_metric(
    chain: &MarkovTriple,
    x: &str,
    y: &str,
    kind: PointMetric,
    cfg: &TransportConfig,
) -> Result<f64> {
    let i = chain.state_index(x)?;
    let j = chain.state_index(y)?;
    if i == j {
        return Ok(0.0);
    }
    match kind {
        PointMetric::DQ => Ok(dq_matrix(chain)[(i, j)]),
        PointMetric::DW => {
            let res = w_distance(chain, &Density::dirac(chain, i), &Density::dirac(chain, j), cfg)?;
            Ok(res.upper)
        }
    }
}

/// `√(min cost)` for transporting `π ρ0` to `π ρ1` with cost `(c·d_Q)²`.
pub fn w2_upper(chain: &MarkovTriple, rho0: &Density, rho1: &Density) -> f64 {
    let c = comparison_constant();
    let cost = dq_matrix(chain).map(|d| (c * d) * (c * d));
    let a: Vec<f64> = rho0.values().component_mul(chain.pi()).iter().copied().collect();
    let b: Vec<f64> = rho1.values().component_mul(chain.pi()).iter().copied().collect();
    transport_cost(&cost, &a, &b).max(0.0).sqrt()
}

/// Exact minimum of `Σ γ(x,y) cost(x,y)` over couplings of `a` and `b`
/// (equal total mass), by successive shortest paths on the residual graph.
pub fn transport_cost(cost: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    assert_eq!(cost.shape(), (n, m));
    let total: f64 = a.iter().sum::<f64>().max(b.iter().sum());
    let eps = 1e-15 * total.max(1.0);
    let mut supply: Vec<f64> = a.to_vec();
    let mut demand: Vec<f64> = b.to_vec();
    let mut flow = DMatrix::<f64>::zeros(n, m);
    // node ids: sources 0..n, sinks n..n+m
    loop {
        if supply.iter().all(|&s| s <= eps) || demand.iter().all(|&d| d <= eps) {
            break;
        }
        // Bellman-Ford from every source with remaining supply
        let nodes = n + m;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        for i in 0..n {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..n {
                for j in 0..m {
                    // forward arc i -> j, unbounded
                    if dist[i] + cost[(i, j)] < dist[n + j] - 1e-15 {
                        dist[n + j] = dist[i] + cost[(i, j)];
                        prev[n + j] = i;
                        changed = true;
                    }
                    // backward arc j -> i when flow is positive
                    if flow[(i, j)] > eps && dist[n + j] - cost[(i, j)] < dist[i] - 1e-15 {
                        dist[i] = dist[n + j] - cost[(i, j)];
                        prev[i] = n + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(sink) = (0..m)
            .filter(|&j| demand[j] > eps && dist[n + j].is_finite())
            .min_by(|&p, &q| dist[n + p].total_cmp(&dist[n + q]).then(p.cmp(&q)))
        else {
            break;
        };
        // walk back to find the bottleneck
        let mut amount = demand[sink];
        let mut node = n + sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node < n {
                amount = amount.min(flow[(node, p - n)]);
            }
            node = p;
        }
        amount = amount.min(supply[node]);
        let root = node;
        let mut node = n + sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node >= n {
                flow[(p, node - n)] += amount;
            } else {
                flow[(node, p - n)] -= amount;
            }
            node = p;
        }
        supply[root] -= amount;
        demand[sink] -= amount;
    }
    flow.component_mul(cost).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilySpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn constant_value() {
        let c = comparison_constant();
        assert!((c - 1.56).abs() < 0.01);
        // independent evaluation: r = tanh(u) turns the integrand into a smooth one
        let rule = crate::quadrature::gauss_legendre(200);
        let mut v = 0.0;
        for (x, w) in rule {
            let u = 40.0 * (x - 0.5);
            let r = u.tanh();
            let theta = if r == 0.0 { 1.0 } else { r / u };
            v += 40.0 * w * (1.0 - r * r) / (2.0 * theta).sqrt();
        }
        assert_relative_eq!(c, v, epsilon = 1e-9);
    }

    #[test]
    fn dq_examples() {
        let t = make_family(&FamilySpec::torus(6, 1)).unwrap();
        let d = dq_matrix(&t);
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(0, 3)], 3.0);
        let t = make_family(&FamilySpec::torus(4, 1)).unwrap();
        assert_relative_eq!(diameter_upper(&t), 2.0 * comparison_constant(), epsilon = 1e-14);
        let two = make_family(&FamilySpec::two_point(1.0, 1.0)).unwrap();
        assert_relative_eq!(diameter_upper(&two), comparison_constant(), epsilon = 1e-14);
        let cfg = TransportConfig::default();
        assert_eq!(point_metric(&two, "0", "0", PointMetric::DW, &cfg).unwrap(), 0.0);
        assert!(point_metric(&two, "0", "7", PointMetric::DQ, &cfg).is_err());
    }

    #[test]
    fn transport_matches_assignment_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=6 {
            let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..5.0));
            let mass = vec![1.0 / n as f64; n];
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>() / n as f64)
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(transport_cost(&cost, &mass, &mass), best, epsilon = 1e-12);
        }
    }

    #[test]
    fn transport_two_by_two_closed_form() {
        // moving mass a→b where a = (0.7, 0.3), b = (0.4, 0.6) on a line with |x-y|² cost
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let v = transport_cost(&cost, &[0.7, 0.3], &[0.4, 0.6]);
        assert_relative_eq!(v, 0.3, epsilon = 1e-14);
        let t = make_family(&FamilySpec::torus(5, 1)).unwrap();
        let r = Density::uniform(&t);
        assert_eq!(w2_upper(&t, &r, &r), 0.0);
    }
}
