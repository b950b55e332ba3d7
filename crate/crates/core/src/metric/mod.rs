//! Logarithmic-mean edge weights, the action `A(ρ,ψ)`, the tangent-space
//! identification `ψ ↦ L_ρ̂ ψ`, the transport distance `W` and the point
//! metrics `d_W`, `d_Q`.
//!
//! The tangent map uses the `ρ̂`-weighted operator
//! `(L_ρ̂ ψ)(x) = Σ_y (ψ(y) - ψ(x)) ρ̂(x,y) Q(x,y)`, matching the continuity
//! equation. Densities evolve as `∂_t ρ = L_ρ̂ ψ`; the sign convention does
//! not affect any action value.

mod graph;
mod transport;

pub use graph::{
    comparison_constant, diameter_upper, dq_matrix, point_metric, transport_cost, w2_upper, PointMetric,
};
pub use transport::{
    default_witnesses, w_distance, w_lower_bound, ActionPath, DistanceResult, TransportConfig,
};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, FullPivLU};

use crate::chain::{Density, MarkovTriple, Potential};
use crate::error::{Error, Result};
use crate::logmean::theta;

/// Symmetric matrix of logarithmic means `ρ̂(x,y)`, supported on `{Q > 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub values: DMatrix<f64>,
}

/// `ρ̂(x,y) = θ(ρ(x), ρ(y))` on edges of the chain, zero elsewhere.
pub fn rho_hat(chain: &MarkovTriple, rho: &Density) -> EdgeWeights {
    let n = chain.len();
    let r = rho.values();
    let mut values = DMatrix::zeros(n, n);
    for e in chain.edges() {
        let w = theta(r[e.x], r[e.y]);
        values[(e.x, e.y)] = w;
        values[(e.y, e.x)] = w;
    }
    EdgeWeights { values }
}

/// Conductances `ρ̂(x,y) Q(x,y) π(x)` per edge of the chain.
pub(crate) fn edge_conductances(chain: &MarkovTriple, rho: &DVector<f64>) -> Vec<f64> {
    chain.edges().iter().map(|e| theta(rho[e.x], rho[e.y]) * e.conductance).collect()
}

/// `A(ρ,ψ) = ½ Σ_{x,y} (∇ψ)² ρ̂ Q π`.
pub fn action(chain: &MarkovTriple, rho: &Density, psi: &DVector<f64>) -> Result<f64> {
    if psi.len() != chain.len() {
        return Err(Error::DimensionMismatch { expected: chain.len(), found: psi.len() });
    }
    Ok(action_values(chain, rho.values(), psi))
}

pub(crate) fn action_values(chain: &MarkovTriple, rho: &DVector<f64>, psi: &DVector<f64>) -> f64 {
    chain
        .edges()
        .iter()
        .map(|e| {
            let g = psi[e.y] - psi[e.x];
            g * g * theta(rho[e.x], rho[e.y]) * e.conductance
        })
        .sum()
}

/// `(L_ρ̂ ψ)(x) = Σ_y (ψ(y) - ψ(x)) ρ̂(x,y) Q(x,y)`.
pub fn weighted_generator(chain: &MarkovTriple, rho: &Density, psi: &DVector<f64>) -> Result<DVector<f64>> {
    if psi.len() != chain.len() {
        return Err(Error::DimensionMismatch { expected: chain.len(), found: psi.len() });
    }
    let r = rho.values();
    let pi = chain.pi();
    let mut out = DVector::zeros(chain.len());
    for e in chain.edges() {
        let flow = (psi[e.y] - psi[e.x]) * theta(r[e.x], r[e.y]) * e.conductance;
        out[e.x] += flow / pi[e.x];
        out[e.y] -= flow / pi[e.y];
    }
    Ok(out)
}

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    /// Fallback when rounding breaks positive definiteness, which happens
    /// once edge weights span many orders of magnitude.
    Lu(FullPivLU<f64, Dyn, Dyn>),
}

/// Factor of a weighted graph Laplacian restricted to a set of active
/// states and grounded at the active state of largest weighted degree.
pub(crate) struct GroundedLaplacian {
    factor: Factor,
    count: usize,
    /// Row of each state in the reduced system; `None` for the ground and
    /// inactive states.
    rows: Vec<Option<usize>>,
}

impl GroundedLaplacian {
    /// `K = Σ_e w_e (e_x - e_y)(e_x - e_y)ᵀ` over all states.
    pub(crate) fn new(chain: &MarkovTriple, weights: &[f64]) -> Option<Self> {
        Self::on(chain, weights, None)
    }

    /// Same as [`GroundedLaplacian::new`], keeping only states with
    /// `active[x]`. Edges leaving the active set must carry zero weight.
    pub(crate) fn on(chain: &MarkovTriple, weights: &[f64], active: Option<&[bool]>) -> Option<Self> {
        let n = chain.len();
        let is_active = |x: usize| active.is_none_or(|a| a[x]);
        let mut degree = vec![0.0; n];
        for (e, &w) in chain.edges().iter().zip(weights) {
            degree[e.x] += w;
            degree[e.y] += w;
        }
        let ground = (0..n).filter(|&x| is_active(x)).max_by(|&a, &b| degree[a].total_cmp(&degree[b]).then(b.cmp(&a)))?;
        let mut rows = vec![None; n];
        let mut count = 0;
        for (x, row) in rows.iter_mut().enumerate() {
            if x == ground || !is_active(x) {
                continue;
            }
            *row = Some(count);
            count += 1;
        }
        if count == 0 {
            return None;
        }
        let mut k = DMatrix::zeros(count, count);
        for (e, &w) in chain.edges().iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let (rx, ry) = (rows[e.x], rows[e.y]);
            if let Some(i) = rx {
                k[(i, i)] += w;
            }
            if let Some(j) = ry {
                k[(j, j)] += w;
            }
            if let (Some(i), Some(j)) = (rx, ry) {
                k[(i, j)] -= w;
                k[(j, i)] -= w;
            }
        }
        let factor = match Cholesky::new(k.clone()) {
            Some(c) => Factor::Cholesky(c),
            None => {
                let lu = FullPivLU::new(k);
                if !lu.is_invertible() {
                    return None;
                }
                Factor::Lu(lu)
            }
        };
        Some(Self { factor, count, rows })
    }

    /// Solves `K ψ = b` for `b ⟂ 1` supported on the active states; `ψ`
    /// vanishes at the ground and at inactive states.
    pub(crate) fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.count);
        for (x, row) in self.rows.iter().enumerate() {
            if let Some(i) = row {
                rhs[*i] = b[x];
            }
        }
        let u = match &self.factor {
            Factor::Cholesky(c) => c.solve(&rhs),
            Factor::Lu(lu) => lu.solve(&rhs).unwrap_or_else(|| DVector::from_element(self.count, f64::NAN)),
        };
        let mut psi = DVector::zeros(b.len());
        for (x, row) in self.rows.iter().enumerate() {
            if let Some(i) = row {
                psi[x] = u[*i];
            }
        }
        psi
    }
}

/// Solves `L_ρ̂ ψ = s` for a strictly positive density and a `π`-centered `s`.
/// The returned potential is the canonical representative (`ψ(0) = 0`).
pub fn solve_potential(chain: &MarkovTriple, rho: &Density, s: &DVector<f64>) -> Result<Potential> {
    let n = chain.len();
    if s.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: s.len() });
    }
    let scale = s.amax().max(1.0);
    let mean = chain.mean(s);
    if mean.abs() > 1e-10 * scale {
        return Err(Error::NonZeroMean(mean));
    }
    if n == 1 {
        return Ok(Potential::zeros(1));
    }
    let weights = edge_conductances(chain, rho.values());
    let lap = GroundedLaplacian::new(chain, &weights).ok_or(Error::SingularWeights)?;
    // π(x) (L_ρ̂ ψ)(x) = -(K ψ)(x)
    let b = -s.component_mul(chain.pi());
    Ok(Potential(lap.solve(&b)).canonical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilySpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_density(chain: &MarkovTriple, rng: &mut ChaCha8Rng) -> Density {
        let v = DVector::from_fn(chain.len(), |_, _| rng.gen_range(0.05..3.0));
        Density::normalized(chain, v).unwrap()
    }

    #[test]
    fn rho_hat_examples() {
        let t = make_family(&FamilySpec::torus(5, 1)).unwrap();
        let w = rho_hat(&t, &Density::uniform(&t));
        for e in t.edges() {
            assert_eq!(w.values[(e.x, e.y)], 1.0);
        }
        assert_eq!(w.values[(0, 2)], 0.0);
        let d = Density::normalized(&t, DVector::from_vec(vec![0.0, 1.0, 2.0, 1.0, 1.0])).unwrap();
        let w = rho_hat(&t, &d);
        assert_eq!(w.values.row(0).amax(), 0.0);
        assert_eq!(w.values.column(0).amax(), 0.0);
    }

    #[test]
    fn chain_rule_for_logarithm() {
        let t = make_family(&FamilySpec::torus(6, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rho = random_density(&t, &mut rng);
            let w = rho_hat(&t, &rho);
            let r = rho.values();
            for e in t.edges() {
                let lhs = w.values[(e.x, e.y)] * (r[e.x].ln() - r[e.y].ln());
                assert!((lhs - (r[e.x] - r[e.y])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn action_examples() {
        let t = make_family(&FamilySpec::two_point(1.0, 1.0)).unwrap();
        let one = Density::uniform(&t);
        let psi = DVector::from_vec(vec![0.0, 1.0]);
        // ½ Σ_{x≠y} (∇ψ)² ρ̂ Q π with both ordered pairs contributing ½
        assert_relative_eq!(action(&t, &one, &psi).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(action(&t, &one, &DVector::from_element(2, 4.0)).unwrap(), 0.0);

        let t = make_family(&FamilySpec::torus(5, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let one = Density::uniform(&t);
        assert_relative_eq!(
            action(&t, &one, &psi).unwrap(),
            t.dirichlet(&psi, &psi).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn solve_potential_round_trip() {
        let t = make_family(&FamilySpec::torus(6, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let rho = random_density(&t, &mut rng);
            let g = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
            let s = weighted_generator(&t, &rho, &g).unwrap();
            let psi = solve_potential(&t, &rho, &s).unwrap();
            let shift = g[0];
            for x in 0..6 {
                assert!((psi[x] - (g[x] - shift)).abs() < 1e-9);
            }
        }
        let rho = Density::uniform(&t);
        let zero = solve_potential(&t, &rho, &DVector::zeros(6)).unwrap();
        assert_eq!(zero.amax(), 0.0);
        let f = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.5, 1.5]);
        let s = -t.apply_generator(&f).unwrap();
        let psi = solve_potential(&t, &rho, &s).unwrap();
        for x in 0..6 {
            assert!((psi[x] - (-(f[x] - f[0]))).abs() < 1e-10);
        }
        let bad = DVector::from_element(6, 1.0);
        assert!(matches!(solve_potential(&t, &rho, &bad), Err(Error::NonZeroMean(_))));
    }
}
