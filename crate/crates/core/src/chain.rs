//! Reversible Markov triples `(X, Q, π)` and the calculus attached to them:
//! generator, Γ-operator, Dirichlet form, heat semigroup, entropy and
//! entropy production.
//!
//! Functions on the state space are plain `DVector<f64>`; densities are
//! taken relative to `π` so that `Σ_x π(x) ρ(x) = 1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Relative tolerance for the detailed-balance check.
pub const DETAILED_BALANCE_TOL: f64 = 1e-12;
/// Tolerance on `Σ π = 1` for user-supplied measures.
pub const PI_SUM_TOL: f64 = 1e-12;
/// Tolerance on `Σ π ρ = 1` for densities.
pub const DENSITY_MASS_TOL: f64 = 1e-10;

/// An undirected edge `x < y` of the transition graph together with the
/// symmetric conductance `Q(x,y) π(x) = Q(y,x) π(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: usize,
    pub y: usize,
    pub conductance: f64,
}

/// Eigendecomposition of the symmetrized generator `D^{1/2} L D^{-1/2}`.
#[derive(Debug, Clone)]
struct Spectrum {
    /// Eigenvalues of `-L`, ascending (the first is 0).
    rates: DVector<f64>,
    /// Orthonormal eigenvectors of the symmetrized generator, as columns.
    vectors: DMatrix<f64>,
}

/// A finite reversible Markov chain: labels, transition rates and the
/// reversible probability measure.
#[derive(Debug, Clone)]
pub struct MarkovTriple {
    labels: Vec<String>,
    rates: DMatrix<f64>,
    pi: DVector<f64>,
    sqrt_pi: DVector<f64>,
    q_star: f64,
    pi_star: f64,
    edges: Vec<Edge>,
    generator: DMatrix<f64>,
    spectrum: Spectrum,
}

impl MarkovTriple {
    /// Validates `rates` (and `pi`, when given) and builds the triple. When
    /// `pi` is omitted it is computed as the stationary vector of the generator.
    pub fn new(labels: Vec<String>, rates: DMatrix<f64>, pi: Option<DVector<f64>>) -> Result<Self> {
        let n = rates.nrows();
        if n == 0 || rates.ncols() != n {
            return Err(Error::NotSquare);
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: labels.len() });
        }
        for x in 0..n {
            for y in 0..n {
                let q = rates[(x, y)];
                if !q.is_finite() || q < 0.0 {
                    return Err(Error::NegativeRate { x, y, value: q });
                }
            }
            if rates[(x, x)] != 0.0 {
                return Err(Error::NonZeroDiagonal(x));
            }
        }
        for x in 0..n {
            for y in (x + 1)..n {
                if (rates[(x, y)] > 0.0) != (rates[(y, x)] > 0.0) {
                    return Err(Error::AsymmetricSupport { x, y });
                }
            }
        }
        check_connected(&rates)?;

        let mut generator = rates.clone();
        for x in 0..n {
            let out: f64 = rates.row(x).sum();
            generator[(x, x)] = -out;
        }

        let pi = match pi {
            Some(pi) => {
                if pi.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
                }
                if pi.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidMeasure("entries must be strictly positive".into()));
                }
                let total = pi.sum();
                if (total - 1.0).abs() > PI_SUM_TOL {
                    return Err(Error::InvalidMeasure(format!("entries sum to {total}")));
                }
                pi
            }
            None => stationary_vector(&generator)?,
        };

        let mut scale = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                scale = scale.max(rates[(x, y)] * pi[x]);
            }
        }
        for x in 0..n {
            for y in (x + 1)..n {
                let residual = (rates[(x, y)] * pi[x] - rates[(y, x)] * pi[y]).abs();
                if residual > DETAILED_BALANCE_TOL * scale {
                    return Err(Error::DetailedBalanceViolation { x, y, residual });
                }
            }
        }

        let mut edges = Vec::new();
        let mut q_star = f64::INFINITY;
        for x in 0..n {
            for y in 0..n {
                if rates[(x, y)] > 0.0 {
                    q_star = q_star.min(rates[(x, y)]);
                    if x < y {
                        let conductance = 0.5 * (rates[(x, y)] * pi[x] + rates[(y, x)] * pi[y]);
                        edges.push(Edge { x, y, conductance });
                    }
                }
            }
        }
        if n == 1 {
            q_star = f64::INFINITY;
        }
        let pi_star = pi.min();
        let sqrt_pi = pi.map(f64::sqrt);

        let mut sym = DMatrix::zeros(n, n);
        for e in &edges {
            let w = e.conductance / (sqrt_pi[e.x] * sqrt_pi[e.y]);
            sym[(e.x, e.y)] = w;
            sym[(e.y, e.x)] = w;
        }
        for x in 0..n {
            sym[(x, x)] = generator[(x, x)];
        }
        let spectrum = sorted_spectrum(sym);

        Ok(Self { labels, rates, pi, sqrt_pi, q_star, pi_star, edges, generator, spectrum })
    }

    /// Builds a triple with labels `0..n`.
    pub fn from_rates(rates: DMatrix<f64>, pi: Option<DVector<f64>>) -> Result<Self> {
        let labels = (0..rates.nrows()).map(|i| i.to_string()).collect();
        Self::new(labels, rates, pi)
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rates[(x, y)]
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    /// Minimal positive transition rate.
    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    /// Minimal mass of `π`.
    pub fn pi_star(&self) -> f64 {
        self.pi_star
    }

    /// Undirected edges `x < y` with `Q(x,y) > 0`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// The generator as a matrix: `L = Q - diag(Σ_y Q(x,y))`.
    pub fn generator_matrix(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Eigenvalues of `-L` in ascending order; the first one is zero.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectrum.rates
    }

    /// Eigenfunction of `-L` for the `k`-th eigenvalue, normalized in `L²(π)`.
    pub fn eigenfunction(&self, k: usize) -> DVector<f64> {
        self.spectrum.vectors.column(k).component_div(&self.sqrt_pi)
    }

    /// Smallest non-zero eigenvalue of `-L`.
    pub fn spectral_gap(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        self.spectrum.rates[1]
    }

    fn check_dim(&self, f: &DVector<f64>) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: f.len() });
        }
        Ok(())
    }

    /// `Lf(x) = Σ_y (f(y) - f(x)) Q(x,y)`.
    pub fn apply_generator(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(f)?;
        let n = self.len();
        let mut out = DVector::zeros(n);
        for x in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                let q = self.rates[(x, y)];
                if q > 0.0 {
                    acc += (f[y] - f[x]) * q;
                }
            }
            out[x] = acc;
        }
        Ok(out)
    }

    /// `π[f]`.
    pub fn mean(&self, f: &DVector<f64>) -> f64 {
        self.pi.dot(f)
    }

    /// `⟨f, g⟩_π`.
    pub fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        f.iter().zip(g.iter()).zip(self.pi.iter()).map(|((a, b), p)| a * b * p).sum()
    }

    /// `Γ(f,g)(x) = Σ_y (f(y)-f(x)) (g(y)-g(x)) Q(x,y)`.
    pub fn gamma(&self, f: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(f)?;
        self.check_dim(g)?;
        let n = self.len();
        let mut out = DVector::zeros(n);
        for x in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                let q = self.rates[(x, y)];
                if q > 0.0 {
                    acc += (f[y] - f[x]) * (g[y] - g[x]) * q;
                }
            }
            out[x] = acc;
        }
        Ok(out)
    }

    /// `E(f,g) = ½ Σ_{x,y} ∇f ∇g Q(x,y) π(x)`.
    pub fn dirichlet(&self, f: &DVector<f64>, g: &DVector<f64>) -> Result<f64> {
        self.check_dim(f)?;
        self.check_dim(g)?;
        Ok(self
            .edges
            .iter()
            .map(|e| (f[e.y] - f[e.x]) * (g[e.y] - g[e.x]) * e.conductance)
            .sum())
    }

    pub fn variance(&self, f: &DVector<f64>) -> Result<f64> {
        self.check_dim(f)?;
        let m = self.mean(f);
        Ok(self.pi.iter().zip(f.iter()).map(|(p, v)| p * (v - m) * (v - m)).sum())
    }

    /// `P_t f` for `t ≥ 0`.
    pub fn heat_semigroup(&self, t: f64, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(f)?;
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        let u = &self.spectrum.vectors;
        let g = f.component_mul(&self.sqrt_pi);
        let mut coeffs = u.tr_mul(&g);
        for (c, r) in coeffs.iter_mut().zip(self.spectrum.rates.iter()) {
            *c *= (-t * r).exp();
        }
        Ok((u * coeffs).component_div(&self.sqrt_pi))
    }

    /// The transition matrix `P_t(x,y)`; rows are probability vectors.
    pub fn transition_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let n = self.len();
        let u = &self.spectrum.vectors;
        let mut scaled = u.clone();
        for k in 0..n {
            let damp = (-t * self.spectrum.rates[k]).exp();
            scaled.column_mut(k).scale_mut(damp);
        }
        let mut sym = scaled * u.transpose();
        for x in 0..n {
            for y in 0..n {
                sym[(x, y)] *= self.sqrt_pi[y] / self.sqrt_pi[x];
            }
        }
        Ok(sym)
    }

    /// Heat kernel `p_t(x,y) = P_t 1_y(x) / π(y)`; symmetric in `(x, y)`.
    pub fn heat_kernel(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let n = self.len();
        let u = &self.spectrum.vectors;
        let mut scaled = u.clone();
        for k in 0..n {
            let damp = (-t * self.spectrum.rates[k]).exp();
            scaled.column_mut(k).scale_mut(damp);
        }
        let mut kernel = scaled * u.transpose();
        for x in 0..n {
            for y in 0..n {
                kernel[(x, y)] /= self.sqrt_pi[x] * self.sqrt_pi[y];
            }
        }
        // exact symmetry
        for x in 0..n {
            for y in (x + 1)..n {
                let m = 0.5 * (kernel[(x, y)] + kernel[(y, x)]);
                kernel[(x, y)] = m;
                kernel[(y, x)] = m;
            }
        }
        Ok(kernel)
    }

    /// `P_t ρ` for a density; the result is again a density.
    pub fn evolve(&self, t: f64, rho: &Density) -> Result<Density> {
        if t == 0.0 {
            return Ok(rho.clone());
        }
        let values = self.heat_semigroup(t, rho.values())?;
        Ok(Density::renormalized_unchecked(self, values.map(|v| v.max(0.0))))
    }

    /// Relative entropy `H(ρ) = Σ π ρ log ρ` with `0 log 0 = 0`.
    pub fn entropy(&self, rho: &Density) -> f64 {
        rho.values()
            .iter()
            .zip(self.pi.iter())
            .map(|(&r, &p)| if r > 0.0 { p * r * r.ln() } else { 0.0 })
            .sum()
    }

    /// Entropy production `I(ρ) = E(ρ, log ρ)`; requires a strictly positive density.
    pub fn entropy_production(&self, rho: &Density) -> Result<f64> {
        if !rho.is_interior() {
            return Err(Error::BoundaryDensity);
        }
        let r = rho.values();
        Ok(self
            .edges
            .iter()
            .map(|e| (r[e.y] - r[e.x]) * (r[e.y].ln() - r[e.x].ln()) * e.conductance)
            .sum())
    }
}

fn check_connected(rates: &DMatrix<f64>) -> Result<()> {
    let n = rates.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(x) = queue.pop_front() {
        for y in 0..n {
            if rates[(x, y)] > 0.0 && !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(missing) => Err(Error::ReducibleChain(missing)),
        None => Ok(()),
    }
}

/// Solves `πᵀ L = 0`, `Σ π = 1` as an overdetermined system.
fn stationary_vector(generator: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = generator.nrows();
    let mut system = DMatrix::zeros(n + 1, n);
    system.view_mut((0, 0), (n, n)).copy_from(&generator.transpose());
    system.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let svd = system.svd(true, true);
    let pi = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidMeasure(format!("stationary solve failed: {e}")))?;
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidMeasure("stationary vector is not strictly positive".into()));
    }
    let total = pi.sum();
    Ok(pi / total)
}

fn sorted_spectrum(sym: DMatrix<f64>) -> Spectrum {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    // ascending in -λ
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut rates = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        rates[k] = (-eig.eigenvalues[i]).max(0.0);
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    rates[0] = 0.0;
    Spectrum { rates, vectors }
}

/// A probability density with respect to `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    values: DVector<f64>,
    interior: bool,
}

impl Density {
    /// Validates non-negativity and `Σ π ρ = 1`.
    pub fn new(chain: &MarkovTriple, values: DVector<f64>) -> Result<Self> {
        chain.check_dim(&values)?;
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity("entries must be finite and non-negative".into()));
        }
        let mass = chain.mean(&values);
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::InvalidDensity(format!("total mass {mass}")));
        }
        let interior = values.iter().all(|&v| v > 0.0);
        Ok(Self { values, interior })
    }

    /// Rescales a non-negative, non-zero vector to unit `π`-mass.
    pub fn normalized(chain: &MarkovTriple, values: DVector<f64>) -> Result<Self> {
        chain.check_dim(&values)?;
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity("entries must be finite and non-negative".into()));
        }
        let mass = chain.mean(&values);
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero mass".into()));
        }
        Ok(Self::renormalized_unchecked(chain, values))
    }

    pub(crate) fn renormalized_unchecked(chain: &MarkovTriple, values: DVector<f64>) -> Self {
        let mass = chain.mean(&values);
        let values = values / mass;
        let interior = values.iter().all(|&v| v > 0.0);
        Self { values, interior }
    }

    /// The constant density `ρ ≡ 1`.
    pub fn uniform(chain: &MarkovTriple) -> Self {
        Self { values: DVector::from_element(chain.len(), 1.0), interior: true }
    }

    /// Density of the Dirac mass at `x`: `1_x / π(x)`.
    pub fn dirac(chain: &MarkovTriple, x: usize) -> Self {
        let mut values = DVector::zeros(chain.len());
        values[x] = 1.0 / chain.pi()[x];
        Self { values, interior: chain.len() == 1 }
    }

    /// `(1-ε) ρ + ε`.
    pub fn mix_uniform(&self, eps: f64) -> Self {
        let values = self.values.map(|v| (1.0 - eps) * v + eps);
        let interior = values.iter().all(|&v| v > 0.0);
        Self { values, interior }
    }

    /// Density proportional to `exp(logits)`.
    pub fn from_logits(chain: &MarkovTriple, logits: &[f64]) -> Self {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let values = DVector::from_iterator(logits.len(), logits.iter().map(|z| (z - m).exp()));
        Self::renormalized_unchecked(chain, values)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn is_interior(&self) -> bool {
        self.interior
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn logits(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.max(1e-300).ln()).collect()
    }
}

/// A function on states modulo additive constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential(pub DVector<f64>);

impl Potential {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    /// The representative with value 0 at state 0.
    pub fn canonical(&self) -> Self {
        if self.0.is_empty() {
            return self.clone();
        }
        let base = self.0[0];
        Self(self.0.map(|v| v - base))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }
}

impl std::ops::Deref for Potential {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for Potential {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}
