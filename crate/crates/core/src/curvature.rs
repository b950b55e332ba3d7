//! The entropy Hessian `B(ρ,ψ)`, the per-density curvature
//! `κ(ρ) = min_ψ B(ρ,ψ)/A(ρ,ψ)` and a multistart estimate of its infimum.
//!
//! Both `A` and `B` are quadratic forms in `ψ` that annihilate constants:
//!
//! * `A = ψᵀ K ψ` with `K = Σ_e ρ̂(e) Q(x,y)π(x) (e_x - e_y)(e_x - e_y)ᵀ`,
//! * `B = ψᵀ (K₁ - ½(K L + Lᵀ K)) ψ` where `K₁` is built like `K` with the
//!   weight `½ L̂ρ(e)` in place of `ρ̂(e)` and `L` is the generator matrix.
//!
//! The pencil is solved on the complement of state 0 by a Cholesky
//! congruence with the grounded `K`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Density, MarkovTriple, Potential};
use crate::error::{Error, Result};
use crate::logmean::log_mean_unchecked;
use crate::metric::action_values;
use crate::optimize::{lbfgs, numeric_gradient, LbfgsConfig};
use crate::sampling::{dirichlet_density, smoothed_dirac};
use crate::verifier::{Case, CheckReport, SlackTracker};

/// Logits are clipped this far below their maximum.
const LOGIT_FLOOR: f64 = -20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub kappa: f64,
    pub witness_density: Density,
    pub witness_potential: Potential,
    pub starts: usize,
    pub grid_refined: bool,
    /// `B - κA` at the witness.
    pub slack_at_witness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConfig {
    /// Random starts on top of `ρ ≡ 1` and the smoothed Diracs.
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self { starts: 16, seed: 42, max_iter: 300 }
    }
}

fn require_interior(chain: &MarkovTriple, rho: &Density, psi: Option<&DVector<f64>>) -> Result<()> {
    if rho.values().len() != chain.len() {
        return Err(Error::DimensionMismatch { expected: chain.len(), found: rho.values().len() });
    }
    if let Some(psi) = psi {
        if psi.len() != chain.len() {
            return Err(Error::DimensionMismatch { expected: chain.len(), found: psi.len() });
        }
    }
    if !rho.is_interior() {
        return Err(Error::BoundaryDensity);
    }
    Ok(())
}

/// `B(ρ,ψ) = ½ Σ_{x,y} [½ L̂ρ(x,y) (∇ψ)² - ρ̂ ∇ψ ∇(Lψ)] Q π`, summed over
/// ordered pairs.
pub fn hessian_entropy(chain: &MarkovTriple, rho: &Density, psi: &DVector<f64>) -> Result<f64> {
    require_interior(chain, rho, Some(psi))?;
    let r = rho.values();
    let lr = chain.apply_generator(r)?;
    let lpsi = chain.apply_generator(psi)?;
    let pi = chain.pi();
    let n = chain.len();
    let mut total = 0.0;
    for x in 0..n {
        for y in 0..n {
            let q = chain.rate(x, y);
            if q == 0.0 {
                continue;
            }
            let m = log_mean_unchecked(r[x], r[y]);
            let l_hat = m.d_first * lr[x] + m.d_second * lr[y];
            let g = psi[y] - psi[x];
            let gl = lpsi[y] - lpsi[x];
            total += (0.5 * l_hat * g * g - m.value * g * gl) * q * pi[x];
        }
    }
    Ok(0.5 * total)
}

/// Full `|X|×|X|` matrices of `A` and `B` at `ρ`.
pub fn quadratic_forms(chain: &MarkovTriple, rho: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = chain.len();
    let lr = chain.generator_matrix() * rho;
    let mut k = DMatrix::zeros(n, n);
    let mut k1 = DMatrix::zeros(n, n);
    for e in chain.edges() {
        let m = log_mean_unchecked(rho[e.x], rho[e.y]);
        let w = m.value * e.conductance;
        let w1 = 0.5 * (m.d_first * lr[e.x] + m.d_second * lr[e.y]) * e.conductance;
        for (mat, v) in [(&mut k, w), (&mut k1, w1)] {
            mat[(e.x, e.x)] += v;
            mat[(e.y, e.y)] += v;
            mat[(e.x, e.y)] -= v;
            mat[(e.y, e.x)] -= v;
        }
    }
    let kl = &k * chain.generator_matrix();
    let b = k1 - (&kl + kl.transpose()) * 0.5;
    (k, b)
}

/// Smallest generalized eigenvalue of `(B, A)` on functions modulo
/// constants, with an eigenvector normalized to `A = 1`.
pub(crate) fn pencil_minimum(chain: &MarkovTriple, rho: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = chain.len();
    if n < 2 {
        return Err(Error::DegeneratePencil);
    }
    let (a, b) = quadratic_forms(chain, rho);
    let a0 = a.view((1, 1), (n - 1, n - 1)).into_owned();
    let b0 = b.view((1, 1), (n - 1, n - 1)).into_owned();
    let chol = a0.clone().cholesky().ok_or(Error::DegeneratePencil)?;
    let l = chol.l();
    // M = G⁻¹ B G⁻ᵀ with A = G Gᵀ
    let gb = l.solve_lower_triangular(&b0).ok_or(Error::DegeneratePencil)?;
    let m = l.solve_lower_triangular(&gb.transpose()).ok_or(Error::DegeneratePencil)?;
    let m = (&m + m.transpose()) * 0.5;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegeneratePencil);
    }
    let eig = SymmetricEigen::new(m);
    // Near the boundary the congruence loses accuracy, so each eigenvector
    // is scored by its directly evaluated Rayleigh quotient; any such value
    // bounds the minimum from above and equals it when the solve is exact.
    let g_t = l.transpose();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for (idx, _) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(idx).into_owned();
        let Some(reduced) = g_t.solve_upper_triangular(&v) else { continue };
        let av = reduced.dot(&(&a0 * &reduced));
        let bv = reduced.dot(&(&b0 * &reduced));
        if !(av > 0.0) || !bv.is_finite() {
            continue;
        }
        let q = bv / av;
        if best.as_ref().is_none_or(|(b, _)| q < *b) {
            best = Some((q, reduced / av.sqrt()));
        }
    }
    let (kappa, reduced) = best.ok_or(Error::DegeneratePencil)?;
    let mut psi = DVector::zeros(n);
    psi.rows_mut(1, n - 1).copy_from(&reduced);
    Ok((kappa, psi))
}

/// `κ(ρ) = min_{ψ: A > 0} B(ρ,ψ)/A(ρ,ψ)` and a minimizing `ψ` with `A = 1`.
pub fn curvature_at(chain: &MarkovTriple, rho: &Density) -> Result<(f64, Potential)> {
    require_interior(chain, rho, None)?;
    let (kappa, psi) = pencil_minimum(chain, rho.values())?;
    Ok((kappa, Potential(psi)))
}

fn density_from_logits(chain: &MarkovTriple, z: &[f64]) -> DVector<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let v = DVector::from_iterator(z.len(), z.iter().map(|&zi| (zi - m).max(LOGIT_FLOOR).exp()));
    let mass = chain.mean(&v);
    v / mass
}

fn kappa_of_logits(chain: &MarkovTriple, z: &[f64]) -> f64 {
    if z.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    pencil_minimum(chain, &density_from_logits(chain, z)).map_or(f64::INFINITY, |(k, _)| k)
}

fn minimize_from(chain: &MarkovTriple, z0: Vec<f64>, max_iter: usize) -> (f64, Vec<f64>) {
    let cfg = LbfgsConfig { max_iter, f_tol: 1e-13, g_tol: 1e-10, patience: 3, ..Default::default() };
    let mut value_only = |z: &[f64]| kappa_of_logits(chain, z);
    let start_value = value_only(&z0);
    let m = lbfgs(
        |z, grad| {
            let v = value_only(z);
            if v.is_finite() {
                numeric_gradient(&mut value_only, z, 1e-6, grad);
            }
            v
        },
        z0.clone(),
        &cfg,
    );
    if m.value.is_finite() && m.value <= start_value {
        (m.value, m.x)
    } else {
        (start_value, z0)
    }
}

/// Points of the simplex grid of mesh `1/steps` with all masses positive.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<usize>> {
    fn fill(rest: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            if rest > 0 {
                prefix.push(rest);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for k in 1..rest {
            prefix.push(k);
            fill(rest - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(steps, n, &mut Vec::new(), &mut out);
    out
}

/// Multistart minimization of `κ(ρ)` over interior densities. The result is
/// the smallest value found, hence an upper bound on the true infimum.
pub fn estimate_ricci(chain: &MarkovTriple, cfg: &CurvatureConfig) -> Result<CurvatureEstimate> {
    let n = chain.len();
    if n < 2 {
        return Err(Error::DegeneratePencil);
    }
    let mut starts: Vec<Vec<f64>> = vec![Density::uniform(chain).logits()];
    for x in 0..n {
        starts.push(smoothed_dirac(chain, x, 1e-2).logits());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.starts {
        starts.push(dirichlet_density(chain, 0.5, 1e-4, &mut rng).logits());
    }

    let grid_refined = n <= 3;
    if grid_refined {
        let pi = chain.pi();
        let best_grid = simplex_grid(n, 100)
            .into_par_iter()
            .map(|p| {
                let z: Vec<f64> = (0..n).map(|x| (p[x] as f64 / 100.0 / pi[x]).ln()).collect();
                (kappa_of_logits(chain, &z), z)
            })
            .reduce_with(|a, b| if b.0 < a.0 { b } else { a });
        if let Some((_, z)) = best_grid {
            starts.push(z);
        }
    }

    let runs: Vec<(f64, Vec<f64>)> =
        starts.into_par_iter().map(|z0| minimize_from(chain, z0, cfg.max_iter)).collect();
    // deterministic reduction by (value, start index)
    let (_, (kappa, z)) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(i.cmp(j)))
        .expect("at least one start");
    let count = n + 1 + cfg.starts + usize::from(grid_refined);
    let rho = Density::renormalized_unchecked(chain, density_from_logits(chain, &z));
    let (kappa_w, psi) = pencil_minimum(chain, rho.values())?;
    let b = psi.dot(&(quadratic_forms(chain, rho.values()).1 * &psi));
    let a = action_values(chain, rho.values(), &psi);
    debug_assert!((kappa - kappa_w).abs() <= 1e-9 * (1.0 + kappa.abs()));
    Ok(CurvatureEstimate {
        kappa: kappa_w,
        witness_density: rho,
        witness_potential: Potential(psi),
        starts: count,
        grid_refined,
        slack_at_witness: b - kappa_w * a,
    })
}

/// Samples interior densities and checks `κ(ρ) ≥ kappa` on each of them.
pub fn verify_ricci(chain: &MarkovTriple, kappa: f64, samples: usize, seed: u64) -> CheckReport {
    let mut params = BTreeMap::new();
    params.insert("kappa".to_string(), kappa);
    params.insert("samples".to_string(), samples as f64);
    params.insert("seed".to_string(), seed as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut densities: Vec<Density> = (0..chain.len()).map(|x| smoothed_dirac(chain, x, 1e-4)).collect();
    densities.push(Density::uniform(chain));
    for _ in 0..samples {
        densities.push(dirichlet_density(chain, 0.5, 1e-4, &mut rng));
    }
    let values: Vec<Result<f64>> =
        densities.par_iter().map(|rho| curvature_at(chain, rho).map(|(k, _)| k)).collect();
    let mut tracker = SlackTracker::new(1e-8);
    for (rho, value) in densities.iter().zip(values) {
        match value {
            Ok(k) => tracker.record(kappa, k, || Case { rho: Some(rho.values().as_slice().to_vec()), ..Case::default() }),
            Err(e) => {
                tracker.note(format!("curvature failed: {e}"));
                tracker.record(0.0, f64::NEG_INFINITY, || Case {
                    rho: Some(rho.values().as_slice().to_vec()),
                    ..Case::default()
                });
            }
        }
    }
    let mut report = tracker.finish("ricci", params);
    // tolerance is absolute here
    report.tolerance = 1e-8;
    report.passed = report.worst_slack.is_none_or(|s| s >= -1e-8);
    report
}
