//! Per-trial evaluation of every check. Each trial is a [`Case`]; its two
//! sides are recomputed from the case and the report parameters alone, so a
//! stored worst case replays exactly.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::chain::{Density, MarkovTriple};
use crate::error::{Error, Result};
use crate::inequalities::{buser_constant, cut_of, gradient_l1, growth_factor, l1_poincare_sides, mixing_time_exact};
use crate::logmean::theta;
use crate::metric::action_values;

use super::report::Case;

pub(crate) fn param(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params.get(key).copied().ok_or_else(|| Error::InvalidParams(format!("missing parameter {key}")))
}

fn vector(chain: &MarkovTriple, v: &Option<Vec<f64>>, what: &str) -> Result<DVector<f64>> {
    let v = v.as_ref().ok_or_else(|| Error::InvalidParams(format!("case without {what}")))?;
    if v.len() != chain.len() {
        return Err(Error::DimensionMismatch { expected: chain.len(), found: v.len() });
    }
    Ok(DVector::from_column_slice(v))
}

fn density(chain: &MarkovTriple, v: &Option<Vec<f64>>) -> Result<Density> {
    Density::normalized(chain, vector(chain, v, "density")?)
}

fn time(case: &Case) -> Result<f64> {
    case.t.ok_or_else(|| Error::InvalidParams("case without time".into()))
}

fn pair(case: &Case) -> Result<(usize, usize)> {
    match (case.x, case.y) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(Error::InvalidParams("case without state pair".into())),
    }
}

fn value(case: &Case) -> Result<f64> {
    case.parameter.ok_or_else(|| Error::InvalidParams("case without parameter".into()))
}

/// `(1 - e^{-2κt})/κ` with the `κ → 0` limit `2t`.
fn decay_factor(kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        2.0 * t
    } else {
        -(-2.0 * kappa * t).exp_m1() / kappa
    }
}

/// `π[Γ(g, log g)]` for a strictly positive `g`.
fn entropic_energy(chain: &MarkovTriple, g: &DVector<f64>) -> f64 {
    entropic_gamma(chain, g).dot(chain.pi())
}

/// `Γ(g, log g)(x) = Σ_y (g(y) - g(x))(log g(y) - log g(x)) Q(x,y)`.
fn entropic_gamma(chain: &MarkovTriple, g: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(chain.len());
    for e in chain.edges() {
        let v = (g[e.y] - g[e.x]) * (g[e.y].ln() - g[e.x].ln());
        out[e.x] += v * chain.rate(e.x, e.y);
        out[e.y] += v * chain.rate(e.y, e.x);
    }
    out
}

/// `Ent_π(g) = π[g log g] - π[g] log π[g]`.
fn ent(chain: &MarkovTriple, g: &DVector<f64>) -> f64 {
    let m = chain.mean(g);
    chain.mean(&g.map(|v| if v > 0.0 { v * v.ln() } else { 0.0 })) - m * m.ln()
}

fn sup_norm(f: &DVector<f64>) -> f64 {
    f.amax()
}

/// Left and right side of one trial; the check asserts `lhs ≤ rhs`.
pub(crate) fn sides(
    check_id: &str,
    chain: &MarkovTriple,
    params: &BTreeMap<String, f64>,
    case: &Case,
) -> Result<(f64, f64)> {
    let variant = case.variant.as_deref().unwrap_or("");
    match (check_id, variant) {
        ("gradient_estimate", _) => {
            let kappa = param(params, "kappa")?;
            let rho = density(chain, &case.rho)?;
            let psi = vector(chain, &case.f, "potential")?;
            let t = time(case)?;
            let lhs = action_values(chain, rho.values(), &chain.heat_semigroup(t, &psi)?);
            let rhs = (-2.0 * kappa * t).exp() * action_values(chain, chain.evolve(t, &rho)?.values(), &psi);
            Ok((lhs, rhs))
        }
        ("pointwise_gradient", _) => {
            let kappa = param(params, "kappa")?;
            let psi = vector(chain, &case.f, "potential")?;
            let t = time(case)?;
            let (x, y) = pair(case)?;
            let pt = chain.heat_semigroup(t, &psi)?;
            let g = chain.heat_semigroup(t, &chain.gamma(&psi, &psi)?)?;
            let pi = chain.pi();
            let d = pt[y] - pt[x];
            let lhs = 0.5 * d * d * chain.rate(x, y) * pi[x];
            let rhs = (-2.0 * kappa * t).exp() * (g[x] * pi[x] + g[y] * pi[y]);
            Ok((lhs, rhs))
        }
        ("reverse_poincare", "sup_edge") => {
            let kappa = param(params, "kappa")?;
            let psi = vector(chain, &case.f, "potential")?;
            let t = time(case)?;
            let (x, y) = pair(case)?;
            let pt = chain.heat_semigroup(t, &psi)?;
            let d = pt[y] - pt[x];
            let lhs = growth_factor(kappa, t) * 0.5 * theta(chain.rate(x, y), chain.rate(y, x)) * d * d;
            Ok((lhs, sup_norm(&psi).powi(2)))
        }
        ("reverse_poincare", "sup_qstar") => {
            let kappa = param(params, "kappa")?;
            let psi = vector(chain, &case.f, "potential")?;
            let t = time(case)?;
            let pt = chain.heat_semigroup(t, &psi)?;
            let max_grad = chain.edges().iter().map(|e| (pt[e.y] - pt[e.x]).powi(2)).fold(0.0, f64::max);
            Ok((growth_factor(kappa, t) * max_grad, 2.0 * sup_norm(&psi).powi(2) / chain.q_star()))
        }
        ("reverse_poincare", _) => {
            let kappa = param(params, "kappa")?;
            let rho = density(chain, &case.rho)?;
            let psi = vector(chain, &case.f, "potential")?;
            let t = time(case)?;
            let pt = chain.heat_semigroup(t, &psi)?;
            let prho = chain.evolve(t, &rho)?;
            let gap = chain.inner(&psi.map(|v| v * v), prho.values()) - chain.inner(&pt.map(|v| v * v), rho.values());
            Ok((growth_factor(kappa, t) * action_values(chain, rho.values(), &pt), gap))
        }
        ("l1_smoothing", _) => {
            let psi = vector(chain, &case.f, "potential")?;
            let t = time(case)?;
            let pt = chain.heat_semigroup(t, &psi)?;
            let lhs = chain.mean(&(&psi - &pt).abs());
            let rhs = 2.0 * t.sqrt() / chain.q_star().sqrt() * gradient_l1(chain, &psi);
            Ok((lhs, rhs))
        }
        ("gamma_decay", "lipschitz") => {
            let kappa = param(params, "kappa")?;
            let f = vector(chain, &case.f, "function")?;
            let t = time(case)?;
            let (x, y) = pair(case)?;
            let pt = chain.heat_semigroup(t, &f)?;
            let rhs = sup_norm(&f) * value(case)? / growth_factor(kappa, t).sqrt();
            Ok(((pt[x] - pt[y]).abs(), rhs))
        }
        ("gamma_decay", _) => {
            let kappa = param(params, "kappa")?;
            let f = vector(chain, &case.f, "function")?;
            let t = time(case)?;
            let pt = chain.heat_semigroup(t, &f)?;
            let lhs = chain.gamma(&pt, &pt)?.dot(chain.pi());
            let rhs = (-2.0 * kappa * t).exp() * chain.gamma(&f, &f)?.dot(chain.pi());
            Ok((lhs, rhs))
        }
        ("buser", "cheeger") => {
            let c = buser_constant(0.0, chain.spectral_gap(), chain.q_star());
            Ok((c, value(case)?))
        }
        ("buser", cut_kind) => {
            let kappa = param(params, "kappa")?;
            let mask = case.subset.ok_or_else(|| Error::InvalidParams("case without subset".into()))?;
            let cut = cut_of(chain, mask);
            let lambda1 = chain.spectral_gap();
            let c = if cut_kind == "cut_positive" {
                chain.q_star().sqrt() / 3.0 * (lambda1 / kappa.sqrt()).min(lambda1.sqrt())
            } else {
                buser_constant(0.0, lambda1, chain.q_star())
            };
            Ok((c * cut.mass * (1.0 - cut.mass), cut.perimeter))
        }
        ("l1_poincare", _) => {
            let kappa = param(params, "kappa")?;
            let f = vector(chain, &case.f, "function")?;
            let c = buser_constant(kappa, chain.spectral_gap(), chain.q_star());
            Ok(l1_poincare_sides(chain, c, &f))
        }
        ("hwi", _) => {
            let kappa = param(params, "kappa")?;
            let rho0 = density(chain, &case.rho)?;
            let rho1 = density(chain, &case.rho1)?;
            let w = value(case)?;
            let info = chain.entropy_production(&rho1)?;
            let lhs = chain.entropy(&rho1) - chain.entropy(&rho0);
            Ok((lhs, w * info.sqrt() - 0.5 * kappa * w * w))
        }
        ("liyau", _) => {
            let d = param(params, "d_hat")?;
            Ok((1.0 / (std::f64::consts::E * d * d), chain.spectral_gap()))
        }
        ("weak_poincare", "concentration") => {
            let kappa = param(params, "kappa")?;
            let alpha = param(params, "alpha")?;
            let m = param(params, "m")?;
            let f = vector(chain, &case.f, "function")?;
            let t = time(case)?;
            let energy = chain.gamma(&f, &f)?.dot(chain.pi());
            let rhs = decay_factor(kappa, t) * energy
                + 2.0 * m * sup_norm(&f).powi(2) / (alpha * alpha * growth_factor(kappa, t));
            Ok((chain.variance(&f)?, rhs))
        }
        ("weak_poincare", _) => {
            let d = param(params, "d_hat")?;
            let f = vector(chain, &case.f, "function")?;
            let t = time(case)?;
            let energy = chain.gamma(&f, &f)?.dot(chain.pi());
            let rhs = 2.0 * t * energy + d * d * sup_norm(&f).powi(2) / (4.0 * t);
            Ok((chain.variance(&f)?, rhs))
        }
        ("nontight", "gamma_comparison") => {
            let f = vector(chain, &case.f, "function")?;
            let x = case.x.ok_or_else(|| Error::InvalidParams("case without state".into()))?;
            let f2 = f.map(|v| v * v);
            Ok((chain.gamma(&f, &f)?[x], 0.25 * entropic_gamma(chain, &f2)[x]))
        }
        ("nontight", "entropy_bound") => {
            let d = param(params, "d_hat")?;
            let f = vector(chain, &case.f, "function")?;
            let delta = value(case)?;
            let f2 = f.map(|v| v * v);
            let m = chain.mean(&f2);
            let tail = chain.mean(&f2.map(|v| if v > m { v } else { 0.0 }));
            Ok((ent(chain, &f2), delta * d * d * entropic_energy(chain, &f2) + tail / (4.0 * delta)))
        }
        ("nontight", "tail") => {
            let f = vector(chain, &case.f, "function")?;
            let a = value(case)?;
            let norm = chain.mean(&f.map(|v| v * v)).sqrt();
            let g = f / norm;
            let tail = chain.mean(&g.map(|v| if v * v >= a * a { v * v } else { 0.0 }));
            Ok((tail, (a / (a - 1.0)).powi(2) * chain.variance(&g)?))
        }
        ("nontight", _) => {
            let d = param(params, "d_hat")?;
            let kappa = param(params, "kappa")?;
            let f = vector(chain, &case.f, "function")?;
            let delta = value(case)?;
            let f2 = f.map(|v| v * v);
            let negative = (-kappa).max(0.0);
            let rhs = entropic_energy(chain, &f2) / (4.0 * delta)
                + (d * d * (delta + negative / 2.0)).exp() * chain.mean(&f.abs()).powi(2);
            Ok((chain.mean(&f2), rhs))
        }
        ("bonnet_myers", _) => {
            let kappa = param(params, "kappa")?;
            let (x, y) = pair(case)?;
            let pi = chain.pi();
            Ok((value(case)?, 2.0 * ((-pi[x].ln() - pi[y].ln()) / kappa).sqrt()))
        }
        ("mixing", "evi") => {
            let d = param(params, "d_hat")?;
            let rho = density(chain, &case.rho)?;
            let t = time(case)?;
            Ok((chain.entropy(&chain.evolve(t, &rho)?), d * d / (4.0 * t)))
        }
        ("mixing", _) => {
            let d = param(params, "d_hat")?;
            let lambda = param(params, "lambda_check")?;
            let eps = value(case)?;
            Ok((mixing_time_exact(chain, eps)?, d * d / 4.0 + (1.0 / eps).ln() / lambda))
        }
        _ => Err(Error::InvalidParams(format!("unknown check {check_id}"))),
    }
}
