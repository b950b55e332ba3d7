//! Functional-inequality constants: spectral gap, Cheeger constant, a
//! modified log-Sobolev estimate, concentration profiles, the composed
//! Poincaré constant from a diameter bound, and mixing times.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Density, MarkovTriple};
use crate::error::{Error, Result};
use crate::metric::{w_distance, TransportConfig};
use crate::optimize::{lbfgs, numeric_gradient, LbfgsConfig};
use crate::quadrature::golden_max;
use crate::sampling::{dirichlet_density, normal_potential, smoothed_dirac};
use crate::verifier::{Case, CheckReport, SlackTracker};

/// Largest state space for exact subset enumeration.
pub const EXACT_LIMIT: usize = 24;

/// Densities with entropy below this are left out of the MLSI quotient.
const MLSI_ENTROPY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lambda1: f64,
    pub cheeger: f64,
    pub cheeger_exact: bool,
    pub mlsi_estimate: f64,
    pub diameter_upper: f64,
    pub q_star: f64,
    pub pi_star: f64,
    /// Exact mixing time keyed by `ε` printed with `{}`.
    pub tau_mix: BTreeMap<String, f64>,
    pub composed_pi_constant: f64,
    pub notes: Vec<String>,
}

/// Smallest non-zero eigenvalue of `-L`.
pub fn spectral_gap(chain: &MarkovTriple) -> f64 {
    chain.spectral_gap()
}

/// A cut `A` as a bit mask over states, with `π(A)` and `π⁺(∂A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub mask: u64,
    pub mass: f64,
    pub perimeter: f64,
}

/// `π(A)` and `π⁺(∂A) = Σ_{x∈A, y∉A} Q(x,y)π(x)` computed from scratch.
pub fn cut_of(chain: &MarkovTriple, mask: u64) -> Cut {
    let inside = |x: usize| mask >> x & 1 == 1;
    let mass = (0..chain.len()).filter(|&x| inside(x)).map(|x| chain.pi()[x]).sum();
    let perimeter = chain
        .edges()
        .iter()
        .filter(|e| inside(e.x) != inside(e.y))
        .map(|e| e.conductance)
        .sum();
    Cut { mask, mass, perimeter }
}

/// Minimizes `score(cut)` over all non-empty proper subsets. The last state
/// is kept outside `A`, which covers every cut once up to complement; the
/// score must be complement-symmetric. Ties go to the smaller mask.
pub(crate) fn minimize_over_cuts<F>(chain: &MarkovTriple, score: F) -> Result<(f64, Cut)>
where
    F: Fn(&Cut) -> f64 + Sync,
{
    let n = chain.len();
    if n > EXACT_LIMIT {
        return Err(Error::StateSpaceTooLarge { size: n, limit: EXACT_LIMIT });
    }
    if n < 2 {
        return Err(Error::InvalidParams("cuts need at least two states".into()));
    }
    let free = n - 1;
    let low = free.min(14);
    let high = free - low;
    let mut neighbours = vec![Vec::new(); n];
    for e in chain.edges() {
        neighbours[e.x].push((e.y, e.conductance));
        neighbours[e.y].push((e.x, e.conductance));
    }
    let pi = chain.pi();
    let best = (0u64..1 << high)
        .into_par_iter()
        .map(|prefix| {
            let mut mask = prefix << low;
            let mut cut = cut_of(chain, mask);
            let mut best: Option<(f64, Cut)> = None;
            let mut consider = |cut: &Cut| {
                if cut.mask == 0 {
                    return;
                }
                let s = score(cut);
                let better = match &best {
                    None => true,
                    Some((b, c)) => s < *b || (s == *b && cut.mask < c.mask),
                };
                if better {
                    best = Some((s, *cut));
                }
            };
            consider(&cut);
            for i in 1u64..1 << low {
                let v = i.trailing_zeros() as usize;
                let entering = mask >> v & 1 == 0;
                let mut delta = 0.0;
                for &(y, c) in &neighbours[v] {
                    delta += if mask >> y & 1 == 1 { -c } else { c };
                }
                mask ^= 1 << v;
                let sign = if entering { 1.0 } else { -1.0 };
                cut.perimeter += sign * delta;
                cut.mass += sign * pi[v];
                cut.mask = mask;
                consider(&cut);
            }
            best
        })
        .filter_map(|b| b)
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1.mask < a.1.mask) { b } else { a })
        .expect("at least one cut");
    // recompute the winner from scratch to drop accumulated rounding
    let exact = cut_of(chain, best.1.mask);
    Ok((score(&exact), exact))
}

fn cheeger_ratio(cut: &Cut) -> f64 {
    cut.perimeter / (cut.mass * (1.0 - cut.mass))
}

/// Exact Cheeger constant `h = min_A π⁺(∂A) / (π(A)(1-π(A)))`.
pub fn cheeger(chain: &MarkovTriple) -> Result<f64> {
    cheeger_cut(chain).map(|c| cheeger_ratio(&c))
}

/// The minimizing cut of [`cheeger`].
pub fn cheeger_cut(chain: &MarkovTriple) -> Result<Cut> {
    minimize_over_cuts(chain, cheeger_ratio).map(|(_, c)| c)
}

/// Simulated annealing over cuts for chains beyond the exact limit. The
/// result is the best ratio visited, an upper bound on `h` (not exact).
pub fn cheeger_annealed(chain: &MarkovTriple, iterations: usize, seed: u64) -> f64 {
    let n = chain.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside: Vec<bool> = (0..n).map(|x| x % 2 == 0).collect();
    let ratio = |inside: &[bool]| {
        let mass: f64 = (0..n).filter(|&x| inside[x]).map(|x| chain.pi()[x]).sum();
        if mass <= 0.0 || mass >= 1.0 - 1e-15 {
            return f64::INFINITY;
        }
        let per: f64 = chain.edges().iter().filter(|e| inside[e.x] != inside[e.y]).map(|e| e.conductance).sum();
        per / (mass * (1.0 - mass))
    };
    let mut current = ratio(&inside);
    let mut best = current;
    for k in 0..iterations {
        let temp = 1.0 * (1.0 - k as f64 / iterations as f64) + 1e-6;
        let v = rng.gen_range(0..n);
        inside[v] = !inside[v];
        let next = ratio(&inside);
        let accept = next <= current || rng.gen::<f64>() < ((current - next) / temp).exp();
        if accept && next.is_finite() {
            current = next;
            best = best.min(current);
        } else {
            inside[v] = !inside[v];
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlsiConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for MlsiConfig {
    fn default() -> Self {
        Self { starts: 16, seed: 42, max_iter: 300 }
    }
}

fn mlsi_quotient(chain: &MarkovTriple, z: &[f64]) -> f64 {
    if z.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let rho = Density::from_logits(chain, z);
    let h = chain.entropy(&rho);
    if !(h >= MLSI_ENTROPY_FLOOR) || !rho.is_interior() {
        return f64::INFINITY;
    }
    match chain.entropy_production(&rho) {
        Ok(i) => i / (2.0 * h),
        Err(_) => f64::INFINITY,
    }
}

/// Smallest `I(ρ)/(2H(ρ))` found by multistart minimization, capped by the
/// spectral gap (the limit of the quotient along `1 + εf₁`). An upper bound
/// on the optimal modified log-Sobolev constant.
pub fn mlsi_estimate(chain: &MarkovTriple, cfg: &MlsiConfig) -> f64 {
    let n = chain.len();
    let mut starts: Vec<Vec<f64>> = (0..n).map(|x| smoothed_dirac(chain, x, 1e-2).logits()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.starts {
        starts.push(dirichlet_density(chain, 0.5, 1e-4, &mut rng).logits());
    }
    let opt = LbfgsConfig { max_iter: cfg.max_iter, f_tol: 1e-13, g_tol: 1e-10, patience: 3, ..Default::default() };
    let values: Vec<f64> = starts
        .into_par_iter()
        .map(|z0| {
            let mut f = |z: &[f64]| mlsi_quotient(chain, z);
            let start = f(&z0);
            let m = lbfgs(
                |z, g| {
                    let v = f(z);
                    if v.is_finite() {
                        numeric_gradient(&mut f, z, 1e-6, g);
                    }
                    v
                },
                z0,
                &opt,
            );
            m.value.min(start)
        })
        .collect();
    values.into_iter().fold(chain.spectral_gap(), f64::min)
}

/// `β(r) = max_{π(A) ≥ ½} π({x : d(x,A) > r})` for each `r`, by enumeration.
pub fn concentration_profile(chain: &MarkovTriple, dist: &DMatrix<f64>, r_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = chain.len();
    if n > EXACT_LIMIT {
        return Err(Error::StateSpaceTooLarge { size: n, limit: EXACT_LIMIT });
    }
    let pi = chain.pi();
    let profile = (1u64..1 << n)
        .into_par_iter()
        .fold(
            || vec![0.0f64; r_grid.len()],
            |mut acc, mask| {
                let mass: f64 = (0..n).filter(|&x| mask >> x & 1 == 1).map(|x| pi[x]).sum();
                if mass < 0.5 - 1e-12 {
                    return acc;
                }
                let to_set: Vec<f64> = (0..n)
                    .map(|x| {
                        (0..n).filter(|&a| mask >> a & 1 == 1).map(|a| dist[(x, a)]).fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                for (k, &r) in r_grid.iter().enumerate() {
                    let far: f64 = (0..n).filter(|&x| to_set[x] > r).map(|x| pi[x]).sum();
                    acc[k] = acc[k].max(far);
                }
                acc
            },
        )
        .reduce(|| vec![0.0; r_grid.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect());
    Ok(r_grid.iter().copied().zip(profile).collect())
}

/// Constants of a profile bound `β(r) ≤ M e^{-a φ(r)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    /// Rate fixed from the diameter (`1/D` or `1/D²`).
    pub rate_fixed: f64,
    /// Least `M` valid on the grid for `rate_fixed`.
    pub m_fixed: f64,
    /// Rate from a log-linear regression on the positive tail.
    pub rate_fit: f64,
    /// Least `M` valid on the grid for `rate_fit`.
    pub m_fit: f64,
}

fn fit_profile(profile: &[(f64, f64)], rate_fixed: f64, phi: impl Fn(f64) -> f64) -> ProfileFit {
    let least_m = |rate: f64| {
        profile.iter().map(|&(r, b)| if b > 0.0 { b * (rate * phi(r)).exp() } else { 0.0 }).fold(0.0, f64::max)
    };
    let tail: Vec<(f64, f64)> = profile.iter().filter(|p| p.1 > 0.0).map(|&(r, b)| (phi(r), b.ln())).collect();
    let rate_fit = if tail.len() >= 2 {
        let k = tail.len() as f64;
        let mx = tail.iter().map(|p| p.0).sum::<f64>() / k;
        let my = tail.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 { (-sxy / sxx).max(0.0) } else { 0.0 }
    } else {
        rate_fixed
    };
    ProfileFit { rate_fixed, m_fixed: least_m(rate_fixed), rate_fit, m_fit: least_m(rate_fit) }
}

/// `β(r) ≤ M e^{-α r}` with `α = 1/D` and a regression fit.
pub fn fit_exponential(profile: &[(f64, f64)], diameter: f64) -> ProfileFit {
    fit_profile(profile, 1.0 / diameter, |r| r)
}

/// `β(r) ≤ M e^{-ρ r²}` with `ρ = 1/D²` and a regression fit.
pub fn fit_gaussian(profile: &[(f64, f64)], diameter: f64) -> ProfileFit {
    fit_profile(profile, 1.0 / (diameter * diameter), |r| r * r)
}

/// Poincaré constant obtained by tightening two non-tight inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComposedConstant {
    pub lambda: f64,
    pub feasible: bool,
    pub t: f64,
    pub delta: f64,
}

/// `(e^{2κt} - 1)/κ` with the `κ → 0` limit `2t`.
pub fn growth_factor(kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        2.0 * t
    } else {
        (2.0 * kappa * t).exp_m1() / kappa
    }
}

/// Tightened constant at unit diameter for curvature `-k` (`k ≥ 0`).
fn tightened(k: f64, t: f64, delta: f64) -> Option<f64> {
    // weak Poincaré: Var ≤ ((e^{2kt}-1)/k) π[Γf] + (k/(1-e^{-2kt})) ‖f‖²∞ / 2
    let a1 = growth_factor(k, t) / 4.0;
    let b1 = if k == 0.0 { 1.0 / (4.0 * t) } else { k / (2.0 * -(-2.0 * k * t).exp_m1()) };
    let a2 = 1.0 / (4.0 * delta);
    let b2 = (delta + k / 2.0).exp();
    let root = ((3.0 * b1 + b2 - 1.0) * (2.0 + b2)).sqrt();
    let admissible = b2 / 2.0 + root / 2.0 < 1.0;
    let lambda = (2.0 - (b2 + root)) / (8.0 * (3.0 * a1 + a2));
    (admissible && lambda.is_finite()).then_some(lambda)
}

/// Poincaré constant under `Ric ≥ -kappa` and diameter `d`, optimized over
/// the free parameters `t, δ`. Returns `λ = 0` with `feasible = false` when
/// no scanned pair is admissible.
pub fn composed_pi_constant(kappa: f64, d: f64) -> Result<ComposedConstant> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::NonPositiveDiameter(d));
    }
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParams(format!("curvature magnitude must be non-negative, got {kappa}")));
    }
    // unit-diameter variables: t = d² t', δ = δ'/d², κ d² enters only via k
    let k = kappa * d * d;
    let value = |lt: f64, ld: f64| tightened(k, lt.exp(), ld.exp()).unwrap_or(f64::NEG_INFINITY);
    let (lt_grid, ld_grid): (Vec<f64>, Vec<f64>) =
        ((0..241).map(|i| -12.0 + 0.1 * i as f64).collect(), (0..241).map(|i| -12.0 + 0.1 * i as f64).collect());
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &lt in &lt_grid {
        for &ld in &ld_grid {
            let v = value(lt, ld);
            if v > best.0 {
                best = (v, lt, ld);
            }
        }
    }
    if !best.0.is_finite() {
        return Ok(ComposedConstant { lambda: 0.0, feasible: false, t: f64::NAN, delta: f64::NAN });
    }
    // alternate golden-section refinements around the grid optimum
    let (mut lt, mut ld) = (best.1, best.2);
    for _ in 0..8 {
        lt = golden_max(|x| value(x, ld), lt - 0.2, lt + 0.2, 1e-12).0;
        ld = golden_max(|y| value(lt, y), ld - 0.2, ld + 0.2, 1e-12).0;
    }
    let refined = value(lt, ld);
    let (lambda, lt, ld) = if refined >= best.0 { (refined, lt, ld) } else { best };
    Ok(ComposedConstant { lambda: lambda / (d * d), feasible: true, t: lt.exp() * d * d, delta: ld.exp() / (d * d) })
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    Ok(())
}

/// `max_x ‖p_t(x,·)π − π‖_TV`.
pub fn tv_distance(chain: &MarkovTriple, t: f64) -> Result<f64> {
    let p = chain.transition_matrix(t)?;
    let pi = chain.pi();
    Ok((0..chain.len())
        .map(|x| 0.5 * (0..chain.len()).map(|y| (p[(x, y)] - pi[y]).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Smallest `t` with worst-case total variation distance at most `ε`, to
/// `10⁻⁷` time resolution.
pub fn mixing_time_exact(chain: &MarkovTriple, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    if tv_distance(chain, 0.0)? <= eps {
        return Ok(0.0);
    }
    let mut hi = 1.0 / chain.spectral_gap();
    while tv_distance(chain, hi)? > eps {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-7 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if tv_distance(chain, mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `D²/4 + log(1/ε)/λ`.
pub fn mixing_time_bound(d: f64, lambda: f64, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    Ok(d * d / 4.0 + (1.0 / eps).ln() / lambda)
}

/// `(1/2λ)(log(1/(2ε²)) + log log(1/π*))`.
pub fn pi_star_bound(lambda: f64, pi_star: f64, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    Ok(((1.0 / (2.0 * eps * eps)).ln() + (1.0 / pi_star).ln().ln()) / (2.0 * lambda))
}

fn sampled_densities(chain: &MarkovTriple, samples: usize, seed: u64) -> Vec<Density> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Density::uniform(chain)];
    out.extend((0..chain.len()).map(|x| smoothed_dirac(chain, x, 1e-2)));
    out.extend((0..samples).map(|_| dirichlet_density(chain, 0.5, 1e-4, &mut rng)));
    out.truncate(samples.max(1));
    out
}

/// `W(ρ,1)² ≤ (2/λ) H(ρ)` on sampled densities, with the optimizer's upper
/// value for `W`.
pub fn talagrand_check(chain: &MarkovTriple, lambda: f64, samples: usize, seed: u64, transport: &TransportConfig) -> CheckReport {
    let mut params = BTreeMap::new();
    params.insert("lambda".into(), lambda);
    params.insert("samples".into(), samples as f64);
    params.insert("seed".into(), seed as f64);
    if !(lambda > 0.0) {
        return CheckReport::errored("talagrand", params, "lambda must be positive");
    }
    let one = Density::uniform(chain);
    let densities = sampled_densities(chain, samples, seed);
    let results: Vec<Result<f64>> =
        densities.par_iter().map(|rho| w_distance(chain, rho, &one, transport).map(|r| r.upper)).collect();
    let mut tracker = SlackTracker::new(1e-6);
    for (rho, w) in densities.iter().zip(results) {
        let case = || Case { rho: Some(rho.values().as_slice().to_vec()), ..Case::default() };
        match w {
            Ok(w) => tracker.record(w * w, 2.0 / lambda * chain.entropy(rho), case),
            Err(e) => {
                tracker.note(format!("transport failed: {e}"));
                tracker.record(0.0, f64::NEG_INFINITY, case);
            }
        }
    }
    tracker.finish("talagrand", params)
}

/// `c(κ,λ₁)`: `⅓√(Q*λ₁)` for `κ ≥ 0`, and `⅓√Q* min(λ₁/√|κ|, √λ₁)` below.
pub fn buser_constant(kappa: f64, lambda1: f64, q_star: f64) -> f64 {
    if kappa >= 0.0 {
        (q_star * lambda1).sqrt() / 3.0
    } else {
        q_star.sqrt() / 3.0 * (lambda1 / kappa.abs().sqrt()).min(lambda1.sqrt())
    }
}

/// `Σ_{x,y} |∇ψ| Q π` over ordered pairs.
pub fn gradient_l1(chain: &MarkovTriple, psi: &DVector<f64>) -> f64 {
    chain.edges().iter().map(|e| 2.0 * (psi[e.y] - psi[e.x]).abs() * e.conductance).sum()
}

/// `π[|ψ - π[ψ]|] ≤ (4/c(κ,λ₁)) Σ |∇ψ| Q π` on sampled `ψ` and indicators.
pub fn l1_poincare_check(chain: &MarkovTriple, kappa: f64, samples: usize, seed: u64) -> CheckReport {
    let mut params = BTreeMap::new();
    params.insert("kappa".into(), kappa);
    params.insert("samples".into(), samples as f64);
    params.insert("seed".into(), seed as f64);
    let c = buser_constant(kappa, chain.spectral_gap(), chain.q_star());
    params.insert("c".into(), c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fs: Vec<(DVector<f64>, Option<u64>)> = (0..samples).map(|_| (normal_potential(chain, &mut rng), None)).collect();
    let n = chain.len();
    for x in 0..n {
        let mask = 1u64 << x;
        fs.push((DVector::from_fn(n, |y, _| if y == x { 1.0 } else { 0.0 }), Some(mask)));
    }
    let mut tracker = SlackTracker::new(1e-10);
    for (f, mask) in &fs {
        let (lhs, rhs) = l1_poincare_sides(chain, c, f);
        tracker.record(lhs, rhs, || Case { f: Some(f.as_slice().to_vec()), subset: *mask, ..Case::default() });
    }
    tracker.finish("l1_poincare", params)
}

pub(crate) fn l1_poincare_sides(chain: &MarkovTriple, c: f64, f: &DVector<f64>) -> (f64, f64) {
    let m = chain.mean(f);
    let lhs = chain.mean(&f.map(|v| (v - m).abs()));
    (lhs, 4.0 / c * gradient_l1(chain, f))
}

/// Collects every constant of the chain.
pub fn inequality_report(chain: &MarkovTriple, mlsi: &MlsiConfig) -> Result<InequalityReport> {
    let mut notes = Vec::new();
    let lambda1 = spectral_gap(chain);
    let (cheeger, cheeger_exact) = match cheeger(chain) {
        Ok(h) => (h, true),
        Err(Error::StateSpaceTooLarge { .. }) => {
            notes.push("cheeger: annealed upper bound, not exact".to_string());
            (cheeger_annealed(chain, 200_000, mlsi.seed), false)
        }
        Err(e) => return Err(e),
    };
    let diameter_upper = crate::metric::diameter_upper(chain);
    let mut tau_mix = BTreeMap::new();
    for eps in [0.25, 0.1, 0.01] {
        tau_mix.insert(format!("{eps}"), mixing_time_exact(chain, eps)?);
    }
    let composed = composed_pi_constant(0.0, diameter_upper)?;
    notes.push("composed_pi_constant assumes non-negative curvature and uses the certified diameter bound".to_string());
    Ok(InequalityReport {
        lambda1,
        cheeger,
        cheeger_exact,
        mlsi_estimate: mlsi_estimate(chain, mlsi),
        diameter_upper,
        q_star: chain.q_star(),
        pi_star: chain.pi_star(),
        tau_mix,
        composed_pi_constant: composed.lambda,
        notes,
    })
}
