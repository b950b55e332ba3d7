//! Numerical verification of the curvature consequences on a given chain.
//!
//! Every check samples trials, evaluates `lhs ≤ rhs` on each and keeps the
//! smallest slack `rhs - lhs` together with the inputs that produced it.
//! Wherever an upper bound `D̂ ≥ D` or `Ŵ ≥ W` replaces a metric quantity it
//! sits on the side where enlarging it can only make the check stricter, or
//! the check says otherwise in its documentation.

mod checks;
mod report;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Density, MarkovTriple};
use crate::curvature::{estimate_ricci, verify_ricci, CurvatureConfig, CurvatureEstimate};
use crate::error::{Error, Result};
use crate::inequalities::{cheeger, fit_exponential, l1_poincare_check, concentration_profile, minimize_over_cuts, EXACT_LIMIT};
use crate::metric::{diameter_upper, w_distance, TransportConfig};
use crate::sampling::{dirichlet_density, normal_potential, positive_function, smoothed_dirac};

pub use report::{Case, CheckReport};
pub(crate) use report::SlackTracker;

/// Identifiers of every check, in the order `run_all_checks` reports them.
pub const CHECK_IDS: &[&str] = &[
    "ricci",
    "gradient_estimate",
    "pointwise_gradient",
    "reverse_poincare",
    "l1_smoothing",
    "gamma_decay",
    "buser",
    "l1_poincare",
    "hwi",
    "liyau",
    "weak_poincare",
    "nontight",
    "bonnet_myers",
    "mixing",
];

/// Slack tolerance relative to the magnitude of the compared sides.
const RELATIVE_TOL: f64 = 1e-9;
/// Margin subtracted from the sampled curvature certificate.
pub const KAPPA_MARGIN: f64 = 1e-6;

/// Inputs shared by the individual checks.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    /// Random functions or densities per check.
    pub samples: usize,
    pub seed: u64,
    /// Used for every Wasserstein distance a check needs.
    pub transport: TransportConfig,
    /// Density pairs for the HWI check.
    pub w_samples: usize,
    /// Precomputed `d̂_W(x, y)`; computed on demand when absent.
    pub pair_distances: Option<DMatrix<f64>>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { samples: 24, seed: 42, transport: TransportConfig::with_steps(16), w_samples: 6, pair_distances: None }
    }
}

impl CheckConfig {
    /// Seed for one check, so checks sample independently of their order.
    fn rng(&self, check_id: &str) -> ChaCha8Rng {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in check_id.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(self.seed ^ h)
    }
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub checks: CheckConfig,
    pub curvature: CurvatureConfig,
    /// Random densities on which the curvature estimate is certified.
    pub ricci_samples: usize,
    /// Restrict the suite to these check ids; `None` runs everything.
    pub only: Option<Vec<String>>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self { checks: CheckConfig::default(), curvature: CurvatureConfig::default(), ricci_samples: 200, only: None }
    }
}

/// Outcome of [`run_suite`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteResult {
    pub estimate: Option<CurvatureEstimate>,
    /// Smallest curvature seen while certifying the estimate.
    pub kappa_sampled: Option<f64>,
    /// Curvature the checks were run with.
    pub kappa: f64,
    /// Whether non-negative curvature was certified.
    pub nonnegative: bool,
    pub reports: Vec<CheckReport>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

fn base_params(kappa: f64, cfg: &CheckConfig) -> BTreeMap<String, f64> {
    let mut p = BTreeMap::new();
    p.insert("kappa".to_string(), kappa);
    p.insert("samples".to_string(), cfg.samples as f64);
    p.insert("seed".to_string(), cfg.seed as f64);
    p
}

fn t_grid(chain: &MarkovTriple, scaled: &[f64]) -> Vec<f64> {
    let lambda1 = chain.spectral_gap();
    scaled.iter().map(|s| s / lambda1).collect()
}

fn to_vec(v: &DVector<f64>) -> Option<Vec<f64>> {
    Some(v.as_slice().to_vec())
}

fn sample_densities(chain: &MarkovTriple, count: usize, rng: &mut ChaCha8Rng) -> Vec<Density> {
    let mut out: Vec<Density> = (0..chain.len()).map(|x| smoothed_dirac(chain, x, 1e-2)).collect();
    out.push(Density::uniform(chain));
    out.extend((0..count).map(|_| dirichlet_density(chain, 0.5, 1e-4, rng)));
    out
}

/// Evaluates all cases in parallel and keeps the worst one.
fn evaluate(chain: &MarkovTriple, check_id: &str, params: BTreeMap<String, f64>, cases: Vec<Case>) -> CheckReport {
    let values: Vec<Result<(f64, f64)>> =
        cases.par_iter().map(|c| checks::sides(check_id, chain, &params, c)).collect();
    let mut tracker = SlackTracker::new(RELATIVE_TOL);
    for (case, value) in cases.into_iter().zip(values) {
        match value {
            Ok((lhs, rhs)) => tracker.record(lhs, rhs, || case),
            Err(e) => {
                tracker.note(format!("trial failed: {e}"));
                tracker.record(0.0, f64::NEG_INFINITY, || case);
            }
        }
    }
    tracker.finish(check_id, params)
}

/// Recomputes `rhs - lhs` for the worst case stored in a report.
pub fn replay(chain: &MarkovTriple, report: &CheckReport) -> Result<f64> {
    let case = report.worst_case.as_ref().ok_or_else(|| Error::InvalidParams("report has no worst case".into()))?;
    let (lhs, rhs) = checks::sides(&report.check_id, chain, &report.params, case)?;
    Ok(rhs - lhs)
}

/// `A(ρ, P_tψ) ≤ e^{-2κt} A(P_tρ, ψ)`.
pub fn check_gradient_estimate(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("gradient_estimate");
    let densities = sample_densities(chain, cfg.samples, &mut rng);
    let mut cases = Vec::new();
    for rho in &densities {
        let psi = normal_potential(chain, &mut rng);
        for &t in &t_grid(chain, &[0.0, 0.05, 0.1, 0.5, 1.0, 2.0]) {
            cases.push(Case { rho: to_vec(rho.values()), f: to_vec(&psi), t: Some(t), ..Case::default() });
        }
    }
    evaluate(chain, "gradient_estimate", base_params(kappa, cfg), cases)
}

/// `½|∇P_tψ|²(x,y) Q(x,y) π(x) ≤ e^{-2κt}[P_tΓψ(x)π(x) + P_tΓψ(y)π(y)]` on every edge.
pub fn check_pointwise_gradient(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("pointwise_gradient");
    let mut cases = Vec::new();
    for _ in 0..cfg.samples {
        let psi = normal_potential(chain, &mut rng);
        for &t in &t_grid(chain, &[0.0, 0.1, 0.5, 1.0, 2.0]) {
            for e in chain.edges() {
                for (x, y) in [(e.x, e.y), (e.y, e.x)] {
                    cases.push(Case { f: to_vec(&psi), t: Some(t), x: Some(x), y: Some(y), ..Case::default() });
                }
            }
        }
    }
    evaluate(chain, "pointwise_gradient", base_params(kappa, cfg), cases)
}

/// `growth(κ,t) A(ρ, P_tψ) ≤ ⟨ψ², P_tρ⟩ - ⟨(P_tψ)², ρ⟩` with
/// `growth(κ,t) = (e^{2κt}-1)/κ`, together with its sup-norm consequences
/// `growth · ½θ(Q(x,y),Q(y,x)) |∇P_tψ|² ≤ ‖ψ‖²∞` and
/// `growth · max|∇P_tψ|² ≤ 2‖ψ‖²∞/Q*`.
pub fn check_reverse_poincare(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("reverse_poincare");
    let densities = sample_densities(chain, cfg.samples, &mut rng);
    let grid = t_grid(chain, &[0.0, 0.05, 0.1, 0.5, 1.0, 2.0]);
    let mut cases = Vec::new();
    for rho in &densities {
        let psi = normal_potential(chain, &mut rng);
        for &t in &grid {
            cases.push(Case { rho: to_vec(rho.values()), f: to_vec(&psi), t: Some(t), ..Case::default() });
            cases.push(Case { f: to_vec(&psi), t: Some(t), variant: Some("sup_qstar".into()), ..Case::default() });
            for e in chain.edges() {
                cases.push(Case {
                    f: to_vec(&psi),
                    t: Some(t),
                    x: Some(e.x),
                    y: Some(e.y),
                    variant: Some("sup_edge".into()),
                    ..Case::default()
                });
            }
        }
    }
    evaluate(chain, "reverse_poincare", base_params(kappa, cfg), cases)
}

/// `π|ψ - P_tψ| ≤ (2√t/√Q*) Σ|∇ψ|Qπ` for `t ≤ 1/(2|κ|)`, on random potentials and
/// indicators of single states.
pub fn check_l1_smoothing(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("l1_smoothing");
    let limit = if kappa < 0.0 { 0.5 / kappa.abs() } else { f64::INFINITY };
    let grid: Vec<f64> =
        t_grid(chain, &[1e-4, 0.05, 0.1, 0.5, 1.0, 2.0]).into_iter().map(|t| t.min(limit)).collect();
    let n = chain.len();
    let mut fs: Vec<DVector<f64>> = (0..cfg.samples).map(|_| normal_potential(chain, &mut rng)).collect();
    fs.extend((0..n).map(|x| DVector::from_fn(n, |y, _| if y == x { 1.0 } else { 0.0 })));
    let mut cases = Vec::new();
    for f in &fs {
        for &t in &grid {
            cases.push(Case { f: to_vec(f), t: Some(t), ..Case::default() });
        }
    }
    let mut params = base_params(kappa, cfg);
    params.insert("t_limit".into(), limit.min(f64::MAX));
    evaluate(chain, "l1_smoothing", params, cases)
}

/// Pairwise upper transport distances between point masses.
pub fn pair_distances(chain: &MarkovTriple, transport: &TransportConfig) -> Result<DMatrix<f64>> {
    let n = chain.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(x, y)| {
            w_distance(chain, &Density::dirac(chain, x), &Density::dirac(chain, y), transport).map(|r| r.upper)
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for (&(x, y), v) in pairs.iter().zip(values) {
        let v = v?;
        d[(x, y)] = v;
        d[(y, x)] = v;
    }
    Ok(d)
}

fn distances(chain: &MarkovTriple, cfg: &CheckConfig) -> Result<DMatrix<f64>> {
    match &cfg.pair_distances {
        Some(d) => Ok(d.clone()),
        None => pair_distances(chain, &cfg.transport),
    }
}

/// `π[Γ(P_tf)] ≤ e^{-2κt} π[Γf]`, and `|P_tf(x) - P_tf(y)| ≤ ‖f‖∞ d̂_W(x,y)/√growth(κ,t)`.
///
/// The second part uses the optimizer's upper value `d̂_W ≥ d_W`, which
/// enlarges the right side: a pass there is evidence, a failure is a genuine
/// violation.
pub fn check_gamma_decay(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("gamma_decay");
    let grid = t_grid(chain, &[0.0, 0.05, 0.1, 0.5, 1.0, 2.0]);
    let fs: Vec<DVector<f64>> = (0..cfg.samples).map(|_| normal_potential(chain, &mut rng)).collect();
    let mut cases = Vec::new();
    for f in &fs {
        for &t in &grid {
            cases.push(Case { f: to_vec(f), t: Some(t), ..Case::default() });
        }
    }
    let mut notes = Vec::new();
    match distances(chain, cfg) {
        Ok(d) => {
            let n = chain.len();
            for f in &fs {
                for &t in grid.iter().filter(|&&t| t > 0.0) {
                    for x in 0..n {
                        for y in x + 1..n {
                            cases.push(Case {
                                f: to_vec(f),
                                t: Some(t),
                                x: Some(x),
                                y: Some(y),
                                parameter: Some(d[(x, y)]),
                                variant: Some("lipschitz".into()),
                                ..Case::default()
                            });
                        }
                    }
                }
            }
        }
        Err(e) => notes.push(format!("Lipschitz part not run: {e}")),
    }
    let mut report = evaluate(chain, "gamma_decay", base_params(kappa, cfg), cases);
    report.notes.extend(notes);
    report
}

/// `h ≥ ⅓√(Q*λ₁)` and, for every cut, `π⁺(∂A) ≥ c π(A)(1-π(A))` under
/// non-negative curvature.
pub fn check_buser(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let params = base_params(kappa, cfg);
    if kappa < 0.0 {
        return CheckReport::skipped("buser", params, "not applicable: curvature is not certified non-negative");
    }
    let h = match cheeger(chain) {
        Ok(h) => h,
        Err(e) => return CheckReport::errored("buser", params, e.to_string()),
    };
    let mut cases = vec![Case { parameter: Some(h), variant: Some("cheeger".into()), ..Case::default() }];
    let mut variants = vec!["cut"];
    if kappa > 0.0 {
        variants.push("cut_positive");
    }
    for variant in variants {
        let probe = |mask: u64| Case { subset: Some(mask), variant: Some(variant.into()), ..Case::default() };
        let worst = minimize_over_cuts(chain, |cut| {
            checks::sides("buser", chain, &params, &probe(cut.mask)).map_or(f64::NEG_INFINITY, |(l, r)| r - l)
        });
        match worst {
            Ok((_, cut)) => cases.push(probe(cut.mask)),
            Err(e) => return CheckReport::errored("buser", params, e.to_string()),
        }
    }
    let mut report = evaluate(chain, "buser", params, cases);
    report.trials = 1 + (report.trials - 1) * ((1usize << (chain.len() - 1)) - 1);
    report
}

/// `H(ρ₁) - H(ρ₀) ≤ Ŵ√I(ρ₁) - (κ/2)Ŵ²` with the optimizer's upper value `Ŵ`.
///
/// The right side increases in `W` as long as `W ≤ √I/κ`, so for `κ > 0`
/// pairs outside that region are skipped.
pub fn check_hwi(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("hwi");
    let mut pairs = vec![(Density::uniform(chain), Density::uniform(chain))];
    let diracs = chain.len().min(cfg.w_samples);
    for x in 0..diracs {
        pairs.push((smoothed_dirac(chain, x, 1e-2), Density::uniform(chain)));
    }
    for _ in 0..cfg.w_samples {
        pairs.push((dirichlet_density(chain, 0.5, 1e-4, &mut rng), dirichlet_density(chain, 0.5, 1e-4, &mut rng)));
    }
    let distances: Vec<Result<f64>> =
        pairs.par_iter().map(|(a, b)| w_distance(chain, a, b, &cfg.transport).map(|r| r.upper)).collect();
    let mut cases = Vec::new();
    let mut notes = Vec::new();
    for ((rho0, rho1), w) in pairs.iter().zip(distances) {
        let w = match w {
            Ok(w) => w,
            Err(e) => {
                notes.push(format!("transport failed: {e}"));
                continue;
            }
        };
        if kappa > 0.0 {
            let info = chain.entropy_production(rho1).unwrap_or(0.0);
            if w > info.sqrt() / kappa {
                notes.push(format!("pair skipped outside the monotone region (W = {w:.4})"));
                continue;
            }
        }
        cases.push(Case { rho: to_vec(rho0.values()), rho1: to_vec(rho1.values()), parameter: Some(w), ..Case::default() });
    }
    let mut params = base_params(kappa, cfg);
    params.insert("steps".into(), cfg.transport.steps as f64);
    let mut report = evaluate(chain, "hwi", params, cases);
    report.notes.extend(notes);
    report
}

/// `λ₁ ≥ 1/(e D̂²)` under non-negative curvature; `D̂ ≥ D` only lowers the right side.
pub fn check_liyau(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut params = base_params(kappa, cfg);
    if kappa < 0.0 {
        return CheckReport::skipped("liyau", params, "not applicable: curvature is not certified non-negative");
    }
    params.insert("d_hat".into(), diameter_upper(chain));
    evaluate(chain, "liyau", params, vec![Case::default()])
}

/// `Var f ≤ 2tπΓf + D̂²‖f‖²∞/(4t)` for `κ ≥ 0`, and for any `κ`
/// `Var f ≤ ((1-e^{-2κt})/κ) πΓf + 2M‖f‖²∞ /(α² growth(κ,t))`
/// where `β(r) ≤ M e^{-αr}` is fitted on the concentration profile of `d̂_W`.
pub fn check_weak_poincare(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("weak_poincare");
    let d_hat = diameter_upper(chain);
    let mut params = base_params(kappa, cfg);
    params.insert("d_hat".into(), d_hat);
    let mut notes = Vec::new();
    let mut variants = Vec::new();
    if kappa >= 0.0 {
        variants.push("diameter");
    }
    let fit = distances(chain, cfg).and_then(|d| {
        let diam = d.max();
        let grid: Vec<f64> = (0..=40).map(|k| diam * k as f64 / 40.0).collect();
        concentration_profile(chain, &d, &grid).map(|p| fit_exponential(&p, diam))
    });
    match fit {
        Ok(fit) if fit.m_fixed > 0.0 => {
            params.insert("alpha".into(), fit.rate_fixed);
            params.insert("m".into(), fit.m_fixed);
            variants.push("concentration");
        }
        Ok(_) => notes.push("concentration profile vanishes; variant not run".to_string()),
        Err(e) => notes.push(format!("concentration variant not run: {e}")),
    }
    let n = chain.len();
    let mut fs: Vec<DVector<f64>> = (0..cfg.samples).map(|_| normal_potential(chain, &mut rng)).collect();
    fs.push(DVector::from_element(n, 1.0));
    let mut grid = t_grid(chain, &[0.05, 0.1, 0.5, 1.0, 2.0, 10.0]);
    grid.push(1e3);
    let mut cases = Vec::new();
    for f in &fs {
        for &t in &grid {
            for v in &variants {
                cases.push(Case { f: to_vec(f), t: Some(t), variant: Some(v.to_string()), ..Case::default() });
            }
        }
    }
    let mut report = evaluate(chain, "weak_poincare", params, cases);
    report.notes.extend(notes);
    report
}

/// Four inequalities used on the way to the diameter bounds, each on sampled
/// positive `f`:
/// `π[f²] ≤ π[Γ(f²,log f²)]/(4δ) + e^{D̂²(δ+κ⁻/2)} π[|f|]²`,
/// `Γ(f) ≤ ¼Γ(f², log f²)` pointwise,
/// `Ent(f²) ≤ δD̂² π[Γ(f²,log f²)] + π[f² 1_{f²>π f²}]/(4δ)` when `κ ≥ 0`, and
/// `π[f² 1_{f²≥A²}] ≤ (A/(A-1))² Var f` for `π[f²] = 1`.
pub fn check_nontight(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut rng = cfg.rng("nontight");
    let d_hat = diameter_upper(chain);
    let mut params = base_params(kappa, cfg);
    params.insert("d_hat".into(), d_hat);
    let n = chain.len();
    let mut fs: Vec<DVector<f64>> = (0..cfg.samples).map(|_| positive_function(chain, &mut rng)).collect();
    fs.push(DVector::from_element(n, 1.0));
    for x in 0..n {
        fs.push(DVector::from_fn(n, |y, _| if y == x { 2.0 } else { 1.0 }));
    }
    let scale = 1.0 / (d_hat * d_hat);
    let deltas = [0.05, 0.1, 0.5, 1.0, 5.0];
    let mut cases = Vec::new();
    for f in &fs {
        for &d in &deltas {
            cases.push(Case { f: to_vec(f), parameter: Some(d * scale), ..Case::default() });
            if kappa >= 0.0 {
                cases.push(Case { f: to_vec(f), parameter: Some(d), variant: Some("entropy_bound".into()), ..Case::default() });
            }
        }
        for a in [1.5, 2.0, 4.0] {
            cases.push(Case { f: to_vec(f), parameter: Some(a), variant: Some("tail".into()), ..Case::default() });
        }
        for x in 0..n {
            cases.push(Case { f: to_vec(f), x: Some(x), variant: Some("gamma_comparison".into()), ..Case::default() });
        }
    }
    evaluate(chain, "nontight", params, cases)
}

/// `d̂_W(x,y) ≤ 2√((-log π(x) - log π(y))/κ)` for `κ > 0`; `d̂_W ≥ d_W` sits on
/// the left, so a pass certifies the true inequality.
pub fn check_bonnet_myers(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let params = base_params(kappa, cfg);
    if !(kappa > 0.0) {
        return CheckReport::skipped("bonnet_myers", params, Error::NonPositiveKappa(kappa).to_string());
    }
    let d = match distances(chain, cfg) {
        Ok(d) => d,
        Err(e) => return CheckReport::errored("bonnet_myers", params, e.to_string()),
    };
    let n = chain.len();
    let cases = (0..n)
        .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
        .map(|(x, y)| Case { x: Some(x), y: Some(y), parameter: Some(d[(x, y)]), ..Case::default() })
        .collect();
    evaluate(chain, "bonnet_myers", params, cases)
}

/// Largest `λ` with `H(P_tδ_x) ≤ e^{-2λt} H(δ_x)` for every state on the grid.
pub fn entropy_decay_rate(chain: &MarkovTriple, grid: &[f64]) -> Result<f64> {
    let mut rate = f64::INFINITY;
    for x in 0..chain.len() {
        let rho = Density::dirac(chain, x);
        let h0 = chain.entropy(&rho);
        for &t in grid {
            let ht = chain.entropy(&chain.evolve(t, &rho)?);
            if ht > 0.0 && h0 > 0.0 {
                rate = rate.min(-(ht / h0).ln() / (2.0 * t));
            }
        }
    }
    Ok(rate)
}

/// `τ(ε) ≤ D̂²/4 + log(1/ε)/λ` with `λ` the observed entropy decay rate from
/// point masses, and `H(P_tρ) ≤ D̂²/(4t)` on sampled densities.
pub fn check_mixing(chain: &MarkovTriple, kappa: f64, cfg: &CheckConfig) -> CheckReport {
    let mut params = base_params(kappa, cfg);
    if kappa < 0.0 {
        return CheckReport::skipped("mixing", params, "not applicable: curvature is not certified non-negative");
    }
    let d_hat = diameter_upper(chain);
    params.insert("d_hat".into(), d_hat);
    let lambda = match entropy_decay_rate(chain, &t_grid(chain, &[0.1, 0.25, 0.5, 1.0, 2.0, 4.0])) {
        Ok(l) => l,
        Err(e) => return CheckReport::errored("mixing", params, e.to_string()),
    };
    params.insert("lambda_check".into(), lambda);
    let mut cases: Vec<Case> = [0.25, 0.1, 0.01]
        .iter()
        .map(|&eps| Case { parameter: Some(eps), variant: Some("tau".into()), ..Case::default() })
        .collect();
    let mut rng = cfg.rng("mixing");
    let mut densities: Vec<Density> = (0..chain.len()).map(|x| Density::dirac(chain, x)).collect();
    densities.extend((0..cfg.samples).map(|_| dirichlet_density(chain, 0.5, 0.0, &mut rng)));
    let t0 = d_hat * d_hat / 4.0;
    for rho in &densities {
        for t in [0.25 * t0, 0.5 * t0, t0, 2.0 * t0] {
            cases.push(Case { rho: to_vec(rho.values()), t: Some(t), variant: Some("evi".into()), ..Case::default() });
        }
    }
    evaluate(chain, "mixing", params, cases)
}

/// Estimates the curvature, certifies it by sampling and runs every check
/// with the certified value.
pub fn run_suite(chain: &MarkovTriple, cfg: &VerifierConfig) -> SuiteResult {
    let wanted = |id: &str| cfg.only.as_ref().is_none_or(|ids| ids.iter().any(|w| w == id));
    let estimate: Result<CurvatureEstimate> = estimate_ricci(chain, &cfg.curvature);
    let mut reports = Vec::new();
    let (kappa_estimate, kappa_sampled) = match &estimate {
        Ok(est) => {
            let ricci = verify_ricci(chain, est.kappa, cfg.ricci_samples, cfg.checks.seed);
            let sampled = ricci.worst_slack.map_or(est.kappa, |s| est.kappa + s);
            if wanted("ricci") {
                reports.push(ricci);
            }
            (Some(est.kappa), Some(sampled))
        }
        Err(e) => {
            if wanted("ricci") {
                reports.push(CheckReport::errored("ricci", BTreeMap::new(), e.to_string()));
            }
            (None, None)
        }
    };
    let certified = match (kappa_estimate, kappa_sampled) {
        (Some(a), Some(b)) => a.min(b),
        _ => f64::NEG_INFINITY,
    };
    let nonnegative = certified >= -KAPPA_MARGIN;
    let kappa = if nonnegative { (certified - KAPPA_MARGIN).max(0.0) } else { certified - KAPPA_MARGIN };
    if !kappa.is_finite() {
        for id in CHECK_IDS.iter().skip(1).filter(|id| wanted(id)) {
            reports.push(CheckReport::errored(id, BTreeMap::new(), "no curvature estimate"));
        }
        return SuiteResult { estimate: estimate.ok(), kappa_sampled, kappa, nonnegative, reports };
    }

    let mut checks = cfg.checks.clone();
    let needs_pairs = ["gamma_decay", "weak_poincare", "bonnet_myers"].iter().any(|id| wanted(id));
    let mut pair_note = None;
    if checks.pair_distances.is_none() && needs_pairs && chain.len() <= EXACT_LIMIT {
        match pair_distances(chain, &checks.transport) {
            Ok(d) => checks.pair_distances = Some(d),
            Err(e) => pair_note = Some(format!("pair distances failed: {e}")),
        }
    }
    type Check = fn(&MarkovTriple, f64, &CheckConfig) -> CheckReport;
    let table: [(&str, Check); 13] = [
        ("gradient_estimate", check_gradient_estimate),
        ("pointwise_gradient", check_pointwise_gradient),
        ("reverse_poincare", check_reverse_poincare),
        ("l1_smoothing", check_l1_smoothing),
        ("gamma_decay", check_gamma_decay),
        ("buser", check_buser),
        ("l1_poincare", |c, k, cfg| l1_poincare_check(c, k, cfg.samples, cfg.rng("l1_poincare").gen())),
        ("hwi", check_hwi),
        ("liyau", check_liyau),
        ("weak_poincare", check_weak_poincare),
        ("nontight", check_nontight),
        ("bonnet_myers", check_bonnet_myers),
        ("mixing", check_mixing),
    ];
    let selected: Vec<&(&str, Check)> = table.iter().filter(|(id, _)| wanted(id)).collect();
    let mut results: Vec<CheckReport> = selected.par_iter().map(|(_, check)| check(chain, kappa, &checks)).collect();
    if let Some(note) = pair_note {
        for r in &mut results {
            r.notes.push(note.clone());
        }
    }
    reports.extend(results);
    SuiteResult { estimate: estimate.ok(), kappa_sampled, kappa, nonnegative, reports }
}

/// All check reports for `chain`; see [`run_suite`].
pub fn run_all_checks(chain: &MarkovTriple, cfg: &VerifierConfig) -> Vec<CheckReport> {
    run_suite(chain, cfg).reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilySpec};
    use crate::logmean::theta;
    use nalgebra::DMatrix;

    fn quick() -> CheckConfig {
        CheckConfig { samples: 8, w_samples: 2, ..CheckConfig::default() }
    }

    fn dumbbell() -> MarkovTriple {
        let mut q = DMatrix::zeros(6, 6);
        for (a, b) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)] {
            q[(a, b)] = 1.0;
            q[(b, a)] = 1.0;
        }
        MarkovTriple::from_rates(q, None).unwrap()
    }

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn equality_cases_have_exactly_zero_slack() {
        let chain = make_family(&FamilySpec::torus(5, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = dirichlet_density(&chain, 0.5, 1e-4, &mut rng);
        let psi = normal_potential(&chain, &mut rng);
        let constant = DVector::from_element(5, 0.7);
        let p = params(&[("kappa", 0.3), ("d_hat", 2.0)]);
        let zero = |id: &str, case: Case| {
            let (lhs, rhs) = checks::sides(id, &chain, &p, &case).unwrap();
            assert_eq!(rhs - lhs, 0.0, "{id} {case:?}");
        };
        let with_rho = Case { rho: to_vec(rho.values()), f: to_vec(&psi), t: Some(0.0), ..Case::default() };
        zero("gradient_estimate", with_rho.clone());
        zero("reverse_poincare", with_rho);
        zero("gamma_decay", Case { f: to_vec(&psi), t: Some(0.0), ..Case::default() });
        zero("l1_smoothing", Case { f: to_vec(&constant), t: Some(0.0), ..Case::default() });
        zero("pointwise_gradient", Case { f: to_vec(&constant), t: Some(0.0), x: Some(0), y: Some(1), ..Case::default() });
        zero("hwi", Case { rho: to_vec(rho.values()), rho1: to_vec(rho.values()), parameter: Some(0.0), ..Case::default() });
        zero("nontight", Case { f: to_vec(&constant), parameter: Some(2.0), variant: Some("tail".into()), ..Case::default() });
    }

    #[test]
    fn replay_reproduces_worst_slack() {
        let chain = make_family(&FamilySpec::zero_range(2, 3)).unwrap();
        let cfg = quick();
        let kappa = 0.4;
        let reports = [
            check_gradient_estimate(&chain, kappa, &cfg),
            check_pointwise_gradient(&chain, kappa, &cfg),
            check_reverse_poincare(&chain, kappa, &cfg),
            check_l1_smoothing(&chain, kappa, &cfg),
            check_buser(&chain, kappa, &cfg),
            check_liyau(&chain, kappa, &cfg),
            check_nontight(&chain, kappa, &cfg),
            check_mixing(&chain, kappa, &cfg),
        ];
        for r in &reports {
            assert!(r.passed, "{r:?}");
            let slack = replay(&chain, r).unwrap();
            assert!((slack - r.worst_slack.unwrap()).abs() <= 1e-12, "{}", r.check_id);
        }
    }

    #[test]
    fn inflated_curvature_is_rejected() {
        let chain = make_family(&FamilySpec::torus(4, 1)).unwrap();
        let est = estimate_ricci(&chain, &CurvatureConfig::default()).unwrap();
        assert!(check_gradient_estimate(&chain, est.kappa - KAPPA_MARGIN, &quick()).passed);
        assert!(!check_gradient_estimate(&chain, est.kappa + 0.5, &quick()).passed);
    }

    #[test]
    fn substituted_bounds_enter_on_the_documented_side() {
        let chain = make_family(&FamilySpec::torus(6, 1)).unwrap();
        let slack = |id: &str, p: &BTreeMap<String, f64>, case: &Case| {
            let (l, r) = checks::sides(id, &chain, p, case).unwrap();
            r - l
        };
        // Li–Yau: a larger D̂ only helps
        let small = slack("liyau", &params(&[("d_hat", 2.0)]), &Case::default());
        let large = slack("liyau", &params(&[("d_hat", 3.0)]), &Case::default());
        assert!(large > small);
        // Bonnet–Myers: d̂_W sits on the left, a larger value only hurts
        let p = params(&[("kappa", 0.5)]);
        let bm = |d: f64| slack("bonnet_myers", &p, &Case { x: Some(0), y: Some(3), parameter: Some(d), ..Case::default() });
        assert!(bm(3.0) < bm(2.0));
        // Lipschitz bound: d̂_W on the right, a larger value only helps
        let psi = DVector::from_fn(6, |x, _| x as f64);
        let lip = |d: f64| {
            let case = Case {
                f: to_vec(&psi),
                t: Some(0.5),
                x: Some(0),
                y: Some(3),
                parameter: Some(d),
                variant: Some("lipschitz".into()),
                ..Case::default()
            };
            slack("gamma_decay", &p, &case)
        };
        assert!(lip(3.0) > lip(2.0));
        // HWI with κ ≤ 0: the right side increases with W
        let rho0 = Density::normalized(&chain, DVector::from_fn(6, |x, _| 1.0 + x as f64)).unwrap();
        let rho1 = Density::normalized(&chain, DVector::from_fn(6, |x, _| 6.0 - x as f64)).unwrap();
        let hwi = |w: f64| {
            let case = Case { rho: to_vec(rho0.values()), rho1: to_vec(rho1.values()), parameter: Some(w), ..Case::default() };
            slack("hwi", &params(&[("kappa", -0.2)]), &case)
        };
        assert!(hwi(1.2) > hwi(1.0));
    }

    #[test]
    fn buser_on_small_chains() {
        let two = make_family(&FamilySpec::two_point(1.0, 1.0)).unwrap();
        let r = check_buser(&two, 0.0, &quick());
        assert!(r.passed && !r.skipped);
        // h = 2 against ⅓√2; the binding case is the cut {0}: ½ against ⅓√2 · ¼
        let cheeger = Case { parameter: Some(2.0), variant: Some("cheeger".into()), ..Case::default() };
        let (l, rh) = checks::sides("buser", &two, &r.params, &cheeger).unwrap();
        assert!((rh - l - (2.0 - 2f64.sqrt() / 3.0)).abs() < 1e-12);
        assert!((r.worst_slack.unwrap() - (0.5 - 2f64.sqrt() / 12.0)).abs() < 1e-12);
        let k5 = make_family(&FamilySpec::complete(5)).unwrap();
        assert!(check_buser(&k5, 0.5, &quick()).passed);
        for l in 3..=8 {
            let torus = make_family(&FamilySpec::torus(l, 1)).unwrap();
            assert!(check_buser(&torus, 0.0, &quick()).passed);
        }
        assert!(check_buser(&two, -0.1, &quick()).skipped);
    }

    #[test]
    fn bonnet_myers_on_positively_curved_chains() {
        for l in 3..=5 {
            let chain = make_family(&FamilySpec::complete(l)).unwrap();
            let r = check_bonnet_myers(&chain, 0.5, &quick());
            assert!(r.passed && !r.skipped, "{r:?}");
        }
        let cube = make_family(&FamilySpec::hypercube(3)).unwrap();
        assert!((-cube.pi_star().ln() - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!(check_bonnet_myers(&cube, 1.0, &quick()).passed);
        let r = check_bonnet_myers(&cube, 0.0, &quick());
        assert!(r.skipped && r.notes[0].contains("positive"));
    }

    #[test]
    fn liyau_and_mixing_on_tori() {
        for l in 3..=10 {
            let chain = make_family(&FamilySpec::torus(l, 1)).unwrap();
            assert!(check_liyau(&chain, 0.0, &quick()).passed);
        }
        let chain = make_family(&FamilySpec::torus(6, 1)).unwrap();
        let r = check_mixing(&chain, 0.0, &quick());
        assert!(r.passed, "{r:?}");
        assert!(r.params["lambda_check"] > 0.0);
    }

    #[test]
    fn nontight_examples() {
        let chain = make_family(&FamilySpec::torus(5, 1)).unwrap();
        let p = params(&[("kappa", 0.0), ("d_hat", 3.0)]);
        let bump = DVector::from_fn(5, |x, _| if x == 2 { 2.0 } else { 1.0 });
        let case = Case { f: to_vec(&bump), parameter: Some(2.0), variant: Some("tail".into()), ..Case::default() };
        let (l, r) = checks::sides("nontight", &chain, &p, &case).unwrap();
        assert!(l <= r);
        // Γ(f) and ¼Γ(f², log f²) agree to first order near constants
        let h = DVector::from_fn(5, |x, _| (x as f64 * 1.3).sin());
        let f = h.map(|v| 1.0 + 1e-4 * v);
        for x in 0..5 {
            let case = Case { f: to_vec(&f), x: Some(x), variant: Some("gamma_comparison".into()), ..Case::default() };
            let (l, r) = checks::sides("nontight", &chain, &p, &case).unwrap();
            assert!(l <= r && (r / l - 1.0).abs() < 1e-6);
        }
        assert!(check_nontight(&chain, 0.0, &quick()).passed);
        // the sup-norm edge form uses the logarithmic mean of the two rates
        assert_eq!(theta(1.0, 1.0), 1.0);
    }

    #[test]
    fn negatively_curved_chain_skips_what_needs_nonnegativity() {
        let cfg = VerifierConfig { checks: quick(), ricci_samples: 40, ..VerifierConfig::default() };
        let result = run_suite(&dumbbell(), &cfg);
        assert!(!result.nonnegative && result.kappa < 0.0);
        assert!(result.passed(), "{:?}", result.reports);
        for id in ["buser", "liyau", "bonnet_myers", "mixing"] {
            let r = result.reports.iter().find(|r| r.check_id == id).unwrap();
            assert!(r.skipped, "{id}");
        }
        let grad = result.reports.iter().find(|r| r.check_id == "gradient_estimate").unwrap();
        assert!(!grad.skipped && grad.trials > 0);
    }

    #[test]
    fn suite_is_deterministic() {
        let chain = make_family(&FamilySpec::torus(4, 1)).unwrap();
        let cfg = VerifierConfig { checks: quick(), ricci_samples: 20, ..VerifierConfig::default() };
        let a = run_suite(&chain, &cfg);
        let b = run_suite(&chain, &cfg);
        assert_eq!(a.reports, b.reports);
        assert!(a.passed());
        assert_eq!(a.reports.len(), CHECK_IDS.len());
        let only = VerifierConfig { only: Some(vec!["liyau".into()]), ..cfg };
        let c = run_suite(&chain, &only);
        assert_eq!(c.reports.len(), 1);
    }
}
