//! Upper and lower bounds for the transport distance `W`.
//!
//! Paths are piecewise linear in `ρ`. On each segment the exact length
//! `ℓ = ∫₀¹ √(‖ρ'‖²_{ρ(s)}) ds` is integrated by Gauss–Legendre, with a
//! graded substitution `s = u²` on the first and last segment so that Dirac
//! endpoints need no regularization. Since every feasible curve has length at
//! least `W`, `Σ ℓ_k` is an upper bound up to quadrature error.
//!
//! The optimizer minimizes the energy `N Σ ℓ_k²` over the logits of the
//! interior nodes (energy minimizers have equal segment lengths, which keeps
//! the nodes evenly spread). Refinement splits every segment at its arc-length
//! midpoint, so the bound can only improve as `N` doubles.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{edge_conductances, GroundedLaplacian};
use crate::chain::{Density, MarkovTriple, Potential};
use crate::error::{Error, Result};
use crate::logmean::log_mean_unchecked;
use crate::optimize::{lbfgs, LbfgsConfig};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone)]
pub struct TransportConfig {
    /// Number of path segments at the finest level.
    pub steps: usize,
    /// Gauss–Legendre points on segments touching an endpoint.
    pub boundary_points: usize,
    /// Gauss–Legendre points on the other segments.
    pub interior_points: usize,
    /// Exponent `p` of the substitution `s = u^p` near the endpoints.
    pub grading_power: i32,
    pub optimizer: LbfgsConfig,
    /// Seed for the random witnesses of the lower bound.
    pub seed: u64,
    /// Weight of the uniform density mixed into the starting paths.
    pub start_mixing: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            steps: 32,
            boundary_points: 48,
            interior_points: 10,
            grading_power: 2,
            optimizer: LbfgsConfig { max_iter: 400, f_tol: 1e-11, g_tol: 1e-12, patience: 3, ..Default::default() },
            seed: 42,
            start_mixing: 1e-3,
        }
    }
}

impl TransportConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }
}

/// A discretized curve `(ρ_k, ψ_k)` with `ρ_{k+1} - ρ_k = Δt_k L_ρ̂ ψ_k` at
/// the interval midpoint.
#[derive(Debug, Clone, Serialize)]
pub struct ActionPath {
    pub times: Vec<f64>,
    pub densities: Vec<Density>,
    pub potentials: Vec<Potential>,
    /// Exact length of each linear segment.
    pub lengths: Vec<f64>,
    /// `Σ_k ℓ_k² / Δt_k`; equals the squared length for a constant-speed path.
    pub action: f64,
}

impl ActionPath {
    /// Largest residual `‖(ρ_{k+1}-ρ_k)/Δt - L_ρ̂ ψ_k‖_∞` at interval midpoints.
    pub fn continuity_residual(&self, chain: &MarkovTriple) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.potentials.len() {
            let dt = self.times[k + 1] - self.times[k];
            if dt <= 0.0 {
                continue;
            }
            let a = self.densities[k].values();
            let c = self.densities[k + 1].values();
            let mid = Density::renormalized_unchecked(chain, (a + c) * 0.5);
            let lhs = (c - a) / dt;
            let rhs = super::weighted_generator(chain, &mid, &self.potentials[k]).expect("dimensions match");
            worst = worst.max((lhs - rhs).amax());
        }
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceResult {
    pub upper: f64,
    pub lower: f64,
    /// `(N, upper)` for every level of the refinement.
    pub refinement: Vec<(usize, f64)>,
    pub witness_path: ActionPath,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Grading {
    None,
    Start,
    End,
}

struct Rules {
    boundary: Vec<(f64, f64)>,
    interior: Vec<(f64, f64)>,
    power: i32,
}

impl Rules {
    fn new(cfg: &TransportConfig) -> Self {
        Self {
            boundary: gauss_legendre(cfg.boundary_points),
            interior: gauss_legendre(cfg.interior_points),
            power: cfg.grading_power,
        }
    }

    /// Quadrature nodes `(s, weight)` on `[0, 1]` for the given grading.
    fn nodes(&self, grading: Grading) -> Vec<(f64, f64)> {
        let p = self.power;
        let jac = |u: f64, w: f64| p as f64 * u.powi(p - 1) * w;
        match grading {
            Grading::None => self.interior.clone(),
            Grading::Start => self.boundary.iter().map(|&(u, w)| (u.powi(p), jac(u, w))).collect(),
            Grading::End => self.boundary.iter().map(|&(u, w)| (1.0 - u.powi(p), jac(u, w))).collect(),
        }
    }
}

/// Length of the linear segment `a → c`, optionally with its gradient.
/// States outside `active` carry no mass anywhere on the segment.
fn segment_length(
    chain: &MarkovTriple,
    a: &DVector<f64>,
    c: &DVector<f64>,
    nodes: &[(f64, f64)],
    active: Option<&[bool]>,
    mut grad: Option<(&mut DVector<f64>, &mut DVector<f64>)>,
) -> f64 {
    let pi = chain.pi();
    let velocity = c - a;
    if velocity.amax() == 0.0 {
        return 0.0;
    }
    let b = velocity.component_mul(pi);
    let mut length = 0.0;
    for &(s, w) in nodes {
        let rho = a * (1.0 - s) + c * s;
        let weights = edge_conductances(chain, &rho);
        // states without mass on the segment do not take part in the flow
        let support: Option<Vec<bool>> = rho
            .iter()
            .any(|&v| v <= 0.0)
            .then(|| (0..rho.len()).map(|x| rho[x] > 0.0 && active.is_none_or(|m| m[x])).collect());
        let Some(lap) = GroundedLaplacian::on(chain, &weights, support.as_deref().or(active)) else {
            return f64::INFINITY;
        };
        let psi = lap.solve(&b);
        let f = b.dot(&psi);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        if f <= 0.0 {
            continue;
        }
        let speed = f.sqrt();
        length += w * speed;
        if let Some((ga, gc)) = grad.as_mut() {
            // dF = 2 ψ·db - Σ_e (ψ_x - ψ_y)² dw_e
            let scale = w / (2.0 * speed);
            for e in chain.edges() {
                if rho[e.x] == 0.0 || rho[e.y] == 0.0 {
                    continue;
                }
                let diff = psi[e.x] - psi[e.y];
                let lm = log_mean_unchecked(rho[e.x], rho[e.y]);
                let common = -scale * diff * diff * e.conductance;
                let gx = common * lm.d_first;
                let gy = common * lm.d_second;
                ga[e.x] += (1.0 - s) * gx;
                ga[e.y] += (1.0 - s) * gy;
                gc[e.x] += s * gx;
                gc[e.y] += s * gy;
            }
            for x in 0..a.len() {
                let g = scale * 2.0 * pi[x] * psi[x];
                ga[x] -= g;
                gc[x] += g;
            }
        }
    }
    length
}

fn grading(k: usize, segments: usize) -> Grading {
    if k == 0 {
        Grading::Start
    } else if k + 1 == segments {
        Grading::End
    } else {
        Grading::None
    }
}

/// Paths between two fixed endpoints whose interior nodes live on the face
/// of densities supported in `active`.
struct PathProblem<'a> {
    chain: &'a MarkovTriple,
    rho0: DVector<f64>,
    rho1: DVector<f64>,
    active: Vec<bool>,
    free: Vec<usize>,
    /// Rules used inside the optimizer.
    fast: Rules,
    /// Finer rules used for every reported length.
    exact: Rules,
}

impl<'a> PathProblem<'a> {
    fn new(chain: &'a MarkovTriple, rho0: &DVector<f64>, rho1: &DVector<f64>, active: Vec<bool>, cfg: &TransportConfig) -> Self {
        let free = (0..chain.len()).filter(|&x| active[x]).collect();
        let mut fine = cfg.clone();
        fine.boundary_points *= 4;
        fine.interior_points *= 4;
        Self {
            chain,
            rho0: rho0.clone(),
            rho1: rho1.clone(),
            active,
            free,
            fast: Rules::new(cfg),
            exact: Rules::new(&fine),
        }
    }

    fn mask(&self) -> Option<&[bool]> {
        if self.free.len() == self.chain.len() {
            None
        } else {
            Some(&self.active)
        }
    }

    /// `ρ = e^z / Σ π e^z` on the active states, zero elsewhere.
    fn node_from_logits(&self, z: &[f64]) -> DVector<f64> {
        let pi = self.chain.pi();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut rho = DVector::zeros(self.chain.len());
        let mut mass = 0.0;
        for (&x, &zi) in self.free.iter().zip(z) {
            rho[x] = (zi - m).exp();
            mass += pi[x] * rho[x];
        }
        rho / mass
    }

    fn nodes_from_logits(&self, z: &[f64]) -> Vec<DVector<f64>> {
        let m = self.free.len();
        let inner = z.len() / m;
        let mut nodes = Vec::with_capacity(inner + 2);
        nodes.push(self.rho0.clone());
        for k in 0..inner {
            nodes.push(self.node_from_logits(&z[k * m..(k + 1) * m]));
        }
        nodes.push(self.rho1.clone());
        nodes
    }

    fn lengths_with(&self, rules: &Rules, nodes: &[DVector<f64>]) -> Vec<f64> {
        let segments = nodes.len() - 1;
        (0..segments)
            .map(|k| {
                let q = rules.nodes(grading(k, segments));
                segment_length(self.chain, &nodes[k], &nodes[k + 1], &q, self.mask(), None)
            })
            .collect()
    }

    fn lengths(&self, nodes: &[DVector<f64>]) -> Vec<f64> {
        self.lengths_with(&self.exact, nodes)
    }

    /// `N Σ ℓ_k²` and its gradient with respect to the interior logits.
    fn energy(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.chain.len();
        let m = self.free.len();
        let nodes = self.nodes_from_logits(z);
        let segments = nodes.len() - 1;
        let mut node_grad = vec![DVector::zeros(n); nodes.len()];
        let mut energy = 0.0;
        for k in 0..segments {
            let q = self.fast.nodes(grading(k, segments));
            let mut ga = DVector::zeros(n);
            let mut gc = DVector::zeros(n);
            let len = segment_length(self.chain, &nodes[k], &nodes[k + 1], &q, self.mask(), Some((&mut ga, &mut gc)));
            if !len.is_finite() {
                return f64::INFINITY;
            }
            energy += len * len;
            node_grad[k] += ga * (2.0 * len);
            node_grad[k + 1] += gc * (2.0 * len);
        }
        let scale = segments as f64;
        let pi = self.chain.pi();
        for k in 1..segments {
            let rho = &nodes[k];
            let g = &node_grad[k];
            // ∂ρ_u/∂z_v = δ_uv ρ_u - ρ_u ρ_v π_v
            let mean: f64 = self.free.iter().map(|&x| g[x] * rho[x]).sum();
            for (i, &x) in self.free.iter().enumerate() {
                grad[(k - 1) * m + i] = scale * rho[x] * (g[x] - pi[x] * mean);
            }
        }
        scale * energy
    }

    fn optimize(&self, nodes: &[DVector<f64>], cfg: &LbfgsConfig) -> Vec<DVector<f64>> {
        let z0: Vec<f64> = nodes[1..nodes.len() - 1]
            .iter()
            .flat_map(|v| self.free.iter().map(|&x| v[x].max(1e-300).ln()).collect::<Vec<_>>())
            .collect();
        if z0.is_empty() {
            return nodes.to_vec();
        }
        let result = lbfgs(|z, g| self.energy(z, g), z0, cfg);
        self.nodes_from_logits(&result.x)
    }

    /// Splits every segment at its arc-length midpoint.
    fn refine(&self, nodes: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let segments = nodes.len() - 1;
        let lengths = self.lengths_with(&self.fast, nodes);
        let mut out = Vec::with_capacity(2 * segments + 1);
        for k in 0..segments {
            let (a, c) = (&nodes[k], &nodes[k + 1]);
            out.push(a.clone());
            let g = grading(k, segments);
            let half = 0.5 * lengths[k];
            // arc length from a to a + σ(c - a), measured from whichever end is singular
            let partial = |sigma: f64| -> f64 {
                let m = a * (1.0 - sigma) + c * sigma;
                match g {
                    Grading::End => {
                        let q = self.fast.nodes(Grading::End);
                        lengths[k] - segment_length(self.chain, &m, c, &q, self.mask(), None)
                    }
                    _ => {
                        let q = self.fast.nodes(g);
                        segment_length(self.chain, a, &m, &q, self.mask(), None)
                    }
                }
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if partial(mid) < half {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let sigma = 0.5 * (lo + hi);
            out.push(a * (1.0 - sigma) + c * sigma);
        }
        out.push(nodes[segments].clone());
        out
    }

    fn start_paths(&self, segments: usize, eta: f64) -> Vec<Vec<DVector<f64>>> {
        let chain = self.chain;
        let (rho0, rho1) = (&self.rho0, &self.rho1);
        // mix with the uniform density on the active face and renormalize
        let face = |v: DVector<f64>| -> DVector<f64> {
            let mut out = DVector::zeros(v.len());
            for &x in &self.free {
                out[x] = (1.0 - eta) * v[x].max(0.0) + eta;
            }
            let mass = chain.mean(&out);
            out / mass
        };
        let linear: Vec<DVector<f64>> = (0..=segments)
            .map(|k| {
                let t = k as f64 / segments as f64;
                match k {
                    0 => rho0.clone(),
                    k if k == segments => rho1.clone(),
                    _ => face(rho0 * (1.0 - t) + rho1 * t),
                }
            })
            .collect();
        let gap = chain.spectral_gap().max(1e-12);
        let tau = 0.25 / gap;
        let heat0 = chain.heat_semigroup(tau, rho0).expect("non-negative time");
        let heat1 = chain.heat_semigroup(tau, rho1).expect("non-negative time");
        let middle = (heat0 + heat1) * 0.5;
        let through_middle: Vec<DVector<f64>> = (0..=segments)
            .map(|k| {
                let t = k as f64 / segments as f64;
                match k {
                    0 => rho0.clone(),
                    k if k == segments => rho1.clone(),
                    _ if t <= 0.5 => face(rho0 * (1.0 - 2.0 * t) + &middle * (2.0 * t)),
                    _ => face(&middle * (2.0 - 2.0 * t) + rho1 * (2.0 * t - 1.0)),
                }
            })
            .collect();
        vec![linear, through_middle]
    }
}

fn levels(steps: usize) -> Vec<usize> {
    let mut out = vec![steps];
    let mut cur = steps;
    while cur.is_multiple_of(2) && cur / 2 >= 4 {
        cur /= 2;
        out.push(cur);
    }
    out.reverse();
    out
}

/// Candidate faces for the interior nodes: the whole simplex, and the face
/// spanned by the endpoint supports when it is connected.
fn candidate_faces(chain: &MarkovTriple, rho0: &DVector<f64>, rho1: &DVector<f64>) -> Vec<Vec<bool>> {
    let n = chain.len();
    let mut faces = vec![vec![true; n]];
    let union: Vec<bool> = (0..n).map(|x| rho0[x] > 0.0 || rho1[x] > 0.0).collect();
    let size = union.iter().filter(|&&v| v).count();
    if size < n && size >= 2 {
        // connectivity of the induced subgraph
        let mut seen = vec![false; n];
        let first = union.iter().position(|&v| v).expect("non-empty");
        let mut stack = vec![first];
        seen[first] = true;
        while let Some(x) = stack.pop() {
            for e in chain.edges() {
                let y = if e.x == x { e.y } else if e.y == x { e.x } else { continue };
                if union[y] && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        if seen.iter().filter(|&&v| v).count() == size {
            faces.push(union);
        }
    }
    faces
}

fn build_path(chain: &MarkovTriple, nodes: &[DVector<f64>], lengths: &[f64]) -> Result<ActionPath> {
    let total: f64 = lengths.iter().sum();
    let segments = lengths.len();
    let mut times = Vec::with_capacity(segments + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for (k, len) in lengths.iter().enumerate() {
        acc += len;
        times.push(if total > 0.0 { acc / total } else { (k + 1) as f64 / segments as f64 });
    }
    *times.last_mut().unwrap() = 1.0;
    let densities: Vec<Density> = nodes.iter().map(|v| Density::renormalized_unchecked(chain, v.clone())).collect();
    let mut potentials = Vec::with_capacity(segments);
    let mut action = 0.0;
    for k in 0..segments {
        let dt = times[k + 1] - times[k];
        if dt <= 0.0 || lengths[k] == 0.0 {
            potentials.push(Potential::zeros(chain.len()));
            continue;
        }
        let mid = (&nodes[k] + &nodes[k + 1]) * 0.5;
        let mut s = (&nodes[k + 1] - &nodes[k]) / dt;
        // remove rounding drift from the mean before solving
        let drift = chain.mean(&s);
        s.add_scalar_mut(-drift);
        let active: Vec<bool> = mid.iter().map(|&v| v > 0.0).collect();
        let weights = edge_conductances(chain, &mid);
        let lap = GroundedLaplacian::on(chain, &weights, Some(&active)).ok_or(Error::SingularWeights)?;
        let psi = lap.solve(&(-s.component_mul(chain.pi())));
        potentials.push(Potential(psi));
        action += lengths[k] * lengths[k] / dt;
    }
    Ok(ActionPath { times, densities, potentials, lengths: lengths.to_vec(), action })
}

/// Refines one face from the best starting path up to `cfg.steps` segments.
fn solve_on_face(problem: &PathProblem, cfg: &TransportConfig, levels: &[usize]) -> (Vec<(usize, f64)>, Vec<DVector<f64>>, Vec<f64>) {
    let starts = problem.start_paths(levels[0], cfg.start_mixing);
    let (mut nodes, mut lengths) = starts
        .iter()
        .map(|start| {
            let nodes = problem.optimize(start, &cfg.optimizer);
            let lengths = problem.lengths(&nodes);
            (nodes, lengths)
        })
        .min_by(|a, b| a.1.iter().sum::<f64>().total_cmp(&b.1.iter().sum::<f64>()))
        .expect("at least one start");
    let mut refinement = vec![(levels[0], lengths.iter().sum::<f64>())];
    for &level in &levels[1..] {
        let split = problem.refine(&nodes);
        let split_lengths = problem.lengths(&split);
        let optimized = problem.optimize(&split, &cfg.optimizer);
        let opt_lengths = problem.lengths(&optimized);
        (nodes, lengths) = if opt_lengths.iter().sum::<f64>() <= split_lengths.iter().sum::<f64>() {
            (optimized, opt_lengths)
        } else {
            (split, split_lengths)
        };
        refinement.push((level, lengths.iter().sum::<f64>()));
    }
    (refinement, nodes, lengths)
}

/// Bounds for `W(ρ0, ρ1)` from `cfg.steps` path segments.
pub fn w_distance(chain: &MarkovTriple, rho0: &Density, rho1: &Density, cfg: &TransportConfig) -> Result<DistanceResult> {
    let n = chain.len();
    for r in [rho0, rho1] {
        if r.values().len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.values().len() });
        }
    }
    if cfg.steps < 2 {
        return Err(Error::InvalidParams(format!("w_distance needs at least 2 steps, got {}", cfg.steps)));
    }
    let levels = levels(cfg.steps);
    if rho0.values() == rho1.values() {
        let nodes = vec![rho0.values().clone(); cfg.steps + 1];
        let path = build_path(chain, &nodes, &vec![0.0; cfg.steps])?;
        let refinement = levels.into_iter().map(|s| (s, 0.0)).collect();
        return Ok(DistanceResult { upper: 0.0, lower: 0.0, refinement, witness_path: path });
    }
    let witnesses = default_witnesses(chain, rho0, rho1, cfg.seed);
    let lower = w_lower_bound(chain, rho0, rho1, &witnesses);

    let faces = candidate_faces(chain, rho0.values(), rho1.values());
    let solutions: Vec<_> = faces
        .into_par_iter()
        .map(|active| {
            let problem = PathProblem::new(chain, rho0.values(), rho1.values(), active, cfg);
            solve_on_face(&problem, cfg, &levels)
        })
        .collect();
    // every face is a feasible family of curves, so the refinement of the
    // combined bound is the running minimum over faces at each level
    let mut refinement: Vec<(usize, f64)> = levels.iter().map(|&l| (l, f64::INFINITY)).collect();
    for (face_refinement, _, _) in &solutions {
        for (slot, &(_, v)) in refinement.iter_mut().zip(face_refinement) {
            slot.1 = slot.1.min(v);
        }
    }
    let (_, nodes, lengths) = solutions
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            let (x, y) = (a.0.last().expect("levels").1, b.0.last().expect("levels").1);
            x.total_cmp(&y).then(i.cmp(j))
        })
        .map(|(_, s)| s)
        .expect("at least one face");
    let upper: f64 = lengths.iter().sum();
    if !upper.is_finite() {
        return Err(Error::OptimizerFailure("path length is not finite".into()));
    }
    for w in refinement.windows(2) {
        if w[1].1 > w[0].1 + 1e-4 * w[0].1.max(1.0) {
            return Err(Error::OptimizerFailure(format!(
                "refinement to N = {} increased the bound from {} to {}",
                w[1].0, w[0].1, w[1].1
            )));
        }
    }
    if lower > upper + 1e-9 * upper.max(1.0) {
        return Err(Error::OptimizerFailure(format!("lower bound {lower} exceeds upper bound {upper}")));
    }
    let witness_path = build_path(chain, &nodes, &lengths)?;
    Ok(DistanceResult { upper, lower, refinement, witness_path })
}

/// `max_f |⟨f, ρ1 - ρ0⟩_π| / √(‖Γ(f)‖_∞ / 2)` over the given witnesses.
///
/// Valid because `A(ρ, f) ≤ ½ ‖Γ(f)‖_∞` for every density `ρ`, which bounds
/// the rate at which `⟨f, ρ_t⟩_π` can change along any admissible curve.
pub fn w_lower_bound(chain: &MarkovTriple, rho0: &Density, rho1: &Density, witnesses: &[Potential]) -> f64 {
    let delta = rho1.values() - rho0.values();
    let mut best: f64 = 0.0;
    for f in witnesses {
        let Ok(gamma) = chain.gamma(f, f) else { continue };
        let g = gamma.amax();
        if g <= 0.0 {
            continue;
        }
        let value = chain.inner(f, &delta).abs() / (0.5 * g).sqrt();
        best = best.max(value);
    }
    best
}

/// Eigenfunctions of `L`, `ρ1 - ρ0` and its heat-smoothed versions, and
/// smoothed Gaussian potentials drawn from `seed`.
pub fn default_witnesses(chain: &MarkovTriple, rho0: &Density, rho1: &Density, seed: u64) -> Vec<Potential> {
    let n = chain.len();
    let mut out: Vec<Potential> = (1..n).map(|k| Potential(chain.eigenfunction(k))).collect();
    let delta = rho1.values() - rho0.values();
    let gap = chain.spectral_gap().max(1e-12);
    out.push(Potential(delta.clone()));
    for t in [0.05, 0.2, 0.5, 1.0, 2.0] {
        out.push(Potential(chain.heat_semigroup(t / gap, &delta).expect("non-negative time")));
    }
    // indicator of where mass must leave
    out.push(Potential(delta.map(|v| if v > 0.0 { 1.0 } else { 0.0 })));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let g = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        out.push(Potential(chain.heat_semigroup(0.5 / gap, &g).expect("non-negative time")));
    }
    out
}
