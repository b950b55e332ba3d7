//! Example chains: two-point space, complete graph, discrete torus,
//! hypercube, the constant-rate zero-range process and random reversible
//! chains.
//!
//! Rate conventions: torus and hypercube use rate 1 per directed move. The
//! zero-range process uses `Q(η, η^{i,j}) = 1/L` per target configuration,
//! never accumulated over coinciding `(i, j)` representations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::MarkovTriple;
use crate::error::{Error, Result};
use crate::metric::dq_matrix;

/// Largest zero-range state space `make_family` will build.
pub const ZERO_RANGE_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FamilySpec {
    TwoPoint { p: f64, q: f64 },
    Complete { l: usize },
    Torus { l: usize, d: usize },
    Hypercube { n: usize },
    ZeroRange { k: usize, l: usize },
    RandomReversible { n: usize, density: f64, seed: u64 },
}

impl FamilySpec {
    pub fn two_point(p: f64, q: f64) -> Self {
        Self::TwoPoint { p, q }
    }

    pub fn complete(l: usize) -> Self {
        Self::Complete { l }
    }

    pub fn torus(l: usize, d: usize) -> Self {
        Self::Torus { l, d }
    }

    pub fn hypercube(n: usize) -> Self {
        Self::Hypercube { n }
    }

    pub fn zero_range(k: usize, l: usize) -> Self {
        Self::ZeroRange { k, l }
    }

    pub fn random_reversible(n: usize, density: f64, seed: u64) -> Self {
        Self::RandomReversible { n, density, seed }
    }

    /// Builds a spec from a family name and numeric parameters
    /// (`p, q, L, d, n, K, density, seed`). Missing parameters take defaults.
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let count = |key: &str, default: f64| -> Result<usize> {
            let v = get(key, default);
            if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{key} must be a non-negative integer, got {v}")));
            }
            Ok(v as usize)
        };
        let spec = match name {
            "two_point" => Self::two_point(get("p", 1.0), get("q", 1.0)),
            "complete" => Self::complete(count("L", 4.0)?),
            "torus" => Self::torus(count("L", 5.0)?, count("d", 1.0)?),
            "hypercube" => Self::hypercube(count("n", 3.0)?),
            "zero_range" => Self::zero_range(count("K", 2.0)?, count("L", 3.0)?),
            "random_reversible" => {
                Self::random_reversible(count("n", 6.0)?, get("density", 0.3), count("seed", 0.0)? as u64)
            }
            other => return Err(Error::InvalidParams(format!("unknown family {other}"))),
        };
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoPoint { .. } => "two_point",
            Self::Complete { .. } => "complete",
            Self::Torus { .. } => "torus",
            Self::Hypercube { .. } => "hypercube",
            Self::ZeroRange { .. } => "zero_range",
            Self::RandomReversible { .. } => "random_reversible",
        }
    }
}

pub fn make_family(spec: &FamilySpec) -> Result<MarkovTriple> {
    match *spec {
        FamilySpec::TwoPoint { p, q } => two_point(p, q),
        FamilySpec::Complete { l } => complete(l),
        FamilySpec::Torus { l, d } => torus(l, d),
        FamilySpec::Hypercube { n } => hypercube(n),
        FamilySpec::ZeroRange { k, l } => zero_range(k, l),
        FamilySpec::RandomReversible { n, density, seed } => random_reversible(n, density, seed),
    }
}

fn two_point(p: f64, q: f64) -> Result<MarkovTriple> {
    if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
        return Err(Error::InvalidParams(format!("two_point rates must be positive, got p={p}, q={q}")));
    }
    let rates = DMatrix::from_row_slice(2, 2, &[0.0, p, q, 0.0]);
    let pi = DVector::from_vec(vec![q / (p + q), p / (p + q)]);
    MarkovTriple::new(vec!["0".into(), "1".into()], rates, Some(pi))
}

fn complete(l: usize) -> Result<MarkovTriple> {
    if l < 2 {
        return Err(Error::InvalidParams(format!("complete graph needs L >= 2, got {l}")));
    }
    let rate = 1.0 / l as f64;
    let rates = DMatrix::from_fn(l, l, |x, y| if x == y { 0.0 } else { rate });
    let labels = (0..l).map(|x| x.to_string()).collect();
    MarkovTriple::new(labels, rates, Some(DVector::from_element(l, rate)))
}

fn torus(l: usize, d: usize) -> Result<MarkovTriple> {
    if l < 2 || d == 0 {
        return Err(Error::InvalidParams(format!("torus needs L >= 2 and d >= 1, got L={l}, d={d}")));
    }
    let size = l
        .checked_pow(d as u32)
        .filter(|&s| s <= ZERO_RANGE_LIMIT)
        .ok_or(Error::StateSpaceTooLarge { size: usize::MAX, limit: ZERO_RANGE_LIMIT })?;
    let coords = |mut x: usize| -> Vec<usize> {
        let mut c = vec![0; d];
        for slot in c.iter_mut().rev() {
            *slot = x % l;
            x /= l;
        }
        c
    };
    let index = |c: &[usize]| c.iter().fold(0, |acc, &v| acc * l + v);
    let mut rates = DMatrix::zeros(size, size);
    for x in 0..size {
        let c = coords(x);
        for axis in 0..d {
            for step in [1, l - 1] {
                let mut nb = c.clone();
                nb[axis] = (nb[axis] + step) % l;
                let y = index(&nb);
                if y != x {
                    // L = 2 makes both directions the same neighbour
                    rates[(x, y)] = 1.0;
                }
            }
        }
    }
    let labels = (0..size)
        .map(|x| {
            let c: Vec<String> = coords(x).iter().map(|v| v.to_string()).collect();
            format!("({})", c.join(","))
        })
        .collect();
    MarkovTriple::new(labels, rates, Some(DVector::from_element(size, 1.0 / size as f64)))
}

fn hypercube(n: usize) -> Result<MarkovTriple> {
    if n == 0 || n > 12 {
        return Err(Error::InvalidParams(format!("hypercube dimension must be in 1..=12, got {n}")));
    }
    let size = 1usize << n;
    let mut rates = DMatrix::zeros(size, size);
    for x in 0..size {
        for bit in 0..n {
            rates[(x, x ^ (1 << bit))] = 1.0;
        }
    }
    let labels = (0..size).map(|x| format!("{:0width$b}", x, width = n)).collect();
    MarkovTriple::new(labels, rates, Some(DVector::from_element(size, 1.0 / size as f64)))
}

/// Occupation vectors `η ∈ ℕ^L` with `Σ η_i = K`, in lexicographic order.
pub fn zero_range_states(k: usize, l: usize) -> Vec<Vec<usize>> {
    fn fill(prefix: &mut Vec<usize>, left: usize, l: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == l - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            fill(prefix, left - v, l, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if l > 0 {
        fill(&mut Vec::with_capacity(l), k, l, &mut out);
    }
    out
}

/// `C(K+L-1, L-1)`, saturating on overflow.
pub fn zero_range_count(k: usize, l: usize) -> usize {
    if l == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 1..l as u128 {
        acc = acc * (k as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

fn zero_range(k: usize, l: usize) -> Result<MarkovTriple> {
    if k == 0 || l < 2 {
        return Err(Error::InvalidParams(format!("zero_range needs K >= 1 and L >= 2, got K={k}, L={l}")));
    }
    let size = zero_range_count(k, l);
    if size > ZERO_RANGE_LIMIT {
        return Err(Error::StateSpaceTooLarge { size, limit: ZERO_RANGE_LIMIT });
    }
    let states = zero_range_states(k, l);
    let lookup: BTreeMap<&[usize], usize> = states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let rate = 1.0 / l as f64;
    let mut rates = DMatrix::zeros(size, size);
    for (x, eta) in states.iter().enumerate() {
        for i in 0..l {
            if eta[i] == 0 {
                continue;
            }
            for j in 0..l {
                if j == i {
                    continue;
                }
                let mut next = eta.clone();
                next[i] -= 1;
                next[j] += 1;
                rates[(x, lookup[next.as_slice()])] = rate;
            }
        }
    }
    let labels = states
        .iter()
        .map(|s| {
            let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            format!("({})", parts.join(","))
        })
        .collect();
    MarkovTriple::new(labels, rates, Some(DVector::from_element(size, 1.0 / size as f64)))
}

fn random_reversible(n: usize, density: f64, seed: u64) -> Result<MarkovTriple> {
    if !(2..=ZERO_RANGE_LIMIT).contains(&n) {
        return Err(Error::InvalidParams(format!("random_reversible needs 2 <= n <= {ZERO_RANGE_LIMIT}, got {n}")));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParams(format!("density must lie in [0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conductance = DMatrix::zeros(n, n);
    // random spanning tree: attach each vertex of a shuffled order to an earlier one
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let c = rng.gen_range(0.5..2.0);
        conductance[(order[i], parent)] = c;
        conductance[(parent, order[i])] = c;
    }
    for x in 0..n {
        for y in x + 1..n {
            if conductance[(x, y)] == 0.0 && rng.gen_bool(density) {
                let c = rng.gen_range(0.5..2.0);
                conductance[(x, y)] = c;
                conductance[(y, x)] = c;
            }
        }
    }
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let total: f64 = weights.iter().sum();
    let pi = DVector::from_iterator(n, weights.iter().map(|w| w / total));
    // Q(x,y) π(x) = c(x,y) / n keeps rates of order one
    let scale = 1.0 / n as f64;
    let rates = DMatrix::from_fn(n, n, |x, y| conductance[(x, y)] * scale / pi[x]);
    let labels = (0..n).map(|x| x.to_string()).collect();
    MarkovTriple::new(labels, rates, Some(pi))
}

/// Size, exact `d_Q` diameter and `K √(L log L)` for the zero-range process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroRangeDiameter {
    pub states: usize,
    pub dq_diameter: f64,
    pub scaling_bound: f64,
}

pub fn zero_range_diameter_data(k: usize, l: usize) -> Result<ZeroRangeDiameter> {
    let chain = zero_range(k, l)?;
    let dq = dq_matrix(&chain);
    let lf = l as f64;
    Ok(ZeroRangeDiameter {
        states: chain.len(),
        dq_diameter: dq.max(),
        scaling_bound: k as f64 * (lf * lf.ln()).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn binomial(n: usize, k: usize) -> usize {
        // Pascal's triangle, independent of the product formula above
        let mut row = vec![1usize];
        for _ in 0..n {
            let mut next = vec![1usize; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row[k]
    }

    #[test]
    fn zero_range_two_three() {
        let t = make_family(&FamilySpec::zero_range(2, 3)).unwrap();
        assert_eq!(t.len(), 6);
        for x in 0..6 {
            assert_relative_eq!(t.pi()[x], 1.0 / 6.0, epsilon = 1e-15);
        }
        let states = zero_range_states(2, 3);
        assert_eq!(states[0], vec![0, 0, 2]);
        assert_eq!(states[5], vec![2, 0, 0]);
        for (x, eta) in states.iter().enumerate() {
            let occupied = eta.iter().filter(|&&v| v > 0).count();
            let out: Vec<f64> = (0..6).map(|y| t.rate(x, y)).filter(|&q| q > 0.0).collect();
            assert_eq!(out.len(), 2 * occupied);
            assert!(out.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_range_counts_match_binomials() {
        for k in 1..=4 {
            for l in 2..=5 {
                let expected = binomial(k + l - 1, l - 1);
                assert_eq!(zero_range_count(k, l), expected);
                assert_eq!(zero_range_states(k, l).len(), expected);
            }
        }
        let err = make_family(&FamilySpec::zero_range(20, 10)).unwrap_err();
        assert!(matches!(err, Error::StateSpaceTooLarge { .. }));
    }

    #[test]
    fn hypercube_three() {
        let t = make_family(&FamilySpec::hypercube(3)).unwrap();
        assert_eq!(t.len(), 8);
        assert_relative_eq!(t.pi_star(), 0.125, epsilon = 1e-15);
        assert_relative_eq!(-t.pi_star().ln(), 3.0 * 2f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(t.spectral_gap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn torus_gaps_are_circulant() {
        for l in 3..=8 {
            let t = make_family(&FamilySpec::torus(l, 1)).unwrap();
            let expected = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / l as f64).cos());
            assert_relative_eq!(t.spectral_gap(), expected, epsilon = 1e-12);
        }
        let t = make_family(&FamilySpec::torus(4, 1)).unwrap();
        assert_relative_eq!(t.spectral_gap(), 2.0, epsilon = 1e-12);
        let t2 = make_family(&FamilySpec::torus(3, 2)).unwrap();
        assert_eq!(t2.len(), 9);
        assert_eq!(t2.edges().len(), 18);
    }

    #[test]
    fn random_chains_are_valid_and_reproducible() {
        for seed in 0..20 {
            let a = make_family(&FamilySpec::random_reversible(8, 0.3, seed)).unwrap();
            let b = make_family(&FamilySpec::random_reversible(8, 0.3, seed)).unwrap();
            assert_eq!(a.rates(), b.rates());
            assert!(a.edges().len() >= 7);
        }
    }

    #[test]
    fn single_particle_diameter() {
        for l in 3..=5 {
            let d = zero_range_diameter_data(1, l).unwrap();
            assert_eq!(d.states, l);
            assert_relative_eq!(d.dq_diameter, (l as f64).sqrt(), epsilon = 1e-12);
        }
        let d = zero_range_diameter_data(2, 3).unwrap();
        assert!(d.dq_diameter <= 2.0 * 3f64.sqrt() + 1e-12);
    }

    #[test]
    fn params_round_trip() {
        let mut p = BTreeMap::new();
        p.insert("L".to_string(), 5.0);
        p.insert("d".to_string(), 1.0);
        assert_eq!(FamilySpec::from_params("torus", &p).unwrap(), FamilySpec::torus(5, 1));
        p.insert("L".to_string(), 2.5);
        assert!(FamilySpec::from_params("torus", &p).is_err());
        assert!(FamilySpec::from_params("moebius", &p).is_err());
    }
}
