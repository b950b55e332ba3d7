//! Random densities and potentials shared by the estimators and the checks.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::chain::{Density, MarkovTriple};

/// Density whose `π`-masses are `Dirichlet(α, …, α)`, mixed with a uniform
/// floor so every mass is at least about `floor`.
pub fn dirichlet_density<R: Rng>(chain: &MarkovTriple, alpha: f64, floor: f64, rng: &mut R) -> Density {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let draws: Vec<f64> = (0..chain.len()).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let n = chain.len() as f64;
    let values = DVector::from_fn(chain.len(), |x, _| {
        let mass = (1.0 - n * floor) * draws[x] / total + floor;
        mass / chain.pi()[x]
    });
    Density::renormalized_unchecked(chain, values)
}

/// `(1-ε) 1_x/π(x) + ε`.
pub fn smoothed_dirac(chain: &MarkovTriple, x: usize, eps: f64) -> Density {
    Density::dirac(chain, x).mix_uniform(eps)
}

/// Standard normal entries, centered under `π`.
pub fn normal_potential<R: Rng>(chain: &MarkovTriple, rng: &mut R) -> DVector<f64> {
    let f = DVector::from_fn(chain.len(), |_, _| StandardNormal.sample(rng));
    let m = chain.mean(&f);
    f.add_scalar(-m)
}

/// Strictly positive function `exp(g/2)` with `g` standard normal.
pub fn positive_function<R: Rng>(chain: &MarkovTriple, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(chain.len(), |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        (0.5 * g).exp()
    })
}
