//! Entropic Ricci curvature, the discrete transport distance `W` and
//! functional-inequality constants for finite reversible Markov chains.

pub mod chain;
pub mod curvature;
pub mod error;
pub mod families;
pub mod inequalities;
pub mod logmean;
pub mod metric;
pub mod optimize;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod verifier;

pub use chain::{Density, Edge, MarkovTriple, Potential};
pub use error::{Error, Result};
pub use families::{make_family, FamilySpec};
