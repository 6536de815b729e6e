//! Finite-volume discretization of second-order elliptic operators with
//! nonlocal Robin boundary conditions
//! `conormal(u)(z) + beta(z) u(z) = <u, mu(z)>`, where each boundary point z
//! couples to the solution over the whole closed domain through a measure
//! mu(z).
//!
//! The crate assembles the local Robin generator A0 and the perturbed
//! generator `A_Phi = A0 + E Phi`, evaluates the perturbed resolvent through
//! the boundary-perturbation factorization
//! `R(lambda, A_Phi) = (I - S_lambda Phi)^{-1} R(lambda, A0)`, evolves the
//! semigroup `u' = A_Phi u`, and checks the algebraic characterizations of
//! positivity, sub-Markov/Markov behavior and long-time asymptotics against
//! the observed dynamics at desk scale.

pub mod assembly;
pub mod cli;
pub mod coefficients;
pub mod conditions;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod greiner;
pub mod linalg;
pub mod measures;
pub mod oracle;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
