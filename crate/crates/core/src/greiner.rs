//! Boundary-perturbation calculus for the resolvent.
//!
//! For `lambda` in the resolvent set of the local generator A0, the columns
//! of `S_lambda = R(lambda, A0) E` solve the boundary value problem with
//! datum concentrated on one face, and the perturbed resolvent factors as
//! `R(lambda, A_Phi) = (I - S_lambda Phi)^{-1} R(lambda, A0)`. Three
//! evaluation paths are provided (direct solve, factored Greiner formula,
//! truncated Neumann series) and cross-validated against each other.

use ndarray::Array2;

use crate::assembly::{BoundaryOperatorSet, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseSolver};

/// How to evaluate the perturbed resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventMethod {
    /// Solve (lambda I - A_Phi) u = f directly.
    Direct,
    /// Apply R(lambda, A0), then solve (I - S_lambda Phi) u = v.
    GreinerLu,
    /// Apply R(lambda, A0), then sum the Neumann series of S_lambda Phi.
    GreinerNeumann,
}

/// Neumann-series truncation: stop once a term drops below this relative to
/// the seed, declare divergence after this many consecutive increases.
const NEUMANN_RELATIVE_TOL: f64 = 1e-12;
const NEUMANN_MAX_CONSECUTIVE_GROWTH: usize = 5;

enum MaybeSolver {
    Ready(Box<DenseSolver>),
    Singular { context: String, rcond: f64 },
}

impl MaybeSolver {
    fn build(m: &Array2<f64>, context: &str) -> Result<Self> {
        match DenseSolver::new(m, context) {
            Ok(s) => Ok(MaybeSolver::Ready(Box::new(s))),
            Err(Error::SingularSystem { context, rcond }) => {
                Ok(MaybeSolver::Singular { context, rcond })
            }
            Err(e) => Err(e),
        }
    }

    fn get(&self) -> Result<&DenseSolver> {
        match self {
            MaybeSolver::Ready(s) => Ok(s),
            MaybeSolver::Singular { context, rcond } => Err(Error::SingularSystem {
                context: context.clone(),
                rcond: *rcond,
            }),
        }
    }
}

/// Immutable solve context at a fixed lambda; factorizations are reused
/// across solves.
pub struct ResolventContext {
    pub lambda: f64,
    pub s_lambda: Array2<f64>,
    /// Spectral radius of S_lambda Phi (computed on the faces x faces
    /// composition Phi S_lambda, which has the same nonzero spectrum).
    pub neumann_radius: f64,
    dense_a0: Array2<f64>,
    dense_a_phi: Array2<f64>,
    ops: BoundaryOperatorSet,
    s_lambda_phi: Array2<f64>,
    shifted_a0: DenseSolver,
    shifted_a_phi: MaybeSolver,
    i_minus_s_phi: MaybeSolver,
}

impl ResolventContext {
    pub fn new(
        a0: &GeneratorMatrix,
        a_phi: &GeneratorMatrix,
        ops: &BoundaryOperatorSet,
        lambda: f64,
    ) -> Result<Self> {
        let dense_a0 = a0.to_dense();
        let dense_a_phi = a_phi.to_dense();
        let shifted_a0 = DenseSolver::new(&linalg::shifted(lambda, &dense_a0), "lambda I - A0")?;
        let s_lambda = shifted_a0.solve_matrix(&ops.e)?;
        let s_lambda_phi = s_lambda.dot(&ops.phi);
        let phi_s = ops.phi.dot(&s_lambda);
        let neumann_radius = if linalg::max_abs_entry(&phi_s) == 0.0 {
            0.0
        } else {
            linalg::spectral_radius(&phi_s, "Phi S_lambda")?
        };
        let n = dense_a0.nrows();
        let i_minus = Array2::<f64>::eye(n) - &s_lambda_phi;
        let i_minus_s_phi = MaybeSolver::build(&i_minus, "I - S_lambda Phi")?;
        let shifted_a_phi =
            MaybeSolver::build(&linalg::shifted(lambda, &dense_a_phi), "lambda I - A_Phi")?;
        Ok(ResolventContext {
            lambda,
            s_lambda,
            neumann_radius,
            dense_a0,
            dense_a_phi,
            ops: ops.clone(),
            s_lambda_phi,
            shifted_a0,
            shifted_a_phi,
            i_minus_s_phi,
        })
    }

    /// Solve lambda u - A u = 0 with boundary datum g: u = R(lambda,A0) E g.
    pub fn solve_s_lambda(&self, g: &[f64]) -> Vec<f64> {
        let (n, m) = self.s_lambda.dim();
        let mut u = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for z in 0..m {
                acc += self.s_lambda[(i, z)] * g[z];
            }
            u[i] = acc;
        }
        u
    }

    /// R(lambda, A0) f.
    pub fn local_resolvent(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.shifted_a0.solve(f)
    }

    /// R(lambda, A_Phi) f by the chosen method.
    pub fn perturbed_resolvent(&self, f: &[f64], method: ResolventMethod) -> Result<Vec<f64>> {
        match method {
            ResolventMethod::Direct => self.shifted_a_phi.get()?.solve(f),
            ResolventMethod::GreinerLu => {
                let v = self.shifted_a0.solve(f)?;
                self.i_minus_s_phi.get()?.solve(&v)
            }
            ResolventMethod::GreinerNeumann => {
                if self.neumann_radius >= 1.0 {
                    return Err(Error::NeumannDivergence { radius: self.neumann_radius });
                }
                let v = self.shifted_a0.solve(f)?;
                self.neumann_sum(&v)
            }
        }
    }

    fn neumann_sum(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = v.len();
        let v_norm = linalg::vec_inf_norm(v);
        let mut sum = v.to_vec();
        if v_norm == 0.0 {
            return Ok(sum);
        }
        let max_terms = 10 * self.ops.phi.nrows();
        let mut term = v.to_vec();
        let mut prev_norm = v_norm;
        let mut growth_streak = 0usize;
        for _ in 0..max_terms {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += self.s_lambda_phi[(i, j)] * term[j];
                }
                next[i] = acc;
            }
            term = next;
            let norm = linalg::vec_inf_norm(&term);
            if norm <= NEUMANN_RELATIVE_TOL * v_norm {
                for (s, t) in sum.iter_mut().zip(&term) {
                    *s += t;
                }
                return Ok(sum);
            }
            if norm > prev_norm {
                growth_streak += 1;
                if growth_streak >= NEUMANN_MAX_CONSECUTIVE_GROWTH {
                    return Err(Error::NeumannDivergence { radius: self.neumann_radius });
                }
            } else {
                growth_streak = 0;
            }
            prev_norm = norm;
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
        }
        Ok(sum)
    }

    /// Max-entry residual between the directly inverted resolvent and the
    /// factored formula (I - S_lambda Phi)^{-1} R(lambda, A0).
    pub fn resolvent_identity_residual(&self) -> Result<f64> {
        let direct = self.shifted_a_phi.get()?.inverse()?;
        let r0 = self.shifted_a0.inverse()?;
        let factored = self.i_minus_s_phi.get()?.solve_matrix(&r0)?;
        Ok(linalg::max_abs_entry(&(&direct - &factored)))
    }

    pub fn dense_a0(&self) -> &Array2<f64> {
        &self.dense_a0
    }

    pub fn dense_a_phi(&self) -> &Array2<f64> {
        &self.dense_a_phi
    }
}

/// lambda = max(1, 2 |s(A0)| + 1), a value safely inside the resolvent set.
pub fn auto_lambda(a0: &GeneratorMatrix) -> Result<f64> {
    let s = linalg::spectral_bound(&a0.to_dense(), "spectral bound of A0")?;
    Ok((2.0 * s.abs() + 1.0).max(1.0))
}

/// Infinity norms of S_lambda Phi along a list of lambdas.
pub fn s_lambda_decay_profile(
    a0: &GeneratorMatrix,
    ops: &BoundaryOperatorSet,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    let dense_a0 = a0.to_dense();
    let mut norms = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let solver = DenseSolver::new(&linalg::shifted(lambda, &dense_a0), "lambda I - A0")?;
        let s = solver.solve_matrix(&ops.e)?;
        let sp = s.dot(&ops.phi);
        norms.push(linalg::opnorm_inf(&sp));
    }
    Ok(norms)
}
