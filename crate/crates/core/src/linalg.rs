//! Thin dense linear-algebra helpers shared by the solver modules.
//!
//! Everything is desk scale, so conditioning guards use explicit inverses:
//! rcond = 1 / (norm1(M) * norm1(inv(M))).

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, EigVals, Factorize, Inverse, OperationNorm, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const RCOND_THRESHOLD: f64 = 1e-12;

/// LU-factorized square system with a reciprocal-condition estimate, reused
/// across solves.
pub struct DenseSolver {
    lu: ndarray_linalg::LUFactorized<ndarray::OwnedRepr<f64>>,
    pub rcond: f64,
    context: String,
}

impl DenseSolver {
    /// Factorize `m`, guarding against near-singular systems.
    pub fn new(m: &Array2<f64>, context: &str) -> Result<Self> {
        let norm1 = m.opnorm_one().map_err(|e| Error::numerical(context, e))?;
        let lu = m
            .factorize()
            .map_err(|_| Error::SingularSystem { context: context.to_string(), rcond: 0.0 })?;
        let inv = lu
            .inv()
            .map_err(|_| Error::SingularSystem { context: context.to_string(), rcond: 0.0 })?;
        let inv_norm1 = inv.opnorm_one().map_err(|e| Error::numerical(context, e))?;
        let rcond = if norm1 == 0.0 || inv_norm1 == 0.0 {
            0.0
        } else {
            1.0 / (norm1 * inv_norm1)
        };
        if rcond < RCOND_THRESHOLD {
            return Err(Error::SingularSystem { context: context.to_string(), rcond });
        }
        Ok(DenseSolver { lu, rcond, context: context.to_string() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = Array1::from_vec(rhs.to_vec());
        let x = self
            .lu
            .solve(&b)
            .map_err(|e| Error::numerical(&self.context, e))?;
        Ok(x.to_vec())
    }

    pub fn solve_array(&self, rhs: &Array1<f64>) -> Result<Array1<f64>> {
        self.lu
            .solve(rhs)
            .map_err(|e| Error::numerical(&self.context, e))
    }

    /// Solve against every column of `rhs`.
    pub fn solve_matrix(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        let (n, m) = rhs.dim();
        let mut out = Array2::zeros((n, m));
        for j in 0..m {
            let col = rhs.column(j).to_owned();
            let x = self.solve_array(&col)?;
            out.column_mut(j).assign(&x);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Array2<f64>> {
        self.lu.inv().map_err(|e| Error::numerical(&self.context, e))
    }
}

/// Explicit inverse with the same conditioning guard.
pub fn guarded_inverse(m: &Array2<f64>, context: &str) -> Result<Array2<f64>> {
    DenseSolver::new(m, context)?.inverse()
}

/// All eigenvalues of a dense real matrix.
pub fn eigenvalues(m: &Array2<f64>, context: &str) -> Result<Vec<Complex64>> {
    let vals = m.eigvals().map_err(|e| Error::numerical(context, e))?;
    Ok(vals.to_vec())
}

/// Eigenvalues and right eigenvectors of a dense real matrix.
pub fn eigen_pairs(m: &Array2<f64>, context: &str) -> Result<(Vec<Complex64>, Array2<Complex64>)> {
    let (vals, vecs) = m.eig().map_err(|e| Error::numerical(context, e))?;
    Ok((vals.to_vec(), vecs))
}

/// Spectral radius (max |eigenvalue|).
pub fn spectral_radius(m: &Array2<f64>, context: &str) -> Result<f64> {
    Ok(eigenvalues(m, context)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Max real part of the spectrum.
pub fn spectral_bound(m: &Array2<f64>, context: &str) -> Result<f64> {
    Ok(eigenvalues(m, context)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn max_abs_entry(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Operator infinity norm (max absolute row sum).
pub fn opnorm_inf(m: &Array2<f64>) -> f64 {
    m.opnorm_inf().unwrap_or(f64::NAN)
}

pub fn vec_inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

/// lambda I - M.
pub fn shifted(lambda: f64, m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut s = -m.clone();
    for i in 0..n {
        s[(i, i)] += lambda;
    }
    s
}

/// Matrix exponential by scaling and squaring with the degree-13 Pade
/// approximant on the scaled matrix.
pub fn expm_pade(m: &Array2<f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    let norm = m.opnorm_one().map_err(|e| Error::numerical("expm", e))?;
    // theta_13 from the scaling-and-squaring literature
    const THETA_13: f64 = 5.371920351148152;
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = m.mapv(|v| v * 2f64.powi(-(squarings as i32)));

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let eye = Array2::<f64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = a.dot(&(a6.dot(&u_inner) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1]));
    let v_inner = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = a6.dot(&v_inner) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];

    let numer = &v + &u;
    let denom = &v - &u;
    let solver = DenseSolver::new(&denom, "expm Pade denominator")?;
    let mut result = solver.solve_matrix(&numer)?;
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    Ok(result)
}

/// Least-squares slope of y over x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
