//! Spectral bound, gap, principal eigenpair, stationary projection and
//! long-time classification of assembled generators.
//!
//! Everything runs through a dense nonsymmetric eigensolver. The principal
//! left/right pair is normalized against the volume-weighted pairing
//! `<phi, u> = sum_i phi_i u_i vol = 1`, so the rank-one projection
//! `P f = <phi, f> u` is idempotent and, in the Markov case, `phi * vol` is
//! a probability vector.

use ndarray::Array2;
use num_complex::Complex64;

use crate::assembly::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::linalg;

/// Size limit of the dense eigensolver.
pub const DENSE_EIG_LIMIT: usize = 8192;

/// Eigenvalues within this multiple of ||A|| of the spectral bound count as
/// one cluster; a cluster larger than one withholds classification.
pub const CLUSTER_TOL_FACTOR: f64 = 1e-7;

/// |s| below this multiple of ||A|| classifies as Equilibrium.
pub const SPECTRAL_BOUND_TOL_FACTOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum AsymptoticClass {
    ExponentialDecay { rate: f64 },
    Equilibrium,
    BlowUp { rate: f64 },
}

impl AsymptoticClass {
    pub fn name(&self) -> &'static str {
        match self {
            AsymptoticClass::ExponentialDecay { .. } => "ExponentialDecay",
            AsymptoticClass::Equilibrium => "Equilibrium",
            AsymptoticClass::BlowUp { .. } => "BlowUp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub spectral_bound: f64,
    /// Distance from the spectral bound to the next distinct real part;
    /// infinite when no second real part exists.
    pub gap: f64,
    /// Principal right eigenvector, sup-norm one, oriented nonnegative.
    pub principal_right: Vec<f64>,
    /// Principal left eigenvector, scaled so sum_i phi_i u_i vol = 1.
    pub principal_left: Vec<f64>,
    /// Full spectrum, sorted by descending real part, then descending
    /// imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub asymptotic_class: AsymptoticClass,
    pub irreducible: bool,
    pub cell_volume: f64,
    /// Infinity norm of the matrix, the scale for all tolerances.
    pub matrix_norm: f64,
    /// ||A u - s u||_inf with ||u||_inf = 1.
    pub right_residual: f64,
    /// ||A^T phi - s phi||_inf / ||phi||_inf.
    pub left_residual: f64,
}

/// Spectral report of a generator. `cell_volume` defines the weighted
/// pairing used for normalization.
pub fn eig_report(a: &GeneratorMatrix, cell_volume: f64) -> Result<SpectralReport> {
    let n = a.size();
    if n > DENSE_EIG_LIMIT {
        return Err(Error::numerical(
            "eig_report",
            format!("matrix size {n} above the dense eigensolver limit {DENSE_EIG_LIMIT}"),
        ));
    }
    let dense = a.to_dense();
    let norm = a.inf_norm();
    let (vals, vecs) = linalg::eigen_pairs(&dense, "eig_report")?;

    let s = vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let cluster_tol = CLUSTER_TOL_FACTOR * norm;
    let cluster: Vec<usize> = (0..n).filter(|&k| vals[k].re >= s - cluster_tol).collect();
    if cluster.len() > 1 {
        return Err(Error::DefectivePrincipalEigenvalue {
            spectral_bound: s,
            cluster_size: cluster.len(),
        });
    }
    let principal_idx = cluster[0];

    let next = vals
        .iter()
        .map(|z| z.re)
        .filter(|&re| re < s - cluster_tol)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = if next.is_finite() { s - next } else { f64::INFINITY };

    let mut u: Vec<f64> = (0..n).map(|i| vecs[(i, principal_idx)].re).collect();
    normalize_principal(&mut u);
    let au = a.matvec(&u);
    let right_residual = au
        .iter()
        .zip(&u)
        .map(|(x, y)| (x - s * y).abs())
        .fold(0.0, f64::max);

    // left eigenvector from the transpose
    let transposed = dense.t().to_owned();
    let (lvals, lvecs) = linalg::eigen_pairs(&transposed, "eig_report (transpose)")?;
    let left_idx = (0..n)
        .min_by(|&p, &q| {
            let dp = (lvals[p] - Complex64::new(s, 0.0)).norm();
            let dq = (lvals[q] - Complex64::new(s, 0.0)).norm();
            dp.partial_cmp(&dq).unwrap()
        })
        .expect("nonempty spectrum");
    let mut phi: Vec<f64> = (0..n).map(|i| lvecs[(i, left_idx)].re).collect();
    normalize_principal(&mut phi);
    let pairing: f64 = phi.iter().zip(&u).map(|(p, ui)| p * ui).sum::<f64>() * cell_volume;
    if pairing.abs() < 1e-300 {
        return Err(Error::numerical(
            "eig_report",
            "principal left/right pairing vanishes; cannot normalize projection",
        ));
    }
    for v in phi.iter_mut() {
        *v /= pairing;
    }
    let phi_norm = linalg::vec_inf_norm(&phi);
    let at_phi = {
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += transposed[(i, j)] * phi[j];
            }
            out[i] = acc;
        }
        out
    };
    let left_residual = at_phi
        .iter()
        .zip(&phi)
        .map(|(x, y)| (x - s * y).abs())
        .fold(0.0, f64::max)
        / phi_norm.max(1e-300);

    let irreducible = strongly_connected(&dense);

    let tol_s = SPECTRAL_BOUND_TOL_FACTOR * norm;
    let asymptotic_class = if s < -tol_s {
        AsymptoticClass::ExponentialDecay { rate: -s }
    } else if s <= tol_s {
        AsymptoticClass::Equilibrium
    } else {
        AsymptoticClass::BlowUp { rate: s }
    };

    let mut eigenvalues = vals;
    eigenvalues.sort_by(|a, b| {
        (b.re, b.im)
            .partial_cmp(&(a.re, a.im))
            .expect("eigenvalues are finite")
    });

    Ok(SpectralReport {
        spectral_bound: s,
        gap,
        principal_right: u,
        principal_left: phi,
        eigenvalues,
        asymptotic_class,
        irreducible,
        cell_volume,
        matrix_norm: norm,
        right_residual,
        left_residual,
    })
}

/// Sup-norm one, oriented so the entry sum is nonnegative.
fn normalize_principal(v: &mut [f64]) {
    let norm = linalg::vec_inf_norm(v);
    if norm == 0.0 {
        return;
    }
    let sum: f64 = v.iter().sum();
    let sign = if sum < 0.0 { -1.0 } else { 1.0 };
    for x in v.iter_mut() {
        *x *= sign / norm;
    }
}

/// Strong connectivity of the off-diagonal adjacency graph.
fn strongly_connected(m: &Array2<f64>) -> bool {
    let n = m.nrows();
    if n == 0 {
        return false;
    }
    let reach = |transpose: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let v = if transpose { m[(j, i)] } else { m[(i, j)] };
                if i != j && v != 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(false) == n && reach(true) == n
}

/// Rank-one stationary projection P f = <phi, f> u for an Equilibrium
/// report.
pub fn stationary_projection(report: &SpectralReport) -> Result<Array2<f64>> {
    if report.asymptotic_class != AsymptoticClass::Equilibrium {
        return Err(Error::NotEquilibrium {
            class: report.asymptotic_class.name().to_string(),
        });
    }
    let n = report.principal_right.len();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = report.principal_right[i] * report.principal_left[j] * report.cell_volume;
        }
    }
    Ok(p)
}

/// Apply a projection matrix to a state.
pub fn apply_projection(p: &Array2<f64>, u: &[f64]) -> Vec<f64> {
    let (rows, cols) = p.dim();
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        let mut acc = 0.0;
        for j in 0..cols {
            acc += p[(i, j)] * u[j];
        }
        out[i] = acc;
    }
    out
}

/// Slope of ln(values) over the last half of the samples.
fn log_slope_last_half(times: &[f64], values: &[f64], floor: f64) -> Result<f64> {
    let start = times.len() / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in start..times.len() {
        if values[k] > floor {
            xs.push(times[k]);
            ys.push(values[k].ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientDecay(
            "fewer than two usable samples above the noise floor".to_string(),
        ));
    }
    linalg::fit_slope(&xs, &ys)
        .ok_or_else(|| Error::InsufficientDecay("degenerate time samples".to_string()))
}

/// Least-squares decay rate of ||u(t) - P u0||_inf over the last half of the
/// trajectory. Requires the deviation to have dropped below 1e-3 of its
/// initial value.
pub fn convergence_rate_fit(trajectory: &Trajectory, p: &Array2<f64>) -> Result<f64> {
    let u0 = &trajectory.states[0];
    let target = apply_projection(p, u0);
    let deviations: Vec<f64> = trajectory
        .states
        .iter()
        .map(|u| {
            u.iter()
                .zip(&target)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let scale = linalg::vec_inf_norm(&target) + linalg::vec_inf_norm(u0);
    let d0 = deviations[0];
    if d0 <= 1e-13 * scale.max(1e-300) {
        return Err(Error::InsufficientDecay(
            "initial state is already stationary; no transient to fit".to_string(),
        ));
    }
    let d_end = *deviations.last().unwrap();
    if d_end >= 1e-3 * d0 {
        return Err(Error::InsufficientDecay(format!(
            "final deviation {d_end:.3e} has not dropped below 1e-3 of the initial {d0:.3e}"
        )));
    }
    let floor = 1e-15 * scale.max(1e-300);
    let slope = log_slope_last_half(&trajectory.times, &deviations, floor)?;
    Ok((-slope).max(0.0))
}

/// Least-squares growth rate of a positive series (e.g. sup T(t)1 for a
/// blow-up run) over the last half of the samples.
pub fn growth_rate_fit(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 4 {
        return Err(Error::InsufficientDecay("series too short for a rate fit".to_string()));
    }
    log_slope_last_half(times, values, 0.0)
}

#[derive(Debug, Clone)]
pub enum MonotonicityVerdict {
    /// The matrices coincide; equality of spectral bounds is reported and
    /// strictness is not asserted.
    Identical { spectral_bound: f64 },
    Ordered {
        s_base: f64,
        s_perturbed: f64,
        margin: f64,
        /// Strict increase is asserted only when the base is irreducible.
        strict_expected: bool,
    },
}

/// Compare spectral bounds of an entrywise-ordered Metzler pair.
pub fn spectral_monotonicity_check(
    a_base: &GeneratorMatrix,
    a_perturbed: &GeneratorMatrix,
) -> Result<MonotonicityVerdict> {
    if a_base.size() != a_perturbed.size() {
        return Err(Error::NotComparable(format!(
            "sizes differ: {} vs {}",
            a_base.size(),
            a_perturbed.size()
        )));
    }
    if !a_base.is_metzler() || !a_perturbed.is_metzler() {
        return Err(Error::NotComparable("both matrices must be Metzler".to_string()));
    }
    let base = a_base.to_dense();
    let pert = a_perturbed.to_dense();
    let diff = &pert - &base;
    let scale = a_base.inf_norm().max(a_perturbed.inf_norm()).max(1.0);
    let min_diff = diff.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min_diff < -1e-12 * scale {
        return Err(Error::NotComparable(format!(
            "perturbed matrix is not entrywise >= base (min difference {min_diff:.3e})"
        )));
    }
    if linalg::max_abs_entry(&diff) <= 1e-15 * scale {
        let s = linalg::spectral_bound(&base, "spectral_monotonicity_check")?;
        return Ok(MonotonicityVerdict::Identical { spectral_bound: s });
    }
    let s_base = linalg::spectral_bound(&base, "spectral_monotonicity_check")?;
    let s_perturbed = linalg::spectral_bound(&pert, "spectral_monotonicity_check")?;
    Ok(MonotonicityVerdict::Ordered {
        s_base,
        s_perturbed,
        margin: s_perturbed - s_base,
        strict_expected: strongly_connected(&base),
    })
}
