//! Time evolution of u' = A u by the theta scheme and by the matrix
//! exponential, plus Markov diagnostics of the discrete semigroup.
//!
//! The default scheme is implicit Euler (theta = 1): for Metzler generators
//! the step operator (I - dt A)^{-1} is entrywise nonnegative, so
//! positivity of states is preserved unconditionally.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::assembly::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseSolver};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Theta(f64),
    Expm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvolutionWarning {
    /// Explicit part stepped above the forward-Euler bound 2 / ||A||.
    StabilityViolation { dt: f64, bound: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub scheme: Scheme,
    pub dt: f64,
    pub warnings: Vec<EvolutionWarning>,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Factored theta-scheme stepper: (I - theta dt A) u+ = (I + (1-theta) dt A) u.
pub struct ThetaStepper {
    implicit: Option<DenseSolver>,
    explicit: Array2<f64>,
    pub stability_warning: Option<EvolutionWarning>,
}

impl ThetaStepper {
    pub fn new(a: &GeneratorMatrix, dt: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::numerical(
                "theta stepper",
                format!("theta must lie in [0, 1], got {theta}"),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::numerical("theta stepper", format!("dt must be positive, got {dt}")));
        }
        let dense = a.to_dense();
        let n = dense.nrows();
        let implicit = if theta > 0.0 {
            let mut m = dense.mapv(|v| -theta * dt * v);
            for i in 0..n {
                m[(i, i)] += 1.0;
            }
            Some(DenseSolver::new(&m, "I - theta dt A")?)
        } else {
            None
        };
        let mut explicit = dense.mapv(|v| (1.0 - theta) * dt * v);
        for i in 0..n {
            explicit[(i, i)] += 1.0;
        }
        let stability_warning = if theta < 1.0 {
            let bound = 2.0 / a.inf_norm();
            (dt > bound).then_some(EvolutionWarning::StabilityViolation { dt, bound })
        } else {
            None
        };
        Ok(ThetaStepper { implicit, explicit, stability_warning })
    }

    pub fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = u.len();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.explicit[(i, j)] * u[j];
            }
            rhs[i] = acc;
        }
        match &self.implicit {
            Some(solver) => solver.solve(&rhs),
            None => Ok(rhs),
        }
    }
}

/// One theta step.
pub fn step_theta(a: &GeneratorMatrix, u: &[f64], dt: f64, theta: f64) -> Result<Vec<f64>> {
    ThetaStepper::new(a, dt, theta)?.step(u)
}

/// Repeated theta stepping until the final time reaches t_end.
pub fn evolve(
    a: &GeneratorMatrix,
    u0: &[f64],
    t_end: f64,
    dt: f64,
    theta: f64,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::numerical("evolve", format!("t_end must be positive, got {t_end}")));
    }
    let stepper = ThetaStepper::new(a, dt, theta)?;
    let n_steps = (t_end / dt).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(u0.to_vec());
    let mut u = u0.to_vec();
    for k in 1..=n_steps {
        u = stepper.step(&u)?;
        times.push(k as f64 * dt);
        states.push(u.clone());
    }
    Ok(Trajectory {
        times,
        states,
        scheme: Scheme::Theta(theta),
        dt,
        warnings: stepper.stability_warning.into_iter().collect(),
    })
}

/// Cell count above which the eigendecomposition path cedes to scaling and
/// squaring.
pub const EXPM_EIGEN_LIMIT: usize = 2048;
const EIGENBASIS_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum ExpmPath {
    Eigen,
    /// Scaling and squaring; carries the reason the eigen path was skipped.
    PadeFallback(String),
}

/// exp(t A) as a dense matrix, with the path that produced it.
pub fn expm_matrix(a: &GeneratorMatrix, t: f64) -> Result<(Array2<f64>, ExpmPath)> {
    let dense = a.to_dense();
    let n = dense.nrows();
    if n > EXPM_EIGEN_LIMIT {
        let m = linalg::expm_pade(&dense.mapv(|v| v * t))?;
        return Ok((m, ExpmPath::PadeFallback(format!("size {n} above eigen limit"))));
    }
    match eigen_expm(&dense, t) {
        Ok(m) => Ok((m, ExpmPath::Eigen)),
        Err(reason) => {
            let m = linalg::expm_pade(&dense.mapv(|v| v * t))?;
            Ok((m, ExpmPath::PadeFallback(reason)))
        }
    }
}

/// exp(t A) u0.
pub fn expm_apply(a: &GeneratorMatrix, u0: &[f64], t: f64) -> Result<(Vec<f64>, ExpmPath)> {
    let (m, path) = expm_matrix(a, t)?;
    let n = u0.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[(i, j)] * u0[j];
        }
        out[i] = acc;
    }
    Ok((out, path))
}

fn complex_norm1(m: &Array2<Complex64>) -> f64 {
    let (rows, cols) = m.dim();
    let mut norm: f64 = 0.0;
    for j in 0..cols {
        let col: f64 = (0..rows).map(|i| m[(i, j)].norm()).sum();
        norm = norm.max(col);
    }
    norm
}

fn eigen_expm(dense: &Array2<f64>, t: f64) -> std::result::Result<Array2<f64>, String> {
    use ndarray_linalg::Inverse;
    let (vals, vecs) =
        linalg::eigen_pairs(dense, "eigendecomposition for expm").map_err(|e| e.to_string())?;
    let vinv = vecs
        .inv()
        .map_err(|_| "eigenvector matrix is singular".to_string())?;
    let kappa = complex_norm1(&vecs) * complex_norm1(&vinv);
    if !kappa.is_finite() || kappa > EIGENBASIS_CONDITION_LIMIT {
        return Err(format!("ill-conditioned eigenbasis (kappa ~ {kappa:.3e})"));
    }
    let n = dense.nrows();
    let mut scaled = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let factor = (vals[j] * t).exp();
        for i in 0..n {
            scaled[(i, j)] = vecs[(i, j)] * factor;
        }
    }
    let full = scaled.dot(&vinv);
    Ok(full.mapv(|z| z.re))
}

/// Semigroup behavior extracted from two implicit-Euler runs: the constant
/// function and a nonnegative reference datum (indicator of the lower-index
/// half of the cells).
#[derive(Debug, Clone)]
pub struct MarkovDiagnostics {
    pub times: Vec<f64>,
    /// max_i (T(t) 1)_i per time.
    pub sup_t1: Vec<f64>,
    /// min_i (T(t) 1)_i per time.
    pub inf_t1: Vec<f64>,
    /// Largest signed excess of T(t) 1 over 1.
    pub max_t1_minus_1: f64,
    /// Smallest value of T(t) 1.
    pub min_t1: f64,
    /// Smallest state value over the nonnegative-datum run.
    pub min_state: f64,
    /// Plain mass of the nonnegative-datum run per time.
    pub mass_series: Vec<f64>,
}

impl MarkovDiagnostics {
    /// max over recorded times of |T(t) 1 - 1| in the sup norm.
    pub fn sup_deviation_from_one(&self) -> f64 {
        self.sup_t1
            .iter()
            .zip(&self.inf_t1)
            .map(|(s, i)| (s - 1.0).abs().max((i - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    /// True when max T(t) 1 grows from start to end.
    pub fn shows_growth(&self, tol: f64) -> bool {
        match (self.sup_t1.first(), self.sup_t1.last()) {
            (Some(first), Some(last)) => *last > first * (1.0 + tol),
            _ => false,
        }
    }
}

pub fn markov_diagnostics(
    a: &GeneratorMatrix,
    cell_volume: f64,
    t_end: f64,
    dt: f64,
) -> Result<MarkovDiagnostics> {
    let n = a.size();
    let ones = vec![1.0; n];
    let ones_run = evolve(a, &ones, t_end, dt, 1.0)?;
    let mut f = vec![0.0; n];
    for v in f.iter_mut().take(n / 2) {
        *v = 1.0;
    }
    let f_run = evolve(a, &f, t_end, dt, 1.0)?;

    let sup_t1: Vec<f64> = ones_run
        .states
        .iter()
        .map(|u| u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
        .collect();
    let inf_t1: Vec<f64> = ones_run
        .states
        .iter()
        .map(|u| u.iter().fold(f64::INFINITY, |m, &v| m.min(v)))
        .collect();
    let max_t1_minus_1 = sup_t1.iter().map(|s| s - 1.0).fold(f64::NEG_INFINITY, f64::max);
    let min_t1 = inf_t1.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let min_state = f_run
        .states
        .iter()
        .flat_map(|u| u.iter())
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let mass_series = f_run
        .states
        .iter()
        .map(|u| u.iter().sum::<f64>() * cell_volume)
        .collect();
    Ok(MarkovDiagnostics {
        times: ones_run.times,
        sup_t1,
        inf_t1,
        max_t1_minus_1,
        min_t1,
        min_state,
        mass_series,
    })
}

/// Dense weighted pairing sum_i w_i u_i.
pub fn weighted_mass(weights: &Array1<f64>, u: &[f64]) -> f64 {
    weights.iter().zip(u).map(|(w, v)| w * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_a0, assemble_a_phi};
    use crate::coefficients::CoefficientField;
    use crate::geometry::Grid;
    use crate::measures::{BoundaryMeasureFamily, MeasureSpec};
    use ndarray::array;

    fn scalar_generator(v: f64) -> GeneratorMatrix {
        dense_from(array![[v]])
    }

    fn dense_from(m: Array2<f64>) -> GeneratorMatrix {
        GeneratorMatrix::from_dense(crate::assembly::MatrixKind::A0, m)
    }

    #[test]
    fn scalar_implicit_euler() {
        let a = scalar_generator(-1.0);
        let u = step_theta(&a, &[1.0], 1.0, 1.0).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_trapezoid() {
        let a = scalar_generator(-1.0);
        let u = step_theta(&a, &[1.0], 1.0, 0.5).unwrap();
        assert!((u[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn markov_kernel_is_preserved() {
        // A 1 = 0 exactly: mass 1 equals beta 1 on the unit interval
        let g = Grid::interval(8, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(1.0), &g).unwrap();
        let (a_phi, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        for s in a_phi.row_sums() {
            assert!(s.abs() < 1e-13);
        }
        let ones = vec![1.0; 8];
        for theta in [0.0, 0.5, 1.0] {
            let u = step_theta(&a_phi, &ones, 0.001, theta).unwrap();
            for v in &u {
                assert!((v - 1.0).abs() < 1e-13, "theta {theta}: {v}");
            }
        }
    }

    #[test]
    fn stability_warning_for_explicit_scheme() {
        let g = Grid::interval(8, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g);
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let bound = 2.0 / a0.inf_norm();
        let traj = evolve(&a0, &vec![1.0; 8], 0.01, bound * 4.0, 0.0).unwrap();
        assert!(matches!(
            traj.warnings.as_slice(),
            [EvolutionWarning::StabilityViolation { .. }]
        ));
        let quiet = evolve(&a0, &vec![1.0; 8], 0.01, bound / 2.0, 0.0).unwrap();
        assert!(quiet.warnings.is_empty());
    }

    #[test]
    fn evolve_reaches_t_end() {
        let a = scalar_generator(-1.0);
        let traj = evolve(&a, &[1.0], 1.0, 0.3, 1.0).unwrap();
        assert!(*traj.times.last().unwrap() >= 1.0);
        assert_eq!(traj.states.len(), traj.times.len());
        assert_eq!(traj.states[0], vec![1.0]);
    }

    #[test]
    fn expm_identity_at_time_zero() {
        let g = Grid::interval(4, 1.0).unwrap();
        let a0 = assemble_a0(&g, &CoefficientField::laplace(&g)).unwrap();
        let u0 = vec![0.3, -0.7, 1.1, 0.0];
        let (u, _) = expm_apply(&a0, &u0, 0.0).unwrap();
        for (x, y) in u.iter().zip(&u0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn expm_relaxes_to_the_mean() {
        // eigenpairs of [[-4,4],[4,-4]]: 0 with (1,1), -8 with (1,-1)
        let a = dense_from(array![[-4.0, 4.0], [4.0, -4.0]]);
        let (u, path) = expm_apply(&a, &[1.0, 0.0], 20.0).unwrap();
        assert_eq!(path, ExpmPath::Eigen);
        assert!((u[0] - 0.5).abs() < 1e-12);
        assert!((u[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn expm_semigroup_law() {
        let g = Grid::interval(6, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(0.5);
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let u0: Vec<f64> = (0..6).map(|i| 1.0 + (i as f64) * 0.2).collect();
        let (direct, _) = expm_apply(&a0, &u0, 0.7).unwrap();
        let (half, _) = expm_apply(&a0, &u0, 0.3).unwrap();
        let (composed, _) = expm_apply(&a0, &half, 0.4).unwrap();
        for (x, y) in direct.iter().zip(&composed) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn defective_matrix_falls_back_to_pade() {
        // Jordan block: eigenbasis is singular, exp = [[1, t], [0, 1]]
        let a = dense_from(array![[0.0, 1.0], [0.0, 0.0]]);
        let (m, path) = expm_matrix(&a, 2.0).unwrap();
        assert!(matches!(path, ExpmPath::PadeFallback(_)));
        assert!((m[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((m[(0, 1)] - 2.0).abs() < 1e-12);
        assert!(m[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn eigen_and_pade_paths_agree() {
        let g = Grid::interval(12, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.5), &g).unwrap();
        let (a_phi, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let dense = a_phi.to_dense();
        let (eig_m, path) = expm_matrix(&a_phi, 0.4).unwrap();
        assert_eq!(path, ExpmPath::Eigen);
        let pade_m = linalg::expm_pade(&dense.mapv(|v| v * 0.4)).unwrap();
        let scale = linalg::max_abs_entry(&eig_m);
        assert!(linalg::max_abs_entry(&(&eig_m - &pade_m)) <= 1e-9 * scale);
    }

    #[test]
    fn implicit_euler_converges_to_expm() {
        let g = Grid::interval(8, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let u0: Vec<f64> = g.cell_centers.iter().map(|c| c[0] * (1.0 - c[0])).collect();
        let t = 0.25;
        let (reference, _) = expm_apply(&a0, &u0, t).unwrap();
        let err = |dt: f64| {
            let traj = evolve(&a0, &u0, t, dt, 1.0).unwrap();
            traj.last_state()
                .iter()
                .zip(&reference)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err(0.025);
        let e2 = err(0.0125);
        let ratio = e1 / e2;
        assert!((1.5..2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn positivity_preserved_by_implicit_euler() {
        let g = Grid::interval(10, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(2.0);
        let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(1.0), &g).unwrap();
        let (a_phi, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        assert!(a_phi.is_metzler());
        let u0: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let traj = evolve(&a_phi, &u0, 1.0, 0.05, 1.0).unwrap();
        for state in &traj.states {
            for &v in state {
                assert!(v >= -1e-12);
            }
        }
    }

    #[test]
    fn diagnostics_on_markov_and_submarkov_scenarios() {
        let g = Grid::interval(8, 1.0).unwrap();
        let markov = {
            let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
            let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(1.0), &g).unwrap();
            assemble_a_phi(&g, &coeff, &fam).unwrap().0
        };
        let d = markov_diagnostics(&markov, g.cell_volume, 1.0, 0.05).unwrap();
        assert!(d.sup_deviation_from_one() < 1e-12);
        assert!(!d.shows_growth(1e-10));
        assert!(d.min_state >= -1e-12);

        let sub = {
            let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
            let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.25), &g).unwrap();
            assemble_a_phi(&g, &coeff, &fam).unwrap().0
        };
        let d = markov_diagnostics(&sub, g.cell_volume, 2.0, 0.05).unwrap();
        assert!(d.max_t1_minus_1 <= 1e-12);
        for pair in d.sup_t1.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }

        let supra = {
            let coeff = CoefficientField::laplace(&g);
            let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.5), &g).unwrap();
            assemble_a_phi(&g, &coeff, &fam).unwrap().0
        };
        let d = markov_diagnostics(&supra, g.cell_volume, 2.0, 0.05).unwrap();
        assert!(d.shows_growth(1e-8));
        assert!(d.max_t1_minus_1 > 0.0);
    }

    #[test]
    fn domination_of_trajectories() {
        let g = Grid::interval(10, 1.0).unwrap();
        let c1 = CoefficientField::laplace(&g).with_beta_constant(1.5);
        let c2 = CoefficientField::laplace(&g).with_beta_constant(0.75);
        let f1 = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.2), &g).unwrap();
        let f2 = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.7), &g).unwrap();
        let (a1, _) = assemble_a_phi(&g, &c1, &f1).unwrap();
        let (a2, _) = assemble_a_phi(&g, &c2, &f2).unwrap();
        let u0: Vec<f64> = (0..10).map(|i| 0.1 + (i as f64) * 0.05).collect();
        let t1 = evolve(&a1, &u0, 0.5, 0.02, 1.0).unwrap();
        let t2 = evolve(&a2, &u0, 0.5, 0.02, 1.0).unwrap();
        for (s1, s2) in t1.states.iter().zip(&t2.states) {
            for (x, y) in s1.iter().zip(s2) {
                assert!(*x <= y + 1e-12);
            }
        }
    }
}
