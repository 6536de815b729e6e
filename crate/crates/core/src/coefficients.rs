//! Operator coefficients per cell and Robin coefficient per boundary face.
//!
//! The operator is `-div(a grad u) - div(b u) + c . grad u + d0 u`; the
//! generator assembled from a field is its negative. All coefficients are
//! piecewise constant per cell; `beta` lives on boundary faces.

use crate::error::{Error, Result};
use crate::geometry::Grid;

#[derive(Debug, Clone)]
pub struct CoefficientField {
    /// Per-cell diffusion matrix; only `a[k][k]` enters the flux stencil,
    /// the full matrix enters the ellipticity check.
    pub a: Vec<[[f64; 2]; 2]>,
    /// Per-cell divergence-form drift.
    pub b: Vec<[f64; 2]>,
    /// Per-cell advective drift.
    pub c: Vec<[f64; 2]>,
    /// Per-cell reaction coefficient.
    pub d0: Vec<f64>,
    /// Per-boundary-face Robin coefficient, nonnegative.
    pub beta: Vec<f64>,
}

fn identity2() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

impl CoefficientField {
    /// The Laplacian: a = I, b = c = 0, d0 = 0, beta = 0.
    pub fn laplace(grid: &Grid) -> Self {
        Self::constant(grid, identity2(), [0.0; 2], [0.0; 2], 0.0)
    }

    /// Spatially constant coefficients, beta = 0 on all faces.
    pub fn constant(grid: &Grid, a: [[f64; 2]; 2], b: [f64; 2], c: [f64; 2], d0: f64) -> Self {
        let n = grid.n_cells();
        CoefficientField {
            a: vec![a; n],
            b: vec![b; n],
            c: vec![c; n],
            d0: vec![d0; n],
            beta: vec![0.0; grid.n_faces()],
        }
    }

    pub fn with_beta_constant(mut self, beta: f64) -> Self {
        for v in self.beta.iter_mut() {
            *v = beta;
        }
        self
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = beta;
        self
    }

    /// Smallest eigenvalue of sym(a) over all cells; the strict ellipticity
    /// constant eta. Fails when it is not positive.
    pub fn ellipticity_constant(&self, grid: &Grid) -> Result<f64> {
        let mut eta = f64::INFINITY;
        for a in &self.a {
            let lam = if grid.dimension == 1 {
                a[0][0]
            } else {
                min_eig_sym2(a)
            };
            eta = eta.min(lam);
        }
        if eta > 0.0 {
            Ok(eta)
        } else {
            Err(Error::NonElliptic { min_eigenvalue: eta })
        }
    }

    /// Shape checks, sign checks for beta, ellipticity, and the mesh Peclet
    /// number max |b+c| dx / (2 eta).
    pub fn validate(&self, grid: &Grid) -> Result<FieldDiagnostics> {
        let n = grid.n_cells();
        if self.a.len() != n || self.b.len() != n || self.c.len() != n || self.d0.len() != n {
            return Err(Error::InvalidField(format!(
                "per-cell arrays must have length {n} (a: {}, b: {}, c: {}, d0: {})",
                self.a.len(),
                self.b.len(),
                self.c.len(),
                self.d0.len()
            )));
        }
        if self.beta.len() != grid.n_faces() {
            return Err(Error::InvalidField(format!(
                "beta must have one value per boundary face ({}), got {}",
                grid.n_faces(),
                self.beta.len()
            )));
        }
        for (z, &beta) in self.beta.iter().enumerate() {
            if !(beta >= 0.0) {
                return Err(Error::InvalidField(format!(
                    "beta must be nonnegative, face {z} has {beta}"
                )));
            }
        }
        let eta = self.ellipticity_constant(grid)?;
        let dx_max = (0..grid.dimension)
            .map(|k| grid.spacing[k])
            .fold(0.0_f64, f64::max);
        let mut peclet: f64 = 0.0;
        for i in 0..n {
            let mut norm_sq = 0.0;
            for k in 0..grid.dimension {
                let v = self.b[i][k] + self.c[i][k];
                norm_sq += v * v;
            }
            peclet = peclet.max(norm_sq.sqrt() * dx_max / (2.0 * eta));
        }
        Ok(FieldDiagnostics {
            eta,
            peclet,
            peclet_warning: peclet >= 1.0,
        })
    }

    /// Discrete divergence of b: central differences per axis, one-sided at
    /// boundary cells.
    pub fn discrete_divergence_b(&self, grid: &Grid) -> Vec<f64> {
        let n = grid.n_cells();
        let mut div = vec![0.0; n];
        for i in 0..n {
            for axis in 0..grid.dimension {
                let h = grid.spacing[axis];
                let minus = grid.neighbor(i, axis, -1);
                let plus = grid.neighbor(i, axis, 1);
                div[i] += match (minus, plus) {
                    (Some(m), Some(p)) => (self.b[p][axis] - self.b[m][axis]) / (2.0 * h),
                    (None, Some(p)) => (self.b[p][axis] - self.b[i][axis]) / h,
                    (Some(m), None) => (self.b[i][axis] - self.b[m][axis]) / h,
                    (None, None) => 0.0,
                };
            }
        }
        div
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FieldDiagnostics {
    pub eta: f64,
    pub peclet: f64,
    pub peclet_warning: bool,
}

/// Smaller eigenvalue of the symmetric part of a 2x2 matrix.
fn min_eig_sym2(a: &[[f64; 2]; 2]) -> f64 {
    let p = a[0][0];
    let r = a[1][1];
    let q = 0.5 * (a[0][1] + a[1][0]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    mean - rad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_eta_one() {
        let g = Grid::rectangle(2, 2, 1.0, 1.0).unwrap();
        let f = CoefficientField::laplace(&g);
        assert_eq!(f.ellipticity_constant(&g).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_off_diagonal_eta() {
        // eig of [[2,1],[1,2]] are {1, 3}
        let g = Grid::rectangle(2, 2, 1.0, 1.0).unwrap();
        let f = CoefficientField::constant(&g, [[2.0, 1.0], [1.0, 2.0]], [0.0; 2], [0.0; 2], 0.0);
        assert!((f.ellipticity_constant(&g).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // sym eig of [[1,3],[3,1]] are {-2, 4}
        let g = Grid::rectangle(2, 2, 1.0, 1.0).unwrap();
        let f = CoefficientField::constant(&g, [[1.0, 3.0], [3.0, 1.0]], [0.0; 2], [0.0; 2], 0.0);
        match f.ellipticity_constant(&g) {
            Err(Error::NonElliptic { min_eigenvalue }) => {
                assert!((min_eigenvalue + 2.0).abs() < 1e-15)
            }
            other => panic!("expected NonElliptic, got {other:?}"),
        }
    }

    #[test]
    fn ellipticity_invariant_under_symmetrization() {
        let g = Grid::rectangle(2, 2, 1.0, 1.0).unwrap();
        let a = [[2.0, 0.6], [0.2, 1.5]];
        let sym = [[2.0, 0.4], [0.4, 1.5]];
        let f1 = CoefficientField::constant(&g, a, [0.0; 2], [0.0; 2], 0.0);
        let f2 = CoefficientField::constant(&g, sym, [0.0; 2], [0.0; 2], 0.0);
        assert_eq!(
            f1.ellipticity_constant(&g).unwrap(),
            f2.ellipticity_constant(&g).unwrap()
        );
    }

    #[test]
    fn peclet_number() {
        let g = Grid::interval(4, 1.0).unwrap();
        let zero_drift = CoefficientField::laplace(&g);
        let d = zero_drift.validate(&g).unwrap();
        assert_eq!(d.peclet, 0.0);
        assert!(!d.peclet_warning);

        let drift = CoefficientField::constant(&g, identity2(), [2.0, 0.0], [0.0; 2], 0.0);
        let d = drift.validate(&g).unwrap();
        assert!((d.peclet - 0.25).abs() < 1e-15);
    }

    #[test]
    fn negative_beta_rejected() {
        let g = Grid::interval(4, 1.0).unwrap();
        let mut f = CoefficientField::laplace(&g);
        f.beta[1] = -0.1;
        assert!(matches!(f.validate(&g), Err(Error::InvalidField(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Grid::interval(4, 1.0).unwrap();
        let mut f = CoefficientField::laplace(&g);
        f.d0.pop();
        assert!(matches!(f.validate(&g), Err(Error::InvalidField(_))));
    }

    #[test]
    fn divergence_of_constant_field_vanishes() {
        let g = Grid::interval(6, 1.0).unwrap();
        let f = CoefficientField::constant(&g, identity2(), [3.0, 0.0], [0.0; 2], 0.0);
        for v in f.discrete_divergence_b(&g) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn divergence_of_linear_field_is_exact() {
        let g = Grid::interval(8, 1.0).unwrap();
        let mut f = CoefficientField::laplace(&g);
        for (i, center) in g.cell_centers.iter().enumerate() {
            f.b[i] = [center[0], 0.0];
        }
        for v in f.discrete_divergence_b(&g) {
            assert!((v - 1.0).abs() < 1e-12);
        }

        let g2 = Grid::rectangle(4, 4, 1.0, 1.0).unwrap();
        let mut f2 = CoefficientField::laplace(&g2);
        for (i, center) in g2.cell_centers.iter().enumerate() {
            f2.b[i] = [center[0], center[1]];
        }
        for v in f2.discrete_divergence_b(&g2) {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_linear_in_b() {
        let g = Grid::interval(5, 1.0).unwrap();
        let mut f1 = CoefficientField::laplace(&g);
        let mut f2 = CoefficientField::laplace(&g);
        let mut sum = CoefficientField::laplace(&g);
        for i in 0..g.n_cells() {
            let x = g.cell_centers[i][0];
            f1.b[i] = [x * x, 0.0];
            f2.b[i] = [1.0 - x, 0.0];
            sum.b[i] = [x * x + (1.0 - x), 0.0];
        }
        let d1 = f1.discrete_divergence_b(&g);
        let d2 = f2.discrete_divergence_b(&g);
        let ds = sum.discrete_divergence_b(&g);
        for i in 0..g.n_cells() {
            assert!((d1[i] + d2[i] - ds[i]).abs() < 1e-13);
        }
    }
}
