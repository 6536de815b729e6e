//! Independent brute-force references used by the test suites.
//!
//! `naive_assemble` re-derives the generator from the per-cell flux balance
//! with its own code path; agreement with the assembly module is evidence,
//! not tautology. Contributions are accumulated in the same canonical
//! per-cell order (axis, side; diffusion before drift; then advection,
//! reaction, boundary data), so matching entries agree to rounding.

use ndarray::Array2;

use crate::coefficients::CoefficientField;
use crate::geometry::Grid;
use crate::measures::BoundaryMeasureFamily;

/// Reference assembler: dense, loop per cell and face, no shared code with
/// the assembly module.
pub fn naive_assemble(
    grid: &Grid,
    coeff: &CoefficientField,
    family: &BoundaryMeasureFamily,
) -> Array2<f64> {
    let n = grid.n_cells();
    let mut m = Array2::<f64>::zeros((n, n));

    for i in 0..n {
        for axis in 0..grid.dimension {
            let h = grid.spacing[axis];
            for side in [-1i32, 1i32] {
                match grid.neighbor(i, axis, side) {
                    Some(j) => {
                        // diffusive flux with harmonic face coefficient
                        let ai = coeff.a[i][axis][axis];
                        let aj = coeff.a[j][axis][axis];
                        let a_face = 2.0 * ai * aj / (ai + aj);
                        let diffusion = a_face / (h * h);
                        m[(i, j)] += diffusion;
                        m[(i, i)] += -diffusion;
                        // centered drift flux through the face
                        let b_face = 0.5 * (coeff.b[i][axis] + coeff.b[j][axis]);
                        let drift = side as f64 * b_face / (2.0 * h);
                        m[(i, i)] += drift;
                        m[(i, j)] += drift;
                    }
                    None => {
                        // homogeneous Robin closure: outflux beta * u(cell)
                        let face = grid
                            .boundary_faces
                            .iter()
                            .find(|f| {
                                f.adjacent_cell == i
                                    && f.axis == axis
                                    && (f.outward_normal[axis] < 0.0) == (side < 0)
                            })
                            .expect("missing boundary face");
                        m[(i, i)] += -coeff.beta[face.index] / h;
                    }
                }
            }
            let c = coeff.c[i][axis];
            if c != 0.0 {
                let minus = grid.neighbor(i, axis, -1);
                let plus = grid.neighbor(i, axis, 1);
                match (minus, plus) {
                    (Some(mi), Some(pi)) => {
                        m[(i, pi)] += -c / (2.0 * h);
                        m[(i, mi)] += c / (2.0 * h);
                    }
                    (None, Some(pi)) => {
                        m[(i, pi)] += -c / h;
                        m[(i, i)] += c / h;
                    }
                    (Some(mi), None) => {
                        m[(i, i)] += -c / h;
                        m[(i, mi)] += c / h;
                    }
                    (None, None) => {}
                }
            }
        }
        if coeff.d0[i] != 0.0 {
            m[(i, i)] += -coeff.d0[i];
        }
    }

    // nonlocal boundary data: cell i receives (w/vol) <u, mu(z)> per face
    for face in &grid.boundary_faces {
        let i = face.adjacent_cell;
        let scale = face.surface_weight / grid.cell_volume;
        let measure = &family.per_face[face.index];
        for j in 0..n {
            let mut pairing_coeff = 0.0;
            for &(cell, w, _) in &measure.atoms {
                if cell == j {
                    pairing_coeff += w;
                }
            }
            pairing_coeff += measure.density[j] * grid.cell_volume;
            if pairing_coeff != 0.0 {
                m[(i, j)] += scale * pairing_coeff;
            }
        }
    }
    m
}

/// Eigenvalues of the 1D finite-volume Neumann Laplacian:
/// lambda_k = -(4/dx^2) sin^2(k pi / (2n)), k = 0..n-1, descending.
pub fn closed_form_neumann_eigs(n: usize, length: f64) -> Vec<f64> {
    let dx = length / n as f64;
    (0..n)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
            -(4.0 / (dx * dx)) * s * s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_a_phi;
    use crate::linalg;
    use crate::measures::{DensitySpec, MeasureSpec};

    #[test]
    fn neumann_two_cells() {
        let g = Grid::interval(2, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g);
        let fam = BoundaryMeasureFamily::zero(&g);
        let m = naive_assemble(&g, &coeff, &fam);
        assert_eq!(m[(0, 0)], -4.0);
        assert_eq!(m[(0, 1)], 4.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(m[(1, 1)], -4.0);
    }

    #[test]
    fn robin_plus_atom_two_cells() {
        let g = Grid::interval(2, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let parts = vec![
            (vec![0], MeasureSpec::atom([0.75, 0.0], 1.0)),
            (vec![1], MeasureSpec::zero()),
        ];
        let fam = BoundaryMeasureFamily::piecewise(&parts, &g).unwrap();
        let m = naive_assemble(&g, &coeff, &fam);
        assert_eq!(m[(0, 0)], -6.0);
        assert_eq!(m[(0, 1)], 6.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(m[(1, 1)], -6.0);
    }

    #[test]
    fn closed_form_values() {
        let eigs = closed_form_neumann_eigs(2, 1.0);
        assert_eq!(eigs[0], 0.0);
        assert!((eigs[1] + 8.0).abs() < 1e-12);
        let eigs = closed_form_neumann_eigs(64, 1.0);
        assert!((eigs[1] + 9.8675).abs() < 1e-3, "{}", eigs[1]);
    }

    #[test]
    fn matches_main_assembler_on_a_mixed_scenario() {
        let g = Grid::rectangle(4, 3, 1.5, 1.0).unwrap();
        let mut coeff = CoefficientField::constant(
            &g,
            [[1.2, 0.1], [0.1, 0.9]],
            [0.3, -0.2],
            [0.1, 0.05],
            0.4,
        );
        for (z, v) in coeff.beta.iter_mut().enumerate() {
            *v = 0.1 * z as f64;
        }
        let spec = MeasureSpec {
            atoms: vec![([0.7, 0.4], 0.3)],
            density: DensitySpec::Uniform(0.6),
        };
        let fam = BoundaryMeasureFamily::constant(&spec, &g).unwrap();
        let reference = naive_assemble(&g, &coeff, &fam);
        let (main, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let diff = &main.to_dense() - &reference;
        assert!(linalg::max_abs_entry(&diff) <= 1e-13);
    }
}
