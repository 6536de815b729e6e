//! Assembly of the discrete generator.
//!
//! The local generator A0 is the cell-centered finite-volume discretization
//! of `u -> div(a grad u) + div(b u) - c . grad u - d0 u` with homogeneous
//! Robin closure at boundary faces: the imposed conormal flux through a face
//! is `-beta u` with the cell value standing in for the trace. The nonlocal
//! perturbation enters as `A_Phi = A0 + E Phi`, where E injects per-face
//! boundary data into boundary-cell rows (entry `w/vol`) and `Phi[z,.] u`
//! evaluates the measure pairing of face z.
//!
//! Interior fluxes use the harmonic mean of `a` and the arithmetic mean of
//! `b`, discretized centrally; `c . grad u` is central with one-sided
//! differences in boundary cells. With the cell-value trace closure, the
//! row-sum identities relating masses, beta and the drift's conormal term
//! hold to rounding, which the time stepper then preserves.

use std::io::Write;

use ndarray::Array2;

use crate::coefficients::CoefficientField;
use crate::error::Result;
use crate::geometry::Grid;
use crate::linalg;
use crate::measures::BoundaryMeasureFamily;

/// Cell count above which assembled matrices switch to sparse storage.
pub const DENSE_CELL_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    A0,
    APhi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Array2<f64>),
    Sparse(Csr),
}

/// Square real matrix over cells representing a generator.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub kind: MatrixKind,
    size: usize,
    storage: Storage,
}

impl GeneratorMatrix {
    /// Wrap an existing dense matrix.
    pub fn from_dense(kind: MatrixKind, m: Array2<f64>) -> Self {
        let size = m.nrows();
        assert_eq!(size, m.ncols(), "generator matrices are square");
        GeneratorMatrix { kind, size, storage: Storage::Dense(m) }
    }

    fn from_triplets(kind: MatrixKind, size: usize, triplets: &[(usize, usize, f64)], storage: StorageKind) -> Self {
        let storage = match storage {
            StorageKind::Dense => {
                let mut m = Array2::<f64>::zeros((size, size));
                for &(i, j, v) in triplets {
                    m[(i, j)] += v;
                }
                Storage::Dense(m)
            }
            StorageKind::Sparse => Storage::Sparse(Csr::from_triplets(size, triplets)),
        };
        GeneratorMatrix { kind, size, storage }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn storage_kind(&self) -> StorageKind {
        match self.storage {
            Storage::Dense(_) => StorageKind::Dense,
            Storage::Sparse(_) => StorageKind::Sparse,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(csr) => csr.to_dense(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse(csr) => csr.entry(i, j),
        }
    }

    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(m) => {
                let mut out = vec![0.0; self.size];
                for i in 0..self.size {
                    let mut acc = 0.0;
                    for j in 0..self.size {
                        acc += m[(i, j)] * u[j];
                    }
                    out[i] = acc;
                }
                out
            }
            Storage::Sparse(csr) => csr.matvec(u),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matvec(&vec![1.0; self.size])
    }

    /// Exact Metzler check: every off-diagonal entry nonnegative.
    pub fn is_metzler(&self) -> bool {
        match &self.storage {
            Storage::Dense(m) => {
                for i in 0..self.size {
                    for j in 0..self.size {
                        if i != j && m[(i, j)] < 0.0 {
                            return false;
                        }
                    }
                }
                true
            }
            Storage::Sparse(csr) => csr.iter().all(|(i, j, v)| i == j || v >= 0.0),
        }
    }

    pub fn inf_norm(&self) -> f64 {
        let mut norm: f64 = 0.0;
        match &self.storage {
            Storage::Dense(m) => {
                for i in 0..self.size {
                    let row: f64 = (0..self.size).map(|j| m[(i, j)].abs()).sum();
                    norm = norm.max(row);
                }
            }
            Storage::Sparse(csr) => {
                let mut row_abs = vec![0.0; self.size];
                for (i, _, v) in csr.iter() {
                    row_abs[i] += v.abs();
                }
                norm = row_abs.iter().fold(0.0, |a: f64, &b| a.max(b));
            }
        }
        norm
    }

    /// Matrix-market coordinate export, for debugging.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        let entries: Vec<(usize, usize, f64)> = match &self.storage {
            Storage::Dense(m) => {
                let mut v = Vec::new();
                for i in 0..self.size {
                    for j in 0..self.size {
                        if m[(i, j)] != 0.0 {
                            v.push((i, j, m[(i, j)]));
                        }
                    }
                }
                v
            }
            Storage::Sparse(csr) => csr.iter().filter(|&(_, _, v)| v != 0.0).collect(),
        };
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.size, self.size, entries.len())?;
        for (i, j, v) in entries {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// Minimal CSR storage; duplicate triplets are summed in insertion order.
#[derive(Debug, Clone)]
struct Csr {
    size: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn from_triplets(size: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable sort keeps insertion order within one (row, col) slot, so
        // accumulation order matches the dense path bit for bit
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut rows: Vec<usize> = Vec::new();
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for &k in &order {
            let (i, j, v) = triplets[k];
            if rows.last() == Some(&i) && col_idx.last() == Some(&j) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
            }
        }
        let mut row_ptr = vec![0usize; size + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..size {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr { size, row_ptr, col_idx, values }
    }

    fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.size, self.size));
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                acc += self.values[k];
            }
        }
        acc
    }

    fn matvec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (i, j, v) in self.iter() {
            out[i] += v * u[j];
        }
        out
    }
}

fn harmonic_mean(x: f64, y: f64) -> f64 {
    2.0 * x * y / (x + y)
}

/// Triplets of the local generator, emitted in a fixed per-cell order so the
/// oracle assembler can reproduce the sums exactly.
fn a0_triplets(grid: &Grid, coeff: &CoefficientField) -> Vec<(usize, usize, f64)> {
    let n = grid.n_cells();
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    // face lookup: boundary face index by (cell, axis, side)
    let face_of = |cell: usize, axis: usize, side: i32| -> Option<usize> {
        grid.boundary_faces
            .iter()
            .find(|f| {
                f.adjacent_cell == cell
                    && f.axis == axis
                    && (f.outward_normal[axis] < 0.0) == (side < 0)
            })
            .map(|f| f.index)
    };
    for i in 0..n {
        for axis in 0..grid.dimension {
            let h = grid.spacing[axis];
            for side in [-1i32, 1i32] {
                match grid.neighbor(i, axis, side) {
                    Some(j) => {
                        let a_f = harmonic_mean(coeff.a[i][axis][axis], coeff.a[j][axis][axis]);
                        let diff = a_f / (h * h);
                        t.push((i, j, diff));
                        t.push((i, i, -diff));
                        let b_f = 0.5 * (coeff.b[i][axis] + coeff.b[j][axis]);
                        let drift = side as f64 * b_f / (2.0 * h);
                        t.push((i, i, drift));
                        t.push((i, j, drift));
                    }
                    None => {
                        let z = face_of(i, axis, side)
                            .expect("boundary cell without a boundary face");
                        t.push((i, i, -coeff.beta[z] / h));
                    }
                }
            }
            // advective term -c . grad u
            let c = coeff.c[i][axis];
            if c != 0.0 {
                let minus = grid.neighbor(i, axis, -1);
                let plus = grid.neighbor(i, axis, 1);
                match (minus, plus) {
                    (Some(m), Some(p)) => {
                        t.push((i, p, -c / (2.0 * h)));
                        t.push((i, m, c / (2.0 * h)));
                    }
                    (None, Some(p)) => {
                        t.push((i, p, -c / h));
                        t.push((i, i, c / h));
                    }
                    (Some(m), None) => {
                        t.push((i, i, -c / h));
                        t.push((i, m, c / h));
                    }
                    (None, None) => {}
                }
            }
        }
        if coeff.d0[i] != 0.0 {
            t.push((i, i, -coeff.d0[i]));
        }
    }
    t
}

fn storage_for(n: usize) -> StorageKind {
    if n <= DENSE_CELL_LIMIT {
        StorageKind::Dense
    } else {
        StorageKind::Sparse
    }
}

/// Local Robin generator A0.
pub fn assemble_a0(grid: &Grid, coeff: &CoefficientField) -> Result<GeneratorMatrix> {
    assemble_a0_with_storage(grid, coeff, storage_for(grid.n_cells()))
}

pub fn assemble_a0_with_storage(
    grid: &Grid,
    coeff: &CoefficientField,
    storage: StorageKind,
) -> Result<GeneratorMatrix> {
    coeff.validate(grid)?;
    let t = a0_triplets(grid, coeff);
    Ok(GeneratorMatrix::from_triplets(MatrixKind::A0, grid.n_cells(), &t, storage))
}

/// Boundary injection E (cells x faces) and nonlocal pairing matrix Phi
/// (faces x cells).
#[derive(Debug, Clone)]
pub struct BoundaryOperatorSet {
    pub e: Array2<f64>,
    pub phi: Array2<f64>,
}

impl BoundaryOperatorSet {
    pub fn assemble(grid: &Grid, family: &BoundaryMeasureFamily) -> Self {
        let n = grid.n_cells();
        let m = grid.n_faces();
        let mut e = Array2::zeros((n, m));
        for f in &grid.boundary_faces {
            e[(f.adjacent_cell, f.index)] = f.surface_weight / grid.cell_volume;
        }
        let mut phi = Array2::zeros((m, n));
        for (z, measure) in family.per_face.iter().enumerate() {
            for &(cell, w, _) in &measure.atoms {
                phi[(z, cell)] += w;
            }
            for (j, &rho) in measure.density.iter().enumerate() {
                phi[(z, j)] += rho * grid.cell_volume;
            }
        }
        BoundaryOperatorSet { e, phi }
    }

    /// The perturbation E * Phi as triplets in ascending face order.
    fn perturbation_triplets(&self, grid: &Grid) -> Vec<(usize, usize, f64)> {
        let n = grid.n_cells();
        let mut t = Vec::new();
        for f in &grid.boundary_faces {
            let i = f.adjacent_cell;
            let scale = self.e[(i, f.index)];
            for j in 0..n {
                let v = self.phi[(f.index, j)];
                if v != 0.0 {
                    t.push((i, j, scale * v));
                }
            }
        }
        t
    }

    /// E * Phi as a dense matrix, accumulated in the same order as the
    /// triplets.
    pub fn perturbation_matrix(&self, grid: &Grid) -> Array2<f64> {
        let n = grid.n_cells();
        let mut m = Array2::zeros((n, n));
        for (i, j, v) in self.perturbation_triplets(grid) {
            m[(i, j)] += v;
        }
        m
    }

    /// Phi applied to a per-cell vector: the per-face pairings.
    pub fn apply_phi(&self, u: &[f64]) -> Vec<f64> {
        let (m, n) = self.phi.dim();
        let mut out = vec![0.0; m];
        for z in 0..m {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.phi[(z, j)] * u[j];
            }
            out[z] = acc;
        }
        out
    }
}

/// Perturbed generator A_Phi = A0 + E * Phi together with the boundary
/// operators it was built from.
pub fn assemble_a_phi(
    grid: &Grid,
    coeff: &CoefficientField,
    family: &BoundaryMeasureFamily,
) -> Result<(GeneratorMatrix, BoundaryOperatorSet)> {
    assemble_a_phi_with_storage(grid, coeff, family, storage_for(grid.n_cells()))
}

pub fn assemble_a_phi_with_storage(
    grid: &Grid,
    coeff: &CoefficientField,
    family: &BoundaryMeasureFamily,
    storage: StorageKind,
) -> Result<(GeneratorMatrix, BoundaryOperatorSet)> {
    coeff.validate(grid)?;
    let ops = BoundaryOperatorSet::assemble(grid, family);
    let mut t = a0_triplets(grid, coeff);
    t.extend(ops.perturbation_triplets(grid));
    let m = GeneratorMatrix::from_triplets(MatrixKind::APhi, grid.n_cells(), &t, storage);
    Ok((m, ops))
}

/// How the discrete boundary operator reconstructs the conormal flux.
#[derive(Debug, Clone, Copy)]
pub enum BoundaryReadMode {
    /// One-sided gradient plus the drift's conormal term; exact on constants.
    OneSided,
    /// Flux balance of the maximal-operator residual `lambda u - A_max u`;
    /// reproduces the boundary datum of resolvent solutions exactly wherever
    /// a cell owns a single boundary face. Corner cells (two faces) fall back
    /// to the one-sided read.
    Balance { lambda: f64 },
}

/// Matrix of the discrete boundary operator `(Bu)(z) = beta(z) u + conormal
/// flux`, faces x cells.
pub fn discrete_b_matrix(
    grid: &Grid,
    coeff: &CoefficientField,
    mode: BoundaryReadMode,
) -> Result<Array2<f64>> {
    let n = grid.n_cells();
    let m = grid.n_faces();
    let mut b = Array2::zeros((m, n));

    let a_max = match mode {
        BoundaryReadMode::Balance { .. } => {
            let mut free = coeff.clone();
            for v in free.beta.iter_mut() {
                *v = 0.0;
            }
            Some(assemble_a0_with_storage(grid, &free, StorageKind::Dense)?.to_dense())
        }
        BoundaryReadMode::OneSided => None,
    };

    for face in &grid.boundary_faces {
        let i = face.adjacent_cell;
        let z = face.index;
        let axis = face.axis;
        let single_face = grid.faces_of_cell(i).len() == 1;
        b[(z, i)] += coeff.beta[z];
        match (&mode, single_face) {
            (BoundaryReadMode::Balance { lambda }, true) => {
                let a_max = a_max.as_ref().unwrap();
                let scale = grid.cell_volume / face.surface_weight;
                for j in 0..n {
                    b[(z, j)] -= scale * a_max[(i, j)];
                }
                b[(z, i)] += scale * lambda;
            }
            _ => {
                // one-sided normal gradient through the inward neighbor
                let nu = face.outward_normal[axis];
                let side = if nu < 0.0 { 1 } else { -1 };
                let j = grid
                    .neighbor(i, axis, side)
                    .expect("boundary cell must have an inward neighbor");
                let h = grid.spacing[axis];
                let a = coeff.a[i][axis][axis];
                b[(z, i)] += a / h;
                b[(z, j)] -= a / h;
                b[(z, i)] += coeff.b[i][axis] * nu;
            }
        }
    }
    Ok(b)
}

/// Apply the discrete boundary operator to a per-cell vector.
pub fn discrete_b(
    grid: &Grid,
    coeff: &CoefficientField,
    u: &[f64],
    mode: BoundaryReadMode,
) -> Result<Vec<f64>> {
    let b = discrete_b_matrix(grid, coeff, mode)?;
    let (m, n) = b.dim();
    let mut out = vec![0.0; m];
    for z in 0..m {
        let mut acc = 0.0;
        for j in 0..n {
            acc += b[(z, j)] * u[j];
        }
        out[z] = acc;
    }
    Ok(out)
}

pub use crate::linalg::max_abs_entry;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DensitySpec, MeasureSpec};

    fn n2_grid() -> Grid {
        Grid::interval(2, 1.0).unwrap()
    }

    #[test]
    fn neumann_laplacian_n2() {
        let g = n2_grid();
        let coeff = CoefficientField::laplace(&g);
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let expected = [[-4.0, 4.0], [4.0, -4.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a0.entry(i, j), expected[i][j]);
            }
        }
    }

    #[test]
    fn robin_adds_to_diagonal() {
        let g = n2_grid();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let expected = [[-6.0, 4.0], [4.0, -6.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a0.entry(i, j), expected[i][j]);
            }
        }
    }

    #[test]
    fn reaction_subtracts_identity() {
        let g = n2_grid();
        let base = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let with_d0 = {
            let mut f = base.clone();
            for v in f.d0.iter_mut() {
                *v = 1.0;
            }
            f
        };
        let a = assemble_a0(&g, &base).unwrap();
        let b = assemble_a0(&g, &with_d0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = a.entry(i, j) - if i == j { 1.0 } else { 0.0 };
                assert_eq!(b.entry(i, j), expected);
            }
        }
    }

    #[test]
    fn zero_measure_gives_a0() {
        let g = n2_grid();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let fam = BoundaryMeasureFamily::zero(&g);
        let (a_phi, ops) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let a0 = assemble_a0(&g, &coeff).unwrap();
        assert_eq!(max_abs_entry(&ops.phi), 0.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a_phi.entry(i, j), a0.entry(i, j));
            }
        }
    }

    #[test]
    fn atom_perturbation_hand_example() {
        // left face sees delta at cell 1 with weight 1; E entry is w/vol = 2
        let g = n2_grid();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let parts = vec![
            (vec![0], MeasureSpec::atom([0.75, 0.0], 1.0)),
            (vec![1], MeasureSpec::zero()),
        ];
        let fam = BoundaryMeasureFamily::piecewise(&parts, &g).unwrap();
        let (a_phi, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let expected = [[-6.0, 6.0], [4.0, -6.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a_phi.entry(i, j), expected[i][j]);
            }
        }
    }

    #[test]
    fn phi_times_ones_is_masses() {
        let g = Grid::interval(8, 1.0).unwrap();
        let spec = MeasureSpec {
            atoms: vec![([0.4, 0.0], 0.25)],
            density: DensitySpec::Uniform(0.5),
        };
        let fam = BoundaryMeasureFamily::constant(&spec, &g).unwrap();
        let ops = BoundaryOperatorSet::assemble(&g, &fam);
        let ones = vec![1.0; g.n_cells()];
        let masses = fam.masses(&g);
        for (got, want) in ops.apply_phi(&ones).iter().zip(&masses) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn a_phi_is_a0_plus_e_phi() {
        let g = Grid::interval(8, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(0.5);
        let fam =
            BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.7), &g).unwrap();
        let (a_phi, ops) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let sum = a0.to_dense() + ops.perturbation_matrix(&g);
        let diff = &a_phi.to_dense() - &sum;
        assert_eq!(max_abs_entry(&diff), 0.0);
    }

    #[test]
    fn neumann_conservation() {
        // mu = 0, d0 = 0, b = c = 0, beta = 0: A0 . 1 = 0 exactly
        for g in [
            Grid::interval(16, 1.0).unwrap(),
            Grid::rectangle(4, 5, 2.0, 1.0).unwrap(),
        ] {
            let coeff = CoefficientField::laplace(&g);
            let a0 = assemble_a0(&g, &coeff).unwrap();
            for s in a0.row_sums() {
                assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn row_sum_identity() {
        // b = c = 0: boundary rows sum to (mass - beta) w / vol - d0
        let g = Grid::rectangle(3, 3, 1.0, 1.0).unwrap();
        let mut coeff = CoefficientField::laplace(&g).with_beta_constant(0.75);
        for v in coeff.d0.iter_mut() {
            *v = 0.25;
        }
        let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.4), &g).unwrap();
        let (a_phi, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let sums = a_phi.row_sums();
        let masses = fam.masses(&g);
        for i in 0..g.n_cells() {
            let mut expected = -0.25;
            for f in g.faces_of_cell(i) {
                expected += (masses[f.index] - coeff.beta[f.index]) * f.surface_weight
                    / g.cell_volume;
            }
            assert!(
                (sums[i] - expected).abs() <= 1e-12 * a_phi.inf_norm(),
                "cell {i}: {} vs {}",
                sums[i],
                expected
            );
        }
    }

    #[test]
    fn assembly_is_affine_in_beta_and_mu() {
        let g = Grid::interval(6, 1.0).unwrap();
        let beta1 = vec![0.3, 0.9];
        let beta2 = vec![0.5, 0.1];
        let spec1 = MeasureSpec::uniform(0.4);
        let spec2 = MeasureSpec::atom([0.3, 0.0], 0.2);

        let both_beta: Vec<f64> = beta1.iter().zip(&beta2).map(|(x, y)| x + y).collect();
        let c0 = CoefficientField::laplace(&g);
        let f1 = BoundaryMeasureFamily::constant(&spec1, &g).unwrap();
        let f2 = BoundaryMeasureFamily::constant(&spec2, &g).unwrap();
        let f12 = BoundaryMeasureFamily::constant(
            &MeasureSpec {
                atoms: spec2.atoms.clone(),
                density: spec1.density.clone(),
            },
            &g,
        )
        .unwrap();

        let (a1, _) = assemble_a_phi(&g, &c0.clone().with_beta(beta1), &f1).unwrap();
        let (a2, _) = assemble_a_phi(&g, &c0.clone().with_beta(beta2), &f2).unwrap();
        let (a12, _) = assemble_a_phi(&g, &c0.clone().with_beta(both_beta), &f12).unwrap();
        let a00 = assemble_a0(&g, &c0).unwrap();

        let lhs = a12.to_dense();
        let rhs = a1.to_dense() + a2.to_dense() - a00.to_dense();
        let scale = a12.inf_norm();
        assert!(max_abs_entry(&(&lhs - &rhs)) <= 1e-14 * scale);
    }

    #[test]
    fn metzler_iff_family_positive() {
        let g = Grid::interval(8, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let pos = BoundaryMeasureFamily::constant(
            &MeasureSpec {
                atoms: vec![([0.4, 0.0], 0.3)],
                density: DensitySpec::Uniform(0.2),
            },
            &g,
        )
        .unwrap();
        let (a_pos, _) = assemble_a_phi(&g, &coeff, &pos).unwrap();
        assert!(a_pos.is_metzler());

        // a negative atom at an interior cell breaks Metzler
        let neg = BoundaryMeasureFamily::constant(&MeasureSpec::atom([0.4, 0.0], -0.3), &g)
            .unwrap();
        let (a_neg, _) = assemble_a_phi(&g, &coeff, &neg).unwrap();
        assert!(!a_neg.is_metzler());
        assert!(!neg.is_positive());
    }

    #[test]
    fn discrete_b_on_constants() {
        let g = Grid::interval(4, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta(vec![0.5, 1.5]);
        let ones = vec![1.0; 4];
        let b = discrete_b(&g, &coeff, &ones, BoundaryReadMode::OneSided).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-14);
        assert!((b[1] - 1.5).abs() < 1e-14);

        // with drift the conormal term b . nu shows up
        let drifty = CoefficientField::constant(
            &g,
            [[1.0, 0.0], [0.0, 1.0]],
            [0.7, 0.0],
            [0.0; 2],
            0.0,
        )
        .with_beta(vec![0.5, 1.5]);
        let b = discrete_b(&g, &drifty, &ones, BoundaryReadMode::OneSided).unwrap();
        assert!((b[0] - (0.5 - 0.7)).abs() < 1e-14);
        assert!((b[1] - (1.5 + 0.7)).abs() < 1e-14);

        // the balance read agrees on constants when d0 = 0
        let b = discrete_b(&g, &drifty, &ones, BoundaryReadMode::Balance { lambda: 0.0 }).unwrap();
        assert!((b[0] - (0.5 - 0.7)).abs() < 1e-13);
        assert!((b[1] - (1.5 + 0.7)).abs() < 1e-13);
    }

    #[test]
    fn dense_and_sparse_storage_agree()  {
        let g = Grid::rectangle(3, 4, 1.0, 2.0).unwrap();
        let coeff = CoefficientField::constant(
            &g,
            [[1.5, 0.0], [0.0, 0.8]],
            [0.2, -0.1],
            [0.05, 0.0],
            0.3,
        )
        .with_beta_constant(0.6);
        let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(0.5), &g).unwrap();
        let (dense, _) =
            assemble_a_phi_with_storage(&g, &coeff, &fam, StorageKind::Dense).unwrap();
        let (sparse, _) =
            assemble_a_phi_with_storage(&g, &coeff, &fam, StorageKind::Sparse).unwrap();
        let diff = &dense.to_dense() - &sparse.to_dense();
        assert!(max_abs_entry(&diff) <= 1e-12 * dense.inf_norm());
        let u: Vec<f64> = (0..g.n_cells()).map(|i| (i as f64 * 0.37).sin()).collect();
        let du = dense.matvec(&u);
        let su = sparse.matvec(&u);
        for (x, y) in du.iter().zip(&su) {
            assert!((x - y).abs() <= 1e-12 * dense.inf_norm());
        }
    }

    #[test]
    fn matrix_market_export_shape() {
        let g = n2_grid();
        let coeff = CoefficientField::laplace(&g);
        let a0 = assemble_a0(&g, &coeff).unwrap();
        let mut buf = Vec::new();
        a0.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
        assert!(text.contains("2 2 4"));
    }
}
