//! Boundary measure families: one measure per boundary face, each split into
//! an atomic part (point masses snapped to cells) and a density part on cells.
//!
//! For a per-cell vector u the pairing against the measure of face z is
//! `sum_k w_k u[cell(p_k)] + sum_i rho(z,i) u_i vol`. Absolute continuity with
//! respect to a dominating measure holds automatically here (every discrete
//! measure is a combination of cell masses), so it is documented rather than
//! checked.

use crate::error::{Error, Result};
use crate::geometry::Grid;

/// Description of one measure before snapping to a grid.
#[derive(Debug, Clone, Default)]
pub struct MeasureSpec {
    /// Point masses (location in the closed domain, signed weight).
    pub atoms: Vec<([f64; 2], f64)>,
    pub density: DensitySpec,
}

#[derive(Debug, Clone, Default)]
pub enum DensitySpec {
    #[default]
    Zero,
    /// Constant density with the given total mass over the domain.
    Uniform(f64),
    /// Explicit per-cell density values, interpreted against cell volume.
    Cells(Vec<f64>),
}

impl MeasureSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(point: [f64; 2], weight: f64) -> Self {
        MeasureSpec {
            atoms: vec![(point, weight)],
            density: DensitySpec::Zero,
        }
    }

    pub fn uniform(mass: f64) -> Self {
        MeasureSpec {
            atoms: Vec::new(),
            density: DensitySpec::Uniform(mass),
        }
    }
}

/// Snapped measure attached to one boundary face.
#[derive(Debug, Clone)]
pub struct FaceMeasure {
    /// (cell index, weight, original point) per atom.
    pub atoms: Vec<(usize, f64, [f64; 2])>,
    /// Per-cell density values.
    pub density: Vec<f64>,
}

impl FaceMeasure {
    fn from_spec(spec: &MeasureSpec, grid: &Grid) -> Result<Self> {
        let mut atoms = Vec::with_capacity(spec.atoms.len());
        for &(point, weight) in &spec.atoms {
            for axis in 0..grid.dimension {
                if point[axis] < 0.0 || point[axis] > grid.lengths[axis] {
                    return Err(Error::InvalidField(format!(
                        "atom at {point:?} lies outside the closed domain"
                    )));
                }
            }
            atoms.push((grid.snap_to_cell(point), weight, point));
        }
        let density = match &spec.density {
            DensitySpec::Zero => vec![0.0; grid.n_cells()],
            DensitySpec::Uniform(mass) => {
                vec![mass / grid.domain_measure(); grid.n_cells()]
            }
            DensitySpec::Cells(values) => {
                if values.len() != grid.n_cells() {
                    return Err(Error::InvalidField(format!(
                        "density needs {} cell values, got {}",
                        grid.n_cells(),
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        Ok(FaceMeasure { atoms, density })
    }

    fn zero(grid: &Grid) -> Self {
        FaceMeasure {
            atoms: Vec::new(),
            density: vec![0.0; grid.n_cells()],
        }
    }

    /// Signed total mass of the measure.
    pub fn mass(&self, grid: &Grid) -> f64 {
        let atom_mass: f64 = self.atoms.iter().map(|&(_, w, _)| w).sum();
        let density_mass: f64 = self.density.iter().map(|r| r * grid.cell_volume).sum();
        atom_mass + density_mass
    }

    /// Total variation norm.
    pub fn total_variation(&self, grid: &Grid) -> f64 {
        let atom_tv: f64 = self.atoms.iter().map(|&(_, w, _)| w.abs()).sum();
        let density_tv: f64 = self.density.iter().map(|r| r.abs() * grid.cell_volume).sum();
        atom_tv + density_tv
    }

    pub fn is_positive(&self) -> bool {
        self.atoms.iter().all(|&(_, w, _)| w >= 0.0) && self.density.iter().all(|&r| r >= 0.0)
    }
}

/// The map z -> mu(z), resolved per boundary face.
#[derive(Debug, Clone)]
pub struct BoundaryMeasureFamily {
    pub per_face: Vec<FaceMeasure>,
    /// Exponent of the integrability report; defaults to 2, which is valid in
    /// dimensions one and two.
    pub p_exponent: f64,
}

impl BoundaryMeasureFamily {
    /// The zero family.
    pub fn zero(grid: &Grid) -> Self {
        BoundaryMeasureFamily {
            per_face: (0..grid.n_faces()).map(|_| FaceMeasure::zero(grid)).collect(),
            p_exponent: 2.0,
        }
    }

    /// Same measure on every boundary face.
    pub fn constant(spec: &MeasureSpec, grid: &Grid) -> Result<Self> {
        let face = FaceMeasure::from_spec(spec, grid)?;
        Ok(BoundaryMeasureFamily {
            per_face: (0..grid.n_faces()).map(|_| face.clone()).collect(),
            p_exponent: 2.0,
        })
    }

    /// Piecewise-constant family: part n of the face partition receives the
    /// n-th measure. The parts must be disjoint and cover every face.
    pub fn piecewise(parts: &[(Vec<usize>, MeasureSpec)], grid: &Grid) -> Result<Self> {
        let n_faces = grid.n_faces();
        let mut assigned: Vec<Option<FaceMeasure>> = vec![None; n_faces];
        for (faces, spec) in parts {
            let measure = FaceMeasure::from_spec(spec, grid)?;
            for &z in faces {
                if z >= n_faces {
                    return Err(Error::InvalidFace { index: z, count: n_faces });
                }
                if assigned[z].is_some() {
                    return Err(Error::OverlappingPartition { face: z });
                }
                assigned[z] = Some(measure.clone());
            }
        }
        let mut per_face = Vec::with_capacity(n_faces);
        for (z, slot) in assigned.into_iter().enumerate() {
            match slot {
                Some(m) => per_face.push(m),
                None => return Err(Error::UncoveredFace { face: z }),
            }
        }
        Ok(BoundaryMeasureFamily { per_face, p_exponent: 2.0 })
    }

    pub fn with_p_exponent(mut self, p: f64) -> Self {
        self.p_exponent = p;
        self
    }

    /// Pairing <u, mu(z)>.
    pub fn pair(&self, u: &[f64], z: usize, grid: &Grid) -> Result<f64> {
        let face = self
            .per_face
            .get(z)
            .ok_or(Error::InvalidFace { index: z, count: self.per_face.len() })?;
        let mut value = 0.0;
        for &(cell, w, _) in &face.atoms {
            value += w * u[cell];
        }
        for (rho, ui) in face.density.iter().zip(u) {
            value += rho * ui * grid.cell_volume;
        }
        Ok(value)
    }

    /// True when every atom weight and density value is nonnegative.
    pub fn is_positive(&self) -> bool {
        self.per_face.iter().all(|f| f.is_positive())
    }

    /// Signed masses mu(z)(closure of Omega) per face.
    pub fn masses(&self, grid: &Grid) -> Vec<f64> {
        self.per_face.iter().map(|f| f.mass(grid)).collect()
    }

    /// Masses, total-variation norms, the p-integral and positivity.
    pub fn hypothesis_report(&self, grid: &Grid) -> HypothesisReport {
        let total_masses = self.masses(grid);
        let mut p_integral = 0.0;
        let mut max_norm: f64 = 0.0;
        for (face, measure) in grid.boundary_faces.iter().zip(&self.per_face) {
            let tv = measure.total_variation(grid);
            p_integral += tv.powf(self.p_exponent) * face.surface_weight;
            max_norm = max_norm.max(tv);
        }
        HypothesisReport {
            total_masses,
            p_integral,
            is_positive: self.is_positive(),
            max_norm,
        }
    }

    /// Entrywise comparison: true when self(z) <= other(z) as measures, i.e.
    /// every atom weight and density value of `other - self` is nonnegative.
    /// Atoms are compared after lumping into cells.
    pub fn dominated_by(&self, other: &Self, grid: &Grid) -> bool {
        if self.per_face.len() != other.per_face.len() {
            return false;
        }
        for (a, b) in self.per_face.iter().zip(&other.per_face) {
            let mut diff = vec![0.0; grid.n_cells()];
            for &(cell, w, _) in &b.atoms {
                diff[cell] += w;
            }
            for &(cell, w, _) in &a.atoms {
                diff[cell] -= w;
            }
            for i in 0..grid.n_cells() {
                diff[i] += (b.density[i] - a.density[i]) * grid.cell_volume;
                if diff[i] < 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub total_masses: Vec<f64>,
    pub p_integral: f64,
    pub is_positive: bool,
    pub max_norm: f64,
}
