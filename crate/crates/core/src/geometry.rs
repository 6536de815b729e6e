//! Cell-centered finite-volume grids on intervals and axis-aligned rectangles.
//!
//! Cells are uniform tensor cells whose centers sit half a spacing away from
//! the domain edges. Boundary faces carry the outward unit normal and their
//! surface measure (1 for an interval endpoint, the face length in 2D).

use crate::error::{Error, Result};

/// Side of the domain a boundary face lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceSide {
    Left,
    Right,
    Bottom,
    Top,
}

impl FaceSide {
    pub fn name(self) -> &'static str {
        match self {
            FaceSide::Left => "left",
            FaceSide::Right => "right",
            FaceSide::Bottom => "bottom",
            FaceSide::Top => "top",
        }
    }
}

/// One boundary face of the grid.
///
/// In 1D the second component of vectors is zero.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub index: usize,
    pub adjacent_cell: usize,
    /// Axis-aligned unit outward normal.
    pub outward_normal: [f64; 2],
    /// Surface measure of the face: 1 in 1D, the face length in 2D.
    pub surface_weight: f64,
    pub face_center: [f64; 2],
    /// Axis the normal is aligned with (0 = x, 1 = y).
    pub axis: usize,
}

impl BoundaryFace {
    pub fn side(&self) -> FaceSide {
        if self.axis == 0 {
            if self.outward_normal[0] < 0.0 {
                FaceSide::Left
            } else {
                FaceSide::Right
            }
        } else if self.outward_normal[1] < 0.0 {
            FaceSide::Bottom
        } else {
            FaceSide::Top
        }
    }
}

/// Uniform cell-centered grid on an interval or rectangle.
#[derive(Debug, Clone)]
pub struct Grid {
    pub dimension: usize,
    pub cells_per_axis: [usize; 2],
    pub lengths: [f64; 2],
    pub spacing: [f64; 2],
    pub cell_volume: f64,
    pub cell_centers: Vec<[f64; 2]>,
    pub boundary_faces: Vec<BoundaryFace>,
}

impl Grid {
    /// Interval (0, length) split into n cells.
    pub fn interval(n: usize, length: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells, got {n}")));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        let dx = length / n as f64;
        let cell_centers = (0..n).map(|i| [(i as f64 + 0.5) * dx, 0.0]).collect();
        let boundary_faces = vec![
            BoundaryFace {
                index: 0,
                adjacent_cell: 0,
                outward_normal: [-1.0, 0.0],
                surface_weight: 1.0,
                face_center: [0.0, 0.0],
                axis: 0,
            },
            BoundaryFace {
                index: 1,
                adjacent_cell: n - 1,
                outward_normal: [1.0, 0.0],
                surface_weight: 1.0,
                face_center: [length, 0.0],
                axis: 0,
            },
        ];
        Ok(Grid {
            dimension: 1,
            cells_per_axis: [n, 1],
            lengths: [length, 0.0],
            spacing: [dx, 0.0],
            cell_volume: dx,
            cell_centers,
            boundary_faces,
        })
    }

    /// Rectangle (0, lx) x (0, ly) with nx * ny cells.
    ///
    /// Face order: left column, right column, bottom row, top row.
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per axis, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got {lx} x {ly}"
            )));
        }
        let dx = lx / nx as f64;
        let dy = ly / ny as f64;
        let mut cell_centers = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                cell_centers.push([(ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dy]);
            }
        }
        let flat = |ix: usize, iy: usize| iy * nx + ix;
        let mut boundary_faces = Vec::with_capacity(2 * (nx + ny));
        for iy in 0..ny {
            boundary_faces.push(BoundaryFace {
                index: boundary_faces.len(),
                adjacent_cell: flat(0, iy),
                outward_normal: [-1.0, 0.0],
                surface_weight: dy,
                face_center: [0.0, (iy as f64 + 0.5) * dy],
                axis: 0,
            });
        }
        for iy in 0..ny {
            boundary_faces.push(BoundaryFace {
                index: boundary_faces.len(),
                adjacent_cell: flat(nx - 1, iy),
                outward_normal: [1.0, 0.0],
                surface_weight: dy,
                face_center: [lx, (iy as f64 + 0.5) * dy],
                axis: 0,
            });
        }
        for ix in 0..nx {
            boundary_faces.push(BoundaryFace {
                index: boundary_faces.len(),
                adjacent_cell: flat(ix, 0),
                outward_normal: [0.0, -1.0],
                surface_weight: dx,
                face_center: [(ix as f64 + 0.5) * dx, 0.0],
                axis: 1,
            });
        }
        for ix in 0..nx {
            boundary_faces.push(BoundaryFace {
                index: boundary_faces.len(),
                adjacent_cell: flat(ix, ny - 1),
                outward_normal: [0.0, 1.0],
                surface_weight: dx,
                face_center: [(ix as f64 + 0.5) * dx, ly],
                axis: 1,
            });
        }
        Ok(Grid {
            dimension: 2,
            cells_per_axis: [nx, ny],
            lengths: [lx, ly],
            spacing: [dx, dy],
            cell_volume: dx * dy,
            cell_centers,
            boundary_faces,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cell_centers.len()
    }

    pub fn n_faces(&self) -> usize {
        self.boundary_faces.len()
    }

    /// Multi-index of a cell ([i, 0] in 1D).
    pub fn cell_index(&self, cell: usize) -> [usize; 2] {
        let nx = self.cells_per_axis[0];
        [cell % nx, cell / nx]
    }

    /// Neighbor of `cell` along `axis` on the given side (-1 or +1), if any.
    pub fn neighbor(&self, cell: usize, axis: usize, side: i32) -> Option<usize> {
        let idx = self.cell_index(cell);
        let n = self.cells_per_axis[axis];
        let pos = idx[axis] as i64 + side as i64;
        if pos < 0 || pos >= n as i64 {
            return None;
        }
        let mut new_idx = idx;
        new_idx[axis] = pos as usize;
        Some(new_idx[1] * self.cells_per_axis[0] + new_idx[0])
    }

    /// Boundary faces attached to `cell`.
    pub fn faces_of_cell(&self, cell: usize) -> Vec<&BoundaryFace> {
        self.boundary_faces
            .iter()
            .filter(|f| f.adjacent_cell == cell)
            .collect()
    }

    /// Indices of all boundary faces on a given side of the domain.
    pub fn faces_on_side(&self, side: FaceSide) -> Vec<usize> {
        self.boundary_faces
            .iter()
            .filter(|f| f.side() == side)
            .map(|f| f.index)
            .collect()
    }

    /// Snap a point of the closed domain to its nearest cell, ties broken
    /// toward the lower index.
    pub fn snap_to_cell(&self, point: [f64; 2]) -> usize {
        let mut idx = [0usize; 2];
        for axis in 0..self.dimension {
            idx[axis] = snap_axis(point[axis], self.spacing[axis], self.cells_per_axis[axis]);
        }
        idx[1] * self.cells_per_axis[0] + idx[0]
    }

    /// Total length/area of the domain.
    pub fn domain_measure(&self) -> f64 {
        if self.dimension == 1 {
            self.lengths[0]
        } else {
            self.lengths[0] * self.lengths[1]
        }
    }

    /// Perimeter of the domain boundary (2 in 1D by convention).
    pub fn perimeter(&self) -> f64 {
        if self.dimension == 1 {
            2.0
        } else {
            2.0 * (self.lengths[0] + self.lengths[1])
        }
    }
}

/// Nearest cell index along one axis; a tie between two centers snaps down.
fn snap_axis(p: f64, spacing: f64, n: usize) -> usize {
    let clamped = p.clamp(0.0, spacing * n as f64);
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    // Candidate cells around p / spacing; scanning three indices is enough
    // on a uniform grid.
    let guess = (clamped / spacing).floor() as i64;
    for cand in (guess - 1)..=(guess + 1) {
        if cand < 0 || cand >= n as i64 {
            continue;
        }
        let center = (cand as f64 + 0.5) * spacing;
        let dist = (clamped - center).abs();
        if dist < best_dist {
            best_dist = dist;
            best = cand as usize;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_centers_and_spacing() {
        let g = Grid::interval(4, 1.0).unwrap();
        assert_eq!(g.spacing[0], 0.25);
        let xs: Vec<f64> = g.cell_centers.iter().map(|c| c[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn interval_faces() {
        let g = Grid::interval(2, 1.0).unwrap();
        assert_eq!(g.n_faces(), 2);
        let f0 = &g.boundary_faces[0];
        let f1 = &g.boundary_faces[1];
        assert_eq!(f0.adjacent_cell, 0);
        assert_eq!(f0.outward_normal, [-1.0, 0.0]);
        assert_eq!(f0.surface_weight, 1.0);
        assert_eq!(f1.adjacent_cell, 1);
        assert_eq!(f1.outward_normal, [1.0, 0.0]);
        assert_eq!(f1.surface_weight, 1.0);
    }

    #[test]
    fn interval_rejects_single_cell() {
        assert!(matches!(Grid::interval(1, 1.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn rectangle_two_by_two() {
        let g = Grid::rectangle(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(g.n_cells(), 4);
        assert_eq!(g.n_faces(), 8);
        for f in &g.boundary_faces {
            assert_eq!(f.surface_weight, 0.5);
        }
        let total: f64 = g.boundary_faces.iter().map(|f| f.surface_weight).sum();
        assert_eq!(total, 4.0);
    }

    #[test]
    fn rectangle_anisotropic_weights() {
        let g = Grid::rectangle(3, 2, 3.0, 1.0).unwrap();
        for f in &g.boundary_faces {
            if f.axis == 0 {
                assert_eq!(f.surface_weight, 0.5);
            } else {
                assert_eq!(f.surface_weight, 1.0);
            }
        }
    }

    #[test]
    fn rectangle_rejects_thin_axis() {
        assert!(Grid::rectangle(1, 4, 1.0, 1.0).is_err());
        assert!(Grid::rectangle(4, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn volumes_sum_to_domain_measure() {
        for g in [
            Grid::interval(7, 2.5).unwrap(),
            Grid::rectangle(5, 3, 2.0, 1.5).unwrap(),
        ] {
            let total: f64 = (0..g.n_cells()).map(|_| g.cell_volume).sum();
            let ulps = g.n_cells() as f64 * f64::EPSILON * g.domain_measure();
            assert!((total - g.domain_measure()).abs() <= ulps);
        }
    }

    #[test]
    fn outward_normals_point_out() {
        for g in [
            Grid::interval(4, 1.0).unwrap(),
            Grid::rectangle(3, 4, 2.0, 1.0).unwrap(),
        ] {
            for f in &g.boundary_faces {
                let c = g.cell_centers[f.adjacent_cell];
                let d = [f.face_center[0] - c[0], f.face_center[1] - c[1]];
                let dot = d[0] * f.outward_normal[0] + d[1] * f.outward_normal[1];
                assert!(dot > 0.0, "face {} normal not outward", f.index);
            }
        }
    }

    #[test]
    fn face_weights_sum_to_perimeter() {
        let g = Grid::rectangle(4, 6, 2.0, 3.0).unwrap();
        let total: f64 = g.boundary_faces.iter().map(|f| f.surface_weight).sum();
        assert!((total - g.perimeter()).abs() < 1e-12);
    }

    #[test]
    fn snapping_ties_break_low() {
        let g = Grid::interval(4, 1.0).unwrap();
        // 0.25 is equidistant from centers 0.125 and 0.375.
        assert_eq!(g.snap_to_cell([0.25, 0.0]), 0);
        assert_eq!(g.snap_to_cell([0.0, 0.0]), 0);
        assert_eq!(g.snap_to_cell([1.0, 0.0]), 3);
        assert_eq!(g.snap_to_cell([0.6, 0.0]), 2);
    }

    #[test]
    fn side_classification() {
        let g = Grid::rectangle(2, 3, 1.0, 1.0).unwrap();
        assert_eq!(g.faces_on_side(FaceSide::Left).len(), 3);
        assert_eq!(g.faces_on_side(FaceSide::Right).len(), 3);
        assert_eq!(g.faces_on_side(FaceSide::Bottom).len(), 2);
        assert_eq!(g.faces_on_side(FaceSide::Top).len(), 2);
    }

    #[test]
    fn corner_cells_carry_two_faces() {
        let g = Grid::rectangle(3, 3, 1.0, 1.0).unwrap();
        assert_eq!(g.faces_of_cell(0).len(), 2);
        assert_eq!(g.faces_of_cell(4).len(), 0); // center cell
        assert_eq!(g.faces_of_cell(1).len(), 1); // edge cell
    }
}
