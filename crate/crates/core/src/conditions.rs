//! Algebraic positivity / sub-Markov / Markov predictions from the data
//! (coefficients, beta, mu) alone, and reconciliation against observed
//! semigroup diagnostics.
//!
//! Per cell the interior margin is `div_h b - d0` (nonpositive for a
//! sub-Markov semigroup, zero for Markov); per face the mass budget margin is
//! `mu(z)(closure) - beta(z) - b(z) . nu(z)` with the same sign convention.
//! A positive family with a positive budget margin somewhere is labelled
//! supra-Markov: on a Markov, irreducible base this is the blow-up regime.

use crate::assembly::GeneratorMatrix;
use crate::coefficients::CoefficientField;
use crate::evolution::MarkovDiagnostics;
use crate::geometry::Grid;
use crate::measures::BoundaryMeasureFamily;
use crate::spectral::{SpectralReport, SPECTRAL_BOUND_TOL_FACTOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictedClass {
    PositiveMarkov,
    PositiveSubMarkov,
    PositiveSupra,
    NotPositive,
}

impl PredictedClass {
    pub fn name(self) -> &'static str {
        match self {
            PredictedClass::PositiveMarkov => "Positive+Markov",
            PredictedClass::PositiveSubMarkov => "Positive+SubMarkov",
            PredictedClass::PositiveSupra => "Positive+Supra",
            PredictedClass::NotPositive => "NotPositive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionVerdict {
    pub positivity_predicted: bool,
    /// div_h b - d0 per cell.
    pub interior_margins: Vec<f64>,
    pub sm1_holds: bool,
    /// beta + b . nu per face (local sub-Markov condition, >= 0).
    pub sm2_local_margins: Vec<f64>,
    /// mu(z)(closure) - beta(z) - b(z) . nu(z) per face.
    pub mass_budget_margins: Vec<f64>,
    /// Interior equality within tol (Markov condition on the interior).
    pub equality_m1: bool,
    /// Budget equality within tol (Markov condition on the boundary).
    pub equality_m2: bool,
    pub predicted_class: PredictedClass,
    pub tol: f64,
}

pub const DEFAULT_CONDITION_TOL: f64 = 1e-10;

pub fn evaluate_conditions(
    coeff: &CoefficientField,
    family: &BoundaryMeasureFamily,
    grid: &Grid,
    tol: f64,
) -> ConditionVerdict {
    let div_b = coeff.discrete_divergence_b(grid);
    let interior_margins: Vec<f64> = div_b
        .iter()
        .zip(&coeff.d0)
        .map(|(d, d0)| d - d0)
        .collect();
    let masses = family.masses(grid);
    let mut sm2_local_margins = Vec::with_capacity(grid.n_faces());
    let mut mass_budget_margins = Vec::with_capacity(grid.n_faces());
    for face in &grid.boundary_faces {
        let cell = face.adjacent_cell;
        let b_nu: f64 = (0..grid.dimension)
            .map(|k| coeff.b[cell][k] * face.outward_normal[k])
            .sum();
        let beta = coeff.beta[face.index];
        sm2_local_margins.push(beta + b_nu);
        mass_budget_margins.push(masses[face.index] - beta - b_nu);
    }

    let positivity_predicted = family.is_positive();
    let sm1_holds = interior_margins.iter().all(|&m| m <= tol);
    let budget_ok = mass_budget_margins.iter().all(|&m| m <= tol);
    let equality_m1 = interior_margins.iter().all(|&m| m.abs() <= tol);
    let equality_m2 = mass_budget_margins.iter().all(|&m| m.abs() <= tol);

    let predicted_class = if !positivity_predicted {
        PredictedClass::NotPositive
    } else if equality_m1 && equality_m2 {
        PredictedClass::PositiveMarkov
    } else if sm1_holds && budget_ok {
        PredictedClass::PositiveSubMarkov
    } else {
        PredictedClass::PositiveSupra
    };

    ConditionVerdict {
        positivity_predicted,
        interior_margins,
        sm1_holds,
        sm2_local_margins,
        mass_budget_margins,
        equality_m1,
        equality_m2,
        predicted_class,
        tol,
    }
}

#[derive(Debug, Clone)]
pub struct ReconRow {
    pub property: &'static str,
    pub predicted: bool,
    pub observed: bool,
    pub margin: f64,
    pub pass: bool,
}

/// Predicted-versus-observed table; a row passes when prediction and
/// observation agree. Mismatches are reported, not raised.
#[derive(Debug, Clone)]
pub struct Reconciliation {
    pub rows: Vec<ReconRow>,
}

impl Reconciliation {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

pub fn reconcile(
    verdict: &ConditionVerdict,
    a_phi: &GeneratorMatrix,
    diagnostics: &MarkovDiagnostics,
    report: &SpectralReport,
    tol: f64,
) -> Reconciliation {
    let s = report.spectral_bound;
    let s_tol = tol.max(SPECTRAL_BOUND_TOL_FACTOR * report.matrix_norm);

    let observed_positive = a_phi.is_metzler() && diagnostics.min_state >= -tol;
    let observed_markov = diagnostics.sup_deviation_from_one() <= tol && s.abs() <= s_tol;
    let observed_sub_markov = diagnostics.max_t1_minus_1 <= tol && s <= s_tol;
    let observed_supra = s > s_tol;

    let predicted_markov = verdict.predicted_class == PredictedClass::PositiveMarkov;
    let predicted_sub = matches!(
        verdict.predicted_class,
        PredictedClass::PositiveMarkov | PredictedClass::PositiveSubMarkov
    );
    let predicted_supra = verdict.predicted_class == PredictedClass::PositiveSupra;

    let rows = vec![
        ReconRow {
            property: "positivity",
            predicted: verdict.positivity_predicted,
            observed: observed_positive,
            margin: diagnostics.min_state,
            pass: verdict.positivity_predicted == observed_positive,
        },
        ReconRow {
            property: "markov",
            predicted: predicted_markov,
            observed: observed_markov,
            margin: diagnostics.sup_deviation_from_one(),
            pass: predicted_markov == observed_markov,
        },
        ReconRow {
            property: "sub_markov",
            predicted: predicted_sub,
            observed: observed_sub_markov,
            margin: diagnostics.max_t1_minus_1,
            pass: predicted_sub == observed_sub_markov,
        },
        ReconRow {
            property: "supra_growth",
            predicted: predicted_supra,
            observed: observed_supra,
            margin: s,
            pass: predicted_supra == observed_supra,
        },
    ];
    Reconciliation { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_a_phi;
    use crate::evolution::markov_diagnostics;
    use crate::measures::MeasureSpec;
    use crate::spectral::eig_report;

    fn interval_setup(
        n: usize,
        beta: f64,
        mass: f64,
    ) -> (Grid, CoefficientField, BoundaryMeasureFamily) {
        let g = Grid::interval(n, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(beta);
        let fam = BoundaryMeasureFamily::constant(&MeasureSpec::uniform(mass), &g).unwrap();
        (g, coeff, fam)
    }

    #[test]
    fn markov_prediction() {
        let (g, coeff, fam) = interval_setup(8, 1.0, 1.0);
        let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
        assert_eq!(v.predicted_class, PredictedClass::PositiveMarkov);
        assert!(v.equality_m1 && v.equality_m2);
        for m in &v.mass_budget_margins {
            assert!(m.abs() <= 1e-12);
        }
    }

    #[test]
    fn submarkov_prediction_with_margin() {
        let (g, coeff, fam) = interval_setup(8, 1.0, 0.5);
        let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
        assert_eq!(v.predicted_class, PredictedClass::PositiveSubMarkov);
        for m in &v.mass_budget_margins {
            assert!((m + 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn negative_atom_is_not_positive() {
        let g = Grid::interval(8, 1.0).unwrap();
        let coeff = CoefficientField::laplace(&g).with_beta_constant(1.0);
        let fam =
            BoundaryMeasureFamily::constant(&MeasureSpec::atom([0.4, 0.0], -0.2), &g).unwrap();
        let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
        assert_eq!(v.predicted_class, PredictedClass::NotPositive);
        assert!(!v.positivity_predicted);
    }

    #[test]
    fn drift_markov_budget_uses_the_conormal_term() {
        let g = Grid::interval(16, 1.0).unwrap();
        let coeff = CoefficientField::constant(
            &g,
            [[1.0, 0.0], [0.0, 1.0]],
            [0.5, 0.0],
            [0.0; 2],
            0.0,
        )
        .with_beta(vec![1.0, 0.25]);
        // masses per face: beta + b . nu = 1 - 0.5 = 0.5 left, 0.25 + 0.5 = 0.75 right
        let parts = vec![
            (vec![0], MeasureSpec::uniform(0.5)),
            (vec![1], MeasureSpec::uniform(0.75)),
        ];
        let fam = BoundaryMeasureFamily::piecewise(&parts, &g).unwrap();
        let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
        assert_eq!(v.predicted_class, PredictedClass::PositiveMarkov);
        // and the assembled matrix has zero row sums
        let (a, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        for s in a.row_sums() {
            assert!(s.abs() <= 1e-12 * a.inf_norm());
        }
    }

    #[test]
    fn metzler_equivalence_on_positive_data() {
        let (g, coeff, fam) = interval_setup(8, 0.5, 0.8);
        let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
        let (a, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        assert_eq!(v.positivity_predicted, a.is_metzler());
    }

    #[test]
    fn class_is_stable_under_refinement() {
        for (beta, mass, expected) in [
            (1.0, 1.0, PredictedClass::PositiveMarkov),
            (1.0, 0.5, PredictedClass::PositiveSubMarkov),
            (0.0, 0.5, PredictedClass::PositiveSupra),
        ] {
            for n in [8, 16, 32, 64] {
                let (g, coeff, fam) = interval_setup(n, beta, mass);
                let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
                assert_eq!(v.predicted_class, expected, "n={n}, beta={beta}, mass={mass}");
            }
        }
    }

    #[test]
    fn reconcile_passes_on_consistent_scenarios() {
        for (beta, mass) in [(1.0, 1.0), (1.0, 0.25), (0.0, 0.5)] {
            let (g, coeff, fam) = interval_setup(8, beta, mass);
            let v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
            let (a, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
            let d = markov_diagnostics(&a, g.cell_volume, 2.0, 0.02).unwrap();
            let r = eig_report(&a, g.cell_volume).unwrap();
            let table = reconcile(&v, &a, &d, &r, 1e-10);
            assert!(table.all_pass(), "beta={beta} mass={mass}: {:#?}", table.rows);
        }
    }

    #[test]
    fn corrupted_verdict_is_reported_as_mismatch() {
        let (g, coeff, fam) = interval_setup(8, 1.0, 1.0);
        let mut v = evaluate_conditions(&coeff, &fam, &g, DEFAULT_CONDITION_TOL);
        let (a, _) = assemble_a_phi(&g, &coeff, &fam).unwrap();
        let d = markov_diagnostics(&a, g.cell_volume, 1.0, 0.02).unwrap();
        let r = eig_report(&a, g.cell_volume).unwrap();
        v.positivity_predicted = false; // hand corruption
        let table = reconcile(&v, &a, &d, &r, 1e-10);
        assert!(!table.all_pass());
        let row = table.rows.iter().find(|r| r.property == "positivity").unwrap();
        assert!(!row.pass);
    }
}
