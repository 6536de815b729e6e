//! Scenario files: TOML descriptions of a domain, coefficients, boundary
//! data and a run, validated at parse time. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::coefficients::CoefficientField;
use crate::geometry::{FaceSide, Grid};
use crate::measures::{BoundaryMeasureFamily, DensitySpec, MeasureSpec};

#[derive(Debug)]
pub enum ScenarioError {
    /// Unreadable file or TOML/schema violation; messages carry the line and
    /// key reported by the parser.
    Parse(String),
    /// Structurally valid TOML that violates a module precondition.
    Invalid(String),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::Parse(m) => write!(f, "scenario parse error: {m}"),
            ScenarioError::Invalid(m) => write!(f, "invalid scenario: {m}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub coefficients: CoefficientsSpec,
    pub beta: BetaSpec,
    #[serde(default)]
    pub mu: Vec<MuEntry>,
    pub run: RunSpec,
    #[serde(default = "LambdaSpec::auto")]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub p_exponent: Option<f64>,
    #[serde(default)]
    pub outputs: OutputNames,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    Interval { n: usize, length: f64 },
    Rectangle { nx: usize, ny: usize, lx: f64, ly: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSpec {
    pub preset: String,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub d0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSpec {
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub per_face: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuEntry {
    pub faces: FaceSelector,
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Option<DensityEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FaceSelector {
    Named(String),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityEntry {
    #[serde(default)]
    pub uniform: Option<f64>,
    #[serde(default)]
    pub cells: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "InitialSpec::ones")]
    pub initial: InitialSpec,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_theta() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Named(String),
    Indicator { indicator: [usize; 2] },
    Values { values: Vec<f64> },
}

impl InitialSpec {
    fn ones() -> Self {
        InitialSpec::Named("ones".to_string())
    }

    pub fn is_ones(&self) -> bool {
        matches!(self, InitialSpec::Named(s) if s == "ones")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Named(String),
    Value(f64),
}

impl LambdaSpec {
    fn auto() -> Self {
        LambdaSpec::Named("auto".to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputNames {
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: String,
    #[serde(default = "default_spectrum")]
    pub spectrum: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_verify")]
    pub verify: String,
}

impl Default for OutputNames {
    fn default() -> Self {
        OutputNames {
            trajectory: default_trajectory(),
            diagnostics: default_diagnostics(),
            spectrum: default_spectrum(),
            report: default_report(),
            verify: default_verify(),
        }
    }
}

fn default_trajectory() -> String {
    "trajectory.csv".to_string()
}
fn default_diagnostics() -> String {
    "diagnostics.txt".to_string()
}
fn default_spectrum() -> String {
    "spectrum.csv".to_string()
}
fn default_report() -> String {
    "report.txt".to_string()
}
fn default_verify() -> String {
    "verify.txt".to_string()
}

/// Fully resolved scenario: grid, fields, measures and run parameters.
pub struct BuiltScenario {
    pub grid: Grid,
    pub coeff: CoefficientField,
    pub family: BoundaryMeasureFamily,
    pub initial: Vec<f64>,
    pub initial_is_ones: bool,
    pub t_end: f64,
    pub dt: f64,
    pub theta: f64,
    pub record_stride: usize,
    pub lambda: Option<f64>,
    pub outputs: OutputNames,
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Parse(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

impl Scenario {
    /// Replace the grid resolution, keeping the physical extents.
    pub fn override_resolution(&mut self, n: usize) {
        match &mut self.domain {
            DomainSpec::Interval { n: slot, .. } => *slot = n,
            DomainSpec::Rectangle { nx, ny, .. } => {
                *nx = n;
                *ny = n;
            }
        }
    }

    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        let grid = match self.domain {
            DomainSpec::Interval { n, length } => Grid::interval(n, length),
            DomainSpec::Rectangle { nx, ny, lx, ly } => Grid::rectangle(nx, ny, lx, ly),
        }
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let coeff = self.build_coefficients(&grid)?;
        let family = self.build_family(&grid)?;
        coeff
            .validate(&grid)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let n = grid.n_cells();
        let (initial, initial_is_ones) = match &self.run.initial {
            InitialSpec::Named(name) if name == "ones" => (vec![1.0; n], true),
            InitialSpec::Named(other) => {
                return Err(ScenarioError::Invalid(format!(
                    "unknown initial condition name {other:?}; expected \"ones\""
                )))
            }
            InitialSpec::Indicator { indicator: [lo, hi] } => {
                if *lo >= *hi || *hi > n {
                    return Err(ScenarioError::Invalid(format!(
                        "indicator range [{lo}, {hi}) out of bounds for {n} cells"
                    )));
                }
                let mut u = vec![0.0; n];
                for v in u.iter_mut().take(*hi).skip(*lo) {
                    *v = 1.0;
                }
                (u, false)
            }
            InitialSpec::Values { values } => {
                if values.len() != n {
                    return Err(ScenarioError::Invalid(format!(
                        "initial values need length {n}, got {}",
                        values.len()
                    )));
                }
                (values.clone(), false)
            }
        };

        if !(self.run.t_end > 0.0) || !(self.run.dt > 0.0) {
            return Err(ScenarioError::Invalid(
                "run.t_end and run.dt must be positive".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.run.theta) {
            return Err(ScenarioError::Invalid(format!(
                "run.theta must lie in [0, 1], got {}",
                self.run.theta
            )));
        }
        if self.run.record_stride == 0 {
            return Err(ScenarioError::Invalid("run.record_stride must be >= 1".to_string()));
        }

        let lambda = match &self.lambda {
            LambdaSpec::Named(name) if name == "auto" => None,
            LambdaSpec::Named(other) => {
                return Err(ScenarioError::Invalid(format!(
                    "unknown lambda spec {other:?}; expected \"auto\" or a number"
                )))
            }
            LambdaSpec::Value(v) => Some(*v),
        };

        Ok(BuiltScenario {
            grid,
            coeff,
            family,
            initial,
            initial_is_ones,
            t_end: self.run.t_end,
            dt: self.run.dt,
            theta: self.run.theta,
            record_stride: self.run.record_stride,
            lambda,
            outputs: self.outputs.clone(),
        })
    }

    fn build_coefficients(&self, grid: &Grid) -> Result<CoefficientField, ScenarioError> {
        let spec = &self.coefficients;
        let d = grid.dimension;
        let reject = |key: &str| {
            Err(ScenarioError::Invalid(format!(
                "coefficients key {key:?} is not allowed with preset {:?}",
                spec.preset
            )))
        };
        let vector_of = |v: &Option<Vec<f64>>, key: &str| -> Result<[f64; 2], ScenarioError> {
            match v {
                None => Ok([0.0; 2]),
                Some(values) => {
                    if values.len() != d {
                        return Err(ScenarioError::Invalid(format!(
                            "coefficients.{key} needs {d} components, got {}",
                            values.len()
                        )));
                    }
                    let mut out = [0.0; 2];
                    out[..d].copy_from_slice(values);
                    Ok(out)
                }
            }
        };
        let mut field = match spec.preset.as_str() {
            "laplace" => {
                if spec.a.is_some() {
                    return reject("a");
                }
                if spec.b.is_some() {
                    return reject("b");
                }
                if spec.c.is_some() {
                    return reject("c");
                }
                if spec.d0.is_some() {
                    return reject("d0");
                }
                CoefficientField::laplace(grid)
            }
            "drift" => {
                if spec.a.is_some() {
                    return reject("a");
                }
                if spec.d0.is_some() {
                    return reject("d0");
                }
                let b = vector_of(&spec.b, "b")?;
                let c = vector_of(&spec.c, "c")?;
                CoefficientField::constant(grid, [[1.0, 0.0], [0.0, 1.0]], b, c, 0.0)
            }
            "full" => {
                let a = match &spec.a {
                    None => [[1.0, 0.0], [0.0, 1.0]],
                    Some(rows) => {
                        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                            return Err(ScenarioError::Invalid(format!(
                                "coefficients.a must be a {d}x{d} matrix"
                            )));
                        }
                        let mut a = [[0.0; 2]; 2];
                        if d == 1 {
                            a[0][0] = rows[0][0];
                            a[1][1] = 1.0;
                        } else {
                            for i in 0..2 {
                                for j in 0..2 {
                                    a[i][j] = rows[i][j];
                                }
                            }
                        }
                        a
                    }
                };
                let b = vector_of(&spec.b, "b")?;
                let c = vector_of(&spec.c, "c")?;
                CoefficientField::constant(grid, a, b, c, spec.d0.unwrap_or(0.0))
            }
            other => {
                return Err(ScenarioError::Invalid(format!(
                    "unknown coefficients preset {other:?}; expected laplace, drift or full"
                )))
            }
        };

        field = match (&self.beta.constant, &self.beta.per_face) {
            (Some(v), None) => {
                if *v < 0.0 {
                    return Err(ScenarioError::Invalid(format!(
                        "beta.constant must be nonnegative, got {v}"
                    )));
                }
                field.with_beta_constant(*v)
            }
            (None, Some(values)) => {
                if values.len() != grid.n_faces() {
                    return Err(ScenarioError::Invalid(format!(
                        "beta.per_face needs {} values, got {}",
                        grid.n_faces(),
                        values.len()
                    )));
                }
                field.with_beta(values.clone())
            }
            (None, None) => field.with_beta_constant(0.0),
            (Some(_), Some(_)) => {
                return Err(ScenarioError::Invalid(
                    "beta accepts either constant or per_face, not both".to_string(),
                ))
            }
        };
        Ok(field)
    }

    fn build_family(&self, grid: &Grid) -> Result<BoundaryMeasureFamily, ScenarioError> {
        if self.mu.is_empty() {
            let mut fam = BoundaryMeasureFamily::zero(grid);
            if let Some(p) = self.p_exponent {
                fam = fam.with_p_exponent(p);
            }
            return Ok(fam);
        }
        let mut parts = Vec::with_capacity(self.mu.len());
        for entry in &self.mu {
            let faces = resolve_selector(&entry.faces, grid)?;
            let mut atoms = Vec::with_capacity(entry.atoms.len());
            for atom in &entry.atoms {
                if atom.point.len() != grid.dimension {
                    return Err(ScenarioError::Invalid(format!(
                        "atom point needs {} coordinates, got {}",
                        grid.dimension,
                        atom.point.len()
                    )));
                }
                let mut p = [0.0; 2];
                p[..grid.dimension].copy_from_slice(&atom.point);
                atoms.push((p, atom.weight));
            }
            let density = match &entry.density {
                None => DensitySpec::Zero,
                Some(DensityEntry { uniform: Some(mass), cells: None }) => {
                    DensitySpec::Uniform(*mass)
                }
                Some(DensityEntry { uniform: None, cells: Some(values) }) => {
                    DensitySpec::Cells(values.clone())
                }
                Some(_) => {
                    return Err(ScenarioError::Invalid(
                        "density accepts either uniform or cells, not both".to_string(),
                    ))
                }
            };
            parts.push((faces, MeasureSpec { atoms, density }));
        }
        let mut fam = BoundaryMeasureFamily::piecewise(&parts, grid)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if let Some(p) = self.p_exponent {
            fam = fam.with_p_exponent(p);
        }
        Ok(fam)
    }
}

fn resolve_selector(sel: &FaceSelector, grid: &Grid) -> Result<Vec<usize>, ScenarioError> {
    match sel {
        FaceSelector::Indices(v) => Ok(v.clone()),
        FaceSelector::Named(name) => match name.as_str() {
            "all" => Ok((0..grid.n_faces()).collect()),
            "left" => Ok(grid.faces_on_side(FaceSide::Left)),
            "right" => Ok(grid.faces_on_side(FaceSide::Right)),
            "bottom" if grid.dimension == 2 => Ok(grid.faces_on_side(FaceSide::Bottom)),
            "top" if grid.dimension == 2 => Ok(grid.faces_on_side(FaceSide::Top)),
            other => Err(ScenarioError::Invalid(format!(
                "unknown face selector {other:?} for a {}d domain",
                grid.dimension
            ))),
        },
    }
}
