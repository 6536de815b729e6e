//! Batch pipelines behind the command-line interface.
//!
//! Exit codes: 0 success, 1 failed verification assertions, 2 scenario
//! parse/validation error, 3 numerical failure (the message names the
//! failing operation). Output files are written to a temporary name and
//! renamed on success, so failures leave no partial files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::assembly::{assemble_a0, assemble_a_phi, discrete_b_matrix, BoundaryReadMode};
use crate::conditions::{evaluate_conditions, reconcile, ConditionVerdict, Reconciliation};
use crate::error::Error;
use crate::evolution::{evolve, markov_diagnostics, EvolutionWarning, MarkovDiagnostics};
use crate::greiner::{auto_lambda, s_lambda_decay_profile, ResolventContext, ResolventMethod};
use crate::linalg;
use crate::scenario::{BuiltScenario, Scenario, ScenarioError};
use crate::spectral::{eig_report, SpectralReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

enum CliError {
    Scenario(ScenarioError),
    Core(Error),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => EXIT_PARSE,
            CliError::Core(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Scenario(e) => e.to_string(),
            CliError::Core(e) => format!("numerical failure in {}: {e}", e.operation()),
            CliError::Io(m) => format!("io error: {m}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn write_atomically(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, contents)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("renaming {} -> {}: {e}", tmp.display(), path.display())))
}

fn load_built(scenario_path: &Path) -> Result<(Scenario, BuiltScenario), CliError> {
    let scenario = crate::scenario::load(scenario_path)?;
    let built = scenario.build()?;
    Ok((scenario, built))
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Simulate: evolve the scenario and write trajectory.csv + diagnostics.txt.
pub fn cmd_simulate(scenario_path: &Path, out_dir: &Path, tol: f64) -> i32 {
    match simulate_inner(scenario_path, out_dir, tol) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}

fn simulate_inner(scenario_path: &Path, out_dir: &Path, tol: f64) -> Result<(), CliError> {
    let (_, built) = load_built(scenario_path)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;

    let (a_phi, _) = assemble_a_phi(&built.grid, &built.coeff, &built.family)?;
    let trajectory = evolve(&a_phi, &built.initial, built.t_end, built.dt, built.theta)?;
    let diagnostics =
        markov_diagnostics(&a_phi, built.grid.cell_volume, built.t_end, built.dt)?;
    let verdict = evaluate_conditions(
        &built.coeff,
        &built.family,
        &built.grid,
        crate::conditions::DEFAULT_CONDITION_TOL,
    );
    // the spectral report is best-effort here: simulate still writes the
    // trajectory when classification is withheld
    let report = eig_report(&a_phi, built.grid.cell_volume).ok();

    let csv = render_trajectory_csv(&built, &trajectory, report.as_ref());
    write_atomically(&out_dir.join(&built.outputs.trajectory), &csv)?;

    let recon = report
        .as_ref()
        .map(|r| reconcile(&verdict, &a_phi, &diagnostics, r, tol));
    let text = render_diagnostics(
        scenario_path,
        &built,
        &verdict,
        &diagnostics,
        report.as_ref(),
        recon.as_ref(),
        &trajectory.warnings,
    );
    write_atomically(&out_dir.join(&built.outputs.diagnostics), &text)?;
    Ok(())
}

fn render_trajectory_csv(
    built: &BuiltScenario,
    trajectory: &crate::evolution::Trajectory,
    report: Option<&SpectralReport>,
) -> String {
    let vol = built.grid.cell_volume;
    let phi = report.map(|r| r.principal_left.clone());
    let mut csv = String::from("t,min_u,max_u,weighted_mass,deviation_T1\n");
    let last = trajectory.times.len() - 1;
    for (k, (t, u)) in trajectory.times.iter().zip(&trajectory.states).enumerate() {
        if k % built.record_stride != 0 && k != last {
            continue;
        }
        let min_u = u.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let max_u = u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let weighted = phi
            .as_ref()
            .map(|p| {
                let m: f64 = p.iter().zip(u).map(|(pi, ui)| pi * ui * vol).sum();
                format!("{m}")
            })
            .unwrap_or_default();
        let deviation = if built.initial_is_ones {
            let d = u.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            format!("{d}")
        } else {
            String::new()
        };
        let _ = writeln!(csv, "{t},{min_u},{max_u},{weighted},{deviation}");
    }
    csv
}

#[allow(clippy::too_many_arguments)]
fn render_diagnostics(
    scenario_path: &Path,
    built: &BuiltScenario,
    verdict: &ConditionVerdict,
    diagnostics: &MarkovDiagnostics,
    report: Option<&SpectralReport>,
    recon: Option<&Reconciliation>,
    warnings: &[EvolutionWarning],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", scenario_path.display());
    let _ = writeln!(
        s,
        "cells: {}, boundary faces: {}",
        built.grid.n_cells(),
        built.grid.n_faces()
    );
    let _ = writeln!(s, "predicted class: {}", verdict.predicted_class.name());
    let (lo_b, hi_b) = min_max(&verdict.mass_budget_margins);
    let _ = writeln!(s, "mass budget margins (mass - beta - b.nu): min {lo_b} max {hi_b}");
    let (lo_i, hi_i) = min_max(&verdict.interior_margins);
    let _ = writeln!(s, "interior margins (div b - d0): min {lo_i} max {hi_i}");
    let _ = writeln!(s, "observed:");
    let _ = writeln!(s, "  max |T(t)1 - 1|: {:e}", diagnostics.sup_deviation_from_one());
    let _ = writeln!(s, "  max excess of T(t)1 over 1: {:e}", diagnostics.max_t1_minus_1);
    let _ = writeln!(s, "  min T(t)1: {}", diagnostics.min_t1);
    let _ = writeln!(s, "  min state (nonnegative datum run): {:e}", diagnostics.min_state);
    let _ = writeln!(
        s,
        "  mass of test datum: first {} last {}",
        diagnostics.mass_series.first().copied().unwrap_or(f64::NAN),
        diagnostics.mass_series.last().copied().unwrap_or(f64::NAN)
    );
    let growth = diagnostics.shows_growth(1e-8);
    let _ = writeln!(
        s,
        "  growth of sup T(t)1: {}",
        if growth { "detected" } else { "none" }
    );
    match report {
        Some(r) => {
            let _ = writeln!(
                s,
                "spectral: s = {}, gap = {}, class = {}, irreducible = {}",
                r.spectral_bound,
                r.gap,
                r.asymptotic_class.name(),
                fmt_bool(r.irreducible)
            );
        }
        None => {
            let _ = writeln!(s, "spectral: classification withheld (defective principal cluster)");
        }
    }
    if let Some(table) = recon {
        let _ = writeln!(s, "reconciliation (property, predicted, observed, margin, pass):");
        for row in &table.rows {
            let _ = writeln!(
                s,
                "  {} {} {} {:e} {}",
                row.property,
                fmt_bool(row.predicted),
                fmt_bool(row.observed),
                row.margin,
                if row.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    if warnings.is_empty() {
        let _ = writeln!(s, "warnings: none");
    } else {
        for w in warnings {
            match w {
                EvolutionWarning::StabilityViolation { dt, bound } => {
                    let _ = writeln!(
                        s,
                        "warnings: StabilityViolation dt {dt} above explicit bound {bound}"
                    );
                }
            }
        }
    }
    s
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    (lo, hi)
}

/// Spectrum: eigensolve and write spectrum.csv + report.txt.
pub fn cmd_spectrum(scenario_path: &Path, out_dir: &Path, _tol: f64) -> i32 {
    match spectrum_inner(scenario_path, out_dir) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}

fn spectrum_inner(scenario_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let (_, built) = load_built(scenario_path)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
    let (a_phi, _) = assemble_a_phi(&built.grid, &built.coeff, &built.family)?;
    let report = eig_report(&a_phi, built.grid.cell_volume)?;

    let mut csv = String::from("re,im\n");
    for z in &report.eigenvalues {
        let _ = writeln!(csv, "{},{}", z.re, z.im);
    }
    write_atomically(&out_dir.join(&built.outputs.spectrum), &csv)?;

    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", scenario_path.display());
    let _ = writeln!(text, "spectral bound: {}", report.spectral_bound);
    let _ = writeln!(text, "gap: {}", report.gap);
    let _ = writeln!(text, "class: {}", report.asymptotic_class.name());
    let _ = writeln!(text, "irreducible: {}", fmt_bool(report.irreducible));
    let (u_lo, u_hi) = min_max(&report.principal_right);
    let _ = writeln!(text, "principal right u: min {u_lo} max {u_hi}");
    let (p_lo, p_hi) = min_max(&report.principal_left);
    let _ = writeln!(text, "principal left phi: min {p_lo} max {p_hi}");
    let phi_vol: f64 = report.principal_left.iter().sum::<f64>() * built.grid.cell_volume;
    let _ = writeln!(text, "sum(phi * vol): {phi_vol}");
    let _ = writeln!(
        text,
        "residuals: right {:e}, left {:e}",
        report.right_residual, report.left_residual
    );
    let _ = writeln!(text, "top eigenvalues by real part:");
    for z in report.eigenvalues.iter().take(5) {
        let _ = writeln!(text, "  {} {}", z.re, z.im);
    }
    write_atomically(&out_dir.join(&built.outputs.report), &text)?;
    Ok(())
}

/// Verify: resolvent identity, Neumann radius, decay profile and the
/// condition table. Exit 0 iff every assertion passes.
pub fn cmd_verify(scenario_path: &Path, out_dir: &Path, tol: f64) -> i32 {
    match verify_inner(scenario_path, out_dir, tol) {
        Ok(all_pass) => {
            if all_pass {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}

fn verify_inner(scenario_path: &Path, out_dir: &Path, tol: f64) -> Result<bool, CliError> {
    let (_, built) = load_built(scenario_path)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;

    let a0 = assemble_a0(&built.grid, &built.coeff)?;
    let (a_phi, ops) = assemble_a_phi(&built.grid, &built.coeff, &built.family)?;
    let lambda = match built.lambda {
        Some(v) => v,
        None => auto_lambda(&a0)?,
    };

    let mut text = String::new();
    let mut all_pass = true;
    let mut check = |line: &mut String, label: &str, value: f64, pass: bool| {
        let _ = writeln!(line, "{label}: {value:e}  [{}]", if pass { "PASS" } else { "FAIL" });
        pass
    };

    let _ = writeln!(text, "scenario: {}", scenario_path.display());
    let _ = writeln!(text, "lambda: {lambda}");

    for factor in [1.0, 10.0] {
        let l = lambda * factor;
        let ctx = ResolventContext::new(&a0, &a_phi, &ops, l)?;
        let residual = ctx.resolvent_identity_residual()?;
        all_pass &= check(
            &mut text,
            &format!("resolvent identity residual at lambda = {l} (tol {tol:e})"),
            residual,
            residual <= tol,
        );
        if factor == 1.0 {
            let _ = writeln!(text, "neumann radius at lambda = {l}: {}", ctx.neumann_radius);
            let f: Vec<f64> = (0..built.grid.n_cells())
                .map(|i| 1.0 + i as f64 / built.grid.n_cells() as f64)
                .collect();
            let direct = ctx.perturbed_resolvent(&f, ResolventMethod::Direct)?;
            let lu = ctx.perturbed_resolvent(&f, ResolventMethod::GreinerLu)?;
            let scale = linalg::vec_inf_norm(&direct).max(1e-300);
            let lu_err = direct
                .iter()
                .zip(&lu)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
                / scale;
            all_pass &= check(
                &mut text,
                "greiner-lu vs direct relative error",
                lu_err,
                lu_err <= tol,
            );
            if ctx.neumann_radius < 0.99 {
                let neumann = ctx.perturbed_resolvent(&f, ResolventMethod::GreinerNeumann)?;
                let n_err = direct
                    .iter()
                    .zip(&neumann)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
                    / scale;
                let n_tol = tol.max(1e-9);
                all_pass &= check(
                    &mut text,
                    &format!("greiner-neumann vs direct relative error (tol {n_tol:e})"),
                    n_err,
                    n_err <= n_tol,
                );
            } else {
                let _ = writeln!(text, "greiner-neumann skipped: radius >= 0.99");
            }
            // boundary read round trip on cells owning a single face
            let b = discrete_b_matrix(
                &built.grid,
                &built.coeff,
                BoundaryReadMode::Balance { lambda: l },
            )?;
            let bs = b.dot(&ctx.s_lambda);
            let mut bs_residual: f64 = 0.0;
            for z in 0..built.grid.n_faces() {
                let cell = built.grid.boundary_faces[z].adjacent_cell;
                if built.grid.faces_of_cell(cell).len() != 1 {
                    continue;
                }
                for w in 0..built.grid.n_faces() {
                    let expected = if w == z { 1.0 } else { 0.0 };
                    bs_residual = bs_residual.max((bs[(z, w)] - expected).abs());
                }
            }
            all_pass &= check(
                &mut text,
                "boundary read B S_lambda = I residual (single-face cells, tol 1e-8)",
                bs_residual,
                bs_residual <= 1e-8,
            );
        }
    }

    let lambdas = [lambda, lambda * 10f64.sqrt(), lambda * 10.0];
    let profile = s_lambda_decay_profile(&a0, &ops, &lambdas)?;
    let decreasing =
        profile[2] < profile[0] || (profile[0] == 0.0 && profile[2] == 0.0);
    let _ = writeln!(
        text,
        "s_lambda_phi decay profile over lambda x [1, sqrt(10), 10]: [{}, {}, {}]  [{}]",
        profile[0],
        profile[1],
        profile[2],
        if decreasing { "PASS" } else { "FAIL" }
    );
    all_pass &= decreasing;

    let verdict = evaluate_conditions(
        &built.coeff,
        &built.family,
        &built.grid,
        crate::conditions::DEFAULT_CONDITION_TOL,
    );
    let diagnostics =
        markov_diagnostics(&a_phi, built.grid.cell_volume, built.t_end, built.dt)?;
    let report = eig_report(&a_phi, built.grid.cell_volume)?;
    let table = reconcile(&verdict, &a_phi, &diagnostics, &report, tol);
    let _ = writeln!(text, "condition table (property, predicted, observed, margin, pass):");
    for row in &table.rows {
        // behavior rows must agree; the positivity row additionally demands
        // a positive family, the standing hypothesis of the verified theory
        let pass = if row.property == "positivity" {
            row.predicted && row.observed
        } else {
            row.pass
        };
        let _ = writeln!(
            text,
            "  {} {} {} {:e} {}",
            row.property,
            fmt_bool(row.predicted),
            fmt_bool(row.observed),
            row.margin,
            if pass { "PASS" } else { "FAIL" }
        );
        all_pass &= pass;
    }

    let _ = writeln!(text, "VERIFY: {}", if all_pass { "PASS" } else { "FAIL" });
    write_atomically(&out_dir.join(&built.outputs.verify), &text)?;
    Ok(all_pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Spectrum,
    Verify,
}

/// Run a command over one or more scenario files, at most `jobs` at a time.
/// With several scenarios each writes into `out_dir/<scenario stem>/`.
/// Returns the maximum exit code.
pub fn run_many(
    command: Command,
    scenarios: &[PathBuf],
    out_dir: &Path,
    tol: f64,
    jobs: usize,
) -> i32 {
    let jobs = jobs.max(1);
    let run_one = |path: &PathBuf| -> i32 {
        let out = if scenarios.len() > 1 {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "scenario".to_string());
            out_dir.join(stem)
        } else {
            out_dir.to_path_buf()
        };
        match command {
            Command::Simulate => cmd_simulate(path, &out, tol),
            Command::Spectrum => cmd_spectrum(path, &out, tol),
            Command::Verify => cmd_verify(path, &out, tol),
        }
    };
    if jobs == 1 || scenarios.len() <= 1 {
        scenarios.iter().map(run_one).max().unwrap_or(EXIT_OK)
    } else {
        let mut worst = EXIT_OK;
        for chunk in scenarios.chunks(jobs) {
            let codes: Vec<i32> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|path| scope.spawn(move || run_one(path)))
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap_or(EXIT_NUMERICAL)).collect()
            });
            worst = worst.max(codes.into_iter().max().unwrap_or(EXIT_OK));
        }
        worst
    }
}
