//! The four subcommands: verify, solve, functional, sweep.

use crate::config::RunConfig;
use crate::report::{fmt_f64, run_id, write_verify_report, CsvWriter, Manifest};
use crate::verify::run_verify;
use anyhow::{Context, Result};
use hjlab_core::equilibria::weighted_sup_norm;
use hjlab_core::functional::{
    effective_g_hat, evaluate_functional, functional_decomposed, hamiltonian_sym,
    stationary_functional,
};
use hjlab_core::scenario::{build_boundary_data, Lab, Regime, ScenarioConfig};
use hjlab_core::solver::{decay_report, reconstruct_full, solve_coupled, CoupledSolution};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Exit status conventions: 0 success, 1 validation error, 2 solver
/// divergence, 3 internal error.
pub enum Outcome {
    Success,
    Divergence,
}

pub struct CommandInput {
    pub config: RunConfig,
    pub config_text: String,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
}

impl CommandInput {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut scen = self.config.scenario()?;
        if let Some(seed) = self.seed_override {
            scen.seed = seed;
        }
        scen.validate()?;
        Ok(scen)
    }

    fn prepare_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("cannot create output dir {}", self.out_dir.display()))
    }
}

pub fn cmd_verify(input: &CommandInput) -> Result<Outcome> {
    input.prepare_dir()?;
    let id = run_id(&input.config_text, "verify", input.seed_override);
    let records = run_verify(&input.config)?;
    let report_path = input.out_dir.join("verify_report.txt");
    write_verify_report(&report_path, &id, &records)?;
    let mut manifest = Manifest::new(&id, "verify");
    echo_config(&mut manifest, input);
    let passed = records.iter().filter(|r| r.pass).count();
    manifest.set("checks_total", &records.len().to_string());
    manifest.set("checks_passed", &passed.to_string());
    manifest.set(
        "verify_status",
        if passed == records.len() {
            "PASS"
        } else {
            "FAIL"
        },
    );
    manifest.add_file(&report_path);
    manifest.write(&input.out_dir)?;
    for r in &records {
        println!(
            "{:<44} {:>24}  {}",
            r.name,
            fmt_f64(r.measured),
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("verify: {passed}/{} checks passed", records.len());
    if passed == records.len() {
        Ok(Outcome::Success)
    } else {
        anyhow::bail!(
            "verification failed: {}/{} checks",
            records.len() - passed,
            records.len()
        )
    }
}

fn scaled_norms(
    scen: &ScenarioConfig,
    sol: &CoupledSolution,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let times = &sol.pair.psi_p.times;
    let t = scen.terminal_time;
    let mut psi_sup = Vec::new();
    let mut eta_sup = Vec::new();
    let mut psi_beta = Vec::new();
    let mut eta_beta = Vec::new();
    let mut psi_scaled = Vec::new();
    let mut eta_scaled = Vec::new();
    for (k, s) in times.iter().enumerate() {
        let pf = &sol.pair.psi_p.fields[k];
        let ef = &sol.pair.eta_p.fields[k];
        psi_sup.push(pf.max_abs());
        eta_sup.push(ef.max_abs());
        let pb = weighted_sup_norm(pf, scen.beta);
        let eb = weighted_sup_norm(ef, scen.beta);
        psi_beta.push(pb);
        eta_beta.push(eb);
        match scen.regime {
            Regime::Theorem1 => {
                psi_scaled.push((1.0 + s).powf(scen.sigma) * pb);
                eta_scaled.push((1.0 + (t - s)).powf(scen.sigma) * eb);
            }
            Regime::Theorem2 => {
                psi_scaled.push(pb);
                eta_scaled.push((scen.sigma * s).exp() * eb);
            }
        }
    }
    (psi_sup, eta_sup, psi_beta, eta_beta, psi_scaled, eta_scaled)
}

pub fn cmd_solve(input: &CommandInput) -> Result<Outcome> {
    input.prepare_dir()?;
    let id = run_id(&input.config_text, "solve", input.seed_override);
    let lab = Lab::build(&input.config.discretization())?;
    let scen = input.scenario()?;
    let bd = build_boundary_data(&lab, &scen)?;
    let sol = solve_coupled(&lab, &scen, &bd)?;

    let (psi_sup, eta_sup, psi_beta, eta_beta, psi_scaled, eta_scaled) = scaled_norms(&scen, &sol);
    let mut traj = CsvWriter::new(
        &id,
        &[
            "s",
            "psi_p_sup",
            "eta_p_sup",
            "psi_p_beta",
            "eta_p_beta",
            "psi_p_scaled",
            "eta_p_scaled",
        ],
    );
    for (k, s) in sol.pair.psi_p.times.iter().enumerate() {
        traj.row(&[
            fmt_f64(*s),
            fmt_f64(psi_sup[k]),
            fmt_f64(eta_sup[k]),
            fmt_f64(psi_beta[k]),
            fmt_f64(eta_beta[k]),
            fmt_f64(psi_scaled[k]),
            fmt_f64(eta_scaled[k]),
        ]);
    }
    let traj_path = input.out_dir.join("trajectory.csv");
    traj.write(&traj_path)?;

    let mut iters = CsvWriter::new(
        &id,
        &["iterate", "delta_psi", "delta_eta", "delta", "ratio"],
    );
    for r in &sol.history {
        iters.row(&[
            r.iteration.to_string(),
            fmt_f64(r.delta_psi),
            fmt_f64(r.delta_eta),
            fmt_f64(r.delta),
            r.ratio.map(fmt_f64).unwrap_or_else(|| "nan".to_string()),
        ]);
    }
    let iters_path = input.out_dir.join("iterations.csv");
    iters.write(&iters_path)?;

    let mut manifest = Manifest::new(&id, "solve");
    echo_config(&mut manifest, input);
    manifest.set("converged", &sol.converged.to_string());
    manifest.set("iterations", &sol.history.len().to_string());
    manifest.set_f64("residual", sol.residual);
    manifest.set_f64("min_psi", sol.min_psi);
    manifest.set_f64("min_eta", sol.min_eta);
    manifest.set("degenerate", &sol.degenerate.to_string());
    manifest.set_f64("h1_initial_norm", bd.initial_norm);
    manifest.set_f64("h2_terminal_norm", bd.terminal_norm);
    if sol.converged {
        let decay = decay_report(&lab, &scen, &sol)?;
        manifest.set_f64("decay.psi_envelope", decay.psi.value);
        manifest.set_f64("decay.eta_envelope_reversed", decay.eta_reversed.value);
        manifest.set_f64("decay.a_star", decay.a_star);
    }
    manifest.add_file(&traj_path);
    manifest.add_file(&iters_path);
    manifest.write(&input.out_dir)?;

    println!(
        "solve: converged={} iterations={} residual={}",
        sol.converged,
        sol.history.len(),
        fmt_f64(sol.residual)
    );
    Ok(if sol.converged {
        Outcome::Success
    } else {
        Outcome::Divergence
    })
}

pub struct FunctionalRow {
    pub t: f64,
    pub i_def: f64,
    pub i_dec: f64,
    pub discrepancy: f64,
    pub i_inf: f64,
    pub gap: f64,
    pub residual: f64,
}

pub fn functional_point(
    lab: &Lab,
    scen: &ScenarioConfig,
    residual_dt: f64,
) -> Result<FunctionalRow> {
    let solve_at = |tt: f64| -> Result<(CoupledSolution, f64)> {
        let cfg = ScenarioConfig {
            terminal_time: tt,
            ..scen.clone()
        };
        let bd = build_boundary_data(lab, &cfg)?;
        let sol = solve_coupled(lab, &cfg, &bd)?;
        if !sol.converged {
            anyhow::bail!("solver diverged at t = {tt}");
        }
        let v = evaluate_functional(lab, &cfg, &sol)?;
        Ok((sol, v))
    };
    let (sol, i_def) = solve_at(scen.terminal_time)?;
    let i_dec = functional_decomposed(lab, scen, &sol)?;
    let g_eff = effective_g_hat(lab, &sol)?;
    let i_inf = stationary_functional(&g_eff, &lab.eqs);
    // difference quotient through the decomposed formula: its evaluation
    // does not accumulate the time-integral representation defect
    let next_cfg = ScenarioConfig {
        terminal_time: scen.terminal_time + residual_dt,
        ..scen.clone()
    };
    let (sol_next, _) = solve_at(next_cfg.terminal_time)?;
    let i_dec_next = functional_decomposed(lab, &next_cfg, &sol_next)?;
    let (psi, eta) = reconstruct_full(lab, &sol.pair);
    let last = psi.len() - 1;
    let h = hamiltonian_sym(&psi.fields[last], &eta.fields[last], &lab.ctx.table)?;
    let residual = ((i_dec_next - i_dec) / residual_dt - h).abs();
    Ok(FunctionalRow {
        t: scen.terminal_time,
        i_def,
        i_dec,
        discrepancy: (i_def - i_dec).abs(),
        i_inf,
        gap: (i_dec - i_inf).abs(),
        residual,
    })
}

pub fn cmd_functional(input: &CommandInput) -> Result<Outcome> {
    input.prepare_dir()?;
    let id = run_id(&input.config_text, "functional", input.seed_override);
    let lab = Lab::build(&input.config.discretization())?;
    let scen = input.scenario()?;
    let mut csv = CsvWriter::new(
        &id,
        &[
            "t",
            "i_def",
            "i_decomp",
            "discrepancy",
            "i_infinity",
            "gap",
            "residual",
        ],
    );
    let mut diverged = false;
    for &t in &input.config.functional.t_list {
        let point = ScenarioConfig {
            terminal_time: t,
            ..scen.clone()
        };
        match functional_point(&lab, &point, input.config.functional.residual_dt) {
            Ok(row) => csv.row(&[
                fmt_f64(row.t),
                fmt_f64(row.i_def),
                fmt_f64(row.i_dec),
                fmt_f64(row.discrepancy),
                fmt_f64(row.i_inf),
                fmt_f64(row.gap),
                fmt_f64(row.residual),
            ]),
            Err(e) => {
                eprintln!("functional: t = {t}: {e}");
                diverged = true;
            }
        }
    }
    let path = input.out_dir.join("functional.csv");
    csv.write(&path)?;
    let mut manifest = Manifest::new(&id, "functional");
    echo_config(&mut manifest, input);
    manifest.add_file(&path);
    manifest.write(&input.out_dir)?;
    println!("functional: wrote {}", path.display());
    Ok(if diverged {
        Outcome::Divergence
    } else {
        Outcome::Success
    })
}

pub fn cmd_sweep(input: &CommandInput) -> Result<Outcome> {
    input.prepare_dir()?;
    let id = run_id(&input.config_text, "sweep", input.seed_override);
    let scen = input.scenario()?;
    let sweep = &input.config.sweep;

    struct Point {
        index: usize,
        t: f64,
        alpha: f64,
        scale: f64,
        quadratic: f64,
    }
    let mut points = Vec::new();
    let mut index = 0usize;
    for &t in &sweep.terminal_times {
        for &alpha in &sweep.alphas {
            for &scale in &sweep.scales {
                for &quadratic in &sweep.quadratics {
                    points.push(Point {
                        index,
                        t,
                        alpha,
                        scale,
                        quadratic,
                    });
                    index += 1;
                }
            }
        }
    }

    let mut csv = CsvWriter::new(
        &id,
        &[
            "point",
            "t",
            "alpha",
            "scale",
            "quadratic",
            "converged",
            "iterations",
            "i_def",
            "i_decomp",
            "discrepancy",
            "i_infinity",
            "gap",
        ],
    );
    // points run in the worker pool; rows are emitted in point order
    let results: Vec<(usize, std::result::Result<Vec<String>, String>)> = points
        .par_iter()
        .map(|p| {
            let disc = hjlab_core::scenario::Discretization {
                alpha: p.alpha,
                ..input.config.discretization()
            };
            let point_scen = ScenarioConfig {
                terminal_time: p.t,
                perturbation_scale: p.scale,
                terminal: match scen.terminal.clone() {
                    hjlab_core::scenario::TerminalPreset::Centered {
                        constant,
                        linear,
                        cross,
                        cos_amplitude,
                        project_kernel,
                        project_axis_invariants,
                        ..
                    } => hjlab_core::scenario::TerminalPreset::Centered {
                        constant,
                        linear,
                        quadratic: p.quadratic,
                        cross,
                        cos_amplitude,
                        project_kernel,
                        project_axis_invariants,
                    },
                    other => other,
                },
                ..scen.clone()
            };
            let row = (|| -> Result<Vec<String>> {
                let lab = Lab::build(&disc)?;
                let bd = build_boundary_data(&lab, &point_scen)?;
                let sol = solve_coupled(&lab, &point_scen, &bd)?;
                if !sol.converged {
                    return Ok(vec![
                        p.index.to_string(),
                        fmt_f64(p.t),
                        fmt_f64(p.alpha),
                        fmt_f64(p.scale),
                        fmt_f64(p.quadratic),
                        "false".to_string(),
                        sol.history.len().to_string(),
                        "nan".to_string(),
                        "nan".to_string(),
                        "nan".to_string(),
                        "nan".to_string(),
                        "nan".to_string(),
                    ]);
                }
                let i_def = evaluate_functional(&lab, &point_scen, &sol)?;
                let i_dec = functional_decomposed(&lab, &point_scen, &sol)?;
                let g_eff = effective_g_hat(&lab, &sol)?;
                let i_inf = stationary_functional(&g_eff, &lab.eqs);
                Ok(vec![
                    p.index.to_string(),
                    fmt_f64(p.t),
                    fmt_f64(p.alpha),
                    fmt_f64(p.scale),
                    fmt_f64(p.quadratic),
                    "true".to_string(),
                    sol.history.len().to_string(),
                    fmt_f64(i_def),
                    fmt_f64(i_dec),
                    fmt_f64((i_def - i_dec).abs()),
                    fmt_f64(i_inf),
                    // gap through the decomposed formula, as in functional.csv
                    fmt_f64((i_dec - i_inf).abs()),
                ])
            })();
            (p.index, row.map_err(|e| e.to_string()))
        })
        .collect();
    for (index, row) in &results {
        let index = *index;
        match row {
            Ok(fields) => csv.row(fields),
            Err(e) => {
                eprintln!("sweep point {index}: {e}");
                let p = &points[index];
                csv.row(&[
                    index.to_string(),
                    fmt_f64(p.t),
                    fmt_f64(p.alpha),
                    fmt_f64(p.scale),
                    fmt_f64(p.quadratic),
                    "error".to_string(),
                    "0".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                ]);
            }
        }
    }
    let path = input.out_dir.join("sweep.csv");
    csv.write(&path)?;
    let mut manifest = Manifest::new(&id, "sweep");
    echo_config(&mut manifest, input);
    manifest.set("points", &points.len().to_string());
    let max_abs_i = results
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .filter(|f| f[5] == "true")
        .filter_map(|f| f[7].parse::<f64>().ok())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    manifest.set_f64("max_abs_functional", max_abs_i);
    manifest.add_file(&path);
    manifest.write(&input.out_dir)?;
    println!("sweep: {} points -> {}", points.len(), path.display());
    Ok(Outcome::Success)
}

fn echo_config(manifest: &mut Manifest, input: &CommandInput) {
    let cfg = &input.config;
    let disc = cfg.discretization();
    manifest.set("grid.dimension", &disc.dim.to_string());
    manifest.set_f64("grid.velocity.radius", disc.radius);
    manifest.set(
        "grid.velocity.nodes_per_axis",
        &disc.velocity_nodes.to_string(),
    );
    manifest.set("grid.space.nodes_per_axis", &disc.space_nodes.to_string());
    manifest.set("grid.sphere.order", &disc.sphere_order.to_string());
    manifest.set_f64("equilibrium.alpha", disc.alpha);
    manifest.set_f64("norms.beta", cfg.norms.beta);
    manifest.set_f64("norms.sigma", cfg.norms.sigma);
    manifest.set("scenario.regime", &cfg.scenario.regime);
    manifest.set_f64("scenario.terminal_time", cfg.scenario.terminal_time);
    manifest.set(
        "scenario.seed",
        &input.seed_override.unwrap_or(cfg.scenario.seed).to_string(),
    );
    manifest.set_f64(
        "scenario.perturbation_scale",
        cfg.scenario.perturbation_scale,
    );
    manifest.set("scenario.terminal.preset", &cfg.scenario.terminal.preset);
    manifest.set("scenario.forcing.mode", &cfg.scenario.forcing.mode);
    manifest.set_f64("solver.time_step", cfg.solver.time_step);
    manifest.set_f64("solver.substep", cfg.solver.substep);
    manifest.set_f64("solver.tolerance", cfg.solver.tolerance);
    manifest.set(
        "solver.max_iterations",
        &cfg.solver.max_iterations.to_string(),
    );
    manifest.set("output.dir", &cfg.output.dir);
    // the velocity-ball truncation is an artifact decision, flagged on
    // every report
    manifest.set(
        "note.truncation",
        "velocity space truncated to |v| <= radius; the continuum problem has none",
    );
}

pub fn ensure_out_dir(config: &RunConfig, cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output.dir))
}
