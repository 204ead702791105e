//! Batch experiment runner: deterministic pipelines over the core toolkit,
//! one JSON summary plus CSV field dumps per run.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use config::{
    boundary_from, branch_from, grid_from, schedule_from, solver_from, BoundaryPreset, ConfigMap,
};
use lpmd::error::{Error, Result};
use lpmd::fields::{distortion, MappingField};
use lpmd::grid::{DiskGrid, DomainKind};
use lpmd::hopf::hopf_pullback;
use lpmd::io::{write_json, write_sweep_csv, SweepRow};
use lpmd::limits::{douglas_integral, teich_diagnostics, teich_k};
use lpmd::optimizer::{
    continuation_from, initial_guess, minimize_multilevel, ContinuationSchedule, SolveResult,
};
use lpmd::radial::{oracle_boundary_init, radial_profile};
use lpmd::singular::{solve_beltrami, BeltramiProblem, TransformPlan};

const SCHEMA_VERSION: &str = "1";

#[derive(Parser)]
#[command(name = "lpmd", version, about = "L^p mean-distortion energy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Key-value config file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the bundle (overrides config key out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize E_p for one boundary datum.
    Solve,
    /// Continuation over a p-schedule.
    Sweep,
    /// Closed-form radial profile tables.
    Radial,
    /// Principal solution of a Beltrami equation.
    Beltrami,
    /// Ascending sweep plus extremal-limit diagnostics.
    Diagnose,
    /// Douglas-type boundary integral.
    Douglas,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("config error: --threads must be positive");
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut cfg = match &cli.config {
        Some(path) => match ConfigMap::parse_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(1);
            }
        },
        None => ConfigMap::empty(),
    };
    if let Some(out) = &cli.out {
        cfg.override_entry("out_dir", out.display().to_string());
    }
    if let Some(seed) = cli.seed {
        cfg.override_entry("seed", seed.to_string());
    }
    match run(&cli.command, &cfg) {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn out_dir(cfg: &ConfigMap) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.get("out_dir").unwrap_or("lpmd-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run(cmd: &Command, cfg: &ConfigMap) -> Result<ExitCode> {
    match cmd {
        Command::Solve => run_solve(cfg),
        Command::Sweep => run_sweep(cfg, false),
        Command::Diagnose => run_sweep(cfg, true),
        Command::Radial => run_radial(cfg),
        Command::Beltrami => run_beltrami(cfg),
        Command::Douglas => run_douglas(cfg),
    }
}

fn tool_meta() -> serde_json::Value {
    json!({ "name": "lpmd", "version": env!("CARGO_PKG_VERSION") })
}

/// Initial guess for a solve; `levels` > 1 runs a coarse-to-fine cascade.
fn solve_pipeline(
    preset: &BoundaryPreset,
    solver: &lpmd::optimizer::SolverConfig,
    levels: usize,
    grid: &DiskGrid,
    p: f64,
) -> Result<SolveResult> {
    let make_init = |g: &DiskGrid| -> Result<MappingField> {
        match &preset {
            BoundaryPreset::Trace(trace) => {
                if !matches!(g.kind, DomainKind::Disk) {
                    return Err(Error::Config(
                        "circle-trace boundary presets need domain = disk".into(),
                    ));
                }
                initial_guess(trace, g)
            }
            BoundaryPreset::RadialOracle { alpha, branch } => {
                if !matches!(g.kind, DomainKind::Annulus { .. }) {
                    return Err(Error::Config("radial_oracle boundary needs an annulus".into()));
                }
                oracle_boundary_init(p, *alpha, *branch, g)
            }
        }
    };
    let mut grids = Vec::new();
    for level in (0..levels).rev() {
        let div = 1usize << level;
        let n_r = (grid.n_r / div).max(8);
        let n_t = (grid.n_theta / div).max(8);
        grids.push(DiskGrid::build(grid.kind, n_r, n_t)?);
    }
    grids.pop();
    grids.push(grid.clone());
    minimize_multilevel(&grids, p, solver, make_init)
}

fn solve_summary(res: &SolveResult, grid: &DiskGrid, p: f64) -> Result<serde_json::Value> {
    let pb = hopf_pullback(&res.mapping, grid, p)?;
    Ok(json!({
        "p": p,
        "report": res.report,
        "residual_panel": res.residual_panel,
        "residual_panel_max": res.panel_max_relative,
        "holo_residual": pb.holo_residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "final_rel_grad": res.final_rel_grad,
        "min_j": res.min_j,
        "pre_regularization_steps": res.pre_regularization_steps,
        "stall": res.stall,
    }))
}

fn run_solve(cfg: &ConfigMap) -> Result<ExitCode> {
    let grid = grid_from(cfg)?;
    let p = cfg.f64_or("p", 2.0)?;
    if !(p >= 1.0) {
        return Err(Error::Config(format!("p = {p} must be >= 1")));
    }
    let solver = solver_from(cfg)?;
    let levels = cfg.usize_or("levels", 1)?;
    let preset = boundary_from(cfg)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;
    let res = solve_pipeline(&preset, &solver, levels, &grid, p)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": tool_meta(),
        "subcommand": "solve",
        "config": cfg.echo(),
        "solve": solve_summary(&res, &grid, p)?,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    lpmd::grid::csv::write_field(&dir.join("mapping.csv"), &res.mapping.f, &grid)?;
    let bundle = distortion(&res.mapping, &grid)?;
    lpmd::fields::csv::write_bundle(&dir.join("bundle.csv"), &bundle, &grid)?;
    let pb = hopf_pullback(&res.mapping, &grid, p)?;
    lpmd::grid::csv::write_field(&dir.join("hopf_pullback.csv"), &pb.values, &grid)?;
    Ok(if res.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_sweep(cfg: &ConfigMap, diagnose: bool) -> Result<ExitCode> {
    let grid = grid_from(cfg)?;
    let schedule = ContinuationSchedule::new(schedule_from(cfg)?)?;
    let dir = out_dir(cfg)?;
    let solver = solver_from(cfg)?;
    let preset = boundary_from(cfg)?;
    cfg.reject_unknown()?;
    let p0 = schedule.p_values[0];
    let init = match &preset {
        BoundaryPreset::Trace(trace) => initial_guess(trace, &grid)?,
        BoundaryPreset::RadialOracle { alpha, branch } => {
            oracle_boundary_init(p0, *alpha, *branch, &grid)?
        }
    };
    let results = continuation_from(&init, &schedule, &grid, &solver)?;
    let mut rows = Vec::new();
    for (i, res) in results.iter().enumerate() {
        let p = schedule.p_values[i];
        let root = (res.report.energy_p / std::f64::consts::PI).powf(1.0 / p);
        let b = distortion(&res.mapping, &grid)?;
        let wsum: Vec<f64> =
            (0..grid.len()).map(|i| grid.weights[i] * b.j[i].max(0.0)).collect();
        let total: f64 = wsum.iter().sum();
        let mean: f64 = (0..grid.len())
            .map(|i| wsum[i] * b.mu.values[i].norm())
            .sum::<f64>()
            / total;
        let flat = ((0..grid.len())
            .map(|i| wsum[i] * (b.mu.values[i].norm() - mean).powi(2))
            .sum::<f64>()
            / total)
            .sqrt();
        rows.push(SweepRow {
            p,
            energy: res.report.energy_p,
            root,
            k_est: teich_k(std::f64::consts::PI * root.max(1.0)).unwrap_or(0.0),
            flatness: flat,
        });
    }
    write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
    let all_converged = results.iter().all(|r| r.converged) && results.len() == schedule.p_values.len();
    let mut summary = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": tool_meta(),
        "subcommand": if diagnose { "diagnose" } else { "sweep" },
        "config": cfg.echo(),
        "p_schedule": schedule.p_values,
        "energies": results.iter().map(|r| r.report.energy_p).collect::<Vec<_>>(),
        "converged": results.iter().map(|r| r.converged).collect::<Vec<_>>(),
        "completed": all_converged,
    });
    if diagnose {
        let ascending = schedule.p_values.windows(2).all(|w| w[1] > w[0]);
        if !ascending || results.len() < 3 {
            return Err(Error::Config(
                "diagnose needs an ascending p_schedule with at least 3 entries".into(),
            ));
        }
        if all_converged {
            let tagged: Vec<(f64, SolveResult)> = schedule
                .p_values
                .iter()
                .copied()
                .zip(results.iter().cloned())
                .collect();
            let report = teich_diagnostics(&tagged, &grid)?;
            lpmd::grid::csv::write_field(&dir.join("xi.csv"), &report.xi, &grid)?;
            summary["teich"] = serde_json::to_value(&report).expect("serializable");
            write_json(&dir.join("teich.json"), &report)?;
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(if all_converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_radial(cfg: &ConfigMap) -> Result<ExitCode> {
    let p = cfg.f64_or("p", 2.0)?;
    let alpha = cfg.f64_or("alpha", 15.0 / 8.0)?;
    let branch = branch_from(cfg)?;
    let n_samples = cfg.usize_or("n_samples", 512)?;
    let rho_min = cfg.f64_or("rho_min", 0.3)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;
    if !(rho_min > 0.0 && rho_min < 1.0) {
        return Err(Error::Config(format!("rho_min = {rho_min} not in (0,1)")));
    }
    let rho: Vec<f64> = (0..n_samples)
        .map(|i| rho_min + (1.0 - rho_min) * (i as f64 + 1.0) / n_samples as f64)
        .collect();
    let profile = radial_profile(p, alpha, branch, &rho)?;
    profile.write_csv(&dir.join("profile.csv"))?;
    write_json(&dir.join("profile.json"), &profile.header())?;
    let max_residual = (0..rho.len())
        .map(|i| profile.eq_residual(i).abs())
        .fold(0.0, f64::max);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": tool_meta(),
        "subcommand": "radial",
        "config": cfg.echo(),
        "p": p,
        "alpha": alpha,
        "c1": profile.c1,
        "hopf_constant": profile.hopf_constant(),
        "max_eq_residual": max_residual,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ExitCode::SUCCESS)
}

fn run_beltrami(cfg: &ConfigMap) -> Result<ExitCode> {
    let n_fft = cfg.usize_or("fft_n", 1024)?;
    let padding = cfg.f64_or("fft_padding", 4.0)?;
    if padding < 2.0 {
        return Err(Error::Config("fft_padding must be >= 2 (times the support diameter)".into()));
    }
    let tol = cfg.f64_or("tol", 1e-12)?;
    let max_iter = cfg.usize_or("max_iter", 400)?;
    let dir = out_dir(cfg)?;
    let mu_spec = cfg.get("mu").unwrap_or("constant(0.3)").to_string();
    let alpha = cfg.f64_or("alpha", 15.0 / 8.0)?;
    let p_exp = cfg.f64_or("p", 2.0)?;
    let branch = branch_from(cfg)?;
    let rho_inner = cfg.f64_or("rho_inner", 0.5)?;
    cfg.reject_unknown()?;
    // Unit-disk support with the given padding factor: box side = 2 * padding.
    let plan = TransformPlan::new(n_fft, padding)?;
    let prob = if let Some(arg) = mu_spec.strip_prefix("constant(").and_then(|s| s.strip_suffix(')')) {
        let c: f64 = arg
            .parse()
            .map_err(|_| Error::Config(format!("constant mu `{arg}`")))?;
        BeltramiProblem::from_fn(&plan, |z| {
            if z.norm() < 1.0 { Complex64::new(c, 0.0) } else { Complex64::new(0.0, 0.0) }
        })?
    } else if mu_spec == "radial_oracle" {
        BeltramiProblem::from_fn(&plan, |z| {
            let r = z.norm();
            if r >= rho_inner && r <= 1.0 {
                lpmd::radial::radial_mu(p_exp, alpha, branch, z).unwrap_or_default()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })?
    } else {
        return Err(Error::Config(format!(
            "mu preset `{mu_spec}` (constant(c)|radial_oracle)"
        )));
    };
    let sol = solve_beltrami(&prob, &plan, tol, max_iter)?;
    let max_ratio = sol.state.ratios.iter().copied().fold(0.0, f64::max);
    // Lattice dump (x, y, re, im).
    {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("principal.csv"))?);
        writeln!(out, "x,y,re,im")?;
        for iy in 0..plan.n {
            for ix in 0..plan.n {
                let z = plan.point(ix, iy);
                let f = sol.f[iy * plan.n + ix];
                writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", z.re, z.im, f.re, f.im)?;
            }
        }
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": tool_meta(),
        "subcommand": "beltrami",
        "config": cfg.echo(),
        "k_inf": prob.k_inf,
        "iterations": sol.state.iter,
        "residual": sol.residual,
        "max_contraction_ratio": max_ratio,
        "update_norm": sol.state.update_norm,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ExitCode::SUCCESS)
}

fn run_douglas(cfg: &ConfigMap) -> Result<ExitCode> {
    let n_quad = cfg.usize_or("n_quad", 2048)?;
    let preset = boundary_from(cfg)?;
    let dir = out_dir(cfg)?;
    cfg.reject_unknown()?;
    let BoundaryPreset::Trace(trace) = preset else {
        return Err(Error::Config("douglas needs a circle-trace boundary preset".into()));
    };
    let report = douglas_integral(&trace, n_quad)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": tool_meta(),
        "subcommand": "douglas",
        "config": cfg.echo(),
        "douglas": report,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("douglas.json"), &report)?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_solve_into(dir: &Path) -> Vec<u8> {
        let mut cfg = ConfigMap::parse(
            "domain = disk\nn_r = 16\nn_theta = 32\nboundary = sinusoidal(0.2)\np = 2\n\
             grad_tol = 1e-5\nmax_iters = 2000\nseed = 11\n",
        )
        .unwrap();
        cfg.override_entry("out_dir", dir.display().to_string());
        let code = run(&Command::Solve, &cfg).unwrap();
        assert_eq!(code, ExitCode::SUCCESS);
        std::fs::read(dir.join("summary.json")).unwrap()
    }

    #[test]
    fn rerun_is_bit_identical() {
        let dir = std::env::temp_dir().join("lpmd-determinism-test");
        let _ = std::fs::remove_dir_all(&dir);
        let first = run_solve_into(&dir);
        let second = run_solve_into(&dir);
        assert_eq!(first, second, "summaries differ between identical runs");
        // The bundle echoes its config.
        let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
        assert_eq!(parsed["config"]["boundary"], "sinusoidal(0.2)");
        assert_eq!(parsed["config"]["seed"], "11");
        assert_eq!(parsed["schema_version"], SCHEMA_VERSION);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = ConfigMap::parse("domain = disk\nwhatever = 3\n").unwrap();
        let err = run(&Command::Solve, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn radial_oracle_needs_annulus() {
        let cfg = ConfigMap::parse("domain = disk\nboundary = radial_oracle\n").unwrap();
        assert!(run(&Command::Solve, &cfg).is_err());
    }
}
