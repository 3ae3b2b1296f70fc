//! Task runners behind the command line. Each writes its artifacts under
//! `<out>/<task>/` and returns the JSON summary it also stores there.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{FieldSection, ProfileChoice, RunConfig, Task};
use crate::diagnostics::{
    barrier_exponents, decay_envelope, flux_identity, gradient_and_monotone, hamiltonian_balance, limit_profiles,
    rho_profile, speed_bounds,
};
use crate::error::Error;
use crate::io::{read_field, write_field, write_json, write_table};
use crate::layerdyn::{asymptote_prediction, compare, integrate, q_identity_residual, LayerInit, LayerParams, Reference};
use crate::levelset::{branch_tables, extract_level, symmetry_residual, BranchTable, Orientation};
use crate::pipeline::{balanced, case_one, skewed_symmetry, unbalanced, Stage, StageError, StageResult};
use crate::potentials::{validate, Potential};
use crate::profiles1d::{
    bounded_gstar, energy_curve, energy_slope_check, front_speed, heteroclinic, periodic_profile, two_layer,
};
use crate::solver2d::{anchor, initial_guess, relax, Field2D, InitKind};

/// Runs `task` with artifacts under `out/<task>/`.
pub fn run(task: Task, cfg: &RunConfig, out: &Path) -> StageResult<Value> {
    cfg.check_task(task).stage("config")?;
    let dir = out.join(task.name());
    fs::create_dir_all(&dir).map_err(|e| Error::Format(format!("{}: {e}", dir.display()))).stage("io")?;
    let p = cfg.build_potential().stage("config")?;
    let summary = match task {
        Task::Validate => run_validate(cfg, &p, &dir)?,
        Task::Profile1d => run_profile1d(cfg, &p, &dir)?,
        Task::EnergyCurve => run_energy(cfg, &p, &dir)?,
        Task::Solve2d => run_solve(cfg, &p, &dir)?,
        Task::Levelset => run_levels(cfg, &p, &dir, out)?,
        Task::Diagnose => run_diagnose(cfg, &p, &dir, out)?,
        Task::Layerdyn => run_layerdyn(cfg, &p, &dir)?,
        Task::FullReport => run_report(cfg, &p, &dir)?,
    };
    write_json(&dir.join("summary.json"), &summary).stage("io")?;
    fs::write(dir.join("summary.txt"), human_summary(task, &summary))
        .map_err(|e| Error::Format(e.to_string()))
        .stage("io")?;
    Ok(summary)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

/// `key = value` lines for the scalar entries of a summary.
fn human_summary(task: Task, summary: &Value) -> String {
    let mut s = format!("task: {}\n", task.name());
    if let Value::Object(map) = summary {
        for (k, v) in map {
            match v {
                Value::Number(_) | Value::Bool(_) | Value::String(_) | Value::Null => s += &format!("{k} = {v}\n"),
                _ => {}
            }
        }
    }
    s
}

fn run_validate(cfg: &RunConfig, p: &Potential, dir: &Path) -> StageResult<Value> {
    let report = validate(p, cfg.validate.tol, cfg.validate.samples);
    write_json(&dir.join("validation.json"), &report).stage("io")?;
    let k = p.constants().stage("potentials")?;
    Ok(json!({
        "pass": report.pass,
        "balanced": report.balanced,
        "violations": report.violations.len(),
        "beta": k.beta,
        "mu": k.mu,
        "theta": k.theta,
        "f1": k.f1,
    }))
}

fn run_profile1d(cfg: &RunConfig, p: &Potential, dir: &Path) -> StageResult<Value> {
    let s = &cfg.profile1d;
    let path = dir.join("profile.csv");
    if s.profile == ProfileChoice::TwoLayer {
        let tl = two_layer(p, s.l1, s.l2).stage("profile1d")?;
        let rows = (0..tl.x.len()).map(|i| vec![tl.x[i], tl.phi[i], tl.phi_x[i]]);
        write_table(&path, &["x", "phi", "phi_x"], rows).stage("io")?;
        return Ok(json!({
            "profile": "two-layer", "l": tl.l, "m": tl.m, "energy": tl.energy, "energy_slope": tl.energy_slope,
        }));
    }
    let prof = match s.profile {
        ProfileChoice::Heteroclinic => heteroclinic(p, s.half_width, s.h),
        ProfileChoice::Periodic => periodic_profile(p, s.alpha),
        ProfileChoice::Bounded => bounded_gstar(p, s.half_width),
        ProfileChoice::TwoLayer => unreachable!("handled above"),
    }
    .stage("profile1d")?;
    let rows = (0..prof.s.len()).map(|i| vec![prof.s[i], prof.u[i], prof.u_prime[i]]);
    write_table(&path, &["s", "u", "u_prime"], rows).stage("io")?;
    Ok(json!({
        "profile": to_value(&s.profile),
        "speed": prof.speed,
        "h": prof.h,
        "period": prof.period,
        "amplitude": prof.amplitude,
        "trough": prof.trough,
        "k_star": prof.k_star,
        "gradient_energy": prof.gradient_energy(),
    }))
}

fn run_energy(cfg: &RunConfig, p: &Potential, dir: &Path) -> StageResult<Value> {
    let s = &cfg.energy;
    let ec = energy_curve(p, s.l_min, s.l_max, s.samples).stage("energy-curve")?;
    let rows = ec.rows.iter().map(|r| vec![r.l, r.m, r.energy, r.energy_slope]);
    write_table(&dir.join("energy.csv"), &["l", "m", "energy", "energy_slope"], rows).stage("io")?;
    let checks = s
        .slope_at
        .iter()
        .map(|&l| energy_slope_check(p, l, s.slope_step))
        .collect::<crate::Result<Vec<_>>>()
        .stage("energy-curve")?;
    let rows = checks.iter().map(|c| vec![c.l, c.finite_difference, c.two_f_m, c.relative]);
    write_table(&dir.join("slope_check.csv"), &["l", "finite_difference", "two_f_m", "relative"], rows).stage("io")?;
    let mu = p.constants().stage("potentials")?.mu;
    Ok(json!({
        "A_eff": ec.a_eff,
        "rate": ec.rate,
        "two_mu": 2.0 * mu,
        "a1": ec.a1,
        "beta": ec.beta,
        "slope_relative_max": checks.iter().map(|c| c.relative).fold(0.0, f64::max),
    }))
}

fn write_convergence(dir: &Path, log: &crate::solver2d::ConvergenceLog) -> StageResult<()> {
    let rows = log.entries.iter().map(|e| {
        vec![e.step as f64, e.residual.sup, e.residual.l2, e.sup_dudt, e.shift_x, e.shift_y]
    });
    write_table(&dir.join("convergence.csv"), &["step", "residual_sup", "residual_l2", "sup_dudt", "shift_x", "shift_y"], rows)
        .stage("io")
}

fn write_branch(dir: &Path, name: &str, t: &BranchTable) -> StageResult<()> {
    let header = match t.orientation {
        Orientation::GammaOfX => ["x", "y"],
        _ => ["y", "x"],
    };
    write_table(&dir.join(name), &header, t.pairs.iter().map(|&(a, b)| vec![a, b])).stage("io")
}

fn run_solve(cfg: &RunConfig, p: &Arc<Potential>, dir: &Path) -> StageResult<Value> {
    let mut solve = cfg.solve;
    let mut fitted = None;
    if let InitKind::BalancedCosh { a_eff: ref mut a, .. } = solve.init {
        if !(*a > 0.0) {
            let ec = energy_curve(p, cfg.energy.l_min, cfg.energy.l_max, cfg.energy.samples).stage("energy-curve")?;
            *a = ec.a_eff;
            fitted = Some(ec.a_eff);
        }
    }
    let solve = solve.checked(p).stage("solve2d")?;
    let u0 = initial_guess(p, solve.c, &solve.init, &solve).stage("solve2d")?;
    let (field, log) = relax(u0, &solve).stage("solve2d")?;
    write_field(&dir.join("field.csv"), &field).stage("io")?;
    write_convergence(dir, &log)?;
    let last = log.entries.last();
    Ok(json!({
        "init": solve.init.name(),
        "A_eff": fitted,
        "converged": log.converged,
        "steps": log.steps,
        "final_residual": last.map(|e| e.residual.sup),
        "residual_monotone": log.residual_monotone,
        "gradient": to_value(&gradient_and_monotone(&field, p)),
    }))
}

fn load_field(cfg: &RunConfig, s: &FieldSection, p: &Arc<Potential>, out: &Path) -> StageResult<Field2D> {
    let path: PathBuf = match &s.field {
        Some(f) => cfg.resolve(f),
        None => out.join(Task::Solve2d.name()).join("field.csv"),
    };
    if !path.is_file() {
        return Err(StageError {
            stage: "config",
            source: Error::Format(format!("field {} does not exist", path.display())),
        });
    }
    read_field(&path, Arc::clone(p)).stage("io")
}

fn run_levels(cfg: &RunConfig, p: &Arc<Potential>, dir: &Path, out: &Path) -> StageResult<Value> {
    let field = load_field(cfg, &cfg.levels, p, out)?;
    let curve = extract_level(&field, cfg.levels.level).stage("levelset")?;
    let rows = curve
        .polylines
        .iter()
        .enumerate()
        .flat_map(|(k, line)| line.iter().map(move |&(x, y)| vec![k as f64, x, y]));
    write_table(&dir.join("curve.csv"), &["polyline", "x", "y"], rows).stage("io")?;
    let mut branches = Map::new();
    for (orientation, name) in
        [(Orientation::GammaOfX, "gamma"), (Orientation::K1OfY, "k1"), (Orientation::K2OfY, "k2")]
    {
        // a missing branch is a property of the curve, not a failure
        if let Ok(t) = branch_tables(&curve, orientation) {
            write_branch(dir, &format!("{name}.csv"), &t)?;
            branches.insert(name.into(), json!({ "points": t.pairs.len(), "window": t.window }));
        }
    }
    let center = anchor(&field).map(|a| a.0).unwrap_or(0.5 * (field.x_min + field.x_max()));
    Ok(json!({
        "level": curve.level,
        "polylines": curve.polylines.len(),
        "points": curve.polylines.iter().map(Vec::len).sum::<usize>(),
        "branches": branches,
        "symmetry": to_value(&symmetry_residual(&field, center)),
    }))
}

fn run_diagnose(cfg: &RunConfig, p: &Arc<Potential>, dir: &Path, out: &Path) -> StageResult<Value> {
    let field = load_field(cfg, &cfg.diagnose, p, out)?;
    let k = *p.constants().stage("potentials")?;
    let rho = rho_profile(&field, p);
    write_table(&dir.join("rho.csv"), &["y", "rho"], rho.iter().map(|&(y, r)| vec![y, r])).stage("io")?;
    let flux = flux_identity(&field, p).stage("diagnostics")?;
    let rows = flux.columns.iter().map(|&(x, h, m, b)| vec![x, h, m, b]);
    write_table(&dir.join("flux.csv"), &["x", "h", "uy_mass", "boundary"], rows).stage("io")?;
    let decay = extract_level(&field, 0.0).ok().and_then(|curve| {
        let k1 = branch_tables(&curve, Orientation::K1OfY).ok()?;
        let k2 = branch_tables(&curve, Orientation::K2OfY).ok()?;
        decay_envelope(&field, p, &k1, &k2).ok()
    });
    let (mu1, mu2) = barrier_exponents(field.c, k.mu0);
    Ok(json!({
        "hamiltonian_residual": hamiltonian_balance(&field, p, field.y_min, field.y_max()).residual,
        "hamiltonian": to_value(&hamiltonian_balance(&field, p, field.y_min, field.y_max())),
        "flux_residual": flux.residual,
        "flux_residual_far_field": flux.residual_far_field,
        "flux_max_column_mass": flux.max_column_mass,
        "gradient": to_value(&gradient_and_monotone(&field, p)),
        "limits": to_value(&limit_profiles(&field, p).stage("diagnostics")?),
        "speed_bounds": to_value(&speed_bounds(p, cfg.diagnose.alpha).stage("diagnostics")?),
        "mu1": mu1,
        "mu2": mu2,
        "decay": decay.map(|d| to_value(&d)),
    }))
}

fn layer_a_eff(cfg: &RunConfig, p: &Potential, a_eff: f64) -> StageResult<f64> {
    if a_eff > 0.0 {
        return Ok(a_eff);
    }
    let e = &cfg.energy;
    Ok(energy_curve(p, e.l_min, e.l_max, e.samples).stage("energy-curve")?.a_eff)
}

fn run_layerdyn(cfg: &RunConfig, p: &Potential, dir: &Path) -> StageResult<Value> {
    let s = &cfg.layerdyn;
    let k = *p.constants().stage("potentials")?;
    let params = LayerParams { c: s.c, mu: k.mu, a_eff: layer_a_eff(cfg, p, s.a_eff)?, beta: k.beta };
    let traj = integrate(&params, &LayerInit::symmetric(s.l0), (0.0, s.y_end)).stage("layerdyn")?;
    let rows = traj.samples.iter().map(|x| vec![x.y, x.l1, x.l2, x.l1p, x.l2p]);
    write_table(&dir.join("trajectory.csv"), &["y", "l1", "l2", "l1p", "l2p"], rows).stage("io")?;
    let asymptote = asymptote_prediction(&params).stage("layerdyn")?;
    let theory = compare(&traj, Reference::Theory { tail_start: s.tail_start }).stage("layerdyn")?;
    Ok(json!({
        "A_eff": params.a_eff,
        "q_slope": asymptote.q_slope,
        "l_offset": asymptote.l_offset,
        "tail_deviation": theory.max_tail_deviation,
        "q_identity_residual": q_identity_residual(&traj),
        "samples": traj.samples.len(),
        "final_l": traj.last().l(),
    }))
}

/// The summary holds the headline scalars at top level and the supporting
/// reports under `criteria`, keyed by acceptance-criterion id.
fn run_report(cfg: &RunConfig, p: &Arc<Potential>, dir: &Path) -> StageResult<Value> {
    let r = &cfg.report;
    let k = *p.constants().stage("potentials")?;
    let bounds = speed_bounds(p, r.alpha).stage("diagnostics")?;
    if !k.balanced {
        let run = unbalanced(p, &r.unbalanced)?;
        write_field(&dir.join("field.csv"), &run.field).stage("io")?;
        write_convergence(dir, &run.log)?;
        write_branch(dir, "gamma.csv", &run.gamma)?;
        let rep = &run.report;
        return Ok(json!({
            "pipeline": "unbalanced",
            "c0": rep.c0,
            "slope_fit": rep.slope_fit.params.get("slope"),
            "planar_drift": rep.planar_drift,
            "symmetry_residual": rep.symmetry.field_residual,
            "gradient_excess": rep.gradient.max_excess,
            "criteria": {
                "2": { "c0": rep.c0, "planar_speed": rep.planar_speed, "planar_drift": rep.planar_drift },
                "7": {
                    "front_dissipation": rep.front_dissipation,
                    "front_dissipation_predicted": rep.front_dissipation_predicted,
                },
                "10": to_value(&rep.gradient),
                "12": {
                    "frame_speed": rep.frame_speed,
                    "converged": rep.converged,
                    "steps": rep.steps,
                    "final_residual": rep.final_residual,
                    "slope_fit": to_value(&rep.slope_fit),
                    "slope_target": rep.slope_target,
                    "symmetry": to_value(&rep.symmetry),
                    "limits": to_value(&rep.limits),
                },
                "14": to_value(&bounds),
            },
        }));
    }
    let e = &cfg.energy;
    let slope_checks = e
        .slope_at
        .iter()
        .map(|&l| energy_slope_check(p, l, e.slope_step))
        .collect::<crate::Result<Vec<_>>>()
        .stage("energy-curve")?;
    let run = balanced(p, &r.balanced)?;
    write_field(&dir.join("field.csv"), &run.field).stage("io")?;
    write_convergence(dir, &run.log)?;
    write_branch(dir, "k1.csv", &run.k1)?;
    write_branch(dir, "k2.csv", &run.k2)?;
    let skew = if r.skew != 0.0 { Some(to_value(&skewed_symmetry(p, &r.balanced, r.skew)?)) } else { None };
    let witness = if r.case_one { Some(to_value(&case_one(p, &r.case_one_solve)?)) } else { None };
    let rep = &run.report;
    let front = heteroclinic(p, (8.0 / k.mu).max(10.0), 0.01).stage("profile1d")?;
    Ok(json!({
        "pipeline": "balanced",
        "beta": rep.beta,
        "A_eff": rep.a_eff,
        "C1": rep.c1.params.get("C1"),
        "C2": rep.c2.params.get("C2"),
        "hamiltonian_residual": rep.hamiltonian_interior.residual,
        "symmetry_residual": rep.symmetry.field_residual,
        "gradient_excess": rep.gradient.max_excess,
        "criteria": {
            "1": { "beta": k.beta, "front_speed": front_speed(p).stage("profile1d")?, "front_dissipation": front.gradient_energy() },
            "3": to_value(&slope_checks),
            "4": { "rate": rep.energy_rate, "two_mu": 2.0 * k.mu, "A_eff": rep.a_eff },
            "5": {
                "converged": rep.converged,
                "steps": rep.steps,
                "final_residual": rep.final_residual,
                "min_uy": rep.gradient.min_uy,
                "vertex": rep.vertex,
            },
            "6": {
                "interior": to_value(&rep.hamiltonian_interior),
                "full": to_value(&rep.hamiltonian_full),
                "two_beta": 2.0 * rep.beta,
            },
            "7": {
                "residual": rep.flux_residual,
                "residual_far_field": rep.flux_residual_far_field,
                "max_column_mass": rep.flux_max_column_mass,
            },
            "8": {
                "tail_window": rep.tail_window,
                "C1": to_value(&rep.c1),
                "C2": to_value(&rep.c2),
                "curve_residual": rep.symmetry.curve_residual,
            },
            "9": skew,
            "10": to_value(&rep.gradient),
            "11": to_value(&rep.decay),
            "13": { "l_offset": rep.ode_offset, "comparison": to_value(&rep.ode_vs_pde) },
            "14": { "speed_bounds": to_value(&bounds), "cosh_law": to_value(&rep.cosh_law), "A_eff_over_c": rep.a_eff / run.field.c },
            "15": witness,
        },
        "limits": to_value(&rep.limits),
    }))
}
