//! End-to-end runs chaining profiles, the energy law, the 2D solve, level
//! sets, diagnostics and the layer ODE.

use std::f64::consts::FRAC_PI_6;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    decay_envelope, flux_identity, gradient_and_monotone, hamiltonian_balance, imbalance_witness, limit_profiles,
    speed_bounds, DecayEnvelope, FluxIdentity, GradientCheck, HamiltonianBalance, ImbalanceReport, LimitProfiles,
    SpeedBounds,
};
use crate::error::Error;
use crate::layerdyn::{asymptote_prediction, compare, integrate, Comparison, LayerInit, LayerParams, Reference};
use crate::levelset::{
    branch_tables, extract_level, fit_asymptotics, symmetry_residual, BranchTable, FitModel, FitResult, Orientation,
    SymmetryResidual,
};
use crate::potentials::Potential;
use crate::profiles1d::{energy_curve, front_speed, heteroclinic};
use crate::solver2d::{
    anchor, discrete_planar_front, initial_guess, relax, ConvergenceLog, Field2D, Grid, InitKind, Lateral, SolveConfig,
};

/// A failure tagged with the stage that raised it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Knobs of the balanced pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalancedSetup {
    /// Solve configuration; a balanced-cosh `a_eff` that is not positive is
    /// replaced by the fitted interaction constant.
    pub solve: SolveConfig,
    /// Half-distance window and sample count of the energy fit.
    pub energy_l_min: f64,
    pub energy_l_max: f64,
    pub energy_samples: usize,
    /// Log-law fits use branch heights above this fraction of the height
    /// between the vertex and the top row.
    pub tail_fraction: f64,
    /// Fraction of that height dropped below the top row, which carries a
    /// boundary layer of its own.
    pub tail_top_margin: f64,
    /// Fraction of the height trimmed at each end of the interior
    /// Hamiltonian window.
    pub interior_margin: f64,
    /// End of the layer-ODE integration.
    pub ode_span: f64,
}

impl Default for BalancedSetup {
    fn default() -> Self {
        BalancedSetup {
            solve: SolveConfig::balanced_default(0.0),
            energy_l_min: 3.0,
            energy_l_max: 6.0,
            energy_samples: 16,
            tail_fraction: 0.6,
            tail_top_margin: 0.05,
            interior_margin: 0.1,
            ode_span: 1e4,
        }
    }
}

/// Scalars of a balanced run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalancedReport {
    pub beta: f64,
    pub a_eff: f64,
    pub energy_rate: f64,
    pub converged: bool,
    pub steps: usize,
    pub final_residual: f64,
    pub vertex: (f64, f64),
    pub tail_window: (f64, f64),
    pub c1: FitResult,
    pub c2: FitResult,
    pub cosh_law: FitResult,
    pub symmetry: SymmetryResidual,
    pub gradient: GradientCheck,
    pub hamiltonian_interior: HamiltonianBalance,
    pub hamiltonian_full: HamiltonianBalance,
    pub flux_residual: f64,
    pub flux_residual_far_field: f64,
    pub flux_max_column_mass: f64,
    pub decay: DecayEnvelope,
    pub limits: LimitProfiles,
    pub ode_offset: f64,
    pub ode_vs_pde: Comparison,
}

/// A balanced run with the data behind its report.
#[derive(Debug, Clone)]
pub struct BalancedRun {
    pub report: BalancedReport,
    pub field: Field2D,
    pub log: ConvergenceLog,
    /// Zero-level branches relative to the vertex.
    pub k1: BranchTable,
    pub k2: BranchTable,
    pub gamma: BranchTable,
    pub flux: FluxIdentity,
}

/// Interaction constant from the two-layer energy law.
pub fn fitted_a_eff(p: &Potential, setup: &BalancedSetup) -> crate::Result<(f64, f64)> {
    let ec = energy_curve(p, setup.energy_l_min, setup.energy_l_max, setup.energy_samples)?;
    Ok((ec.a_eff, ec.rate))
}

pub fn balanced(p: &Arc<Potential>, setup: &BalancedSetup) -> StageResult<BalancedRun> {
    let k = *p.constants().stage("potentials")?;
    let (a_eff, energy_rate) = fitted_a_eff(p, setup).stage("energy-curve")?;
    let mut cfg = setup.solve;
    if let InitKind::BalancedCosh { a_eff: ref mut a, .. } = cfg.init {
        if !(*a > 0.0) {
            *a = a_eff;
        }
    }
    let cfg = cfg.checked(p).stage("solve2d")?;
    let u0 = initial_guess(p, cfg.c, &cfg.init, &cfg).stage("solve2d")?;
    let (field, log) = relax(u0, &cfg).stage("solve2d")?;

    let (xc, yv) = anchor(&field).stage("levelset")?;
    let curve = extract_level(&field, 0.0).stage("levelset")?;
    let k1 = branch_tables(&curve, Orientation::K1OfY).stage("levelset")?.translated(xc, yv);
    let k2 = branch_tables(&curve, Orientation::K2OfY).stage("levelset")?.translated(xc, yv);
    let gamma = branch_tables(&curve, Orientation::GammaOfX).stage("levelset")?.translated(xc, yv);
    let top = field.y_max() - yv;
    let tail_window = (setup.tail_fraction * top, (1.0 - setup.tail_top_margin) * top);
    let c1 = fit_asymptotics(&k1, FitModel::LogBranch, p, tail_window).stage("levelset")?;
    let c2 = fit_asymptotics(&k2, FitModel::LogBranch, p, tail_window).stage("levelset")?;
    // the tail is too steep for γ(x) to have many columns there, so the
    // ratio is evaluated along the right branch
    let cosh_law = fit_asymptotics(&k2, FitModel::CoshLaw, p, tail_window).stage("levelset")?;
    let symmetry = symmetry_residual(&field, xc);

    let gradient = gradient_and_monotone(&field, p);
    let height = field.y_max() - field.y_min;
    let margin = setup.interior_margin * height;
    let hamiltonian_interior = hamiltonian_balance(&field, p, field.y_min + margin, field.y_max() - margin);
    let hamiltonian_full = hamiltonian_balance(&field, p, field.y_min, field.y_max());
    let flux = flux_identity(&field, p).stage("diagnostics")?;
    // branch tables in field coordinates for the envelope
    let decay = decay_envelope(&field, p, &k1.translated(-xc, -yv), &k2.translated(-xc, -yv)).stage("diagnostics")?;
    let limits = limit_profiles(&field, p).stage("diagnostics")?;

    let params = LayerParams { c: cfg.c, mu: k.mu, a_eff, beta: k.beta };
    let ode_offset = asymptote_prediction(&params).stage("layerdyn")?.l_offset;
    let traj = integrate(&params, &LayerInit::symmetric(1.0), (0.0, setup.ode_span)).stage("layerdyn")?;
    let ode_vs_pde = compare(&traj, Reference::Branches { k1: &k1, k2: &k2, window: tail_window }).stage("layerdyn")?;

    let report = BalancedReport {
        beta: k.beta,
        a_eff,
        energy_rate,
        converged: log.converged,
        steps: log.steps,
        final_residual: log.entries.last().map(|e| e.residual.sup).unwrap_or(f64::NAN),
        vertex: (xc, yv),
        tail_window,
        c1,
        c2,
        cosh_law,
        symmetry,
        gradient,
        hamiltonian_interior,
        hamiltonian_full,
        flux_residual: flux.residual,
        flux_residual_far_field: flux.residual_far_field,
        flux_max_column_mass: flux.max_column_mass,
        decay,
        limits,
        ode_offset,
        ode_vs_pde,
    };
    Ok(BalancedRun { report, field, log, k1, k2, gamma, flux })
}

/// Knobs of the unbalanced pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnbalancedSetup {
    /// V-shaped run; the frame speed is overwritten with `c0 / cos α`.
    pub solve: SolveConfig,
    pub alpha: f64,
    /// `|x|` window of the slope fit, as fractions of the half width.
    pub slope_window: (f64, f64),
    /// Grid and step count of the planar drift check.
    pub planar_grid: Grid,
    pub planar_steps: usize,
    pub planar_dt: f64,
}

impl Default for UnbalancedSetup {
    fn default() -> Self {
        let alpha = FRAC_PI_6;
        UnbalancedSetup {
            solve: SolveConfig {
                grid: Grid { x_min: -40.0, x_max: 40.0, y_min: -10.0, y_max: 40.0, nx: 513, ny: 321 },
                c: 0.0,
                dt: 0.35,
                max_steps: 20_000,
                tol: 1e-6,
                check_every: 10,
                recenter_every: 0,
                recenter_x: false,
                recenter_y: false,
                lateral: Lateral::Dirichlet,
                init: InitKind::VShape { alpha },
            },
            alpha,
            // the tip relaxes to the asymptotes like e^{-c tan(α) |x|}
            slope_window: (0.45, 0.9),
            planar_grid: Grid { x_min: -2.0, x_max: 2.0, y_min: -12.0, y_max: 12.0, nx: 16, ny: 241 },
            planar_steps: 1000,
            planar_dt: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbalancedReport {
    pub c0: f64,
    /// `∫ g'²` of the heteroclinic and `F(1) / c0`.
    pub front_dissipation: f64,
    pub front_dissipation_predicted: f64,
    pub planar_speed: f64,
    pub planar_drift: f64,
    pub frame_speed: f64,
    pub converged: bool,
    pub steps: usize,
    pub final_residual: f64,
    pub slope_fit: FitResult,
    pub slope_target: f64,
    pub symmetry: SymmetryResidual,
    pub gradient: GradientCheck,
    pub limits: LimitProfiles,
}

#[derive(Debug, Clone)]
pub struct UnbalancedRun {
    pub report: UnbalancedReport,
    pub field: Field2D,
    pub log: ConvergenceLog,
    pub gamma: BranchTable,
}

/// Sup change of the discrete planar front over `steps` relaxation steps.
pub fn planar_drift(p: &Arc<Potential>, grid: &Grid, steps: usize, dt: f64) -> crate::Result<(f64, f64)> {
    let front = discrete_planar_front(p, grid)?;
    let f = Field2D::from_fn(grid, front.speed, Arc::clone(p), |_, y| {
        front.u[((y - grid.y_min) / grid.hy()).round() as usize]
    })?;
    let cfg = SolveConfig {
        grid: *grid,
        c: front.speed,
        dt,
        max_steps: steps,
        tol: 0.0,
        check_every: steps.max(1),
        recenter_every: 0,
        recenter_x: false,
        recenter_y: false,
        lateral: Lateral::Neumann,
        init: InitKind::Planar { shift: 0.0 },
    }
    .checked(p)?;
    let (out, _) = relax(f.clone(), &cfg)?;
    let drift = out.u.iter().zip(&f.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((front.speed, drift))
}

pub fn unbalanced(p: &Arc<Potential>, setup: &UnbalancedSetup) -> StageResult<UnbalancedRun> {
    let k = *p.constants().stage("potentials")?;
    if k.balanced {
        return Err(StageError {
            stage: "potentials",
            source: Error::KindMismatch { kind: "v-shape", reason: "requires an unbalanced potential".into() },
        });
    }
    let c0 = front_speed(p).stage("profile1d")?;
    let g = heteroclinic(p, (8.0 / k.mu).max(16.0), 0.005).stage("profile1d")?;
    let (planar_speed, planar_drift) =
        planar_drift(p, &setup.planar_grid, setup.planar_steps, setup.planar_dt).stage("solve2d")?;

    let mut cfg = setup.solve;
    cfg.c = c0 / setup.alpha.cos();
    cfg.init = InitKind::VShape { alpha: setup.alpha };
    let cfg = cfg.checked(p).stage("solve2d")?;
    let u0 = initial_guess(p, cfg.c, &cfg.init, &cfg).stage("solve2d")?;
    let (field, log) = relax(u0, &cfg).stage("solve2d")?;

    let curve = extract_level(&field, 0.0).stage("levelset")?;
    let gamma = branch_tables(&curve, Orientation::GammaOfX).stage("levelset")?;
    let half = 0.5 * (field.x_max() - field.x_min);
    let center = 0.5 * (field.x_max() + field.x_min);
    // the line model fits in |x|, so fit one side at a time and average
    let window = (center + setup.slope_window.0 * half, center + setup.slope_window.1 * half);
    let slope_fit = fit_asymptotics(&gamma, FitModel::Line, p, window).stage("levelset")?;
    let symmetry = symmetry_residual(&field, center);
    let gradient = gradient_and_monotone(&field, p);
    let limits = limit_profiles(&field, p).stage("diagnostics")?;
    let report = UnbalancedReport {
        c0,
        front_dissipation: g.gradient_energy(),
        front_dissipation_predicted: k.f1 / c0,
        planar_speed,
        planar_drift,
        frame_speed: cfg.c,
        converged: log.converged,
        steps: log.steps,
        final_residual: log.entries.last().map(|e| e.residual.sup).unwrap_or(f64::NAN),
        slope_fit,
        slope_target: setup.alpha.tan(),
        symmetry,
        gradient,
        limits,
    };
    Ok(UnbalancedRun { report, field, log, gamma })
}

/// Case-one data: a vertical front above a horizontal one, which has no
/// steady state in a balanced potential.
pub fn case_one_setup() -> SolveConfig {
    SolveConfig {
        grid: Grid { x_min: -10.0, x_max: 10.0, y_min: -10.0, y_max: 100.0, nx: 128, ny: 512 },
        c: 1.0,
        dt: 0.5,
        max_steps: 100,
        tol: 1e-6,
        check_every: 10,
        recenter_every: 0,
        recenter_x: false,
        recenter_y: false,
        lateral: Lateral::Neumann,
        init: InitKind::CaseOne { k1: 0.0, height: 60.0 },
    }
}

pub fn case_one(p: &Arc<Potential>, cfg: &SolveConfig) -> StageResult<ImbalanceReport> {
    imbalance_witness(p, cfg).stage("solve2d")
}

pub fn periodic_speed_bound(p: &Potential, alpha: f64) -> StageResult<SpeedBounds> {
    speed_bounds(p, alpha).stage("diagnostics")
}

/// Outcome of a balanced run started from a sideways-skewed guess.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewedReport {
    pub skew: f64,
    pub converged: bool,
    pub steps: usize,
    /// Median branch midpoint of the converged field.
    pub center_x: f64,
    pub initial_symmetry: SymmetryResidual,
    pub symmetry: SymmetryResidual,
    pub gradient: GradientCheck,
}

/// Relaxes the balanced guess with its interior rows displaced by
/// `skew · sin²` and measures the mirror defect about the recovered center.
pub fn skewed_symmetry(p: &Arc<Potential>, setup: &BalancedSetup, skew: f64) -> StageResult<SkewedReport> {
    let (a_eff, _) = fitted_a_eff(p, setup).stage("energy-curve")?;
    let mut cfg = setup.solve;
    cfg.init = InitKind::BalancedCosh { a_eff, skew };
    let cfg = cfg.checked(p).stage("solve2d")?;
    let u0 = initial_guess(p, cfg.c, &cfg.init, &cfg).stage("solve2d")?;
    let initial_symmetry = symmetry_residual(&u0, 0.0);
    let (field, log) = relax(u0, &cfg).stage("solve2d")?;
    let (center_x, _) = anchor(&field).stage("levelset")?;
    Ok(SkewedReport {
        skew,
        converged: log.converged,
        steps: log.steps,
        center_x,
        initial_symmetry,
        symmetry: symmetry_residual(&field, center_x),
        gradient: gradient_and_monotone(&field, p),
    })
}
