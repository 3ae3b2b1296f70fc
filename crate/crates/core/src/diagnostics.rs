//! Identities, bounds and classifications evaluated on a sampled field.
//!
//! Row and column integrals use the trapezoid rule; derivatives are centered
//! inside the grid and second-order one-sided on its edges.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::level_crossings;
use crate::levelset::BranchTable;
use crate::potentials::Potential;
use crate::profiles1d::{bounded_gstar, heteroclinic, periodic_profile, two_layer};
use crate::solver2d::{initial_guess, relax_with, Field2D, SolveConfig};
use crate::stats::linear_fit;

fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Derivative of uniformly spaced `v` at index `k`.
fn diff(v: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h)
    } else {
        (v(k + 1) - v(k - 1)) / (2.0 * h)
    }
}

fn dx(u: &Field2D, i: usize, j: usize) -> f64 {
    diff(|k| u.at(k, j), i, u.nx, u.hx)
}

fn dy(u: &Field2D, i: usize, j: usize) -> f64 {
    diff(|k| u.at(i, k), j, u.ny, u.hy)
}

/// `(y, ρ(y))` with `ρ(y) = ∫ ½(u_x² - u_y²) + F(u) dx`.
pub fn rho_profile(u: &Field2D, p: &Potential) -> Vec<(f64, f64)> {
    (0..u.ny)
        .into_par_iter()
        .map(|j| {
            let dens: Vec<f64> = (0..u.nx)
                .map(|i| {
                    let (ux, uy) = (dx(u, i, j), dy(u, i, j));
                    0.5 * (ux * ux - uy * uy) + p.f(u.at(i, j))
                })
                .collect();
            (u.y(j), trapezoid(&dens, u.hx))
        })
        .collect()
}

/// `(y, ∫ u_y² dx)` per row.
pub fn uy_row_mass(u: &Field2D) -> Vec<(f64, f64)> {
    (0..u.ny)
        .into_par_iter()
        .map(|j| {
            let sq: Vec<f64> = (0..u.nx).map(|i| dy(u, i, j).powi(2)).collect();
            (u.y(j), trapezoid(&sq, u.hx))
        })
        .collect()
}

fn row_index(u: &Field2D, y: f64) -> usize {
    (((y - u.y_min) / u.hy).round().max(0.0) as usize).min(u.ny - 1)
}

/// Both sides of the Hamiltonian identity between two rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianBalance {
    pub y0: f64,
    pub y1: f64,
    pub rho0: f64,
    pub rho1: f64,
    /// `c ∬ u_y²` over the strip between the rows.
    pub dissipation: f64,
    /// `|ρ(y1) - ρ(y0) - c ∬ u_y²|`.
    pub residual: f64,
}

/// Evaluates the identity between the rows nearest `y0 < y1`.
pub fn hamiltonian_balance(u: &Field2D, p: &Potential, y0: f64, y1: f64) -> HamiltonianBalance {
    let (j0, j1) = (row_index(u, y0), row_index(u, y1));
    let rho = rho_profile(u, p);
    let mass = uy_row_mass(u);
    let strip: Vec<f64> = mass[j0..=j1].iter().map(|m| m.1).collect();
    let dissipation = u.c * trapezoid(&strip, u.hy);
    let (rho0, rho1) = (rho[j0].1, rho[j1].1);
    HamiltonianBalance {
        y0: u.y(j0),
        y1: u.y(j1),
        rho0,
        rho1,
        dissipation,
        residual: (rho1 - rho0 - dissipation).abs(),
    }
}

pub fn hamiltonian_residual(u: &Field2D, p: &Potential, y0: f64, y1: f64) -> f64 {
    hamiltonian_balance(u, p, y0, y1).residual
}

/// Column flux `h(x) = ∫ u_x u_y dy` and the defect of its derivative law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxIdentity {
    /// `(x, h(x), ∫ u_y² dy, boundary term)` per column, where the
    /// boundary term is `[F(u) + ½u_x² - ½u_y²]` evaluated top minus bottom.
    pub columns: Vec<(f64, f64, f64, f64)>,
    /// Sup over interior columns of `|h' + c∫u_y² - boundary term|`, the
    /// identity on a truncated strip.
    pub residual: f64,
    /// Sup of `|h' + c∫u_y² - F(1)|` (`F(1) = 0` when balanced), the
    /// identity with the boundary rows replaced by the far-field wells.
    pub residual_far_field: f64,
    pub max_column_mass: f64,
}

pub fn flux_identity(u: &Field2D, p: &Potential) -> Result<FluxIdentity> {
    let f1 = p.constants()?.f1;
    let edge = |i: usize, j: usize| {
        let (ux, uy) = (dx(u, i, j), dy(u, i, j));
        p.f(u.at(i, j)) + 0.5 * ux * ux - 0.5 * uy * uy
    };
    let columns: Vec<(f64, f64, f64, f64)> = (0..u.nx)
        .into_par_iter()
        .map(|i| {
            let (mut flux, mut sq) = (Vec::with_capacity(u.ny), Vec::with_capacity(u.ny));
            for j in 0..u.ny {
                let (ux, uy) = (dx(u, i, j), dy(u, i, j));
                flux.push(ux * uy);
                sq.push(uy * uy);
            }
            (u.x(i), trapezoid(&flux, u.hy), trapezoid(&sq, u.hy), edge(i, u.ny - 1) - edge(i, 0))
        })
        .collect();
    let (mut residual, mut residual_far_field) = (0.0f64, 0.0f64);
    for i in 1..u.nx - 1 {
        let dh = (columns[i + 1].1 - columns[i - 1].1) / (2.0 * u.hx);
        let lhs = dh + u.c * columns[i].2;
        residual = residual.max((lhs - columns[i].3).abs());
        residual_far_field = residual_far_field.max((lhs - f1).abs());
    }
    let max_column_mass = columns.iter().map(|c| c.2).fold(0.0, f64::max);
    Ok(FluxIdentity { columns, residual, residual_far_field, max_column_mass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    /// Max over interior nodes of `|∇u|² - 2F(u)`.
    pub max_excess: f64,
    /// Min over interior nodes of the centered `u_y`.
    pub min_uy: f64,
}

pub fn gradient_and_monotone(u: &Field2D, p: &Potential) -> GradientCheck {
    let rows: Vec<(f64, f64)> = (1..u.ny - 1)
        .into_par_iter()
        .map(|j| {
            (1..u.nx - 1).fold((f64::NEG_INFINITY, f64::INFINITY), |(ex, mn), i| {
                let (ux, uy) = (dx(u, i, j), dy(u, i, j));
                (ex.max(ux * ux + uy * uy - 2.0 * p.f(u.at(i, j))), mn.min(uy))
            })
        })
        .collect();
    let (max_excess, min_uy) = rows
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), &(ex, mn)| (a.max(ex), b.min(mn)));
    GradientCheck { max_excess, min_uy }
}

/// Barrier exponents `μ₁ = (c + √(c² + 8μ₀))/4`, `μ₂ = (-c + √(c² + 8μ₀))/4`.
pub fn barrier_exponents(c: f64, mu0: f64) -> (f64, f64) {
    let s = (c * c + 8.0 * mu0).sqrt();
    ((c + s) / 4.0, (-c + s) / 4.0)
}

/// `B(x, y) = 4 e^{-μ₂R - cy/2} cosh(μ₁y) cosh(μ₂x)`, a solution of
/// `ΔB + cB_y - μ₀B = 0` with `B ≥ 1` on the top and sides of
/// `[-R, R] × [0, R]`.
pub fn barrier(x: f64, y: f64, c: f64, mu0: f64, r: f64) -> f64 {
    let (mu1, mu2) = barrier_exponents(c, mu0);
    4.0 * (-mu2 * r - 0.5 * c * y).exp() * (mu1 * y).cosh() * (mu2 * x).cosh()
}

/// Exponential envelope `|u² - 1| ≤ C e^{-ν d}` in the distance `d` to the
/// nearer branch of the zero level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayEnvelope {
    /// Decay rate of the log-linear regression over the fit window.
    pub nu_fit: f64,
    /// Rate used for the envelope: `min(nu_fit, √μ₀)`.
    pub nu: f64,
    /// Smallest constant for which the envelope holds on the fit window.
    pub c_fit: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Distances used for the fit.
    pub fit_window: (f64, f64),
    pub fit_points: usize,
    /// The envelope holds on every interior node with `d ≥ 2/μ`.
    pub holds: bool,
    pub tail_points: usize,
}

pub fn decay_envelope(u: &Field2D, p: &Potential, k1: &BranchTable, k2: &BranchTable) -> Result<DecayEnvelope> {
    let k = p.constants()?;
    let (mu1, mu2) = barrier_exponents(u.c, k.mu0);
    let right: BTreeMap<usize, f64> = k2.pairs.iter().map(|&(y, x)| (row_index(u, y), x)).collect();
    let mut samples = Vec::new();
    for &(y, x1) in &k1.pairs {
        let j = row_index(u, y);
        let Some(&x2) = right.get(&j) else { continue };
        if j == 0 || j == u.ny - 1 {
            continue;
        }
        for i in 1..u.nx - 1 {
            let x = u.x(i);
            let d = (x - x1).abs().min((x - x2).abs());
            samples.push((d, (u.at(i, j).powi(2) - 1.0).abs()));
        }
    }
    let core = 2.0 / k.mu;
    let d_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let window = (core, d_max - core);
    let fit: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(d, v)| d >= window.0 && d <= window.1 && v > 1e-14)
        .collect();
    if fit.len() < 8 {
        return Err(Error::Insufficient(format!("{} tail samples for the decay fit", fit.len())));
    }
    let ds: Vec<f64> = fit.iter().map(|s| s.0).collect();
    let logs: Vec<f64> = fit.iter().map(|s| s.1.ln()).collect();
    let nu_fit = -linear_fit(&ds, &logs)?.slope;
    if !(nu_fit > 0.0) {
        return Err(Error::DegenerateFit(format!("tail does not decay (rate {nu_fit})")));
    }
    let nu = nu_fit.min(k.mu0.sqrt());
    let c_fit = fit.iter().map(|&(d, v)| v * (nu * d).exp()).fold(0.0, f64::max);
    let tail: Vec<&(f64, f64)> = samples.iter().filter(|s| s.0 >= core).collect();
    let holds = tail.iter().all(|&&(d, v)| v <= c_fit * (-nu * d).exp() * (1.0 + 1e-12));
    Ok(DecayEnvelope {
        nu_fit,
        nu,
        c_fit,
        mu1,
        mu2,
        fit_window: window,
        fit_points: fit.len(),
        holds,
        tail_points: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedBounds {
    pub alpha: f64,
    /// `β_conj < θ` with `F(β_conj) = F(α)`.
    pub conjugate: f64,
    /// `F(α) / G(β_conj)`, with `G(s) = ∫_{-1}^{s} √(2F)`.
    pub bound_periodic: f64,
    /// `F(1) / β`; absent for balanced potentials.
    pub bound_bounded: Option<f64>,
}

pub fn speed_bounds(p: &Potential, alpha: f64) -> Result<SpeedBounds> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Parameter { name: "alpha", value: alpha, range: "[0, 1)" });
    }
    let k = p.constants()?;
    let conjugate = p.conjugate_point(alpha)?;
    let g = p.g_integral(conjugate)?;
    Ok(SpeedBounds {
        alpha,
        conjugate,
        bound_periodic: p.f(alpha) / g,
        bound_bounded: (!k.balanced).then(|| k.f1 / k.beta),
    })
}

/// One-dimensional end states a boundary row is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitClass {
    ConstantMinusOne,
    ConstantPlusOne,
    Heteroclinic,
    Periodic,
    BoundedStar,
    TwoLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowClass {
    pub class: LimitClass,
    /// Sup distance to each candidate after the best shift; candidates that
    /// cannot be fitted to the row are absent.
    pub distances: BTreeMap<LimitClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitProfiles {
    pub top: RowClass,
    pub bottom: RowClass,
}

fn sup_distance(row: &[f64], u: &Field2D, f: impl Fn(f64) -> f64) -> f64 {
    row.iter().enumerate().fold(0.0f64, |m, (i, &v)| m.max((v - f(u.x(i))).abs()))
}

fn classify_row(u: &Field2D, p: &Potential, j: usize) -> Result<RowClass> {
    let k = p.constants()?;
    let row = u.row(j);
    let at = |pos: f64| u.x_min + pos * u.hx;
    let zeros: Vec<f64> = level_crossings(row, 0.0).into_iter().map(at).collect();
    let mut distances = BTreeMap::new();
    distances.insert(LimitClass::ConstantMinusOne, sup_distance(row, u, |_| -1.0));
    distances.insert(LimitClass::ConstantPlusOne, sup_distance(row, u, |_| 1.0));
    let width = (u.x_max() - u.x_min).max(8.0 / k.mu);
    if zeros.len() == 1 {
        let g = heteroclinic(p, width.max(16.0), 0.01)?;
        let s = zeros[0];
        let rising = row[row.len() - 1] > row[0];
        let d = sup_distance(row, u, |x| if rising { g.eval(x - s) } else { g.eval(s - x) });
        distances.insert(LimitClass::Heteroclinic, d);
    }
    let (imax, &vmax) = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("rows are nonempty");
    let (imin, &vmin) = row.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("rows are nonempty");
    if zeros.len() >= 2 && vmax < 1.0 - 1e-6 && vmax > k.theta && vmin > -1.0 + 1e-6 {
        let g = periodic_profile(p, vmax)?;
        let x0 = u.x(imax);
        distances.insert(LimitClass::Periodic, sup_distance(row, u, |x| g.eval(x - x0)));
    }
    if zeros.len() == 2 {
        let (l1, l2) = (zeros[0], zeros[1]);
        let inner_positive = vmax > 0.0 && row[0] < 0.0 && row[row.len() - 1] < 0.0;
        if k.balanced && inner_positive && l2 - l1 >= 2.0 {
            let phi = two_layer(p, l1, l2)?;
            distances.insert(LimitClass::TwoLayer, sup_distance(row, u, |x| phi.eval(x)));
        }
        let inner_negative = vmin < 0.0 && row[0] > 0.0 && row[row.len() - 1] > 0.0;
        if !k.balanced && inner_negative {
            let g = bounded_gstar(p, width)?;
            let x0 = u.x(imin);
            distances.insert(LimitClass::BoundedStar, sup_distance(row, u, |x| g.eval(x - x0)));
        }
    }
    let class = distances
        .iter()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(c, _)| *c)
        .expect("constants are always candidates");
    Ok(RowClass { class, distances })
}

/// Classifies the top and bottom rows by least sup distance.
pub fn limit_profiles(u: &Field2D, p: &Potential) -> Result<LimitProfiles> {
    Ok(LimitProfiles { top: classify_row(u, p, u.ny - 1)?, bottom: classify_row(u, p, 0)? })
}

/// One checkpoint of a run that cannot reach a steady state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImbalanceSample {
    pub step: usize,
    pub time: f64,
    /// `c ∬ u_y² - (ρ_top - ρ_bottom)`, which equals `∬ u_t u_y` and
    /// vanishes on a steady state.
    pub defect: f64,
    /// Time integral of `defect` up to this checkpoint.
    pub accumulated: f64,
    /// `∬ u_y²`.
    pub uy_mass: f64,
    /// Height of the zero crossing on the rightmost interior column.
    pub front_height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceReport {
    pub samples: Vec<ImbalanceSample>,
    pub converged: bool,
    pub steps: usize,
    pub defect_positive: bool,
    pub accumulated_monotone: bool,
    /// Total displacement of `front_height` over the run.
    pub front_drift: Option<f64>,
}

fn imbalance_sample(u: &Field2D, p: &Potential, step: usize, time: f64) -> ImbalanceSample {
    let rho = rho_profile(u, p);
    let mass = uy_row_mass(u);
    let rows: Vec<f64> = mass.iter().map(|m| m.1).collect();
    let uy_mass = trapezoid(&rows, u.hy);
    let defect = u.c * uy_mass - (rho[u.ny - 1].1 - rho[0].1);
    let col = u.column(u.nx - 2);
    let front_height = level_crossings(&col, 0.0).last().map(|k| u.y_min + k * u.hy);
    ImbalanceSample { step, time, defect, accumulated: 0.0, uy_mass, front_height }
}

/// Relaxes from `cfg.init` and records the Hamiltonian defect at every
/// checkpoint. Meant for initial data whose limits admit no traveling wave,
/// where the defect stays positive and its time integral keeps growing.
pub fn imbalance_witness(p: &Arc<Potential>, cfg: &SolveConfig) -> Result<ImbalanceReport> {
    let cfg = cfg.checked(p)?;
    let u0 = initial_guess(p, cfg.c, &cfg.init, &cfg)?;
    let mut samples: Vec<ImbalanceSample> = Vec::new();
    let (_, log) = relax_with(u0, &cfg, |cp, u| {
        let mut s = imbalance_sample(u, p, cp.step, cp.step as f64 * cfg.dt);
        if let Some(prev) = samples.last() {
            s.accumulated = prev.accumulated + 0.5 * (prev.defect + s.defect) * (s.time - prev.time);
        }
        samples.push(s);
    })?;
    let defect_positive = samples.iter().all(|s| s.defect > 0.0);
    let accumulated_monotone = samples.windows(2).all(|w| w[1].accumulated > w[0].accumulated);
    let front_drift = match (samples.first().and_then(|s| s.front_height), samples.last().and_then(|s| s.front_height)) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    Ok(ImbalanceReport { samples, converged: log.converged, steps: log.steps, defect_positive, accumulated_monotone, front_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver2d::Grid;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quartic() -> Arc<Potential> {
        Arc::new(Potential::quartic())
    }

    fn grid(nx: usize, ny: usize) -> Grid {
        Grid { x_min: -8.0, x_max: 8.0, y_min: -8.0, y_max: 8.0, nx, ny }
    }

    fn g(s: f64) -> f64 {
        (s / 2f64.sqrt()).tanh()
    }

    #[test]
    fn constant_fields_are_trivial() {
        let p = quartic();
        let minus = Field2D::from_fn(&grid(33, 33), 1.0, p.clone(), |_, _| -1.0).unwrap();
        assert!(rho_profile(&minus, &p).iter().all(|r| r.1 == 0.0));
        assert_eq!(hamiltonian_residual(&minus, &p, -4.0, 4.0), 0.0);
        let plus = Field2D::from_fn(&grid(33, 33), 1.0, p.clone(), |_, _| 1.0).unwrap();
        let gc = gradient_and_monotone(&plus, &p);
        assert_eq!(gc.max_excess, 0.0);
        let lp = limit_profiles(&plus, &p).unwrap();
        assert_eq!(lp.top.class, LimitClass::ConstantPlusOne);
        assert_eq!(lp.bottom.distances[&LimitClass::ConstantPlusOne], 0.0);
    }

    #[test]
    fn vertical_layer_carries_beta_per_row() {
        let p = quartic();
        let beta = 2.0 * 2f64.sqrt() / 3.0;
        let u = Field2D::from_fn(&grid(801, 16), 0.0, p.clone(), |x, _| g(x)).unwrap();
        for (_, r) in rho_profile(&u, &p) {
            assert_abs_diff_eq!(r, beta, epsilon = 1e-4);
        }
    }

    #[test]
    fn planar_front_saturates_the_gradient_bound() {
        let p = quartic();
        let mut prev = f64::INFINITY;
        for n in [101, 201, 401] {
            let u = Field2D::from_fn(&grid(16, n), 0.0, p.clone(), |_, y| g(y)).unwrap();
            let gc = gradient_and_monotone(&u, &p);
            assert!(gc.max_excess.abs() < 0.01);
            assert!(gc.min_uy > 0.0);
            // second order: halving h divides the excess by about four
            assert!(gc.max_excess.abs() < prev / 3.5);
            prev = gc.max_excess.abs();
        }
    }

    #[test]
    fn unbalanced_planar_flux() {
        // ∫g'² = F(1)/c₀ with F(1) = 4a/3 and c₀ = √2 a for the tilted quartic
        let a = 0.3;
        let p = Arc::new(Potential::tilted(a).unwrap());
        let c0 = 2f64.sqrt() * a;
        let grid = Grid { x_min: -1.0, x_max: 1.0, y_min: -20.0, y_max: 20.0, nx: 16, ny: 16001 };
        let u = Field2D::from_fn(&grid, c0, p.clone(), |_, y| g(y)).unwrap();
        let fl = flux_identity(&u, &p).unwrap();
        for col in &fl.columns {
            assert!(col.1.abs() < 1e-15);
            assert_abs_diff_eq!(col.2, 0.4 / c0, epsilon = 2e-6);
        }
        assert!(fl.residual_far_field < 1e-5);
    }

    #[test]
    fn barrier_identities() {
        let (mu1, mu2) = barrier_exponents(1.0, 1.0);
        assert_abs_diff_eq!(mu1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mu2, 0.5, epsilon = 1e-15);
        let r = 3.0;
        assert_abs_diff_eq!(barrier(0.0, 0.0, 1.0, 1.0, r), 4.0 * (-0.5 * r).exp(), epsilon = 1e-15);
        // ΔB + cB_y - μ₀B = 0 by finite differences
        let (c, mu0, h) = (0.7, 1.3, 1e-3);
        let b = |x: f64, y: f64| barrier(x, y, c, mu0, r);
        for (x, y) in [(0.3, 0.4), (-1.2, 2.1), (2.5, 0.9)] {
            let lap = (b(x + h, y) + b(x - h, y) + b(x, y + h) + b(x, y - h) - 4.0 * b(x, y)) / (h * h);
            let by = (b(x, y + h) - b(x, y - h)) / (2.0 * h);
            assert!((lap + c * by - mu0 * b(x, y)).abs() < 1e-5 * b(x, y));
        }
        for k in 0..=20 {
            let s = -r + 2.0 * r * k as f64 / 20.0;
            assert!(b(s, r) >= 1.0);
            let t = r * k as f64 / 20.0;
            assert!(b(r, t) >= 1.0 && b(-r, t) >= 1.0);
        }
    }

    proptest! {
        #[test]
        fn barrier_exponent_relations(c in 0.01f64..5.0, mu0 in 0.01f64..5.0) {
            let (mu1, mu2) = barrier_exponents(c, mu0);
            prop_assert!((mu1 - mu2 - c / 2.0).abs() <= 1e-12);
            prop_assert!((mu1 * mu1 + mu2 * mu2 - c * c / 4.0 - mu0).abs() <= 1e-12 * (1.0 + mu0 + c * c));
        }
    }

    #[test]
    fn quartic_speed_bound_matches_closed_form() {
        // G(-1/2) = (1/√2)∫_{-1}^{-1/2} (1 - u²) du = (5/24)/√2
        let oracle = 0.140625 / (5.0 / 24.0 / 2f64.sqrt());
        let sb = speed_bounds(&Potential::quartic(), 0.5).unwrap();
        assert_abs_diff_eq!(sb.conjugate, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sb.bound_periodic, oracle, epsilon = 1e-9);
        assert!(sb.bound_bounded.is_none());
        let tilted = Potential::tilted(0.3).unwrap();
        let sb = speed_bounds(&tilted, 0.5).unwrap();
        let beta = tilted.constants().unwrap().beta;
        assert_abs_diff_eq!(sb.bound_bounded.unwrap(), 0.4 / beta, epsilon = 1e-12);
    }

    #[test]
    fn rows_are_classified() {
        let p = quartic();
        let grid = Grid { x_min: -12.0, x_max: 12.0, y_min: 0.0, y_max: 1.0, nx: 481, ny: 16 };
        let phi = two_layer(&p, -4.0, 4.0).unwrap();
        let u = Field2D::from_fn(&grid, 1.0, p.clone(), |x, y| if y > 0.5 { phi.eval(x) } else { g(x - 1.0) })
            .unwrap();
        let lp = limit_profiles(&u, &p).unwrap();
        assert_eq!(lp.top.class, LimitClass::TwoLayer);
        assert!(lp.top.distances[&LimitClass::TwoLayer] < 1e-3);
        assert_eq!(lp.bottom.class, LimitClass::Heteroclinic);
        assert!(lp.bottom.distances[&LimitClass::Heteroclinic] < 1e-3);
        let ga = periodic_profile(&p, 0.6).unwrap();
        let u = Field2D::from_fn(&grid, 1.0, p.clone(), |x, _| ga.eval(x - 0.5)).unwrap();
        assert_eq!(limit_profiles(&u, &p).unwrap().top.class, LimitClass::Periodic);
    }

    #[test]
    fn hamiltonian_is_additive() {
        let p = quartic();
        let u = Field2D::from_fn(&grid(65, 129), 1.0, p.clone(), |x, y| g(y - 0.1 * x * x)).unwrap();
        let a = hamiltonian_residual(&u, &p, -6.0, -1.0);
        let b = hamiltonian_residual(&u, &p, -1.0, 5.0);
        let ab = hamiltonian_residual(&u, &p, -6.0, 5.0);
        assert!(ab <= a + b + 1e-12);
    }
}
