//! Double-well potentials and their derived constants.
//!
//! A potential is a smooth `F` with nondegenerate minima at `±1`,
//! `F(-1) = 0`, one interior critical point `θ`, and `F(1) ≥ 0`. It is
//! *balanced* when `F(1) = 0`.
//!
//! ```
//! use acfront::potentials::Potential;
//!
//! let p = Potential::quartic();
//! assert_eq!(p.f(0.0), 0.25);
//! let k = p.constants().unwrap();
//! assert!((k.mu - 2f64.sqrt()).abs() < 1e-12);
//! assert!(k.balanced);
//! ```

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::quad;

/// Tolerance on `|F(1)|` below which a potential counts as balanced.
pub const BALANCED_TOL: f64 = 1e-12;
/// Absolute tolerance used for `β` and `G`.
pub const ENERGY_TOL: f64 = 1e-12;

const FD_STEP_1: f64 = 1e-5;
const FD_STEP_2: f64 = 1e-4;
const CONST_SCAN: usize = 20_000;

#[derive(Debug, Clone)]
enum Shape {
    Quartic,
    Tilted { a: f64 },
    Tabulated { spline: CubicSpline },
    Custom { f: fn(f64) -> f64, df: fn(f64) -> f64, d2f: fn(f64) -> f64 },
}

/// Parameters accepted by [`make_potential`]; unused fields are ignored.
#[derive(Debug, Clone, Default)]
pub struct PotentialParams {
    /// Tilt of the tilted quartic, in `(0, 1)`.
    pub a: Option<f64>,
    /// Samples `(u, F(u))` of a tabulated potential, covering `[-1, 1]`
    /// strictly.
    pub table: Vec<(f64, f64)>,
}

/// Constants derived from a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    /// Interior zero of `F'`.
    pub theta: f64,
    /// `sqrt(F''(1))`.
    pub mu: f64,
    /// `sqrt(F''(-1))`.
    pub mu_minus: f64,
    /// Convexity floor: `F'' > mu0` on `[-1, alpha_minus] ∪ [alpha_plus, 1]`.
    pub mu0: f64,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    /// `∫_{-1}^{1} sqrt(2F)`.
    pub beta: f64,
    /// `F(1)`.
    pub f1: f64,
    pub balanced: bool,
}

/// A double-well potential with lazily computed, cached constants.
#[derive(Debug, Clone)]
pub struct Potential {
    shape: Shape,
    constants: OnceLock<Result<Constants>>,
}

/// Build a potential from a kind tag (`quartic`, `tilted-quartic`,
/// `tabulated`) and parameters. All derived constants are computed eagerly.
pub fn make_potential(kind: &str, params: &PotentialParams) -> Result<Potential> {
    let p = match kind {
        "quartic" => Potential::quartic(),
        "tilted-quartic" => {
            let a = params.a.ok_or(Error::Parameter {
                name: "a",
                value: f64::NAN,
                range: "(0, 1), required",
            })?;
            Potential::tilted(a)?
        }
        "tabulated" => Potential::tabulated(&params.table)?,
        other => return Err(Error::UnknownKind(other.to_string())),
    };
    p.constants()?;
    Ok(p)
}

impl Potential {
    /// `F(u) = (1 - u²)² / 4`.
    pub fn quartic() -> Self {
        Self::from_shape(Shape::Quartic)
    }

    /// Tilted quartic with `F'(u) = (u - a)(u² - 1)` and `F(-1) = 0`, so
    /// `F(1) = 4a/3`.
    pub fn tilted(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Parameter { name: "a", value: a, range: "(0, 1)" });
        }
        Ok(Self::from_shape(Shape::Tilted { a }))
    }

    /// Natural cubic spline through `(u, F(u))` samples; derivatives by
    /// central differences of the spline.
    pub fn tabulated(table: &[(f64, f64)]) -> Result<Self> {
        if table.len() < 8 {
            return Err(Error::Parameter {
                name: "table.len",
                value: table.len() as f64,
                range: "at least 8 rows",
            });
        }
        if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidPotential("tabulated u must be strictly increasing".into()));
        }
        let lo = table[0].0;
        let hi = table[table.len() - 1].0;
        let margin = FD_STEP_2 * 2.0;
        if lo > -1.0 - margin || hi < 1.0 + margin {
            return Err(Error::Parameter {
                name: "table.range",
                value: if lo > -1.0 - margin { lo } else { hi },
                range: "must strictly contain [-1, 1]",
            });
        }
        let (x, y): (Vec<f64>, Vec<f64>) = table.iter().copied().unzip();
        Ok(Self::from_shape(Shape::Tabulated { spline: CubicSpline::new(x, y) }))
    }

    /// Potential from plain function pointers. Constants are computed on
    /// first use and may fail for non double-well input.
    pub fn custom(f: fn(f64) -> f64, df: fn(f64) -> f64, d2f: fn(f64) -> f64) -> Self {
        Self::from_shape(Shape::Custom { f, df, d2f })
    }

    fn from_shape(shape: Shape) -> Self {
        Potential { shape, constants: OnceLock::new() }
    }

    pub fn kind(&self) -> &'static str {
        match self.shape {
            Shape::Quartic => "quartic",
            Shape::Tilted { .. } => "tilted-quartic",
            Shape::Tabulated { .. } => "tabulated",
            Shape::Custom { .. } => "custom",
        }
    }

    /// Tilt parameter of the tilted quartic.
    pub fn tilt(&self) -> Option<f64> {
        match self.shape {
            Shape::Tilted { a } => Some(a),
            _ => None,
        }
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Quartic => {
                let w = 1.0 - u * u;
                0.25 * w * w
            }
            Shape::Tilted { a } => {
                let u2 = u * u;
                u2 * u2 / 4.0 - a * u2 * u / 3.0 - u2 / 2.0 + a * u + 0.25 + 2.0 * a / 3.0
            }
            Shape::Tabulated { spline } => spline.eval(u),
            Shape::Custom { f, .. } => f(u),
        }
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Quartic => u * (u * u - 1.0),
            Shape::Tilted { a } => (u - a) * (u * u - 1.0),
            Shape::Tabulated { spline } => {
                (spline.eval(u + FD_STEP_1) - spline.eval(u - FD_STEP_1)) / (2.0 * FD_STEP_1)
            }
            Shape::Custom { df, .. } => df(u),
        }
    }

    #[inline]
    pub fn d2f(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Quartic => 3.0 * u * u - 1.0,
            Shape::Tilted { a } => 3.0 * u * u - 2.0 * a * u - 1.0,
            Shape::Tabulated { spline } => {
                let h = FD_STEP_2;
                (spline.eval(u + h) - 2.0 * spline.eval(u) + spline.eval(u - h)) / (h * h)
            }
            Shape::Custom { d2f, .. } => d2f(u),
        }
    }

    /// Derived constants, computed once.
    pub fn constants(&self) -> Result<&Constants> {
        self.constants
            .get_or_init(|| compute_constants(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn is_balanced(&self) -> bool {
        self.f(1.0).abs() <= BALANCED_TOL
    }

    /// `G(s) = ∫_{-1}^{s} sqrt(2F(t)) dt` for `s ∈ [-1, 1]`.
    pub fn g_integral(&self, s: f64) -> Result<f64> {
        let s = s.clamp(-1.0, 1.0);
        quad::integrate(|t| (2.0 * self.f(t)).max(0.0).sqrt(), -1.0, s, ENERGY_TOL)
    }

    /// The point `b < θ` with `F(b) = F(alpha)`, for `alpha ∈ [θ, 1]`.
    pub fn conjugate_point(&self, alpha: f64) -> Result<f64> {
        let theta = self.constants()?.theta;
        if alpha <= theta {
            return Ok(alpha);
        }
        let level = self.f(alpha);
        quad::bisect(|s| self.f(s) - level, -1.0, theta, 1e-15)
    }

    /// Largest `F''` on `[-1, 1]` (sampled), which sets the explicit
    /// reaction stability limit `dt < 2 / max F''`.
    pub fn max_curvature(&self) -> f64 {
        (0..=2000)
            .map(|k| self.d2f(-1.0 + k as f64 * 1e-3))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `β` and `G(s)` of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaG {
    pub beta: f64,
    pub g_of_s: f64,
}

pub fn beta_and_g(p: &Potential, s: f64) -> Result<BetaG> {
    Ok(BetaG { beta: p.constants()?.beta, g_of_s: p.g_integral(s)? })
}

fn compute_constants(p: &Potential) -> Result<Constants> {
    let d2m = p.d2f(-1.0);
    let d2p = p.d2f(1.0);
    if !(d2m > 0.0 && d2p > 0.0) {
        return Err(Error::InvalidPotential(format!(
            "F'' must be positive at the wells, got F''(-1) = {d2m}, F''(1) = {d2p}"
        )));
    }
    // F' > 0 just right of -1 and < 0 just left of 1 for a double well
    let edge = 1e-3;
    let theta = quad::bisect(|s| p.df(s), -1.0 + edge, 1.0 - edge, 1e-15)
        .map_err(|e| Error::InvalidPotential(format!("no interior critical point: {e}")))?;
    let mu0 = 0.5 * d2m.min(d2p);
    let crossing = |from: f64, to: f64| -> Result<f64> {
        // walk from θ outward; the first sample above mu0 brackets the crossing
        let mut prev = from;
        for k in 1..=CONST_SCAN {
            let s = from + (to - from) * k as f64 / CONST_SCAN as f64;
            if p.d2f(s) > mu0 {
                return quad::bisect(|t| p.d2f(t) - mu0, prev.min(s), prev.max(s), 1e-15);
            }
            prev = s;
        }
        Err(Error::InvalidPotential("F'' never exceeds the convexity floor".into()))
    };
    let alpha_minus = crossing(theta, -1.0)?;
    let alpha_plus = crossing(theta, 1.0)?;
    let beta = p.g_integral(1.0)?;
    let f1 = p.f(1.0);
    Ok(Constants {
        theta,
        mu: d2p.sqrt(),
        mu_minus: d2m.sqrt(),
        mu0,
        alpha_minus,
        alpha_plus,
        beta,
        f1,
        balanced: f1.abs() <= BALANCED_TOL,
    })
}

/// One failed condition of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub location: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub balanced: bool,
    pub violations: Vec<Violation>,
}

/// Check every double-well condition at `samples` uniformly spaced points.
/// Failures are reported, never raised.
pub fn validate(p: &Potential, tol: f64, samples: usize) -> ValidationReport {
    let mut v = Vec::new();
    let mut push = |c: &str, loc: f64, val: f64| {
        v.push(Violation { condition: c.to_string(), location: loc, value: val })
    };
    if samples < 100 {
        push("samples >= 100", f64::NAN, samples as f64);
    }
    let n = samples.max(100);
    let f_m = p.f(-1.0);
    if f_m.abs() > tol {
        push("F(-1) = 0", -1.0, f_m);
    }
    for s in [-1.0, 1.0] {
        let d = p.df(s);
        if d.abs() > tol {
            push(if s < 0.0 { "F'(-1) = 0" } else { "F'(1) = 0" }, s, d);
        }
        let d2 = p.d2f(s);
        if !(d2 > 0.0) {
            push(if s < 0.0 { "F''(-1) > 0" } else { "F''(1) > 0" }, s, d2);
        }
    }
    let f1 = p.f(1.0);
    if f1 < -BALANCED_TOL {
        push("F(1) >= 0", 1.0, f1);
    }
    let grid: Vec<f64> = (1..n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
    match p.constants() {
        Ok(k) => {
            for &s in &grid {
                let d = p.df(s);
                // samples that coincide with θ carry no sign information
                if (s - k.theta).abs() <= 1e-9 {
                    continue;
                }
                if s < k.theta && !(d > 0.0) {
                    push("F' > 0 on (-1, theta)", s, d);
                } else if s > k.theta && !(d < 0.0) {
                    push("F' < 0 on (theta, 1)", s, d);
                }
                if (s < k.alpha_minus || s > k.alpha_plus) && !(p.d2f(s) > k.mu0) {
                    push("F'' > mu0 outside [alpha_minus, alpha_plus]", s, p.d2f(s));
                }
            }
        }
        Err(_) => {
            // without θ, report the number of sampled sign changes of F'
            let changes = grid.windows(2).filter(|w| p.df(w[0]).signum() != p.df(w[1]).signum()).count();
            push("derived constants computable", f64::NAN, changes as f64);
        }
    }
    ValidationReport { pass: v.is_empty(), balanced: f1.abs() <= BALANCED_TOL, violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quartic_values() {
        let p = Potential::quartic();
        assert_eq!(p.f(0.0), 0.25);
        assert_eq!(p.f(1.0), 0.0);
        assert_eq!(p.df(1.0), 0.0);
        let k = p.constants().unwrap();
        assert_abs_diff_eq!(k.mu, 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(k.theta, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.mu0, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.alpha_plus, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(k.alpha_minus, -(2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(k.beta, 2.0 * 2f64.sqrt() / 3.0, epsilon = 1e-10);
        assert!(k.balanced);
    }

    #[test]
    fn tilted_values_match_antiderivative() {
        let a = 0.3;
        let p = Potential::tilted(a).unwrap();
        // oracle: quadrature of F' from -1
        let f1 = quad::integrate(|u| (u - a) * (u * u - 1.0), -1.0, 1.0, 1e-14).unwrap();
        assert_abs_diff_eq!(f1, 0.4, epsilon = 1e-13);
        assert_abs_diff_eq!(p.f(1.0), f1, epsilon = 1e-13);
        assert_abs_diff_eq!(p.f(-1.0), 0.0, epsilon = 1e-15);
        let k = p.constants().unwrap();
        assert_abs_diff_eq!(k.theta, 0.3, epsilon = 1e-13);
        assert!(!k.balanced);
        let r = validate(&p, 1e-10, 1000);
        assert!(r.pass, "{:?}", r.violations);
        assert!(!r.balanced);
    }

    #[test]
    fn tilt_out_of_range_is_rejected() {
        assert!(matches!(Potential::tilted(-0.3), Err(Error::Parameter { .. })));
        assert!(matches!(
            make_potential("sextic", &PotentialParams::default()),
            Err(Error::UnknownKind(_))
        ));
    }

    #[test]
    fn quartic_passes_and_pure_quartic_fails() {
        assert!(validate(&Potential::quartic(), 1e-12, 1000).pass);
        let p = Potential::custom(|u| u.powi(4), |u| 4.0 * u.powi(3), |u| 12.0 * u * u);
        let r = validate(&p, 1e-12, 1000);
        assert!(!r.pass);
        let v = r.violations.iter().find(|v| v.condition == "F'(-1) = 0").unwrap();
        assert_eq!(v.value, -4.0);
        assert_eq!(v.location, -1.0);
    }

    #[test]
    fn tabulated_quartic_reproduces_constants() {
        let table: Vec<(f64, f64)> = (0..=600)
            .map(|k| {
                let u = -1.5 + k as f64 * 0.005;
                (u, 0.25 * (1.0 - u * u).powi(2))
            })
            .collect();
        let p = make_potential("tabulated", &PotentialParams { a: None, table }).unwrap();
        let k = p.constants().unwrap();
        assert_abs_diff_eq!(k.mu, 2f64.sqrt(), epsilon = 1e-4);
        assert_abs_diff_eq!(k.beta, 2.0 * 2f64.sqrt() / 3.0, epsilon = 1e-8);
        assert!(validate(&p, 1e-6, 500).pass);
    }

    #[test]
    fn g_endpoints() {
        let p = Potential::quartic();
        let r = beta_and_g(&p, -1.0).unwrap();
        assert_eq!(r.g_of_s, 0.0);
        let r = beta_and_g(&p, 1.0).unwrap();
        assert_abs_diff_eq!(r.g_of_s, r.beta, epsilon = 1e-14);
    }

    #[test]
    fn constants_are_cached_and_repeatable() {
        let p = Potential::tilted(0.6).unwrap();
        let a = *p.constants().unwrap();
        let b = *p.clone().constants().unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.mu * a.mu, p.d2f(1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(a.mu_minus * a.mu_minus, p.d2f(-1.0), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn g_is_nondecreasing(a in 0.05f64..0.95, s1 in -1.0f64..1.0, s2 in -1.0f64..1.0) {
            let p = Potential::tilted(a).unwrap();
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(p.g_integral(hi).unwrap() >= p.g_integral(lo).unwrap() - 1e-13);
        }

        #[test]
        fn quartic_is_even(u in -1.5f64..1.5) {
            let p = Potential::quartic();
            prop_assert_eq!(p.f(u), p.f(-u));
            let b = p.conjugate_point(u.abs().min(0.99)).unwrap();
            prop_assert!((b + u.abs().min(0.99)).abs() < 1e-12);
        }
    }
}
