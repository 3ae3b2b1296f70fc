//! One-dimensional profiles: the heteroclinic front `g` with its speed, the
//! periodic orbits `g_α`, the bounded profile `g_*`, and the two-layer hump
//! together with its energy law.
//!
//! Every profile solves `u'' + c u' = F'(u)`. Stationary orbits (`c = 0`)
//! satisfy the first integral `½u'² = F(u) - F(level)`, and are obtained by
//! inverting `x(u) = ∫ du / sqrt(2 (F(u) - F(level)))` on a uniform grid.
//!
//! ```
//! use acfront::potentials::Potential;
//! use acfront::profiles1d::heteroclinic;
//!
//! let g = heteroclinic(&Potential::quartic(), 8.0, 0.01).unwrap();
//! assert_eq!(g.speed, 0.0);
//! assert!((g.eval(1.0) - (1.0 / 2f64.sqrt()).tanh()).abs() < 1e-9);
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::ode::{rk4_step, Dopri5, State};
use crate::potentials::Potential;
use crate::quad;
use crate::stats::linear_fit;

/// Default table spacing.
pub const DEFAULT_H: f64 = 0.01;
const INVERT_TOL: f64 = 1e-13;
/// Inversion stops once `1 - |u|` falls below this; the exponential tail
/// takes over from there.
const TAIL_GAP: f64 = 1e-8;
const SHOOT_OFFSET: f64 = 1e-8;
const SHOOT_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Heteroclinic,
    Periodic,
    BoundedStar,
    TwoLayer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Extension {
    /// `u + 1 ~ e^{left x}` and `1 - u ~ e^{-right x}` beyond the table.
    Fronts { left: f64, right: f64 },
    /// Both ends relax to `+1` at rate `rate`.
    Wells { rate: f64 },
    Periodic { period: f64 },
}

/// A sampled one-dimensional solution on a uniform grid.
#[derive(Debug, Clone)]
pub struct Profile1D {
    pub kind: ProfileKind,
    /// Speed `c` in `u'' + c u' = F'(u)`; zero for stationary orbits.
    pub speed: f64,
    pub h: f64,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    /// Period, for periodic profiles.
    pub period: Option<f64>,
    /// Maximum `u(0)`, for periodic profiles.
    pub amplitude: Option<f64>,
    /// Minimum, for periodic and bounded profiles.
    pub trough: Option<f64>,
    /// Positive zero, for the bounded profile.
    pub k_star: Option<f64>,
    ext: Extension,
    interp: Pchip,
}

impl Profile1D {
    fn assemble(
        kind: ProfileKind,
        speed: f64,
        h: f64,
        s: Vec<f64>,
        u: Vec<f64>,
        u_prime: Vec<f64>,
        ext: Extension,
    ) -> Self {
        let interp = Pchip::limited(s.clone(), u.clone(), u_prime.clone());
        Profile1D {
            kind,
            speed,
            h,
            s,
            u,
            u_prime,
            period: None,
            amplitude: None,
            trough: None,
            k_star: None,
            ext,
            interp,
        }
    }

    /// Interpolated value. Fronts and bounded profiles continue with their
    /// exponential tails, periodic profiles wrap.
    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.interp.domain();
        match self.ext {
            Extension::Periodic { period } => self.interp.eval(x.rem_euclid(period)),
            Extension::Fronts { left, right } => {
                if x < lo {
                    -1.0 + (self.u[0] + 1.0) * (left * (x - lo)).exp()
                } else if x > hi {
                    1.0 - (1.0 - self.u[self.u.len() - 1]) * (-right * (x - hi)).exp()
                } else {
                    self.interp.eval(x)
                }
            }
            Extension::Wells { rate } => {
                if x < lo {
                    1.0 - (1.0 - self.u[0]) * (-rate * (lo - x)).exp()
                } else if x > hi {
                    1.0 - (1.0 - self.u[self.u.len() - 1]) * (-rate * (x - hi)).exp()
                } else {
                    self.interp.eval(x)
                }
            }
        }
    }

    /// Interpolated derivative, consistent with [`Profile1D::eval`].
    pub fn deriv(&self, x: f64) -> f64 {
        let (lo, hi) = self.interp.domain();
        match self.ext {
            Extension::Periodic { period } => self.interp.deriv(x.rem_euclid(period)),
            Extension::Fronts { left, right } => {
                if x < lo {
                    left * (self.eval(x) + 1.0)
                } else if x > hi {
                    right * (1.0 - self.eval(x))
                } else {
                    self.interp.deriv(x)
                }
            }
            Extension::Wells { rate } => {
                if x < lo {
                    -rate * (1.0 - self.eval(x))
                } else if x > hi {
                    rate * (1.0 - self.eval(x))
                } else {
                    self.interp.deriv(x)
                }
            }
        }
    }

    /// Largest `|½u'² - F(u) + level|` over the table.
    pub fn first_integral_residual(&self, p: &Potential, level: f64) -> f64 {
        self.u
            .iter()
            .zip(&self.u_prime)
            .map(|(&u, &d)| (0.5 * d * d - p.f(u) + level).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|u'' + c u' - F'(u)|` over interior samples, derivatives by
    /// centered differences of the table values.
    pub fn ode_residual(&self, p: &Potential) -> f64 {
        let h = self.h;
        (1..self.u.len() - 1)
            .map(|i| {
                let d2 = (self.u[i + 1] - 2.0 * self.u[i] + self.u[i - 1]) / (h * h);
                let d1 = (self.u[i + 1] - self.u[i - 1]) / (2.0 * h);
                (d2 + self.speed * d1 - p.df(self.u[i])).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `∫ u'² ds` over the table by the trapezoid rule.
    pub fn gradient_energy(&self) -> f64 {
        let sq: Vec<f64> = self.u_prime.iter().map(|d| d * d).collect();
        quad::trapezoid(&sq, self.h)
    }
}

/// `F(s) - level`, where `level = F(a)` at each anchor `a`, evaluated from
/// the nearest anchor without cancellation.
struct Gap<'a> {
    p: &'a Potential,
    anchors: [f64; 2],
    level: f64,
}

impl Gap<'_> {
    fn slope(&self, a: f64, d: f64) -> f64 {
        quad::secant_slope(&|t| self.p.df(t), a, d)
    }

    fn at(&self, s: f64) -> f64 {
        let a = if (s - self.anchors[0]).abs() <= (s - self.anchors[1]).abs() {
            self.anchors[0]
        } else {
            self.anchors[1]
        };
        if (s - a).abs() < 0.25 {
            (s - a) * self.slope(a, s - a)
        } else {
            self.p.f(s) - self.level
        }
    }

    /// `dx/dt` along `s = turn + σ t²`, smooth at `t = 0`.
    fn turning_speed(&self, turn: f64, sigma: f64, t: f64) -> f64 {
        if t * t < 0.25 {
            2.0 / (2.0 * sigma * self.slope(turn, sigma * t * t)).sqrt()
        } else {
            2.0 * t / (2.0 * self.at(turn + sigma * t * t)).sqrt()
        }
    }
}

/// For increasing `targets`, find `τ` with `∫_{τ0}^{τ} φ = target`. Returns
/// fewer values than targets if the integral up to `cap` is exhausted.
fn march<P: Fn(f64) -> f64>(phi: &P, tau0: f64, cap: f64, targets: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(targets.len());
    let mut tau = tau0;
    let mut x = 0.0;
    for &target in targets {
        let dx = target - x;
        if dx <= 0.0 {
            out.push(tau);
            continue;
        }
        let phi0 = phi(tau);
        let mut hi = (tau + 2.0 * dx / phi0).min(cap);
        loop {
            if quad::integrate(phi, tau, hi, INVERT_TOL)? >= dx {
                break;
            }
            if hi >= cap {
                return Ok(out);
            }
            hi = (tau + 2.0 * (hi - tau)).min(cap);
        }
        let start = tau;
        let next = quad::safeguarded_newton(
            |t| quad::integrate(phi, start, t, INVERT_TOL).map(|v| v - dx),
            phi,
            start,
            hi,
            start + dx / phi0,
            1e-15,
        )?;
        tau = next;
        x = target;
        out.push(tau);
    }
    Ok(out)
}

fn grid(half_width: f64, h: f64) -> Vec<f64> {
    let k = (half_width / h).round() as i64;
    (-k..=k).map(|i| i as f64 * h).collect()
}

fn check_grid(p: &Potential, half_width: f64, h: f64) -> Result<f64> {
    let mu = p.constants()?.mu;
    if !(half_width >= 8.0 / mu - 1e-12) {
        return Err(Error::Parameter { name: "half_width", value: half_width, range: ">= 8/mu" });
    }
    if !(h > 0.0 && h <= 0.05) {
        return Err(Error::Parameter { name: "h", value: h, range: "(0, 0.05]" });
    }
    Ok(mu)
}

/// The monotone front from `-1` to `1` with `g(0) = 0` and its speed `c₀`,
/// sampled on `[-half_width, half_width]` with spacing `h`.
///
/// Balanced potentials are inverted by quadrature with `c₀ = 0`; unbalanced
/// ones are shot from the saddle at `-1`, bisecting on the speed.
pub fn heteroclinic(p: &Potential, half_width: f64, h: f64) -> Result<Profile1D> {
    let mu = check_grid(p, half_width, h)?;
    let k = p.constants()?;
    if k.balanced {
        balanced_front(p, half_width, h, mu, k.mu_minus)
    } else {
        let c0 = front_speed(p)?;
        unbalanced_front(p, c0, half_width, h)
    }
}

fn balanced_front(p: &Potential, half_width: f64, h: f64, mu: f64, mu_minus: f64) -> Result<Profile1D> {
    let s = grid(half_width, h);
    let n_side = (s.len() - 1) / 2;
    let targets: Vec<f64> = (1..=n_side).map(|i| i as f64 * h).collect();
    let gap = Gap { p, anchors: [-1.0, 1.0], level: 0.0 };
    let side = |sign: f64, rate: f64| -> Result<Vec<(f64, f64)>> {
        let phi = |v: f64| 1.0 / (2.0 * gap.at(sign * v)).sqrt();
        let v = march(&phi, 0.0, 1.0 - TAIL_GAP, &targets)?;
        let mut out: Vec<(f64, f64)> = v.iter().map(|&v| (sign * v, (2.0 * gap.at(sign * v)).sqrt())).collect();
        let (mut last_x, mut last_gap) = match v.last() {
            Some(&v) => (out.len() as f64 * h, 1.0 - v),
            None => (0.0, 1.0),
        };
        for t in &targets[out.len()..] {
            let g = last_gap * (-rate * (t - last_x)).exp();
            out.push((sign * (1.0 - g), rate * g));
            last_x = *t;
            last_gap = g;
        }
        Ok(out)
    };
    let right = side(1.0, mu)?;
    let left = side(-1.0, mu_minus)?;
    let mut u = Vec::with_capacity(s.len());
    let mut d = Vec::with_capacity(s.len());
    for (ui, di) in left.iter().rev() {
        u.push(*ui);
        d.push(*di);
    }
    u.push(0.0);
    d.push((2.0 * p.f(0.0)).sqrt());
    for (ui, di) in &right {
        u.push(*ui);
        d.push(*di);
    }
    Ok(Profile1D::assemble(
        ProfileKind::Heteroclinic,
        0.0,
        h,
        s,
        u,
        d,
        Extension::Fronts { left: mu_minus, right: mu },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    Overshoot,
    TurnBack,
}

fn unstable_rate(c: f64, curvature: f64) -> f64 {
    0.5 * (-c + (c * c + 4.0 * curvature).sqrt())
}

fn stable_rate(c: f64, curvature: f64) -> f64 {
    0.5 * (-c - (c * c + 4.0 * curvature).sqrt())
}

fn front_rhs(p: &Potential, c: f64) -> impl Fn(f64, &State<2>) -> State<2> + '_ {
    move |_x, y| [y[1], p.df(y[0]) - c * y[1]]
}

fn shoot(p: &Potential, c: f64) -> Result<Shot> {
    let lam = unstable_rate(c, p.d2f(-1.0));
    let y0 = [-1.0 + SHOOT_OFFSET, SHOOT_OFFSET * lam];
    let mut outcome = None;
    Dopri5::new(1e-12, 1e-15).integrate(front_rhs(p, c), 0.0, y0, 1e4, |_, y| {
        if y[0] >= 1.0 {
            outcome = Some(Shot::Overshoot);
        } else if y[1] <= 0.0 {
            outcome = Some(Shot::TurnBack);
        }
        outcome.is_none()
    })?;
    outcome.ok_or_else(|| Error::Shooting(format!("orbit at c = {c} neither overshoots nor turns back")))
}

/// Speed of the unbalanced front: bisection on `c` between an overshooting
/// and a turning orbit launched on the unstable manifold of `-1`.
pub fn front_speed(p: &Potential) -> Result<f64> {
    if p.constants()?.balanced {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    if shoot(p, lo)? != Shot::Overshoot {
        return Err(Error::Shooting("c = 0 does not overshoot".into()));
    }
    let mut hi = 1.0;
    while shoot(p, hi)? == Shot::Overshoot {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Shooting("no turning orbit for c <= 1e3".into()));
        }
    }
    while hi - lo > SHOOT_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(p, mid)? {
            Shot::Overshoot => lo = mid,
            Shot::TurnBack => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fixed-step RK4 from a manifold launch point, with the launch amplitude
/// tuned so that a grid node lands exactly on `u = 0`. Returns the nodes
/// `(u, u')` from the launch to the zero, the launch amplitude, and the
/// number of steps.
///
/// The state is carried as the offset `w = u - well`, so the launch
/// amplitude is represented exactly and `F'(well + w)` is evaluated as
/// `w` times the mean of `F''` near the well.
fn manifold_branch(p: &Potential, c: f64, h: f64, forward: bool) -> Result<(Vec<State<2>>, f64, usize)> {
    let (well, rate) = if forward {
        (-1.0, unstable_rate(c, p.d2f(-1.0)))
    } else {
        (1.0, stable_rate(c, p.d2f(1.0)))
    };
    let step = if forward { h } else { -h };
    let d2f = |t: f64| p.d2f(t);
    let rhs = |_x: f64, y: &State<2>| {
        let w = y[0];
        let force = if w.abs() < 0.1 { w * quad::secant_slope(&d2f, well, w) } else { p.df(well + w) };
        [y[1], force - c * y[1]]
    };
    let crossed = |w: f64| if forward { well + w >= 0.0 } else { well + w <= 0.0 };
    let sgn = if forward { 1.0 } else { -1.0 };
    let run = |eps: f64, stop_at: Option<usize>| -> Vec<State<2>> {
        let mut y = [sgn * eps, sgn * eps * rate];
        let mut nodes = vec![y];
        let max_steps = (2000.0 / h) as usize;
        for k in 0..max_steps {
            match stop_at {
                Some(n) if k == n => break,
                None if crossed(y[0]) => break,
                _ => {}
            }
            y = rk4_step(&rhs, k as f64 * step, &y, step);
            nodes.push(y);
        }
        nodes
    };
    let mut eps = SHOOT_OFFSET;
    let mut nodes = run(eps, None);
    let n = nodes.len() - 1;
    if !crossed(nodes[n][0]) {
        return Err(Error::Shooting("manifold branch never reaches u = 0".into()));
    }
    for _ in 0..50 {
        let y = nodes[n];
        let u = well + y[0];
        if u.abs() <= 1e-15 {
            break;
        }
        // advancing the orbit by `shift` scales the launch amplitude by e^{rate shift}
        let shift = -u / y[1];
        eps *= (rate * shift).exp();
        nodes = run(eps, Some(n));
    }
    Ok((nodes.iter().map(|y| [well + y[0], y[1]]).collect(), eps, n))
}

fn unbalanced_front(p: &Potential, c0: f64, half_width: f64, h: f64) -> Result<Profile1D> {
    let s = grid(half_width, h);
    let k = (s.len() - 1) / 2;
    let (left_nodes, eps_l, n_l) = manifold_branch(p, c0, h, true)?;
    let (right_nodes, eps_r, n_r) = manifold_branch(p, c0, h, false)?;
    let lam_u = unstable_rate(c0, p.d2f(-1.0));
    let lam_s = stable_rate(c0, p.d2f(1.0));
    let mut u = Vec::with_capacity(s.len());
    let mut d = Vec::with_capacity(s.len());
    for &x in &s {
        let i = (x / h).round() as i64;
        let (ui, di) = if i < 0 {
            // node index counted from the launch point
            let idx = n_l as i64 + i;
            if idx >= 0 {
                let y = left_nodes[idx as usize];
                (y[0], y[1])
            } else {
                let g = eps_l * (lam_u * idx as f64 * h).exp();
                (-1.0 + g, lam_u * g)
            }
        } else if i > 0 {
            let idx = n_r as i64 - i;
            if idx >= 0 {
                let y = right_nodes[idx as usize];
                (y[0], y[1])
            } else {
                let g = eps_r * (-lam_s * idx as f64 * h).exp();
                (1.0 - g, -lam_s * g)
            }
        } else {
            (0.0, 0.5 * (left_nodes[n_l][1] + right_nodes[n_r][1]))
        };
        u.push(ui);
        d.push(di);
    }
    debug_assert_eq!(u.len(), 2 * k + 1);
    Ok(Profile1D::assemble(
        ProfileKind::Heteroclinic,
        c0,
        h,
        s,
        u,
        d,
        Extension::Fronts { left: lam_u, right: -lam_s },
    ))
}

/// Period of the orbit with maximum `alpha` and minimum `b` (the conjugate
/// point), split at `θ` so each piece has a single turning point.
fn half_periods(p: &Potential, alpha: f64, b: f64, theta: f64) -> Result<(f64, f64)> {
    let df = |s: f64| p.df(s);
    let ia = quad::turning_point_integral(&df, alpha, theta, 1e-13)?;
    let ib = quad::turning_point_integral(&df, b, theta, 1e-13)?;
    Ok((ia, ib))
}

/// Period `L(α)` of the orbit of `u'' = F'(u)` through `(α, 0)`.
pub fn period(p: &Potential, alpha: f64) -> Result<f64> {
    let theta = p.constants()?.theta;
    if alpha <= theta {
        return linear_period(p, theta);
    }
    let b = p.conjugate_point(alpha)?;
    let (ia, ib) = half_periods(p, alpha, b, theta)?;
    Ok(2.0 * (ia + ib))
}

fn linear_period(p: &Potential, theta: f64) -> Result<f64> {
    let k = -p.d2f(theta);
    if !(k > 0.0) {
        return Err(Error::InvalidPotential(format!("F''(theta) = {} is not negative", -k)));
    }
    Ok(2.0 * std::f64::consts::PI / k.sqrt())
}

/// Periodic solution of `u'' = F'(u)` with `u(0) = alpha`, `u'(0) = 0`,
/// sampled over one period. `alpha = θ` (zero for even potentials) gives the
/// constant profile with the linearized period.
pub fn periodic_profile(p: &Potential, alpha: f64) -> Result<Profile1D> {
    let theta = p.constants()?.theta;
    if !(alpha < 1.0) || alpha < theta - 1e-14 {
        return Err(Error::Parameter { name: "alpha", value: alpha, range: "[theta, 1)" });
    }
    if alpha <= theta + 1e-14 {
        let l = linear_period(p, theta)?;
        let n = (l / DEFAULT_H).ceil() as usize;
        let h = l / n as f64;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let mut prof = Profile1D::assemble(
            ProfileKind::Periodic,
            0.0,
            h,
            s,
            vec![theta; n + 1],
            vec![0.0; n + 1],
            Extension::Periodic { period: l },
        );
        prof.period = Some(l);
        prof.amplitude = Some(theta);
        prof.trough = Some(theta);
        return Ok(prof);
    }
    let b = p.conjugate_point(alpha)?;
    let (ia, ib) = half_periods(p, alpha, b, theta)?;
    let half = ia + ib;
    let l = 2.0 * half;
    let n = 2 * (half / DEFAULT_H).ceil() as usize;
    let h = l / n as f64;
    let s: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let gap = Gap { p, anchors: [b, alpha], level: p.f(alpha) };
    // x in [0, ia]: descend from alpha; x in (ia, half]: climb from b
    let n_half = n / 2;
    let near_a: Vec<f64> = s[1..=n_half].iter().copied().filter(|&x| x <= ia).collect();
    let near_b: Vec<f64> = s[1..=n_half].iter().rev().map(|&x| half - x).filter(|&x| x < ib).collect();
    let phi_a = |t: f64| gap.turning_speed(alpha, -1.0, t);
    let phi_b = |t: f64| gap.turning_speed(b, 1.0, t);
    let ta = march(&phi_a, 0.0, (alpha - theta).sqrt(), &near_a)?;
    let tb = march(&phi_b, 0.0, (theta - b).sqrt(), &near_b)?;
    if ta.len() != near_a.len() || tb.len() != near_b.len() {
        return Err(Error::Quadrature { a: b, b: alpha, err: f64::NAN });
    }
    let mut u = vec![alpha];
    u.extend(ta.iter().map(|t| alpha - t * t));
    u.extend(tb.iter().rev().map(|t| b + t * t));
    debug_assert_eq!(u.len(), n_half + 1);
    for i in (0..n_half).rev() {
        u.push(u[i]);
    }
    let d: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            let mag = (2.0 * gap.at(ui)).max(0.0).sqrt();
            if i == 0 || i == n_half || i == n {
                0.0
            } else if i < n_half {
                -mag
            } else {
                mag
            }
        })
        .collect();
    let mut prof = Profile1D::assemble(ProfileKind::Periodic, 0.0, h, s, u, d, Extension::Periodic { period: l });
    prof.period = Some(l);
    prof.amplitude = Some(alpha);
    prof.trough = Some(b);
    Ok(prof)
}

/// The even profile of `u'' = F'(u)` with `u'(0) = 0`, `u(0) < 0` and
/// `u → 1` at both ends, which exists only for unbalanced potentials.
pub fn bounded_gstar(p: &Potential, half_width: f64) -> Result<Profile1D> {
    let k = p.constants()?;
    if k.balanced {
        return Err(Error::NoSuchProfile("the bounded profile requires F(1) > 0".into()));
    }
    let h = DEFAULT_H;
    check_grid(p, half_width, h)?;
    let turn = p.conjugate_point(1.0)?;
    let gap = Gap { p, anchors: [turn, 1.0], level: k.f1 };
    let df = |s: f64| p.df(s);
    let k_star = quad::turning_point_integral(&df, turn, 0.0, 1e-13)?;
    let s = grid(half_width, h);
    let n_side = (s.len() - 1) / 2;
    let targets: Vec<f64> = (1..=n_side).map(|i| i as f64 * h).collect();
    let phi = |t: f64| gap.turning_speed(turn, 1.0, t);
    let t = march(&phi, 0.0, (1.0 - TAIL_GAP - turn).sqrt(), &targets)?;
    let mut right: Vec<(f64, f64)> = t
        .iter()
        .map(|t| {
            let u = turn + t * t;
            (u, (2.0 * gap.at(u)).max(0.0).sqrt())
        })
        .collect();
    let mu = k.mu;
    let (mut last_x, mut last_gap) = match right.last() {
        Some(&(u, _)) => (right.len() as f64 * h, 1.0 - u),
        None => (0.0, 1.0 - turn),
    };
    for x in &targets[right.len()..] {
        let g = last_gap * (-mu * (x - last_x)).exp();
        right.push((1.0 - g, mu * g));
        last_x = *x;
        last_gap = g;
    }
    let mut u = Vec::with_capacity(s.len());
    let mut d = Vec::with_capacity(s.len());
    for (ui, di) in right.iter().rev() {
        u.push(*ui);
        d.push(-*di);
    }
    u.push(turn);
    d.push(0.0);
    for (ui, di) in &right {
        u.push(*ui);
        d.push(*di);
    }
    let mut prof = Profile1D::assemble(ProfileKind::BoundedStar, 0.0, h, s, u, d, Extension::Wells { rate: mu });
    prof.trough = Some(turn);
    prof.k_star = Some(k_star);
    Ok(prof)
}

/// `-F'(1 - v)` as `v` times the mean of `F''` over `[1 - v, 1]`, accurate
/// in relative terms as `v → 0`.
fn neg_df_from_one(p: &Potential, v: f64) -> f64 {
    v * quad::secant_slope(&|t: f64| p.d2f(t), 1.0, -v)
}

/// Mean of `-F'` over `[m - t², m]` with `m = 1 - vm`. Low humps are
/// anchored at `m` directly, high humps at the well.
fn hump_ratio(p: &Potential, vm: f64, t: f64) -> f64 {
    if vm < 0.5 {
        quad::secant_slope(&|v: f64| neg_df_from_one(p, v), vm, t * t)
    } else {
        -quad::secant_slope(&|s: f64| p.df(s), 1.0 - vm, -t * t)
    }
}

/// Half-distance between the zeros of the hump with maximum `m`:
/// `∫_0^m ds / sqrt(2 (F(s) - F(m)))`.
pub fn half_length(p: &Potential, m: f64) -> Result<f64> {
    half_length_below_one(p, 1.0 - m)
}

/// [`half_length`] parametrized by `vm = 1 - m`, which keeps full relative
/// precision for humps close to `1`.
fn half_length_below_one(p: &Potential, vm: f64) -> Result<f64> {
    // s = m - t² removes the turning-point singularity
    quad::integrate(
        |t| 2.0 / (2.0 * hump_ratio(p, vm, t)).sqrt(),
        0.0,
        (1.0 - vm).sqrt(),
        1e-13,
    )
}

/// Inner energy `∫_{-l}^{l} ½u'² + F(u)` of the hump with maximum
/// `m = 1 - vm` and half-length `l`, i.e.
/// `2∫_0^m sqrt(2 (F - F(m))) ds + 2 l F(m)`, together with `F(m)`.
fn hump_energy(p: &Potential, vm: f64, l: f64) -> Result<(f64, f64)> {
    let inner = quad::integrate(
        |t| 2.0 * t * t * (2.0 * hump_ratio(p, vm, t).max(0.0)).sqrt(),
        0.0,
        (1.0 - vm).sqrt(),
        1e-14,
    )?;
    // F(m) = F(1) + ∫_0^{vm} -F'(1 - v) dv
    let fm = if vm < 0.5 {
        p.f(1.0) + quad::integrate(|v| neg_df_from_one(p, v), 0.0, vm, 1e-300)?
    } else {
        p.f(1.0 - vm)
    };
    Ok((2.0 * inner + 2.0 * l * fm, fm))
}

/// Scalars of the two-layer hump at half-distance `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hump {
    pub l: f64,
    /// Maximum of the hump.
    pub m: f64,
    /// Inner energy.
    pub energy: f64,
    /// `dE/dl = 2F(m)`.
    pub energy_slope: f64,
}

/// Solve `half_length(m) = l` for the hump maximum. Fails when `l` is at or
/// below the small-amplitude limit `π / (2 sqrt(-F''(θ)))`.
pub fn hump(p: &Potential, l: f64) -> Result<Hump> {
    let k = p.constants()?;
    if !k.balanced {
        return Err(Error::NoSuchProfile("two-layer profiles require a balanced potential".into()));
    }
    // vm = 1 - m = e^{-q} keeps resolution as m → 1
    let residual = |q: f64| half_length_below_one(p, (-q).exp()).map(|v| v - l).unwrap_or(f64::NAN);
    let q_lo = 1e-6;
    // q ≈ μ (l - A1) for large l, so μ l + 5 brackets it
    let q_hi = (k.mu.max(k.mu_minus) * l + 5.0).min(30.0);
    let q = quad::bisect(residual, q_lo, q_hi, 1e-15).map_err(|e| match e {
        Error::NotBracketed { lo, hi, .. } => Error::NotBracketed {
            lo,
            hi,
            context: format!("no hump with half-length {l}"),
        },
        other => other,
    })?;
    let vm = (-q).exp();
    let (energy, fm) = hump_energy(p, vm, l)?;
    Ok(Hump { l, m: 1.0 - vm, energy, energy_slope: 2.0 * fm })
}

/// Two-layer profile with zeros at `l1 < l2`.
#[derive(Debug, Clone)]
pub struct TwoLayerProfile {
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
    pub m: f64,
    pub energy: f64,
    pub energy_slope: f64,
    pub h: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_x: Vec<f64>,
    front: Profile1D,
    inner: Pchip,
}

impl TwoLayerProfile {
    /// Outer fronts `g(x - l1)`, `g(l2 - x)`; inner hump in between.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.l1 {
            self.front.eval(x - self.l1)
        } else if x >= self.l2 {
            self.front.eval(self.l2 - x)
        } else {
            self.inner.eval((x - 0.5 * (self.l1 + self.l2)).abs())
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        if x <= self.l1 {
            self.front.deriv(x - self.l1)
        } else if x >= self.l2 {
            -self.front.deriv(self.l2 - x)
        } else {
            let xi = x - 0.5 * (self.l1 + self.l2);
            xi.signum() * self.inner.deriv(xi.abs())
        }
    }
}

/// Two-layer profile of a balanced potential, sampled on
/// `[l1 - 10, l2 + 10]` with spacing [`DEFAULT_H`].
pub fn two_layer(p: &Potential, l1: f64, l2: f64) -> Result<TwoLayerProfile> {
    let l = 0.5 * (l2 - l1);
    if !(l >= 1.0) {
        return Err(Error::Parameter { name: "l2 - l1", value: l2 - l1, range: ">= 2" });
    }
    let hm = hump(p, l)?;
    let h = DEFAULT_H;
    let mu = p.constants()?.mu;
    let front = heteroclinic(p, (12.0f64).max(8.0 / mu), h)?;
    let m = hm.m;
    let b = p.conjugate_point(m)?;
    let gap = Gap { p, anchors: [b, m], level: p.f(m) };
    // inner table over |ξ| ∈ [0, l]
    let n_in = (l / h).ceil() as usize;
    let hi = l / n_in as f64;
    let xi: Vec<f64> = (0..=n_in).map(|i| i as f64 * hi).collect();
    let phi_t = |t: f64| gap.turning_speed(m, -1.0, t);
    let t = march(&phi_t, 0.0, m.sqrt(), &xi[1..n_in])?;
    if t.len() != n_in - 1 {
        return Err(Error::Quadrature { a: 0.0, b: m, err: f64::NAN });
    }
    let mut uin = vec![m];
    uin.extend(t.iter().map(|t| m - t * t));
    uin.push(0.0);
    let din: Vec<f64> = uin
        .iter()
        .enumerate()
        .map(|(i, &u)| if i == 0 { 0.0 } else { -(2.0 * gap.at(u)).max(0.0).sqrt() })
        .collect();
    let inner = Pchip::limited(xi, uin, din);
    let lo = l1 - 10.0;
    let n = ((l2 + 10.0 - lo) / h).round() as usize;
    let x: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let mut prof = TwoLayerProfile {
        l1,
        l2,
        l,
        m,
        energy: hm.energy,
        energy_slope: hm.energy_slope,
        h,
        x: Vec::new(),
        phi: Vec::new(),
        phi_x: Vec::new(),
        front,
        inner,
    };
    prof.phi = x.iter().map(|&v| prof.eval(v)).collect();
    prof.phi_x = x.iter().map(|&v| prof.deriv(v)).collect();
    prof.x = x;
    Ok(prof)
}

/// Central difference of the inner energy against the closed-form slope
/// `2F(m)` at one half-length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeCheck {
    pub l: f64,
    pub step: f64,
    pub finite_difference: f64,
    pub two_f_m: f64,
    pub relative: f64,
}

pub fn energy_slope_check(p: &Potential, l: f64, step: f64) -> Result<SlopeCheck> {
    if !(step > 0.0 && step < l) {
        return Err(Error::Parameter { name: "step", value: step, range: "(0, l)" });
    }
    let fd = (hump(p, l + step)?.energy - hump(p, l - step)?.energy) / (2.0 * step);
    let two_f_m = hump(p, l)?.energy_slope;
    Ok(SlopeCheck { l, step, finite_difference: fd, two_f_m, relative: (fd - two_f_m).abs() / two_f_m })
}

/// One row of an [`EnergyCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub l: f64,
    pub m: f64,
    pub energy: f64,
    pub energy_slope: f64,
}

/// Tabulated hump energetics and the fitted interaction law
/// `E_l = 2β A_eff e^{-rate l}`.
///
/// With this normalization each layer of a pair at half distance `l`
/// obeys `c l' + l'' = ±A_eff e^{-2μl}`, as gradient flow on the energy gives
/// force `∂E/∂l₂ = E_l / 2` per layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyCurve {
    pub rows: Vec<EnergyRow>,
    /// Interaction prefactor, extrapolated to `l → ∞` with `rate = 2μ`.
    pub a_eff: f64,
    /// Free log-linear decay rate of `E_l`.
    pub rate: f64,
    /// Offset in `l = -ln(1 - m)/μ + A1 + o(1)`, extrapolated.
    pub a1: f64,
    pub beta: f64,
}

/// Tabulate `n` evenly spaced half-lengths in `[l_min, l_max]` and fit the
/// interaction law.
///
/// The decay rate is the slope of `ln E_l` against `l`. `A_eff` and `A1`
/// are the intercepts of regressions on the leading correction `e^{-μl}`.
pub fn energy_curve(p: &Potential, l_min: f64, l_max: f64, n: usize) -> Result<EnergyCurve> {
    if !(l_min >= 2.0 && l_max > l_min) {
        return Err(Error::Parameter { name: "l_min", value: l_min, range: "2 <= l_min < l_max" });
    }
    if n < 8 {
        return Err(Error::Parameter { name: "n", value: n as f64, range: ">= 8" });
    }
    let k = *p.constants()?;
    let rows: Vec<EnergyRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let l = l_min + (l_max - l_min) * i as f64 / (n - 1) as f64;
            hump(p, l).map(|hm| EnergyRow { l, m: hm.m, energy: hm.energy, energy_slope: hm.energy_slope })
        })
        .collect::<Result<_>>()?;
    let usable: Vec<&EnergyRow> = rows.iter().filter(|r| r.energy_slope > 0.0 && r.m < 1.0).collect();
    if usable.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} usable rows", usable.len())));
    }
    let ls: Vec<f64> = usable.iter().map(|r| r.l).collect();
    let ln_el: Vec<f64> = usable.iter().map(|r| r.energy_slope.ln()).collect();
    let rate = -linear_fit(&ls, &ln_el)?.slope;
    let corr: Vec<f64> = ls.iter().map(|l| (-k.mu * l).exp()).collect();
    let ln_a: Vec<f64> = usable
        .iter()
        .map(|r| (r.energy_slope / (2.0 * k.beta)).ln() + 2.0 * k.mu * r.l)
        .collect();
    let a_eff = linear_fit(&corr, &ln_a)?.intercept.exp();
    let off: Vec<f64> = usable.iter().map(|r| r.l + (-r.m).ln_1p() / k.mu).collect();
    let a1 = linear_fit(&corr, &off)?.intercept;
    Ok(EnergyCurve { rows, a_eff, rate, a1, beta: k.beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quartic() -> Potential {
        Potential::quartic()
    }

    #[test]
    fn balanced_front_is_tanh() {
        let g = heteroclinic(&quartic(), 10.0, 0.01).unwrap();
        let err = g
            .s
            .iter()
            .zip(&g.u)
            .map(|(x, u)| (u - (x / 2f64.sqrt()).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert_eq!(g.eval(0.0), 0.0);
        assert!(g.first_integral_residual(&quartic(), 0.0) < 1e-12);
        assert!(g.u.windows(2).all(|w| w[1] > w[0]));
        // tails beyond the table follow tanh as well
        assert_abs_diff_eq!(g.eval(14.0), (14.0 / 2f64.sqrt()).tanh(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.deriv(0.37), (1.0 - (0.37 / 2f64.sqrt()).tanh().powi(2)) / 2f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        assert!(matches!(heteroclinic(&quartic(), 4.0, 0.01), Err(Error::Parameter { .. })));
        assert!(matches!(heteroclinic(&quartic(), 10.0, 0.1), Err(Error::Parameter { .. })));
    }

    #[test]
    fn tilted_speed_and_profile() {
        let p = Potential::tilted(0.3).unwrap();
        let c = front_speed(&p).unwrap();
        assert_abs_diff_eq!(c, 0.3 * 2f64.sqrt(), epsilon = 1e-9);
        let g = heteroclinic(&p, 10.0, 0.01).unwrap();
        assert_eq!(g.eval(0.0), 0.0);
        let err = g
            .s
            .iter()
            .zip(&g.u)
            .map(|(x, u)| (u - (x / 2f64.sqrt()).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn tilted_ode_residual_and_energy_identity() {
        let p = Potential::tilted(0.3).unwrap();
        let g = heteroclinic(&p, 14.0, 0.002).unwrap();
        assert!(g.ode_residual(&p) < 1e-6, "{}", g.ode_residual(&p));
        let lhs = g.gradient_energy();
        assert_abs_diff_eq!(lhs, 0.4 / g.speed, epsilon = 1e-6);
    }

    #[test]
    fn periodic_quartic() {
        let p = quartic();
        let g = periodic_profile(&p, 0.5).unwrap();
        assert_abs_diff_eq!(g.trough.unwrap(), -0.5, epsilon = 1e-12);
        assert_eq!(g.u[0], 0.5);
        assert_eq!(g.u_prime[0], 0.0);
        assert!(g.first_integral_residual(&p, p.f(0.5)) < 1e-8);
        let l = g.period.unwrap();
        assert_abs_diff_eq!(g.eval(0.3), g.eval(0.3 + l), epsilon = 1e-12);
        assert_abs_diff_eq!(g.eval(l / 2.0), -0.5, epsilon = 1e-10);
        // the table itself solves the ODE to second order
        assert!(g.ode_residual(&p) < 1e-4);
        let small = periodic_profile(&p, 0.01).unwrap();
        assert!((small.period.unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-2);
        let zero = periodic_profile(&p, 0.0).unwrap();
        assert!(zero.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn periodic_tilted_uses_its_conjugate_point() {
        let p = Potential::tilted(0.3).unwrap();
        let g = periodic_profile(&p, 0.6).unwrap();
        let b = g.trough.unwrap();
        assert_abs_diff_eq!(p.f(b), p.f(0.6), epsilon = 1e-14);
        assert!(g.first_integral_residual(&p, p.f(0.6)) < 1e-8);
        assert!(periodic_profile(&p, 0.1).is_err());
    }

    #[test]
    fn bounded_star() {
        let p = Potential::tilted(0.3).unwrap();
        let g = bounded_gstar(&p, 12.0).unwrap();
        let turn = g.trough.unwrap();
        assert!(turn > -1.0 && turn < 0.0);
        assert!((p.f(turn) - 0.4).abs() <= 1e-10);
        let n = g.u.len();
        for i in 0..n {
            assert_eq!(g.u[i], g.u[n - 1 - i]);
        }
        let ks = g.k_star.unwrap();
        assert!(g.eval(ks).abs() < 1e-9, "{}", g.eval(ks));
        assert!(g.first_integral_residual(&p, 0.4) < 1e-8);
        assert!(matches!(bounded_gstar(&quartic(), 12.0), Err(Error::NoSuchProfile(_))));
    }

    #[test]
    fn hump_round_trip_and_slope() {
        let p = quartic();
        let tl = two_layer(&p, -4.0, 4.0).unwrap();
        assert_eq!(tl.eval(-4.0), 0.0);
        assert_eq!(tl.eval(4.0), 0.0);
        assert_abs_diff_eq!(half_length(&p, tl.m).unwrap(), 4.0, epsilon = 1e-8);
        for (x, v) in tl.x.iter().zip(&tl.phi) {
            assert_abs_diff_eq!(*v, tl.eval(-x), epsilon = 1e-12);
            if x.abs() < 3.99 {
                assert!(*v > 0.0);
            } else if x.abs() > 4.01 {
                assert!(*v < 0.0);
            }
        }
        let e = |l: f64| hump(&p, l).unwrap().energy;
        for l in [2.0, 3.0, 4.0] {
            let fd = (e(l + 1e-3) - e(l - 1e-3)) / 2e-3;
            let el = hump(&p, l).unwrap().energy_slope;
            assert!(((fd - el) / el).abs() < 1e-4, "l = {l}: {fd} vs {el}");
            let check = energy_slope_check(&p, l, 1e-3).unwrap();
            assert_eq!((check.finite_difference, check.two_f_m), (fd, el));
        }
        assert!(energy_slope_check(&p, 3.0, 0.0).is_err());
        assert!(hump(&p, 1.2).is_err());
    }

    #[test]
    fn hump_profile_solves_the_ode() {
        let p = quartic();
        let tl = two_layer(&p, -3.0, 3.0).unwrap();
        let h = 1e-3;
        for x in [-2.5, -1.0, 0.3, 2.0] {
            let d2 = (tl.eval(x + h) - 2.0 * tl.eval(x) + tl.eval(x - h)) / (h * h);
            assert_abs_diff_eq!(d2, p.df(tl.eval(x)), epsilon = 1e-4);
        }
    }

    #[test]
    fn energy_law() {
        let p = quartic();
        let ec = energy_curve(&p, 3.0, 6.0, 16).unwrap();
        let mu = 2f64.sqrt();
        assert!((ec.rate / (2.0 * mu) - 1.0).abs() < 0.01, "rate {}", ec.rate);
        assert!(ec.a_eff > 0.0);
        assert!(ec.rows.iter().all(|r| r.energy_slope > 0.0 && r.energy < ec.beta));
        assert!(ec.rows.windows(2).all(|w| w[1].energy > w[0].energy));
        assert!((ec.rows.last().unwrap().energy - ec.beta).abs() < 1e-3);
        // quartic asymptotics: 1 - m ~ 4 e^{-μ l}, so E_l = 2F(m) → 32 e^{-2μl}
        assert!((ec.a_eff * ec.beta / 16.0 - 1.0).abs() < 0.01, "A_eff {}", ec.a_eff);
        assert_abs_diff_eq!(ec.a1, 4f64.ln() / mu, epsilon = 1e-2);
    }
}
