//! Reduced dynamics of two interacting fronts `x = l₁(y)`, `x = l₂(y)`:
//!
//! `c l₁' + l₁'' = -A e^{-2μl}`, `c l₂' + l₂'' = A e^{-2μl}`, `l = (l₂ - l₁)/2`,
//!
//! so the half gap obeys `c l' + l'' = A e^{-2μl}` and `l₁ + l₂` relaxes to a
//! constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::BranchTable;
use crate::ode::Dopri5;

pub const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub c: f64,
    pub mu: f64,
    /// Interaction prefactor; zero decouples the fronts.
    pub a_eff: f64,
    pub beta: f64,
}

impl LayerParams {
    fn check(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("mu", self.mu), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter { name, value: v, range: "> 0" });
            }
        }
        if !(self.a_eff >= 0.0 && self.a_eff.is_finite()) {
            return Err(Error::Parameter { name: "a_eff", value: self.a_eff, range: ">= 0" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerInit {
    pub l1: f64,
    pub l2: f64,
    pub l1p: f64,
    pub l2p: f64,
}

impl LayerInit {
    /// Fronts at `∓l` at rest.
    pub fn symmetric(l: f64) -> Self {
        LayerInit { l1: -l, l2: l, l1p: 0.0, l2p: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSample {
    pub y: f64,
    pub l1: f64,
    pub l2: f64,
    pub l1p: f64,
    pub l2p: f64,
}

impl LayerSample {
    /// Half gap.
    pub fn l(&self) -> f64 {
        0.5 * (self.l2 - self.l1)
    }

    pub fn lp(&self) -> f64 {
        0.5 * (self.l2p - self.l1p)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.l1 + self.l2)
    }
}

/// Accepted integrator steps, in increasing `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTrajectory {
    pub params: LayerParams,
    pub samples: Vec<LayerSample>,
}

impl LayerTrajectory {
    pub fn last(&self) -> &LayerSample {
        self.samples.last().expect("trajectories hold at least the initial point")
    }

    /// State at `y` by cubic Hermite interpolation between samples.
    pub fn at(&self, y: f64) -> Option<LayerSample> {
        let s = &self.samples;
        if y < s[0].y || y > self.last().y {
            return None;
        }
        let k = s.partition_point(|v| v.y <= y).clamp(1, s.len() - 1);
        let (a, b) = (&s[k - 1], &s[k]);
        let h = b.y - a.y;
        if h == 0.0 {
            return Some(*a);
        }
        let t = (y - a.y) / h;
        let herm = |p0: f64, m0: f64, p1: f64, m1: f64| {
            let (t2, t3) = (t * t, t * t * t);
            (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * h * m1
        };
        let lin = |p0: f64, p1: f64| p0 + t * (p1 - p0);
        Some(LayerSample {
            y,
            l1: herm(a.l1, a.l1p, b.l1, b.l1p),
            l2: herm(a.l2, a.l2p, b.l2, b.l2p),
            l1p: lin(a.l1p, b.l1p),
            l2p: lin(a.l2p, b.l2p),
        })
    }
}

fn rhs(p: &LayerParams, s: &[f64; 4]) -> [f64; 4] {
    let force = p.a_eff * (-p.mu * (s[1] - s[0])).exp();
    [s[2], s[3], -force - p.c * s[2], force - p.c * s[3]]
}

pub fn integrate(params: &LayerParams, init: &LayerInit, y_span: (f64, f64)) -> Result<LayerTrajectory> {
    params.check()?;
    if !(init.l2 - init.l1 >= 2.0) {
        return Err(Error::Parameter { name: "l2 - l1", value: init.l2 - init.l1, range: ">= 2" });
    }
    let (y0, y1) = y_span;
    if !(y0.is_finite() && y1.is_finite() && y1 > y0) {
        return Err(Error::Parameter { name: "y_span", value: y1 - y0, range: "finite and positive" });
    }
    let mut samples = Vec::new();
    Dopri5::new(RTOL, ATOL).integrate(
        |_, s| rhs(params, s),
        y0,
        [init.l1, init.l2, init.l1p, init.l2p],
        y1,
        |y, s| {
            samples.push(LayerSample { y, l1: s[0], l2: s[1], l1p: s[2], l2p: s[3] });
            true
        },
    )?;
    Ok(LayerTrajectory { params: *params, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Asymptote {
    /// `Q = e^{2μl}` grows like `Q_slope · y`.
    pub q_slope: f64,
    /// Limit of `l(y) - ln(y) / 2μ`.
    pub l_offset: f64,
}

/// From `c Q' ≈ 2μA` for `Q = e^{2μl}`: `Q ≈ (2μA/c) y`.
pub fn asymptote_prediction(params: &LayerParams) -> Result<Asymptote> {
    params.check()?;
    if params.a_eff == 0.0 {
        return Err(Error::Parameter { name: "a_eff", value: 0.0, range: "> 0" });
    }
    let q_slope = 2.0 * params.mu * params.a_eff / params.c;
    Ok(Asymptote { q_slope, l_offset: q_slope.ln() / (2.0 * params.mu) })
}

/// Max over interior samples of `|cQ' + Q'' - (Q')²/Q - 2μA| / (2μA)`, with
/// `Q''` from finite differences of the integrated `Q'`.
pub fn q_identity_residual(traj: &LayerTrajectory) -> f64 {
    let p = &traj.params;
    let q: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .map(|s| {
            let qv = (2.0 * p.mu * s.l()).exp();
            (s.y, qv, 2.0 * p.mu * s.lp() * qv)
        })
        .collect();
    let target = 2.0 * p.mu * p.a_eff;
    let mut worst = 0.0f64;
    for w in q.windows(3) {
        let ((y0, _, d0), (y1, q1, d1), (y2, _, d2)) = (w[0], w[1], w[2]);
        let (h0, h1) = (y1 - y0, y2 - y1);
        // second-order derivative on a nonuniform stencil
        let dd = (-h1 / (h0 * (h0 + h1))) * d0 + ((h1 - h0) / (h0 * h1)) * d1 + (h0 / (h1 * (h0 + h1))) * d2;
        worst = worst.max((p.c * d1 + dd - d1 * d1 / q1 - target).abs() / target);
    }
    worst
}

/// What a trajectory is compared against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// `l(y) - ln(y)/2μ → l_offset` over `y ≥ tail_start`.
    Theory { tail_start: f64 },
    /// Another trajectory, over the overlap of both.
    Trajectory(&'a LayerTrajectory),
    /// Zero-level branches `k₁`, `k₂` of a recentered field, over `window`.
    Branches { k1: &'a BranchTable, k2: &'a BranchTable, window: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchOffset {
    pub branch: &'static str,
    /// Mean of `±k(y) - ln(y)/2μ` over the window.
    pub measured: f64,
    /// Limit of `±(l_i - center) - ln(y)/2μ` on the trajectory.
    pub predicted: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub max_tail_deviation: f64,
    pub per_branch: Vec<BranchOffset>,
}

fn log_term(p: &LayerParams, y: f64) -> f64 {
    y.ln() / (2.0 * p.mu)
}

pub fn compare(traj: &LayerTrajectory, reference: Reference) -> Result<Comparison> {
    let p = &traj.params;
    match reference {
        Reference::Theory { tail_start } => {
            let offset = asymptote_prediction(p)?.l_offset;
            let start = tail_start.max(f64::MIN_POSITIVE);
            let tail: Vec<f64> = traj
                .samples
                .iter()
                .filter(|s| s.y >= start)
                .map(|s| (s.l() - log_term(p, s.y) - offset).abs())
                .collect();
            if tail.is_empty() {
                return Err(Error::EmptyOverlap);
            }
            Ok(Comparison { max_tail_deviation: tail.into_iter().fold(0.0, f64::max), per_branch: vec![] })
        }
        Reference::Trajectory(other) => {
            let lo = traj.samples[0].y.max(other.samples[0].y);
            let hi = traj.last().y.min(other.last().y);
            if lo > hi {
                return Err(Error::EmptyOverlap);
            }
            let mut dev = 0.0f64;
            for s in traj.samples.iter().filter(|s| s.y >= lo && s.y <= hi) {
                let o = other.at(s.y).ok_or(Error::EmptyOverlap)?;
                dev = dev.max((s.l1 - o.l1).abs()).max((s.l2 - o.l2).abs());
            }
            Ok(Comparison { max_tail_deviation: dev, per_branch: vec![] })
        }
        Reference::Branches { k1, k2, window } => {
            let end = traj.last();
            let predicted = end.l() - log_term(p, end.y);
            let mut per_branch = Vec::new();
            for (name, table, sign) in [("k1", k1, -1.0), ("k2", k2, 1.0)] {
                let vals: Vec<f64> = table
                    .pairs
                    .iter()
                    .filter(|(y, _)| *y > 0.0 && *y >= window.0 && *y <= window.1)
                    .map(|&(y, x)| sign * x - log_term(p, y))
                    .collect();
                if vals.is_empty() {
                    return Err(Error::EmptyOverlap);
                }
                let measured = vals.iter().sum::<f64>() / vals.len() as f64;
                per_branch.push(BranchOffset {
                    branch: name,
                    measured,
                    predicted,
                    relative: (measured - predicted).abs() / predicted.abs(),
                });
            }
            let max_tail_deviation = per_branch.iter().map(|b| (b.measured - b.predicted).abs()).fold(0.0, f64::max);
            Ok(Comparison { max_tail_deviation, per_branch })
        }
    }
}
