//! Relaxation of `Δu + c u_y - F'(u) = 0` on a rectangle.
//!
//! The parabolic flow `v_t = Δv + c v_y - F'(v)` is advanced by a
//! semi-implicit step: the linear part is solved exactly (a real sine or
//! cosine transform across `x`, then one tridiagonal solve per mode along
//! `y`), the reaction is explicit. Bottom and top rows are Dirichlet data
//! frozen from the initial field; the side walls are either homogeneous
//! Neumann or frozen Dirichlet.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{catmull_rom, level_crossings, solve_tridiagonal};
use crate::potentials::Potential;
use crate::profiles1d::{heteroclinic, two_layer, Profile1D};
use crate::stats::median;

/// Admissible overshoot past `[-1, 1]` before a step counts as unstable.
pub const CLIP_EPS: f64 = 1e-6;
/// Smallest admissible grid dimension.
pub const MIN_NODES: usize = 16;

/// Rectangle and node counts; nodes include both ends. Defaults to the
/// balanced run's `[-10, 10] × [-10, 100]` with 256 × 1024 nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { x_min: -10.0, x_max: 10.0, y_min: -10.0, y_max: 100.0, nx: 256, ny: 1024 }
    }
}

impl Grid {
    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    fn check(&self) -> Result<()> {
        if self.nx < MIN_NODES || self.ny < MIN_NODES {
            return Err(Error::Parameter {
                name: "nx, ny",
                value: self.nx.min(self.ny) as f64,
                range: ">= 16",
            });
        }
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::Parameter { name: "extent", value: 0.0, range: "max > min" });
        }
        Ok(())
    }
}

/// Side-wall condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Lateral {
    /// `u_x = 0` through a mirrored ghost node.
    #[default]
    Neumann,
    /// Wall columns frozen from the initial field.
    Dirichlet,
}

/// Initial field families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitKind {
    /// `g` across the curve `y = (c/(μA))(cosh 2μx - 1)`; `skew` displaces
    /// the interior rows sideways by `skew·sin²` (zero on the top and bottom
    /// rows) to break the mirror symmetry.
    BalancedCosh {
        a_eff: f64,
        #[serde(default)]
        skew: f64,
    },
    /// `g(y cos α - |x| sin α)`.
    VShape { alpha: f64 },
    /// `g(y - shift)`.
    Planar {
        #[serde(default)]
        shift: f64,
    },
    /// Two-layer profile of half width `l` above `y = 0`, `-1` below.
    TwoLayerColumn { l: f64 },
    /// Single vertical front `g(x - k1)` above a horizontal front at
    /// `height`: `min(g(x - k1), g(y - height))`.
    CaseOne { k1: f64, height: f64 },
}

impl InitKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitKind::BalancedCosh { .. } => "balanced-cosh",
            InitKind::VShape { .. } => "v-shape",
            InitKind::Planar { .. } => "planar",
            InitKind::TwoLayerColumn { .. } => "two-layer-column",
            InitKind::CaseOne { .. } => "case-one",
        }
    }
}

/// Everything [`relax`] and [`initial_guess`] need besides the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub grid: Grid,
    pub c: f64,
    pub dt: f64,
    pub max_steps: usize,
    /// Stop once the sup of the steady residual is at most this.
    pub tol: f64,
    /// Steps between checkpoints.
    pub check_every: usize,
    /// Steps between recentering; 0 disables it.
    pub recenter_every: usize,
    pub recenter_x: bool,
    pub recenter_y: bool,
    pub lateral: Lateral,
    pub init: InitKind,
}

impl Default for SolveConfig {
    /// The balanced run with `a_eff` left for the caller to fill.
    fn default() -> Self {
        Self::balanced_default(0.0)
    }
}

impl SolveConfig {
    /// Balanced quartic run on `[-10, 10] × [-10, 100]`, 256 × 1024 nodes.
    pub fn balanced_default(a_eff: f64) -> Self {
        SolveConfig {
            grid: Grid::default(),
            c: 1.0,
            dt: 0.5,
            max_steps: 20_000,
            tol: 1e-6,
            check_every: 10,
            recenter_every: 0,
            recenter_x: true,
            recenter_y: false,
            lateral: Lateral::Neumann,
            init: InitKind::BalancedCosh { a_eff, skew: 0.0 },
        }
    }

    /// Largest `dt` for which one step maps `[-1, 1]` into itself: the
    /// explicit reaction `u - dt F'(u)` is monotone iff `dt max F'' ≤ 1`.
    pub fn stability_bound(p: &Potential) -> f64 {
        1.0 / p.max_curvature().max(f64::MIN_POSITIVE)
    }

    /// Validates the grid, the time step and the cell Péclet number
    /// `|c| hy / 2 ≤ 1` (which keeps the implicit matrix monotone).
    pub fn checked(self, p: &Potential) -> Result<Self> {
        self.grid.check()?;
        let bound = Self::stability_bound(p);
        if !(self.dt > 0.0 && self.dt <= bound) {
            return Err(Error::Unstable { dt: self.dt, bound });
        }
        if self.c.abs() * self.grid.hy() > 2.0 {
            return Err(Error::Parameter { name: "c·hy", value: self.c * self.grid.hy(), range: "<= 2" });
        }
        if self.check_every == 0 {
            return Err(Error::Parameter { name: "check_every", value: 0.0, range: ">= 1" });
        }
        Ok(self)
    }
}

/// Sampled field `u[j * nx + i] = u(x_min + i hx, y_min + j hy)`.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub c: f64,
    pub u: Vec<f64>,
    pub potential: Arc<Potential>,
}

impl Field2D {
    pub fn new(grid: &Grid, c: f64, potential: Arc<Potential>, u: Vec<f64>) -> Result<Self> {
        grid.check()?;
        if u.len() != grid.nx * grid.ny {
            return Err(Error::Format(format!("{} values for a {}×{} grid", u.len(), grid.nx, grid.ny)));
        }
        Ok(Field2D {
            nx: grid.nx,
            ny: grid.ny,
            hx: grid.hx(),
            hy: grid.hy(),
            x_min: grid.x_min,
            y_min: grid.y_min,
            c,
            u,
            potential,
        })
    }

    pub fn from_fn(
        grid: &Grid,
        c: f64,
        potential: Arc<Potential>,
        f: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Self> {
        grid.check()?;
        let (hx, hy) = (grid.hx(), grid.hy());
        let u: Vec<f64> = (0..grid.ny)
            .into_par_iter()
            .flat_map_iter(|j| {
                let y = grid.y_min + j as f64 * hy;
                let f = &f;
                (0..grid.nx).map(move |i| f(grid.x_min + i as f64 * hx, y))
            })
            .collect();
        Field2D::new(grid, c, potential, u)
    }

    pub fn grid(&self) -> Grid {
        Grid {
            x_min: self.x_min,
            x_max: self.x_max(),
            y_min: self.y_min,
            y_max: self.y_max(),
            nx: self.nx,
            ny: self.ny,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.ny - 1)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[j * self.nx + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.u[j * self.nx..(j + 1) * self.nx]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.ny).map(|j| self.at(i, j)).collect()
    }

    /// Centered `u_y` at an interior row.
    pub fn u_y(&self, i: usize, j: usize) -> f64 {
        (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * self.hy)
    }

    /// Centered `u_x`; one-sided mirror (zero) on the side walls.
    pub fn u_x(&self, i: usize, j: usize) -> f64 {
        if i == 0 || i == self.nx - 1 {
            return 0.0;
        }
        (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * self.hx)
    }

    /// Bicubic (Catmull–Rom) value at an arbitrary point; clamped outside.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let px = (x - self.x_min) / self.hx;
        let py = (y - self.y_min) / self.hy;
        let jc = py.floor().clamp(0.0, (self.ny - 1) as f64) as isize;
        let mut col = [0.0; 4];
        let rows: Vec<usize> =
            (-1..=2).map(|d| (jc + d).clamp(0, self.ny as isize - 1) as usize).collect();
        for (k, &j) in rows.iter().enumerate() {
            col[k] = catmull_rom(self.row(j), px);
        }
        catmull_rom(&col, (py - jc as f64 + 1.0).clamp(0.0, 3.0))
    }

    /// First node outside `[-1 - CLIP_EPS, 1 + CLIP_EPS]` in row-major order.
    pub fn range_violation(&self) -> Option<(usize, usize, f64)> {
        self.u
            .iter()
            .position(|v| !(v.abs() <= 1.0 + CLIP_EPS))
            .map(|k| (k % self.nx, k / self.nx, self.u[k]))
    }
}

/// Sup and root-mean-square norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub sup: f64,
    pub l2: f64,
}

/// Five-point `Δu + c u_y - F'(u)` on one interior row.
fn residual_row(u: &Field2D, j: usize) -> Vec<f64> {
    let (ihx2, ihy2, c2) = (1.0 / (u.hx * u.hx), 1.0 / (u.hy * u.hy), u.c / (2.0 * u.hy));
    (1..u.nx - 1)
        .map(|i| {
            let v = u.at(i, j);
            let (n, s) = (u.at(i, j + 1), u.at(i, j - 1));
            (u.at(i + 1, j) - 2.0 * v + u.at(i - 1, j)) * ihx2 + (n - 2.0 * v + s) * ihy2 + c2 * (n - s)
                - u.potential.df(v)
        })
        .collect()
}

/// Steady residual on interior nodes. Rows are reduced in index order, so the
/// result does not depend on the worker count.
pub fn residual_norm(u: &Field2D) -> Residual {
    let rows: Vec<(f64, f64)> = (1..u.ny - 1)
        .into_par_iter()
        .map(|j| {
            residual_row(u, j)
                .iter()
                .fold((0.0f64, 0.0f64), |(m, s), r| (m.max(r.abs()), s + r * r))
        })
        .collect();
    let count = ((u.nx - 2) * (u.ny - 2)) as f64;
    let (sup, sum) = rows.iter().fold((0.0f64, 0.0), |(m, s), &(rm, rs)| (m.max(rm), s + rs));
    Residual { sup, l2: (sum / count).sqrt() }
}

/// Heteroclinic used by the initial guesses.
fn front_profile(p: &Potential) -> Result<Profile1D> {
    let mu = p.constants()?.mu;
    heteroclinic(p, (8.0 / mu).max(16.0), 0.005)
}

/// Signed distance surrogate to `y = k (cosh 2μx - 1)`, positive above.
/// Combines the vertical gap `d_v` with the horizontal gap `d_h` to the
/// branch `|x| = acosh(1 + y/k) / 2μ` as `d_v d_h / |(d_v, d_h)|`, which
/// tracks the normal distance near the curve and tends to `±1`-saturating
/// values away from it (a purely vertical estimate scaled by the slope
/// stalls at `-1/2μ` beside the steep branches).
fn cosh_distance(x: f64, y: f64, mu: f64, k: f64) -> f64 {
    let dv = y - k * ((2.0 * mu * x).cosh() - 1.0);
    if y <= 0.0 {
        return dv;
    }
    let dh = (1.0 + y / k).acosh() / (2.0 * mu) - x.abs();
    if dv == 0.0 || dh == 0.0 {
        return 0.0;
    }
    dv.signum() * (dv.abs() * dh.abs()) / dv.hypot(dh)
}

/// Builds the initial field of `cfg.init` at frame speed `c`. Values are
/// clamped to `[-1, 1]`; except for planar data the bottom row is exactly
/// `-1`.
pub fn initial_guess(p: &Arc<Potential>, c: f64, kind: &InitKind, cfg: &SolveConfig) -> Result<Field2D> {
    let grid = &cfg.grid;
    grid.check()?;
    let balanced = p.is_balanced();
    let name = kind.name();
    let mismatch = |reason: &str| Error::KindMismatch { kind: name, reason: reason.to_string() };
    let needs_balanced = !matches!(kind, InitKind::VShape { .. } | InitKind::Planar { .. });
    if needs_balanced && !balanced {
        return Err(mismatch("requires a balanced potential"));
    }
    let g = front_profile(p)?;
    let pot = Arc::clone(p);
    let field = match *kind {
        InitKind::BalancedCosh { a_eff, skew } => {
            if !(a_eff > 0.0) {
                return Err(Error::Parameter { name: "a_eff", value: a_eff, range: "> 0" });
            }
            if !(c > 0.0) {
                return Err(Error::Parameter { name: "c", value: c, range: "> 0" });
            }
            let mu = p.constants()?.mu;
            let k = c / (mu * a_eff);
            let height = grid.y_max - grid.y_min;
            let mut f = Field2D::from_fn(grid, c, pot, |x, y| {
                let bump = (std::f64::consts::PI * (y - grid.y_min) / height).sin().powi(2);
                let x = x - skew * bump;
                g.eval(cosh_distance(x, y, mu, k)).clamp(-1.0, 1.0)
            })?;
            // top row: two-layer profile at the branch half width, with its
            // tails reflected in Neumann walls
            let half = (1.0 + grid.y_max / k).acosh() / (2.0 * mu);
            let phi = two_layer(p, -half, half)?;
            let top = f.ny - 1;
            let (lo, hi) = (grid.x_min, grid.x_max);
            for i in 0..f.nx {
                let x = f.x(i);
                let mut v = phi.eval(x);
                if cfg.lateral == Lateral::Neumann {
                    v += (phi.eval(2.0 * lo - x) + 1.0) + (phi.eval(2.0 * hi - x) + 1.0);
                }
                f.u[top * f.nx + i] = v.clamp(-1.0, 1.0);
            }
            f
        }
        InitKind::VShape { alpha } => {
            if balanced {
                return Err(mismatch("requires an unbalanced potential"));
            }
            if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
                return Err(Error::Parameter { name: "alpha", value: alpha, range: "(0, π/2)" });
            }
            let expected = g.speed / alpha.cos();
            if (c - expected).abs() > 1e-6 * expected.max(1.0) {
                return Err(mismatch(&format!("frame speed {c} differs from c0/cos(alpha) = {expected}")));
            }
            let (ca, sa) = (alpha.cos(), alpha.sin());
            Field2D::from_fn(grid, c, pot, |x, y| g.eval(y * ca - x.abs() * sa).clamp(-1.0, 1.0))?
        }
        InitKind::Planar { shift } => {
            Field2D::from_fn(grid, c, pot, |_, y| g.eval(y - shift).clamp(-1.0, 1.0))?
        }
        InitKind::TwoLayerColumn { l } => {
            let phi = two_layer(p, -l, l)?;
            Field2D::from_fn(grid, c, pot, |x, y| phi.eval(x).min(g.eval(y)).clamp(-1.0, 1.0))?
        }
        InitKind::CaseOne { k1, height } => Field2D::from_fn(grid, c, pot, |x, y| {
            g.eval(x - k1).min(g.eval(y - height)).clamp(-1.0, 1.0)
        })?,
    };
    let mut field = field;
    if !matches!(kind, InitKind::Planar { .. }) {
        field.u[..field.nx].iter_mut().for_each(|v| *v = -1.0);
    }
    Ok(field)
}

/// Real-to-real transform across `x` built on a complex FFT of the odd or
/// even extension.
struct RealTransform {
    /// `true`: DCT-I on `n` points; `false`: DST-I on `n` points.
    cosine: bool,
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl RealTransform {
    fn new(cosine: bool, n: usize) -> Self {
        let len = if cosine { 2 * (n - 1) } else { 2 * (n + 1) };
        let fft = FftPlanner::new().plan_fft_forward(len);
        let scratch_len = fft.get_inplace_scratch_len();
        RealTransform { cosine, n, fft, scratch_len }
    }

    fn len(&self) -> usize {
        if self.cosine {
            2 * (self.n - 1)
        } else {
            2 * (self.n + 1)
        }
    }

    /// Unnormalized forward transform; applying it twice multiplies by
    /// `1 / inverse_scale`.
    fn apply(&self, x: &[f64], out: &mut [f64], buf: &mut [Complex<f64>], scratch: &mut [Complex<f64>]) {
        let n = self.n;
        let len = self.len();
        if self.cosine {
            for i in 0..n {
                buf[i] = Complex::new(x[i], 0.0);
            }
            for i in 1..n - 1 {
                buf[len - i] = Complex::new(x[i], 0.0);
            }
            self.fft.process_with_scratch(buf, scratch);
            for k in 0..n {
                out[k] = buf[k].re;
            }
        } else {
            buf[0] = Complex::new(0.0, 0.0);
            buf[n + 1] = Complex::new(0.0, 0.0);
            for j in 1..=n {
                buf[j] = Complex::new(x[j - 1], 0.0);
                buf[len - j] = Complex::new(-x[j - 1], 0.0);
            }
            self.fft.process_with_scratch(buf, scratch);
            for k in 1..=n {
                out[k - 1] = -0.5 * buf[k].im;
            }
        }
    }

    fn inverse_scale(&self) -> f64 {
        if self.cosine {
            1.0 / (2.0 * (self.n - 1) as f64)
        } else {
            2.0 / (self.n + 1) as f64
        }
    }

    /// Eigenvalue of the second difference for mode `k` (0-based).
    fn eigenvalue(&self, k: usize, hx: f64) -> f64 {
        let theta = if self.cosine {
            std::f64::consts::PI * k as f64 / (self.n - 1) as f64
        } else {
            std::f64::consts::PI * (k + 1) as f64 / (self.n + 1) as f64
        };
        -2.0 / (hx * hx) * (1.0 - theta.cos())
    }
}

/// Exact solver for `(I - dt L) v = r` with frozen boundary data.
struct ImplicitStep {
    transform: RealTransform,
    col0: usize,
    modes: usize,
    rows: usize,
    dt: f64,
    lower: f64,
    /// Thomas factors, `[jj * modes + k]`.
    cp: Vec<f64>,
    inv_den: Vec<f64>,
    /// Transformed bottom and top rows, already multiplied by the coupling.
    bottom: Vec<f64>,
    top: Vec<f64>,
    /// Frozen wall values per interior row (Dirichlet only).
    walls: Vec<(f64, f64)>,
    ihx2: f64,
}

impl ImplicitStep {
    fn new(u0: &Field2D, lateral: Lateral, dt: f64) -> Self {
        let (col0, modes) = match lateral {
            Lateral::Neumann => (0, u0.nx),
            Lateral::Dirichlet => (1, u0.nx - 2),
        };
        let transform = RealTransform::new(lateral == Lateral::Neumann, modes);
        let rows = u0.ny - 2;
        let ihy2 = 1.0 / (u0.hy * u0.hy);
        let adv = u0.c / (2.0 * u0.hy);
        let lower = -dt * (ihy2 - adv);
        let upper = -dt * (ihy2 + adv);
        let mut cp = vec![0.0; rows * modes];
        let mut inv_den = vec![0.0; rows * modes];
        for k in 0..modes {
            let b = 1.0 + 2.0 * dt * ihy2 - dt * transform.eigenvalue(k, u0.hx);
            let mut prev = 0.0;
            for jj in 0..rows {
                let den = b - lower * prev;
                inv_den[jj * modes + k] = 1.0 / den;
                prev = upper / den;
                cp[jj * modes + k] = prev;
            }
        }
        let mut buf = vec![Complex::new(0.0, 0.0); transform.len()];
        let mut scratch = vec![Complex::new(0.0, 0.0); transform.scratch_len];
        let mut bottom = vec![0.0; modes];
        let mut top = vec![0.0; modes];
        transform.apply(&u0.row(0)[col0..col0 + modes], &mut bottom, &mut buf, &mut scratch);
        transform.apply(&u0.row(u0.ny - 1)[col0..col0 + modes], &mut top, &mut buf, &mut scratch);
        bottom.iter_mut().for_each(|v| *v *= lower);
        top.iter_mut().for_each(|v| *v *= upper);
        let walls = (1..u0.ny - 1).map(|j| (u0.at(0, j), u0.at(u0.nx - 1, j))).collect();
        ImplicitStep {
            transform,
            col0,
            modes,
            rows,
            dt,
            lower,
            cp,
            inv_den,
            bottom,
            top,
            walls,
            ihx2: 1.0 / (u0.hx * u0.hx),
        }
    }

    /// One step from `cur` into `next`; `modal` is scratch of size
    /// `rows * modes`. Boundary nodes of `next` must already hold the frozen
    /// data.
    fn advance(&self, p: &Potential, nx: usize, cur: &[f64], next: &mut [f64], modal: &mut [f64]) {
        let (col0, modes, dt) = (self.col0, self.modes, self.dt);
        let t = &self.transform;
        let fresh = || {
            (
                vec![Complex::new(0.0, 0.0); t.len()],
                vec![Complex::new(0.0, 0.0); t.scratch_len],
                vec![0.0; modes],
            )
        };
        modal.par_chunks_mut(modes).enumerate().for_each_init(fresh, |(buf, scratch, rhs), (jj, out)| {
            let row = &cur[(jj + 1) * nx..(jj + 2) * nx];
            for k in 0..modes {
                let v = row[col0 + k];
                rhs[k] = v - dt * p.df(v);
            }
            if col0 == 1 {
                let (w0, w1) = self.walls[jj];
                rhs[0] += dt * self.ihx2 * w0;
                rhs[modes - 1] += dt * self.ihx2 * w1;
            }
            t.apply(rhs, out, buf, scratch);
        });
        for k in 0..modes {
            modal[k] -= self.bottom[k];
            modal[(self.rows - 1) * modes + k] -= self.top[k];
        }
        // forward elimination, vectorized over modes
        for k in 0..modes {
            modal[k] *= self.inv_den[k];
        }
        for jj in 1..self.rows {
            let (done, rest) = modal.split_at_mut(jj * modes);
            let prev = &done[(jj - 1) * modes..];
            let cur_row = &mut rest[..modes];
            let inv = &self.inv_den[jj * modes..(jj + 1) * modes];
            for k in 0..modes {
                cur_row[k] = (cur_row[k] - self.lower * prev[k]) * inv[k];
            }
        }
        for jj in (0..self.rows - 1).rev() {
            let (head, tail) = modal.split_at_mut((jj + 1) * modes);
            let cur_row = &mut head[jj * modes..];
            let next_row = &tail[..modes];
            let cp = &self.cp[jj * modes..(jj + 1) * modes];
            for k in 0..modes {
                cur_row[k] -= cp[k] * next_row[k];
            }
        }
        let scale = t.inverse_scale();
        let interior = &mut next[nx..(self.rows + 1) * nx];
        interior
            .par_chunks_mut(nx)
            .zip(modal.par_chunks(modes))
            .for_each_init(fresh, |(buf, scratch, tmp), (row, coeffs)| {
                t.apply(coeffs, tmp, buf, scratch);
                for k in 0..modes {
                    row[col0 + k] = tmp[k] * scale;
                }
            });
    }
}

/// One checkpoint of a relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub residual: Residual,
    /// `max |v^{n+1} - v^n| / dt` over the last step.
    pub sup_dudt: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

/// Checkpoints of a relaxation and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub entries: Vec<Checkpoint>,
    pub converged: bool,
    pub steps: usize,
    /// Residual sup nonincreasing across windows of checkpoints after the
    /// first fifth of the run; logged, never enforced.
    pub residual_monotone: bool,
}

fn windows_nonincreasing(entries: &[Checkpoint]) -> bool {
    const WINDOW: usize = 5;
    let tail = &entries[entries.len() / 5..];
    let maxima: Vec<f64> = tail
        .chunks(WINDOW)
        .map(|w| w.iter().map(|e| e.residual.sup).fold(0.0, f64::max))
        .collect();
    maxima.windows(2).all(|m| m[1] <= m[0] * (1.0 + 1e-9))
}

/// Relaxes `u0` until the residual sup is at most `cfg.tol` or
/// `cfg.max_steps` steps have run. Non-convergence is reported in the log;
/// leaving the range `[-1 - CLIP_EPS, 1 + CLIP_EPS]` is an error.
pub fn relax(u0: Field2D, cfg: &SolveConfig) -> Result<(Field2D, ConvergenceLog)> {
    relax_with(u0, cfg, |_, _| {})
}

/// [`relax`] with an observer called at every checkpoint.
pub fn relax_with(
    u0: Field2D,
    cfg: &SolveConfig,
    mut observe: impl FnMut(&Checkpoint, &Field2D),
) -> Result<(Field2D, ConvergenceLog)> {
    if let Some((i, j, value)) = u0.range_violation() {
        return Err(Error::RangeViolation { step: 0, i, j, value });
    }
    let every = cfg.check_every.max(1);
    let p = Arc::clone(&u0.potential);
    let mut op = ImplicitStep::new(&u0, cfg.lateral, cfg.dt);
    let mut cur = u0;
    let mut next = cur.clone();
    let mut modal = vec![0.0; op.rows * op.modes];
    let mut entries = Vec::new();
    let mut converged = false;
    let mut steps = 0;
    let (mut sx, mut sy) = (0.0, 0.0);
    let r0 = residual_norm(&cur);
    let first = Checkpoint { step: 0, residual: r0, sup_dudt: f64::NAN, shift_x: 0.0, shift_y: 0.0 };
    observe(&first, &cur);
    entries.push(first);
    if r0.sup <= cfg.tol {
        converged = true;
    }
    while !converged && steps < cfg.max_steps {
        op.advance(&p, cur.nx, &cur.u, &mut next.u, &mut modal);
        steps += 1;
        if let Some((i, j, value)) = next.range_violation() {
            return Err(Error::RangeViolation { step: steps, i, j, value });
        }
        std::mem::swap(&mut cur, &mut next);
        if cfg.recenter_every > 0 && steps % cfg.recenter_every == 0 && (cfg.recenter_x || cfg.recenter_y) {
            let (moved, dx, dy) = shift_to_anchor(&cur, cfg.recenter_x, cfg.recenter_y)?;
            sx += dx;
            sy += dy;
            cur = moved;
            op = ImplicitStep::new(&cur, cfg.lateral, cfg.dt);
            next = cur.clone();
            continue;
        }
        if steps % every == 0 || steps == cfg.max_steps {
            let sup_dudt = cur
                .u
                .iter()
                .zip(&next.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / cfg.dt;
            let residual = residual_norm(&cur);
            let cp = Checkpoint { step: steps, residual, sup_dudt, shift_x: sx, shift_y: sy };
            observe(&cp, &cur);
            entries.push(cp);
            converged = residual.sup <= cfg.tol;
        }
    }
    let residual_monotone = windows_nonincreasing(&entries);
    Ok((cur, ConvergenceLog { entries, converged, steps, residual_monotone }))
}

/// Values along the vertical line `x = x0`, interpolated across `x`.
fn column_at(u: &Field2D, x0: f64) -> Vec<f64> {
    let px = (x0 - u.x_min) / u.hx;
    (0..u.ny).map(|j| catmull_rom(u.row(j), px)).collect()
}

/// `(shift_x, shift_y)` that would move the anchor to the origin.
fn anchor_shifts(u: &Field2D) -> Result<(f64, f64)> {
    let col = column_at(u, 0.0);
    let ys = level_crossings(&col, 0.0);
    let jy = ys
        .iter()
        .copied()
        .min_by(|a, b| (u.y_min + a * u.hy).abs().total_cmp(&(u.y_min + b * u.hy).abs()))
        .ok_or_else(|| Error::NoCrossing("anchor column".into()))?;
    let shift_y = u.y_min + jy * u.hy;
    // midpoint of the outermost crossings on every row that has at least
    // two; the median over rows is the sideways offset
    let mids: Vec<f64> = (0..u.ny)
        .filter_map(|j| {
            let xs = level_crossings(u.row(j), 0.0);
            (xs.len() >= 2).then(|| u.x_min + 0.5 * (xs[0] + xs[xs.len() - 1]) * u.hx)
        })
        .collect();
    let shift_x = median(&mids).unwrap_or(0.0);
    Ok((shift_x, shift_y))
}

/// Resamples `u(x + dx, y + dy)` separably; clamped at the edges.
fn shifted(u: &Field2D, dx: f64, dy: f64) -> Field2D {
    let mut out = u.clone();
    if dx != 0.0 {
        let off = dx / u.hx;
        out.u.par_chunks_mut(u.nx).enumerate().for_each(|(j, row)| {
            let src = u.row(j);
            for (i, v) in row.iter_mut().enumerate() {
                *v = catmull_rom(src, i as f64 + off);
            }
        });
    }
    if dy != 0.0 {
        let off = dy / u.hy;
        let base = out.clone();
        let cols: Vec<Vec<f64>> = (0..u.nx)
            .into_par_iter()
            .map(|i| {
                let c = base.column(i);
                (0..u.ny).map(|j| catmull_rom(&c, j as f64 + off)).collect()
            })
            .collect();
        for (i, c) in cols.iter().enumerate() {
            for (j, v) in c.iter().enumerate() {
                out.u[j * u.nx + i] = *v;
            }
        }
    }
    out
}

fn shift_to_anchor(u: &Field2D, along_x: bool, along_y: bool) -> Result<(Field2D, f64, f64)> {
    let (sx, sy) = anchor_shifts(u)?;
    let sx = if along_x { sx } else { 0.0 };
    let sy = if along_y { sy } else { 0.0 };
    Ok((shifted(u, sx, sy), sx, sy))
}

/// Anchor of the zero level: its crossing of `x = 0` nearest `y = 0`, and
/// the median midpoint of its two outermost branches.
pub fn anchor(u: &Field2D) -> Result<(f64, f64)> {
    anchor_shifts(u)
}

/// Translates the field so that the zero level crosses `x = 0` at `y = 0`
/// and the midpoints of its two branches have zero median. Returns the
/// applied shifts (the field is sampled at `(x + shift_x, y + shift_y)`).
pub fn recenter(u: &Field2D) -> Result<(Field2D, f64, f64)> {
    shift_to_anchor(u, true, true)
}

/// Exact steady state of the discrete scheme for a planar front.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarFront {
    /// Values on the `y` nodes of the grid.
    pub u: Vec<f64>,
    /// Discrete speed `c_h`; tends to `c0` as `hy → 0`.
    pub speed: f64,
    pub newton_residual: f64,
}

/// Solves the three-point analogue of `u'' + c u' - F'(u) = 0` on the `y`
/// nodes of `grid`, with the end values of `g` and the node nearest `y = 0`
/// pinned to its value of `g`, for the nodal values and the speed.
pub fn discrete_planar_front(p: &Potential, grid: &Grid) -> Result<PlanarFront> {
    grid.check()?;
    let g = front_profile(p)?;
    let hy = grid.hy();
    let ny = grid.ny;
    let mut u: Vec<f64> = (0..ny).map(|j| g.eval(grid.y_min + j as f64 * hy)).collect();
    let pin = ((-grid.y_min / hy).round() as usize).clamp(1, ny - 2);
    let mut c = g.speed;
    let (ih2, i2h) = (1.0 / (hy * hy), 1.0 / (2.0 * hy));
    let n = ny - 2;
    let residual = |u: &[f64], c: f64| -> Vec<f64> {
        (1..ny - 1)
            .map(|j| (u[j + 1] - 2.0 * u[j] + u[j - 1]) * ih2 + c * (u[j + 1] - u[j - 1]) * i2h - p.df(u[j]))
            .collect()
    };
    let mut norm = f64::INFINITY;
    for _ in 0..50 {
        let r = residual(&u, c);
        norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm < 1e-13 {
            break;
        }
        let a: Vec<f64> = (0..n).map(|_| ih2 - c * i2h).collect();
        let b: Vec<f64> = (1..ny - 1).map(|j| -2.0 * ih2 - p.d2f(u[j])).collect();
        let cc: Vec<f64> = (0..n).map(|_| ih2 + c * i2h).collect();
        let dc: Vec<f64> = (1..ny - 1).map(|j| (u[j + 1] - u[j - 1]) * i2h).collect();
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let z = solve_tridiagonal(&a, &b, &cc, &neg_r);
        let w = solve_tridiagonal(&a, &b, &cc, &dc);
        let k = pin - 1;
        let delta_c = z[k] / w[k];
        for jj in 0..n {
            u[jj + 1] += z[jj] - delta_c * w[jj];
        }
        c += delta_c;
    }
    if !(norm < 1e-10) {
        return Err(Error::Shooting(format!("discrete planar front residual {norm:e}")));
    }
    Ok(PlanarFront { u, speed: c, newton_residual: norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_grid(nx: usize, ny: usize) -> Grid {
        Grid { x_min: -4.0, x_max: 4.0, y_min: -12.0, y_max: 12.0, nx, ny }
    }

    fn cfg_for(grid: Grid, c: f64, init: InitKind) -> SolveConfig {
        SolveConfig {
            grid,
            c,
            dt: 0.3,
            max_steps: 100,
            tol: 1e-9,
            check_every: 10,
            recenter_every: 0,
            recenter_x: false,
            recenter_y: false,
            lateral: Lateral::Neumann,
            init,
        }
    }

    #[test]
    fn constant_fields_have_zero_residual() {
        let p = Arc::new(Potential::quartic());
        let grid = small_grid(16, 16);
        for v in [1.0, 0.0, -1.0] {
            let f = Field2D::from_fn(&grid, 1.0, p.clone(), |_, _| v).unwrap();
            assert_eq!(residual_norm(&f).sup, 0.0);
        }
    }

    #[test]
    fn transforms_invert() {
        for cosine in [true, false] {
            let t = RealTransform::new(cosine, 19);
            let x: Vec<f64> = (0..19).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
            let mut y = vec![0.0; 19];
            let mut back = vec![0.0; 19];
            let mut buf = vec![Complex::new(0.0, 0.0); t.len()];
            let mut scr = vec![Complex::new(0.0, 0.0); t.scratch_len];
            t.apply(&x, &mut y, &mut buf, &mut scr);
            t.apply(&y, &mut back, &mut buf, &mut scr);
            for i in 0..19 {
                assert_abs_diff_eq!(back[i] * t.inverse_scale(), x[i], epsilon = 1e-12);
            }
        }
    }

    /// One implicit step against a dense direct solve of the same system.
    #[test]
    fn implicit_step_matches_direct_solve() {
        let p = Arc::new(Potential::quartic());
        for lateral in [Lateral::Neumann, Lateral::Dirichlet] {
            let grid = Grid { x_min: -2.0, x_max: 2.0, y_min: -3.0, y_max: 3.0, nx: 16, ny: 18 };
            let f = Field2D::from_fn(&grid, 0.7, p.clone(), |x, y| {
                (0.8 * (y + 0.3 * x.sin())).tanh() * 0.95
            })
            .unwrap();
            let dt = 0.2;
            let op = ImplicitStep::new(&f, lateral, dt);
            let mut next = f.clone();
            let mut modal = vec![0.0; op.rows * op.modes];
            op.advance(&p, f.nx, &f.u, &mut next.u, &mut modal);
            // dense oracle: unknowns on (col0..col0+modes) × (1..ny-1)
            let (nx, ny) = (f.nx, f.ny);
            let cols: Vec<usize> = match lateral {
                Lateral::Neumann => (0..nx).collect(),
                Lateral::Dirichlet => (1..nx - 1).collect(),
            };
            let m = cols.len() * (ny - 2);
            let idx = |ci: usize, j: usize| (j - 1) * cols.len() + ci;
            let mut a = vec![vec![0.0; m]; m];
            let mut r = vec![0.0; m];
            let (ihx2, ihy2, adv) = (1.0 / (f.hx * f.hx), 1.0 / (f.hy * f.hy), f.c / (2.0 * f.hy));
            for j in 1..ny - 1 {
                for (ci, &i) in cols.iter().enumerate() {
                    let row = idx(ci, j);
                    let v = f.at(i, j);
                    r[row] = v - dt * p.df(v);
                    a[row][row] += 1.0 + 2.0 * dt * ihx2 + 2.0 * dt * ihy2;
                    let mut couple = |ii: isize, jj: usize, w: f64| {
                        let ii = if ii < 0 { 1 } else if ii as usize >= nx { nx - 2 } else { ii as usize };
                        let unknown = jj >= 1 && jj <= ny - 2 && cols.contains(&ii);
                        if unknown {
                            let cj = cols.iter().position(|&c| c == ii).unwrap();
                            a[row][idx(cj, jj)] -= dt * w;
                        } else {
                            r[row] += dt * w * f.at(ii, jj);
                        }
                    };
                    couple(i as isize - 1, j, ihx2);
                    couple(i as isize + 1, j, ihx2);
                    couple(i as isize, j - 1, ihy2 - adv);
                    couple(i as isize, j + 1, ihy2 + adv);
                }
            }
            // Gaussian elimination with partial pivoting
            for k in 0..m {
                let piv = (k..m).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
                a.swap(k, piv);
                r.swap(k, piv);
                for rr in k + 1..m {
                    let fac = a[rr][k] / a[k][k];
                    if fac != 0.0 {
                        for cc in k..m {
                            a[rr][cc] -= fac * a[k][cc];
                        }
                        r[rr] -= fac * r[k];
                    }
                }
            }
            let mut sol = vec![0.0; m];
            for k in (0..m).rev() {
                let s: f64 = (k + 1..m).map(|cc| a[k][cc] * sol[cc]).sum();
                sol[k] = (r[k] - s) / a[k][k];
            }
            for j in 1..ny - 1 {
                for (ci, &i) in cols.iter().enumerate() {
                    assert_abs_diff_eq!(next.at(i, j), sol[idx(ci, j)], epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn embedded_planar_residual_is_second_order() {
        let p = Arc::new(Potential::tilted(0.3).unwrap());
        let c0 = front_profile(&p).unwrap().speed;
        let sup = |ny: usize| {
            let grid = Grid { x_min: -2.0, x_max: 2.0, y_min: -12.0, y_max: 12.0, nx: 16, ny };
            let cfg = cfg_for(grid, c0, InitKind::Planar { shift: 0.0 });
            let f = initial_guess(&p, c0, &cfg.init, &cfg).unwrap();
            residual_norm(&f).sup
        };
        let (coarse, fine) = (sup(121), sup(241));
        let ratio = coarse / fine;
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}, {coarse:e} -> {fine:e}");
    }

    #[test]
    fn discrete_planar_front_is_a_fixed_point() {
        let p = Arc::new(Potential::tilted(0.3).unwrap());
        let grid = Grid { x_min: -2.0, x_max: 2.0, y_min: -12.0, y_max: 12.0, nx: 16, ny: 241 };
        let front = discrete_planar_front(&p, &grid).unwrap();
        let c0 = 0.3 * std::f64::consts::SQRT_2;
        assert!((front.speed - c0).abs() < 1e-2 * c0);
        let f = Field2D::from_fn(&grid, front.speed, p.clone(), |_, y| {
            front.u[((y - grid.y_min) / grid.hy()).round() as usize]
        })
        .unwrap();
        let mut cfg = cfg_for(grid, front.speed, InitKind::Planar { shift: 0.0 });
        cfg.max_steps = 1000;
        cfg.tol = 0.0;
        cfg.dt = 0.3;
        let (out, log) = relax(f.clone(), &cfg).unwrap();
        assert_eq!(log.steps, 1000);
        let drift = out.u.iter().zip(&f.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(drift <= 1e-8, "drift {drift:e}");
    }

    #[test]
    fn oversized_step_leaves_the_range() {
        let p = Arc::new(Potential::quartic());
        let grid = small_grid(32, 64);
        let mut cfg = cfg_for(grid, 1.0, InitKind::Planar { shift: 0.0 });
        assert!(cfg.checked(&p).is_ok());
        cfg.dt = 3.0;
        assert!(matches!(cfg.checked(&p), Err(Error::Unstable { .. })));
        let f = Field2D::from_fn(&grid, 1.0, p.clone(), |x, y| 0.9 * (y + 0.5 * x).tanh()).unwrap();
        let err = relax(f, &cfg).unwrap_err();
        assert!(matches!(err, Error::RangeViolation { .. }), "{err}");
    }

    #[test]
    fn stable_steps_preserve_the_range() {
        let p = Arc::new(Potential::quartic());
        let grid = small_grid(32, 64);
        let mut cfg = cfg_for(grid, 1.0, InitKind::Planar { shift: 0.0 }).checked(&p).unwrap();
        cfg.dt = SolveConfig::stability_bound(&p);
        cfg.max_steps = 300;
        let f = Field2D::from_fn(&grid, 1.0, p.clone(), |x, y| {
            if (x * 3.0).sin() * (y * 2.0).cos() > 0.0 { 1.0 } else { -1.0 }
        })
        .unwrap();
        let (out, _) = relax(f, &cfg).unwrap();
        assert!(out.range_violation().is_none());
    }

    #[test]
    fn recenter_finds_planar_offset_and_is_idempotent() {
        let p = Arc::new(Potential::quartic());
        let grid = small_grid(32, 97);
        let f = Field2D::from_fn(&grid, 0.0, p.clone(), |_, y| ((y - 1.3) / 2f64.sqrt()).tanh()).unwrap();
        let (g, sx, sy) = recenter(&f).unwrap();
        assert_abs_diff_eq!(sy, 1.3, epsilon = grid.hy());
        assert_eq!(sx, 0.0);
        let (_, sx2, sy2) = recenter(&g).unwrap();
        assert!(sx2.abs() < 1e-3 && sy2.abs() < 1e-3, "{sx2} {sy2}");
        let even = Field2D::from_fn(&grid, 0.0, p.clone(), |x, y| {
            ((y - 0.3 * x * x + 2.0) / 2f64.sqrt()).tanh()
        })
        .unwrap();
        let (_, sx3, _) = recenter(&even).unwrap();
        assert!(sx3.abs() < 1e-9, "{sx3}");
        let flat = Field2D::from_fn(&grid, 0.0, p.clone(), |_, _| 1.0).unwrap();
        assert!(matches!(recenter(&flat), Err(Error::NoCrossing(_))));
    }

    #[test]
    fn initial_guess_kinds() {
        let q = Arc::new(Potential::quartic());
        let t = Arc::new(Potential::tilted(0.3).unwrap());
        let grid = small_grid(33, 49);
        let cfg = cfg_for(grid, 1.0, InitKind::BalancedCosh { a_eff: 33.9, skew: 0.0 });
        let f = initial_guess(&q, 1.0, &cfg.init, &cfg).unwrap();
        assert_abs_diff_eq!(f.at(16, 24), 0.0, epsilon = 1e-12);
        assert!(matches!(
            initial_guess(&t, 1.0, &cfg.init, &cfg),
            Err(Error::KindMismatch { .. })
        ));
        let alpha = std::f64::consts::FRAC_PI_6;
        let c = 0.3 * std::f64::consts::SQRT_2 / alpha.cos();
        let v = InitKind::VShape { alpha };
        let f = initial_guess(&t, c, &v, &cfg).unwrap();
        // zero level y = |x| tan α sampled on the grid columns
        for i in [2, 8, 24, 30] {
            let x = f.x(i);
            assert_abs_diff_eq!(f.sample(x, x.abs() * alpha.tan()), 0.0, epsilon = 2e-3);
        }
        assert!(matches!(initial_guess(&t, 1.0, &v, &cfg), Err(Error::KindMismatch { .. })));
        assert!(matches!(initial_guess(&q, c, &v, &cfg), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn relaxation_is_deterministic_across_pools() {
        let p = Arc::new(Potential::quartic());
        let grid = small_grid(48, 80);
        let mut cfg = cfg_for(grid, 1.0, InitKind::BalancedCosh { a_eff: 30.0, skew: 0.2 });
        cfg.max_steps = 50;
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let f = initial_guess(&p, 1.0, &cfg.init, &cfg).unwrap();
                let (out, log) = relax(f, &cfg).unwrap();
                (out.u, log)
            })
        };
        let (a, la) = run(1);
        let (b, lb) = run(4);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(la.entries.len(), lb.entries.len());
        for (x, y) in la.entries.iter().zip(&lb.entries) {
            assert_eq!(x.residual.sup.to_bits(), y.residual.sup.to_bits());
        }
    }

    #[test]
    fn log_steps_are_monotone() {
        let p = Arc::new(Potential::quartic());
        let grid = small_grid(32, 64);
        let mut cfg = cfg_for(grid, 1.0, InitKind::BalancedCosh { a_eff: 30.0, skew: 0.0 });
        cfg.max_steps = 95;
        let f = initial_guess(&p, 1.0, &cfg.init, &cfg).unwrap();
        let (_, log) = relax(f, &cfg).unwrap();
        assert!(log.entries.windows(2).all(|w| w[0].step < w[1].step));
        assert_eq!(log.entries.last().unwrap().step, 95);
    }
}
