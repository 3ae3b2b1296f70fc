//! Level curves of a sampled field, their graph views, and asymptotic fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{catmull_rom, level_crossings, segment_crossing};
use crate::potentials::Potential;
use crate::solver2d::Field2D;
use crate::stats::{linear_fit, median};

/// Minimum number of table points a fit accepts.
pub const MIN_FIT_POINTS: usize = 8;

/// A level set as ordered polylines plus its crossings with grid lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCurve {
    pub level: f64,
    /// Marching-squares polylines; consecutive points share a grid cell.
    pub polylines: Vec<Vec<(f64, f64)>>,
    /// Per column, the crossing height when the column crosses exactly once.
    pub columns: Vec<(f64, Option<f64>)>,
    /// Per row, all crossing abscissae in increasing order.
    pub rows: Vec<(f64, Vec<f64>)>,
}

/// Edge of the grid: horizontal from `(i, j)` to `(i + 1, j)` or vertical
/// from `(i, j)` to `(i, j + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Extracts the `alpha` level of `u`. Crossings are located on the cubic
/// interpolant along each grid line.
pub fn extract_level(u: &Field2D, alpha: f64) -> Result<LevelCurve> {
    let (lo, hi) = u.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo < alpha && alpha <= hi) {
        return Err(Error::LevelNotAttained(alpha));
    }
    let (nx, ny) = (u.nx, u.ny);
    let cols: Vec<Vec<f64>> = (0..nx).map(|i| u.column(i)).collect();
    let above = |i: usize, j: usize| u.at(i, j) >= alpha;
    let point = |e: Edge| match e {
        Edge::H(i, j) => (u.x(i) + segment_crossing(u.row(j), i, alpha) * u.hx, u.y(j)),
        Edge::V(i, j) => (u.x(i), u.y(j) + segment_crossing(&cols[i], j, alpha) * u.hy),
    };
    let mut adjacency: BTreeMap<Edge, Vec<Edge>> = BTreeMap::new();
    let mut link = |a: Edge, b: Edge| {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            // edges in corner order: bottom, right, top, left
            let edges = [Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j)];
            let cut: Vec<usize> = (0..4).filter(|&k| corners[k] != corners[(k + 1) % 4]).collect();
            match cut.len() {
                2 => link(edges[cut[0]], edges[cut[1]]),
                4 => {
                    let mean = 0.25 * (u.at(i, j) + u.at(i + 1, j) + u.at(i + 1, j + 1) + u.at(i, j + 1));
                    // the corner pair on the side of the cell average joins
                    // through the center; the other two corners are cut off
                    let center = mean >= alpha;
                    let isolated = if corners[0] == center { [1, 3] } else { [0, 2] };
                    for c in isolated {
                        // corner c touches edges c-1 and c
                        link(edges[(c + 3) % 4], edges[c]);
                    }
                }
                _ => {}
            }
        }
    }
    let mut seen: BTreeMap<Edge, bool> = adjacency.keys().map(|&e| (e, false)).collect();
    let mut polylines = Vec::new();
    let walk = |start: Edge, seen: &mut BTreeMap<Edge, bool>| {
        let mut line = vec![point(start)];
        seen.insert(start, true);
        let mut cur = start;
        loop {
            let next = adjacency[&cur].iter().copied().find(|e| !seen[e]);
            match next {
                Some(e) => {
                    seen.insert(e, true);
                    line.push(point(e));
                    cur = e;
                }
                None => break,
            }
        }
        line
    };
    let ends: Vec<Edge> = adjacency.iter().filter(|(_, v)| v.len() == 1).map(|(&e, _)| e).collect();
    for e in ends {
        if !seen[&e] {
            polylines.push(walk(e, &mut seen));
        }
    }
    let rest: Vec<Edge> = adjacency.keys().copied().collect();
    for e in rest {
        if !seen[&e] {
            let mut line = walk(e, &mut seen);
            line.push(line[0]);
            polylines.push(line);
        }
    }
    let columns = (0..nx)
        .map(|i| {
            let ys = level_crossings(&cols[i], alpha);
            (u.x(i), (ys.len() == 1).then(|| u.y_min + ys[0] * u.hy))
        })
        .collect();
    let rows = (0..ny)
        .map(|j| {
            let xs = level_crossings(u.row(j), alpha).iter().map(|k| u.x_min + k * u.hx).collect();
            (u.y(j), xs)
        })
        .collect();
    Ok(LevelCurve { level: alpha, polylines, columns, rows })
}

/// Graph view of a level curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `y = γ(x)` from columns crossed exactly once.
    GammaOfX,
    /// Left branch `x = k₁(y)` from rows crossed exactly twice.
    K1OfY,
    /// Right branch `x = k₂(y)`.
    K2OfY,
}

/// Samples `(abscissa, value)` of one graph view, sorted by abscissa.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchTable {
    pub orientation: Orientation,
    pub pairs: Vec<(f64, f64)>,
    /// Longest run of consecutive samples on which a k-branch is strictly
    /// monotone (decreasing for k₁, increasing for k₂); the full range for γ.
    pub window: (f64, f64),
}

impl BranchTable {
    /// The same samples in coordinates whose origin sits at `(x0, y0)`.
    pub fn translated(&self, x0: f64, y0: f64) -> BranchTable {
        let (da, dv) = match self.orientation {
            Orientation::GammaOfX => (x0, y0),
            _ => (y0, x0),
        };
        BranchTable {
            orientation: self.orientation,
            pairs: self.pairs.iter().map(|&(a, v)| (a - da, v - dv)).collect(),
            window: (self.window.0 - da, self.window.1 - da),
        }
    }
}

pub fn branch_tables(curve: &LevelCurve, orientation: Orientation) -> Result<BranchTable> {
    let pairs: Vec<(f64, f64)> = match orientation {
        Orientation::GammaOfX => curve.columns.iter().filter_map(|&(x, y)| y.map(|y| (x, y))).collect(),
        Orientation::K1OfY | Orientation::K2OfY => curve
            .rows
            .iter()
            .filter(|(_, xs)| xs.len() == 2)
            .map(|(y, xs)| (*y, if orientation == Orientation::K1OfY { xs[0] } else { xs[1] }))
            .collect(),
    };
    if pairs.len() < 2 {
        return Err(Error::NoBranch);
    }
    let window = match orientation {
        Orientation::GammaOfX => (pairs[0].0, pairs[pairs.len() - 1].0),
        _ => {
            let sign = if orientation == Orientation::K2OfY { 1.0 } else { -1.0 };
            let mut best = (0, 0);
            let mut start = 0;
            for k in 1..pairs.len() {
                if sign * (pairs[k].1 - pairs[k - 1].1) <= 0.0 {
                    start = k;
                }
                if k - start > best.1 - best.0 {
                    best = (start, k);
                }
            }
            if best.1 == best.0 {
                return Err(Error::NoBranch);
            }
            (pairs[best.0].0, pairs[best.1].0)
        }
    };
    Ok(BranchTable { orientation, pairs, window })
}

/// Asymptotic model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum FitModel {
    /// `k₂ = ln y / 2μ + C₂` (or `k₁ = -ln y / 2μ + C₁`).
    LogBranch,
    /// Median of `cosh(2μx) / (μγ)` along the curve, which tends to `A / c`.
    CoshLaw,
    /// `γ = offset + slope |x|`.
    Line,
    /// Sup distance to the grim reaper `ln sec(cx) / c` of speed `c`.
    GrimReaper { c: f64 },
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::LogBranch => "log-branch",
            FitModel::CoshLaw => "cosh-law",
            FitModel::Line => "line",
            FitModel::GrimReaper { .. } => "grim-reaper-distance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: &'static str,
    pub params: BTreeMap<String, f64>,
    pub residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Fits `model` to the samples of `table` inside `window` (intersected with
/// the table's own validity window for k-branches).
pub fn fit_asymptotics(table: &BranchTable, model: FitModel, p: &Potential, window: (f64, f64)) -> Result<FitResult> {
    let mu = p.constants()?.mu;
    let (mut lo, mut hi) = window;
    if table.orientation != Orientation::GammaOfX {
        lo = lo.max(table.window.0);
        hi = hi.min(table.window.1);
    }
    let idx: Vec<usize> = (0..table.pairs.len()).filter(|&k| (lo..=hi).contains(&table.pairs[k].0)).collect();
    let pts: Vec<(f64, f64)> = idx.iter().map(|&k| table.pairs[k]).collect();
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::KindMismatch { kind: "fit", reason: format!("{} needs {what}", model.name()) })
        }
    };
    let mut params = BTreeMap::new();
    let residual;
    let used;
    match model {
        FitModel::LogBranch => {
            need(table.orientation != Orientation::GammaOfX, "a k-branch")?;
            let sign = if table.orientation == Orientation::K2OfY { 1.0 } else { -1.0 };
            let pts: Vec<(f64, f64)> = pts.into_iter().filter(|(y, _)| *y > 0.0).collect();
            insufficient(pts.len())?;
            let offs: Vec<f64> = pts.iter().map(|(y, k)| k - sign * y.ln() / (2.0 * mu)).collect();
            let c = offs.iter().sum::<f64>() / offs.len() as f64;
            residual = (offs.iter().map(|o| (o - c).powi(2)).sum::<f64>() / offs.len() as f64).sqrt();
            params.insert(if sign > 0.0 { "C2" } else { "C1" }.to_string(), c);
            // local exponent y k' by centered differences on the table
            let ratios: Vec<f64> = idx
                .iter()
                .filter(|&&k| k > 0 && k + 1 < table.pairs.len() && table.pairs[k - 1].0 > 0.0)
                .filter(|&&k| (lo..=hi).contains(&table.pairs[k - 1].0) && (lo..=hi).contains(&table.pairs[k + 1].0))
                .map(|&k| {
                    let ((y0, k0), (y, _), (y1, k1)) = (table.pairs[k - 1], table.pairs[k], table.pairs[k + 1]);
                    sign * y * (k1 - k0) / (y1 - y0) * 2.0 * mu
                })
                .collect();
            if !ratios.is_empty() {
                params.insert("exponent_ratio_min".into(), ratios.iter().copied().fold(f64::INFINITY, f64::min));
                params.insert("exponent_ratio_max".into(), ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                params.insert("exponent_ratio_mean".into(), ratios.iter().sum::<f64>() / ratios.len() as f64);
            }
            used = pts.len();
        }
        FitModel::CoshLaw => {
            // along γ(x) the samples are (x, γ); along a k-branch (y, x)
            let r: Vec<f64> = pts
                .iter()
                .map(|&(a, v)| if table.orientation == Orientation::GammaOfX { (a, v) } else { (v, a) })
                .filter(|(_, g)| *g > 0.0)
                .map(|(x, g)| (2.0 * mu * x).cosh() / (mu * g))
                .collect();
            insufficient(r.len())?;
            let ratio = median(&r).ok_or(Error::NoBranch)?;
            residual = r.iter().fold(0.0f64, |m, v| m.max((v - ratio).abs()));
            params.insert("ratio".into(), ratio);
            used = r.len();
        }
        FitModel::Line => {
            need(table.orientation == Orientation::GammaOfX, "γ(x)")?;
            insufficient(pts.len())?;
            let ax: Vec<f64> = pts.iter().map(|p| p.0.abs()).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let fit = linear_fit(&ax, &ys)?;
            params.insert("slope".into(), fit.slope);
            params.insert("offset".into(), fit.intercept);
            residual = fit.rms;
            used = pts.len();
        }
        FitModel::GrimReaper { c } => {
            need(table.orientation == Orientation::GammaOfX && c > 0.0, "γ(x) and c > 0")?;
            let half = std::f64::consts::FRAC_PI_2;
            let inside: Vec<(f64, f64)> = pts.into_iter().filter(|(x, _)| (c * x).abs() < half).collect();
            insufficient(inside.len())?;
            residual = inside
                .iter()
                .fold(0.0f64, |m, &(x, g)| m.max((g + (c * x).cos().ln() / c).abs()));
            params.insert("sup_distance".into(), residual);
            used = inside.len();
        }
    }
    if !residual.is_finite() {
        return Err(Error::DegenerateFit("non-finite residual".into()));
    }
    Ok(FitResult { model: model.name(), params, residual, window: (lo, hi), points: used })
}

fn insufficient(n: usize) -> Result<()> {
    if n < MIN_FIT_POINTS {
        Err(Error::Insufficient(format!("{n} points in the fit window, need {MIN_FIT_POINTS}")))
    } else {
        Ok(())
    }
}

/// Mirror-symmetry defects about `x = center_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryResidual {
    /// `sup |u(x_c + x, y) - u(x_c - x, y)|` over interior nodes whose
    /// mirror image lies inside the domain.
    pub field_residual: f64,
    /// `sup |k₁(y) + k₂(y) - 2 x_c|` over rows crossed twice by the zero
    /// level: the horizontal mismatch of the two branches, which stays well
    /// conditioned where `γ` is steep.
    pub curve_residual: f64,
    pub center_x: f64,
}

pub fn symmetry_residual(u: &Field2D, center_x: f64) -> SymmetryResidual {
    let mut field_residual = 0.0f64;
    for j in 1..u.ny - 1 {
        let row = u.row(j);
        for i in 1..u.nx - 1 {
            let mirror = 2.0 * center_x - u.x(i);
            let pos = (mirror - u.x_min) / u.hx;
            if pos < 0.0 || pos > (u.nx - 1) as f64 {
                continue;
            }
            let v = if (pos - pos.round()).abs() < 1e-9 { row[pos.round() as usize] } else { catmull_rom(row, pos) };
            field_residual = field_residual.max((row[i] - v).abs());
        }
    }
    let curve_residual = (1..u.ny - 1)
        .filter_map(|j| {
            let xs = level_crossings(u.row(j), 0.0);
            (xs.len() == 2).then(|| (u.x_min + 0.5 * (xs[0] + xs[1]) * u.hx - center_x).abs() * 2.0)
        })
        .fold(0.0f64, f64::max);
    SymmetryResidual { field_residual, curve_residual, center_x }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver2d::Grid;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn grid() -> Grid {
        Grid { x_min: -4.0, x_max: 4.0, y_min: -3.0, y_max: 5.0, nx: 41, ny: 81 }
    }

    fn field(f: impl Fn(f64, f64) -> f64 + Sync) -> Field2D {
        Field2D::from_fn(&grid(), 1.0, Arc::new(Potential::quartic()), f).unwrap()
    }

    fn tanh_front(y: f64) -> f64 {
        (y / 2f64.sqrt()).tanh()
    }

    #[test]
    fn planar_levels() {
        let f = field(|_, y| tanh_front(y));
        let c = extract_level(&f, 0.0).unwrap();
        assert_eq!(c.polylines.len(), 1);
        assert!(c.polylines[0].iter().all(|p| p.1.abs() < 1e-4));
        let alpha = (1.0 / 2f64.sqrt()).tanh();
        let c = extract_level(&f, alpha).unwrap();
        for (_, y) in &c.columns {
            assert_abs_diff_eq!(y.unwrap(), 1.0, epsilon = 1e-4);
        }
        let flat = field(|_, _| 1.0);
        assert!(matches!(extract_level(&flat, 0.0), Err(Error::LevelNotAttained(_))));
    }

    #[test]
    fn polyline_steps_stay_within_a_cell() {
        let f = field(|x, y| tanh_front(y - 0.4 * x * x + 1.0));
        let c = extract_level(&f, 0.0).unwrap();
        let diag = (f.hx * f.hx + f.hy * f.hy).sqrt();
        for line in &c.polylines {
            for w in line.windows(2) {
                let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
                assert!(d <= diag + 1e-12);
            }
        }
    }

    #[test]
    fn saddle_cells_follow_the_cell_average() {
        // u = x y on a cell centered at the origin has a saddle; shifting the
        // level decides which diagonal connects
        let g = Grid { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0, nx: 16, ny: 16 };
        let f = Field2D::from_fn(&g, 0.0, Arc::new(Potential::quartic()), |x, y| x * y + 0.01).unwrap();
        let c = extract_level(&f, 0.0).unwrap();
        // the positive quadrants connect through the middle, so the level
        // splits into two open curves
        assert_eq!(c.polylines.len(), 2);
    }

    #[test]
    fn k_branches_of_a_symmetric_field() {
        let f = field(|x, y| tanh_front(y - 0.5 * x * x));
        let c = extract_level(&f, 0.0).unwrap();
        let k1 = branch_tables(&c, Orientation::K1OfY).unwrap();
        let k2 = branch_tables(&c, Orientation::K2OfY).unwrap();
        // the vertex row touches the level tangentially, where bisection
        // resolves the root only to about sqrt(machine epsilon) in value
        for (a, b) in k1.pairs.iter().zip(&k2.pairs) {
            assert_abs_diff_eq!(a.1, -b.1, epsilon = 1e-8);
        }
        assert!(k2.window.1 > k2.window.0);
        let s = symmetry_residual(&f, 0.0);
        assert!(s.field_residual < 1e-12 && s.curve_residual < 1e-8, "{s:?}");
        let tilted = field(|x, y| tanh_front(y - x));
        assert!(symmetry_residual(&tilted, 0.0).field_residual > 0.5);
    }

    #[test]
    fn v_shape_gamma_is_linear() {
        let t = (std::f64::consts::FRAC_PI_6).tan();
        let f = field(|x, y| tanh_front(y - x.abs() * t));
        let c = extract_level(&f, 0.0).unwrap();
        let g = branch_tables(&c, Orientation::GammaOfX).unwrap();
        for (x, y) in &g.pairs {
            assert_abs_diff_eq!(*y, x.abs() * t, epsilon = 1e-3);
        }
    }

    fn table(orientation: Orientation, pairs: Vec<(f64, f64)>) -> BranchTable {
        let window = (pairs[0].0, pairs[pairs.len() - 1].0);
        BranchTable { orientation, pairs, window }
    }

    #[test]
    fn fits_recover_their_own_models() {
        let p = Potential::quartic();
        let mu = 2f64.sqrt();
        let ys: Vec<f64> = (1..=40).map(|k| k as f64 * 2.5).collect();
        let k2 = table(Orientation::K2OfY, ys.iter().map(|&y| (y, y.ln() / (2.0 * mu) + 0.7)).collect());
        let fit = fit_asymptotics(&k2, FitModel::LogBranch, &p, (0.0, 1e9)).unwrap();
        assert_abs_diff_eq!(fit.params["C2"], 0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.params["exponent_ratio_mean"], 1.0, epsilon = 1e-2);
        let k1 = table(Orientation::K1OfY, ys.iter().map(|&y| (y, -y.ln() / (2.0 * mu) - 0.7)).collect());
        let fit = fit_asymptotics(&k1, FitModel::LogBranch, &p, (0.0, 1e9)).unwrap();
        assert_abs_diff_eq!(fit.params["C1"], -0.7, epsilon = 1e-6);

        let xs: Vec<f64> = (-20..=20).filter(|&k| k != 0).map(|k| k as f64 * 0.1).collect();
        let gamma = table(Orientation::GammaOfX, xs.iter().map(|&x| (x, (2.0 * mu * x).cosh() / (2.0 * mu))).collect());
        let fit = fit_asymptotics(&gamma, FitModel::CoshLaw, &p, (-10.0, 10.0)).unwrap();
        assert_abs_diff_eq!(fit.params["ratio"], 2.0, epsilon = 1e-6);
        let branch = table(Orientation::K2OfY, ys.iter().map(|&y| (y, (2.0 * mu * y).acosh() / (2.0 * mu))).collect());
        let fit = fit_asymptotics(&branch, FitModel::CoshLaw, &p, (0.0, 1e9)).unwrap();
        assert_abs_diff_eq!(fit.params["ratio"], 2.0, epsilon = 1e-6);

        let t = (std::f64::consts::FRAC_PI_6).tan();
        let v = table(Orientation::GammaOfX, xs.iter().map(|&x| (x, 0.57735 * x.abs())).collect());
        let fit = fit_asymptotics(&v, FitModel::Line, &p, (-10.0, 10.0)).unwrap();
        assert_abs_diff_eq!(fit.params["slope"], t, epsilon = 1e-5);

        let reaper = table(Orientation::GammaOfX, xs.iter().map(|&x| (x, -(0.5 * x).cos().ln() / 0.5)).collect());
        let fit = fit_asymptotics(&reaper, FitModel::GrimReaper { c: 0.5 }, &p, (-10.0, 10.0)).unwrap();
        assert!(fit.residual < 1e-12);

        let short = table(Orientation::GammaOfX, xs[..5].iter().map(|&x| (x, x)).collect());
        assert!(matches!(fit_asymptotics(&short, FitModel::Line, &p, (-10.0, 10.0)), Err(Error::Insufficient(_))));
    }
}
