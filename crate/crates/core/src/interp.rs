//! One-dimensional interpolation on sorted abscissae.

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
///
/// C¹, and monotone on every interval where the data are monotone, so level
/// queries on a monotone table stay single-valued.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2, "need at least two nodes");
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                d[i] = (w0 + w1) / (w0 / delta[i - 1] + w1 / delta[i]);
            }
        }
        Pchip { x, y, d }
    }

    /// Hermite interpolant with user supplied slopes (e.g. an exact
    /// derivative table).
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        assert!(x.len() == y.len() && y.len() == d.len() && x.len() >= 2);
        Pchip { x, y, d }
    }

    /// Hermite interpolant on exact slopes, passed through the
    /// Fritsch–Carlson limiter so monotone data stay monotone. Slopes that
    /// already satisfy the limiter are kept unchanged.
    pub fn limited(x: Vec<f64>, y: Vec<f64>, mut d: Vec<f64>) -> Self {
        assert!(x.len() == y.len() && y.len() == d.len() && x.len() >= 2);
        for i in 0..x.len() - 1 {
            let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if delta == 0.0 {
                continue;
            }
            for k in [i, i + 1] {
                if d[k] * delta < 0.0 {
                    d[k] = 0.0;
                }
            }
            let a = d[i] / delta;
            let b = d[i + 1] / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                d[i] = tau * a * delta;
                d[i + 1] = tau * b * delta;
            }
        }
        Pchip { x, y, d }
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Value at `t`; constant extrapolation outside the table.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    /// Derivative at `t`; zero outside the table.
    pub fn deriv(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return 0.0;
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let d00 = 6.0 * s * (s - 1.0) / h;
        let d10 = (1.0 - s) * (1.0 - 3.0 * s);
        let d01 = -d00;
        let d11 = s * (3.0 * s - 2.0);
        d00 * self.y[i] + d10 * self.d[i] + d01 * self.y[i + 1] + d11 * self.d[i + 1]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

/// Natural cubic spline, used for tabulated potentials.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 3 && y.len() == n);
        // tridiagonal system for second derivatives, natural ends
        let mut a = vec![0.0; n];
        let mut b = vec![1.0; n];
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            r[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        let m = solve_tridiagonal(&a, &b, &c, &r);
        CubicSpline { x, y, m }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Catmull–Rom cubic through uniformly spaced `values` at fractional index
/// `pos`; clamped to the end values outside `[0, n - 1]`.
pub fn catmull_rom(values: &[f64], pos: f64) -> f64 {
    let n = values.len();
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= (n - 1) as f64 {
        return values[n - 1];
    }
    let i = pos.floor() as usize;
    let t = pos - i as f64;
    if t == 0.0 {
        return values[i];
    }
    let p0 = values[i.saturating_sub(1)];
    let p1 = values[i];
    let p2 = values[(i + 1).min(n - 1)];
    let p3 = values[(i + 2).min(n - 1)];
    0.5 * (2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (3.0 * (p1 - p2) + p3 - p0) * t * t * t)
}

/// Crossing of `level` inside segment `k` of uniformly spaced `values`,
/// as a fraction in `[0, 1]`, located on the Catmull–Rom interpolant. The
/// endpoints must lie on opposite sides (`>= level` versus `< level`).
pub fn segment_crossing(values: &[f64], k: usize, level: f64) -> f64 {
    let f = |t: f64| catmull_rom(values, k as f64 + t) - level;
    let (mut lo, mut hi) = (0.0, 1.0);
    let above = f(lo) >= 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) >= 0.0) == above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fractional indices of all crossings of `level` by uniformly spaced
/// `values`, one per segment whose endpoints straddle it.
pub fn level_crossings(values: &[f64], level: f64) -> Vec<f64> {
    (0..values.len().saturating_sub(1))
        .filter(|&k| (values[k] >= level) != (values[k + 1] >= level))
        .map(|k| k as f64 + segment_crossing(values, k, level))
        .collect()
}

/// Thomas algorithm for a tridiagonal system; `a[0]` and `c[n-1]` are ignored.
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut rp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    rp[0] = r[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        rp[i] = (r[i] - a[i] * rp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = rp[i] - cp[i] * x[i + 1];
    }
    x
}
