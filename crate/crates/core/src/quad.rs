//! Quadrature and scalar root finding.
//!
//! The adaptive integrator is a 7/15-point Gauss–Kronrod pair with a panel
//! stack. Integrands with an inverse square-root endpoint singularity of the
//! form `1 / sqrt(G(s))`, `G(turn) = 0`, `G'(turn) != 0`, are handled by
//! [`turning_point_integral`], which substitutes `s = turn ∓ t²` so that the
//! transformed integrand is smooth at `t = 0`.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`, or to about 1e-14 relative when that is looser.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    const MAX_PANELS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let mut total = v;
    let mut total_err = e;
    let mut count = 1;
    // below ~1e-14 relative the Kronrod error estimate is rounding noise
    let floor = |total: f64| tol.max(ROUNDING_FLOOR * total.abs());
    while total_err > floor(total) {
        // split the panel with the largest error estimate
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty panel list");
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if count >= MAX_PANELS || mid <= pa || mid >= pb {
            return Err(Error::Quadrature { a, b, err: total_err });
        }
        let (lv, le) = gk15(&f, pa, mid);
        let (rv, re) = gk15(&f, mid, pb);
        total += lv + rv - pv;
        total_err += le + re - pe;
        panels.push((pa, mid, lv, le));
        panels.push((mid, pb, rv, re));
        count += 1;
        if total_err <= floor(total) {
            // recompute from scratch to shed accumulated rounding
            total = panels.iter().map(|p| p.2).sum();
            total_err = panels.iter().map(|p| p.3).sum();
        }
    }
    Ok(total)
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to interval width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.signum() != fhi.signum()) || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NotBracketed {
            lo,
            hi,
            context: format!("f(lo) = {flo:e}, f(hi) = {fhi:e}"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solve `f(x) = 0` for increasing `f` on `[lo, hi]` by Newton steps that
/// fall back to bisection whenever they leave the bracket.
pub fn safeguarded_newton<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, x0: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> f64,
{
    let mut x = x0.clamp(lo, hi);
    for _ in 0..200 {
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = if d.is_finite() && d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol || hi - lo <= tol {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Mean of `df` over the segment `[a, a + d]` by the 15-point Kronrod rule,
/// i.e. `(F(a + d) - F(a)) / d` without cancellation.
pub fn secant_slope<D: Fn(f64) -> f64>(df: &D, a: f64, d: f64) -> f64 {
    if d == 0.0 {
        return df(a);
    }
    let center = a + 0.5 * d;
    let half = 0.5 * d;
    let mut acc = WGK[7] * df(center);
    for k in 0..7 {
        acc += WGK[k] * (df(center - half * XGK[k]) + df(center + half * XGK[k]));
    }
    0.5 * acc
}

/// `∫ ds / sqrt(2 (F(s) - F(turn)))` between `turn` and `other`, where
/// `F(s) > F(turn)` strictly between them and `F'(turn) != 0`. `df`
/// evaluates `F'`. Uses `s = turn + σ t²` with `σ` the direction towards
/// `other`, which makes the integrand smooth at the turning point.
pub fn turning_point_integral<D: Fn(f64) -> f64>(df: &D, turn: f64, other: f64, tol: f64) -> Result<f64> {
    let sigma = (other - turn).signum();
    let t_max = (other - turn).abs().sqrt();
    let integrand = |t: f64| {
        let ratio = sigma * secant_slope(df, turn, sigma * t * t);
        if ratio <= 0.0 {
            return 0.0;
        }
        2.0 / (2.0 * ratio).sqrt()
    };
    integrate(integrand, 0.0, t_max, tol)
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}
