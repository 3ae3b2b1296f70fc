//! Explicit Runge–Kutta integrators on fixed-size states.

use crate::error::{Error, Result};

pub type State<const N: usize> = [f64; N];

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &State<N>, h: f64) -> State<N>
where
    F: Fn(f64, &State<N>) -> State<N>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, h, &[(0.5, &k1)]));
    let k3 = f(t + 0.5 * h, &axpy(y, h, &[(0.5, &k2)]));
    let k4 = f(t + h, &axpy(y, h, &[(1.0, &k3)]));
    axpy(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
}

/// Tolerances for [`Dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

/// Dormand–Prince 5(4) with standard step-size control.
pub struct Dopri5 {
    pub tol: Tolerance,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            tol: Tolerance { rtol, atol },
            h_init: 1e-3,
            h_max: f64::INFINITY,
            h_min: 1e-14,
        }
    }

    /// Integrate from `t0` to `t1`, calling `observe(t, y)` after every
    /// accepted step (including the initial point). `observe` returns `false`
    /// to stop early; the last accepted state is returned.
    pub fn integrate<const N: usize, F, O>(
        &self,
        f: F,
        t0: f64,
        y0: State<N>,
        t1: f64,
        mut observe: O,
    ) -> Result<(f64, State<N>)>
    where
        F: Fn(f64, &State<N>) -> State<N>,
        O: FnMut(f64, &State<N>) -> bool,
    {
        const A21: f64 = 1.0 / 5.0;
        const A31: f64 = 3.0 / 40.0;
        const A32: f64 = 9.0 / 40.0;
        const A41: f64 = 44.0 / 45.0;
        const A42: f64 = -56.0 / 15.0;
        const A43: f64 = 32.0 / 9.0;
        const A51: f64 = 19372.0 / 6561.0;
        const A52: f64 = -25360.0 / 2187.0;
        const A53: f64 = 64448.0 / 6561.0;
        const A54: f64 = -212.0 / 729.0;
        const A61: f64 = 9017.0 / 3168.0;
        const A62: f64 = -355.0 / 33.0;
        const A63: f64 = 46732.0 / 5247.0;
        const A64: f64 = 49.0 / 176.0;
        const A65: f64 = -5103.0 / 18656.0;
        const B1: f64 = 35.0 / 384.0;
        const B3: f64 = 500.0 / 1113.0;
        const B4: f64 = 125.0 / 192.0;
        const B5: f64 = -2187.0 / 6784.0;
        const B6: f64 = 11.0 / 84.0;
        const E1: f64 = 71.0 / 57600.0;
        const E3: f64 = -71.0 / 16695.0;
        const E4: f64 = 71.0 / 1920.0;
        const E5: f64 = -17253.0 / 339200.0;
        const E6: f64 = 22.0 / 525.0;
        const E7: f64 = -1.0 / 40.0;

        let dir = (t1 - t0).signum();
        let mut t = t0;
        let mut y = y0;
        if !observe(t, &y) || t0 == t1 {
            return Ok((t, y));
        }
        let mut h = self.h_init.min(self.h_max).min((t1 - t0).abs());
        let mut k1 = f(t, &y);
        loop {
            if (t1 - t) * dir <= 0.0 {
                return Ok((t, y));
            }
            if h < self.h_min {
                return Err(Error::StepUnderflow(t));
            }
            let hs = dir * h.min((t1 - t).abs());
            let k2 = f(t + 0.2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
            let k3 = f(t + 0.3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + 0.8 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + 8.0 / 9.0 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + hs,
                &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(t + hs, &y_new);
            let mut err = 0.0f64;
            for i in 0..N {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h *= 0.2;
                continue;
            }
            if err <= 1.0 {
                t += hs;
                y = y_new;
                k1 = k7;
                if !observe(t, &y) {
                    return Ok((t, y));
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * fac).min(self.h_max);
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
    }
}
