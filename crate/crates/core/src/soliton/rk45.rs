//! Dormand–Prince 5(4) embedded pair with standard step-size control.

use crate::error::{LabError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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
// Fifth-order weights minus the embedded fourth-order ones.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])], h: f64) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates y' = rhs(t, y) from `t[0]` and returns the solution at every
/// entry of the increasing sequence `t`.
pub fn integrate<const D: usize, F>(rhs: F, t: &[f64], y0: [f64; D], tol: Tolerance) -> Result<Vec<[f64; D]>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut out = Vec::with_capacity(t.len());
    out.push(y0);
    let mut y = y0;
    let mut tc = t[0];
    let mut h = (t.get(1).copied().unwrap_or(tc) - tc).abs() * 0.1;
    let mut k1 = rhs(tc, &y);
    let mut steps = 0usize;
    for &target in &t[1..] {
        while tc < target {
            steps += 1;
            if steps > tol.max_steps {
                return Err(LabError::Construction(format!(
                    "integrator exceeded {} steps at t = {tc}",
                    tol.max_steps
                )));
            }
            let last = tc + h >= target;
            let hs = if last { target - tc } else { h };
            let k2 = rhs(tc + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
            let k3 = rhs(tc + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
            let k4 = rhs(
                tc + C4 * hs,
                &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs),
            );
            let k5 = rhs(
                tc + C5 * hs,
                &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
            );
            let k6 = rhs(
                tc + hs,
                &axpy(
                    &y,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                    hs,
                ),
            );
            let y5 = axpy(
                &y,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
                hs,
            );
            let k7 = rhs(tc + hs, &y5);
            let mut err: f64 = 0.0;
            for i in 0..D {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h = hs * 0.1;
                continue;
            }
            if err <= 1.0 {
                tc = if last { target } else { tc + hs };
                y = y5;
                k1 = k7;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let proposed = hs * fac;
            // Keep the regular step size when the last step was only shortened
            // to land on a node.
            h = if last && err <= 1.0 { proposed.max(h) } else { proposed };
            if h < 1e-14 * tc.abs().max(1.0) {
                return Err(LabError::Construction(format!("step size underflow at t = {tc}")));
            }
        }
        out.push(y);
    }
    Ok(out)
}
