//! Dormand–Prince 5(4) with cubic Hermite dense output.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-12, atol: 1e-14, h_init: 1e-2, h_min: 1e-12, max_steps: 200_000 }
    }
}

/// Accepted steps of an integration, possibly running backwards in `t`.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.y.last().expect("solution has at least the initial point")
    }

    /// Cubic Hermite interpolation between the bracketing accepted steps.
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        let n = self.t.len();
        let (lo, hi) = (self.t[0].min(self.t[n - 1]), self.t[0].max(self.t[n - 1]));
        if t < lo - 1e-12 * lo.abs().max(1.0) || t > hi + 1e-12 * hi.abs().max(1.0) {
            return None;
        }
        if n == 1 {
            return Some(self.y[0].clone());
        }
        let forward = self.t[n - 1] > self.t[0];
        let i = self.t.windows(2).position(|w| if forward { t <= w[1] } else { t >= w[1] }).unwrap_or(n - 2);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Some(
            (0..self.y[i].len())
                .map(|k| {
                    h00 * self.y[i][k] + h10 * h * self.dy[i][k] + h01 * self.y[i + 1][k] + h11 * h * self.dy[i + 1][k]
                })
                .collect(),
        )
    }
}

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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    y.iter().enumerate().map(|(i, yi)| yi + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>()).collect()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, ctrl: &StepControl) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = f(t, &y)?;
    let mut sol = OdeSolution { t: vec![t], y: vec![y.clone()], dy: vec![k1.clone()] };
    let mut h = ctrl.h_init.min(span).max(ctrl.h_min) * dir;
    let mut steps = 0;
    while (t1 - t) * dir > 1e-14 * span.max(1.0) {
        steps += 1;
        if steps > ctrl.max_steps {
            return Err(Error::StepFailure { t, reason: format!("exceeded {} steps", ctrl.max_steps) });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let attempt = (|| -> Result<(Vec<f64>, Vec<f64>, f64)> {
            let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = f(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(t + h, &y_new)?;
            let mut err = 0.0f64;
            for i in 0..y.len() {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = ctrl.atol + ctrl.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            Ok((y_new, k7, err))
        })();
        let (y_new, k7, err) = match attempt {
            Ok(v) => v,
            Err(e @ Error::PoleProximity { .. }) if h.abs() > ctrl.h_min * 1e3 => {
                // Probe stages may overshoot near a pole; retry with a smaller step first.
                let _ = e;
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        if err <= 1.0 && err.is_finite() {
            t += h;
            y = y_new;
            k1 = k7;
            sol.t.push(t);
            sol.y.push(y.clone());
            sol.dy.push(k1.clone());
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= factor;
        }
        if h.abs() < ctrl.h_min {
            return Err(Error::StepFailure { t, reason: format!("step size {:e} below minimum", h.abs()) });
        }
    }
    Ok(sol)
}
