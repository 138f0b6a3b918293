//! Double-precision quadrature rules: Gauss–Legendre, Gauss–Kronrod 7/15,
//! and a semi-infinite tail rule.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// The 15 Kronrod abscissae mapped to `[a, b]`, in increasing order.
pub fn gk15_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [0.0; 15];
    for i in 0..7 {
        out[i] = c - h * XGK[i];
        out[14 - i] = c + h * XGK[i];
    }
    out[7] = c;
    out
}

/// Combines values at [`gk15_nodes`] into the Kronrod estimate and a
/// QUADPACK-style error estimate.
pub fn gk15_combine(a: f64, b: f64, values: &[f64; 15]) -> (f64, f64) {
    let h = 0.5 * (b - a);
    let mut kronrod = WGK[7] * values[7];
    let mut gauss = WG[3] * values[7];
    for i in 0..7 {
        let pair = values[i] + values[14 - i];
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    let diff = ((kronrod - gauss) * h).abs();
    let err = if diff == 0.0 { 0.0 } else { (200.0 * diff).powf(1.5).min(diff) };
    (kronrod * h, err.max(f64::EPSILON * (kronrod * h).abs()))
}

/// Single-panel Gauss–Kronrod 15 with error estimate.
pub fn gk15<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64) -> Result<(f64, f64)> {
    let nodes = gk15_nodes(a, b);
    let mut values = [0.0; 15];
    for (v, x) in values.iter_mut().zip(nodes) {
        *v = f(x)?;
    }
    Ok(gk15_combine(a, b, &values))
}

/// Adaptive bisection with GK15 panels until the summed error is below
/// `abs_tol + rel_tol * |I|`.
pub fn gk15_adaptive<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<(f64, f64)> {
    let mut panels = vec![(a, b, gk15(&mut f, a, b)?)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2 .0).sum();
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol + rel_tol * total.abs() {
            return Ok((total, err));
        }
        if panels.len() >= max_panels {
            return Err(Error::NonConvergence {
                what: "adaptive Gauss-Kronrod quadrature",
                estimate: err,
                tolerance: abs_tol + rel_tol * total.abs(),
            });
        }
        let (idx, _) = panels.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)).expect("non-empty");
        let (lo, hi, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        panels.push((lo, mid, gk15(&mut f, lo, mid)?));
        panels.push((mid, hi, gk15(&mut f, mid, hi)?));
    }
}

/// `∫_{x0}^∞ g(x) dx` for `g` decaying like `x^{-2}`, via `u = x0 / x`
/// and a Gauss–Kronrod rule on `u ∈ [0, 1]`; the endpoint `u = 0` is never
/// evaluated.
pub fn tail_integral<F: FnMut(f64) -> Result<f64>>(mut g: F, x0: f64) -> Result<(f64, f64)> {
    gk15(
        |u| {
            let x = x0 / u;
            Ok(g(x)? * x0 / (u * u))
        },
        0.0,
        1.0,
    )
}
