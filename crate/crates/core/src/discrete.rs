//! The recursion in `N` satisfied by `H_N = t d/dt log D_N`, and the Toda
//! equation linking `D_{N-1}, D_N, D_{N+1}`.
//!
//! Writing `Δ²H_N = H_{N+1} - H_{N-1}`, `δ_N = N(N+α+λ)` and
//!
//! ```text
//! Q = [N(N+α)t + (t - Δ²H_N)(H_N - δ_N)] / (2N+α+λ+t - Δ²H_N)
//! ```
//!
//! (which equals `-t r_N`), the recursion reads
//! `Q² + λtQ = (δ_N - H_N + Q)(H_{N+1} - H_N)(H_N - H_{N-1})`.
//! After clearing the denominator the cubic terms in `H_{N+1}` cancel, so
//! each step is a quadratic.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::ensemble::{EnsembleParams, Precision};
use crate::error::{Error, Result};
use crate::hankel::logdet_sequence;
use crate::moments::{moment_table, shifted_moment_table};
use crate::mp::{Mp, PrecisionGuard, Scalar};
use crate::orthopoly::compute_ortho_state;
use crate::painleve::sigma_point_from_ortho;
use crate::quadrature::{gk15_combine, gk15_nodes};

fn real_lambda(params: &EnsembleParams) -> Result<f64> {
    params.real_lambda().ok_or_else(|| Error::InvalidParameter("the discrete recursion needs real lambda".into()))
}

/// `H_N(t) = N(N+α+λ) - β_N - t r_N` from the orthogonal polynomials.
pub fn h_from_determinants(n: usize, params: &EnsembleParams, prec: &Precision) -> Result<f64> {
    if real_lambda(params)? == 0.0 {
        return Ok(0.0);
    }
    Ok(sigma_point_from_ortho(&params.with_n(n), prec)?.h.to_f64())
}

/// `H_1..H_{n_max}` from one factorization.
pub fn h_sequence_from_determinants(n_max: usize, params: &EnsembleParams, prec: &Precision) -> Result<Vec<f64>> {
    if real_lambda(params)? == 0.0 {
        return Ok(vec![0.0; n_max]);
    }
    let state = compute_ortho_state(n_max, params, prec)?;
    let _g = state.guard();
    Ok((1..=n_max).map(|n| state.sigma_h(n).to_f64()).collect())
}

/// `H_1` and `H_2` from `D_1 = μ_0`, `D_2 = μ_0 μ_2 - μ_1²`, with
/// `dμ_k/dt = λ ∫ x^{α+k} (x+t)^{λ-1} e^{-x} dx`.
pub fn initial_h(params: &EnsembleParams, prec: &Precision) -> Result<(f64, f64)> {
    let (h1, h2) = initial_h_mp(params, prec)?;
    let _g = PrecisionGuard::digits(prec.digits);
    Ok((h1.to_f64(), h2.to_f64()))
}

fn initial_h_mp(params: &EnsembleParams, prec: &Precision) -> Result<(Mp, Mp)> {
    let lam = real_lambda(params)?;
    if lam == 0.0 {
        return Ok((Mp::zero(), Mp::zero()));
    }
    let mu = moment_table(2, params, prec)?;
    let nu = shifted_moment_table(2, params, -1, prec)?;
    let _g = PrecisionGuard::digits(prec.digits);
    let t = Mp::from_f64(params.t);
    let l = Mp::from_f64(lam);
    let m: Vec<Mp> = mu.values.iter().map(|v| v.re.clone()).collect();
    let dm: Vec<Mp> = nu.values.iter().map(|v| &l * &v.re).collect();
    let h1 = &t * &dm[0] / &m[0];
    let d2 = &m[0] * &m[2] - &m[1] * &m[1];
    let d2p = &dm[0] * &m[2] + &m[0] * &dm[2] - &m[1] * &dm[1] * 2.0;
    let h2 = &t * &d2p / &d2;
    Ok((h1, h2))
}

/// Pieces of the recursion at index `N`.
struct Coefficients<T> {
    c0: T,
    delta: T,
    a: T,
    lam_t: T,
}

impl<T: Scalar> Coefficients<T> {
    fn new(n: usize, t: f64, alpha: f64, lam: f64) -> Self {
        let (nf, t, alpha, lam) = (T::of(n as f64), T::of(t), T::of(alpha), T::of(lam));
        Coefficients {
            c0: T::of(2.0) * nf.clone() + alpha.clone() + lam.clone() + t.clone(),
            delta: nf.clone() * (nf.clone() + alpha.clone() + lam.clone()),
            a: nf.clone() * (nf + alpha) * t.clone(),
            lam_t: lam * t,
        }
    }
}

/// `|LHS - RHS| / max(1, |LHS|, |RHS|)` of the recursion at index `N`.
pub fn discrete_sigma_residual(
    h_prev: f64,
    h_cur: f64,
    h_next: f64,
    t: f64,
    n: usize,
    params: &EnsembleParams,
) -> Result<f64> {
    let lam = real_lambda(params)?;
    let k = Coefficients::<f64>::new(n, t, params.alpha, lam);
    let d2 = h_next - h_prev;
    let den = k.c0 - d2;
    if den.abs() <= 1e-12 * k.c0.abs().max(d2.abs()) {
        return Err(Error::DenominatorVanishes { n });
    }
    let q = (k.a + (t - d2) * (h_cur - k.delta)) / den;
    let lhs = q * q + k.lam_t * q;
    let rhs = (k.delta - h_cur + q) * (h_next - h_cur) * (h_cur - h_prev);
    Ok((lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs()))
}

/// Polynomial coefficients in increasing degree.
fn poly_mul(p: &[Mp], q: &[Mp]) -> Vec<Mp> {
    let mut out = vec![Mp::zero(); p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += &(a * b);
        }
    }
    out
}

fn poly_axpy(acc: &mut Vec<Mp>, scale: &Mp, p: &[Mp]) {
    if acc.len() < p.len() {
        acc.resize(p.len(), Mp::zero());
    }
    for (a, b) in acc.iter_mut().zip(p) {
        *a += &(scale * b);
    }
}

/// The recursion at index `N` with denominators cleared, as a polynomial in
/// `u = H_{N+1}`; degree at most 2 once the cancelling cubic term is dropped.
fn step_polynomial(h_prev: &Mp, h_cur: &Mp, t: f64, n: usize, alpha: f64, lam: f64) -> Vec<Mp> {
    let k = Coefficients::<Mp>::new(n, t, alpha, lam);
    let g = h_cur - h_prev;
    let hd = h_cur - &k.delta;
    // num = A + (t + H_{N-1} - u)(H_N - δ_N); den = c0 + H_{N-1} - u
    let num = [&k.a + &((Mp::from_f64(t) + h_prev) * &hd), -hd.clone()];
    let den = [&k.c0 + h_prev, -Mp::one()];
    let shift = [-h_cur.clone(), Mp::one()];
    let mut poly = poly_mul(&num, &num);
    poly_axpy(&mut poly, &k.lam_t, &poly_mul(&num, &den));
    poly_axpy(&mut poly, &-((&k.delta - h_cur) * &g), &poly_mul(&poly_mul(&den, &den), &shift));
    poly_axpy(&mut poly, &-g, &poly_mul(&poly_mul(&num, &den), &shift));
    let scale = poly.iter().map(|c| c.abs()).fold(Mp::zero(), Mp::max);
    let floor = &scale * ROUNDOFF_FLOOR;
    while poly.len() > 1 && poly.last().is_some_and(|c| c.abs() <= floor) {
        poly.pop();
    }
    poly
}

/// Coefficients this small relative to the largest are treated as roundoff.
const ROUNDOFF_FLOOR: f64 = 1e-30;

/// Real roots of a polynomial of degree ≤ 2, each polished by Newton steps.
fn real_roots(poly: &[Mp], n: usize) -> Result<Vec<Mp>> {
    let eval = |x: &Mp| poly.iter().rev().fold(Mp::zero(), |acc, c| acc * x + c);
    let deriv = |x: &Mp| poly.iter().enumerate().skip(1).rev().fold(Mp::zero(), |acc, (i, c)| acc * x + c * (i as f64));
    let mut roots = match poly.len() {
        0 | 1 => return Err(Error::NoRealRoot { n }),
        2 => vec![-(&poly[0] / &poly[1])],
        _ => {
            let (c, b, a) = (&poly[0], &poly[1], &poly[2]);
            let four_ac = a * c * 4.0;
            let disc = b * b - &four_ac;
            let scale = (b * b).max(four_ac.abs());
            if disc < -(scale * ROUNDOFF_FLOOR) {
                return Err(Error::NoRealRoot { n });
            }
            let sq = if disc.is_negative() { Mp::zero() } else { disc.sqrt() };
            let qq = if b.is_negative() { (b.clone() - sq) * -0.5 } else { (b.clone() + sq) * -0.5 };
            if qq.is_zero_value() {
                vec![Mp::zero(), Mp::zero()]
            } else {
                vec![&qq / a, c / &qq]
            }
        }
    };
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let d = deriv(r);
            if d.is_zero_value() {
                break;
            }
            let next = r.clone() - eval(r) / d;
            if !next.is_finite() {
                break;
            }
            *r = next;
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(roots)
}

/// One step of the recursion with its candidate roots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootChoice {
    /// Index of the value produced, `N + 1`.
    pub n_next: usize,
    pub candidates: Vec<f64>,
    pub predictor: f64,
    pub chosen: f64,
    pub reseeded: bool,
}

/// Picks the root nearest `predictor`; two roots within
/// `10⁻³ (1 + |predictor|)` of it are ambiguous.
fn select_root(
    h_prev: &Mp,
    h_cur: &Mp,
    t: f64,
    n: usize,
    params: &EnsembleParams,
    lam: f64,
    predictor: &Mp,
) -> Result<(Mp, Vec<Mp>)> {
    let poly = step_polynomial(h_prev, h_cur, t, n, params.alpha, lam);
    let candidates = real_roots(&poly, n)?;
    let pred = predictor.to_f64();
    let root_tol = 1e-3 * (1.0 + pred.abs());
    let mut by_distance: Vec<&Mp> = candidates.iter().collect();
    by_distance.sort_by(|a, b| {
        (*a - predictor).abs().partial_cmp(&(*b - predictor).abs()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let chosen = by_distance[0].clone();
    if by_distance.len() > 1 {
        let second = by_distance[1];
        let apart = (second - &chosen).abs().to_f64();
        if (second - predictor).abs().to_f64() <= root_tol && apart > 1e-12 * (1.0 + chosen.abs().to_f64()) {
            return Err(Error::AmbiguousRoot {
                n,
                roots: candidates.iter().map(Mp::to_f64).collect(),
                predictor: pred,
            });
        }
    }
    let den = Coefficients::<Mp>::new(n, t, params.alpha, lam).c0 - (&chosen - h_prev);
    if den.abs().to_f64() <= 1e-12 {
        return Err(Error::DenominatorVanishes { n });
    }
    Ok((chosen, candidates))
}

/// `H_{N+1}` from `H_{N-1}` and `H_N`: the real root nearest `predictor`
/// (default `2H_N - H_{N-1}`), solved at the working precision.
pub fn discrete_sigma_step(
    h_prev: f64,
    h_cur: f64,
    t: f64,
    n: usize,
    params: &EnsembleParams,
    predictor: Option<f64>,
) -> Result<RootChoice> {
    let lam = real_lambda(params)?;
    let predictor = predictor.unwrap_or(2.0 * h_cur - h_prev);
    if lam == 0.0 && h_prev == 0.0 && h_cur == 0.0 {
        return Ok(RootChoice { n_next: n + 1, candidates: vec![0.0], predictor, chosen: 0.0, reseeded: false });
    }
    let _g = PrecisionGuard::digits(Precision::default().digits);
    let (chosen, candidates) =
        select_root(&Mp::from_f64(h_prev), &Mp::from_f64(h_cur), t, n, params, lam, &Mp::from_f64(predictor))?;
    Ok(RootChoice {
        n_next: n + 1,
        candidates: candidates.iter().map(Mp::to_f64).collect(),
        predictor,
        chosen: chosen.to_f64(),
        reseeded: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderMethod {
    DeterminantSeeded,
    Recursion,
}

/// `H_1..H_{N_max}` at fixed `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteLadder {
    pub params: EnsembleParams,
    pub t: f64,
    pub h_values: Vec<f64>,
    pub method: Vec<LadderMethod>,
    pub root_choice_log: Vec<RootChoice>,
}

impl DiscreteLadder {
    /// `H_N`, 1-based.
    pub fn h(&self, n: usize) -> f64 {
        self.h_values[n - 1]
    }
}

/// Runs the recursion from the moment-derived `H_1, H_2` up to `n_max`.
/// When a step is ambiguous the value is taken from the determinants instead
/// and the recursion continues from there.
pub fn discrete_ladder(n_max: usize, params: &EnsembleParams, prec: &Precision) -> Result<DiscreteLadder> {
    real_lambda(params)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let lam = params.lambda.re;
    let (h1, h2) = initial_h_mp(params, prec)?;
    let _g = PrecisionGuard::digits(prec.digits);
    let mut exact_values = vec![h1, h2];
    let mut ladder = DiscreteLadder {
        params: *params,
        t: params.t,
        h_values: Vec::new(),
        method: vec![LadderMethod::DeterminantSeeded; 2],
        root_choice_log: Vec::new(),
    };
    let t = params.t;
    for n in 2..n_max {
        let hs = &exact_values;
        // Quadratic extrapolation in N once three values exist.
        let predictor =
            if n >= 3 { (&hs[n - 1] - &hs[n - 2]) * 3.0 + &hs[n - 3] } else { &hs[n - 1] * 2.0 - &hs[n - 2] };
        if lam == 0.0 {
            exact_values.push(Mp::zero());
            ladder.method.push(LadderMethod::Recursion);
            continue;
        }
        match select_root(&hs[n - 2], &hs[n - 1], t, n, &params.with_n(n), lam, &predictor) {
            Ok((chosen, candidates)) => {
                ladder.root_choice_log.push(RootChoice {
                    n_next: n + 1,
                    candidates: candidates.iter().map(Mp::to_f64).collect(),
                    predictor: predictor.to_f64(),
                    chosen: chosen.to_f64(),
                    reseeded: false,
                });
                exact_values.push(chosen);
                ladder.method.push(LadderMethod::Recursion);
            }
            Err(Error::AmbiguousRoot { roots, predictor, .. }) => {
                let state = compute_ortho_state(n + 1, params, prec)?;
                let exact = state.sigma_h(n + 1);
                let _g = PrecisionGuard::digits(prec.digits);
                ladder.root_choice_log.push(RootChoice {
                    n_next: n + 1,
                    candidates: roots,
                    predictor,
                    chosen: exact.to_f64(),
                    reseeded: true,
                });
                exact_values.push(exact);
                ladder.method.push(LadderMethod::DeterminantSeeded);
            }
            Err(e) => return Err(e),
        }
    }
    ladder.h_values = exact_values.iter().map(Mp::to_f64).collect();
    ladder.h_values.truncate(n_max);
    ladder.method.truncate(n_max);
    Ok(ladder)
}

/// `M̃(λ) = exp(-∫_t^∞ (H_N(x) - Nλ)/x dx)` with every `H_N(x)` produced by
/// the recursion from moment-derived seeds at `x`. Adaptive GK15 in
/// `u = t/x`; returns the value and the error estimate of the exponent.
pub fn mgf_discrete(params: &EnsembleParams, prec: &Precision, budget: f64) -> Result<(f64, f64)> {
    let lam = real_lambda(params)?;
    if lam == 0.0 {
        return Ok((1.0, 0.0));
    }
    let (n, t) = (params.n, params.t);
    let panel = |a: f64, b: f64| -> Result<(f64, f64)> {
        let mut g = [0.0; 15];
        for (gi, u) in g.iter_mut().zip(gk15_nodes(a, b)) {
            let x = t / u;
            let ladder = discrete_ladder(n, &params.with_t(x), prec)?;
            *gi = (ladder.h(n) - n as f64 * lam) / x * t / (u * u);
        }
        Ok(gk15_combine(a, b, &g))
    };
    let mut panels = vec![(0.0, 1.0, panel(0.0, 1.0)?)];
    loop {
        let value: f64 = panels.iter().map(|p| p.2 .0).sum();
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= budget {
            let m = (-value).exp();
            return if m.is_finite() {
                Ok((m, err))
            } else {
                Err(Error::NonConvergence { what: "discrete-route MGF", estimate: -value, tolerance: 700.0 })
            };
        }
        if panels.len() >= 16 {
            return Err(Error::TailEstimateTooLarge { estimate: err, budget });
        }
        let idx = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        panels.push((lo, mid, panel(lo, mid)?));
        panels.push((mid, hi, panel(mid, hi)?));
    }
}

/// Both sides of `d²/dt² log D̃_N = D̃_{N+1} D̃_{N-1} / D̃_N²` with
/// `D_N = t^{δ_N} D̃_N` and `D_0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TodaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// The left side is `(tH_N' - H_N + δ_N)/t²` with exact `H_N, H_N'`; the
/// right side is `t^{-2} D_{N+1} D_{N-1} / D_N²` from log-determinants.
pub fn toda_residual(n: usize, params: &EnsembleParams, prec: &Precision) -> Result<TodaCheck> {
    let lam = real_lambda(params)?;
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let t = params.t;
    let nf = n as f64;
    let delta = nf * (nf + params.alpha + lam);
    let (h, hp) = if lam == 0.0 {
        (0.0, 0.0)
    } else {
        let d = sigma_point_from_ortho(&params.with_n(n), prec)?.to_f64();
        (d.h, d.hp)
    };
    let lhs = (t * hp - h + delta) / (t * t);
    let logs = logdet_sequence(params, n + 1, prec)?;
    let log_at = |k: usize| if k == 0 { 0.0 } else { logs[k - 1] };
    let rhs = (log_at(n + 1) + log_at(n - 1) - 2.0 * log_at(n)).exp() / (t * t);
    let residual = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(TodaCheck { lhs, rhs, residual })
}
