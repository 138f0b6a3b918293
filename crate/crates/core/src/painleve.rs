//! The coupled Riccati system for `(R_N, r_N)`, the σ-function
//! `H_N = t d/dt log D_N`, and the two integral representations of `M̃(λ)`
//! built on it.
//!
//! Integration runs downward in `t` from a seed point `t0` where `(R_N, r_N)`
//! are read off the orthogonal polynomials exactly. The piece of each
//! integral on `[t0, ∞)` is evaluated by Gauss–Kronrod in `u = t0/x` on
//! orthogonal-polynomial data.

use serde::Serialize;

use crate::ensemble::{EnsembleParams, Precision};
use crate::error::{Error, Result};
use crate::mp::{Mp, Scalar};
use crate::ode::{dopri5, OdeSolution, StepControl};
use crate::orthopoly::{betan_relation, compute_ortho_state};
use crate::quadrature::{gk15_combine, gk15_nodes};

/// `(R_N, r_N)` and everything derived from them at one `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaData<T> {
    pub t: T,
    pub big_r: T,
    pub small_r: T,
    pub beta: T,
    pub h: T,
    pub hp: T,
    /// `t H_N''`.
    pub t_hpp: T,
}

impl<T: Scalar> SigmaData<T> {
    /// `β_N` from the coefficient relation `H_N = N(N+α+λ) - β_N - t r_N`,
    /// `H_N' = -r_N` and `t H_N'' = β_N R_N - (r_N² - λ r_N)/R_N`.
    pub fn from_riccati(n: usize, alpha: f64, lam: f64, t: T, big_r: T, small_r: T) -> Self {
        let (a, l) = (T::of(alpha), T::of(lam));
        let beta = betan_relation(n, &big_r, &small_r, &a, &l);
        let h = delta_n::<T>(n, alpha, lam) - beta.clone() - t.clone() * small_r.clone();
        let hp = -small_r.clone();
        let t_hpp = beta.clone() * big_r.clone() - q_term(&big_r, &small_r, &l);
        SigmaData { t, big_r, small_r, beta, h, hp, t_hpp }
    }

    pub fn to_f64(&self) -> SigmaData<f64> {
        SigmaData {
            t: self.t.value(),
            big_r: self.big_r.value(),
            small_r: self.small_r.value(),
            beta: self.beta.value(),
            h: self.h.value(),
            hp: self.hp.value(),
            t_hpp: self.t_hpp.value(),
        }
    }
}

/// `(r² - λ r)/R`, zero in the degenerate `λ = R = 0` case.
fn q_term<T: Scalar>(big_r: &T, small_r: &T, lam: &T) -> T {
    if lam.is_zero() && big_r.is_zero() {
        T::zero()
    } else {
        (small_r.clone() * small_r.clone() - lam.clone() * small_r.clone()) / big_r.clone()
    }
}

/// `2N + α + λ`.
fn c_coef<T: Scalar>(n: usize, alpha: f64, lam: f64) -> T {
    T::of(2.0 * n as f64) + T::of(alpha) + T::of(lam)
}

/// `δ_N = N(N+α+λ)`.
fn delta_n<T: Scalar>(n: usize, alpha: f64, lam: f64) -> T {
    T::of(n as f64) * (T::of(n as f64) + T::of(alpha) + T::of(lam))
}

/// `N(N+α)`.
fn n_n_alpha<T: Scalar>(n: usize, alpha: f64) -> T {
    T::of(n as f64) * (T::of(n as f64) + T::of(alpha))
}

/// `Nλ`.
fn n_lambda<T: Scalar>(n: usize, lam: f64) -> T {
    T::of(n as f64) * T::of(lam)
}

fn relative_sum<T: Scalar>(terms: &[T]) -> f64 {
    let scale: f64 = terms.iter().map(|x| x.value().abs()).sum();
    let total = terms.iter().cloned().fold(T::zero(), |a, b| a + b);
    if scale == 0.0 {
        0.0
    } else {
        total.value().abs() / scale
    }
}

/// `dR_N/dt` and `dr_N/dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiSlope<T> {
    pub d_big_r: T,
    pub d_small_r: T,
}

/// The Riccati vector field, unguarded.
pub fn riccati_field<T: Scalar>(n: usize, alpha: f64, lam: f64, t: &T, big_r: &T, small_r: &T) -> RiccatiSlope<T> {
    let l = T::of(lam);
    let c: T = c_coef(n, alpha, lam);
    let d_big_r = (T::of(2.0) * small_r.clone() - l.clone()
        + big_r.clone() * (t.clone() + c.clone() - t.clone() * big_r.clone()))
        / t.clone();
    let q = q_term(big_r, small_r, &l);
    let d_small_r = (q.clone()
        - big_r.clone() / (T::one() - big_r.clone()) * (small_r.clone() * c + q + n_n_alpha(n, alpha)))
        / t.clone();
    RiccatiSlope { d_big_r, d_small_r }
}

/// The Riccati vector field, refusing to evaluate within `pole_guard` of
/// `R = 0` or `R = 1`.
pub fn riccati_rhs(
    small_r: f64,
    big_r: f64,
    t: f64,
    params: &EnsembleParams,
    pole_guard: f64,
) -> Result<RiccatiSlope<f64>> {
    let lam = real_nonzero_lambda(params)?;
    if t <= 0.0 {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    if big_r.abs() < pole_guard {
        return Err(Error::PoleProximity { value: big_r, guard: pole_guard });
    }
    if (1.0 - big_r).abs() < pole_guard {
        return Err(Error::PoleProximity { value: big_r, guard: pole_guard });
    }
    Ok(riccati_field(params.n, params.alpha, lam, &t, &big_r, &small_r))
}

fn real_nonzero_lambda(params: &EnsembleParams) -> Result<f64> {
    match params.real_lambda() {
        Some(l) if l != 0.0 => Ok(l),
        Some(_) => Err(Error::InvalidParameter("lambda = 0 is handled by the M = 1 short-circuit".into())),
        None => Err(Error::InvalidParameter("the Riccati routes need real lambda".into())),
    }
}

/// `y = 1 - 1/(1-R)` and its first derivative.
pub fn painleve_y<T: Scalar>(big_r: &T, d_big_r: &T) -> (T, T) {
    let one_minus = T::one() - big_r.clone();
    let y = T::one() - T::one() / one_minus.clone();
    let yp = -d_big_r.clone() / (one_minus.clone() * one_minus);
    (y, yp)
}

/// Integrand whose integral over `[t, ∞)` is `log M̃(λ)`, written in the
/// Painlevé V variable `y(s)`:
/// `[num + 4Nλ y (y-1)²] / (4 s y (y-1)²)`.
pub fn theorem1_integrand<T: Scalar>(n: usize, alpha: f64, lam: f64, s: &T, y: &T, yp: &T) -> T {
    let nf = T::of(n as f64);
    let (a, l) = (T::of(alpha), T::of(lam));
    let two = T::of(2.0);
    let four = T::of(4.0);
    let s_a = s.clone() + a.clone();
    let y2 = y.clone() * y.clone();
    let y3 = y2.clone() * y.clone();
    let y4 = y2.clone() * y2.clone();
    let ym1 = y.clone() - T::one();
    let sy = s.clone() * yp.clone();
    let num = l.clone() * l.clone()
        + two.clone() * l.clone() * (s_a.clone() - l.clone()) * y.clone()
        + (four.clone() * nf.clone() * s.clone() + s_a.clone() * s_a.clone()
            - two.clone() * (s.clone() + two.clone() * a.clone()) * l.clone()
            + l.clone() * l.clone())
            * y2
        - two * (T::of(2.0) * nf.clone() * s.clone() + a.clone() * (s_a - l.clone())) * y3
        + a.clone() * a * y4
        - sy.clone() * sy
        + four.clone() * nf * l * y.clone() * ym1.clone() * ym1.clone();
    num / (four * s.clone() * y.clone() * ym1.clone() * ym1)
}

/// Seed values `(R_N, r_N)` at `t0` from the orthogonal polynomials.
pub fn initial_conditions(params: &EnsembleParams, t0: f64, prec: &Precision) -> Result<(f64, f64)> {
    real_nonzero_lambda(params)?;
    let state = compute_ortho_state(params.n, &params.with_t(t0), prec)?;
    let _g = state.guard();
    Ok((state.big_r[params.n].to_f64(), state.small_r[params.n].to_f64()))
}

/// `SigmaData` from the orthogonal polynomials of the weight at `params.t`,
/// with no differentiation in `t` anywhere.
pub fn sigma_point_from_ortho(params: &EnsembleParams, prec: &Precision) -> Result<SigmaData<Mp>> {
    let lam = params.real_lambda().ok_or_else(|| Error::InvalidParameter("sigma data needs real lambda".into()))?;
    let n = params.n;
    let state = compute_ortho_state(n, params, prec)?;
    let _g = state.guard();
    Ok(SigmaData::from_riccati(
        n,
        params.alpha,
        lam,
        Mp::from_f64(params.t),
        state.big_r[n].clone(),
        state.small_r[n].clone(),
    ))
}

/// Default seed point `max(2t, t+1)`. Downward integration amplifies local
/// errors roughly like a power of `t0/t`, so the span is kept short in
/// `log t`.
pub fn default_t0(t_target: f64) -> f64 {
    (2.0 * t_target).max(t_target + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaControl {
    pub step: StepControl,
    /// Seed point; `None` means [`default_t0`].
    pub t0: Option<f64>,
    /// Largest acceptable error estimate for each tail integral.
    pub tail_budget: f64,
    pub max_tail_panels: usize,
}

impl Default for SigmaControl {
    fn default() -> Self {
        SigmaControl {
            step: StepControl { rtol: 1e-13, atol: 1e-15, ..StepControl::default() },
            t0: None,
            tail_budget: 1e-9,
            max_tail_panels: 6,
        }
    }
}

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

/// `∫_{t0}^∞ (H_N(x) - Nλ)/x dx` and `∫_{t0}^∞ f(y, y', x) dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaTails {
    pub theorem2: Estimate,
    pub theorem1: Estimate,
    pub nodes: usize,
}

/// Tails on `[t0, ∞)` by adaptive GK15 panels in `u = t0/x ∈ (0, 1]`,
/// sharing one orthogonal-polynomial evaluation per node between both
/// integrands.
pub fn sigma_tails(params: &EnsembleParams, t0: f64, ctrl: &SigmaControl, prec: &Precision) -> Result<SigmaTails> {
    let lam = real_nonzero_lambda(params)?;
    let n = params.n;
    let mut nodes = 0;
    let mut panel = |a: f64, b: f64| -> Result<([f64; 2], [f64; 2])> {
        let us = gk15_nodes(a, b);
        let mut g2 = [0.0; 15];
        let mut g1 = [0.0; 15];
        for (i, u) in us.iter().enumerate() {
            let x = t0 / u;
            let jac = t0 / (u * u);
            let d = sigma_point_from_ortho(&params.with_t(x), prec)?;
            let _g = crate::mp::PrecisionGuard::digits(prec.digits);
            let xm = Mp::from_f64(x);
            let slope = riccati_field(n, params.alpha, lam, &xm, &d.big_r, &d.small_r);
            let (y, yp) = painleve_y(&d.big_r, &slope.d_big_r);
            g2[i] = ((&d.h - n_lambda::<Mp>(n, lam)) / &xm).to_f64() * jac;
            g1[i] = theorem1_integrand(n, params.alpha, lam, &xm, &y, &yp).to_f64() * jac;
            nodes += 1;
        }
        let (v2, e2) = gk15_combine(a, b, &g2);
        let (v1, e1) = gk15_combine(a, b, &g1);
        Ok(([v2, v1], [e2, e1]))
    };
    let mut panels = vec![(0.0, 1.0, panel(0.0, 1.0)?)];
    loop {
        let total = |k: usize| -> Estimate {
            Estimate { value: panels.iter().map(|p| p.2 .0[k]).sum(), err: panels.iter().map(|p| p.2 .1[k]).sum() }
        };
        let (theorem2, theorem1) = (total(0), total(1));
        let worst = theorem2.err.max(theorem1.err);
        if worst <= ctrl.tail_budget {
            return Ok(SigmaTails { theorem2, theorem1, nodes });
        }
        if panels.len() >= ctrl.max_tail_panels {
            return Err(Error::TailEstimateTooLarge { estimate: worst, budget: ctrl.tail_budget });
        }
        let idx = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1[0].max(x.1 .2 .1[1]).total_cmp(&y.1 .2 .1[0].max(y.1 .2 .1[1])))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        panels.push((lo, mid, panel(lo, mid)?));
        panels.push((mid, hi, panel(mid, hi)?));
    }
}

/// Samples of the Riccati solution between `t0` and `t_target`.
///
/// The integrated state is `[R_N, r_N, J, K]` with
/// `J' = (H_N - Nλ)/t` and `K' = f(y, y', t)`, both zero at `t0`.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaTrajectory {
    pub params: EnsembleParams,
    pub t0: f64,
    pub t_target: f64,
    /// Decreasing accepted step points, `t0` first.
    pub grid: Vec<f64>,
    pub big_r: Vec<f64>,
    pub small_r: Vec<f64>,
    pub beta: Vec<f64>,
    pub h: Vec<f64>,
    pub hp: Vec<f64>,
    pub tails: SigmaTails,
    #[serde(skip)]
    solution: OdeSolution,
}

impl SigmaTrajectory {
    /// Dense output at any `t` in `[t_target, t0]`.
    pub fn at(&self, t: f64) -> Option<SigmaData<f64>> {
        let s = self.solution.interpolate(t)?;
        let lam = self.params.lambda.re;
        Some(SigmaData::from_riccati(self.params.n, self.params.alpha, lam, t, s[0], s[1]))
    }

    /// `∫_{t0}^{t} (H_N - Nλ)/x dx` and `∫_{t0}^{t} f dx` at `t_target`.
    pub fn running_integrals(&self) -> (f64, f64) {
        let last = self.solution.last();
        (last[2], last[3])
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// `(log M̃)` from both integral representations at an intermediate
    /// `t`, reusing the tails at `t0`.
    pub fn log_mgf_at(&self, t: f64) -> Option<(f64, f64)> {
        let s = self.solution.interpolate(t)?;
        Some((s[2] - self.tails.theorem2.value, -s[3] + self.tails.theorem1.value))
    }
}

/// Integrates the Riccati pair from `t0` down to `t_target`, carrying the
/// two running integrals along.
pub fn integrate_sigma(
    params: &EnsembleParams,
    t_target: f64,
    ctrl: &SigmaControl,
    prec: &Precision,
) -> Result<SigmaTrajectory> {
    let lam = real_nonzero_lambda(params)?;
    let t0 = ctrl.t0.unwrap_or_else(|| default_t0(t_target));
    if !(t_target > 0.0 && t_target < t0) {
        return Err(Error::InvalidParameter(format!("need 0 < t_target < t0, got t_target={t_target}, t0={t0}")));
    }
    let (n, alpha) = (params.n, params.alpha);
    let guard = prec.pole_guard();
    let (r0, s0) = initial_conditions(params, t0, prec)?;
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let slope = riccati_rhs(y[1], y[0], t, params, guard)?;
        let d = SigmaData::from_riccati(n, alpha, lam, t, y[0], y[1]);
        let (py, pyp) = painleve_y(&y[0], &slope.d_big_r);
        Ok(vec![
            slope.d_big_r,
            slope.d_small_r,
            (d.h - n as f64 * lam) / t,
            theorem1_integrand(n, alpha, lam, &t, &py, &pyp),
        ])
    };
    let solution = dopri5(rhs, t0, &[r0, s0, 0.0, 0.0], t_target, &ctrl.step)?;
    let tails = sigma_tails(params, t0, ctrl, prec)?;
    let mut traj = SigmaTrajectory {
        params: *params,
        t0,
        t_target,
        grid: solution.t.clone(),
        big_r: Vec::new(),
        small_r: Vec::new(),
        beta: Vec::new(),
        h: Vec::new(),
        hp: Vec::new(),
        tails,
        solution,
    };
    for (t, y) in traj.solution.t.iter().zip(&traj.solution.y) {
        let d = SigmaData::from_riccati(n, alpha, lam, *t, y[0], y[1]);
        traj.big_r.push(d.big_r);
        traj.small_r.push(d.small_r);
        traj.beta.push(d.beta);
        traj.h.push(d.h);
        traj.hp.push(d.hp);
    }
    Ok(traj)
}

/// `M̃(λ) = exp(∫_∞^{t} (H_N(x) - Nλ)/x dx)` at the trajectory's end.
pub fn mgf_theorem2(traj: &SigmaTrajectory) -> Result<f64> {
    let (j, _) = traj.running_integrals();
    finite_exp(j - traj.tails.theorem2.value, "Riccati-route MGF")
}

/// `M̃(λ) = exp(∫_t^∞ f(y(s), y'(s), s) ds)` at the trajectory's end.
pub fn mgf_theorem1(traj: &SigmaTrajectory) -> Result<f64> {
    let (_, k) = traj.running_integrals();
    finite_exp(-k + traj.tails.theorem1.value, "Painleve-integral MGF")
}

fn finite_exp(log: f64, what: &'static str) -> Result<f64> {
    let v = log.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonConvergence { what, estimate: log, tolerance: 700.0 })
    }
}

/// Both ODE-route values of `M̃(λ)` at `params.t`; `λ = 0` short-circuits to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaMgf {
    pub theorem2: f64,
    pub theorem1: f64,
    pub tail_err: f64,
    pub steps: usize,
}

pub fn mgf_sigma(params: &EnsembleParams, ctrl: &SigmaControl, prec: &Precision) -> Result<SigmaMgf> {
    if params.real_lambda() == Some(0.0) {
        return Ok(SigmaMgf { theorem2: 1.0, theorem1: 1.0, tail_err: 0.0, steps: 0 });
    }
    let traj = integrate_sigma(params, params.t, ctrl, prec)?;
    Ok(SigmaMgf {
        theorem2: mgf_theorem2(&traj)?,
        theorem1: mgf_theorem1(&traj)?,
        tail_err: traj.tails.theorem2.err.max(traj.tails.theorem1.err),
        steps: traj.steps(),
    })
}

/// Residual of the σ-form
/// `(tH'')² = (tH' - H + H'(2N+α+λ) + Nλ)² - 4(tH' - H + N(N+α+λ))(H'² + λH')`.
pub fn jimbo_pv_residual<T: Scalar>(n: usize, alpha: f64, lam: f64, d: &SigmaData<T>) -> f64 {
    let l = T::of(lam);
    let base = d.t.clone() * d.hp.clone() - d.h.clone();
    let first = base.clone() + d.hp.clone() * c_coef(n, alpha, lam) + n_lambda(n, lam);
    let second = base + delta_n(n, alpha, lam);
    let third = d.hp.clone() * d.hp.clone() + l * d.hp.clone();
    relative_sum(&[d.t_hpp.clone() * d.t_hpp.clone(), -(first.clone() * first), T::of(4.0) * second * third])
}

/// Residual of the Painlevé V equation for `y = 1 - 1/(1-R_N)` with
/// parameters `(α²/2, -λ²/2, 2N+1+α+λ, -1/2)`; `y''` comes from
/// differentiating the Riccati system once more.
pub fn pvyt_residual<T: Scalar>(n: usize, alpha: f64, lam: f64, t: &T, big_r: &T, small_r: &T) -> f64 {
    let c: T = c_coef(n, alpha, lam);
    let s = riccati_field(n, alpha, lam, t, big_r, small_r);
    let (rp, sp) = (s.d_big_r, s.d_small_r);
    let g_prime = T::of(2.0) * sp
        + rp.clone() * (t.clone() + c - t.clone() * big_r.clone())
        + big_r.clone() * (T::one() - big_r.clone() - t.clone() * rp.clone());
    let rpp = (g_prime - rp.clone()) / t.clone();
    let om = T::one() - big_r.clone();
    let (y, yp) = painleve_y(big_r, &rp);
    let ypp = -rpp / (om.clone() * om.clone()) - T::of(2.0) * rp.clone() * rp / (om.clone() * om.clone() * om);
    let two = T::of(2.0);
    let ym1 = y.clone() - T::one();
    let t2 = t.clone() * t.clone();
    let terms = [
        -ypp,
        (T::of(3.0) * y.clone() - T::one()) / (two.clone() * y.clone() * ym1.clone()) * yp.clone() * yp.clone(),
        -(yp / t.clone()),
        ym1.clone() * ym1.clone() / t2.clone() * T::of(alpha) * T::of(alpha) / T::of(2.0) * y.clone(),
        -(ym1.clone() * ym1.clone() / t2 * T::of(lam) * T::of(lam) / (two.clone() * y.clone())),
        (c_coef::<T>(n, alpha, lam) + T::one()) * y.clone() / t.clone(),
        -(y.clone() * (y + T::one()) / (two * ym1)),
    ];
    relative_sum(&terms)
}

/// Residual of `2R_N = 1 + [tH'' - (2N+α+λ) r_N - N(N+α)] / [tH' - H + N(N+α+λ)]`.
pub fn rna_residual<T: Scalar>(n: usize, alpha: f64, lam: f64, d: &SigmaData<T>) -> f64 {
    rna_residual_with(n, alpha, lam, d, c_coef(n, alpha, lam))
}

fn rna_residual_with<T: Scalar>(n: usize, alpha: f64, lam: f64, d: &SigmaData<T>, coeff: T) -> f64 {
    let den = d.t.clone() * d.hp.clone() - d.h.clone() + delta_n(n, alpha, lam);
    // 2R·den = den + tH'' - c r - N(N+α)
    relative_sum(&[
        T::of(2.0) * d.big_r.clone() * den.clone(),
        -den,
        -d.t_hpp.clone(),
        coeff * d.small_r.clone(),
        n_n_alpha(n, alpha),
    ])
}

/// Residual of `2/R_N = [-tH'' + (t+2N+α+λ)H' - H + Nλ] / (H'² + λH')`.
pub fn rnb_residual<T: Scalar>(n: usize, alpha: f64, lam: f64, d: &SigmaData<T>) -> f64 {
    let l = T::of(lam);
    let c: T = c_coef(n, alpha, lam);
    let r = d.big_r.clone();
    relative_sum(&[
        T::of(2.0) * (d.hp.clone() * d.hp.clone() + l * d.hp.clone()),
        r.clone() * d.t_hpp.clone(),
        -(r.clone() * (d.t.clone() + c) * d.hp.clone()),
        r.clone() * d.h.clone(),
        -(r * n_lambda(n, lam)),
    ])
}

/// Residuals at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaResidualPoint {
    pub t: f64,
    pub jimbo_pv: f64,
    pub pvyt: f64,
    pub riccati: f64,
    pub rna: f64,
    pub rnb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaResidualReport {
    pub params: EnsembleParams,
    pub points: Vec<SigmaResidualPoint>,
}

impl SigmaResidualReport {
    pub fn max_jimbo_pv(&self) -> f64 {
        self.points.iter().map(|p| p.jimbo_pv).fold(0.0, f64::max)
    }
    pub fn max_pvyt(&self) -> f64 {
        self.points.iter().map(|p| p.pvyt).fold(0.0, f64::max)
    }
    pub fn max_riccati(&self) -> f64 {
        self.points.iter().map(|p| p.riccati).fold(0.0, f64::max)
    }
    pub fn max_linear_system(&self) -> f64 {
        self.points.iter().map(|p| p.rna.max(p.rnb)).fold(0.0, f64::max)
    }
    pub fn max_residual(&self) -> f64 {
        self.max_jimbo_pv().max(self.max_pvyt()).max(self.max_riccati()).max(self.max_linear_system())
    }
}

/// σ-form, Painlevé V, Riccati and `R_N` linear-system residuals at each
/// `t` in `t_points`, all from orthogonal-polynomial data.
///
/// The Riccati residual compares the vector field with a five-point
/// difference of `(R_N, r_N)` in `t`; every other residual uses no
/// differencing. At `λ = 0` everything vanishes identically and the
/// Painlevé V and `1/R_N` forms are degenerate, so they report zero.
pub fn sigma_residual(params: &EnsembleParams, t_points: &[f64], prec: &Precision) -> Result<SigmaResidualReport> {
    let lam = params.real_lambda().ok_or_else(|| Error::InvalidParameter("sigma residuals need real lambda".into()))?;
    let (n, alpha) = (params.n, params.alpha);
    let mut points = Vec::with_capacity(t_points.len());
    for &t in t_points {
        let p = params.with_t(t);
        p.validate()?;
        if lam == 0.0 {
            let zero = SigmaData::from_riccati(n, alpha, 0.0, t, 0.0, 0.0);
            points.push(SigmaResidualPoint {
                t,
                jimbo_pv: jimbo_pv_residual(n, alpha, 0.0, &zero),
                pvyt: 0.0,
                riccati: 0.0,
                rna: rna_residual(n, alpha, 0.0, &zero),
                rnb: 0.0,
            });
            continue;
        }
        let d = sigma_point_from_ortho(&p, prec)?;
        let riccati = riccati_fd_residual(&p, prec)?;
        let _g = crate::mp::PrecisionGuard::digits(prec.digits);
        points.push(SigmaResidualPoint {
            t,
            jimbo_pv: jimbo_pv_residual(n, alpha, lam, &d),
            pvyt: pvyt_residual(n, alpha, lam, &d.t, &d.big_r, &d.small_r),
            riccati,
            rna: rna_residual(n, alpha, lam, &d),
            rnb: rnb_residual(n, alpha, lam, &d),
        });
    }
    Ok(SigmaResidualReport { params: *params, points })
}

/// Largest relative gap between the Riccati field and a five-point
/// difference of orthogonal-polynomial `(R_N, r_N)`, step `10⁻³ t`.
fn riccati_fd_residual(params: &EnsembleParams, prec: &Precision) -> Result<f64> {
    let (n, t) = (params.n, params.t);
    let lam = params.lambda.re;
    let h = 1e-3 * t;
    let mut samples = Vec::with_capacity(4);
    for k in [-2.0, -1.0, 1.0, 2.0] {
        samples.push(sigma_point_from_ortho(&params.with_t(t + k * h), prec)?);
    }
    let centre = sigma_point_from_ortho(params, prec)?;
    let _g = crate::mp::PrecisionGuard::digits(prec.digits);
    let fd = |f: &dyn Fn(&SigmaData<Mp>) -> Mp| -> f64 {
        ((f(&samples[0]) - f(&samples[1]) * 8.0 + f(&samples[2]) * 8.0 - f(&samples[3])) / (12.0 * h)).to_f64()
    };
    let d_big = fd(&|d| d.big_r.clone());
    let d_small = fd(&|d| d.small_r.clone());
    let s = riccati_field(n, params.alpha, lam, &centre.t, &centre.big_r, &centre.small_r);
    let gap = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1e-300);
    Ok(gap(d_big, s.d_big_r.to_f64()).max(gap(d_small, s.d_small_r.to_f64())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::{hankel_logdet, mgf_hankel};

    fn real(n: usize, alpha: f64, lambda: f64, t: f64) -> EnsembleParams {
        EnsembleParams::real(n, alpha, lambda, t).unwrap()
    }

    #[test]
    fn pole_guard_rejects_degenerate_points() {
        let p = real(1, 0.0, 0.5, 1.0);
        assert!(matches!(riccati_rhs(0.0, 1e-12, 1.0, &p, 1e-8), Err(Error::PoleProximity { .. })));
        assert!(matches!(riccati_rhs(0.0, 1.0 - 1e-12, 1.0, &p, 1e-8), Err(Error::PoleProximity { .. })));
        assert!(riccati_rhs(0.1, 0.3, 1.0, &p, 1e-8).is_ok());
        assert!(matches!(riccati_rhs(0.0, 0.3, 1.0, &real(1, 0.0, 0.0, 1.0), 1e-8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn closed_form_seed() {
        // N=1, α=0, λ=1: H = t/(1+t), r = -H' = -1/(1+t)².
        let prec = Precision::default();
        let (big, small) = initial_conditions(&real(1, 0.0, 1.0, 1.0), 100.0, &prec).unwrap();
        assert!((small + 1.0 / 101.0f64.powi(2)).abs() < 1e-18);
        assert!(big > 0.0 && big < 1.0);
        assert!(initial_conditions(&real(1, 0.0, 0.0, 1.0), 100.0, &prec).is_err());
    }

    #[test]
    fn riccati_matches_finite_differences() {
        let prec = Precision::default();
        let p = real(3, 1.0, 0.5, 2.0);
        let h = 1e-4;
        let at = |t: f64| sigma_point_from_ortho(&p.with_t(t), &prec).unwrap().to_f64();
        let (lo, mid, hi) = (at(2.0 - h), at(2.0), at(2.0 + h));
        let s = riccati_field(3, 1.0, 0.5, &2.0, &mid.big_r, &mid.small_r);
        let fd_big = (hi.big_r - lo.big_r) / (2.0 * h);
        let fd_small = (hi.small_r - lo.small_r) / (2.0 * h);
        assert!((fd_big - s.d_big_r).abs() <= 1e-6 * s.d_big_r.abs());
        assert!((fd_small - s.d_small_r).abs() <= 1e-6 * s.d_small_r.abs());
        // t H'' from the exact formula against a difference of H' = -r.
        assert!((-(hi.small_r - lo.small_r) / (2.0 * h) * 2.0 - mid.t_hpp).abs() <= 1e-6 * mid.t_hpp.abs());
    }

    #[test]
    fn sigma_function_matches_log_derivative_of_determinant() {
        let prec = Precision::default();
        for p in [real(2, 1.0, 0.5, 2.0), real(3, 2.5, -0.3, 0.7)] {
            let d = sigma_point_from_ortho(&p, &prec).unwrap().to_f64();
            let h = 1e-5;
            let f = |t: f64| hankel_logdet(&p.with_t(t), &prec).unwrap().log_det.re;
            let fd = p.t * (f(p.t + h) - f(p.t - h)) / (2.0 * h);
            assert!((d.h - fd).abs() <= 1e-6 * fd.abs());
        }
    }

    #[test]
    fn theorem1_integrand_is_log_derivative() {
        let prec = Precision::default();
        let p = real(3, 1.0, 0.7, 1.5);
        let d = sigma_point_from_ortho(&p, &prec).unwrap();
        let _g = crate::mp::PrecisionGuard::digits(50);
        let s = riccati_field(3, 1.0, 0.7, &d.t, &d.big_r, &d.small_r);
        let (y, yp) = painleve_y(&d.big_r, &s.d_big_r);
        let f = theorem1_integrand(3, 1.0, 0.7, &d.t, &y, &yp);
        let expect = -(d.h.clone() - n_lambda::<Mp>(3, 0.7)) / &d.t;
        assert!(((f - &expect) / expect).abs().to_f64() < 1e-40);
    }

    #[test]
    fn closed_form_trajectory() {
        let prec = Precision::default();
        let ctrl = SigmaControl::default();
        for t in [0.5, 1.0, 3.0] {
            let p = real(1, 0.0, 1.0, t);
            let traj = integrate_sigma(&p, t, &ctrl, &prec).unwrap();
            let h = *traj.h.last().unwrap();
            assert!((h - t / (1.0 + t)).abs() <= 1e-10 * t / (1.0 + t), "t={t} H={h}");
            let exact = (1.0 + t) / t;
            assert!((mgf_theorem2(&traj).unwrap() - exact).abs() <= 1e-10 * exact);
            assert!((mgf_theorem1(&traj).unwrap() - exact).abs() <= 1e-10 * exact);
            let mid = traj.at(0.5 * (t + traj.t0)).unwrap();
            assert!((mid.h - mid.t / (1.0 + mid.t)).abs() < 1e-7);
        }
    }

    #[test]
    fn intermediate_mgf_along_the_trajectory() {
        let prec = Precision::default();
        let traj = integrate_sigma(&real(1, 0.0, 1.0, 0.5), 0.5, &SigmaControl::default(), &prec).unwrap();
        for t in [0.5, 0.8, 1.0] {
            let (l2, l1) = traj.log_mgf_at(t).unwrap();
            let want = ((1.0 + t) / t).ln();
            assert!((l2 - want).abs() < 1e-10 && (l1 - want).abs() < 1e-10, "t={t}: {l2} {l1}");
        }
        assert!(traj.log_mgf_at(0.4).is_none());
    }

    #[test]
    fn trajectory_reproduces_determinant_data() {
        let prec = Precision::default();
        let p = real(2, 0.0, 1.0, 1.0);
        let traj = integrate_sigma(&p, 1.0, &SigmaControl::default(), &prec).unwrap();
        let d = sigma_point_from_ortho(&p, &prec).unwrap().to_f64();
        let last = traj.h.len() - 1;
        assert!((traj.h[last] - d.h).abs() <= 1e-6 * d.h.abs());
        assert!((traj.big_r[last] - d.big_r).abs() <= 1e-6 * d.big_r.abs());
        assert!((traj.small_r[last] - d.small_r).abs() <= 1e-6 * d.small_r.abs());
        assert!(traj.grid.windows(2).all(|w| w[1] < w[0]));
        for (r, hp) in traj.small_r.iter().zip(&traj.hp) {
            assert_eq!(*hp, -r);
        }
    }

    #[test]
    fn routes_agree_with_hankel() {
        let prec = Precision::default();
        let p = real(2, 1.0, 0.5, 2.0);
        let m = mgf_sigma(&p, &SigmaControl::default(), &prec).unwrap();
        let h = mgf_hankel(&p, &prec).unwrap().re;
        assert!((m.theorem2 - h).abs() <= 1e-6 * h);
        assert!((m.theorem1 - h).abs() <= 1e-6 * h);
        let zero = mgf_sigma(&real(2, 1.0, 0.0, 2.0), &SigmaControl::default(), &prec).unwrap();
        assert_eq!((zero.theorem1, zero.theorem2), (1.0, 1.0));
    }

    #[test]
    fn closed_form_sigma_form() {
        // H = t/(1+t), H' = 1/(1+t)², tH'' = -2t/(1+t)³.
        for t in [0.3f64, 1.0, 4.0] {
            let d = SigmaData {
                t,
                big_r: 0.0,
                small_r: 0.0,
                beta: 0.0,
                h: t / (1.0 + t),
                hp: 1.0 / (1.0 + t).powi(2),
                t_hpp: -2.0 * t / (1.0 + t).powi(3),
            };
            assert!(jimbo_pv_residual(1, 0.0, 1.0, &d) < 1e-14);
        }
        let zero = SigmaData::from_riccati(3, 1.0, 0.0, 2.0, 0.0, 0.0);
        assert_eq!(jimbo_pv_residual(3, 1.0, 0.0, &zero), 0.0);
    }

    #[test]
    fn residuals_from_orthogonal_polynomials() {
        let prec = Precision::default();
        let report = sigma_residual(&real(3, 2.0, 0.7, 1.0), &[0.5, 1.0, 5.0], &prec).unwrap();
        assert!(report.max_jimbo_pv() <= 1e-30, "{report:?}");
        assert!(report.max_pvyt() <= 1e-30);
        assert!(report.max_linear_system() <= 1e-30);
        assert!(report.max_riccati() <= 1e-8);
        let zero = sigma_residual(&real(2, 1.0, 0.0, 1.0), &[1.0, 3.0], &prec).unwrap();
        assert_eq!(zero.max_residual(), 0.0);
    }

    #[test]
    fn displayed_rna_grouping_needs_alpha() {
        // The R_N linear system only closes with the coefficient 2N+α+λ.
        let prec = Precision::default();
        let d = sigma_point_from_ortho(&real(2, 2.5, 0.5, 1.5), &prec).unwrap();
        let _g = crate::mp::PrecisionGuard::digits(50);
        assert!(rna_residual(2, 2.5, 0.5, &d) < 1e-30);
        assert!(rna_residual_with(2, 2.5, 0.5, &d, Mp::from_f64(5.0)) > 1e-3);
    }
}
