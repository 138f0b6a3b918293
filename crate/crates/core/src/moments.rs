//! Moments `μ_k(t, λ) = ∫_0^∞ x^{k+α} (x+t)^λ e^{-x} dx` to working precision.
//!
//! The integral is evaluated with a double-exponential substitution
//! `x = exp(τ - e^{-τ})` and the trapezoidal rule in `τ`. Halving the step
//! reuses every previous node, so the levels `n, 2n, 4n, ...` cost no more
//! than the finest one, and the difference of the last two levels is the
//! reported error. Node data that does not depend on `(t, λ)` is cached per
//! thread, as are the logarithms `ln(x + t)` for recently used `t`.
//!
//! For `|Im λ|` large the factor `(x+t)^λ` oscillates many times while the
//! moments themselves are tiny, so the real axis is replaced by the ray
//! `x e^{±iπ/4}` on which that factor decays.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_complex::{Complex, Complex64};
use num_traits::Zero;

use crate::ensemble::{EnsembleParams, Precision};
use crate::error::{Error, Result};
use crate::mp::{working_bits, Mp, PrecisionGuard};

/// Maximum number of step halvings after the initial level.
const MAX_LEVEL: usize = 4;

/// Moments `μ_0..μ_K` with per-entry absolute error estimates.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub params: EnsembleParams,
    pub values: Vec<Complex<Mp>>,
    pub err_abs: Vec<f64>,
    pub precision: Precision,
}

impl MomentTable {
    pub fn kmax(&self) -> usize {
        self.values.len() - 1
    }

    /// Real part of `μ_k`, the whole value when λ is real.
    pub fn real(&self, k: usize) -> &Mp {
        &self.values[k].re
    }

    pub fn to_f64(&self) -> Vec<Complex64> {
        self.values.iter().map(|v| Complex64::new(v.re.to_f64(), v.im.to_f64())).collect()
    }
}

/// A single moment rounded to double precision.
pub fn moment(k: usize, params: &EnsembleParams, prec: &Precision) -> Result<Complex64> {
    let table = moment_table(k, params, prec)?;
    let _guard = PrecisionGuard::digits(prec.digits);
    Ok(table.to_f64()[k])
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct NodeKey {
    alpha_bits: u64,
    kmax_bucket: usize,
    lambda_bucket: i64,
    /// Decay rate of `e^{-x}` along the integration ray, as bits.
    decay_bits: u64,
    bits: usize,
    base_nodes: usize,
}

struct Node {
    x: Mp,
    weight: Mp,
}

struct NodeSet {
    tau_min: f64,
    width: f64,
    base_nodes: usize,
    alpha: f64,
    /// `levels[0]` holds `τ_min + j h`, level `l > 0` the nodes new at step `h / 2^l`.
    levels: Vec<Vec<Node>>,
    /// `ln(x + t)` per level, keyed by the bit pattern of `t`.
    logs: HashMap<u64, Vec<Vec<Mp>>>,
}

thread_local! {
    static NODE_CACHE: RefCell<HashMap<NodeKey, Rc<RefCell<NodeSet>>>> = RefCell::new(HashMap::new());
}

const MAX_CACHED_SETS: usize = 32;
const MAX_CACHED_SHIFTS: usize = 64;

impl NodeSet {
    fn new(key: &NodeKey, alpha: f64, digits: u32) -> NodeSet {
        let target = f64::from(digits + 5) * std::f64::consts::LN_10 + 10.0;
        // Left end: x^{α+1} e^{-τ} must be negligible, i.e. (α+1) e^{-τ} + τ ≥ target.
        let mut tau_min = -((target) / (alpha + 1.0)).ln();
        for _ in 0..3 {
            tau_min = -((target + tau_min.abs()) / (alpha + 1.0)).ln();
        }
        tau_min = (tau_min * 8.0).floor() / 8.0 - 0.25;
        // Right end: x^K e^{-cx} below its peak by the target margin.
        let c = f64::from_bits(key.decay_bits);
        let k_eff = key.kmax_bucket as f64 + alpha.max(0.0) + 2.0 + key.lambda_bucket.max(0) as f64;
        let peak = k_eff * (k_eff / c).ln() - k_eff;
        let mut x = (k_eff / c).max(1.0);
        while k_eff * x.ln() - c * x > peak - target {
            x *= 1.05;
        }
        let tau_max = (x.ln() * 8.0).ceil() / 8.0 + 0.25;
        NodeSet {
            tau_min,
            width: tau_max - tau_min,
            base_nodes: key.base_nodes,
            alpha,
            levels: Vec::new(),
            logs: HashMap::new(),
        }
    }

    fn step(&self, level: usize) -> Mp {
        Mp::from_f64(self.width) / Mp::from(self.base_nodes << level)
    }

    fn ensure_level(&mut self, level: usize) {
        let alpha1 = Mp::from_f64(self.alpha + 1.0);
        let tau0 = Mp::from_f64(self.tau_min);
        while self.levels.len() <= level {
            let l = self.levels.len();
            let h = self.step(l);
            let indices: Vec<usize> = if l == 0 {
                (0..=self.base_nodes).collect()
            } else {
                (0..(self.base_nodes << (l - 1))).map(|j| 2 * j + 1).collect()
            };
            let nodes = indices
                .into_iter()
                .map(|j| {
                    let tau = &tau0 + &(&h * Mp::from(j));
                    let em = (-&tau).exp();
                    let lnx = &tau - &em;
                    let x = lnx.exp();
                    let weight = (&(&alpha1 * &lnx) - &x).exp() * (em + 1.0);
                    Node { x, weight }
                })
                .collect();
            self.levels.push(nodes);
        }
    }

    fn ensure_logs(&mut self, t: f64, level: usize) {
        if self.logs.len() >= MAX_CACHED_SHIFTS && !self.logs.contains_key(&t.to_bits()) {
            self.logs.clear();
        }
        let tm = Mp::from_f64(t);
        let entry = self.logs.entry(t.to_bits()).or_default();
        while entry.len() <= level {
            let l = entry.len();
            entry.push(self.levels[l].iter().map(|n| (&n.x + &tm).ln()).collect());
        }
    }
}

fn node_set(params: &EnsembleParams, kmax: usize, decay: f64, prec: &Precision) -> Rc<RefCell<NodeSet>> {
    let key = NodeKey {
        alpha_bits: params.alpha.to_bits(),
        kmax_bucket: kmax.div_ceil(8) * 8,
        lambda_bucket: params.lambda.re.ceil() as i64,
        decay_bits: decay.to_bits(),
        bits: working_bits(),
        base_nodes: prec.quad_nodes,
    };
    NODE_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        if cache.len() >= MAX_CACHED_SETS && !cache.contains_key(&key) {
            cache.clear();
        }
        cache.entry(key).or_insert_with(|| Rc::new(RefCell::new(NodeSet::new(&key, params.alpha, prec.digits)))).clone()
    })
}

/// How `(x + t)^λ` is evaluated at a node.
enum Deformation {
    None,
    Integer(usize),
    Real(Mp),
    Complex(Mp, Mp),
}

impl Deformation {
    /// `λ + shift` for real `λ`, with the shift applied exactly.
    fn shifted(lambda: f64, shift: i32) -> Deformation {
        let total = lambda + f64::from(shift);
        if lambda.fract() == 0.0 {
            Deformation::of(Complex64::new(total, 0.0))
        } else {
            Deformation::Real(Mp::from_f64(lambda) + Mp::from_i64(i64::from(shift)))
        }
    }

    fn of(lambda: Complex64) -> Deformation {
        if lambda.im != 0.0 {
            Deformation::Complex(Mp::from_f64(lambda.re), Mp::from_f64(lambda.im))
        } else if lambda.re == 0.0 {
            Deformation::None
        } else if lambda.re > 0.0 && lambda.re.fract() == 0.0 && lambda.re <= 16.0 {
            Deformation::Integer(lambda.re as usize)
        } else {
            Deformation::Real(Mp::from_f64(lambda.re))
        }
    }

    fn needs_logs(&self) -> bool {
        matches!(self, Deformation::Real(_) | Deformation::Complex(..))
    }
}

/// Moments `μ_0..μ_kmax` sharing one node set.
pub fn moment_table(kmax: usize, params: &EnsembleParams, prec: &Precision) -> Result<MomentTable> {
    params.validate()?;
    table_with(kmax, params, Deformation::of(params.lambda), prec)
}

/// Moments of `x^α (x+t)^{λ+shift} e^{-x}` for real `λ`, with the integer
/// shift added at working precision rather than in `f64`. The returned
/// table's `params.lambda` is the rounded `λ + shift`.
pub fn shifted_moment_table(kmax: usize, params: &EnsembleParams, shift: i32, prec: &Precision) -> Result<MomentTable> {
    params.validate()?;
    let lambda =
        params.real_lambda().ok_or_else(|| Error::InvalidParameter("shifted moments need real lambda".into()))?;
    let _guard = PrecisionGuard::digits(prec.digits);
    let shifted = params.with_lambda(Complex64::new(lambda + f64::from(shift), 0.0));
    table_with(kmax, &shifted, Deformation::shifted(lambda, shift), prec)
}

/// Above this `|Im λ|` the moments are integrated along a rotated ray.
const ROTATE_ABOVE: f64 = 16.0;

fn table_with(kmax: usize, params: &EnsembleParams, deform: Deformation, prec: &Precision) -> Result<MomentTable> {
    if let Deformation::Complex(re, im) = &deform {
        if params.lambda.im.abs() > ROTATE_ABOVE {
            return rotated_table(kmax, params, re, im, prec);
        }
    }
    let _guard = PrecisionGuard::digits(prec.digits);
    let set = node_set(params, kmax, 1.0, prec);
    let mut set = set.borrow_mut();
    let complex = matches!(deform, Deformation::Complex(..));
    let tm = Mp::from_f64(params.t);
    let threshold = prec.quad_threshold();

    let mut raw_re = vec![Mp::zero(); kmax + 1];
    let mut raw_im = vec![Mp::zero(); kmax + 1];
    let mut previous: Option<Vec<Complex<Mp>>> = None;
    let mut last_err = vec![f64::INFINITY; kmax + 1];

    for level in 0..=MAX_LEVEL {
        set.ensure_level(level);
        if deform.needs_logs() {
            set.ensure_logs(params.t, level);
        }
        let logs = set.logs.get(&params.t.to_bits());
        for (i, node) in set.levels[level].iter().enumerate() {
            let (fr, fi) = match &deform {
                Deformation::None => (node.weight.clone(), None),
                Deformation::Integer(p) => (&node.weight * (&node.x + &tm).powu(*p), None),
                Deformation::Real(lam) => {
                    let l = &logs.expect("logs computed")[level][i];
                    (&node.weight * (lam * l).exp(), None)
                }
                Deformation::Complex(re, im) => {
                    let l = &logs.expect("logs computed")[level][i];
                    let modulus = if re.is_zero() { node.weight.clone() } else { &node.weight * (re * l).exp() };
                    let phase = im * l;
                    (&modulus * phase.cos(), Some(&modulus * phase.sin()))
                }
            };
            let mut vr = fr;
            let mut vi = fi;
            for k in 0..=kmax {
                raw_re[k] += &vr;
                if let Some(v) = vi.as_mut() {
                    raw_im[k] += &*v;
                    if k < kmax {
                        *v *= &node.x;
                    }
                }
                if k < kmax {
                    vr *= &node.x;
                }
            }
        }
        let h = set.step(level);
        let current: Vec<Complex<Mp>> = raw_re
            .iter()
            .zip(&raw_im)
            .map(|(re, im)| Complex::new(re * &h, if complex { im * &h } else { Mp::zero() }))
            .collect();
        if converged(&current, previous.as_deref(), threshold, &mut last_err) {
            return Ok(MomentTable { params: *params, values: current, err_abs: last_err, precision: *prec });
        }
        previous = Some(current);
    }
    Err(not_converged(previous.as_deref(), &last_err, threshold))
}

fn norm64(z: &Complex<Mp>) -> f64 {
    Complex64::new(z.re.to_f64(), z.im.to_f64()).norm()
}

/// Compares two successive levels, recording the differences in `last_err`.
fn converged(current: &[Complex<Mp>], previous: Option<&[Complex<Mp>]>, threshold: f64, last_err: &mut [f64]) -> bool {
    let Some(prev) = previous else { return false };
    let mut ok = true;
    for (k, (c, p)) in current.iter().zip(prev).enumerate() {
        last_err[k] = norm64(&(c - p));
        ok &= last_err[k] <= threshold * norm64(c);
    }
    ok
}

fn not_converged(last: Option<&[Complex<Mp>]>, last_err: &[f64], threshold: f64) -> Error {
    let v = last.expect("at least one level");
    let worst = v.iter().zip(last_err).map(|(z, e)| e / norm64(z)).fold(0.0, f64::max);
    Error::NonConvergence { what: "moment quadrature", estimate: worst, tolerance: threshold }
}

/// Moments for complex `λ = a + ib` along `z = x e^{iθ}`, `θ = sign(b) π/4`.
///
/// With `Log(z+t) = L + iA` the integrand is
/// `e^{iθ(k+α+1)} x^{k+α} e^{-z} e^{aL - bA} e^{i(bL + aA)}`. Near the
/// origin `bA ≈ |b| x/(√2 t)`, so the factor that oscillated on the real
/// axis now damps the integrand on the scale where the moments live.
/// `e^{-z}` still decays on the ray, so the arc at infinity contributes
/// nothing.
fn rotated_table(kmax: usize, params: &EnsembleParams, a: &Mp, b: &Mp, prec: &Precision) -> Result<MomentTable> {
    let _guard = PrecisionGuard::digits(prec.digits);
    let set = node_set(params, kmax, std::f64::consts::FRAC_1_SQRT_2, prec);
    let mut set = set.borrow_mut();
    let threshold = prec.quad_threshold();
    let sign = if b.is_negative() { -1.0 } else { 1.0 };
    let cos = Mp::from_f64(0.5).sqrt();
    let sin = &cos * sign;
    let theta = Mp::pi() * (0.25 * sign);
    let tm = Mp::from_f64(params.t);
    let base_phase = &theta * Mp::from_f64(params.alpha + 1.0);
    let relax = 1.0 - &cos;

    let zero = || Complex::new(Mp::zero(), Mp::zero());
    let mut raw: Vec<Complex<Mp>> = (0..=kmax).map(|_| zero()).collect();
    let mut previous: Option<Vec<Complex<Mp>>> = None;
    let mut last_err = vec![f64::INFINITY; kmax + 1];
    for level in 0..=MAX_LEVEL {
        set.ensure_level(level);
        for node in &set.levels[level] {
            let xc = &node.x * &cos;
            let xs = &node.x * &sin;
            let u = &xc + &tm;
            let log_mod = (&(&u * &u) + &(&xs * &xs)).ln() * 0.5;
            let arg = (&xs / &u).atan();
            // node.weight carries e^{-x}; the ray only needs e^{-x cos θ}.
            let modulus = &node.weight * (&(&(&node.x * &relax) + &(a * &log_mod)) - &(b * &arg)).exp();
            let phase = &(&(&base_phase - &xs) + &(b * &log_mod)) + &(a * &arg);
            let mut v = Complex::new(&modulus * phase.cos(), &modulus * phase.sin());
            for (k, acc) in raw.iter_mut().enumerate() {
                acc.re += &v.re;
                acc.im += &v.im;
                if k < kmax {
                    v = Complex::new(&(&v.re * &xc) - &(&v.im * &xs), &(&v.re * &xs) + &(&v.im * &xc));
                }
            }
        }
        let h = set.step(level);
        let current: Vec<Complex<Mp>> = raw.iter().map(|z| Complex::new(&z.re * &h, &z.im * &h)).collect();
        if converged(&current, previous.as_deref(), threshold, &mut last_err) {
            return Ok(MomentTable { params: *params, values: current, err_abs: last_err, precision: *prec });
        }
        previous = Some(current);
    }
    Err(not_converged(previous.as_deref(), &last_err, threshold))
}
