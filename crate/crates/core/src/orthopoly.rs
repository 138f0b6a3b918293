//! Monic orthogonal polynomials of the deformed Laguerre weight, their
//! ladder coefficients, and numerical checks of the compatibility
//! conditions they satisfy.
//!
//! Everything is extracted from one `L D Lᵀ` factorization of the moment
//! matrix: the pivots are the squared norms `h_n`, and the rows of `L⁻¹` are
//! the monomial coefficients of `P_0, P_1, ...`.

use num_complex::{Complex, Complex64};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensemble::{EnsembleParams, Precision};
use crate::error::{Error, Result};
use crate::linalg::{hankel_matrix, ldl};
use crate::moments::{moment_table, shifted_moment_table};
use crate::mp::{Mp, PrecisionGuard};

/// Recurrence data for `P_0..P_{n_max}` (and `P_{n_max+1}`'s coefficients).
///
/// `b[0]` is stored as zero; `small_r[0] = 0` by convention.
#[derive(Debug, Clone)]
pub struct OrthoState {
    pub params: EnsembleParams,
    pub n_max: usize,
    pub precision: Precision,
    pub h: Vec<Mp>,
    pub a: Vec<Mp>,
    pub b: Vec<Mp>,
    pub p1: Vec<Mp>,
    /// `poly_coeffs[k][i]` is the coefficient of `x^i` in `P_k`, for `k ≤ n_max + 1`.
    pub poly_coeffs: Vec<Vec<Mp>>,
    /// `R_n`, the residue of `A_n` at `z = -t`.
    pub big_r: Vec<Mp>,
    /// `r_n`, the residue of `B_n` at `z = -t`.
    pub small_r: Vec<Mp>,
}

impl OrthoState {
    pub fn lambda(&self) -> f64 {
        self.params.lambda.re
    }

    pub fn guard(&self) -> PrecisionGuard {
        PrecisionGuard::digits(self.precision.digits)
    }

    fn seq(v: &[Mp]) -> Vec<f64> {
        v.iter().map(Mp::to_f64).collect()
    }

    pub fn h_f64(&self) -> Vec<f64> {
        Self::seq(&self.h)
    }
    pub fn a_f64(&self) -> Vec<f64> {
        Self::seq(&self.a)
    }
    pub fn b_f64(&self) -> Vec<f64> {
        Self::seq(&self.b)
    }
    pub fn p1_f64(&self) -> Vec<f64> {
        Self::seq(&self.p1)
    }
    pub fn big_r_f64(&self) -> Vec<f64> {
        Self::seq(&self.big_r)
    }
    pub fn small_r_f64(&self) -> Vec<f64> {
        Self::seq(&self.small_r)
    }

    /// `H_n = n(n+α+λ) - β_n - t r_n` at working precision.
    pub fn sigma_h(&self, n: usize) -> Mp {
        let _g = self.guard();
        let nf = n as f64;
        Mp::from_f64(nf) * (Mp::from_f64(nf) + Mp::from_f64(self.params.alpha) + Mp::from_f64(self.lambda()))
            - &self.b[n]
            - &self.small_r[n] * self.params.t
    }
}

/// Builds the recurrence data for `n ≤ n_max` (real λ only).
pub fn compute_ortho_state(n_max: usize, params: &EnsembleParams, prec: &Precision) -> Result<OrthoState> {
    let lambda = params
        .real_lambda()
        .ok_or_else(|| Error::InvalidParameter("orthogonal polynomial data requires real lambda".into()))?;
    let size = n_max + 2;
    let table = moment_table(2 * size - 2, params, prec)?;
    let _guard = PrecisionGuard::digits(prec.digits);
    let mu: Vec<Mp> = table.values.iter().map(|v| v.re.clone()).collect();
    let f = ldl(&hankel_matrix(&mu, size))?;
    let coeffs = unit_lower_inverse(&f.l);

    let t = Mp::from_f64(params.t);
    let h: Vec<Mp> = f.d[..=n_max].to_vec();
    let p1: Vec<Mp> = (0..size).map(|k| if k == 0 { Mp::zero() } else { coeffs[k][k - 1].clone() }).collect();
    let mut a = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let c = &coeffs[n];
        let mut s = Mp::zero();
        for i in 0..=n {
            for j in 0..=n {
                s += &(&(&c[i] * &c[j]) * &mu[i + j + 1]);
            }
        }
        let inner = s / &h[n];
        let from_p1 = &p1[n] - &p1[n + 1];
        let scale = inner.abs().to_f64() + p1[n].abs().to_f64() + p1[n + 1].abs().to_f64();
        let gap = (&inner - &from_p1).abs().to_f64();
        if gap > prec.tol_rel * scale.max(1.0) {
            return Err(Error::IdentityViolation {
                name: format!("p1({n}) - p1({}) = alpha_{n}", n + 1),
                residual: gap / scale.max(1.0),
                tolerance: prec.tol_rel,
            });
        }
        a.push(inner);
    }
    let mut b = vec![Mp::zero()];
    for n in 1..=n_max {
        b.push(&h[n] / &h[n - 1]);
    }
    let lam = Mp::from_f64(lambda);
    let big_r = (0..=n_max)
        .map(|n| (Mp::from_f64(2.0 * n as f64 + 1.0) + Mp::from_f64(params.alpha) + &lam - &a[n]) / &t)
        .collect();
    let small_r = (0..=n_max).map(|n| if n == 0 { Mp::zero() } else { -(&p1[n] + &b[n]) / &t }).collect();
    Ok(OrthoState { params: *params, n_max, precision: *prec, h, a, b, p1, poly_coeffs: coeffs, big_r, small_r })
}

/// Rows of `L⁻¹` for unit lower-triangular `L`.
fn unit_lower_inverse(l: &[Vec<Mp>]) -> Vec<Vec<Mp>> {
    let n = l.len();
    let mut inv = vec![vec![Mp::zero(); n]; n];
    for k in 0..n {
        inv[k][k] = Mp::one();
        for i in (0..k).rev() {
            let mut s = Mp::zero();
            for j in i + 1..=k {
                s += &(&inv[k][j] * &l[j][i]);
            }
            inv[k][i] = -s;
        }
    }
    inv
}

/// `(R_n, r_n)` for `n ≤ n_max`, read from the recurrence coefficients.
pub fn auxiliary_quantities(state: &OrthoState) -> (Vec<f64>, Vec<f64>) {
    let _g = state.guard();
    (state.big_r_f64(), state.small_r_f64())
}

/// `(R_n, r_n)` from their defining integrals
/// `R_n = (λ/h_n) ∫ P_n² (x+t)^{λ-1} x^α e^{-x} dx` and
/// `r_n = (λ/h_{n-1}) ∫ P_n P_{n-1} (x+t)^{λ-1} x^α e^{-x} dx`.
pub fn auxiliary_integrals(state: &OrthoState) -> Result<(Vec<Mp>, Vec<Mp>)> {
    let lambda = state.lambda();
    let n_max = state.n_max;
    let _g = state.guard();
    if lambda == 0.0 {
        return Ok((vec![Mp::zero(); n_max + 1], vec![Mp::zero(); n_max + 1]));
    }
    let table = shifted_moment_table(2 * n_max, &state.params, -1, &state.precision)?;
    let _g = state.guard();
    let nu: Vec<Mp> = table.values.iter().map(|v| v.re.clone()).collect();
    let lam = Mp::from_f64(lambda);
    let bilinear = |p: &[Mp], q: &[Mp]| {
        let mut s = Mp::zero();
        for (i, pi) in p.iter().enumerate() {
            for (j, qj) in q.iter().enumerate() {
                s += &(&(pi * qj) * &nu[i + j]);
            }
        }
        s
    };
    let mut big = Vec::with_capacity(n_max + 1);
    let mut small = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let c = &state.poly_coeffs[n][..=n];
        big.push(&lam * &bilinear(c, c) / &state.h[n]);
        if n == 0 {
            small.push(Mp::zero());
        } else {
            let d = &state.poly_coeffs[n - 1][..n];
            small.push(&lam * &bilinear(c, d) / &state.h[n - 1]);
        }
    }
    Ok((big, small))
}

/// Residues of the rational ladder coefficients
/// `A_n(z) = (1-R_n)/z + R_n/(z+t)` and `B_n(z) = -(n+r_n)/z + r_n/(z+t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderCoefficients {
    pub n: usize,
    pub res_zero_a: Complex64,
    pub res_t_a: Complex64,
    pub res_zero_b: Complex64,
    pub res_t_b: Complex64,
}

impl LadderCoefficients {
    pub fn a_at(&self, z: Complex64, t: f64) -> Complex64 {
        self.res_zero_a / z + self.res_t_a / (z + t)
    }

    pub fn b_at(&self, z: Complex64, t: f64) -> Complex64 {
        self.res_zero_b / z + self.res_t_b / (z + t)
    }
}

pub fn ladder_coeffs(n: usize, state: &OrthoState) -> LadderCoefficients {
    let _g = state.guard();
    let big = state.big_r[n].to_f64();
    let small = state.small_r[n].to_f64();
    let c = |x: f64| Complex64::new(x, 0.0);
    LadderCoefficients {
        n,
        res_zero_a: c(1.0 - big),
        res_t_a: c(big),
        res_zero_b: c(-(n as f64 + small)),
        res_t_b: c(small),
    }
}

/// One identity evaluated at one `(n, z)`.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub identity: String,
    pub n: usize,
    pub z: Option<Complex64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct IdentityReport {
    pub entries: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    /// Largest residual among identities whose name starts with `prefix`.
    pub fn max_for(&self, prefix: &str) -> f64 {
        self.entries.iter().filter(|e| e.identity.starts_with(prefix)).map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&IdentityResidual> {
        self.entries.iter().max_by(|a, b| a.residual.total_cmp(&b.residual))
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.entries.iter().map(|e| e.identity.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

/// `|Σ terms| / Σ |terms|`, zero when every term vanishes.
fn relative_sum_real(terms: &[Mp]) -> f64 {
    let scale: f64 = terms.iter().map(|x| x.abs().to_f64()).sum();
    let total: Mp = terms.iter().cloned().sum();
    if scale == 0.0 {
        0.0
    } else {
        total.abs().to_f64() / scale
    }
}

type Cmp = Complex<Mp>;

fn cabs(z: &Cmp) -> f64 {
    Complex64::new(z.re.to_f64(), z.im.to_f64()).norm()
}

fn relative_sum_complex(terms: &[Cmp]) -> f64 {
    let scale: f64 = terms.iter().map(cabs).sum();
    let total = terms.iter().cloned().fold(Cmp::zero(), |a, b| a + b);
    if scale == 0.0 {
        0.0
    } else {
        cabs(&total) / scale
    }
}

/// Default sample points: eight on a circle of radius `max(2t, 4N)` and four
/// pseudo-random points in the right half-plane.
pub fn default_z_samples(params: &EnsembleParams) -> Vec<Complex64> {
    let radius = (2.0 * params.t).max(4.0 * params.n as f64);
    let mut pts: Vec<Complex64> =
        (0..8).map(|k| Complex64::from_polar(radius, std::f64::consts::PI * (2.0 * k as f64 + 0.5) / 8.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2a11);
    for _ in 0..4 {
        pts.push(Complex64::new(rng.random_range(0.2..4.0), rng.random_range(-3.0..3.0)));
    }
    pts
}

/// Residuals of the ladder-operator identities and the coefficient
/// relations for `n ≤ n_max - 1`. `R_n` and `r_n` come from their defining
/// integrals, so none of the relations holds by construction.
pub fn identity_report(state: &OrthoState, z_samples: &[Complex64]) -> Result<IdentityReport> {
    if state.n_max < 2 {
        return Err(Error::InvalidParameter("identity checks need n_max >= 2".into()));
    }
    let t = state.params.t;
    for z in z_samples {
        if z.norm() < 1e-12 || (z + t).norm() < 1e-12 {
            return Err(Error::InvalidParameter(format!("sample point {z} lies on a pole")));
        }
    }
    let (big_int, small_int) = auxiliary_integrals(state)?;
    let _g = state.guard();
    let alpha = Mp::from_f64(state.params.alpha);
    let lam = Mp::from_f64(state.lambda());
    let tm = Mp::from_f64(t);
    let top = state.n_max - 1;
    let mut report = IdentityReport::default();
    let mut push = |name: &str, n: usize, z: Option<Complex64>, residual: f64| {
        report.entries.push(IdentityResidual { identity: name.to_string(), n, z, residual });
    };

    let big = &big_int;
    let small = &small_int;
    let beta = &state.b;
    let one = Mp::one();
    let nn = |n: usize| Mp::from(n);

    for n in 0..=top {
        let r_n = &small[n];
        let r_next = &small[n + 1];
        let rr = &big[n];
        // Coefficient matching in S1.
        push(
            "S1Diff1",
            n,
            None,
            relative_sum_real(&[
                Mp::from(2 * n + 1),
                r_next.clone(),
                r_n.clone(),
                alpha.clone(),
                -(&state.a[n] * &(&one - rr)),
            ]),
        );
        push(
            "S1Diff2",
            n,
            None,
            relative_sum_real(&[r_next.clone(), r_n.clone(), -lam.clone(), rr * &(&tm + &state.a[n])]),
        );
        push(
            "AlphanRelation",
            n,
            None,
            relative_sum_real(&[state.a[n].clone(), -Mp::from(2 * n + 1), -alpha.clone(), -lam.clone(), &tm * rr]),
        );
        if n > 0 {
            push("p1Relation", n, None, relative_sum_real(&[state.p1[n].clone(), beta[n].clone(), &tm * r_n]));
        }
        if n == 0 {
            continue;
        }
        let rprev = &big[n - 1];
        let npr = &nn(n) + r_n;
        let sum_r: Mp = big[..n].iter().cloned().sum();
        push(
            "S2Diff1",
            n,
            None,
            relative_sum_real(&[&npr * &npr, &alpha * &npr, -(&(&beta[n] * &(&one - rr)) * &(&one - rprev))]),
        );
        let cross = &(&(&one - rprev) * rr) + &(&(&one - rr) * rprev);
        push(
            "S2Diff2a",
            n,
            None,
            relative_sum_real(&[
                nn(n),
                -sum_r.clone(),
                r_n * &(&(&(&lam - &alpha) - &tm) - &(&npr * 2.0)) / &tm,
                &nn(n) * &(&lam - &tm) / &tm,
                -(&beta[n] * &cross / &tm),
            ]),
        );
        push(
            "S2Diff2b",
            n,
            None,
            relative_sum_real(&[
                sum_r.clone(),
                r_n * &(&(&(&tm + &alpha) - &lam) + &(&npr * 2.0)) / &tm,
                -(&nn(n) * &lam / &tm),
                &beta[n] * &cross / &tm,
            ]),
        );
        push("S2Diff3", n, None, relative_sum_real(&[r_n * r_n, -(&lam * r_n), -(&(&beta[n] * rr) * rprev)]));
        push(
            "RnBnCond",
            n,
            None,
            relative_sum_real(&[
                &beta[n] * &(rr + rprev),
                -beta[n].clone(),
                Mp::from(n * n) + &alpha * &nn(n),
                r_n * &(&(&alpha + &lam) + &nn(2 * n)),
            ]),
        );
        push("BetanRelation", n, None, betan_relation_residual(n, rr, r_n, &beta[n], &alpha, &lam));
        let delta = &nn(n) * &(&(&nn(n) + &alpha) + &lam);
        push("RSum", n, None, relative_sum_real(&[&tm * &sum_r, -delta.clone(), beta[n].clone(), &tm * r_n]));
        push("RSumb", n, None, relative_sum_real(&[&tm * &sum_r, -delta.clone(), -state.p1[n].clone()]));
        push("RSum=RSumb", n, None, relative_sum_real(&[-beta[n].clone(), -(&tm * r_n), -state.p1[n].clone()]));
    }

    for &z64 in z_samples {
        let z = Cmp::new(Mp::from_f64(z64.re), Mp::from_f64(z64.im));
        let zt = Cmp::new(&z.re + &tm, z.im.clone());
        let inv_z = Cmp::one() / z.clone();
        let inv_zt = Cmp::one() / zt;
        let scal = |x: &Mp| Cmp::new(x.clone(), Mp::zero());
        let a_at = |n: usize| scal(&(&one - &big[n])) * inv_z.clone() + scal(&big[n]) * inv_zt.clone();
        let b_at = |n: usize| scal(&-(&nn(n) + &small[n])) * inv_z.clone() + scal(&small[n]) * inv_zt.clone();
        let vprime = Cmp::one() - scal(&alpha) * inv_z.clone() - scal(&lam) * inv_zt.clone();
        let poly = |n: usize| horner(&state.poly_coeffs[n][..=n], &z);
        let dpoly = |n: usize| {
            let d: Vec<Mp> = (1..=n).map(|i| &state.poly_coeffs[n][i] * &Mp::from(i)).collect();
            horner(&d, &z)
        };
        let mut a_sum = Cmp::zero();
        for n in 0..=top {
            let (an, bn, bnext) = (a_at(n), b_at(n), b_at(n + 1));
            let zm = z.clone() - scal(&state.a[n]);
            push(
                "S1",
                n,
                Some(z64),
                relative_sum_complex(&[bnext.clone(), bn.clone(), -(zm.clone() * an.clone()), vprime.clone()]),
            );
            let lower = if n == 0 { Cmp::zero() } else { scal(&beta[n]) * a_at(n - 1) };
            push(
                "S2",
                n,
                Some(z64),
                relative_sum_complex(&[
                    Cmp::one(),
                    zm.clone() * bnext.clone(),
                    -(zm * bn.clone()),
                    -(scal(&beta[n + 1]) * a_at(n + 1)),
                    lower.clone(),
                ]),
            );
            let prod = if n == 0 { Cmp::zero() } else { lower.clone() * an.clone() };
            push(
                "S2'",
                n,
                Some(z64),
                relative_sum_complex(&[bn.clone() * bn.clone(), vprime.clone() * bn.clone(), a_sum.clone(), -prod]),
            );
            if n > 0 {
                let (pn, pm) = (poly(n), poly(n - 1));
                push(
                    "Ladder.lowering",
                    n,
                    Some(z64),
                    relative_sum_complex(&[
                        dpoly(n),
                        bn.clone() * pn.clone(),
                        -(scal(&beta[n]) * an.clone() * pm.clone()),
                    ]),
                );
                push(
                    "Ladder.raising",
                    n,
                    Some(z64),
                    relative_sum_complex(&[dpoly(n - 1), -((bn.clone() + vprime.clone()) * pm), a_at(n - 1) * pn]),
                );
            }
            a_sum = a_sum + an;
        }
    }
    Ok(report)
}

fn horner(coeffs: &[Mp], z: &Cmp) -> Cmp {
    coeffs.iter().rev().fold(Cmp::zero(), |acc, c| acc * z.clone() + Cmp::new(c.clone(), Mp::zero()))
}

/// Residual of `β_n (1 - R_n) = r_n(2n+α+λ) + (r_n² - λ r_n)/R_n + n(n+α)`;
/// the `0/0` term is taken as zero when `λ = 0`.
fn betan_relation_residual(n: usize, big: &Mp, small: &Mp, beta: &Mp, alpha: &Mp, lam: &Mp) -> f64 {
    let predicted = betan_relation(n, big, small, alpha, lam);
    relative_sum_real(&[predicted, -beta.clone()])
}

/// `β_n` from `(R_n, r_n)`.
pub fn betan_relation<T: crate::mp::Scalar>(n: usize, big: &T, small: &T, alpha: &T, lam: &T) -> T {
    let nf = T::of(n as f64);
    let q = if lam.is_zero() && big.is_zero() {
        T::zero()
    } else {
        (small.clone() * small.clone() - lam.clone() * small.clone()) / big.clone()
    };
    let two_n = T::of(2.0 * n as f64);
    (small.clone() * (two_n + alpha.clone() + lam.clone()) + q + nf.clone() * (nf + alpha.clone()))
        / (T::one() - big.clone())
}

/// Checks every identity at tolerance `tol`, returning the report or the
/// worst violation.
pub fn verify_identities(state: &OrthoState, z_samples: &[Complex64], tol: f64) -> Result<IdentityReport> {
    let report = identity_report(state, z_samples)?;
    if let Some(w) = report.worst() {
        if w.residual > tol {
            let at = w.z.map(|z| format!(" at z = {z}")).unwrap_or_default();
            return Err(Error::IdentityViolation {
                name: format!("{} (n = {}){at}", w.identity, w.n),
                residual: w.residual,
                tolerance: tol,
            });
        }
    }
    Ok(report)
}
