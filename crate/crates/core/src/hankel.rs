//! Hankel determinants of the moment matrix and the determinant-route MGF.

use num_complex::{Complex, Complex64};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::ensemble::{EnsembleParams, Precision};
use crate::error::{Error, Result};
use crate::linalg::{hankel_matrix, ldl, lu_pivots};
use crate::moments::moment_table;
use crate::mp::{Mp, PrecisionGuard};

/// Largest factor by which the working digits may be raised.
const MAX_DIGIT_FACTOR: u32 = 4;

/// `log D_N` with the conditioning seen during factorization.
#[derive(Debug, Clone, Serialize)]
pub struct HankelEvaluation {
    pub params: EnsembleParams,
    pub log_det: Complex64,
    pub cond_estimate: f64,
    pub precision: Precision,
}

/// Log-determinant of the `N × N` moment matrix, raising the working
/// precision while the pivot spread leaves fewer than `tol_rel` digits.
pub fn hankel_logdet(params: &EnsembleParams, prec: &Precision) -> Result<HankelEvaluation> {
    let mut current = *prec;
    loop {
        let eval = logdet_at(params, &current)?;
        let lost = eval.cond_estimate * 10f64.powf(-f64::from(current.digits));
        if lost <= prec.tol_rel || current.digits >= prec.digits * MAX_DIGIT_FACTOR {
            return Ok(eval);
        }
        current = current.with_digits(current.digits * 2);
    }
}

fn logdet_at(params: &EnsembleParams, prec: &Precision) -> Result<HankelEvaluation> {
    let n = params.n;
    let table = moment_table(2 * n - 2, params, prec)?;
    let _guard = PrecisionGuard::digits(prec.digits);
    let (log_det, cond) = if params.real_lambda().is_some() {
        let re: Vec<Mp> = table.values.iter().map(|v| v.re.clone()).collect();
        let f = ldl(&hankel_matrix(&re, n))?;
        let logs: Vec<f64> = f.d.iter().map(|d| d.ln().to_f64()).collect();
        (Complex64::new(logs.iter().sum(), 0.0), spread(&logs))
    } else {
        let (pivots, swaps) = lu_pivots(hankel_matrix(&table.values, n))?;
        let mut log_mod = Vec::with_capacity(n);
        let mut phase = if swaps % 2 == 1 { std::f64::consts::PI } else { 0.0 };
        for p in &pivots {
            log_mod.push((p.norm_sqr().ln() / 2.0).to_f64());
            phase += p.im.to_f64().atan2(p.re.to_f64());
        }
        (Complex64::new(log_mod.iter().sum(), phase), spread(&log_mod))
    };
    Ok(HankelEvaluation { params: *params, log_det, cond_estimate: cond, precision: *prec })
}

fn spread(log_pivots: &[f64]) -> f64 {
    let max = log_pivots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = log_pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min).exp().max(1.0)
}

/// `log D_N[w_Lag] = Σ_{j<N} [ln Γ(j+1) + ln Γ(α+j+1)]`.
pub fn laguerre_ref_logdet(n: usize, alpha: f64) -> f64 {
    let base = if alpha.fract() == 0.0 && alpha <= 170.0 {
        (2..=alpha as usize).map(|i| (i as f64).ln()).sum()
    } else {
        ln_gamma(alpha + 1.0)
    };
    let mut total = 0.0;
    let mut log_fact = 0.0;
    let mut log_shifted = base;
    for j in 0..n {
        if j > 0 {
            log_fact += (j as f64).ln();
            log_shifted += (alpha + j as f64).ln();
        }
        total += log_fact + log_shifted;
    }
    total
}

/// `M̃(λ) = t^{-Nλ} D_N(t, λ) / D_N[w_Lag]`.
pub fn mgf_hankel(params: &EnsembleParams, prec: &Precision) -> Result<Complex64> {
    if params.lambda == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let eval = hankel_logdet(params, prec)?;
    let log =
        -params.lambda * (params.n as f64) * params.t.ln() + eval.log_det - laguerre_ref_logdet(params.n, params.alpha);
    let value = log.exp();
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(Error::NonConvergence { what: "determinant-route MGF", estimate: log.re, tolerance: 700.0 });
    }
    Ok(value)
}

/// `log D_1, ..., log D_{n_max}` (real λ) from one factorization.
pub fn logdet_sequence(params: &EnsembleParams, n_max: usize, prec: &Precision) -> Result<Vec<f64>> {
    let table = moment_table(2 * n_max - 2, params, prec)?;
    let _guard = PrecisionGuard::digits(prec.digits);
    let re: Vec<Mp> = table.values.iter().map(|v: &Complex<Mp>| v.re.clone()).collect();
    let f = ldl(&hankel_matrix(&re, n_max))?;
    let mut acc = 0.0;
    Ok(f.d
        .iter()
        .map(|d| {
            acc += d.ln().to_f64();
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn real(n: usize, alpha: f64, lambda: f64, t: f64) -> EnsembleParams {
        EnsembleParams::real(n, alpha, lambda, t).unwrap()
    }

    #[test]
    fn determinant_examples() {
        let prec = Precision::default();
        let one = hankel_logdet(&real(1, 1.5, 0.7, 2.0), &prec).unwrap();
        let mu0 = crate::moments::moment(0, &real(1, 1.5, 0.7, 2.0), &prec).unwrap().re;
        assert!((one.log_det.re - mu0.ln()).abs() < 1e-14);
        let two = hankel_logdet(&real(2, 0.0, 1.0, 1.0), &prec).unwrap();
        assert!((two.log_det.re - 7f64.ln()).abs() < 1e-14);
        assert!(two.cond_estimate >= 1.0);
        for t in [0.5, 3.0] {
            let three = hankel_logdet(&real(3, 0.0, 0.0, t), &prec).unwrap();
            assert!((three.log_det.re - 4f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_determinant() {
        assert_eq!(laguerre_ref_logdet(1, 0.0), 0.0);
        assert!((laguerre_ref_logdet(2, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((laguerre_ref_logdet(3, 0.0) - 4f64.ln()).abs() < 1e-15);
        // α = 2.5, N = 2: Γ(3.5) Γ(4.5) = (15/8)(105/16) π
        let e = (15.0 / 8.0 * 105.0 / 16.0 * std::f64::consts::PI).ln();
        assert!((laguerre_ref_logdet(2, 2.5) - e).abs() < 1e-14);
    }

    #[test]
    fn mgf_examples() {
        let prec = Precision::default();
        assert_eq!(mgf_hankel(&real(3, 1.0, 0.0, 2.0), &prec).unwrap().re, 1.0);
        let v = mgf_hankel(&real(1, 0.0, 1.0, 3.0), &prec).unwrap();
        assert!((v.re - 4.0 / 3.0).abs() < 1e-14 && v.im == 0.0);
        let v = mgf_hankel(&real(2, 0.0, 1.0, 1.0), &prec).unwrap();
        assert!((v.re - 7.0).abs() < 1e-13);
    }

    #[test]
    fn lambda_zero_matches_reference_for_all_sizes() {
        let prec = Precision::default();
        for n in 1..=8 {
            for alpha in [0.0, 1.0, 2.5] {
                let e = hankel_logdet(&real(n, alpha, 0.0, 0.7), &prec).unwrap();
                let r = laguerre_ref_logdet(n, alpha);
                assert!((e.log_det.re - r).abs() <= 1e-10 * r.abs().max(1.0), "n={n} α={alpha}");
            }
        }
    }

    #[test]
    fn complex_route_agrees_with_real_route_on_real_axis() {
        // A tiny imaginary part forces the pivoted complex factorization.
        let prec = Precision::default();
        let p = real(4, 1.0, 0.5, 2.0);
        let a = hankel_logdet(&p, &prec).unwrap().log_det;
        let b = hankel_logdet(&p.with_lambda(Complex64::new(0.5, 1e-30)), &prec).unwrap().log_det;
        assert!((a - b).norm() < 1e-13);
    }

    #[test]
    fn sequence_matches_individual_determinants() {
        let prec = Precision::default();
        let p = real(1, 2.5, -0.3, 0.3);
        let seq = logdet_sequence(&p, 6, &prec).unwrap();
        for (i, v) in seq.iter().enumerate() {
            let e = hankel_logdet(&p.with_n(i + 1), &prec).unwrap().log_det.re;
            assert!((v - e).abs() < 1e-12 * e.abs().max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn characteristic_function_bounded(omega in -30.0f64..30.0, t in 0.2f64..5.0, n in 1usize..4) {
            let prec = Precision::new(30, 100, 1e-10).unwrap();
            let p = EnsembleParams::new(n, 1.0, Complex64::new(0.0, omega), t).unwrap();
            let phi = mgf_hankel(&p, &prec).unwrap();
            prop_assert!(phi.norm() <= 1.0 + 1e-12);
            let conj = mgf_hankel(&p.with_lambda(Complex64::new(0.0, -omega)), &prec).unwrap();
            prop_assert!((phi - conj.conj()).norm() < 1e-12);
        }

        #[test]
        fn log_convex_in_lambda(l in -0.5f64..1.5, t in 0.3f64..5.0) {
            let prec = Precision::new(30, 100, 1e-10).unwrap();
            let h = 0.1;
            let f = |x: f64| mgf_hankel(&real(3, 1.0, x, t), &prec).unwrap().re.ln();
            prop_assert!(f(l - h) - 2.0 * f(l) + f(l + h) >= -1e-10);
        }
    }
}
