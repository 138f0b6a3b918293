use num_complex::Complex64;
use proptest::prelude::*;
use wishart_outage::discrete::{h_sequence_from_determinants, initial_h};
use wishart_outage::orthopoly::default_z_samples;
use wishart_outage::*;

fn real(n: usize, alpha: f64, lambda: f64, t: f64) -> EnsembleParams {
    EnsembleParams::real(n, alpha, lambda, t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn mapping_round_trip(nt in 1usize..12, nr in 1usize..12, snr in 1e-3f64..1e3) {
        let e = channel_to_ensemble(&ChannelConfig::new(nt, nr, snr).unwrap(), Complex64::new(0.5, 0.0));
        prop_assert_eq!(e.alpha as usize + e.n, nt.max(nr));
        prop_assert_eq!(e.n, nt.min(nr));
        prop_assert!((e.t - nt as f64 / snr).abs() <= 1e-15 * e.t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn mgf_at_zero_is_one(n in 1usize..7, alpha in 0.0f64..3.0, t in 0.2f64..6.0) {
        prop_assert_eq!(mgf_hankel(&real(n, alpha, 0.0, t), &Precision::default()).unwrap(), Complex64::new(1.0, 0.0));
        let m = mgf_sigma(&real(n, alpha, 0.0, t), &SigmaControl::default(), &Precision::default()).unwrap();
        prop_assert_eq!((m.theorem1, m.theorem2), (1.0, 1.0));
    }

    #[test]
    fn norms_multiply_to_determinant(alpha in 0.0f64..3.0, lambda in -0.5f64..2.0, t in 0.2f64..6.0) {
        let prec = Precision::default();
        let p = real(5, alpha, lambda, t);
        let state = compute_ortho_state(5, &p, &prec).unwrap();
        let sum: f64 = state.h_f64()[..5].iter().map(|h| h.ln()).sum();
        let det = hankel_logdet(&p, &prec).unwrap().log_det.re;
        prop_assert!((sum - det).abs() <= 1e-10 * det.abs().max(1.0));
        prop_assert!(state.h_f64().iter().all(|h| *h > 0.0));
        prop_assert!(state.b_f64()[1..].iter().all(|b| *b > 0.0));
    }

    #[test]
    fn coefficient_relations_close(alpha in 0.0f64..3.0, lambda in -0.5f64..2.0, t in 0.2f64..6.0) {
        let p = real(4, alpha, lambda, t);
        let state = compute_ortho_state(5, &p, &Precision::default()).unwrap();
        let report = verify_identities(&state, &default_z_samples(&p), 1e-8).unwrap();
        prop_assert!(report.max_for("BetanRelation") <= 1e-8);
        prop_assert!(report.max_for("RSum=RSumb") <= 1e-8);
    }

    #[test]
    fn sigma_form_from_orthogonal_polynomials(n in 1usize..6, alpha in 0.0f64..3.0, lambda in -0.5f64..2.0, t in 0.2f64..6.0) {
        prop_assume!(lambda.abs() > 1e-3);
        let r = sigma_residual(&real(n, alpha, lambda, t), &[t], &Precision::default()).unwrap();
        prop_assert!(r.max_jimbo_pv() <= 1e-7, "{:?}", r);
        prop_assert!(r.max_pvyt() <= 1e-6, "{:?}", r);
        prop_assert!(r.max_linear_system() <= 1e-7, "{:?}", r);
    }

    #[test]
    fn discrete_residual_on_exact_triples(alpha in 0.0f64..3.0, lambda in -0.5f64..2.0, t in 0.2f64..6.0) {
        let p = real(1, alpha, lambda, t);
        let h = h_sequence_from_determinants(6, &p, &Precision::default()).unwrap();
        for n in 2..6 {
            let r = discrete_sigma_residual(h[n - 2], h[n - 1], h[n], t, n, &p.with_n(n)).unwrap();
            prop_assert!(r <= 1e-7, "n={} r={}", n, r);
        }
    }

    #[test]
    fn seed_is_log_derivative_of_first_moment(alpha in 0.0f64..3.0, lambda in -0.5f64..2.0, t in 0.5f64..6.0) {
        let prec = Precision::default();
        let p = real(1, alpha, lambda, t);
        let (h1, _) = initial_h(&p, &prec).unwrap();
        let step = 1e-4 * t;
        let mu = |s: f64| moment(0, &p.with_t(s), &prec).unwrap().re;
        let fd = t * (mu(t + step) - mu(t - step)) / (2.0 * step) / mu(t);
        prop_assert!((h1 - fd).abs() <= 1e-7 * h1.abs().max(1e-3), "{} vs {}", h1, fd);
    }

    #[test]
    fn toda_holds(n in 1usize..5, alpha in 0.0f64..3.0, lambda in -0.5f64..2.0, t in 0.2f64..6.0) {
        let c = toda_residual(n, &real(n, alpha, lambda, t), &Precision::default()).unwrap();
        prop_assert!(c.residual <= 1e-6, "{:?}", c);
    }

    #[test]
    fn monte_carlo_is_reproducible(seed in any::<u64>(), nt in 1usize..4, nr in 1usize..4) {
        let cfg = ChannelConfig::new(nt, nr, 3.0).unwrap();
        let a = mc_mgf(&cfg, 0.7, 20_000, seed).unwrap();
        let b = mc_mgf(&cfg, 0.7, 20_000, seed).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        let o1 = mc_outage(&cfg, 1.0, 20_000, seed).unwrap();
        let o2 = mc_outage(&cfg, 1.0, 20_000, seed).unwrap();
        prop_assert_eq!(o1, o2);
    }
}

#[test]
fn gil_pelaez_cdf_is_monotone() {
    let cfg = ChannelConfig::new(2, 3, 5.0).unwrap();
    let rates: Vec<f64> = (1..=30).map(|k| 0.2 * k as f64).collect();
    let out = outage_gil_pelaez_many(&cfg, &rates, &InversionControl::default()).unwrap();
    for w in out.windows(2) {
        assert!(w[1].p_out >= w[0].p_out - 1e-8, "{w:?}");
    }
    assert!(out.iter().all(|r| (0.0..=1.0).contains(&r.p_out)));
}
