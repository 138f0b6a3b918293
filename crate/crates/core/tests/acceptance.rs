//! Acceptance criteria A1-A10. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line even when an earlier one fails.

use std::time::Instant;

use num_complex::Complex64;
use wishart_outage::discrete::h_sequence_from_determinants;
use wishart_outage::orthopoly::default_z_samples;
use wishart_outage::*;

const NS: [usize; 5] = [1, 2, 3, 4, 6];
const ALPHAS: [f64; 3] = [0.0, 1.0, 2.5];
const LAMBDAS: [f64; 3] = [-0.3, 0.5, 1.0];
const TS: [f64; 4] = [0.3, 1.0, 2.0, 5.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn real(n: usize, alpha: f64, lambda: f64, t: f64) -> EnsembleParams {
    EnsembleParams::real(n, alpha, lambda, t).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `(α, λ, t)` triples of the grid.
fn shapes() -> impl Iterator<Item = (f64, f64, f64)> {
    ALPHAS.into_iter().flat_map(|a| LAMBDAS.into_iter().flat_map(move |l| TS.into_iter().map(move |t| (a, l, t))))
}

fn a1(prec: &Precision) -> Result<Outcome> {
    let ctrl = SigmaControl::default();
    let mut worst = (0.0f64, String::new());
    for n in NS {
        for (a, l, t) in shapes() {
            let p = real(n, a, l, t);
            let h = mgf_hankel(&p, prec)?.re;
            let s = mgf_sigma(&p, &ctrl, prec)?;
            let gap = rel(s.theorem2, h).max(rel(s.theorem1, h)).max(rel(s.theorem1, s.theorem2));
            if gap > worst.0 {
                worst = (gap, format!("N={n} a={a} l={l} t={t}"));
            }
        }
    }
    Ok(outcome(worst.0 <= 1e-6, format!("max pairwise rel err {:.2e} at {}", worst.0, worst.1)))
}

fn ladder_reports(prec: &Precision) -> Result<Vec<IdentityReport>> {
    shapes()
        .map(|(a, l, t)| {
            let p = real(6, a, l, t);
            let state = compute_ortho_state(7, &p, prec)?;
            orthopoly::identity_report(&state, &default_z_samples(&p))
        })
        .collect()
}

fn a2(reports: &[IdentityReport]) -> Outcome {
    let max = |name: &str| reports.iter().map(|r| r.max_for(name)).fold(0.0, f64::max);
    let (s1, s2, s2p) = (max("S1"), max("S2"), max("S2'"));
    let ladder = max("Ladder.");
    let worst = s1.max(s2).max(s2p).max(ladder);
    outcome(
        worst <= 1e-8,
        format!("S1 {s1:.1e}, S2/S2' {:.1e}, ladder operators {ladder:.1e} over n<=6, 12 z points", s2.max(s2p)),
    )
}

fn a3(prec: &Precision) -> Result<Outcome> {
    let (mut jimbo, mut pvyt) = (0.0f64, 0.0f64);
    for n in NS {
        for a in ALPHAS {
            for l in LAMBDAS {
                let r = sigma_residual(&real(n, a, l, 1.0), &TS, prec)?;
                jimbo = jimbo.max(r.max_jimbo_pv());
                pvyt = pvyt.max(r.max_pvyt());
            }
        }
    }
    Ok(outcome(jimbo <= 1e-7 && pvyt <= 1e-6, format!("sigma-form {jimbo:.1e}, Painleve V in y {pvyt:.1e}")))
}

fn a4(reports: &[IdentityReport]) -> Outcome {
    let sums = reports.iter().map(|r| r.max_for("RSum=RSumb")).fold(0.0, f64::max);
    let beta = reports.iter().map(|r| r.max_for("BetanRelation")).fold(0.0, f64::max);
    outcome(sums <= 1e-8 && beta <= 1e-8, format!("sum rules {sums:.1e}, beta_n closure {beta:.1e}"))
}

fn a5(prec: &Precision) -> Result<Outcome> {
    let (mut residual, mut ladder) = (0.0f64, 0.0f64);
    for (a, l, t) in shapes() {
        let p = real(1, a, l, t);
        let exact = h_sequence_from_determinants(8, &p, prec)?;
        for n in 1..=7 {
            let prev = if n == 1 { 0.0 } else { exact[n - 2] };
            let r = discrete_sigma_residual(prev, exact[n - 1], exact[n], t, n, &p.with_n(n))?;
            residual = residual.max(r);
        }
        let run = discrete_ladder(8, &p, prec)?;
        for n in 1..=8 {
            ladder = ladder.max((run.h(n) - exact[n - 1]).abs() / exact[n - 1].abs());
        }
    }
    Ok(outcome(
        residual <= 1e-7 && ladder <= 1e-5,
        format!("residual on exact triples {residual:.1e} (N<=7), recursion vs determinants {ladder:.1e} (N<=8)"),
    ))
}

fn a6(prec: &Precision) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for n in 1..=4 {
        for (a, l, t) in shapes() {
            worst = worst.max(toda_residual(n, &real(n, a, l, t), prec)?.residual);
        }
    }
    Ok(outcome(worst <= 1e-6, format!("max residual {worst:.1e}")))
}

fn a7(prec: &Precision) -> Result<Outcome> {
    let mut pass = true;
    let mut worst_z = 0.0f64;
    let mut slowest = 0.0f64;
    for (nt, nr) in [(2, 2), (2, 4)] {
        for snr in [1.0, 10.0] {
            for l in [0.5, 1.0] {
                let cfg = ChannelConfig::new(nt, nr, snr)?;
                let start = Instant::now();
                let (m, se) = mc_mgf(&cfg, l, 1_000_000, 20_240_607)?;
                let secs = start.elapsed().as_secs_f64();
                let h = mgf_hankel(&channel_to_ensemble(&cfg, Complex64::new(l, 0.0)), prec)?.re;
                let z = (m - h).abs() / se;
                worst_z = worst_z.max(z);
                slowest = slowest.max(secs);
                pass &= z <= 3.0 && secs <= 30.0;
            }
        }
    }
    Ok(outcome(pass, format!("max |mc - hankel|/stderr {worst_z:.2}, slowest config {slowest:.1}s")))
}

fn a8() -> Result<Outcome> {
    let rates = [0.5, 1.0, 2.0, 4.0];
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut drop = 0.0f64;
    for (nt, nr) in [(2, 2), (2, 4)] {
        let cfg = ChannelConfig::new(nt, nr, 10.0)?;
        let gp = outage_gil_pelaez_many(&cfg, &rates, &InversionControl::default())?;
        let mc = mc_outage_many(&cfg, &rates, 1_000_000, 7)?;
        for (g, m) in gp.iter().zip(&mc) {
            let bound = (3.0 * m.err).max(5e-3);
            worst = worst.max((g.p_out - m.p_out).abs() / bound);
            pass &= (g.p_out - m.p_out).abs() <= bound;
        }
        for w in gp.windows(2) {
            drop = drop.max(w[0].p_out - w[1].p_out);
        }
    }
    pass &= drop <= 1e-8;
    Ok(outcome(pass, format!("max gap / allowed {worst:.2}, largest CDF decrease {drop:.1e}")))
}

fn a9(prec: &Precision) -> Result<Outcome> {
    let mut pass = true;
    let mut at_zero = 0.0f64;
    let mut logdet = 0.0f64;
    let mut suites = 0.0f64;
    for n in NS {
        for (a, _, t) in shapes() {
            let p = real(n, a, 0.0, t);
            at_zero = at_zero.max((mgf_hankel(&p, prec)?.re - 1.0).abs());
            let m = mgf_sigma(&p, &SigmaControl::default(), prec)?;
            at_zero = at_zero.max((m.theorem1 - 1.0).abs()).max((m.theorem2 - 1.0).abs());
            let reference = laguerre_ref_logdet(n, a);
            let det = hankel_logdet(&p, prec)?.log_det.re;
            // Relative error of D_N itself; log D_N[w_Lag] is 0 at N = 1, α = 0.
            logdet = logdet.max(((det - reference).exp() - 1.0).abs());
            pass &= h_from_determinants(n, &p, prec)? == 0.0;
        }
    }
    for (a, _, t) in shapes() {
        let p = real(4, a, 0.0, t);
        suites = suites.max(sigma_residual(&p, &[t], prec)?.max_residual());
        let seq = discrete_ladder(6, &p, prec)?;
        pass &= seq.h_values.iter().all(|h| *h == 0.0);
        suites = suites.max(discrete_sigma_residual(0.0, 0.0, 0.0, t, 4, &p)?);
        suites = suites.max(toda_residual(3, &p, prec)?.residual);
        let state = compute_ortho_state(7, &p, prec)?;
        suites = suites.max(verify_identities(&state, &default_z_samples(&p), 1e-8)?.max_residual());
    }
    pass &= at_zero <= 1e-12 && logdet <= 1e-10 && suites <= 1e-8;
    Ok(outcome(
        pass,
        format!("|M(0)-1| {at_zero:.1e}, logdet vs reference {logdet:.1e}, residual suites {suites:.1e}, H_N = 0"),
    ))
}

fn a10(prec: &Precision) -> Result<Outcome> {
    let mut h_err = 0.0f64;
    let mut m_err = 0.0f64;
    for t in [0.5, 1.0, 3.0] {
        let p = real(1, 0.0, 1.0, t);
        let h_exact = t / (1.0 + t);
        let m_exact = (1.0 + t) / t;
        let traj = integrate_sigma(&p, t, &SigmaControl::default(), prec)?;
        h_err = h_err
            .max(rel(traj.at(t).expect("target lies on the trajectory").h, h_exact))
            .max(rel(h_from_determinants(1, &p, prec)?, h_exact))
            .max(rel(discrete_ladder(2, &p, prec)?.h(1), h_exact));
        m_err = m_err
            .max(rel(mgf_hankel(&p, prec)?.re, m_exact))
            .max(rel(mgf_theorem2(&traj)?, m_exact))
            .max(rel(mgf_theorem1(&traj)?, m_exact));
    }
    Ok(outcome(h_err <= 1e-10 && m_err <= 1e-10, format!("H_1 rel err {h_err:.1e}, M rel err {m_err:.1e}")))
}

fn report(id: &str, started: Instant, result: Result<Outcome>) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            println!("{id} {} {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            o.pass
        }
        Err(e) => {
            println!("{id} FAIL error: {e} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    // Support `cargo test -- --list` and friends from the outer runner.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let prec = Precision::default();
    let mut all = true;
    let t = Instant::now();
    all &= report("A1", t, a1(&prec));
    let t = Instant::now();
    let reports = ladder_reports(&prec);
    match &reports {
        Ok(r) => {
            all &= report("A2", t, Ok(a2(r)));
            all &= report("A4", t, Ok(a4(r)));
        }
        Err(e) => {
            all &= report("A2", t, Err(e.clone()));
            all &= report("A4", t, Err(e.clone()));
        }
    }
    let t = Instant::now();
    all &= report("A3", t, a3(&prec));
    let t = Instant::now();
    all &= report("A5", t, a5(&prec));
    let t = Instant::now();
    all &= report("A6", t, a6(&prec));
    let t = Instant::now();
    all &= report("A7", t, a7(&prec));
    let t = Instant::now();
    all &= report("A8", t, a8());
    let t = Instant::now();
    all &= report("A9", t, a9(&prec));
    let t = Instant::now();
    all &= report("A10", t, a10(&prec));
    if !all {
        std::process::exit(1);
    }
}
