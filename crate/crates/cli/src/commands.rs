use rayon::prelude::*;
use serde_json::Value;
use wishart_outage::discrete::h_sequence_from_determinants;
use wishart_outage::orthopoly::{default_z_samples, identity_report};
use wishart_outage::painleve::default_t0;
use wishart_outage::{
    channel_to_ensemble, compute_ortho_state, discrete_ladder, discrete_sigma_residual, integrate_sigma, mc_mgf,
    mc_outage_many, mgf_discrete, mgf_hankel, mgf_sigma, moment_table, outage_gil_pelaez_many, sigma_residual,
    toda_residual, ChannelConfig, EnsembleParams, InversionControl, Precision, PrecisionGuard, SigmaControl,
};

use crate::args::{Common, LambdaArgs, Method, Params, Route, Suite};
use crate::emit::{num, Table};
use crate::error::{CliError, Context};

/// Budget for the discrete-route tail quadrature.
const DISCRETE_BUDGET: f64 = 1e-9;

pub enum Source {
    Channel(ChannelConfig),
    Ensemble { n: usize, alpha: f64, ts: Vec<f64> },
}

impl Source {
    pub fn from_args(p: &Params) -> Result<Source, CliError> {
        if let (Some(nt), Some(nr), Some(snr)) = (p.nt, p.nr, p.snr) {
            let cfg = ChannelConfig::new(nt, nr, snr).map_err(|e| CliError::Usage(e.to_string()))?;
            return Ok(Source::Channel(cfg));
        }
        let (Some(n), Some(alpha)) = (p.n, p.alpha) else {
            return Err(CliError::Usage("give either --nt --nr --snr or --N --alpha --t".into()));
        };
        let ts = match (&p.t, &p.t_grid) {
            (Some(t), None) => vec![*t],
            (None, Some(g)) => g.0.clone(),
            _ => return Err(CliError::Usage("--N/--alpha need --t or --t-grid".into())),
        };
        for &t in &ts {
            EnsembleParams::real(n, alpha, 0.0, t).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(Source::Ensemble { n, alpha, ts })
    }

    pub fn ts(&self) -> Vec<f64> {
        match self {
            Source::Channel(cfg) => vec![channel_to_ensemble(cfg, 0.0.into()).t],
            Source::Ensemble { ts, .. } => ts.clone(),
        }
    }

    pub fn at(&self, t: f64, lambda: f64) -> EnsembleParams {
        match self {
            Source::Channel(cfg) => channel_to_ensemble(cfg, lambda.into()),
            Source::Ensemble { n, alpha, .. } => EnsembleParams { n: *n, alpha: *alpha, lambda: lambda.into(), t },
        }
    }

    fn channel(&self) -> Option<&ChannelConfig> {
        match self {
            Source::Channel(cfg) => Some(cfg),
            Source::Ensemble { .. } => None,
        }
    }
}

pub fn lambdas(l: &LambdaArgs) -> Result<Vec<f64>, CliError> {
    match (&l.lambda, &l.lambda_grid) {
        (Some(x), None) => Ok(vec![*x]),
        (None, Some(g)) => Ok(g.0.clone()),
        _ => Err(CliError::Usage("give --lambda or --lambda-grid".into())),
    }
}

fn grid_points(ts: &[f64], ls: &[f64]) -> Vec<(f64, f64)> {
    ts.iter().flat_map(|&t| ls.iter().map(move |&l| (t, l))).collect()
}

fn expand_routes(routes: &[Route]) -> Vec<Route> {
    let mut out = Vec::new();
    for r in routes {
        let add: &[Route] = if *r == Route::All {
            &[Route::Hankel, Route::OdeSigma, Route::OdeTheorem1, Route::Discrete]
        } else {
            std::slice::from_ref(r)
        };
        for a in add {
            if !out.contains(a) {
                out.push(*a);
            }
        }
    }
    out
}

pub fn mgf(src: &Source, ls: &[f64], routes: &[Route], common: &Common, prec: &Precision) -> Result<Table, CliError> {
    let routes = expand_routes(routes);
    if routes.contains(&Route::Mc) && src.channel().is_none() {
        return Err(CliError::Usage("route mc needs --nt --nr --snr".into()));
    }
    let mut cols = vec!["n", "alpha", "t", "lambda"];
    for r in &routes {
        cols.extend(match r {
            Route::Hankel => ["hankel", "hankel_cond"],
            Route::OdeSigma => ["ode_sigma", "ode_sigma_err"],
            Route::OdeTheorem1 => ["ode_theorem1", "ode_theorem1_err"],
            Route::Discrete => ["discrete", "discrete_err"],
            Route::Mc => ["mc", "mc_stderr"],
            Route::All => unreachable!("expanded above"),
        });
    }
    let mut table = Table::new(&cols);
    let rows = grid_points(&src.ts(), ls)
        .into_par_iter()
        .map(|(t, l)| -> Result<Vec<Value>, CliError> {
            let p = src.at(t, l);
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let mut row = vec![Value::from(p.n), num(p.alpha), num(p.t), num(l)];
            let needs_ode = routes.iter().any(|r| matches!(r, Route::OdeSigma | Route::OdeTheorem1));
            let ode =
                if needs_ode { Some(mgf_sigma(&p, &SigmaControl::default(), prec).ctx("painleve")?) } else { None };
            for r in &routes {
                match r {
                    Route::Hankel => {
                        let v = mgf_hankel(&p, prec).ctx("hankel")?;
                        let cond = if l == 0.0 {
                            1.0
                        } else {
                            wishart_outage::hankel_logdet(&p, prec).ctx("hankel")?.cond_estimate
                        };
                        row.extend([num(v.re), num(cond)]);
                    }
                    Route::OdeSigma => {
                        let m = ode.as_ref().expect("computed above");
                        row.extend([num(m.theorem2), num(m.tail_err * m.theorem2.abs())]);
                    }
                    Route::OdeTheorem1 => {
                        let m = ode.as_ref().expect("computed above");
                        row.extend([num(m.theorem1), num(m.tail_err * m.theorem1.abs())]);
                    }
                    Route::Discrete => {
                        let (v, err) = if l == 0.0 {
                            (1.0, 0.0)
                        } else {
                            mgf_discrete(&p, prec, DISCRETE_BUDGET).ctx("discrete")?
                        };
                        row.extend([num(v), num(err * v.abs())]);
                    }
                    Route::Mc => {
                        let cfg = src.channel().expect("checked above");
                        let (v, se) = mc_mgf(cfg, l, common.mc_samples, common.seed).ctx("mimo")?;
                        row.extend([num(v), num(se)]);
                    }
                    Route::All => unreachable!("expanded above"),
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

pub fn outage(
    src: &Source,
    rates: &[f64],
    method: Method,
    common: &Common,
    prec: &Precision,
) -> Result<Table, CliError> {
    let cfg = src.channel().ok_or_else(|| CliError::Usage("outage needs --nt --nr --snr".into()))?;
    let to_nats = if common.bits { std::f64::consts::LN_2 } else { 1.0 };
    let nats: Vec<f64> = rates.iter().map(|r| r * to_nats).collect();
    let mut cols = vec!["rate"];
    let gp = matches!(method, Method::GilPelaez | Method::Both);
    let mc = matches!(method, Method::Mc | Method::Both);
    if gp {
        cols.extend(["p_gilpelaez", "gilpelaez_err"]);
    }
    if mc {
        cols.extend(["p_mc", "mc_stderr"]);
    }
    let gp_values = if gp {
        // I > 0 almost surely, so the outage at a non-positive rate is 0.
        let positive: Vec<f64> = nats.iter().copied().filter(|r| *r > 0.0).collect();
        let ctrl = InversionControl { precision: *prec, ..InversionControl::default() };
        let solved =
            if positive.is_empty() { Vec::new() } else { outage_gil_pelaez_many(cfg, &positive, &ctrl).ctx("mimo")? };
        let mut it = solved.into_iter();
        nats.iter()
            .map(
                |r| {
                    if *r > 0.0 {
                        it.next().map(|o| (o.p_out, o.err)).expect("one result per rate")
                    } else {
                        (0.0, 0.0)
                    }
                },
            )
            .collect()
    } else {
        Vec::new()
    };
    let mc_values =
        if mc { mc_outage_many(cfg, &nats, common.mc_samples, common.seed).ctx("mimo")? } else { Vec::new() };
    let mut table = Table::new(&cols);
    for (i, r) in rates.iter().enumerate() {
        let mut row = vec![num(*r)];
        if gp {
            row.extend([num(gp_values[i].0), num(gp_values[i].1)]);
        }
        if mc {
            row.extend([num(mc_values[i].p_out), num(mc_values[i].err)]);
        }
        table.push(row);
    }
    Ok(table)
}

/// Splits a t grid into runs that each start no higher than the default seed
/// point of their lowest member, so no run integrates far across the saddle.
fn segments(mut ts: Vec<f64>) -> Vec<Vec<f64>> {
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for t in ts {
        match out.last_mut() {
            Some(seg) if t <= default_t0(seg[0]) => seg.push(t),
            _ => out.push(vec![t]),
        }
    }
    out
}

pub fn trace(src: &Source, ls: &[f64], t0: Option<f64>, prec: &Precision) -> Result<Table, CliError> {
    let ts = src.ts();
    let t_max = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let runs = match t0 {
        Some(t0) if t0 < t_max => return Err(CliError::Usage(format!("--t0 {t0} lies below the largest t {t_max}"))),
        Some(_) => vec![ts.clone()],
        None => segments(ts.clone()),
    };
    let mut table = Table::new(&[
        "lambda",
        "t",
        "h",
        "h_prime",
        "t_h_second",
        "big_r",
        "small_r",
        "beta",
        "log_mgf_theorem2",
        "log_mgf_theorem1",
    ]);
    let jobs: Vec<(f64, Vec<f64>)> = ls.iter().flat_map(|&l| runs.iter().map(move |r| (l, r.clone()))).collect();
    let blocks = jobs
        .into_par_iter()
        .map(|(l, run)| -> Result<Vec<Vec<Value>>, CliError> {
            let lo = run[0];
            let p = src.at(lo, l);
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            if l == 0.0 {
                return Ok(run
                    .iter()
                    .map(|&t| {
                        let beta = (p.n as f64) * (p.n as f64 + p.alpha);
                        vec![
                            num(l),
                            num(t),
                            num(0.0),
                            num(0.0),
                            num(0.0),
                            num(0.0),
                            num(0.0),
                            num(beta),
                            num(0.0),
                            num(0.0),
                        ]
                    })
                    .collect());
            }
            let ctrl = SigmaControl { t0: t0.or(Some(default_t0(lo))), ..SigmaControl::default() };
            let traj = integrate_sigma(&p, lo, &ctrl, prec).ctx("painleve")?;
            run.iter()
                .map(|&t| {
                    let d = traj.at(t).ok_or(CliError::Usage(format!("t = {t} outside the trajectory")))?;
                    let (l2, l1) = traj.log_mgf_at(t).expect("same range as at()");
                    Ok(vec![
                        num(l),
                        num(t),
                        num(d.h),
                        num(d.hp),
                        num(d.t_hpp),
                        num(d.big_r),
                        num(d.small_r),
                        num(d.beta),
                        num(l2),
                        num(l1),
                    ])
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    blocks.into_iter().flatten().for_each(|r| table.push(r));
    Ok(table)
}

pub struct VerifyOutcome {
    pub table: Table,
    pub all_pass: bool,
}

const LADDER_TOL: f64 = 1e-8;

/// `(t, λ, suite, check, max residual, tolerance)`.
type CheckRow = (f64, f64, &'static str, String, f64, f64);

pub fn verify(src: &Source, ls: &[f64], suites: &[Suite], prec: &Precision) -> Result<VerifyOutcome, CliError> {
    let mut table = Table::new(&["t", "lambda", "suite", "check", "max_residual", "tolerance", "pass"]);
    let blocks = grid_points(&src.ts(), ls)
        .into_par_iter()
        .map(|(t, l)| -> Result<Vec<CheckRow>, CliError> {
            let p = src.at(t, l);
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let n = p.n;
            let mut rows = Vec::new();
            for s in suites {
                match s {
                    Suite::Ladder => {
                        let state = compute_ortho_state(n.max(2) + 1, &p, prec).ctx("orthopoly")?;
                        let report = identity_report(&state, &default_z_samples(&p)).ctx("orthopoly")?;
                        for name in report.names() {
                            let worst = report
                                .entries
                                .iter()
                                .filter(|e| e.identity == name)
                                .map(|e| e.residual)
                                .fold(0.0, f64::max);
                            rows.push((t, l, "ladder", name, worst, LADDER_TOL));
                        }
                    }
                    Suite::Sigma => {
                        let r = sigma_residual(&p, &[t], prec).ctx("painleve")?;
                        rows.push((t, l, "sigma", "jimbo_pv".into(), r.max_jimbo_pv(), 1e-7));
                        rows.push((t, l, "sigma", "pvyt".into(), r.max_pvyt(), 1e-6));
                        rows.push((t, l, "sigma", "rn_linear_system".into(), r.max_linear_system(), 1e-7));
                        rows.push((t, l, "sigma", "riccati_vs_differences".into(), r.max_riccati(), 1e-6));
                    }
                    Suite::Discrete => {
                        let exact = h_sequence_from_determinants(n + 1, &p, prec).ctx("discrete")?;
                        let mut worst = 0.0f64;
                        for k in 1..=n {
                            let prev = if k == 1 { 0.0 } else { exact[k - 2] };
                            let r = discrete_sigma_residual(prev, exact[k - 1], exact[k], t, k, &p.with_n(k))
                                .ctx("discrete")?;
                            worst = worst.max(r);
                        }
                        rows.push((t, l, "discrete", "sigma_form_on_determinants".into(), worst, 1e-7));
                        let ladder = discrete_ladder(n + 1, &p, prec).ctx("discrete")?;
                        let drift = (1..=n + 1)
                            .map(|k| {
                                let e = exact[k - 1];
                                if e == 0.0 {
                                    ladder.h(k).abs()
                                } else {
                                    (ladder.h(k) - e).abs() / e.abs()
                                }
                            })
                            .fold(0.0, f64::max);
                        rows.push((t, l, "discrete", "recursion_vs_determinants".into(), drift, 1e-5));
                    }
                    Suite::Toda => {
                        let c = toda_residual(n, &p, prec).ctx("discrete")?;
                        rows.push((t, l, "toda", "toda_molecule".into(), c.residual, 1e-6));
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut all_pass = true;
    for (t, l, suite, check, res, tol) in blocks.into_iter().flatten() {
        let pass = res <= tol;
        all_pass &= pass;
        table.push(vec![num(t), num(l), Value::from(suite), Value::from(check), num(res), num(tol), Value::from(pass)]);
    }
    Ok(VerifyOutcome { table, all_pass })
}

pub fn moments(src: &Source, ls: &[f64], kmax: usize, prec: &Precision) -> Result<Table, CliError> {
    let mut table = Table::new(&["t", "lambda", "k", "mu", "mu_err_abs", "mu_decimal"]);
    let blocks = grid_points(&src.ts(), ls)
        .into_par_iter()
        .map(|(t, l)| -> Result<Vec<Vec<Value>>, CliError> {
            let p = src.at(t, l);
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let m = moment_table(kmax, &p, prec).ctx("moments")?;
            let _g = PrecisionGuard::digits(prec.digits);
            Ok((0..=kmax)
                .map(|k| {
                    vec![
                        num(t),
                        num(l),
                        Value::from(k),
                        num(m.values[k].re.to_f64()),
                        num(m.err_abs[k]),
                        Value::from(m.values[k].re.to_string()),
                    ]
                })
                .collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    blocks.into_iter().flatten().for_each(|r| table.push(r));
    Ok(table)
}
