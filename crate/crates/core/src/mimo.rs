//! Mutual information of the Rayleigh link: Monte Carlo sampling, the
//! characteristic function on the imaginary axis, and outage probability.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{channel_to_ensemble, ChannelConfig, Precision};
use crate::error::{Error, Result};
use crate::hankel::mgf_hankel;
use crate::quadrature::{gauss_legendre, gk15_combine, gk15_nodes};

/// Samples per RNG stream. Fixed so results do not depend on thread count.
pub const SHARD_SIZE: usize = 1 << 14;

const MIN_SAMPLES: usize = 1000;

/// One draw of `log det(I + (P/n_t) H H†)` in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MutualInfoSample {
    pub value: f64,
    /// Stream the draw came from.
    pub stream: u64,
    /// Draws discarded because the factorization failed.
    pub resamples: u32,
}

/// The RNG for one shard of a Monte Carlo run.
pub fn shard_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn mutual_info_sample(cfg: &ChannelConfig, rng: &mut ChaCha8Rng, stream: u64) -> MutualInfoSample {
    let (n_t, n_r) = (cfg.n_t, cfg.n_r);
    let scale = cfg.snr / n_t as f64;
    let mut resamples = 0;
    loop {
        let h = DMatrix::from_fn(n_r, n_t, |_, _| complex_gaussian(rng));
        // det(I + c HH†) = det(I + c H†H); factor the smaller Gram matrix.
        let gram = if n_r <= n_t { &h * h.adjoint() } else { h.adjoint() * &h };
        let m = DMatrix::identity(gram.nrows(), gram.ncols()) + gram * Complex64::new(scale, 0.0);
        match m.cholesky() {
            Some(chol) => {
                let value = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
                return MutualInfoSample { value: value.max(0.0), stream, resamples };
            }
            None => resamples += 1,
        }
    }
}

/// Count, mean and centered sum of squares of one shard.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("n_samples = {n_samples} below {MIN_SAMPLES}")));
    }
    Ok(())
}

/// Runs `per_sample` over every draw, shard by shard, and returns the shard
/// accumulators in stream order.
fn sharded<A, F>(cfg: &ChannelConfig, n_samples: usize, seed: u64, init: A, per_sample: F) -> Vec<A>
where
    A: Clone + Send + Sync,
    F: Fn(&mut A, f64) + Sync,
{
    let shards = n_samples.div_ceil(SHARD_SIZE);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = shard_rng(seed, s as u64);
            let count = SHARD_SIZE.min(n_samples - s * SHARD_SIZE);
            let mut acc = init.clone();
            for _ in 0..count {
                per_sample(&mut acc, mutual_info_sample(cfg, &mut rng, s as u64).value);
            }
            acc
        })
        .collect()
}

/// Sample mean and standard error of `exp(λ I)`, an estimate of `M̃(λ)`.
pub fn mc_mgf(cfg: &ChannelConfig, lambda: f64, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    check_samples(n_samples)?;
    if lambda == 0.0 {
        return Ok((1.0, 0.0));
    }
    let m = sharded(cfg, n_samples, seed, Moments::default(), |acc, i| acc.push((lambda * i).exp()))
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    Ok((m.mean, m.stderr()))
}

/// Sample mean and standard error of the mutual information itself.
pub fn mc_mutual_info(cfg: &ChannelConfig, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    check_samples(n_samples)?;
    let m = sharded(cfg, n_samples, seed, Moments::default(), |acc, i| acc.push(i))
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    Ok((m.mean, m.stderr()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageMethod {
    GilPelaez,
    MonteCarlo,
}

/// `Pr(I < R)` at one rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageResult {
    pub rate: f64,
    pub p_out: f64,
    pub method: OutageMethod,
    /// Quadrature error estimate or Monte Carlo standard error.
    pub err: f64,
    pub config: ChannelConfig,
}

/// Empirical outage at each rate from one shared set of draws.
pub fn mc_outage_many(cfg: &ChannelConfig, rates: &[f64], n_samples: usize, seed: u64) -> Result<Vec<OutageResult>> {
    check_samples(n_samples)?;
    if rates.iter().any(|r| r.is_nan()) {
        return Err(Error::InvalidParameter("rate is NaN".into()));
    }
    let counts = sharded(cfg, n_samples, seed, vec![0u64; rates.len()], |acc, i| {
        for (c, r) in acc.iter_mut().zip(rates) {
            if i < *r {
                *c += 1;
            }
        }
    })
    .into_iter()
    .fold(vec![0u64; rates.len()], |mut tot, shard| {
        tot.iter_mut().zip(shard).for_each(|(t, c)| *t += c);
        tot
    });
    let n = n_samples as f64;
    Ok(rates
        .iter()
        .zip(counts)
        .map(|(&rate, c)| {
            let p = c as f64 / n;
            OutageResult {
                rate,
                p_out: p,
                method: OutageMethod::MonteCarlo,
                err: (p * (1.0 - p) / n).sqrt(),
                config: *cfg,
            }
        })
        .collect())
}

pub fn mc_outage(cfg: &ChannelConfig, rate: f64, n_samples: usize, seed: u64) -> Result<OutageResult> {
    Ok(mc_outage_many(cfg, &[rate], n_samples, seed)?.remove(0))
}

/// `φ(ω) = E[e^{iωI}] = M̃(iω)` from the determinant route.
pub fn characteristic_function(cfg: &ChannelConfig, omega: f64, prec: &Precision) -> Result<Complex64> {
    mgf_hankel(&channel_to_ensemble(cfg, Complex64::new(0.0, omega)), prec)
}

/// Settings for the characteristic-function inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InversionControl {
    /// Target absolute error on each outage probability.
    pub abs_tol: f64,
    /// The grid is truncated once `|φ(ω)|/ω` falls below this.
    pub tail_tol: f64,
    pub max_omega: f64,
    pub max_panels: usize,
    pub clamp_tol: f64,
    /// Allowed violation of `|φ| ≤ 1` and of conjugate symmetry.
    pub phi_tol: f64,
    pub precision: Precision,
}

impl Default for InversionControl {
    fn default() -> Self {
        InversionControl {
            abs_tol: 1e-8,
            tail_tol: 1e-10,
            max_omega: 1024.0,
            max_panels: 400,
            clamp_tol: 1e-8,
            phi_tol: 1e-8,
            precision: Precision::default(),
        }
    }
}

/// Barycentric weights of the Kronrod abscissae on `[-1, 1]`.
fn kronrod_bary_weights() -> [f64; 15] {
    let x = gk15_nodes(-1.0, 1.0);
    let mut w = [1.0; 15];
    for j in 0..15 {
        for k in 0..15 {
            if k != j {
                w[j] /= x[j] - x[k];
            }
        }
    }
    w
}

/// One GK15 panel holding the demodulated envelope `ψ(ω) = e^{-iωc} φ(ω)`
/// at its nodes.
struct Panel {
    a: f64,
    b: f64,
    /// The demodulation rate `c`.
    shift: f64,
    psi: [Complex64; 15],
}

impl Panel {
    /// Error estimate of `∫ ψ/ω` (of `∫ ψ` on the panel touching 0); a
    /// rate-free smoothness gauge.
    fn envelope_err(&self) -> f64 {
        let nodes = gk15_nodes(self.a, self.b);
        let weight = |j: usize| if self.a > 0.0 { 1.0 / nodes[j] } else { 1.0 };
        let re: [f64; 15] = std::array::from_fn(|j| self.psi[j].re * weight(j));
        let im: [f64; 15] = std::array::from_fn(|j| self.psi[j].im * weight(j));
        gk15_combine(self.a, self.b, &re).1.max(gk15_combine(self.a, self.b, &im).1)
    }

    /// `∫ Im[e^{-iRω} φ(ω)]/ω dω` over the panel with its error estimate.
    fn integrate(&self, rate: f64, bary: &[f64; 15]) -> (f64, f64) {
        let kappa = rate - self.shift;
        let (a, b) = (self.a, self.b);
        let nodes = gk15_nodes(a, b);
        let osc = kappa.abs() * (b - a);
        if osc <= std::f64::consts::PI {
            let mut g = [0.0; 15];
            for ((v, w), z) in g.iter_mut().zip(nodes).zip(self.psi) {
                *v = (Complex64::new(0.0, -kappa * w).exp() * z).im / w;
            }
            return gk15_combine(a, b, &g);
        }
        // Many oscillations: integrate the degree-14 interpolant of ψ against
        // the exponential on a composite Gauss-Legendre grid.
        let (gx, gw) = gauss_legendre(16);
        let pieces = (osc / std::f64::consts::PI).ceil() as usize;
        let h = (b - a) / pieces as f64;
        let std_nodes = gk15_nodes(-1.0, 1.0);
        let mut total = 0.0;
        for p in 0..pieces {
            let c = a + (p as f64 + 0.5) * h;
            for (xi, wi) in gx.iter().zip(&gw) {
                let w = c + 0.5 * h * xi;
                let u = (2.0 * w - a - b) / (b - a);
                let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
                for j in 0..15 {
                    let q = bary[j] / (u - std_nodes[j]);
                    num += self.psi[j] * q;
                    den += q;
                }
                total += 0.5 * h * wi * (Complex64::new(0.0, -kappa * w).exp() * (num / den)).im / w;
            }
        }
        (total, self.envelope_err())
    }
}

fn check_phi(omega: f64, phi: Complex64, ctrl: &InversionControl) -> Result<()> {
    if phi.norm() > 1.0 + ctrl.phi_tol {
        return Err(Error::IdentityViolation {
            name: format!("|phi({omega})| <= 1"),
            residual: phi.norm() - 1.0,
            tolerance: ctrl.phi_tol,
        });
    }
    Ok(())
}

/// Evaluates `φ` on the given panels. Each panel is demodulated by whichever
/// of `shifts` leaves the smoother envelope: near the origin `φ` turns with
/// the mean rate, far out it is dominated by the edge of the support at 0.
fn eval_panels(
    cfg: &ChannelConfig,
    spans: &[(f64, f64)],
    shifts: &[f64],
    ctrl: &InversionControl,
) -> Result<Vec<Panel>> {
    let points: Vec<f64> = spans.iter().flat_map(|&(a, b)| gk15_nodes(a, b)).collect();
    let phis = points
        .par_iter()
        .map(|&w| {
            let phi = characteristic_function(cfg, w, &ctrl.precision)?;
            check_phi(w, phi, ctrl)?;
            Ok(phi)
        })
        .collect::<Result<Vec<_>>>()?;
    // Conjugate symmetry at each panel centre.
    spans
        .par_iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let w = 0.5 * (a + b);
            let back = characteristic_function(cfg, -w, &ctrl.precision)?;
            let gap = (back.conj() - phis[15 * k + 7]).norm();
            if gap > ctrl.phi_tol {
                return Err(Error::IdentityViolation {
                    name: format!("phi(-{w}) = conj phi({w})"),
                    residual: gap,
                    tolerance: ctrl.phi_tol,
                });
            }
            Ok(())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(spans
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let nodes = gk15_nodes(a, b);
            shifts
                .iter()
                .map(|&shift| {
                    let psi = std::array::from_fn(|j| Complex64::new(0.0, -nodes[j] * shift).exp() * phis[15 * k + j]);
                    Panel { a, b, shift, psi }
                })
                .min_by(|p, q| p.envelope_err().total_cmp(&q.envelope_err()))
                .expect("at least one shift")
        })
        .collect())
}

/// Gil-Pelaez inversion `P_out = 1/2 - (1/π) ∫_0^∞ Im[e^{-iωR} φ(ω)]/ω dω`
/// for every rate, sharing one adaptively refined `ω` grid.
///
/// Each panel stores `φ` demodulated by a rate `c`, the mean or 0, so the
/// grid only has to resolve the envelope; the remaining factor
/// `e^{-i(R-c)ω}` is applied per rate.
/// The integrand has a removable singularity at `ω = 0`, and Kronrod nodes
/// are interior, so the first panel never touches it.
pub fn outage_gil_pelaez_many(
    cfg: &ChannelConfig,
    rates: &[f64],
    ctrl: &InversionControl,
) -> Result<Vec<OutageResult>> {
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate {r} must be positive and finite")));
    }
    let one = characteristic_function(cfg, 0.0, &ctrl.precision)?;
    if (one - 1.0).norm() > ctrl.phi_tol {
        return Err(Error::IdentityViolation {
            name: "phi(0) = 1".into(),
            residual: (one - 1.0).norm(),
            tolerance: ctrl.phi_tol,
        });
    }
    // E[I] = Im φ(h)/h + O(h²); only used as a demodulation constant.
    let h = 1e-4;
    let mean = characteristic_function(cfg, h, &ctrl.precision)?.im / h;

    // Truncation: double ω until the integrand envelope is negligible.
    let mut omega_max = 4.0;
    let mut tail_phi;
    loop {
        tail_phi = characteristic_function(cfg, omega_max, &ctrl.precision)?.norm();
        if tail_phi / omega_max < ctrl.tail_tol || omega_max >= ctrl.max_omega {
            break;
        }
        omega_max *= 2.0;
    }

    let mut spans = vec![(0.0, 1.0)];
    let mut lo = 1.0;
    while lo < omega_max {
        spans.push((lo, 2.0 * lo));
        lo *= 2.0;
    }
    let bary = kronrod_bary_weights();
    let kappas: Vec<f64> = rates.iter().map(|r| r - mean).collect();
    let shifts = [mean, 0.0];
    let mut panels = eval_panels(cfg, &spans, &shifts, ctrl)?;
    let pi = std::f64::consts::PI;
    loop {
        let per_panel: Vec<f64> = panels
            .iter()
            .map(|p| rates.iter().map(|&r| p.integrate(r, &bary).1).fold(p.envelope_err(), f64::max))
            .collect();
        let total: f64 = per_panel.iter().sum::<f64>() / pi;
        if total <= ctrl.abs_tol {
            break;
        }
        if panels.len() >= ctrl.max_panels {
            return Err(Error::NonConvergence {
                what: "Gil-Pelaez quadrature",
                estimate: total,
                tolerance: ctrl.abs_tol,
            });
        }
        // Bisect every panel above its share of the budget, worst first.
        let share = ctrl.abs_tol * pi / panels.len() as f64;
        let mut order: Vec<usize> = (0..panels.len()).filter(|&i| per_panel[i] > share).collect();
        order.sort_by(|&i, &j| per_panel[j].total_cmp(&per_panel[i]));
        order.truncate(((ctrl.max_panels - panels.len()) / 2).max(1));
        let split: Vec<(f64, f64)> = order
            .iter()
            .flat_map(|&i| {
                let (a, b) = (panels[i].a, panels[i].b);
                let m = 0.5 * (a + b);
                [(a, m), (m, b)]
            })
            .collect();
        let fresh = eval_panels(cfg, &split, &shifts, ctrl)?;
        let mut keep: Vec<Panel> =
            panels.into_iter().enumerate().filter(|(i, _)| !order.contains(i)).map(|(_, p)| p).collect();
        keep.extend(fresh);
        keep.sort_by(|p, q| p.a.total_cmp(&q.a));
        panels = keep;
    }

    rates
        .iter()
        .zip(&kappas)
        .map(|(&rate, &kappa)| {
            let (integral, quad_err) =
                panels.iter().map(|p| p.integrate(rate, &bary)).fold((0.0, 0.0), |(s, e), (v, de)| (s + v, e + de));
            // Past ω_max, |φ|/ω decays at least like 1/ω. Far out φ is
            // dominated by the edge of the support at I = 0 rather than by
            // the mean, so the phase cancels on the scale 1/min(|κ|, R).
            let tail_err = tail_phi / omega_max * omega_max.min(1.0 / kappa.abs().min(rate));
            let p_out = clamp(0.5 - integral / pi, ctrl.clamp_tol)?;
            Ok(OutageResult {
                rate,
                p_out,
                method: OutageMethod::GilPelaez,
                err: (quad_err + tail_err) / pi,
                config: *cfg,
            })
        })
        .collect()
}

pub fn outage_gil_pelaez(cfg: &ChannelConfig, rate: f64, ctrl: &InversionControl) -> Result<OutageResult> {
    Ok(outage_gil_pelaez_many(cfg, &[rate], ctrl)?.remove(0))
}

fn clamp(p: f64, tol: f64) -> Result<f64> {
    if !(p >= -tol && p <= 1.0 + tol) {
        return Err(Error::InversionOutOfRange { value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_t: usize, n_r: usize, snr: f64) -> ChannelConfig {
        ChannelConfig::new(n_t, n_r, snr).unwrap()
    }

    // ∫_0^∞ log(1+x) e^{-x} dx = e E_1(1), from mpmath.
    const SISO_MEAN: f64 = 0.596_347_362_323_194;

    #[test]
    fn siso_mean_matches_quadrature_oracle() {
        let (m, se) = mc_mutual_info(&cfg(1, 1, 1.0), 1_000_000, 11).unwrap();
        assert!((m - SISO_MEAN).abs() <= 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn samples_are_nonnegative_and_vanish_at_low_snr() {
        let mut rng = shard_rng(3, 0);
        for _ in 0..2000 {
            assert!(mutual_info_sample(&cfg(3, 2, 5.0), &mut rng, 0).value >= 0.0);
        }
        let (m, _) = mc_mutual_info(&cfg(2, 3, 1e-6), 10_000, 5).unwrap();
        assert!(m < 1e-4);
    }

    #[test]
    fn mgf_examples() {
        assert_eq!(mc_mgf(&cfg(2, 2, 1.0), 0.0, 1000, 1).unwrap(), (1.0, 0.0));
        let (m, se) = mc_mgf(&cfg(1, 1, 1.0), 1.0, 200_000, 2).unwrap();
        assert!((m - 2.0).abs() <= 3.0 * se, "{m} ± {se}");
        assert!(mc_mgf(&cfg(1, 1, 1.0), 1.0, 999, 2).is_err());
    }

    #[test]
    fn reproducible_under_fixed_seed() {
        let c = cfg(2, 3, 4.0);
        let a = mc_mgf(&c, 0.5, 40_000, 9).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mc_mgf(&c, 0.5, 40_000, 9).unwrap());
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert_ne!(a, mc_mgf(&c, 0.5, 40_000, 10).unwrap());
    }

    #[test]
    fn mc_outage_extremes() {
        let c = cfg(2, 2, 10.0);
        let r = mc_outage_many(&c, &[0.0, f64::INFINITY], 5000, 1).unwrap();
        assert_eq!(r[0].p_out, 0.0);
        assert_eq!(r[1].p_out, 1.0);
    }

    #[test]
    fn phi_is_a_characteristic_function() {
        let c = cfg(2, 2, 10.0);
        let prec = Precision::default();
        assert_eq!(characteristic_function(&c, 0.0, &prec).unwrap(), Complex64::new(1.0, 0.0));
        for w in [0.3, 2.0, 7.5] {
            let p = characteristic_function(&c, w, &prec).unwrap();
            let m = characteristic_function(&c, -w, &prec).unwrap();
            assert!(p.norm() <= 1.0);
            assert!((p - m.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn clamp_tolerance() {
        assert_eq!(clamp(-5e-9, 1e-8).unwrap(), 0.0);
        assert_eq!(clamp(1.0 + 5e-9, 1e-8).unwrap(), 1.0);
        assert!(matches!(clamp(-1e-6, 1e-8), Err(Error::InversionOutOfRange { .. })));
    }

    #[test]
    fn gil_pelaez_against_monte_carlo() {
        let c = cfg(2, 2, 10.0);
        let rates = [1e-6, 2.0, 50.0];
        let gp = outage_gil_pelaez_many(&c, &rates, &InversionControl::default()).unwrap();
        assert!(gp[0].p_out <= 1e-3);
        assert!(gp[2].p_out >= 1.0 - 1e-6);
        let mc = mc_outage(&c, 2.0, 1_000_000, 7).unwrap();
        assert!((gp[1].p_out - mc.p_out).abs() <= (3.0 * mc.err).max(5e-3), "{} vs {}", gp[1].p_out, mc.p_out);
        assert!(outage_gil_pelaez(&c, 0.0, &InversionControl::default()).is_err());
    }

    /// `Pr(ln(1 + P x) < R) = 1 - exp(-(e^R - 1)/P)` for one antenna each side.
    /// φ decays only like 1/ω here, the slowest case.
    #[test]
    fn single_antenna_closed_form() {
        let p = 3.0;
        let rates = [0.05, 0.3, 1.4, 3.0];
        let out = outage_gil_pelaez_many(&cfg(1, 1, p), &rates, &InversionControl::default()).unwrap();
        for r in out {
            let exact = 1.0 - (-(r.rate.exp() - 1.0) / p).exp();
            let gap = (r.p_out - exact).abs();
            assert!(gap <= r.err && r.err < 1e-5, "R={} p={} exact={exact} err={:e}", r.rate, r.p_out, r.err);
        }
    }

    #[test]
    fn far_tail_at_low_snr() {
        let r = outage_gil_pelaez(&cfg(2, 2, 0.5), 50.0, &InversionControl::default()).unwrap();
        assert!(r.p_out >= 1.0 - 1e-6, "{r:?}");
    }
}
