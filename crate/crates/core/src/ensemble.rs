//! Parameter types shared by every route, and the antenna-to-ensemble map.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the deformed Laguerre weight `x^alpha (x+t)^lambda e^{-x}`
/// together with the determinant size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n: usize,
    pub alpha: f64,
    pub lambda: Complex64,
    pub t: f64,
}

impl EnsembleParams {
    pub fn new(n: usize, alpha: f64, lambda: Complex64, t: f64) -> Result<Self> {
        let p = EnsembleParams { n, alpha, lambda, t };
        p.validate()?;
        Ok(p)
    }

    /// Real-lambda constructor.
    pub fn real(n: usize, alpha: f64, lambda: f64, t: f64) -> Result<Self> {
        Self::new(n, alpha, Complex64::new(lambda, 0.0), t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(self.alpha > -1.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha = {} must exceed -1", self.alpha)));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidParameter(format!("t = {} must be positive", self.t)));
        }
        if !self.lambda.re.is_finite() || !self.lambda.im.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        Ok(())
    }

    /// `Some(lambda)` when lambda has no imaginary part.
    pub fn real_lambda(&self) -> Option<f64> {
        (self.lambda.im == 0.0).then_some(self.lambda.re)
    }

    pub fn with_n(self, n: usize) -> Self {
        EnsembleParams { n, ..self }
    }

    pub fn with_t(self, t: f64) -> Self {
        EnsembleParams { t, ..self }
    }

    pub fn with_lambda(self, lambda: Complex64) -> Self {
        EnsembleParams { lambda, ..self }
    }

    /// `delta_N = N (N + alpha + lambda)` for real lambda.
    pub fn delta(&self) -> f64 {
        let n = self.n as f64;
        n * (n + self.alpha + self.lambda.re)
    }
}

/// Antenna counts and transmit power of an i.i.d. Rayleigh link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub snr: f64,
}

impl ChannelConfig {
    pub fn new(n_t: usize, n_r: usize, snr: f64) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(Error::InvalidParameter("antenna counts must be positive".into()));
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("snr = {snr} must be positive")));
        }
        Ok(ChannelConfig { n_t, n_r, snr })
    }
}

/// Maps a channel to the ensemble: `N = min`, `alpha = max - min`, `t = n_t / P`.
pub fn channel_to_ensemble(cfg: &ChannelConfig, lambda: Complex64) -> EnsembleParams {
    let n = cfg.n_t.min(cfg.n_r);
    let m = cfg.n_t.max(cfg.n_r);
    EnsembleParams { n, alpha: (m - n) as f64, lambda, t: cfg.n_t as f64 / cfg.snr }
}

/// Working precision and tolerances for the multiprecision routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub digits: u32,
    pub quad_nodes: usize,
    pub tol_rel: f64,
}

impl Default for Precision {
    fn default() -> Self {
        Precision { digits: 50, quad_nodes: 200, tol_rel: 1e-10 }
    }
}

impl Precision {
    pub fn new(digits: u32, quad_nodes: usize, tol_rel: f64) -> Result<Self> {
        if digits < 15 {
            return Err(Error::InvalidParameter(format!("digits = {digits} below 15")));
        }
        if quad_nodes < 16 {
            return Err(Error::InvalidParameter(format!("quad_nodes = {quad_nodes} below 16")));
        }
        if !(tol_rel > 0.0) {
            return Err(Error::InvalidParameter("tol_rel must be positive".into()));
        }
        Ok(Precision { digits, quad_nodes, tol_rel })
    }

    pub fn with_digits(self, digits: u32) -> Self {
        Precision { digits, ..self }
    }

    /// Agreement demanded between successive quadrature levels.
    pub fn quad_threshold(&self) -> f64 {
        self.tol_rel.min(10f64.powf(-f64::from(self.digits) / 2.0))
    }

    /// `max(10^{-digits/2}, 1e-8)`: how close R may get to 0 or 1.
    pub fn pole_guard(&self) -> f64 {
        10f64.powf(-f64::from(self.digits) / 2.0).max(1e-8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn mapping_examples() {
        let p = channel_to_ensemble(&ChannelConfig::new(4, 2, 2.0).unwrap(), c(1.0));
        assert_eq!((p.n, p.alpha, p.t, p.lambda), (2, 2.0, 2.0, c(1.0)));
        let p = channel_to_ensemble(&ChannelConfig::new(2, 2, 1.0).unwrap(), c(0.0));
        assert_eq!((p.n, p.alpha, p.t), (2, 0.0, 2.0));
        let p = channel_to_ensemble(&ChannelConfig::new(3, 5, 0.5).unwrap(), c(-0.3));
        assert_eq!((p.n, p.alpha, p.t, p.lambda), (3, 2.0, 6.0, c(-0.3)));
    }

    #[test]
    fn rejects_invalid() {
        assert!(EnsembleParams::real(0, 0.0, 1.0, 1.0).is_err());
        assert!(EnsembleParams::real(1, -1.0, 1.0, 1.0).is_err());
        assert!(EnsembleParams::real(1, 0.0, 1.0, 0.0).is_err());
        assert!(ChannelConfig::new(0, 2, 1.0).is_err());
        assert!(ChannelConfig::new(2, 2, -1.0).is_err());
        assert!(Precision::new(14, 200, 1e-10).is_err());
        assert!(Precision::new(20, 8, 1e-10).is_err());
    }

    #[test]
    fn precision_defaults() {
        let p = Precision::default();
        assert_eq!((p.digits, p.quad_nodes, p.tol_rel), (50, 200, 1e-10));
        assert_eq!(p.pole_guard(), 1e-8);
        assert!(p.quad_threshold() <= 1e-25);
    }

    proptest! {
        #[test]
        fn swap_symmetry(nt in 1usize..9, nr in 1usize..9, snr in 0.01f64..100.0) {
            let a = channel_to_ensemble(&ChannelConfig::new(nt, nr, snr).unwrap(), c(0.5));
            let b = channel_to_ensemble(&ChannelConfig::new(nr, nt, snr).unwrap(), c(0.5));
            prop_assert_eq!(a.n, b.n);
            prop_assert_eq!(a.alpha, b.alpha);
            prop_assert_eq!(a.alpha + a.n as f64, nt.max(nr) as f64);
            prop_assert_eq!(a.t, nt as f64 / snr);
        }
    }
}
