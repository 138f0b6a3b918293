//! Moment generating function and outage probability of MIMO mutual
//! information, computed along several independent routes.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

/// Library version, embedded in emitted metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod discrete;
pub mod ensemble;
pub mod error;
pub mod hankel;
pub mod linalg;
pub mod mimo;
pub mod moments;
pub mod mp;
pub mod ode;
pub mod orthopoly;
pub mod painleve;
pub mod quadrature;

pub use discrete::{
    discrete_ladder, discrete_sigma_residual, discrete_sigma_step, h_from_determinants, mgf_discrete, toda_residual,
    DiscreteLadder,
};
pub use ensemble::{channel_to_ensemble, ChannelConfig, EnsembleParams, Precision};
pub use error::{Error, Result};
pub use hankel::{hankel_logdet, laguerre_ref_logdet, mgf_hankel, HankelEvaluation};
pub use mimo::{
    characteristic_function, mc_mgf, mc_mutual_info, mc_outage, mc_outage_many, mutual_info_sample, outage_gil_pelaez,
    outage_gil_pelaez_many, InversionControl, MutualInfoSample, OutageMethod, OutageResult,
};
pub use moments::{moment, moment_table, MomentTable};
pub use mp::{with_digits, Mp, PrecisionGuard, Scalar};
pub use orthopoly::{
    auxiliary_quantities, compute_ortho_state, ladder_coeffs, verify_identities, IdentityReport, LadderCoefficients,
    OrthoState,
};
pub use painleve::{
    integrate_sigma, mgf_sigma, mgf_theorem1, mgf_theorem2, sigma_residual, SigmaControl, SigmaMgf,
    SigmaResidualReport, SigmaTrajectory,
};
