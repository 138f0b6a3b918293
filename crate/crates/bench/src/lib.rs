//! Fixed inputs shared by the route benchmarks in `benches/`.

use wishart_outage::{ChannelConfig, EnsembleParams};

/// A mid-sized ensemble where every route is well inside its comfort zone.
pub fn ensemble() -> EnsembleParams {
    EnsembleParams::real(4, 1.0, 0.5, 2.0).expect("valid parameters")
}

/// The 2x2 link at P = 10 used for the outage benchmarks.
pub fn link() -> ChannelConfig {
    ChannelConfig::new(2, 2, 10.0).expect("valid channel")
}

pub const RATES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
