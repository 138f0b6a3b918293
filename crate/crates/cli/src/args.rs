use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "wishart-outage", version, about = "MGF and outage probability of MIMO mutual information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp from the metadata block.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Working decimal digits; overrides WISHART_OUTAGE_PRECISION_DIGITS.
    #[arg(long, global = true)]
    pub digits: Option<u32>,
    #[arg(long, global = true)]
    pub quad_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
    /// Read and print rates in bits instead of nats.
    #[arg(long, global = true)]
    pub bits: bool,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo draws per estimate.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub mc_samples: usize,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Evaluate M(λ) = E[exp(λ I)] along one or more routes.
    Mgf {
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        lambda: LambdaArgs,
        /// Comma-separated routes; `all` means every deterministic route.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "hankel")]
        route: Vec<Route>,
    },
    /// Outage probability Pr(I < R) over a rate grid.
    Outage {
        #[command(flatten)]
        params: Params,
        /// A rate or a grid `start:stop:count`.
        #[arg(long, allow_hyphen_values = true)]
        rate: Grid,
        #[arg(long, value_enum, default_value_t = Method::GilPelaez)]
        method: Method,
    },
    /// Sample the Painlevé V trajectory on a t grid.
    Trace {
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        lambda: LambdaArgs,
        /// Seed point of the integration (default max(2t, t+1)).
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Run the identity and residual suites.
    Verify {
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        lambda: LambdaArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "ladder,sigma,discrete,toda")]
        suites: Vec<Suite>,
    },
    /// Moments of the deformed Laguerre weight.
    Moments {
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        lambda: LambdaArgs,
        #[arg(long, default_value_t = 8)]
        kmax: usize,
    },
}

/// Either a channel (`--nt --nr --snr`) or an ensemble (`--N --alpha --t`).
#[derive(Args, Debug, Serialize)]
pub struct Params {
    #[arg(long, requires_all = ["nr", "snr"], conflicts_with_all = ["n", "alpha", "t", "t_grid"])]
    pub nt: Option<usize>,
    #[arg(long, requires_all = ["nt", "snr"])]
    pub nr: Option<usize>,
    /// Transmit power P, doubling as SNR.
    #[arg(long, requires_all = ["nt", "nr"])]
    pub snr: Option<f64>,
    #[arg(long = "N", id = "n", requires = "alpha")]
    pub n: Option<usize>,
    #[arg(long, requires = "n")]
    pub alpha: Option<f64>,
    #[arg(long, conflicts_with = "t_grid")]
    pub t: Option<f64>,
    /// Grid `start:stop:count` of t values.
    #[arg(long, allow_hyphen_values = true)]
    pub t_grid: Option<Grid>,
}

#[derive(Args, Debug, Serialize)]
pub struct LambdaArgs {
    #[arg(long, allow_hyphen_values = true, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_grid: Option<Grid>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Hankel,
    #[value(alias = "ode")]
    OdeSigma,
    OdeTheorem1,
    Discrete,
    Mc,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GilPelaez,
    Mc,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Ladder,
    Sigma,
    Discrete,
    Toda,
}

/// A single value or an inclusive linear grid `start:stop:count`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let number = |x: &str| -> Result<f64, String> {
            let v: f64 = x.trim().parse().map_err(|_| format!("`{x}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{x}` is not finite"))
            }
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [x] => Ok(Grid(vec![number(x)?])),
            [a, b, n] => {
                let (a, b) = (number(a)?, number(b)?);
                let n: usize = n.trim().parse().map_err(|_| format!("`{n}` is not a count"))?;
                if n == 0 {
                    return Err("grid count must be positive".into());
                }
                if a >= b {
                    return Err(format!("grid start {a} must be below stop {b}"));
                }
                if n == 1 {
                    return Ok(Grid(vec![a]));
                }
                let m = (n - 1) as f64;
                Ok(Grid((0..n).map(|i| a + (b - a) * i as f64 / m).collect()))
            }
            _ => Err(format!("`{s}` is neither a number nor start:stop:count")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!("2.5".parse::<Grid>().unwrap().0, vec![2.5]);
        let g: Grid = "0:4:41".parse().unwrap();
        assert_eq!(g.0.len(), 41);
        assert_eq!(g.0[10], 1.0);
        assert_eq!(g.0[40], 4.0);
        assert!("3:1:4".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
        assert!("a:b".parse::<Grid>().is_err());
    }

    #[test]
    fn flags_are_mutually_exclusive() {
        let parse = |args: &[&str]| Cli::try_parse_from(std::iter::once("wishart-outage").chain(args.iter().copied()));
        assert!(parse(&["mgf", "--nt", "2", "--nr", "2", "--snr", "1", "--lambda", "1"]).is_ok());
        assert!(parse(&["mgf", "--N", "2", "--alpha", "0", "--t", "1", "--lambda", "-0.3"]).is_ok());
        assert!(parse(&["mgf", "--nt", "2", "--nr", "2", "--snr", "1", "--t", "1", "--lambda", "1"]).is_err());
        assert!(parse(&["mgf", "--nt", "2", "--snr", "1", "--lambda", "1"]).is_err());
        assert!(parse(&["mgf", "--N", "2", "--t", "1", "--lambda", "1"]).is_err());
        assert!(
            parse(&["mgf", "--N", "2", "--alpha", "0", "--t", "1", "--lambda", "1", "--lambda-grid", "0:1:3"]).is_err()
        );
    }
}
