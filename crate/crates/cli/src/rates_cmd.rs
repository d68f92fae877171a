//! `flmtest rates`: separation-rate table over a list of sample sizes.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use flmtest_core::theory::{separation_rate, EllipsoidSpec, RateReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{comment_block, write_atomic};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeArg {
    /// a_k² λ_k = k^{-s}
    Poly,
    /// a_k² λ_k = e^{-s k}
    Exp,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    #[arg(long)]
    pub s: f64,
    /// Ellipsoid radius.
    #[arg(long = "R", default_value_t = 1.0)]
    pub radius: f64,
    /// Constant in front of √k / n.
    #[arg(long = "C", default_value_t = 1.0)]
    pub constant: f64,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Scan bound; defaults to max(10⁴, 10 n).
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ResolvedRates<'a> {
    schema_version: u32,
    command: &'static str,
    regime: RegimeArg,
    s: f64,
    radius: f64,
    constant: f64,
    n_list: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    k_max: Option<usize>,
}

#[derive(Debug, Serialize)]
struct RateRow {
    n: usize,
    rho_sq: f64,
    rho_tilde_sq: f64,
    k_star: usize,
    argmax_k: usize,
    argmax_k_tilde: usize,
    k_max: usize,
    outside_guarantee: bool,
}

impl From<&RateReport> for RateRow {
    fn from(r: &RateReport) -> Self {
        RateRow {
            n: r.n,
            rho_sq: r.rho_sq,
            rho_tilde_sq: r.rho_tilde_sq,
            k_star: r.k_star,
            argmax_k: r.argmax_k,
            argmax_k_tilde: r.argmax_k_tilde,
            k_max: r.k_max,
            outside_guarantee: r.outside_guarantee,
        }
    }
}

pub fn run(args: &RatesArgs) -> CliResult<Vec<RateReport>> {
    let spec = match args.regime {
        RegimeArg::Poly => EllipsoidSpec::polynomial(args.s, args.radius),
        RegimeArg::Exp => EllipsoidSpec::exponential(args.s, args.radius),
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    if args.n_list.contains(&0) {
        return Err(CliError::Input("--n-list entries must be positive".into()));
    }
    let reports = args
        .n_list
        .iter()
        .map(|&n| separation_rate(&spec, n, args.constant, args.k_max))
        .collect::<Result<Vec<_>, _>>()?;

    let resolved = ResolvedRates {
        schema_version: SCHEMA_VERSION,
        command: "rates",
        regime: args.regime,
        s: args.s,
        radius: args.radius,
        constant: args.constant,
        n_list: &args.n_list,
        k_max: args.k_max,
    };
    let config = toml::to_string(&resolved).map_err(|e| CliError::Input(e.to_string()))?;
    let mut writer = csv::Writer::from_writer(comment_block(&config).into_bytes());
    for r in &reports {
        writer
            .serialize(RateRow::from(r))
            .map_err(|e| CliError::Input(format!("cannot serialize rate row: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Input(format!("cannot serialize rate table: {e}")))?;
    write_atomic(&args.out, &bytes)?;
    Ok(reports)
}
