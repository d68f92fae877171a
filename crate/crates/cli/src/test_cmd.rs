//! `flmtest test`: adaptive test on user data.

use std::path::PathBuf;

use clap::Args;
use flmtest_core::adaptive::{dimension_collection, AdaptiveTester, DEFAULT_REPLICATES};
use flmtest_core::{center_sample, fpca, null_basis_scores, AdaptiveTestResult, Calibration, FunctionalSample, Method, RngStream};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{read_functions, read_responses, write_atomic};
use crate::SCHEMA_VERSION;

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Curves CSV: first row is the grid, then one row per curve.
    #[arg(long)]
    pub curves: PathBuf,
    /// Responses CSV: one value per line, aligned with the curve rows.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// p1 (Bonferroni) or p2 (Monte-Carlo calibrated).
    #[arg(long, default_value = "p2")]
    pub method: Method,
    /// Monte-Carlo replicates for p2.
    #[arg(long = "B", default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest tested dimension (power of two, at most n/2).
    #[arg(long)]
    pub kbar: Option<usize>,
    /// Use the data as given instead of centering curves and responses.
    #[arg(long)]
    pub no_center: bool,
    /// Optional CSV (grid row, then one basis function per row) spanning
    /// the null subspace; the test is then of the slope lying in it.
    #[arg(long)]
    pub null_basis: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ResolvedTestConfig {
    command: &'static str,
    curves: PathBuf,
    responses: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    null_basis: Option<PathBuf>,
    alpha: f64,
    method: Method,
    replicates: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kbar: Option<usize>,
    center: bool,
    n: usize,
    grid_points: usize,
}

#[derive(Debug, Serialize)]
struct TestReport {
    schema_version: u32,
    config: ResolvedTestConfig,
    result: AdaptiveTestResult,
}

pub fn run(args: &TestArgs) -> CliResult<AdaptiveTestResult> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Input(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let (grid, curves) = read_functions(&args.curves)?;
    let responses = read_responses(&args.responses)?;
    if responses.len() != curves.nrows() {
        return Err(CliError::Input(format!(
            "{} curves but {} responses",
            curves.nrows(),
            responses.len()
        )));
    }
    let basis = match &args.null_basis {
        Some(path) => {
            let (basis_grid, basis) = read_functions(path)?;
            if basis_grid.points() != grid.points() {
                return Err(CliError::parse(path, "grid row differs from the curves grid"));
            }
            Some(basis)
        }
        None => None,
    };

    let mut sample = FunctionalSample::new(grid, curves, responses)?;
    if !args.no_center {
        sample = center_sample(&sample);
    }
    let collection = dimension_collection(sample.n(), args.kbar)?;
    let decomposition = fpca(&sample, collection.kbar())?;
    let tester = match &basis {
        Some(b) => {
            let scores = null_basis_scores(&sample, b)?;
            AdaptiveTester::for_subspace(&decomposition, collection, &scores)?
        }
        None => AdaptiveTester::new(&decomposition, collection)?,
    };
    let calibration = match args.method {
        Method::P1 => Calibration::Bonferroni,
        Method::P2 => Calibration::MonteCarlo {
            replicates: args.replicates,
            stream: RngStream::new(args.seed),
        },
    };
    let result = tester.run(sample.responses(), args.alpha, calibration)?;

    let report = TestReport {
        schema_version: SCHEMA_VERSION,
        config: ResolvedTestConfig {
            command: "test",
            curves: args.curves.clone(),
            responses: args.responses.clone(),
            null_basis: args.null_basis.clone(),
            alpha: args.alpha,
            method: args.method,
            replicates: args.replicates,
            seed: args.seed,
            kbar: args.kbar,
            center: !args.no_center,
            n: sample.n(),
            grid_points: sample.grid().len(),
        },
        result: result.clone(),
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Input(format!("cannot serialize report: {e}")))?;
    write_atomic(&args.out, text.as_bytes())?;
    Ok(result)
}
