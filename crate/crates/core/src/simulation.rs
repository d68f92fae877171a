//! Simulated designs from truncated Karhunen–Loève expansions, the slope
//! families used in the experiments, and a parallel experiment runner.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{dimension_collection, AdaptiveTester, Calibration, Method, DEFAULT_REPLICATES};
use crate::error::{FlmError, Result};
use crate::fda::{fpca, FunctionalSample, Grid, MIN_OBSERVATIONS};
use crate::numerics::RngStream;

pub const DEFAULT_GRID_POINTS: usize = 1000;
pub const DEFAULT_TERMS: usize = 100;
/// Largest deviation from quadrature orthonormality accepted for a custom
/// eigen-system.
pub const ORTHONORMALITY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Brownian,
    Custom,
}

/// A centered process given by `J` eigenpairs on a grid.
#[derive(Debug, Clone)]
pub struct ProcessSpec {
    kind: ProcessKind,
    grid: Grid,
    eigenvalues: Vec<f64>,
    /// `J × p`, row `j` is `V_{j+1}` on the grid.
    eigenfunctions: DMatrix<f64>,
}

impl ProcessSpec {
    /// Brownian motion on `grid`: `λ_j = ((j - 1/2) π)^{-2}`,
    /// `V_j(t) = √2 sin((j - 1/2) π t)`.
    pub fn brownian(grid: Grid, terms: usize) -> Result<Self> {
        if terms == 0 {
            return Err(FlmError::Config("process needs at least one term".into()));
        }
        let pi = std::f64::consts::PI;
        let eigenvalues = (1..=terms)
            .map(|j| {
                let f = (j as f64 - 0.5) * pi;
                1.0 / (f * f)
            })
            .collect();
        let pts = grid.points();
        let eigenfunctions = DMatrix::from_fn(terms, grid.len(), |j, i| {
            std::f64::consts::SQRT_2 * ((j as f64 + 0.5) * pi * pts[i]).sin()
        });
        Ok(ProcessSpec {
            kind: ProcessKind::Brownian,
            grid,
            eigenvalues,
            eigenfunctions,
        })
    }

    /// Brownian motion with 100 terms on 1000 evenly spaced points of `[0, 1]`.
    pub fn brownian_default() -> Self {
        let grid = Grid::uniform(0.0, 1.0, DEFAULT_GRID_POINTS).expect("valid default grid");
        Self::brownian(grid, DEFAULT_TERMS).expect("valid default process")
    }

    pub fn custom(grid: Grid, eigenvalues: Vec<f64>, eigenfunctions: DMatrix<f64>) -> Result<Self> {
        let terms = eigenvalues.len();
        if terms == 0 {
            return Err(FlmError::Config("process needs at least one term".into()));
        }
        if eigenfunctions.nrows() != terms {
            return Err(FlmError::DimensionMismatch {
                what: "eigenfunction count",
                expected: terms,
                got: eigenfunctions.nrows(),
            });
        }
        if eigenfunctions.ncols() != grid.len() {
            return Err(FlmError::DimensionMismatch {
                what: "eigenfunction length",
                expected: grid.len(),
                got: eigenfunctions.ncols(),
            });
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(FlmError::Config("eigenvalues must be positive".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(FlmError::Config("eigenvalues must be nonincreasing".into()));
        }
        for a in 0..terms {
            for b in 0..=a {
                let ip = grid.dot_unchecked(
                    eigenfunctions.row(a).iter().copied(),
                    eigenfunctions.row(b).iter().copied(),
                );
                let target = if a == b { 1.0 } else { 0.0 };
                if (ip - target).abs() > ORTHONORMALITY_TOL {
                    return Err(FlmError::Config(format!(
                        "eigenfunctions {} and {} have inner product {ip:.3e}",
                        b + 1,
                        a + 1
                    )));
                }
            }
        }
        Ok(ProcessSpec {
            kind: ProcessKind::Custom,
            grid,
            eigenvalues,
            eigenfunctions,
        })
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn terms(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Serializable description of a process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProcessConfig {
    Brownian {
        #[serde(default = "default_grid_points")]
        grid_points: usize,
        #[serde(default = "default_terms")]
        terms: usize,
    },
    Custom {
        grid: Vec<f64>,
        eigenvalues: Vec<f64>,
        /// One row per eigenfunction.
        eigenfunctions: Vec<Vec<f64>>,
    },
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

fn default_terms() -> usize {
    DEFAULT_TERMS
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig::Brownian {
            grid_points: DEFAULT_GRID_POINTS,
            terms: DEFAULT_TERMS,
        }
    }
}

impl ProcessConfig {
    pub fn build(&self) -> Result<ProcessSpec> {
        match self {
            ProcessConfig::Brownian { grid_points, terms } => {
                ProcessSpec::brownian(Grid::uniform(0.0, 1.0, *grid_points)?, *terms)
            }
            ProcessConfig::Custom {
                grid,
                eigenvalues,
                eigenfunctions,
            } => {
                let grid = Grid::new(grid.clone())?;
                let p = grid.len();
                if let Some(bad) = eigenfunctions.iter().find(|r| r.len() != p) {
                    return Err(FlmError::DimensionMismatch {
                        what: "eigenfunction length",
                        expected: p,
                        got: bad.len(),
                    });
                }
                let rows = eigenfunctions.len();
                let m = DMatrix::from_fn(rows, p, |j, i| eigenfunctions[j][i]);
                ProcessSpec::custom(grid, eigenvalues.clone(), m)
            }
        }
    }
}

/// The slope under which responses are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SlopeSpec {
    Zero,
    /// `B / √ζ(2ξ+1) Σ_{j ≤ J} j^{-ξ-1/2} V_j`.
    ThetaKl { b: f64, xi: f64 },
    /// `B exp(-(t-1/2)²/(2τ²)) / (∫₀¹ exp(-(x-1/2)²/τ²) dx)^{1/2}`.
    ThetaG { b: f64, tau: f64 },
    /// Values on the process grid.
    Custom { values: Vec<f64> },
}

impl SlopeSpec {
    fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            SlopeSpec::Zero => Ok(()),
            SlopeSpec::ThetaKl { b, xi } => {
                check_norm(*b)?;
                if !(*xi > 0.0 && xi.is_finite()) {
                    return Err(FlmError::Config(format!("ξ must be positive, got {xi}")));
                }
                Ok(())
            }
            SlopeSpec::ThetaG { b, tau } => {
                check_norm(*b)?;
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(FlmError::Config(format!("τ must be positive, got {tau}")));
                }
                Ok(())
            }
            SlopeSpec::Custom { values } => {
                if values.len() != grid.len() {
                    return Err(FlmError::DimensionMismatch {
                        what: "custom slope length",
                        expected: grid.len(),
                        got: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(FlmError::Config("custom slope has non-finite values".into()));
                }
                Ok(())
            }
        }
    }

    /// Values of the slope on the process grid.
    pub fn evaluate(&self, process: &ProcessSpec) -> Result<Vec<f64>> {
        self.validate(process.grid())?;
        match self {
            SlopeSpec::Zero => Ok(vec![0.0; process.grid().len()]),
            SlopeSpec::ThetaKl { b, xi } => make_theta_kl(*b, *xi, process),
            SlopeSpec::ThetaG { b, tau } => make_theta_g(*b, *tau, process.grid()),
            SlopeSpec::Custom { values } => Ok(values.clone()),
        }
    }
}

fn check_norm(b: f64) -> Result<()> {
    if b >= 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(FlmError::Config(format!("slope norm B must be nonnegative, got {b}")))
    }
}

/// Coefficients proportional to `j^{-ξ-1/2}`, `j = 1..=terms`, scaled so
/// that their Euclidean norm is exactly `B`.
///
/// Normalizing by the full series `ζ(2ξ+1)` instead would leave the
/// truncated slope noticeably short of `B` for small `ξ` (about `0.80 B`
/// at `ξ = 0.1` with 100 terms).
pub fn theta_kl_coefficients(b: f64, xi: f64, terms: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=terms).map(|j| (j as f64).powf(-xi - 0.5)).collect();
    let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    raw.into_iter().map(|c| b * c / norm).collect()
}

pub fn make_theta_kl(b: f64, xi: f64, process: &ProcessSpec) -> Result<Vec<f64>> {
    SlopeSpec::ThetaKl { b, xi }.validate(process.grid())?;
    let coef = DVector::from_vec(theta_kl_coefficients(b, xi, process.terms()));
    Ok((process.eigenfunctions().transpose() * coef).data.into())
}

/// `∫₀¹ exp(-(x - 1/2)² / τ²) dx` by composite Simpson.
fn gaussian_bump_mass(tau: f64) -> f64 {
    let intervals = 200_000usize;
    let h = 1.0 / intervals as f64;
    let f = |x: f64| (-(x - 0.5) * (x - 0.5) / (tau * tau)).exp();
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        let x = i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

pub fn make_theta_g(b: f64, tau: f64, grid: &Grid) -> Result<Vec<f64>> {
    SlopeSpec::ThetaG { b, tau }.validate(grid)?;
    let scale = b / gaussian_bump_mass(tau).sqrt();
    Ok(grid
        .points()
        .iter()
        .map(|t| scale * (-(t - 0.5) * (t - 0.5) / (2.0 * tau * tau)).exp())
        .collect())
}

/// `⟨θ, V_j⟩` for `j = 1..=J`: analytic for the KL family, by quadrature
/// otherwise.
pub fn slope_coefficients(process: &ProcessSpec, slope: &SlopeSpec) -> Result<Vec<f64>> {
    if let SlopeSpec::ThetaKl { b, xi } = slope {
        slope.validate(process.grid())?;
        return Ok(theta_kl_coefficients(*b, *xi, process.terms()));
    }
    let theta = slope.evaluate(process)?;
    let grid = process.grid();
    Ok(process
        .eigenfunctions()
        .row_iter()
        .map(|v| grid.dot_unchecked(v.iter().copied(), theta.iter().copied()))
        .collect())
}

/// `Σ_{j > k} λ_j ⟨θ, V_j⟩²`; `k = 0` gives the full signal energy.
pub fn bias_term(process: &ProcessSpec, slope: &SlopeSpec, k: usize) -> Result<f64> {
    let coef = slope_coefficients(process, slope)?;
    Ok(process
        .eigenvalues()
        .iter()
        .zip(&coef)
        .skip(k)
        .map(|(l, c)| l * c * c)
        .sum())
}

/// `n` curves `Σ_j √λ_j η_ij V_j` with i.i.d. standard normal `η`.
pub fn simulate_design(process: &ProcessSpec, n: usize, stream: RngStream) -> DMatrix<f64> {
    let terms = process.terms();
    let mut eta = DMatrix::<f64>::zeros(n, terms);
    stream.generator().fill_standard_normal(eta.as_mut_slice());
    for (j, mut col) in eta.column_iter_mut().enumerate() {
        col *= process.eigenvalues()[j].sqrt();
    }
    eta * process.eigenfunctions()
}

/// Responses `⟨X_i, θ⟩ + σ ε_i` using the grid quadrature.
pub fn simulate_responses(
    curves: &DMatrix<f64>,
    grid: &Grid,
    theta: &[f64],
    noise_sd: f64,
    stream: RngStream,
) -> DVector<f64> {
    let mut rng = stream.generator();
    DVector::from_fn(curves.nrows(), |i, _| {
        grid.dot_unchecked(curves.row(i).iter().copied(), theta.iter().copied()) + noise_sd * rng.standard_normal()
    })
}

fn default_noise_sd() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.05
}

fn default_methods() -> Vec<Method> {
    vec![Method::P1, Method::P2]
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub process: ProcessConfig,
    pub slope: SlopeSpec,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Monte-Carlo replicates for P2.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub kbar: Option<usize>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(FlmError::Config("trials must be at least 1".into()));
        }
        if self.n < MIN_OBSERVATIONS {
            return Err(FlmError::TooFewObservations {
                min: MIN_OBSERVATIONS,
                got: self.n,
            });
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(FlmError::Config(format!("noise_sd must be positive, got {}", self.noise_sd)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FlmError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(FlmError::Config("no test method requested".into()));
        }
        dimension_collection(self.n, self.kbar)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub rejections: usize,
    pub trials: usize,
    /// Rejection percentage.
    pub percent: f64,
    /// Half-width of the 95% normal interval, in percentage points.
    pub ci_half_width: f64,
}

impl MethodOutcome {
    fn new(method: Method, rejections: usize, trials: usize) -> Self {
        let p = rejections as f64 / trials as f64;
        MethodOutcome {
            method,
            rejections,
            trials,
            percent: 100.0 * p,
            ci_half_width: 100.0 * 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub outcomes: Vec<MethodOutcome>,
    pub elapsed_seconds: f64,
}

impl ExperimentResult {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

/// Stream used by `trial` of a run seeded with `seed`. Child 0 draws the
/// design, child 1 the noise, and child 2 is the parent of the P2 replicate
/// streams.
pub fn trial_stream(seed: u64, trial: usize) -> RngStream {
    RngStream::new(seed).derive(trial as u64)
}

/// Rejection decisions of one trial, in the order of `plan.methods`.
pub fn run_trial(plan: &ExperimentPlan, process: &ProcessSpec, theta: &[f64], trial: usize) -> Result<Vec<bool>> {
    let stream = trial_stream(plan.seed, trial);
    let curves = simulate_design(process, plan.n, stream.derive(0));
    let responses = simulate_responses(&curves, process.grid(), theta, plan.noise_sd, stream.derive(1));
    let sample = FunctionalSample::new(process.grid().clone(), curves, responses)?;
    let collection = dimension_collection(plan.n, plan.kbar)?;
    let decomposition = fpca(&sample, collection.kbar())?;
    let tester = AdaptiveTester::new(&decomposition, collection)?;
    plan.methods
        .iter()
        .map(|m| {
            let calibration = match m {
                Method::P1 => Calibration::Bonferroni,
                Method::P2 => Calibration::MonteCarlo {
                    replicates: plan.replicates,
                    stream: stream.derive(2),
                },
            };
            Ok(tester.run(sample.responses(), plan.alpha, calibration)?.reject)
        })
        .collect()
}

/// Runs every trial of `plan` (in parallel) and tallies rejections.
///
/// Counts depend only on the plan, not on scheduling. The first failing
/// trial aborts the run.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let start = Instant::now();
    let process = plan.process.build()?;
    let theta = plan.slope.evaluate(&process)?;
    let decisions = (0..plan.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(plan, &process, &theta, t).map_err(|e| match e {
                FlmError::Config(msg) => FlmError::Config(format!("trial {t}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes = plan
        .methods
        .iter()
        .enumerate()
        .map(|(i, &m)| MethodOutcome::new(m, decisions.iter().filter(|d| d[i]).count(), plan.trials))
        .collect();
    Ok(ExperimentResult {
        plan: plan.clone(),
        outcomes,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
