//! Adaptive tests over a dyadic collection of dimensions.
//!
//! The statistic is `sup_k [φ_k - k̂ F̄⁻¹_{k̂, n-k̂}(w)]` over
//! `k ∈ {1, 2, 4, …, k̄_n}` with `k ≤ rank Γ̂_n`. The weight `w` is either the
//! Bonferroni level `α / |K_n|` (P1) or the conditional α-quantile of
//! `min_k F̄(φ_k(Z, X) / k̂)` for a standard Gaussian `Z`, estimated by Monte
//! Carlo (P2).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::fda::{FpcaResult, FunctionalSample, MIN_OBSERVATIONS};
use crate::flm_test::{build_projection, build_subspace_projection, phi_statistic, ProjectionContext};
use crate::linalg::orthonormal_columns;
use crate::numerics::RngStream;

/// Replicates used for P2 when none are specified.
pub const DEFAULT_REPLICATES: usize = 1000;
/// Smallest accepted number of P2 replicates.
pub const MIN_REPLICATES: usize = 100;

/// Dyadic dimensions `{1, 2, 4, …, k̄}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionCollection {
    dims: Vec<usize>,
    kbar: usize,
}

impl DimensionCollection {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn kbar(&self) -> usize {
        self.kbar
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

/// `k̄_n = 2^{⌊log₂ n⌋ - 1}` unless overridden by a power of two `≤ n/2`.
pub fn dimension_collection(n: usize, kbar_override: Option<usize>) -> Result<DimensionCollection> {
    if n < MIN_OBSERVATIONS {
        return Err(FlmError::TooFewObservations {
            min: MIN_OBSERVATIONS,
            got: n,
        });
    }
    let kbar = match kbar_override {
        Some(k) => {
            if k == 0 || !k.is_power_of_two() || 2 * k > n {
                return Err(FlmError::InvalidDimension(format!(
                    "k̄ override must be a power of two in [1, n/2]; got {k} with n = {n}"
                )));
            }
            k
        }
        None => {
            let log2 = usize::BITS - 1 - n.leading_zeros();
            1usize << (log2 - 1)
        }
    };
    let dims = std::iter::successors(Some(1usize), |&k| Some(2 * k))
        .take_while(|&k| k <= kbar)
        .collect();
    Ok(DimensionCollection { dims, kbar })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Bonferroni weight.
    P1,
    /// Conditional Monte-Carlo quantile.
    P2,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::P1 => "p1",
            Method::P2 => "p2",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = FlmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "bonferroni" => Ok(Method::P1),
            "p2" | "monte-carlo" | "montecarlo" => Ok(Method::P2),
            other => Err(FlmError::Config(format!("unknown calibration method '{other}'"))),
        }
    }
}

/// How to choose the weight `α_{K_n}(X)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    Bonferroni,
    MonteCarlo { replicates: usize, stream: RngStream },
}

impl Calibration {
    pub fn method(&self) -> Method {
        match self {
            Calibration::Bonferroni => Method::P1,
            Calibration::MonteCarlo { .. } => Method::P2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationWeight {
    pub method: Method,
    pub alpha: f64,
    pub weight: f64,
    pub mc_replicates: Option<usize>,
    pub mc_stream: Option<RngStream>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FlmError::Domain(format!("level {alpha} not in (0, 1)")))
    }
}

/// P1: `α / |K_n|`.
pub fn bonferroni_weight(alpha: f64, collection: &DimensionCollection) -> Result<CalibrationWeight> {
    check_alpha(alpha)?;
    Ok(CalibrationWeight {
        method: Method::P1,
        alpha,
        weight: alpha / collection.len() as f64,
        mc_replicates: None,
        mc_stream: None,
    })
}

/// P2: empirical α-quantile of `min_k F̄(φ_k(Z, X)/k̂)` over `replicates`
/// Gaussian vectors `Z`. Replicate `b` draws from `stream.derive(b)`.
///
/// The quantile is the `⌊αB⌋`-th order statistic (at least the first).
pub fn monte_carlo_weight(
    contexts: &[ProjectionContext],
    alpha: f64,
    replicates: usize,
    stream: RngStream,
) -> Result<CalibrationWeight> {
    check_alpha(alpha)?;
    if replicates < MIN_REPLICATES {
        return Err(FlmError::Config(format!(
            "Monte-Carlo calibration needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let Some(first) = contexts.first() else {
        return Err(FlmError::Config("no projection contexts to calibrate".into()));
    };
    let n = first.n();
    if let Some(bad) = contexts.iter().find(|c| c.n() != n) {
        return Err(FlmError::DimensionMismatch {
            what: "projection context sample size",
            expected: n,
            got: bad.n(),
        });
    }

    let mut z = DMatrix::<f64>::zeros(n, replicates);
    z.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(b, col)| stream.derive(b as u64).generator().fill_standard_normal(col));
    let norms: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();

    let mut min_p = vec![1.0_f64; replicates];
    for ctx in contexts {
        let phis = ctx.phi_columns(&z, &norms);
        for (m, phi) in min_p.iter_mut().zip(phis) {
            let p = if phi.is_infinite() { 0.0 } else { ctx.p_value(phi) };
            if p < *m {
                *m = p;
            }
        }
    }
    min_p.sort_by(f64::total_cmp);
    let order = ((alpha * replicates as f64).floor() as usize).max(1);
    Ok(CalibrationWeight {
        method: Method::P2,
        alpha,
        weight: min_p[order - 1],
        mc_replicates: Some(replicates),
        mc_stream: Some(stream),
    })
}

/// Audit line for one tested dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionOutcome {
    pub k: usize,
    pub k_effective: usize,
    /// Numerator degrees of freedom of the reference Fisher law.
    pub df_num: usize,
    pub df_den: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub margin: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTestResult {
    pub per_k: Vec<DimensionOutcome>,
    /// `max_k (φ_k - threshold_k)`; `-∞` when no dimension is admissible.
    pub supremum_margin: f64,
    pub reject: bool,
    pub selected_k: Option<usize>,
    pub weight: CalibrationWeight,
    pub collection: Vec<usize>,
    pub rank: usize,
    /// Dimension of the null subspace (0 for `θ = 0`).
    pub null_dim: usize,
}

/// Projections for every admissible dimension of a collection, built once
/// and reused across response vectors and calibration methods.
#[derive(Debug, Clone)]
pub struct AdaptiveTester {
    collection: DimensionCollection,
    contexts: Vec<ProjectionContext>,
    rank: usize,
    null_dim: usize,
}

impl AdaptiveTester {
    /// Tester for `θ = 0`.
    pub fn new(fpca: &FpcaResult, collection: DimensionCollection) -> Result<Self> {
        let contexts = collection
            .dims()
            .iter()
            .filter(|&&k| k <= fpca.rank())
            .map(|&k| build_projection(fpca, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(AdaptiveTester {
            collection,
            contexts,
            rank: fpca.rank(),
            null_dim: 0,
        })
    }

    /// Tester for `θ ∈ V`; `null_scores` is the `n × p_V` matrix
    /// `⟨X_i, ξ_j⟩` for a basis `ξ` of `V`.
    pub fn for_subspace(
        fpca: &FpcaResult,
        collection: DimensionCollection,
        null_scores: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = fpca.n();
        let p_v = null_scores.ncols();
        if 2 * p_v >= n && p_v > 0 {
            return Err(FlmError::InvalidDimension(format!(
                "null subspace dimension {p_v} must be below n/2 (n = {n})"
            )));
        }
        let q_v = orthonormal_columns(null_scores, None);
        if q_v.ncols() < p_v {
            return Err(FlmError::RankDeficient(format!(
                "projected null basis has rank {} < {p_v}",
                q_v.ncols()
            )));
        }
        let q_v = Arc::new(q_v);
        let contexts = collection
            .dims()
            .iter()
            .filter(|&&k| k <= fpca.rank())
            .map(|&k| build_subspace_projection(fpca, k, Arc::clone(&q_v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AdaptiveTester {
            collection,
            contexts,
            rank: fpca.rank(),
            null_dim: p_v,
        })
    }

    pub fn contexts(&self) -> &[ProjectionContext] {
        &self.contexts
    }

    pub fn collection(&self) -> &DimensionCollection {
        &self.collection
    }

    pub fn weight(&self, alpha: f64, calibration: Calibration) -> Result<CalibrationWeight> {
        match calibration {
            Calibration::Bonferroni => bonferroni_weight(alpha, &self.collection),
            Calibration::MonteCarlo { replicates, stream } => {
                if self.contexts.is_empty() {
                    // Nothing to test; the weight is never used.
                    check_alpha(alpha)?;
                    return Ok(CalibrationWeight {
                        method: Method::P2,
                        alpha,
                        weight: alpha,
                        mc_replicates: Some(replicates),
                        mc_stream: Some(stream),
                    });
                }
                monte_carlo_weight(&self.contexts, alpha, replicates, stream)
            }
        }
    }

    /// Evaluates the sup-statistic against a precomputed weight.
    pub fn evaluate(&self, responses: &DVector<f64>, weight: CalibrationWeight) -> Result<AdaptiveTestResult> {
        let mut per_k = Vec::with_capacity(self.contexts.len());
        let mut best: Option<(usize, f64)> = None;
        for ctx in &self.contexts {
            let statistic = phi_statistic(ctx, responses)?;
            let threshold = ctx.threshold(weight.weight)?;
            let margin = statistic - threshold;
            let p_value = if statistic.is_infinite() { 0.0 } else { ctx.p_value(statistic) };
            if best.map_or(true, |(_, m)| margin > m) {
                best = Some((ctx.k_requested(), margin));
            }
            per_k.push(DimensionOutcome {
                k: ctx.k_requested(),
                k_effective: ctx.k_effective(),
                df_num: ctx.numerator_dim(),
                df_den: ctx.residual_dof(),
                statistic,
                threshold,
                margin,
                p_value,
            });
        }
        let supremum_margin = best.map_or(f64::NEG_INFINITY, |(_, m)| m);
        Ok(AdaptiveTestResult {
            per_k,
            supremum_margin,
            reject: supremum_margin > 0.0,
            selected_k: best.map(|(k, _)| k),
            weight,
            collection: self.collection.dims().to_vec(),
            rank: self.rank,
            null_dim: self.null_dim,
        })
    }

    pub fn run(&self, responses: &DVector<f64>, alpha: f64, calibration: Calibration) -> Result<AdaptiveTestResult> {
        let weight = self.weight(alpha, calibration)?;
        self.evaluate(responses, weight)
    }
}

/// The adaptive test of `θ = 0` (T(1) with P1, T(2) with P2).
pub fn adaptive_test(
    sample: &FunctionalSample,
    fpca: &FpcaResult,
    alpha: f64,
    calibration: Calibration,
    kbar_override: Option<usize>,
) -> Result<AdaptiveTestResult> {
    let collection = dimension_collection(sample.n(), kbar_override)?;
    AdaptiveTester::new(fpca, collection)?.run(sample.responses(), alpha, calibration)
}

/// Scores `⟨X_i, ξ_j⟩` of the curves on a null-subspace basis (row `j` of
/// `basis` is `ξ_j` on the sample grid). Fails if the basis functions are
/// linearly dependent in the quadrature inner product.
pub fn null_basis_scores(sample: &FunctionalSample, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let grid = sample.grid();
    let p_v = basis.nrows();
    if p_v > 0 && basis.ncols() != grid.len() {
        return Err(FlmError::DimensionMismatch {
            what: "null basis function length",
            expected: grid.len(),
            got: basis.ncols(),
        });
    }
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let embedded = DMatrix::from_fn(grid.len(), p_v, |i, j| basis[(j, i)] * sqrt_w[i]);
    if orthonormal_columns(&embedded, None).ncols() < p_v {
        return Err(FlmError::RankDeficient(
            "null basis functions are linearly dependent on the grid".into(),
        ));
    }
    let mut scores = DMatrix::<f64>::zeros(sample.n(), p_v);
    for j in 0..p_v {
        let xi = basis.row(j);
        for i in 0..sample.n() {
            scores[(i, j)] = grid.dot_unchecked(sample.curves().row(i).iter().copied(), xi.iter().copied());
        }
    }
    Ok(scores)
}

/// Adaptive test of `θ ∈ span(ξ_1, …, ξ_p)`; row `j` of `basis` is `ξ_j`
/// on the sample grid. An empty basis gives the test of `θ = 0`.
pub fn subspace_test(
    sample: &FunctionalSample,
    fpca: &FpcaResult,
    basis: &DMatrix<f64>,
    alpha: f64,
    calibration: Calibration,
    kbar_override: Option<usize>,
) -> Result<AdaptiveTestResult> {
    let null_scores = null_basis_scores(sample, basis)?;
    let collection = dimension_collection(sample.n(), kbar_override)?;
    AdaptiveTester::for_subspace(fpca, collection, &null_scores)?.run(sample.responses(), alpha, calibration)
}
