//! Discretized functional data: quadrature grids, samples of curves with
//! scalar responses, and functional principal component analysis.
//!
//! Curves live on a common grid `t_1 < … < t_p`; the L² inner product is
//! replaced by the quadrature rule `Σ w_i f(t_i) g(t_i)`. The empirical
//! covariance operator `Γ̂_n h = (1/n) Σ ⟨X_i, h⟩ X_i` is diagonalized either
//! through the `n × n` Gram matrix (when `p > n`) or through the weighted
//! `p × p` covariance matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::linalg::symmetric_eigen;

/// Eigenvalues at or below `RELATIVE_RANK_TOL * λ̂_1` do not count toward the
/// numerical rank of the empirical covariance operator.
pub const RELATIVE_RANK_TOL: f64 = 1e-12;

/// Quadrature grid on the curve domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Grid with trapezoidal weights.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let p = points.len();
        if p < 2 {
            return Err(FlmError::InvalidGrid(format!("need at least 2 points, got {p}")));
        }
        if let Some(i) = points.iter().position(|t| !t.is_finite()) {
            return Err(FlmError::InvalidGrid(format!("point {i} is not finite")));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FlmError::InvalidGrid(format!(
                "points must be strictly increasing (index {} -> {})",
                i,
                i + 1
            )));
        }
        let mut weights = vec![0.0; p];
        for i in 0..p - 1 {
            let h = 0.5 * (points[i + 1] - points[i]);
            weights[i] += h;
            weights[i + 1] += h;
        }
        Ok(Grid { points, weights })
    }

    /// `p` evenly spaced points on `[start, end]`, endpoints included.
    pub fn uniform(start: f64, end: f64, p: usize) -> Result<Self> {
        if p < 2 || !(end > start) {
            return Err(FlmError::InvalidGrid(format!(
                "uniform grid needs p >= 2 and start < end (got p={p}, [{start}, {end}])"
            )));
        }
        let h = (end - start) / (p - 1) as f64;
        let mut points: Vec<f64> = (0..p).map(|i| start + i as f64 * h).collect();
        points[p - 1] = end;
        Grid::new(points)
    }

    /// Grid with caller-supplied positive weights.
    pub fn with_weights(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(points)?;
        if weights.len() != grid.len() {
            return Err(FlmError::DimensionMismatch {
                what: "quadrature weights",
                expected: grid.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(FlmError::InvalidGrid("weights must be positive and finite".into()));
        }
        Ok(Grid { weights, ..grid })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn domain_length(&self) -> f64 {
        self.points[self.len() - 1] - self.points[0]
    }

    /// Quadrature inner product `Σ w_i f_i g_i`.
    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(FlmError::DimensionMismatch {
                what: "grid function",
                expected: self.len(),
                got: f.len(),
            });
        }
        if g.len() != self.len() {
            return Err(FlmError::DimensionMismatch {
                what: "grid function",
                expected: self.len(),
                got: g.len(),
            });
        }
        Ok(self.dot_unchecked(f.iter().copied(), g.iter().copied()))
    }

    #[inline]
    pub(crate) fn dot_unchecked(
        &self,
        f: impl Iterator<Item = f64>,
        g: impl Iterator<Item = f64>,
    ) -> f64 {
        self.weights.iter().zip(f.zip(g)).map(|(w, (a, b))| w * a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.inner_product(f, f)?.sqrt())
    }
}

/// Free-function form of [`Grid::inner_product`].
pub fn inner_product(f: &[f64], g: &[f64], grid: &Grid) -> Result<f64> {
    grid.inner_product(f, g)
}

/// `n` curves on a shared grid together with their scalar responses.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    curves: DMatrix<f64>,
    responses: DVector<f64>,
}

/// Smallest sample size accepted.
pub const MIN_OBSERVATIONS: usize = 4;

impl FunctionalSample {
    /// `curves` is `n × p`, row `i` holding `X_i` on the grid.
    pub fn new(grid: Grid, curves: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        let n = curves.nrows();
        if curves.ncols() != grid.len() {
            return Err(FlmError::DimensionMismatch {
                what: "curve length vs grid",
                expected: grid.len(),
                got: curves.ncols(),
            });
        }
        if responses.len() != n {
            return Err(FlmError::DimensionMismatch {
                what: "responses vs curves",
                expected: n,
                got: responses.len(),
            });
        }
        if n < MIN_OBSERVATIONS {
            return Err(FlmError::TooFewObservations {
                min: MIN_OBSERVATIONS,
                got: n,
            });
        }
        for i in 0..n {
            for j in 0..curves.ncols() {
                if !curves[(i, j)].is_finite() {
                    return Err(FlmError::NonFinite { row: i, col: j });
                }
            }
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return Err(FlmError::NonFinite { row: i, col: 0 });
        }
        Ok(FunctionalSample {
            grid,
            curves,
            responses,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn n(&self) -> usize {
        self.curves.nrows()
    }

    /// Same curves, new responses.
    pub fn with_responses(&self, responses: DVector<f64>) -> Result<Self> {
        FunctionalSample::new(self.grid.clone(), self.curves.clone(), responses)
    }
}

/// Removes the empirical mean curve and the mean response.
pub fn center_sample(sample: &FunctionalSample) -> FunctionalSample {
    let n = sample.n() as f64;
    let mut curves = sample.curves.clone();
    for mut col in curves.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    let mean_y = sample.responses.sum() / n;
    let responses = sample.responses.add_scalar(-mean_y);
    FunctionalSample {
        grid: sample.grid.clone(),
        curves,
        responses,
    }
}

/// Which matrix is diagonalized by [`fpca_with_route`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpcaRoute {
    /// Gram matrix when `p > n`, covariance matrix otherwise.
    Auto,
    Gram,
    Covariance,
}

/// Leading empirical eigenpairs of the covariance operator.
#[derive(Debug, Clone)]
pub struct FpcaResult {
    eigenvalues: Vec<f64>,
    /// `r × p`, row `j` is `V̂_j` on the grid.
    eigenfunctions: DMatrix<f64>,
    /// `n × r`, entry `(i, j)` is `⟨X_i, V̂_j⟩`.
    scores: DMatrix<f64>,
    rank: usize,
    total_variance: f64,
}

impl FpcaResult {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn eigenfunction(&self, j: usize) -> Vec<f64> {
        self.eigenfunctions.row(j).iter().copied().collect()
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    /// Numerical rank of `Γ̂_n`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of eigenpairs retained.
    pub fn components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `(1/n) Σ ‖X_i‖²`, the trace of `Γ̂_n`.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }
}

/// FPCA of the (uncentered) curves of `sample`.
pub fn fpca(sample: &FunctionalSample, max_components: usize) -> Result<FpcaResult> {
    fpca_with_route(sample.curves(), sample.grid(), max_components, FpcaRoute::Auto)
}

pub fn fpca_with_route(
    curves: &DMatrix<f64>,
    grid: &Grid,
    max_components: usize,
    route: FpcaRoute,
) -> Result<FpcaResult> {
    let n = curves.nrows();
    let p = curves.ncols();
    if p != grid.len() {
        return Err(FlmError::DimensionMismatch {
            what: "curve length vs grid",
            expected: grid.len(),
            got: p,
        });
    }
    if n == 0 {
        return Err(FlmError::TooFewObservations { min: 1, got: 0 });
    }
    if max_components == 0 || max_components > n {
        return Err(FlmError::InvalidDimension(format!(
            "max_components must lie in 1..={n}, got {max_components}"
        )));
    }
    let w = grid.weights();
    let nf = n as f64;

    let mut weighted = curves.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= w[j];
    }
    let total_variance = curves.component_mul(&weighted).sum() / nf;

    let use_gram = match route {
        FpcaRoute::Auto => p > n,
        FpcaRoute::Gram => true,
        FpcaRoute::Covariance => false,
    };

    let (values, mut functions) = if use_gram {
        // M_il = <X_i, X_l> / n
        let mut gram = &weighted * curves.transpose();
        gram /= nf;
        symmetrize(&mut gram);
        let eig = symmetric_eigen(&gram)?;
        let r = retained(&eig.values, max_components);
        let u = eig.vectors.columns(0, r);
        // V_j ∝ Σ_i u_ij X_i, normalized in the quadrature norm.
        let raw = u.transpose() * curves; // r × p
        let mut functions = raw;
        for mut row in functions.row_iter_mut() {
            let nrm = grid.dot_unchecked(row.iter().copied(), row.iter().copied()).sqrt();
            if nrm > 0.0 {
                row /= nrm;
            }
        }
        (eig.values, functions)
    } else {
        let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let mut scaled = curves.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= sqrt_w[j];
        }
        let mut cov = scaled.transpose() * &scaled;
        cov /= nf;
        symmetrize(&mut cov);
        let eig = symmetric_eigen(&cov)?;
        let r = retained(&eig.values, max_components);
        let mut functions = DMatrix::<f64>::zeros(r, p);
        for j in 0..r {
            for i in 0..p {
                functions[(j, i)] = eig.vectors[(i, j)] / sqrt_w[i];
            }
        }
        (eig.values, functions)
    };

    let rank = numerical_rank(&values);
    let r = functions.nrows();
    let eigenvalues: Vec<f64> = values[..r].to_vec();

    // Sign: largest |√w_i V(t_i)| coordinate positive, first index on ties.
    for mut row in functions.row_iter_mut() {
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for (i, v) in row.iter().enumerate() {
            let mag = (v * v * w[i]).sqrt();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if row[best] < 0.0 {
            row.neg_mut();
        }
    }

    let scores = &weighted * functions.transpose();

    Ok(FpcaResult {
        eigenvalues,
        eigenfunctions: functions,
        scores,
        rank,
        total_variance,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn numerical_rank(values: &[f64]) -> usize {
    match values.first() {
        Some(&top) if top > 0.0 => values.iter().take_while(|&&v| v > top * RELATIVE_RANK_TOL).count(),
        _ => 0,
    }
}

fn retained(values: &[f64], max_components: usize) -> usize {
    numerical_rank(values).min(max_components)
}
