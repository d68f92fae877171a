#![allow(dead_code)]

use flmtest_core::numerics::sample_standard_normal;
use flmtest_core::{FunctionalSample, Grid, RngStream};
use nalgebra::{DMatrix, DVector};

pub fn gaussian_matrix(rows: usize, cols: usize, stream: RngStream) -> DMatrix<f64> {
    DMatrix::from_vec(rows, cols, sample_standard_normal(stream, rows * cols))
}

pub fn gaussian_vector(len: usize, stream: RngStream) -> DVector<f64> {
    DVector::from_vec(sample_standard_normal(stream, len))
}

/// White-noise curves on a uniform grid of `[0, 1]` with Gaussian responses.
pub fn random_sample(n: usize, p: usize, seed: u64) -> FunctionalSample {
    let s = RngStream::new(seed);
    let grid = Grid::uniform(0.0, 1.0, p).unwrap();
    FunctionalSample::new(grid, gaussian_matrix(n, p, s.derive(0)), gaussian_vector(n, s.derive(1))).unwrap()
}

/// Integer in `[lo, hi]`.
pub fn pick(stream: RngStream, lo: usize, hi: usize) -> usize {
    let u = stream.generator().uniform_open();
    lo + ((hi - lo + 1) as f64 * u) as usize
}
