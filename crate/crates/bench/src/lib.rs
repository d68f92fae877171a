//! Fixtures shared by the benchmarks.

use flmtest_core::simulation::{simulate_design, simulate_responses};
use flmtest_core::{FunctionalSample, ProcessSpec, RngStream, SlopeSpec};

/// Brownian sample of size `n` on the default 1000-point grid with a
/// moderate KL slope.
pub fn brownian_sample(n: usize, seed: u64) -> FunctionalSample {
    let process = ProcessSpec::brownian_default();
    let stream = RngStream::new(seed);
    let curves = simulate_design(&process, n, stream.derive(0));
    let theta = SlopeSpec::ThetaKl { b: 0.5, xi: 0.5 }
        .evaluate(&process)
        .expect("valid slope");
    let responses = simulate_responses(&curves, process.grid(), &theta, 1.0, stream.derive(1));
    FunctionalSample::new(process.grid().clone(), curves, responses).expect("valid sample")
}
