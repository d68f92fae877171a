//! Special functions, distribution tails and quantiles, and seeded random
//! streams shared by the rest of the crate.

pub mod distributions;
pub mod rng;
pub mod special;

pub use distributions::{
    chi2_density, chi2_upper_quantile, chi2_upper_tail, fisher_density, fisher_upper_quantile, fisher_upper_tail, TailProb,
};
pub use rng::{sample_standard_normal, RngStream, StreamRng};
pub use special::{standard_normal_cdf, standard_normal_quantile};
