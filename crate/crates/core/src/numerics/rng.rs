//! Deterministic random streams.
//!
//! A stream is identified by `(seed, stream_id)`. Child streams are derived
//! from a parent and an index, so every trial and every Monte-Carlo replicate
//! owns an independent generator whose output does not depend on the order in
//! which work is scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::special::standard_normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream_id: 0 }
    }

    pub fn with_id(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Child stream number `index`.
    pub fn derive(&self, index: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        RngStream {
            seed: self.seed,
            stream_id: id,
        }
    }

    pub fn generator(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        StreamRng { rng }
    }
}

/// Generator attached to one [`RngStream`].
pub struct StreamRng {
    rng: ChaCha8Rng,
}

impl StreamRng {
    /// Uniform draw in the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inversion of a uniform.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        standard_normal_quantile(self.uniform_open())
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }
}

/// `count` i.i.d. standard normal draws from `stream`.
pub fn sample_standard_normal(stream: RngStream, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    stream.generator().fill_standard_normal(&mut out);
    out
}
