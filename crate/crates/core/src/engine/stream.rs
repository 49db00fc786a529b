//! Reproducible uniform streams, one per `(seed, replicate_index)` pair.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INV_2_52: f64 = 1.0 / (1u64 << 52) as f64;

/// Iterator over uniforms in the open interval (0, 1).
///
/// The generator is ChaCha8 keyed by `seed`, with the replicate index
/// selecting the 64-bit stream id. Streams for different replicate indices
/// never overlap and do not depend on the order in which they are created.
#[derive(Clone, Debug)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64, replicate_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate_index);
        Self { rng }
    }

    /// Next uniform: the midpoint of one of 2^52 equal cells of [0,1).
    /// Midpoints are exactly representable, so neither 0 nor 1 can occur.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        to_unit(self.rng.next_u64())
    }
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * INV_2_52
}

impl Iterator for UniformStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(self.next_uniform())
    }
}

/// Stream of uniforms for replicate `replicate_index` under `seed`.
pub fn uniform_stream(seed: u64, replicate_index: u64) -> UniformStream {
    UniformStream::new(seed, replicate_index)
}
