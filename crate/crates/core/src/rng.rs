//! Counter-addressable random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. Draw number `k` of a
//! stream always comes from the same ChaCha8 block counter, so results do not
//! depend on how paths are distributed over worker threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::special::{central_quantile, inverse_norm_cdf, CENTRAL_HALF_WIDTH};

/// Stream tag for the correlated Gaussian step vectors of a path.
pub const TAG_DRIVER: u64 = 1;
/// Stream tag for the independent Brownian motion W⊥ of a path.
pub const TAG_ORTHOGONAL: u64 = 2;

/// Identity of one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id }
    }

    /// Stream `tag` of path `path`.
    pub fn for_path(master_seed: u64, tag: u64, path: u64) -> Self {
        debug_assert!(path < (1 << 56));
        RngStream::new(master_seed, (tag << 56) | path)
    }

    /// Normal draws from the start of the stream.
    pub fn normals(&self) -> NormalStream {
        self.normals_at(0)
    }

    /// Normal draws starting at draw index `position`.
    pub fn normals_at(&self, position: u64) -> NormalStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        // Each draw consumes one u64, i.e. two 32-bit words.
        rng.set_word_pos(2 * position as u128);
        NormalStream { rng }
    }
}

/// Standard normal draws by inverse-CDF transform of 53-bit uniforms.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_norm_cdf(self.next_uniform())
    }

    /// Same values as repeated [`next_normal`](Self::next_normal) calls. The
    /// central branch is evaluated for a whole block first, then the tails
    /// are patched.
    pub fn fill(&mut self, out: &mut [f64]) {
        for block in out.chunks_mut(64) {
            for x in block.iter_mut() {
                *x = self.next_uniform();
            }
            transform_block(block);
        }
    }
}

fn transform_block(block: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { transform_block_avx2(block) };
    }
    transform_block_generic(block)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn transform_block_avx2(block: &mut [f64]) {
    transform_block_generic(block)
}

#[inline(always)]
fn transform_block_generic(block: &mut [f64]) {
    let mut q = [0.0; 64];
    let q = &mut q[..block.len()];
    for (qi, u) in q.iter_mut().zip(block.iter()) {
        *qi = u - 0.5;
    }
    for (x, qi) in block.iter_mut().zip(q.iter()) {
        *x = central_quantile(*qi);
    }
    for (x, qi) in block.iter_mut().zip(q.iter()) {
        if qi.abs() > CENTRAL_HALF_WIDTH {
            *x = inverse_norm_cdf(qi + 0.5);
        }
    }
}

/// SplitMix64 finalizer; mixes a master seed with a tag into a new seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
