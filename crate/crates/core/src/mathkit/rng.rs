//! Seeded random streams.
//!
//! Every random draw in the workbench comes from a [`SimRng`] (ChaCha12)
//! built by [`stream`]. A stream is identified by a 64-bit seed and a 64-bit
//! stream id; ChaCha's native stream counter gives 2^64 independent,
//! non-overlapping sequences per seed. Stream ids are allocated by purpose
//! (see [`streams`]) and, for nested work such as sweep jobs or clustering
//! candidates, by [`derive`], which mixes a parent seed with a label through
//! SplitMix64 before opening the stream.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha12Rng;

/// Stream ids by purpose.
pub mod streams {
    /// Parameter initialization (codebook pre-parameters, decoder weights).
    pub const INIT: u64 = 1;
    /// Training batches (targets, observations, fading, noise).
    pub const TRAIN: u64 = 2;
    /// Final Monte-Carlo evaluation.
    pub const EVAL: u64 = 3;
    /// Held-out validation used to pick the clustering threshold.
    pub const VALIDATION: u64 = 4;
    /// Random baseline codebooks.
    pub const CODEBOOK: u64 = 5;
}

/// Opens stream `stream` of generator `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for a labelled sub-task of `seed`.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One draw of CN(0, 1): real and imaginary parts i.i.d. N(0, 1/2).
pub fn standard_complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(
        re * std::f64::consts::FRAC_1_SQRT_2,
        im * std::f64::consts::FRAC_1_SQRT_2,
    )
}

/// `n` i.i.d. circularly-symmetric unit-variance complex Gaussians.
pub fn sample_standard_complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| standard_complex_gaussian(rng)).collect()
}
