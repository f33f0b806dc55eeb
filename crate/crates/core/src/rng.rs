//! Seeded random streams.
//!
//! Every random quantity comes from a `ChaCha8Rng` whose 64-bit seed is derived
//! from a master seed, a purpose tag and a list of indices through SplitMix64
//! mixing. Independent purposes (pool, realization, noise, dataset, …) can thus
//! be regenerated separately.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Name of the generator, recorded next to seeds in every output.
pub const RNG_ALGORITHM: &str = "ChaCha8";

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Pool,
    Realization,
    Noise,
    Dataset,
    Training,
    Theory,
    Trial,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Pool => 0x706f_6f6c,
            Stream::Realization => 0x7265_616c,
            Stream::Noise => 0x6e6f_6973,
            Stream::Dataset => 0x6461_7461,
            Stream::Training => 0x7472_6169,
            Stream::Theory => 0x7468_656f,
            Stream::Trial => 0x7472_6961,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-stream seed from `master`, a purpose and indices.
pub fn derive_seed(master: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ stream.tag().rotate_left(17));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One circularly-symmetric CN(0, var) draw.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
