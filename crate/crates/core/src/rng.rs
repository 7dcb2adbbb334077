//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is
//! derived from the run seed plus a purpose tag and indices, so changing how
//! many numbers one consumer draws never perturbs another consumer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Purpose tags for derived streams.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    NoiseZ = 3,
    NoiseC = 4,
    Folds = 5,
    FoldSeed = 8,
    Synthetic = 6,
    SyntheticDecoder = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a generator for `(seed, stream, indices...)`.
pub fn derive(seed: u64, stream: Stream, indices: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// A fresh seed for sub-task `index` (e.g. a CV fold) of a seeded run.
pub fn sub_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    use rand::RngCore;
    derive(seed, stream, &[index]).next_u64()
}

pub fn standard_normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniformly random unit vector of length `dim`.
pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = standard_normals(rng, dim);
        let n = crate::tensor::norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
