//! Seed derivation and sampling helpers.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 64-bit
//! seed is derived from a global seed, a stream name and a list of cell
//! coordinates:
//!
//! ```text
//! h0 = splitmix64(global)
//! h  = splitmix64(h0 ^ fnv1a64(name))
//! h  = splitmix64(h ^ coord_i)        for each coordinate in order
//! ```
//!
//! Adding sweep cells therefore never shifts the randomness of other cells.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Derives the seed of a named substream for one sweep cell.
pub fn derive_seed(global: u64, stream: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix64(splitmix64(global) ^ fnv1a64(stream.as_bytes()));
    for &c in coords {
        h = splitmix64(h ^ c);
    }
    h
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn named_stream(global: u64, name: &str, coords: &[u64]) -> StreamRng {
    stream(derive_seed(global, name, coords))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}
