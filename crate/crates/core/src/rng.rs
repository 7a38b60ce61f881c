//! Seed derivation and Gaussian sampling.
//!
//! Every random stream in a run is derived from one user-visible seed:
//! `derive_seed(seed, tag)` hashes the tag with FNV-1a, xors it into the seed
//! and passes the result through the SplitMix64 finalizer. Each stream is a
//! ChaCha8 generator seeded with the derived value, so the streams for the
//! backbone initialization, the embedding, each modulator and the batch
//! shuffle never interact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for the stream named `tag`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a(tag))
}

pub fn stream(seed: u64, tag: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}

/// Uniform draw in the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 53 random bits, shifted by half an ulp so 0 is never returned.
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [0, 1).
pub fn unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Pair of independent standard normals via the Box-Muller transform.
pub fn normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

/// Uniform draw in [-bound, bound).
pub fn symmetric<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    (2.0 * unit(rng) - 1.0) * bound
}

/// Fisher-Yates shuffle driven by `unit` draws.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = (unit(rng) * (i + 1) as f64) as usize;
        items.swap(i, j.min(i));
    }
}
