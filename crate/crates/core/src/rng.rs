//! Deterministic RNG plumbing. Independent streams are derived by a
//! counter-based split of (seed, index) so parallel and serial generation of
//! the same work items agree bit for bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed for work item `index` under `seed`.
pub fn split(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(splitmix64(index ^ 0xa076_1d64_78bd_642f)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, index: u64) -> StreamRng {
    stream(split(seed, index))
}

/// Standard normal via Box-Muller (two uniforms per pair of draws).
pub fn normal(rng: &mut StreamRng) -> f64 {
    loop {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let v = r * (2.0 * std::f64::consts::PI * u2).cos();
        if v.is_finite() {
            return v;
        }
    }
}

/// Zero-location Laplace with scale b (variance 2 b^2), by inverse CDF.
pub fn laplace(rng: &mut StreamRng, scale: f64) -> f64 {
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Standard logistic by inverse CDF.
pub fn logistic(rng: &mut StreamRng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    (u / (1.0 - u)).ln()
}
