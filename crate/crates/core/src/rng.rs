//! Counter-addressed random streams.
//!
//! Every independent piece of a simulation (the blinking trajectory, each
//! block of pulses, each block of detections, dark counts) draws from its own
//! ChaCha stream selected by `(seed, domain, index)`. Results therefore do not
//! depend on the order in which blocks are evaluated or on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which part of the simulation a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Blinking = 1,
    Emission = 2,
    Detection = 3,
    DarkCounts = 4,
    Synthetic = 5,
}

/// SplitMix64 finalizer, used to decorrelate user seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. one per detuning of a sweep.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}

/// The generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ ((domain as u64) << 56)));
    rng.set_stream(index);
    rng
}
