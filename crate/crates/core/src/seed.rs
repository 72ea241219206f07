//! Master-seed expansion.
//!
//! Every randomized stage gets its own seed derived from the master seed, a
//! stage tag and an index, so stages and parallel tasks never share a
//! generator and results do not depend on scheduling.

/// Stage tags for [`derive`].
pub mod stage {
    pub const PARTITION: u64 = 1;
    pub const MASK: u64 = 2;
    pub const WITNESS: u64 = 3;
    pub const TIE_NAMES: u64 = 4;
    pub const PLACE: u64 = 5;
    pub const ATTACK: u64 = 6;
    pub const RANDOM_KEY: u64 = 7;
    pub const METRICS: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for task `index` of `stage` under `master`.
pub fn derive(master: u64, stage: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stage) ^ index)
}
