//! Deterministic seeding.
//!
//! Seeds for each (cell, replication) pair are derived with the SplitMix64
//! finalizer (increment `0x9E3779B97F4A7C15`, multipliers `0xBF58476D1CE4E5B9`
//! and `0x94D049BB133111EB`, shifts 30/27/31). Per-candidate random values come
//! from ChaCha8 keyed by the cohort seed, one stream per candidate index, so the
//! values drawn for a candidate do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` of grid cell `cell`.
pub fn mix_seed(base_seed: u64, cell: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ cell) ^ rep)
}

/// Root generator for a seed; clone it and call `substream` for independent streams.
pub fn root_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(root: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = root.clone();
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the SplitMix64 reference generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn mixing_separates_cells_and_reps() {
        let a = mix_seed(1, 0, 0);
        assert_ne!(a, mix_seed(1, 0, 1));
        assert_ne!(a, mix_seed(1, 1, 0));
        assert_ne!(a, mix_seed(2, 0, 0));
        assert_eq!(a, mix_seed(1, 0, 0));
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let root = root_rng(42);
        let x: f64 = substream(&root, 7).random();
        let y: f64 = substream(&root, 7).random();
        let z: f64 = substream(&root, 8).random();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
