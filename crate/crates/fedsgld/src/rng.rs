//! Deterministic substream derivation.
//!
//! Every source of randomness in a run is a ChaCha8 stream derived from
//! `(master_seed, purpose_tag, day, unit)`. Streams are independent of
//! thread scheduling, so parallel and sequential execution produce
//! identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child stream from the master seed.
///
/// The four components are packed into the 256-bit ChaCha seed directly;
/// distinct `(tag, day, unit)` triples give distinct, uncorrelated streams.
pub fn substream(master: u64, tag: &str, day: usize, unit: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master.to_le_bytes());
    let mut packed = [0u8; 8];
    for (i, b) in tag.bytes().enumerate() {
        packed[i % 8] ^= b.rotate_left((i / 8) as u32);
    }
    seed[8..16].copy_from_slice(&packed);
    seed[16..24].copy_from_slice(&(day as u64).to_le_bytes());
    seed[24..32].copy_from_slice(&unit.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_inputs_same_stream() {
        let mut s = substream(7, "node", 1, 3);
        let a: Vec<u64> = (0..8).map(|_| s.gen()).collect();
        let b: Vec<u64> = {
            let mut s = substream(7, "node", 1, 3);
            (0..8).map(|_| s.gen()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn components_separate_streams() {
        let base: u64 = substream(7, "node", 1, 3).gen();
        assert_ne!(base, substream(8, "node", 1, 3).gen::<u64>());
        assert_ne!(base, substream(7, "init", 1, 3).gen::<u64>());
        assert_ne!(base, substream(7, "node", 2, 3).gen::<u64>());
        assert_ne!(base, substream(7, "node", 1, 4).gen::<u64>());
    }
}
