//! Count-based context model: per hashed context, add-one smoothed symbol
//! counts updated after every coded symbol.

use std::collections::HashMap;

use crate::coder::freq::ALPHABET;

pub const MAX_CONTEXT_BITS: u8 = 16;

/// Context id from the parent symbol, the child slot and the six face
/// neighbours, hashed down to `bits` bits.
pub fn adaptive_context(parent_symbol: u8, slot: u8, neighbours: u8, bits: u8) -> u32 {
    if bits == 0 {
        return 0;
    }
    let raw = parent_symbol as u32 | (slot as u32 & 7) << 8 | (neighbours as u32 & 63) << 11;
    raw.wrapping_mul(0x9E37_79B1) >> (32 - bits as u32)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdaptiveCounts {
    tables: HashMap<u32, (Vec<u32>, u32)>,
}

impl AdaptiveCounts {
    /// `(count(s) + 1) / (total + 255)`.
    pub fn probability(&self, ctx: u32, s: u8) -> f64 {
        match self.tables.get(&ctx) {
            Some((c, total)) => (c[s as usize - 1] + 1) as f64 / (*total as f64 + ALPHABET as f64),
            None => 1.0 / ALPHABET as f64,
        }
    }

    pub fn distribution(&self, ctx: u32) -> [f64; ALPHABET] {
        match self.tables.get(&ctx) {
            Some((c, total)) => {
                let denom = *total as f64 + ALPHABET as f64;
                std::array::from_fn(|i| (c[i] + 1) as f64 / denom)
            }
            None => [1.0 / ALPHABET as f64; ALPHABET],
        }
    }

    pub fn observe(&mut self, ctx: u32, s: u8) {
        let (c, total) = self
            .tables
            .entry(ctx)
            .or_insert_with(|| (vec![0; ALPHABET], 0));
        c[s as usize - 1] += 1;
        *total += 1;
    }

    pub fn contexts(&self) -> usize {
        self.tables.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_context_is_uniform() {
        let a = AdaptiveCounts::default();
        assert_eq!(a.probability(5, 17), 1.0 / 255.0);
        assert!(a.distribution(5).iter().all(|&p| p == 1.0 / 255.0));
    }

    #[test]
    fn one_observation() {
        let mut a = AdaptiveCounts::default();
        a.observe(3, 255);
        assert_eq!(a.probability(3, 255), 2.0 / 256.0);
        assert_eq!(a.probability(3, 1), 1.0 / 256.0);
        assert_eq!(a.probability(4, 255), 1.0 / 255.0);
    }

    #[test]
    fn context_hash_range() {
        assert_eq!(adaptive_context(200, 5, 63, 0), 0);
        for bits in 1..=16 {
            for p in [1u8, 77, 255] {
                assert!(adaptive_context(p, 7, 63, bits) < 1 << bits);
            }
        }
        // distinct raw contexts stay distinct at full width
        let mut seen = std::collections::HashSet::new();
        for p in 0..=255u8 {
            for s in 0..8 {
                seen.insert(adaptive_context(p, s, 0, 16));
            }
        }
        assert!(seen.len() > 1900);
    }
}
