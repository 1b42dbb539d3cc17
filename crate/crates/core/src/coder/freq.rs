//! Fixed-point frequency tables over the 255-symbol occupancy alphabet.

use crate::error::{Error, Result};

pub const ALPHABET: usize = 255;
pub const PRECISION_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION_BITS;

/// Frequencies of symbols `1..=255`, each at least 1, summing to `TOTAL`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    freq: [u32; ALPHABET],
    /// `cum[i]` = sum of `freq[..i]`; `cum[ALPHABET] == TOTAL`.
    cum: [u32; ALPHABET + 1],
}

impl FrequencyTable {
    /// Builds a table from explicit frequencies for symbols 1..=255.
    pub fn new(freq: [u32; ALPHABET]) -> Result<FrequencyTable> {
        if freq.contains(&0) {
            return Err(Error::InvalidArgument("zero frequency".into()));
        }
        let total: u64 = freq.iter().map(|&f| f as u64).sum();
        if total != TOTAL as u64 {
            return Err(Error::InvalidArgument(format!(
                "frequencies sum to {total}, expected {TOTAL}"
            )));
        }
        Ok(Self::from_valid(freq))
    }

    fn from_valid(freq: [u32; ALPHABET]) -> FrequencyTable {
        let mut cum = [0u32; ALPHABET + 1];
        for i in 0..ALPHABET {
            cum[i + 1] = cum[i] + freq[i];
        }
        FrequencyTable { freq, cum }
    }

    pub fn uniform() -> FrequencyTable {
        quantize_distribution(&[1.0 / ALPHABET as f64; ALPHABET])
    }

    /// Frequency of symbol `s` in `1..=255`.
    pub fn freq(&self, s: u8) -> u32 {
        self.freq[s as usize - 1]
    }

    /// Cumulative frequency below symbol `s`.
    pub fn cum(&self, s: u8) -> u32 {
        self.cum[s as usize - 1]
    }

    pub fn frequencies(&self) -> &[u32; ALPHABET] {
        &self.freq
    }

    /// Symbol whose interval contains `target < TOTAL`.
    pub fn lookup(&self, target: u32) -> u8 {
        debug_assert!(target < TOTAL);
        // last i with cum[i] <= target
        (self.cum.partition_point(|&c| c <= target) - 1) as u8 + 1
    }

    /// Ideal code length of `s` under this table, in bits.
    pub fn cost_bits(&self, s: u8) -> f64 {
        -(self.freq(s) as f64 / TOTAL as f64).log2()
    }

    pub fn to_distribution(&self) -> [f64; ALPHABET] {
        self.freq.map(|f| f as f64 / TOTAL as f64)
    }
}

/// Largest-remainder apportionment of `p * TOTAL` with a floor of 1.
///
/// Units missing after flooring go to the largest fractional remainders;
/// surplus created by the floor is taken back from the most over-allocated
/// symbols. Ties go to the lower symbol.
pub fn quantize_distribution(p: &[f64; ALPHABET]) -> FrequencyTable {
    let mut target = [0.0f64; ALPHABET];
    let mut freq = [0u32; ALPHABET];
    let mut sum: i64 = 0;
    for i in 0..ALPHABET {
        let t = (p[i].max(0.0) * TOTAL as f64).min(TOTAL as f64);
        target[i] = t;
        freq[i] = (t.floor() as u32).max(1);
        sum += freq[i] as i64;
    }
    let diff = TOTAL as i64 - sum;
    if diff != 0 {
        let mut order: Vec<usize> = (0..ALPHABET).collect();
        if diff > 0 {
            // remainder t - f, largest first
            order.sort_by(|&a, &b| {
                let ra = target[a] - freq[a] as f64;
                let rb = target[b] - freq[b] as f64;
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let mut left = diff as u32;
            while left > 0 {
                for &i in &order {
                    if left == 0 {
                        break;
                    }
                    freq[i] += 1;
                    left -= 1;
                }
            }
        } else {
            // excess f - t, largest first
            order.sort_by(|&a, &b| {
                let ea = freq[a] as f64 - target[a];
                let eb = freq[b] as f64 - target[b];
                eb.total_cmp(&ea).then(a.cmp(&b))
            });
            let mut left = (-diff) as u32;
            while left > 0 {
                let mut progressed = false;
                for &i in &order {
                    if left == 0 {
                        break;
                    }
                    if freq[i] > 1 {
                        freq[i] -= 1;
                        left -= 1;
                        progressed = true;
                    }
                }
                assert!(progressed, "cannot satisfy floor of 1");
            }
        }
    }
    FrequencyTable::from_valid(freq)
}
