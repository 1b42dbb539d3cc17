//! Byte-oriented range coder: 32-bit range, 16-bit frequency tables, carries
//! propagated through a pending-byte counter.
//!
//! The first output byte is always 0 and the encoder flushes 4 more bytes, so
//! the decoder consumes exactly the bytes the encoder wrote.

use super::freq::{FrequencyTable, PRECISION_BITS};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn encode(&mut self, table: &FrequencyTable, symbol: u8) {
        assert!(symbol != 0, "symbol 0 is not in the alphabet");
        let r = self.range >> PRECISION_BITS;
        self.low += table.cum(symbol) as u64 * r as u64;
        self.range = table.freq(symbol) * r;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut b = self.cache;
            while self.pending > 0 {
                self.out.push(b.wrapping_add(carry));
                b = 0xFF;
                self.pending -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Bytes emitted so far (excluding pending and flush bytes).
    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    range: u32,
    code: u32,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(Error::Truncated);
        }
        if bytes[0] != 0 {
            return Err(Error::Format("corrupt range-coded payload".into()));
        }
        Ok(RangeDecoder {
            range: u32::MAX,
            code: u32::from_be_bytes(bytes[1..5].try_into().unwrap()),
            bytes,
            pos: 5,
        })
    }

    pub fn decode(&mut self, table: &FrequencyTable) -> Result<u8> {
        let r = self.range >> PRECISION_BITS;
        let target = self.code / r;
        if target >> PRECISION_BITS != 0 {
            return Err(Error::Format("corrupt range-coded payload".into()));
        }
        let s = table.lookup(target);
        self.code -= table.cum(s) * r;
        self.range = table.freq(s) * r;
        if self.code >= self.range {
            return Err(Error::Format("corrupt range-coded payload".into()));
        }
        while self.range < TOP {
            let b = *self.bytes.get(self.pos).ok_or(Error::Truncated)?;
            self.pos += 1;
            self.code = (self.code << 8) | b as u32;
            self.range <<= 8;
        }
        Ok(s)
    }

    /// Fails unless every byte was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Supplies the table for the `i`-th symbol of a stream and learns from it.
pub trait TableSource {
    fn table(&mut self, index: usize) -> Result<FrequencyTable>;
    fn observe(&mut self, _index: usize, _symbol: u8) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(usize) -> FrequencyTable> TableSource for F {
    fn table(&mut self, index: usize) -> Result<FrequencyTable> {
        Ok(self(index))
    }
}

pub fn rc_encode(symbols: &[u8], source: &mut impl TableSource) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        if s == 0 {
            return Err(Error::InvalidArgument("symbol 0 is not codable".into()));
        }
        enc.encode(&source.table(i)?, s);
        source.observe(i, s)?;
    }
    Ok(enc.finish())
}

pub fn rc_decode(bytes: &[u8], count: usize, source: &mut impl TableSource) -> Result<Vec<u8>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let s = dec.decode(&source.table(i)?)?;
        source.observe(i, s)?;
        out.push(s);
    }
    dec.finish()?;
    Ok(out)
}
