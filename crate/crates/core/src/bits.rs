// SPDX-License-Identifier: Apache-2.0

//! Fixed-width bit vectors indexed by directed link id.
//!
//! Link ids are 1-based and count from the rightmost bit, so bit 1 is the
//! least significant bit of the vector. Width is fixed at construction; all
//! binary operations require equal widths.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    width: u32,
    words: Vec<u64>,
}

impl BitVec {
    pub fn new(width: u32) -> Self {
        let words = vec![0u64; ((width as usize) + 63) / 64];
        BitVec { width, words }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Bit positions are 1-based; position 0 is invalid.
    pub fn set(&mut self, bit: u32) {
        assert!(bit >= 1 && bit <= self.width, "bit {} out of range 1..={}", bit, self.width);
        let i = (bit - 1) as usize;
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn clear(&mut self, bit: u32) {
        assert!(bit >= 1 && bit <= self.width, "bit {} out of range 1..={}", bit, self.width);
        let i = (bit - 1) as usize;
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    pub fn get(&self, bit: u32) -> bool {
        assert!(bit >= 1 && bit <= self.width, "bit {} out of range 1..={}", bit, self.width);
        let i = (bit - 1) as usize;
        self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn or_assign(&mut self, other: &BitVec) {
        assert_eq!(self.width, other.width, "width mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// True when every bit set in `mask` is also set in `self`.
    pub fn contains_all(&self, mask: &BitVec) -> bool {
        assert_eq!(self.width, mask.width, "width mismatch");
        self.words.iter().zip(&mask.words).all(|(a, b)| a & b == *b)
    }

    /// Ternary match: `self & mask == value & mask`.
    pub fn matches_masked(&self, value: &BitVec, mask: &BitVec) -> bool {
        assert_eq!(self.width, value.width, "width mismatch");
        assert_eq!(self.width, mask.width, "width mismatch");
        self.words
            .iter()
            .zip(&value.words)
            .zip(&mask.words)
            .all(|((a, v), m)| a & m == v & m)
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.width).filter(move |b| self.get(*b))
    }

    pub fn from_bits<I: IntoIterator<Item = u32>>(width: u32, bits: I) -> Self {
        let mut v = BitVec::new(width);
        for b in bits {
            v.set(b);
        }
        v
    }

    /// Little-endian bytes, padded to a whole byte; byte 0 holds bits 1..=8.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = ((self.width as usize) + 7) / 8;
        let mut out = vec![0u8; n];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = (self.words[i / 8] >> ((i % 8) * 8)) as u8;
        }
        out
    }

    pub fn from_bytes(width: u32, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != ((width as usize) + 7) / 8 {
            return None;
        }
        let mut v = BitVec::new(width);
        for (i, byte) in bytes.iter().enumerate() {
            v.words[i / 8] |= (*byte as u64) << ((i % 8) * 8);
        }
        // reject set bits beyond the declared width
        if width % 64 != 0 {
            let last = v.words.len() - 1;
            if v.words[last] >> (width % 64) != 0 {
                return None;
            }
        }
        Some(v)
    }

    /// Hex string, most significant nibble first, for stable JSON dumps.
    pub fn to_hex(&self) -> String {
        let bytes = self.to_bytes();
        let mut s = String::with_capacity(bytes.len() * 2);
        for b in bytes.iter().rev() {
            s.push_str(&format!("{:02x}", b));
        }
        s
    }
}

impl fmt::Debug for BitVec {
    // MSB-left binary string, e.g. width 8 with bits {1,3} -> "00000101"
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in (1..=self.width).rev() {
            f.write_str(if self.get(bit) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_roundtrip() {
        let mut v = BitVec::new(252);
        v.set(1);
        v.set(64);
        v.set(65);
        v.set(252);
        assert!(v.get(1) && v.get(64) && v.get(65) && v.get(252));
        assert!(!v.get(2) && !v.get(128));
        assert_eq!(v.count_ones(), 4);
        assert_eq!(v.ones().collect::<Vec<_>>(), vec![1, 64, 65, 252]);
    }

    #[test]
    fn bit_one_is_rightmost() {
        let v = BitVec::from_bits(8, [1, 3]);
        assert_eq!(format!("{:?}", v), "00000101");
    }

    #[test]
    fn ternary_match_semantics() {
        let visited = BitVec::from_bits(8, [1, 2, 4]);
        // rule: bit 3 must be zero
        let value = BitVec::new(8);
        let mask = BitVec::from_bits(8, [3]);
        assert!(visited.matches_masked(&value, &mask));
        // rule: bits 1 and 3 both one
        let m13 = BitVec::from_bits(8, [1, 3]);
        assert!(!visited.contains_all(&m13));
        assert!(visited.contains_all(&BitVec::from_bits(8, [1, 2])));
    }

    #[test]
    fn byte_roundtrip_rejects_overflow() {
        let v = BitVec::from_bits(10, [1, 9, 10]);
        let bytes = v.to_bytes();
        assert_eq!(bytes.len(), 2);
        assert_eq!(BitVec::from_bytes(10, &bytes).unwrap(), v);
        // a stray bit beyond width 10 must not decode
        let bad = vec![0x00, 0x08];
        assert!(BitVec::from_bytes(10, &bad).is_none());
        assert!(BitVec::from_bytes(10, &[0u8; 3]).is_none());
    }

    #[test]
    fn hex_is_msb_first() {
        let v = BitVec::from_bits(16, [1, 16]);
        assert_eq!(v.to_hex(), "8001");
    }
}
