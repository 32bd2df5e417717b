//! Owned bit strings used for transcripts, digests and codewords.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Little-endian bits of `value`, `width` of them.
    pub fn from_u64(value: u64, width: usize) -> Self {
        Self((0..width).map(|i| i < 64 && (value >> i) & 1 == 1).collect())
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }

    /// MSB-first bits of each byte.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(
            bytes
                .iter()
                .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
                .collect(),
        )
    }

    /// Packs MSB-first into bytes, zero-padding the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|c| {
                c.iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    pub fn to_u64(&self) -> u64 {
        self.0
            .iter()
            .take(64)
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0.get(i).copied()
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        Self(self.0[start..end].to_vec())
    }

    pub fn truncate(&mut self, len: usize) {
        self.0.truncate(len);
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn hamming(&self, other: &BitString) -> usize {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_roundtrip_msb_first() {
        let b = BitString::from_bytes(&[0b1010_0001, 0xff]);
        assert_eq!(b.to_string(), "1010000111111111");
        assert_eq!(b.to_bytes(), vec![0b1010_0001, 0xff]);
    }

    #[test]
    fn partial_byte_is_zero_padded() {
        let b = BitString::parse("101").unwrap();
        assert_eq!(b.to_bytes(), vec![0b1010_0000]);
    }

    #[test]
    fn u64_roundtrip() {
        let b = BitString::from_u64(0b1101, 6);
        assert_eq!(b.to_string(), "101100");
        assert_eq!(b.to_u64(), 0b1101);
    }
}
