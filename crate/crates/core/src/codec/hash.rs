//! Keyed hash family with `t = qN`-bit keys and digests, `q = 2`.
//!
//! A key is two field elements `(a, b)` of GF(2^N). The message is packed
//! into N-bit elements behind a length prefix and evaluated as a polynomial
//! at both points; the digest is the two evaluations concatenated. Distinct
//! messages of at most `D` elements collide with probability at most
//! `(D / 2^N)^2 <= 2^-N` whenever `D <= 2^(N/2)`.

use super::gf2n::Gf2n;
use crate::bits::BitString;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const Q: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashParams {
    /// Security exponent N.
    pub exponent: u32,
}

impl HashParams {
    pub fn new(exponent: u32) -> Result<Self> {
        if !(1..=63).contains(&exponent) {
            return Err(Error::Config(format!(
                "hash exponent must be in 1..=63, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    /// Key and digest length `t = qN`.
    pub fn t(&self) -> usize {
        Q * self.exponent as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashKey(BitString);

impl HashKey {
    pub fn from_bits(bits: BitString, params: &HashParams) -> Result<Self> {
        if bits.len() != params.t() {
            return Err(Error::Length { expected: params.t(), got: bits.len() });
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Digest(BitString);

impl Digest {
    pub fn from_bits(bits: BitString, params: &HashParams) -> Result<Self> {
        if bits.len() != params.t() {
            return Err(Error::Length { expected: params.t(), got: bits.len() });
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub struct HashFamily {
    params: HashParams,
    field: Gf2n,
}

impl HashFamily {
    pub fn new(params: HashParams) -> Self {
        Self { params, field: Gf2n::new(params.exponent) }
    }

    pub fn params(&self) -> &HashParams {
        &self.params
    }

    pub fn sample_key<R: Rng + ?Sized>(&self, rng: &mut R) -> HashKey {
        HashKey((0..self.params.t()).map(|_| rng.gen::<bool>()).collect())
    }

    pub fn hash(&self, key: &HashKey, msg: &BitString) -> Result<Digest> {
        let n = self.params.exponent as usize;
        if (msg.len() as u128) > (1u128 << n) {
            return Err(Error::MessageTooLong { len: msg.len(), exponent: n as u32 });
        }
        let a = key.0.slice(0, n).to_u64();
        let b = key.0.slice(n, 2 * n).to_u64();
        let mask = self.field.mask();
        let elements: Vec<u64> = std::iter::once(msg.len() as u64 & mask)
            .chain(msg.as_slice().chunks(n).map(|c| {
                c.iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &bit)| acc | ((bit as u64) << i))
            }))
            .collect();
        let eval = |x: u64| {
            elements
                .iter()
                .fold(0u64, |acc, &e| self.field.mul(self.field.add(acc, e), x))
        };
        let mut out = BitString::from_u64(eval(a), n);
        out.extend_from(&BitString::from_u64(eval(b), n));
        Ok(Digest(out))
    }
}
