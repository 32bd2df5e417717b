//! Binary block codes of integer rate `1/β` built from Reed-Solomon over
//! bytes. The guaranteed bit distance is the RS symbol distance; for tiny
//! codes (message of at most 16 bits) the exact binary minimum distance is
//! measured by enumeration and decoding is exhaustive nearest-codeword.

use super::rs::ReedSolomon;
use crate::bits::BitString;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const EXHAUSTIVE_MAX_MESSAGE_BITS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeReport {
    pub message_len: usize,
    pub codeword_len: usize,
    pub beta: usize,
    pub distance_bits: usize,
    pub distance_exact: bool,
    /// Measured relative distance.
    pub lambda_hat: f64,
}

#[derive(Clone, Debug)]
pub struct BlockCode {
    message_len: usize,
    beta: usize,
    rs: ReedSolomon,
    distance_bits: usize,
    /// Full codebook (message index order) for exhaustive decoding.
    codebook: Option<Vec<u128>>,
}

impl BlockCode {
    pub fn new(message_len: usize, beta: usize) -> Result<Self> {
        if message_len == 0 || !message_len.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "block code message length must be a positive multiple of 8, got {message_len}"
            )));
        }
        if beta < 2 {
            return Err(Error::Config(format!("code expansion β must be >= 2, got {beta}")));
        }
        let k = message_len / 8;
        let n = beta * k;
        if n > 255 {
            return Err(Error::Config(format!(
                "codeword of {n} bytes exceeds the 255-symbol Reed-Solomon limit"
            )));
        }
        let rs = ReedSolomon::new(n - k);
        let mut code = Self { message_len, beta, rs, distance_bits: n - k + 1, codebook: None };
        if message_len <= EXHAUSTIVE_MAX_MESSAGE_BITS && code.codeword_len() <= 128 {
            let book: Vec<u128> = (0..1u64 << message_len)
                .map(|m| pack(&code.encode_unchecked(&BitString::from_u64(m, message_len))))
                .collect();
            // binary image of RS is GF(2)-linear: distance = min nonzero weight
            code.distance_bits = book[1..].iter().map(|c| c.count_ones() as usize).min().unwrap();
            code.codebook = Some(book);
        }
        Ok(code)
    }

    pub fn message_len(&self) -> usize {
        self.message_len
    }

    pub fn codeword_len(&self) -> usize {
        self.beta * self.message_len
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn distance_bits(&self) -> usize {
        self.distance_bits
    }

    pub fn lambda_hat(&self) -> f64 {
        self.distance_bits as f64 / self.codeword_len() as f64
    }

    /// Number of bit flips always corrected.
    pub fn radius(&self) -> usize {
        (self.distance_bits - 1) / 2
    }

    pub fn report(&self) -> CodeReport {
        CodeReport {
            message_len: self.message_len,
            codeword_len: self.codeword_len(),
            beta: self.beta,
            distance_bits: self.distance_bits,
            distance_exact: self.codebook.is_some(),
            lambda_hat: self.lambda_hat(),
        }
    }

    pub fn encode(&self, msg: &BitString) -> Result<BitString> {
        if msg.len() != self.message_len {
            return Err(Error::Length { expected: self.message_len, got: msg.len() });
        }
        Ok(self.encode_unchecked(msg))
    }

    fn encode_unchecked(&self, msg: &BitString) -> BitString {
        BitString::from_bytes(&self.rs.encode(&msg.to_bytes()))
    }

    /// Nearest-codeword decoding inside the guaranteed radius; `Ok(None)`
    /// signals a decode failure.
    pub fn decode(&self, word: &BitString) -> Result<Option<BitString>> {
        if word.len() != self.codeword_len() {
            return Err(Error::Length { expected: self.codeword_len(), got: word.len() });
        }
        if let Some(book) = &self.codebook {
            let w = pack(word);
            let (best, dist) = book
                .iter()
                .enumerate()
                .map(|(m, c)| (m, (c ^ w).count_ones() as usize))
                .min_by_key(|&(_, d)| d)
                .unwrap();
            return Ok((dist <= self.radius())
                .then(|| BitString::from_u64(best as u64, self.message_len)));
        }
        let k = self.message_len / 8;
        Ok(self
            .rs
            .correct(&word.to_bytes())
            .map(|cw| BitString::from_bytes(&cw[..k])))
    }
}

fn pack(bits: &BitString) -> u128 {
    bits.iter()
        .enumerate()
        .fold(0u128, |acc, (i, b)| acc | ((b as u128) << i))
}
