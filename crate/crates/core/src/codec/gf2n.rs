//! Arithmetic in GF(2^N) for 1 <= N <= 63, elements packed in a `u64`.

/// Carry-less product of two polynomials over GF(2).
fn clmul(a: u64, b: u64) -> u128 {
    let mut acc = 0u128;
    let a = a as u128;
    let mut b = b;
    let mut i = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a << i;
        }
        b >>= 1;
        i += 1;
    }
    acc
}

fn degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

fn poly_mod(mut a: u128, m: u128) -> u128 {
    let dm = degree(m);
    while a != 0 && degree(a) >= dm {
        a ^= m << (degree(a) - dm);
    }
    a
}

fn poly_mulmod(a: u128, b: u128, m: u128) -> u128 {
    poly_mod(clmul(a as u64, b as u64), m)
}

fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_mod(a, b);
        a = b;
        b = r;
    }
    a
}

/// Ben-Or irreducibility test.
fn is_irreducible(f: u128) -> bool {
    let n = degree(f);
    let mut x_pow = 0b10u128; // x
    for _ in 1..=n / 2 {
        x_pow = poly_mulmod(x_pow, x_pow, f);
        if poly_gcd(f, x_pow ^ 0b10) != 1 {
            return false;
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gf2n {
    bits: u32,
    /// Modulus including the leading x^N term.
    modulus: u128,
}

impl Gf2n {
    /// Field with the numerically smallest irreducible modulus of degree `bits`.
    pub fn new(bits: u32) -> Self {
        assert!((1..=63).contains(&bits), "field degree must be in 1..=63");
        let top = 1u128 << bits;
        let modulus = (1u128..)
            .step_by(2)
            .map(|low| top | low)
            .find(|&f| is_irreducible(f))
            .expect("irreducible polynomials exist in every degree");
        Self { bits, modulus }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mask(&self) -> u64 {
        ((1u128 << self.bits) - 1) as u64
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        poly_mod(clmul(a, b), self.modulus) as u64
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        a ^ b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gf256_matches_aes_style_arithmetic() {
        let f = Gf2n::new(8);
        // smallest irreducible octic is x^8+x^4+x^3+x+1
        assert_eq!(f.modulus, 0x11b);
        assert_eq!(f.mul(0x57, 0x83), 0xc1);
    }

    #[test]
    fn multiplicative_group_order() {
        let f = Gf2n::new(5);
        // every nonzero a satisfies a^(2^5 - 1) = 1
        for a in 1..32u64 {
            let mut p = 1;
            for _ in 0..31 {
                p = f.mul(p, a);
            }
            assert_eq!(p, 1, "a = {a}");
        }
    }

    #[test]
    fn large_fields_construct() {
        for bits in [36, 48, 63] {
            let f = Gf2n::new(bits);
            let a = 0x1234_5678_9abc & f.mask();
            assert_eq!(f.mul(a, 1), a);
            assert_eq!(f.mul(a, 0), 0);
        }
    }
}
