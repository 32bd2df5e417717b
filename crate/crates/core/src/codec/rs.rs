//! Reed-Solomon over GF(256) (modulus 0x11d, generator 2), systematic,
//! errors-only decoding via Berlekamp-Massey, Chien search and Forney.
//! Polynomials are coefficient vectors, highest degree first.

use std::sync::OnceLock;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for (i, e) in exp.iter_mut().enumerate().take(255) {
            *e = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= 0x11d;
            }
        }
        for i in 255..512 {
            exp[i] = exp[i - 255];
        }
        Tables { exp, log }
    })
}

fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let t = tables();
    t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
}

fn inv(a: u8) -> u8 {
    debug_assert_ne!(a, 0);
    let t = tables();
    t.exp[255 - t.log[a as usize] as usize]
}

fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

fn alpha_pow(e: usize) -> u8 {
    tables().exp[e % 255]
}

fn poly_eval(p: &[u8], x: u8) -> u8 {
    p.iter().fold(0, |acc, &c| mul(acc, x) ^ c)
}

fn poly_mul(p: &[u8], q: &[u8]) -> Vec<u8> {
    let mut r = vec![0u8; p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            r[i + j] ^= mul(a, b);
        }
    }
    r
}

fn poly_add(p: &[u8], q: &[u8]) -> Vec<u8> {
    let len = p.len().max(q.len());
    let mut r = vec![0u8; len];
    for (i, &c) in p.iter().enumerate() {
        r[i + len - p.len()] = c;
    }
    for (i, &c) in q.iter().enumerate() {
        r[i + len - q.len()] ^= c;
    }
    r
}

fn poly_scale(p: &[u8], s: u8) -> Vec<u8> {
    p.iter().map(|&c| mul(c, s)).collect()
}

#[derive(Clone, Debug)]
pub struct ReedSolomon {
    parity: usize,
    generator: Vec<u8>,
}

impl ReedSolomon {
    pub fn new(parity: usize) -> Self {
        let generator = (0..parity).fold(vec![1u8], |g, i| poly_mul(&g, &[1, alpha_pow(i)]));
        Self { parity, generator }
    }

    pub fn parity(&self) -> usize {
        self.parity
    }

    /// Returns `msg || parity`.
    pub fn encode(&self, msg: &[u8]) -> Vec<u8> {
        assert!(msg.len() + self.parity <= 255, "codeword longer than 255 symbols");
        let mut out = msg.to_vec();
        out.resize(msg.len() + self.parity, 0);
        for i in 0..msg.len() {
            let coef = out[i];
            if coef != 0 {
                for (j, &g) in self.generator.iter().enumerate().skip(1) {
                    out[i + j] ^= mul(g, coef);
                }
            }
        }
        out[..msg.len()].copy_from_slice(msg);
        out
    }

    fn syndromes(&self, word: &[u8]) -> Vec<u8> {
        (0..self.parity).map(|i| poly_eval(word, alpha_pow(i))).collect()
    }

    /// Corrects up to `parity / 2` symbol errors. `None` when the word is
    /// not within the unique-decoding radius of any codeword that the
    /// decoder can certify.
    pub fn correct(&self, word: &[u8]) -> Option<Vec<u8>> {
        let synd = self.syndromes(word);
        if synd.iter().all(|&s| s == 0) {
            return Some(word.to_vec());
        }
        let locator = self.error_locator(&synd)?;
        let errs = locator.len() - 1;
        let mut rev = locator.clone();
        rev.reverse();
        let positions: Vec<usize> = (0..word.len())
            .filter(|&i| poly_eval(&rev, alpha_pow(i)) == 0)
            .map(|i| word.len() - 1 - i)
            .collect();
        if positions.len() != errs {
            return None;
        }
        let fixed = self.forney(word, &synd, &positions)?;
        self.syndromes(&fixed).iter().all(|&s| s == 0).then_some(fixed)
    }

    fn error_locator(&self, synd: &[u8]) -> Option<Vec<u8>> {
        let mut loc = vec![1u8];
        let mut old = vec![1u8];
        for i in 0..self.parity {
            let mut delta = synd[i];
            for j in 1..loc.len() {
                delta ^= mul(loc[loc.len() - 1 - j], synd[i - j]);
            }
            old.push(0);
            if delta != 0 {
                if old.len() > loc.len() {
                    let new_loc = poly_scale(&old, delta);
                    old = poly_scale(&loc, inv(delta));
                    loc = new_loc;
                }
                loc = poly_add(&loc, &poly_scale(&old, delta));
            }
        }
        while loc.len() > 1 && loc[0] == 0 {
            loc.remove(0);
        }
        let errs = loc.len() - 1;
        (errs > 0 && errs * 2 <= self.parity).then_some(loc)
    }

    fn forney(&self, word: &[u8], synd: &[u8], positions: &[usize]) -> Option<Vec<u8>> {
        let coef_pos: Vec<usize> = positions.iter().map(|&p| word.len() - 1 - p).collect();
        let errata_loc = coef_pos
            .iter()
            .fold(vec![1u8], |acc, &c| poly_mul(&acc, &[alpha_pow(c), 1]));
        let mut synd_rev = synd.to_vec();
        synd_rev.reverse();
        // syndrome polynomial carries an x factor: S(x) = sum S_i x^(i+1)
        synd_rev.push(0);
        let prod = poly_mul(&synd_rev, &errata_loc);
        let keep = errata_loc.len(); // remainder mod x^(errs + 1)
        let evaluator = prod[prod.len() - keep.min(prod.len())..].to_vec();
        let xs: Vec<u8> = coef_pos.iter().map(|&c| alpha_pow(c)).collect();
        let mut out = word.to_vec();
        for (i, &xi) in xs.iter().enumerate() {
            let xi_inv = inv(xi);
            let denom = xs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(1u8, |acc, (_, &xj)| mul(acc, 1 ^ mul(xi_inv, xj)));
            if denom == 0 {
                return None;
            }
            let y = mul(xi, poly_eval(&evaluator, xi_inv));
            out[positions[i]] ^= div(y, denom);
        }
        Some(out)
    }
}
