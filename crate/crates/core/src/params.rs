//! Run configuration and the parameters derived from it.

use crate::channel::{compute_budget, Strategy};
use crate::error::{Error, Result};
use crate::protocol::{derive_chunk_geometry, ChunkGeometry};
use crate::tree_code::DecodeSearchParams;
use serde::{Deserialize, Serialize};

/// Field size of the hash family.
pub const HASH_Q: u32 = 2;
/// Tree-code alphabet size.
pub const ALPHABET: u32 = 64;
pub const DEFAULT_BETA: usize = 2;
pub const DEFAULT_GAMMA: f64 = 20.0;
/// Required completion slack when calibrating `m`.
pub const DEFAULT_SLACK: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Exactly `⌈5L/k⌉` iterations.
    Iterations,
    /// Stop once `5L` chunk symbol slots have been used; the last chunk may
    /// be cut short.
    Symbols,
}

impl StopRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "iterations" => Some(StopRule::Iterations),
            "symbols" => Some(StopRule::Symbols),
            _ => None,
        }
    }
}

/// `⌈γ + log2(5nL)⌉`.
pub fn required_hash_exponent(gamma: f64, n: usize, len: usize) -> Result<u32> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 parties, got {n}")));
    }
    if len == 0 || gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::Config("γ must be non-negative and L positive".into()));
    }
    let raw = gamma + ((5 * n * len) as f64).log2();
    Ok((raw - 1e-9).ceil() as u32)
}

/// What the user asks for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub len: usize,
    pub gamma: f64,
    pub beta: usize,
    /// Overrides the calibrated ε when set.
    pub epsilon: Option<f64>,
    pub strategy: Strategy,
    pub seed: u64,
    pub stop_rule: StopRule,
    pub paper_consistent: bool,
    /// Overrides the hash exponent derived from γ when set.
    pub hash_exponent: Option<u32>,
}

impl RunConfig {
    pub fn new(n: usize, len: usize) -> Self {
        Self {
            n,
            len,
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            epsilon: None,
            strategy: Strategy::None,
            seed: 0,
            stop_rule: StopRule::Iterations,
            paper_consistent: true,
            hash_exponent: None,
        }
    }

    /// Hash exponent actually used: the required one rounded up to a
    /// multiple of 4 so that `t = 2N` is a whole number of bytes.
    pub fn exponent(&self) -> Result<u32> {
        let n = match self.hash_exponent {
            Some(n) => n,
            None => required_hash_exponent(self.gamma, self.n, self.len)?,
        };
        Ok(n.div_ceil(4) * 4)
    }
}

/// Everything a run needs, after calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub n: usize,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "N")]
    pub hash_exponent: u32,
    pub t: usize,
    pub q: u32,
    pub beta: usize,
    pub c: u32,
    pub k: usize,
    pub m: usize,
    pub k_rounded: bool,
    pub lambda_hat: f64,
    pub epsilon_prime: f64,
    pub epsilon: f64,
    pub budget: u64,
    pub iterations: usize,
    /// Chunks of the padded tree, `⌈5L/k⌉`.
    pub chunks: usize,
    pub stop_rule: StopRule,
    pub paper_consistent: bool,
    pub seed: u64,
    pub strategy: Strategy,
    pub search: DecodeSearchParams,
}

impl RunParams {
    pub fn geometry(&self) -> ChunkGeometry {
        ChunkGeometry { k: self.k, m: self.m, rounded: self.k_rounded }
    }

    /// Party-tree levels per chunk.
    pub fn levels(&self) -> usize {
        2 * self.k / self.n
    }

    /// Chunk symbol slots the run may use in total.
    pub fn slot_budget(&self) -> usize {
        match self.stop_rule {
            StopRule::Iterations => self.iterations * self.m * self.k,
            StopRule::Symbols => 5 * self.len,
        }
    }

    /// Slots of the chunk in `iteration`.
    pub fn slots_in(&self, iteration: usize) -> usize {
        let per = self.m * self.k;
        self.slot_budget().saturating_sub(iteration * per).min(per)
    }

    /// `4n/(εm)`, the weight of one spent error in the potential.
    pub fn error_weight(&self) -> f64 {
        4.0 * self.n as f64 / (self.epsilon * self.m as f64)
    }
}

/// Measured constants feeding [`assemble`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub m: usize,
    pub k: usize,
    pub k_rounded: bool,
    pub lambda_hat: f64,
    /// Flips per chunk that were always tolerated.
    pub e_max: usize,
}

impl Calibration {
    /// `n·e_max/(mk)`: tolerated fraction of chunk exchanges, scaled by n.
    pub fn epsilon_prime(&self, n: usize) -> f64 {
        n as f64 * self.e_max as f64 / (self.m * self.k) as f64
    }
}

/// Chunk depth for a given `m`, or `None` when `m` does not fit the
/// divisibility constraints of the mode.
pub fn geometry_for(n: usize, beta: usize, t: usize, m: usize, paper_consistent: bool) -> Option<ChunkGeometry> {
    derive_chunk_geometry(n, beta, t, m, paper_consistent).ok()
}

pub fn assemble(cfg: &RunConfig, cal: &Calibration) -> Result<RunParams> {
    let exponent = cfg.exponent()?;
    let t = 2 * exponent as usize;
    let epsilon_prime = cal.epsilon_prime(cfg.n);
    let epsilon = match cfg.epsilon {
        Some(e) if !(0.0..1.0).contains(&e) => {
            return Err(Error::Config(format!("ε must lie in [0, 1), got {e}")));
        }
        Some(e) => e,
        None => epsilon_prime.min(cal.lambda_hat / 5.0),
    };
    let chunks = (5 * cfg.len).div_ceil(cal.k);
    let iterations = match cfg.stop_rule {
        StopRule::Iterations => chunks,
        StopRule::Symbols => (5 * cfg.len).div_ceil(cal.m * cal.k),
    };
    Ok(RunParams {
        n: cfg.n,
        len: cfg.len,
        hash_exponent: exponent,
        t,
        q: HASH_Q,
        beta: cfg.beta,
        c: ALPHABET,
        k: cal.k,
        m: cal.m,
        k_rounded: cal.k_rounded,
        lambda_hat: cal.lambda_hat,
        epsilon_prime,
        epsilon,
        budget: compute_budget(cfg.len, cfg.n, epsilon),
        iterations,
        chunks,
        stop_rule: cfg.stop_rule,
        paper_consistent: cfg.paper_consistent,
        seed: cfg.seed,
        strategy: cfg.strategy.clone(),
        search: DecodeSearchParams::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_exponent_examples() {
        assert_eq!(required_hash_exponent(20.0, 4, 960).unwrap(), 35);
        assert_eq!(required_hash_exponent(10.0, 3, 768).unwrap(), 24);
        assert!(required_hash_exponent(0.0, 1, 768).is_err());
    }

    #[test]
    fn exponent_rounds_to_bytes() {
        let cfg = RunConfig::new(4, 960);
        assert_eq!(cfg.exponent().unwrap(), 36);
    }

    #[test]
    fn slots_per_iteration_follow_stop_rule() {
        let cal = Calibration { m: 8, k: 288, k_rounded: false, lambda_hat: 0.066, e_max: 5 };
        let mut cfg = RunConfig::new(4, 768);
        let p = assemble(&cfg, &cal).unwrap();
        assert_eq!(p.iterations, 14);
        assert!((0..14).all(|j| p.slots_in(j) == 2304));
        cfg.stop_rule = StopRule::Symbols;
        let p = assemble(&cfg, &cal).unwrap();
        let total: usize = (0..p.iterations).map(|j| p.slots_in(j)).sum();
        assert_eq!(total, 5 * 768);
    }

    #[test]
    fn epsilon_is_min_of_both_limits() {
        let cal = Calibration { m: 8, k: 288, k_rounded: false, lambda_hat: 0.066, e_max: 5 };
        let p = assemble(&RunConfig::new(4, 768), &cal).unwrap();
        assert!((p.epsilon_prime - 20.0 / 2304.0).abs() < 1e-12);
        assert_eq!(p.epsilon, p.epsilon_prime.min(0.066 / 5.0));
        assert_eq!(p.budget, 1);
    }
}
