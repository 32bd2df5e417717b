//! Measures the constants a run needs: the chunk multiplier `m`, the
//! number of flips a chunk always survives, and the enc1 relative distance.

use crate::channel::{AdversaryContext, Channel, ScheduledFlip, Strategy};
use crate::chunk::{simulate_chunk, true_chunk_paths, ChunkContext, LeaderMode, PartyStart};
use crate::codec::BlockCode;
use crate::error::{Error, Result};
use crate::params::{geometry_for, Calibration, RunConfig, ALPHABET, DEFAULT_SLACK};
use crate::prf::derive_seed;
use crate::protocol::{run_noiseless, ChunkGeometry, ProtocolSpec};
use crate::tree_code::DecodeSearchParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub slack: f64,
    /// Random protocols per candidate `m`.
    pub samples: usize,
    /// Trials per flip count when measuring tolerance; 0 skips it.
    pub tolerance_trials: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { slack: DEFAULT_SLACK, samples: 3, tolerance_trials: 20, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub calibration: Calibration,
    /// Worst error-free completion, in slots, at the chosen geometry.
    pub worst_completion: usize,
    pub slots_per_level: f64,
    pub epsilon_prime: f64,
    pub lambda_hat_over_5: f64,
}

type Key = (usize, usize, usize, bool, u64, usize, usize);

fn cache() -> &'static Mutex<HashMap<Key, CalibrationReport>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, CalibrationReport>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn sample_spec(n: usize, geom: &ChunkGeometry, seed: u64) -> Result<ProtocolSpec> {
    ProtocolSpec::random(n, geom.k, seed)
}

fn chunk_ctx<'a>(spec: &'a ProtocolSpec, geom: ChunkGeometry, leader: usize, seed: u64) -> ChunkContext<'a> {
    ChunkContext {
        spec,
        geometry: geom,
        iteration: 0,
        leader,
        chunk: 0,
        slots: geom.slots(),
        seed,
        alphabet: ALPHABET,
        search: DecodeSearchParams::default(),
    }
}

fn starts(n: usize) -> Vec<PartyStart> {
    (0..n).map(|_| PartyStart { chunk: 0, prefix: Vec::new() }).collect()
}

/// Worst error-free completion slot over `samples` random protocols, or
/// `None` if some chunk did not finish.
fn worst_completion(n: usize, geom: ChunkGeometry, samples: usize, seed: u64) -> Result<Option<usize>> {
    let mut worst = 0;
    for s in 0..samples {
        let sseed = derive_seed(seed, &[s as u64]);
        let spec = sample_spec(n, &geom, sseed)?;
        let ctx = chunk_ctx(&spec, geom, s % n, sseed);
        let out = simulate_chunk(&ctx, &starts(n), LeaderMode::Simulate, &mut Channel::noiseless(), None)?;
        match out.completed_at {
            Some(c) => worst = worst.max(c),
            None => return Ok(None),
        }
    }
    Ok(Some(worst))
}

/// Largest `e` such that every trial with `e` random single-bit flips in
/// the chunk still produced the true chunk on every link.
fn tolerance(n: usize, geom: ChunkGeometry, trials: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = crate::tree_code::TreeCode::new(0, ALPHABET, 1).symbol_bits();
    let ctx_a = AdversaryContext { iterations: 1, slots_per_chunk: geom.slots(), expected_bits: 0 };
    let mut e = 0;
    loop {
        let next = e + 1;
        for trial in 0..trials {
            let sseed = derive_seed(seed, &[next as u64, trial as u64]);
            let spec = sample_spec(n, &geom, sseed)?;
            let truth = run_noiseless(&spec)?;
            let levels = 2 * geom.k / n;
            let want = true_chunk_paths(&spec, &truth, 0, levels);
            let ctx = chunk_ctx(&spec, geom, trial % n, sseed);
            let clean = simulate_chunk(&ctx, &starts(n), LeaderMode::Simulate, &mut Channel::noiseless(), None)?;
            let horizon = clean.completed_at.unwrap_or(geom.slots()) as u64;
            let schedule = (0..next)
                .map(|_| ScheduledFlip { transmission: rng.gen_range(0..horizon), offset: rng.gen_range(0..width) })
                .collect();
            let mut ch = Channel::new(Strategy::Replayed { schedule }, next as u64, 0, ctx_a);
            let out = simulate_chunk(&ctx, &starts(n), LeaderMode::Simulate, &mut ch, None)?;
            if !(out.complete && out.party_paths == want && out.leader_paths == want) {
                return Ok(e);
            }
        }
        e = next;
        if e >= geom.slots() {
            return Ok(e);
        }
    }
}

pub fn calibrate(cfg: &RunConfig, opts: &CalibrationOptions) -> Result<CalibrationReport> {
    let t = 2 * cfg.exponent()? as usize;
    let key = (cfg.n, t, cfg.beta, cfg.paper_consistent, opts.seed, opts.samples, opts.tolerance_trials);
    if let Some(r) = cache().lock().expect("calibration cache").get(&key) {
        return Ok(r.clone());
    }
    let lambda_hat = BlockCode::new(2 * t, cfg.beta)?.lambda_hat();
    let max_m = 4 * cfg.n * cfg.beta * t;
    let mut chosen = None;
    for m in 1..=max_m {
        let Some(geom) = geometry_for(cfg.n, cfg.beta, t, m, cfg.paper_consistent) else { continue };
        if let Some(worst) = worst_completion(cfg.n, geom, opts.samples, opts.seed)? {
            if (geom.slots() as f64) >= (1.0 + opts.slack) * worst as f64 {
                chosen = Some((geom, worst));
                break;
            }
        }
    }
    let (geom, worst) = chosen.ok_or_else(|| {
        Error::Config(format!("no chunk multiplier reaches {:.0}% slack for n={}", opts.slack * 100.0, cfg.n))
    })?;
    let e_max = if opts.tolerance_trials == 0 {
        0
    } else {
        tolerance(cfg.n, geom, opts.tolerance_trials, derive_seed(opts.seed, &[0xe]))?
    };
    let calibration = Calibration { m: geom.m, k: geom.k, k_rounded: geom.rounded, lambda_hat, e_max };
    let report = CalibrationReport {
        calibration,
        worst_completion: worst,
        slots_per_level: worst as f64 / geom.k as f64,
        epsilon_prime: calibration.epsilon_prime(cfg.n),
        lambda_hat_over_5: lambda_hat / 5.0,
    };
    cache().lock().expect("calibration cache").insert(key, report.clone());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_configuration_calibrates_with_slack() {
        let mut cfg = RunConfig::new(3, 48);
        cfg.hash_exponent = Some(8);
        let opts = CalibrationOptions { tolerance_trials: 2, ..Default::default() };
        let r = calibrate(&cfg, &opts).unwrap();
        let c = r.calibration;
        assert_eq!(c.k % 3, 0);
        assert_eq!((4 * 3 * 2 * 16) % c.m, 0);
        assert!((c.m * c.k) as f64 >= 1.25 * r.worst_completion as f64);
        assert!(c.e_max >= 1);
    }
}
