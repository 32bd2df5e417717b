//! Omniscient progress quantities: c_β, M, the potential φ and the
//! per-iteration claims about them.

use crate::compiler::{IterationRecord, PartyState};
use crate::params::RunParams;
use serde::{Deserialize, Serialize};

/// Largest `c ≤ min_i γ_i` such that every chunk below `c` is settled and
/// the bundle for chunk `c − 1` is still held unsurrendered, lowered by at
/// most one step from `previous`.
///
/// A chunk is settled when all parties name the same (leader, interval) as
/// its last simulation, that leader still holds the interval's bundle and
/// the bundle equals every party's stored digest, and every party's path
/// over the chunk is the true one.
pub fn compute_c_beta(parties: &[PartyState], truth: &[Vec<bool>], levels: usize, previous: Option<usize>) -> usize {
    let gmin = parties.iter().map(|p| p.gamma).min().unwrap_or(0);
    let mut c = 0;
    while c < gmin && settled(parties, truth, levels, c) {
        c += 1;
    }
    while c > 0 && surrendered(parties, c - 1) {
        c -= 1;
    }
    match previous {
        Some(p) => c.max(p.saturating_sub(1)),
        None => c,
    }
}

fn settled(parties: &[PartyState], truth: &[Vec<bool>], levels: usize, c: usize) -> bool {
    let Some((leader, interval)) = parties[0].record[c] else { return false };
    if parties.iter().any(|p| p.record[c] != Some((leader, interval))) {
        return false;
    }
    let Some(led) = parties[leader].led.get(&interval) else { return false };
    if led.chunk != c {
        return false;
    }
    parties.iter().enumerate().all(|(i, p)| {
        p.rho[c].as_ref() == Some(&led.bundle[i])
            && p.path.get(c * levels..(c + 1) * levels) == Some(&truth[i][c * levels..(c + 1) * levels])
    })
}

fn surrendered(parties: &[PartyState], c: usize) -> bool {
    let Some((leader, interval)) = parties[0].record[c] else { return true };
    parties[leader].led.get(&interval).is_none_or(|l| l.tapped)
}

/// `φ = M·k + (4n/(εm))·E_spent`.
pub fn potential(m: i64, spent: u64, params: &RunParams) -> f64 {
    let errors = if spent == 0 { 0.0 } else { params.error_weight() * spent as f64 };
    (m * params.k as i64) as f64 + errors
}

/// Analysis verdict for one iteration: good iff no corruption had any
/// effect on what the parties did.
pub fn classify_iteration(misdecoded_words: usize, chunk_unaffected: bool, response_undecodable: bool) -> bool {
    misdecoded_words == 0 && chunk_unaffected && !response_undecodable
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// Good iteration raises M by at least one.
    GoodProgress,
    /// Bad iteration lowers M by at most three.
    BadRegression,
    /// φ grows by at least k every iteration.
    PotentialGrowth,
    /// Final c_β exceeds L/k when the adversary stayed in budget and no
    /// hash collided.
    FinalDepth,
    /// At most n hash comparisons per iteration.
    HashCount,
    /// A stored record disagrees with `M = 2c_β − max γ` or with φ.
    RecordIdentity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimViolation {
    pub iteration: usize,
    pub claim: Claim,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub checked: usize,
    pub violations: Vec<ClaimViolation>,
}

impl ClaimReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_progress_claims(records: &[IterationRecord], params: &RunParams) -> ClaimReport {
    let mut report = ClaimReport::default();
    let k = params.k as f64;
    let (mut m_prev, mut phi_prev) = (0i64, 0f64);
    let mut hashes = 0;
    for r in records {
        report.checked += 1;
        let dm = r.m - m_prev;
        let mut fail = |claim, detail: String| {
            report.violations.push(ClaimViolation { iteration: r.iteration, claim, detail })
        };
        if r.iteration_good && dm < 1 {
            fail(Claim::GoodProgress, format!("good iteration changed M by {dm}"));
        }
        if !r.iteration_good && dm < -3 {
            fail(Claim::BadRegression, format!("bad iteration changed M by {dm}"));
        }
        let dphi = r.phi - phi_prev;
        if dphi < k - 1e-9 {
            fail(Claim::PotentialGrowth, format!("φ grew by {dphi:.3} < k = {k}"));
        }
        hashes += r.hash_comparisons;
        m_prev = r.m;
        phi_prev = r.phi;
    }
    if hashes > params.n * records.len() {
        report.violations.push(ClaimViolation {
            iteration: records.len().saturating_sub(1),
            claim: Claim::HashCount,
            detail: format!("{hashes} hash comparisons over {} iterations", records.len()),
        });
    }
    if let Some(last) = records.last() {
        let collisions: usize = records.iter().map(|r| r.collisions).sum();
        let in_budget = last.spent <= last.budget && collisions == 0;
        if in_budget && params.stop_rule == crate::params::StopRule::Iterations && last.c_beta * params.k <= params.len {
            report.violations.push(ClaimViolation {
                iteration: last.iteration,
                claim: Claim::FinalDepth,
                detail: format!("final c_β = {} with L/k = {:.3}", last.c_beta, params.len as f64 / k),
            });
        }
    }
    report
}
