//! Pairwise channels with a budgeted, omniscient bit-flipping adversary.
//!
//! Every transmitted bit passes through [`Channel::transmit`], which also
//! attributes it to a `(iteration, party, phase)` accounting cell. The
//! adversary can only flip bits: delivered length always equals sent length.

use crate::bits::BitString;
use crate::protocol::PartyId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    GammaReport,
    TapRequest,
    TapResponse,
    ChunkSymbol,
    Digest,
    Directive,
}

impl Phase {
    /// Carried as one enc1 codeword.
    pub fn is_control_word(self) -> bool {
        matches!(self, Phase::GammaReport | Phase::TapRequest | Phase::Digest | Phase::Directive)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub iteration: usize,
    pub leader: PartyId,
    pub phase: Phase,
    pub from: PartyId,
    pub to: PartyId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    /// Global transmission index.
    pub transmission: u64,
    pub iteration: usize,
    pub phase: Phase,
    pub from: PartyId,
    pub to: PartyId,
    pub offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledFlip {
    pub transmission: u64,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    None,
    /// Each bit is flipped independently with probability budget / expected traffic.
    UniformRandom,
    /// Consecutive chunk symbols starting at a seeded position, one bit each.
    Burst { window: usize },
    /// All flips in one enc1 control word of a seeded iteration.
    TargetConsistency,
    /// All flips in one enc2 tap response at or after a seeded iteration.
    TargetTap,
    /// One bit per chunk symbol sent by the leader in the given iterations
    /// (a seeded iteration when empty).
    TargetLeader { iterations: Vec<usize> },
    Replayed { schedule: Vec<ScheduledFlip> },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::UniformRandom => "uniform_random",
            Strategy::Burst { .. } => "burst",
            Strategy::TargetConsistency => "target_consistency",
            Strategy::TargetTap => "target_tap",
            Strategy::TargetLeader { .. } => "target_leader",
            Strategy::Replayed { .. } => "replayed",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "none" => Strategy::None,
            "uniform_random" => Strategy::UniformRandom,
            "burst" => Strategy::Burst { window: 64 },
            "target_consistency" => Strategy::TargetConsistency,
            "target_tap" => Strategy::TargetTap,
            "target_leader" => Strategy::TargetLeader { iterations: Vec::new() },
            _ => return None,
        })
    }

    /// The five budgeted strategies exercised by the acceptance suite.
    pub fn suite() -> Vec<Strategy> {
        vec![
            Strategy::UniformRandom,
            Strategy::Burst { window: 64 },
            Strategy::TargetConsistency,
            Strategy::TargetTap,
            Strategy::TargetLeader { iterations: Vec::new() },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryBudget {
    pub budget: u64,
    pub spent: u64,
}

impl AdversaryBudget {
    pub fn remaining(&self) -> u64 {
        self.budget - self.spent
    }
}

/// `⌊5εL / (8n)⌋`.
pub fn compute_budget(len: usize, n: usize, epsilon: f64) -> u64 {
    let raw = 5.0 * epsilon * len as f64 / (8.0 * n as f64);
    (raw + 1e-9).floor().max(0.0) as u64
}

/// Knobs the run loop hands the adversary so that its choices land inside
/// the run.
#[derive(Clone, Copy, Debug)]
pub struct AdversaryContext {
    pub iterations: usize,
    pub slots_per_chunk: usize,
    pub expected_bits: u64,
}

#[derive(Clone, Debug)]
struct Adversary {
    strategy: Strategy,
    rng: ChaCha8Rng,
    target_iteration: usize,
    start_slot: usize,
    burst_left: usize,
    armed: bool,
    flip_prob: f64,
}

impl Adversary {
    fn new(strategy: Strategy, seed: u64, ctx: AdversaryContext, budget: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target_iteration = rng.gen_range(0..ctx.iterations.max(1));
        let start_slot = rng.gen_range(0..ctx.slots_per_chunk.max(1));
        let burst_left = match &strategy {
            Strategy::Burst { window } => *window,
            _ => 0,
        };
        let flip_prob = if ctx.expected_bits == 0 {
            0.0
        } else {
            (budget as f64 / ctx.expected_bits as f64).min(1.0)
        };
        Self { strategy, rng, target_iteration, start_slot, burst_left, armed: true, flip_prob }
    }

    /// Offsets to flip in this transmission, at most `remaining` of them.
    fn choose(
        &mut self,
        index: u64,
        tx: &Transmission,
        slot: usize,
        len: usize,
        remaining: u64,
    ) -> Vec<usize> {
        if remaining == 0 || len == 0 {
            return Vec::new();
        }
        let cap = remaining.min(len as u64) as usize;
        match &self.strategy {
            Strategy::None => Vec::new(),
            Strategy::UniformRandom => {
                let p = self.flip_prob;
                let mut out: Vec<usize> =
                    (0..len).filter(|_| self.rng.gen_bool(p)).collect();
                out.truncate(cap);
                out
            }
            Strategy::Burst { .. } => {
                if tx.phase != Phase::ChunkSymbol
                    || tx.iteration < self.target_iteration
                    || (tx.iteration == self.target_iteration && slot < self.start_slot)
                    || self.burst_left == 0
                {
                    return Vec::new();
                }
                self.burst_left -= 1;
                vec![self.rng.gen_range(0..len)]
            }
            Strategy::TargetConsistency => {
                if !self.armed || !tx.phase.is_control_word() || tx.iteration < self.target_iteration {
                    return Vec::new();
                }
                self.armed = false;
                distinct_offsets(&mut self.rng, len, cap)
            }
            Strategy::TargetTap => {
                if !self.armed || tx.phase != Phase::TapResponse || tx.iteration < self.target_iteration {
                    return Vec::new();
                }
                self.armed = false;
                distinct_offsets(&mut self.rng, len, cap)
            }
            Strategy::TargetLeader { iterations } => {
                let hit = if iterations.is_empty() {
                    tx.iteration == self.target_iteration
                } else {
                    iterations.contains(&tx.iteration)
                };
                if hit && tx.phase == Phase::ChunkSymbol && tx.from == tx.leader {
                    vec![self.rng.gen_range(0..len)]
                } else {
                    Vec::new()
                }
            }
            Strategy::Replayed { schedule } => {
                let mut out: Vec<usize> = schedule
                    .iter()
                    .filter(|f| f.transmission == index && f.offset < len)
                    .map(|f| f.offset)
                    .collect();
                out.sort_unstable();
                out.dedup();
                out.truncate(cap);
                out
            }
        }
    }
}

fn distinct_offsets(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = rng.gen_range(i..len);
        pos.swap(i, j);
    }
    pos.truncate(count);
    pos
}

/// Bits attributed to one `(iteration, party, phase)` cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub sent: u64,
    pub received: u64,
}

#[derive(Clone, Debug)]
pub struct Channel {
    adversary: Adversary,
    budget: AdversaryBudget,
    flips: Vec<FlipRecord>,
    transmissions: u64,
    cells: BTreeMap<(usize, PartyId, Phase), CellCount>,
    total_sent: u64,
}

impl Channel {
    pub fn new(strategy: Strategy, budget: u64, seed: u64, ctx: AdversaryContext) -> Self {
        Self {
            adversary: Adversary::new(strategy, seed, ctx, budget),
            budget: AdversaryBudget { budget, spent: 0 },
            flips: Vec::new(),
            transmissions: 0,
            cells: BTreeMap::new(),
            total_sent: 0,
        }
    }

    pub fn noiseless() -> Self {
        Self::new(
            Strategy::None,
            0,
            0,
            AdversaryContext { iterations: 1, slots_per_chunk: 1, expected_bits: 0 },
        )
    }

    /// Delivers `bits` over the link `tx.from -> tx.to`. `slot` is the chunk
    /// slot index for chunk symbols and ignored otherwise.
    pub fn transmit(&mut self, tx: &Transmission, slot: usize, bits: &BitString) -> BitString {
        let index = self.transmissions;
        self.transmissions += 1;
        let len = bits.len() as u64;
        let sender = self.cells.entry((tx.iteration, tx.from, tx.phase)).or_default();
        sender.sent += len;
        self.cells.entry((tx.iteration, tx.to, tx.phase)).or_default().received += len;
        self.total_sent += len;

        let offsets = self
            .adversary
            .choose(index, tx, slot, bits.len(), self.budget.remaining());
        let mut out = bits.clone();
        for off in offsets {
            out.flip(off);
            self.budget.spent += 1;
            self.flips.push(FlipRecord {
                transmission: index,
                iteration: tx.iteration,
                phase: tx.phase,
                from: tx.from,
                to: tx.to,
                offset: off,
            });
        }
        debug_assert!(self.budget.spent <= self.budget.budget);
        out
    }

    pub fn budget(&self) -> AdversaryBudget {
        self.budget
    }

    pub fn flips(&self) -> &[FlipRecord] {
        &self.flips
    }

    pub fn total_sent(&self) -> u64 {
        self.total_sent
    }

    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }

    pub fn cells(&self) -> &BTreeMap<(usize, PartyId, Phase), CellCount> {
        &self.cells
    }

    /// Flips that landed in `iteration`, optionally restricted to one phase.
    pub fn flips_in(&self, iteration: usize) -> impl Iterator<Item = &FlipRecord> {
        self.flips.iter().filter(move |f| f.iteration == iteration)
    }
}
