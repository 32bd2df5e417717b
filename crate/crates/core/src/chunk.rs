//! One chunk of the multiparty simulation under a single coordinator.
//!
//! The coordinator runs a pairwise pebble engine with every other party on
//! that party's two-party tree `T_i`. Slots are assigned round by round:
//! links are visited in increasing party order, and each visit is one
//! coordinator symbol followed by one party symbol. The coordinator's own
//! tree is simulated locally at no cost when its turn in the round comes.
//!
//! A relay level of `T_i` in window `w` carries the own bit of the source
//! party in window `w`. The coordinator reads it from what it currently
//! believes that party's path to be. When a relayed arc on some link turns
//! out to conflict with that belief, the coordinator backs up on that link.

use crate::bits::BitString;
use crate::channel::{Channel, Phase, Transmission};
use crate::error::{Error, Result};
use crate::pebble::{Endpoint, Side};
use crate::prf::derive_seed;
use crate::protocol::{ChunkGeometry, LevelOwner, PartyId, ProtocolSpec};
use crate::tree_code::{DecodeSearchParams, HistoryMove, Symbol, TreeCode};
use serde::{Deserialize, Serialize};

/// Fixed symbol sent by a coordinator that has given up on the chunk.
pub const GARBAGE_SYMBOL: Symbol = 0;

#[derive(Clone, Debug)]
pub struct ChunkContext<'a> {
    pub spec: &'a ProtocolSpec,
    pub geometry: ChunkGeometry,
    pub iteration: usize,
    pub leader: PartyId,
    /// Chunk the coordinator simulates.
    pub chunk: usize,
    /// Symbol slots available; `m·k` except for a cut-short final chunk.
    pub slots: usize,
    /// Run seed; tree codes are derived per (iteration, sender, receiver).
    pub seed: u64,
    pub alphabet: u32,
    pub search: DecodeSearchParams,
}

impl ChunkContext<'_> {
    /// Levels of a party tree covered by one chunk.
    pub fn levels(&self) -> usize {
        2 * self.geometry.k / self.spec.n()
    }
}

/// Where a party's engine starts: the chunk it believes is simulated and
/// its accepted path up to the first node of that chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyStart {
    pub chunk: usize,
    pub prefix: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeaderMode {
    Simulate,
    Garbage,
}

/// Slot assignment within a chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowSchedule {
    links: Vec<PartyId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub link: PartyId,
    /// `true` for coordinator to party.
    pub down: bool,
}

impl WindowSchedule {
    pub fn new(n: usize, leader: PartyId) -> Self {
        Self { links: (0..n).filter(|&i| i != leader).collect() }
    }

    pub fn links(&self) -> &[PartyId] {
        &self.links
    }

    pub fn per_round(&self) -> usize {
        2 * self.links.len()
    }

    pub fn slot(&self, index: usize) -> Slot {
        let within = index % self.per_round();
        Slot { link: self.links[within / 2], down: within.is_multiple_of(2) }
    }

    /// Rounds needed to cover `slots` slots.
    pub fn rounds(&self, slots: usize) -> usize {
        slots.div_ceil(self.per_round())
    }
}

/// `depth(gcp) − max_i d(i, gcp)`, in windows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowProgressMeasure {
    pub gcp: usize,
    pub distances: Vec<usize>,
    pub m_window: i64,
}

impl WindowProgressMeasure {
    pub fn new(gcp: usize, distances: Vec<usize>) -> Self {
        let max_d = distances.iter().copied().max().unwrap_or(0);
        Self { gcp, m_window: gcp as i64 - max_d as i64, distances }
    }
}

/// Measures a set of pebbles against the true chunk paths. `pebbles` pairs
/// each pebble with the index of the tree it sits on.
pub fn window_measure(pebbles: &[(usize, &[bool])], truth: &[Vec<bool>]) -> WindowProgressMeasure {
    let gcp = pebbles
        .iter()
        .map(|(t, p)| common_prefix(p, &truth[*t]) / 2)
        .min()
        .unwrap_or(0);
    let distances = pebbles
        .iter()
        .map(|(_, p)| p.len().saturating_sub(2 * gcp).div_ceil(2))
        .collect();
    WindowProgressMeasure::new(gcp, distances)
}

fn common_prefix(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Instrumentation sample taken after each round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub round: usize,
    pub gcp: usize,
    pub max_d: usize,
    pub m_window: i64,
    /// Some symbol of this round was flipped.
    pub corrupted: bool,
    /// Every endpoint's guess of its peer equalled the peer's pebble at the
    /// end of the round.
    pub guesses_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkOutcome {
    /// Chunk-relative path of each party's own pebble.
    pub party_paths: Vec<Vec<bool>>,
    /// Chunk-relative path of the coordinator's pebble on each link; empty
    /// for a garbage chunk.
    pub leader_paths: Vec<Vec<bool>>,
    /// Every coordinator pebble reached the last level of the chunk.
    pub complete: bool,
    pub slots: usize,
    /// First slot after which all pebbles on every link sat at the same
    /// full-depth node.
    pub completed_at: Option<usize>,
    pub windows: Vec<WindowRecord>,
}

fn owner_side(spec: &ProtocolSpec, party: PartyId, level: usize) -> Side {
    match spec.view_level(party, level).0 {
        LevelOwner::Party => Side::Party,
        LevelOwner::Coordinator => Side::Coordinator,
    }
}

fn relay_source_level(spec: &ProtocolSpec, party: PartyId, level: usize) -> (PartyId, usize) {
    let src = spec.source_of(party);
    (src, spec.own_level(src, level / 2))
}

/// What the coordinator currently believes a party's chunk path to be: its
/// guess of the party's pebble if that extends its own pebble, else the
/// common part of the two.
fn believed_path(own: &[bool], guess: &[bool]) -> Vec<bool> {
    if guess.starts_with(own) {
        guess.to_vec()
    } else {
        own[..common_prefix(own, guess)].to_vec()
    }
}

/// First relay level of `path` whose arc disagrees with the source party's
/// believed path.
fn first_conflict(
    spec: &ProtocolSpec,
    party: PartyId,
    path: &[bool],
    source_path: &[bool],
) -> Option<usize> {
    (0..path.len()).find(|&lvl| {
        owner_side(spec, party, lvl) == Side::Coordinator && {
            let (_, src_lvl) = relay_source_level(spec, party, lvl);
            source_path.get(src_lvl).is_some_and(|&b| b != path[lvl])
        }
    })
}

struct PartyNm<'a> {
    spec: &'a ProtocolSpec,
    levels: usize,
}

impl PartyNm<'_> {
    fn bit(&self, party: PartyId, start: &PartyStart, path: &[bool]) -> Result<bool> {
        let abs = start.chunk * self.levels + path.len();
        let (_, global) = self.spec.view_level(party, abs);
        let view: BitString = start.prefix.iter().chain(path).copied().collect();
        self.spec.next_bit(party, global, &view)
    }
}

/// Simulates one chunk over exactly `ctx.slots` slots. `truth`, when given, is
/// the chunk-relative true path of every party for the coordinator's chunk
/// and enables per-round instrumentation.
pub fn simulate_chunk(
    ctx: &ChunkContext,
    starts: &[PartyStart],
    mode: LeaderMode,
    channel: &mut Channel,
    truth: Option<&[Vec<bool>]>,
) -> Result<ChunkOutcome> {
    let spec = ctx.spec;
    let n = spec.n();
    if starts.len() != n {
        return Err(Error::Config(format!("{} party starts for {n} parties", starts.len())));
    }
    let levels = ctx.levels();
    for (i, st) in starts.iter().enumerate() {
        if st.prefix.len() != st.chunk * levels {
            return Err(Error::Config(format!(
                "party {i} prefix has {} levels, chunk {} starts at {}",
                st.prefix.len(),
                st.chunk,
                st.chunk * levels
            )));
        }
    }
    let leader = ctx.leader;
    let total = ctx.slots;
    let sched = WindowSchedule::new(n, leader);
    let depth = sched.rounds(total) + 2;
    let nm = PartyNm { spec, levels };

    let mut coord: Vec<Option<Endpoint>> = vec![None; n];
    let mut party: Vec<Option<Endpoint>> = vec![None; n];
    for &i in sched.links() {
        let down = TreeCode::new(
            derive_seed(ctx.seed, &[ctx.iteration as u64, leader as u64, i as u64]),
            ctx.alphabet,
            depth,
        );
        let up = TreeCode::new(
            derive_seed(ctx.seed, &[ctx.iteration as u64, i as u64, leader as u64]),
            ctx.alphabet,
            depth,
        );
        coord[i] = Some(Endpoint::new(Side::Coordinator, down.clone(), up.clone(), ctx.search));
        party[i] = Some(Endpoint::new(Side::Party, up, down, ctx.search));
    }
    let mut local: Vec<bool> = Vec::new();
    let simulate = mode == LeaderMode::Simulate;
    let width = TreeCode::new(0, ctx.alphabet, 1).symbol_bits();

    let believed = |coord: &[Option<Endpoint>], local: &[bool], src: PartyId| -> Vec<bool> {
        if src == leader {
            local.to_vec()
        } else {
            let e = coord[src].as_ref().expect("endpoint");
            believed_path(e.pebble(), e.guess_peer_pebble())
        }
    };

    let mut slot = 0;
    let mut round = 0;
    let mut completed_at = None;
    let mut windows = Vec::new();
    let mut nm_error: Option<Error> = None;
    while slot < total {
        let flips_before = channel.flips().len();
        for i in 0..n {
            if slot >= total {
                break;
            }
            if i == leader {
                if simulate {
                    let src_path = believed(&coord, &local, spec.source_of(leader));
                    if let Some(c) = first_conflict(spec, leader, &local, &src_path) {
                        local.truncate(c);
                    }
                    while local.len() < levels {
                        let lvl = local.len();
                        let bit = if owner_side(spec, leader, lvl) == Side::Party {
                            nm.bit(leader, &starts[leader], &local)?
                        } else {
                            match src_path.get(relay_source_level(spec, leader, lvl).1) {
                                Some(&b) => b,
                                None => break,
                            }
                        };
                        local.push(bit);
                    }
                }
                continue;
            }
            let turn = |d: usize| (d < levels).then(|| owner_side(spec, i, d));

            // coordinator -> party
            let sym = if simulate {
                let src_path = believed(&coord, &local, spec.source_of(i));
                let e = coord[i].as_mut().expect("endpoint");
                let mv = if first_conflict(spec, i, e.pebble(), &src_path).is_some() {
                    HistoryMove::Back
                } else {
                    e.decide(turn, |p| src_path.get(relay_source_level(spec, i, p.len()).1).copied())
                };
                e.apply(mv)?
            } else {
                GARBAGE_SYMBOL
            };
            let tx = Transmission { iteration: ctx.iteration, leader, phase: Phase::ChunkSymbol, from: leader, to: i };
            let got = channel.transmit(&tx, slot, &BitString::from_u64(sym as u64, width));
            party[i].as_mut().expect("endpoint").receive(got.to_u64() as Symbol);
            slot += 1;
            if slot >= total {
                break;
            }

            // party -> coordinator
            let e = party[i].as_mut().expect("endpoint");
            let mv = e.decide(turn, |p| match nm.bit(i, &starts[i], p) {
                Ok(b) => Some(b),
                Err(err) => {
                    nm_error = Some(err);
                    None
                }
            });
            if let Some(err) = nm_error.take() {
                return Err(err);
            }
            let sym = e.apply(mv)?;
            let tx = Transmission { iteration: ctx.iteration, leader, phase: Phase::ChunkSymbol, from: i, to: leader };
            let got = channel.transmit(&tx, slot, &BitString::from_u64(sym as u64, width));
            if simulate {
                coord[i].as_mut().expect("endpoint").receive(got.to_u64() as Symbol);
            }
            slot += 1;
        }

        if simulate && completed_at.is_none() && local.len() == levels {
            let done = sched.links().iter().all(|&i| {
                let c = coord[i].as_ref().expect("endpoint").pebble();
                c.len() == levels && c == party[i].as_ref().expect("endpoint").pebble()
            });
            if done {
                completed_at = Some(slot);
            }
        }
        if let (true, Some(truth)) = (simulate, truth) {
            let mut pebbles: Vec<(usize, &[bool])> = vec![(leader, &local[..])];
            let mut guesses_ok = true;
            for &i in sched.links() {
                let c = coord[i].as_ref().expect("endpoint");
                let p = party[i].as_ref().expect("endpoint");
                guesses_ok &= c.guess_peer_pebble() == p.pebble() && p.guess_peer_pebble() == c.pebble();
                pebbles.push((i, c.pebble()));
                pebbles.push((i, p.pebble()));
            }
            let m = window_measure(&pebbles, truth);
            windows.push(WindowRecord {
                round,
                gcp: m.gcp,
                max_d: m.distances.iter().copied().max().unwrap_or(0),
                m_window: m.m_window,
                corrupted: channel.flips().len() > flips_before,
                guesses_ok,
            });
        }
        round += 1;
    }

    let mut party_paths = vec![Vec::new(); n];
    let mut leader_paths = vec![Vec::new(); n];
    for &i in sched.links() {
        party_paths[i] = party[i].as_ref().expect("endpoint").pebble().to_vec();
        if simulate {
            leader_paths[i] = coord[i].as_ref().expect("endpoint").pebble().to_vec();
        }
    }
    if simulate {
        party_paths[leader] = local.clone();
        leader_paths[leader] = local;
    }
    let complete = simulate && leader_paths.iter().all(|p| p.len() == levels);
    Ok(ChunkOutcome { party_paths, leader_paths, complete, slots: slot, completed_at, windows })
}

/// A chunk in which the coordinator sends only [`GARBAGE_SYMBOL`]. Parties
/// run their engines as usual.
pub fn garbage_chunk(ctx: &ChunkContext, starts: &[PartyStart], channel: &mut Channel) -> Result<ChunkOutcome> {
    simulate_chunk(ctx, starts, LeaderMode::Garbage, channel, None)
}

/// True chunk-relative path of every party for `chunk`, taken from the
/// noiseless transcript.
pub fn true_chunk_paths(spec: &ProtocolSpec, transcript: &BitString, chunk: usize, levels: usize) -> Vec<Vec<bool>> {
    (0..spec.n())
        .map(|i| {
            (chunk * levels..(chunk + 1) * levels)
                .map(|lvl| transcript.get(spec.view_level(i, lvl).1).unwrap_or(false))
                .collect()
        })
        .collect()
}
