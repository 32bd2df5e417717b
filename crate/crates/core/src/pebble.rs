//! Two-party pebble engine: each endpoint keeps a pebble on the shared
//! protocol tree, guesses the peer's pebble by tree-decoding the peer's
//! symbol stream, moves by the four-case rule and sends one tree-code
//! symbol per move.

use crate::error::Result;
use crate::tree_code::{DecodeSearchParams, HistoryMove, Symbol, TreeCode, TreeEncoder, WindowedDecoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Coordinator,
    Party,
}

impl Side {
    pub fn peer(self) -> Side {
        match self {
            Side::Coordinator => Side::Party,
            Side::Party => Side::Coordinator,
        }
    }
}

/// A node of a binary protocol tree addressed by its path from the root.
pub type Pebble = Vec<bool>;

pub fn is_strict_ancestor(a: &[bool], b: &[bool]) -> bool {
    a.len() < b.len() && b.starts_with(a)
}

/// Replays a move history from the root. `B` at the root stays put.
pub fn replay(history: &[HistoryMove]) -> Pebble {
    let mut p = Vec::new();
    replay_onto(&mut p, history);
    p
}

/// Applies `history` to an existing pebble.
pub fn replay_onto(p: &mut Pebble, history: &[HistoryMove]) {
    for &mv in history {
        match mv {
            HistoryMove::Zero => p.push(false),
            HistoryMove::One => p.push(true),
            HistoryMove::Hold => {}
            HistoryMove::Back => {
                p.pop();
            }
        }
    }
}

/// The four-case move rule.
///
/// `turn` gives the side that speaks at a node of the given depth (`None`
/// past the end of the tree). `next_bit` is consulted only when both
/// pebbles agree and it is this side's turn; `None` from it means the bit
/// is not yet available and the endpoint holds.
pub fn next_pebble_move(
    own: &[bool],
    peer_guess: &[bool],
    me: Side,
    turn: impl Fn(usize) -> Option<Side>,
    next_bit: impl FnOnce(&[bool]) -> Option<bool>,
) -> HistoryMove {
    if own == peer_guess {
        if turn(own.len()) == Some(me) {
            return next_bit(own).map_or(HistoryMove::Hold, HistoryMove::from_bit);
        }
        return HistoryMove::Hold;
    }
    if peer_guess.len() == own.len() + 1
        && peer_guess.starts_with(own)
        && turn(own.len()) == Some(me.peer())
    {
        return HistoryMove::from_bit(peer_guess[own.len()]);
    }
    if is_strict_ancestor(own, peer_guess) {
        return HistoryMove::Hold;
    }
    HistoryMove::Back
}

/// One end of a pairwise link.
#[derive(Clone, Debug)]
pub struct Endpoint {
    side: Side,
    out_code: TreeCode,
    in_code: TreeCode,
    pebble: Pebble,
    history: Vec<HistoryMove>,
    encoder: TreeEncoder,
    decoder: WindowedDecoder,
    window: usize,
    /// Replay of the decoded moves that can no longer change.
    frozen: Pebble,
    frozen_len: usize,
    guess: Pebble,
}

impl Endpoint {
    pub fn new(side: Side, out_code: TreeCode, in_code: TreeCode, search: DecodeSearchParams) -> Self {
        let encoder = TreeEncoder::new(&out_code);
        let decoder = WindowedDecoder::new(&in_code, search);
        Self {
            side,
            out_code,
            in_code,
            pebble: Vec::new(),
            history: Vec::new(),
            encoder,
            decoder,
            window: search.window,
            frozen: Vec::new(),
            frozen_len: 0,
            guess: Vec::new(),
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn pebble(&self) -> &[bool] {
        &self.pebble
    }

    pub fn history(&self) -> &[HistoryMove] {
        &self.history
    }

    pub fn symbols_received(&self) -> usize {
        self.decoder.received().len()
    }

    /// Feeds one received (possibly corrupted) symbol to the decoder.
    pub fn receive(&mut self, sym: Symbol) {
        self.decoder.push(&self.in_code, sym);
        let hist = self.decoder.history();
        let fixed = hist.len().saturating_sub(self.window).max(self.frozen_len);
        replay_onto(&mut self.frozen, &hist[self.frozen_len..fixed]);
        self.frozen_len = fixed;
        self.guess.clone_from(&self.frozen);
        replay_onto(&mut self.guess, &hist[fixed..]);
    }

    /// Current guess of the peer's pebble.
    pub fn guess_peer_pebble(&self) -> &[bool] {
        &self.guess
    }

    pub fn decide(
        &self,
        turn: impl Fn(usize) -> Option<Side>,
        next_bit: impl FnOnce(&[bool]) -> Option<bool>,
    ) -> HistoryMove {
        next_pebble_move(&self.pebble, &self.guess, self.side, turn, next_bit)
    }

    /// Moves the pebble, records the move and returns the symbol to send.
    pub fn apply(&mut self, mv: HistoryMove) -> Result<Symbol> {
        let mv = match mv {
            HistoryMove::Back if self.pebble.is_empty() => HistoryMove::Hold,
            other => other,
        };
        match mv {
            HistoryMove::Zero => self.pebble.push(false),
            HistoryMove::One => self.pebble.push(true),
            HistoryMove::Hold => {}
            HistoryMove::Back => {
                self.pebble.pop();
            }
        }
        self.history.push(mv);
        let sym = self.encoder.push(&self.out_code, mv)?;
        debug_assert_eq!(replay(&self.history), self.pebble);
        Ok(sym)
    }
}

/// Outcome of a standalone two-party simulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoPartyOutcome {
    pub coordinator: Pebble,
    pub party: Pebble,
    /// First step after which both pebbles sat on the given target leaf.
    pub reached_at: Option<usize>,
}

/// Runs two endpoints against each other for `steps` exchanges over a
/// protocol tree of depth `len`. `owner(d)` says who speaks at depth `d`,
/// `next_bit(side, path)` is the noiseless next-message function and
/// `channel(step, sender, symbol)` may corrupt symbols in flight.
#[allow(clippy::too_many_arguments)]
pub fn simulate_two_party(
    len: usize,
    owner: &dyn Fn(usize) -> Side,
    next_bit: &dyn Fn(Side, &[bool]) -> bool,
    seed: u64,
    alphabet: u32,
    search: DecodeSearchParams,
    steps: usize,
    target: &[bool],
    channel: &mut dyn FnMut(usize, Side, Symbol) -> Symbol,
) -> Result<TwoPartyOutcome> {
    let down = TreeCode::new(crate::prf::derive_seed(seed, &[1]), alphabet, steps);
    let up = TreeCode::new(crate::prf::derive_seed(seed, &[2]), alphabet, steps);
    let mut coord = Endpoint::new(Side::Coordinator, down.clone(), up.clone(), search);
    let mut party = Endpoint::new(Side::Party, up, down, search);
    let turn = |d: usize| (d < len).then(|| owner(d));
    let mut reached_at = None;
    for step in 0..steps {
        let mv = coord.decide(turn, |p| Some(next_bit(Side::Coordinator, p)));
        let sym = coord.apply(mv)?;
        party.receive(channel(step, Side::Coordinator, sym));
        let mv = party.decide(turn, |p| Some(next_bit(Side::Party, p)));
        let sym = party.apply(mv)?;
        coord.receive(channel(step, Side::Party, sym));
        if reached_at.is_none() && coord.pebble() == target && party.pebble() == target {
            reached_at = Some(step + 1);
        }
    }
    Ok(TwoPartyOutcome {
        coordinator: coord.pebble().to_vec(),
        party: party.pebble().to_vec(),
        reached_at,
    })
}
