//! 4-ary tree code over pebble-move histories.
//!
//! Arc labels are a seeded pseudorandom function of the path. The label of
//! move `j` is the pseudorandom value of the prefix ending three moves
//! earlier XORed with an encoding of the last three moves, so two histories
//! that diverge at position `j` always disagree on symbols `j..j+3` and look
//! independent afterwards.

use crate::error::{Error, Result};
use crate::prf;
use serde::{Deserialize, Serialize};

pub type Symbol = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HistoryMove {
    Zero,
    One,
    Hold,
    Back,
}

impl HistoryMove {
    /// In tie-break order.
    pub const ALL: [HistoryMove; 4] = [Self::Zero, Self::One, Self::Hold, Self::Back];

    pub fn index(self) -> u64 {
        self as u64
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Self::One
        } else {
            Self::Zero
        }
    }
}

/// Rolling per-position state: the pseudorandom prefix value and the last
/// three moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderState {
    prefix: [u64; 4],
    recent: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Labeling {
    Pseudorandom,
    /// Every arc gets symbol 0; a deliberately useless code.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCode {
    seed: u64,
    alphabet: u32,
    depth: usize,
    labeling: Labeling,
}

impl TreeCode {
    pub fn new(seed: u64, alphabet: u32, depth: usize) -> Self {
        assert!(alphabet >= 2, "alphabet must have at least two symbols");
        Self { seed, alphabet, depth, labeling: Labeling::Pseudorandom }
    }

    pub fn constant(alphabet: u32, depth: usize) -> Self {
        Self { seed: 0, alphabet, depth, labeling: Labeling::Constant }
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Wire width of one symbol.
    pub fn symbol_bits(&self) -> usize {
        (32 - (self.alphabet - 1).leading_zeros()) as usize
    }

    fn structured_moves(&self) -> u32 {
        // number of trailing moves folded into a label, two bits each
        (31 - self.alphabet.leading_zeros()).min(6) / 2
    }

    pub fn root(&self) -> EncoderState {
        let p = prf::mix64(self.seed);
        EncoderState { prefix: [p; 4], recent: 0 }
    }

    /// State after appending `mv`, and the label of that arc.
    pub fn step(&self, state: &EncoderState, mv: HistoryMove) -> (EncoderState, Symbol) {
        let newest = prf::absorb(state.prefix[0], mv.index() + 1);
        let next = EncoderState {
            prefix: [newest, state.prefix[0], state.prefix[1], state.prefix[2]],
            recent: ((state.recent << 2) | mv.index()) & 0x3f,
        };
        let label = match self.labeling {
            Labeling::Constant => 0,
            Labeling::Pseudorandom => {
                let r = self.structured_moves();
                let structured = next.recent & ((1u64 << (2 * r)) - 1);
                // pseudorandom part keyed by the prefix before the structured moves
                let keyed = prf::mix64(next.prefix[r as usize] ^ 0x51ab_e1f0);
                ((keyed ^ structured) % self.alphabet as u64) as Symbol
            }
        };
        (next, label)
    }

    pub fn encode(&self, hist: &[HistoryMove]) -> Result<Vec<Symbol>> {
        if hist.len() > self.depth {
            return Err(Error::DepthExceeded { depth: self.depth });
        }
        let mut st = self.root();
        Ok(hist
            .iter()
            .map(|&mv| {
                let (next, sym) = self.step(&st, mv);
                st = next;
                sym
            })
            .collect())
    }

    /// Last symbol of the encoding of `hist`.
    pub fn encode_next(&self, hist: &[HistoryMove]) -> Result<Symbol> {
        if hist.is_empty() {
            return Err(Error::Config("cannot encode an empty history".into()));
        }
        Ok(*self.encode(hist)?.last().unwrap())
    }
}

/// Online encoder: one symbol per appended move.
#[derive(Clone, Debug)]
pub struct TreeEncoder {
    state: EncoderState,
    len: usize,
}

impl TreeEncoder {
    pub fn new(tc: &TreeCode) -> Self {
        Self { state: tc.root(), len: 0 }
    }

    pub fn push(&mut self, tc: &TreeCode, mv: HistoryMove) -> Result<Symbol> {
        if self.len >= tc.depth() {
            return Err(Error::DepthExceeded { depth: tc.depth() });
        }
        let (next, sym) = tc.step(&self.state, mv);
        self.state = next;
        self.len += 1;
        Ok(sym)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeSearchParams {
    /// Rewind window W: only the last W moves of the previous decode may change.
    pub window: usize,
    /// Branch-and-bound node budget per decoded symbol; the best candidate
    /// found so far is returned when it runs out.
    pub node_budget: usize,
}

impl Default for DecodeSearchParams {
    fn default() -> Self {
        Self { window: 12, node_budget: 50_000 }
    }
}

impl DecodeSearchParams {
    pub fn exhaustive(depth: usize) -> Self {
        Self { window: depth.max(1), node_budget: usize::MAX }
    }
}

/// Incremental windowed minimum-distance decoder.
///
/// The decode of a stream `r` is defined recursively: for `|r| <= W` it is
/// the exhaustive minimiser of the Hamming distance (ties to the
/// lexicographically smallest history); otherwise the first `|r| - W`
/// moves are taken from the decode of `r` without its last symbol and only
/// the last `W` moves are searched. The result is a pure function of
/// `(code, stream, params)`; this struct only caches the recursion.
#[derive(Clone, Debug)]
pub struct WindowedDecoder {
    params: DecodeSearchParams,
    received: Vec<Symbol>,
    best: Vec<HistoryMove>,
    /// `states[i]` is the encoder state after `best[..i]`.
    states: Vec<EncoderState>,
    last_distance: usize,
}

impl WindowedDecoder {
    pub fn new(tc: &TreeCode, params: DecodeSearchParams) -> Self {
        Self {
            params,
            received: Vec::new(),
            best: Vec::new(),
            states: vec![tc.root()],
            last_distance: 0,
        }
    }

    pub fn history(&self) -> &[HistoryMove] {
        &self.best
    }

    pub fn received(&self) -> &[Symbol] {
        &self.received
    }

    /// Hamming distance of the current decode's window part to the stream.
    pub fn window_distance(&self) -> usize {
        self.last_distance
    }

    pub fn push(&mut self, tc: &TreeCode, sym: Symbol) -> &[HistoryMove] {
        self.received.push(sym);
        let len = self.received.len();
        let fixed = len.saturating_sub(self.params.window);
        self.best.truncate(fixed.max(len - 1));
        self.states.truncate(self.best.len() + 1);

        // incumbent: previous decode extended by the best single move
        let mut cand: Vec<HistoryMove> = self.best[fixed..].to_vec();
        let mut st = self.states[fixed];
        let mut dist = 0;
        for (i, &mv) in cand.iter().enumerate() {
            let (n, s) = tc.step(&st, mv);
            dist += (s != self.received[fixed + i]) as usize;
            st = n;
        }
        let (last_mv, last_cost) = HistoryMove::ALL
            .iter()
            .map(|&mv| (mv, (tc.step(&st, mv).1 != sym) as usize))
            .min_by_key(|&(_, c)| c)
            .unwrap();
        cand.push(last_mv);
        let mut search = Search {
            tc,
            target: &self.received[fixed..],
            best: cand,
            best_dist: dist + last_cost,
            path: Vec::with_capacity(len - fixed),
            budget: self.params.node_budget,
        };
        search.dfs(self.states[fixed], 0);

        self.best.truncate(fixed);
        self.states.truncate(fixed + 1);
        let mut st = self.states[fixed];
        for &mv in &search.best {
            st = tc.step(&st, mv).0;
            self.best.push(mv);
            self.states.push(st);
        }
        self.last_distance = search.best_dist;
        &self.best
    }
}

struct Search<'a> {
    tc: &'a TreeCode,
    target: &'a [Symbol],
    best: Vec<HistoryMove>,
    best_dist: usize,
    path: Vec<HistoryMove>,
    budget: usize,
}

impl Search<'_> {
    fn dfs(&mut self, st: EncoderState, partial: usize) {
        if self.path.len() == self.target.len() {
            if partial < self.best_dist || (partial == self.best_dist && self.path < self.best) {
                self.best_dist = partial;
                self.best.clone_from(&self.path);
            }
            return;
        }
        for mv in HistoryMove::ALL {
            if self.budget == 0 {
                return;
            }
            self.budget -= 1;
            let (next, sym) = self.tc.step(&st, mv);
            let cost = partial + (sym != self.target[self.path.len()]) as usize;
            if cost > self.best_dist {
                continue;
            }
            self.path.push(mv);
            self.dfs(next, cost);
            self.path.pop();
        }
    }
}

/// Decodes a whole stream from scratch.
pub fn tc_decode(tc: &TreeCode, received: &[Symbol], params: DecodeSearchParams) -> Vec<HistoryMove> {
    let mut dec = WindowedDecoder::new(tc, params);
    for &s in received {
        dec.push(tc, s);
    }
    dec.history().to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub depth: usize,
    pub exhaustive: bool,
    pub pairs_checked: u64,
    /// Minimum absolute Hamming distance between diverging label suffixes.
    pub min_distance: usize,
    /// Minimum of distance / suffix length.
    pub min_relative: f64,
}

/// Minimum suffix distance between diverging histories of equal length up
/// to `depth`. Exhaustive when `depth <= 10` and `samples == 0`; otherwise
/// `samples` random pairs are checked.
pub fn tc_verify_distance(tc: &TreeCode, depth: usize, samples: u64, seed: u64) -> DistanceReport {
    let mut rep = DistanceReport {
        depth,
        exhaustive: samples == 0,
        pairs_checked: 0,
        min_distance: usize::MAX,
        min_relative: f64::INFINITY,
    };
    if samples == 0 {
        assert!(depth <= 10, "exhaustive distance check limited to depth 10");
        exhaustive_nodes(tc, tc.root(), 0, depth, &mut rep);
    } else {
        let mut s = prf::mix64(seed);
        let mut next = || {
            s = prf::mix64(s);
            s
        };
        for _ in 0..samples {
            let div = (next() % depth as u64) as usize;
            let mut st = tc.root();
            for _ in 0..div {
                st = tc.step(&st, HistoryMove::ALL[(next() % 4) as usize]).0;
            }
            let a = (next() % 4) as usize;
            let b = (a + 1 + (next() % 3) as usize) % 4;
            let (mut sa, mut la) = tc.step(&st, HistoryMove::ALL[a]);
            let (mut sb, mut lb) = tc.step(&st, HistoryMove::ALL[b]);
            let mut dist = 0;
            for l in 1..=depth - div {
                dist += (la != lb) as usize;
                record(&mut rep, dist, l);
                let ma = HistoryMove::ALL[(next() % 4) as usize];
                let mb = HistoryMove::ALL[(next() % 4) as usize];
                (sa, la) = tc.step(&sa, ma);
                (sb, lb) = tc.step(&sb, mb);
            }
        }
    }
    if rep.min_distance == usize::MAX {
        rep.min_distance = 0;
        rep.min_relative = 0.0;
    }
    rep
}

fn record(rep: &mut DistanceReport, dist: usize, len: usize) {
    rep.pairs_checked += 1;
    rep.min_distance = rep.min_distance.min(dist);
    rep.min_relative = rep.min_relative.min(dist as f64 / len as f64);
}

fn exhaustive_nodes(tc: &TreeCode, st: EncoderState, at: usize, depth: usize, rep: &mut DistanceReport) {
    if at >= depth {
        return;
    }
    for a in 0..4 {
        for b in a + 1..4 {
            let (sa, la) = tc.step(&st, HistoryMove::ALL[a]);
            let (sb, lb) = tc.step(&st, HistoryMove::ALL[b]);
            pair_extensions(tc, sa, sb, (la != lb) as usize, 1, depth - at, rep);
        }
    }
    for mv in HistoryMove::ALL {
        exhaustive_nodes(tc, tc.step(&st, mv).0, at + 1, depth, rep);
    }
}

fn pair_extensions(
    tc: &TreeCode,
    sa: EncoderState,
    sb: EncoderState,
    dist: usize,
    len: usize,
    max_len: usize,
    rep: &mut DistanceReport,
) {
    record(rep, dist, len);
    if len == max_len {
        return;
    }
    for ma in HistoryMove::ALL {
        let (na, la) = tc.step(&sa, ma);
        for mb in HistoryMove::ALL {
            let (nb, lb) = tc.step(&sb, mb);
            pair_extensions(tc, na, nb, dist + (la != lb) as usize, len + 1, max_len, rep);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use HistoryMove::*;

    /// Independent oracle: full encodings of every history of the given length.
    fn brute_force_decode(tc: &TreeCode, received: &[Symbol]) -> Vec<HistoryMove> {
        let len = received.len();
        let mut best: Option<(usize, Vec<HistoryMove>)> = None;
        for code in 0..4u64.pow(len as u32) {
            let hist: Vec<HistoryMove> = (0..len)
                .map(|i| HistoryMove::ALL[((code >> (2 * (len - 1 - i))) & 3) as usize])
                .collect();
            let enc = tc.encode(&hist).unwrap();
            let d = enc.iter().zip(received).filter(|(a, b)| a != b).count();
            if best.as_ref().is_none_or(|(bd, bh)| d < *bd || (d == *bd && hist < *bh)) {
                best = Some((d, hist));
            }
        }
        best.map(|(_, h)| h).unwrap_or_default()
    }

    #[test]
    fn online_matches_full_encoding() {
        let tc = TreeCode::new(17, 64, 32);
        let hist = [Zero, One, Hold, Back, Back, One];
        let full = tc.encode(&hist).unwrap();
        let online: Vec<Symbol> = (1..=hist.len())
            .map(|j| tc.encode_next(&hist[..j]).unwrap())
            .collect();
        assert_eq!(full, online);
        let mut enc = TreeEncoder::new(&tc);
        let pushed: Vec<Symbol> = hist.iter().map(|&m| enc.push(&tc, m).unwrap()).collect();
        assert_eq!(full, pushed);
    }

    #[test]
    fn shared_seed_shares_code() {
        let a = TreeCode::new(99, 64, 8);
        let b = TreeCode::new(99, 64, 8);
        let h = [One, One, Hold];
        assert_eq!(a.encode(&h).unwrap(), b.encode(&h).unwrap());
    }

    #[test]
    fn depth_overflow() {
        let tc = TreeCode::new(1, 64, 2);
        assert!(matches!(tc.encode(&[Zero, Zero, Zero]), Err(Error::DepthExceeded { .. })));
        let mut enc = TreeEncoder::new(&tc);
        enc.push(&tc, Zero).unwrap();
        enc.push(&tc, Zero).unwrap();
        assert!(enc.push(&tc, Zero).is_err());
    }

    #[test]
    fn exact_stream_decodes_exactly() {
        let tc = TreeCode::new(5, 64, 64);
        let hist: Vec<HistoryMove> = (0..40).map(|i| HistoryMove::ALL[(i * 7 + i / 3) % 4]).collect();
        let enc = tc.encode(&hist).unwrap();
        assert_eq!(tc_decode(&tc, &enc, DecodeSearchParams::default()), hist);
    }

    #[test]
    fn single_corruption_matches_brute_force() {
        let tc = TreeCode::new(23, 32, 8);
        let hist = [One, Zero, Hold, One, Back, Zero, One, Hold];
        let mut enc = tc.encode(&hist).unwrap();
        enc[3] ^= 5;
        let got = tc_decode(&tc, &enc, DecodeSearchParams::exhaustive(8));
        assert_eq!(got, brute_force_decode(&tc, &enc));
        assert_eq!(got, hist);
    }

    #[test]
    fn degenerate_code_has_zero_distance() {
        let tc = TreeCode::constant(2, 4);
        assert_eq!(tc_verify_distance(&tc, 3, 0, 0).min_distance, 0);
    }

    #[test]
    fn depth_one_sibling_labels_differ() {
        let tc = TreeCode::new(3, 64, 4);
        let rep = tc_verify_distance(&tc, 1, 0, 0);
        assert_eq!(rep.min_distance, 1);
        assert_eq!(rep.pairs_checked, 6);
    }

    #[test]
    fn symbol_width() {
        assert_eq!(TreeCode::new(0, 64, 1).symbol_bits(), 6);
        assert_eq!(TreeCode::new(0, 32, 1).symbol_bits(), 5);
        assert_eq!(TreeCode::new(0, 2, 1).symbol_bits(), 1);
    }

    #[test]
    fn decode_is_length_preserving_and_within_error_count() {
        let tc = TreeCode::new(8, 64, 40);
        let hist: Vec<HistoryMove> = (0..30).map(|i| HistoryMove::ALL[(i * 5 + 1) % 4]).collect();
        let mut enc = tc.encode(&hist).unwrap();
        enc[10] = (enc[10] + 1) % 64;
        enc[20] = (enc[20] + 1) % 64;
        let got = tc_decode(&tc, &enc, DecodeSearchParams::default());
        assert_eq!(got.len(), enc.len());
        let re = tc.encode(&got).unwrap();
        let d = re.iter().zip(&enc).filter(|(a, b)| a != b).count();
        assert!(d <= 2);
    }
}
