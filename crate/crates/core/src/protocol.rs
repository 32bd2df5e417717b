//! The noiseless round-robin protocol: next-message functions, the
//! per-party view of the protocol tree, chunk geometry and the reference
//! executor used as the correctness oracle.

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::prf;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type PartyId = usize;

/// Closure-by-contract next-message function. Must be deterministic; any
/// return value other than 0 or 1 is a malformed spec.
pub type NextMessageFn = Arc<dyn Fn(PartyId, &BitString, &BitString) -> u8 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// Each party emits its input bits in order (0 once exhausted).
    Broadcast,
    /// Each party emits its next input bit XOR the last bit it received.
    RelayParity,
}

impl Builtin {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "broadcast" => Some(Self::Broadcast),
            "relay-parity" => Some(Self::RelayParity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Broadcast => "broadcast",
            Self::RelayParity => "relay-parity",
        }
    }
}

#[derive(Clone)]
pub enum NextMessage {
    /// Seeded lookup table over (party, input, observed transcript),
    /// evaluated lazily.
    Table { seed: u64 },
    Builtin(Builtin),
    Custom(NextMessageFn),
}

impl fmt::Debug for NextMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Table { seed } => write!(f, "Table {{ seed: {seed} }}"),
            Self::Builtin(b) => write!(f, "Builtin({})", b.name()),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Who owns a level of a party's two-party tree with the coordinator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelOwner {
    /// The party sends its own bit.
    Party,
    /// The coordinator relays the bit addressed to the party.
    Coordinator,
}

/// A noiseless n-party protocol with a static round-robin speaking order.
///
/// Bit number `d` of the transcript is sent by party `d mod n` and
/// addressed to party `(d + 1) mod n`. Each window of `n` bits therefore
/// has every party send exactly one bit and receive exactly one bit.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    n: usize,
    len: usize,
    inputs: Vec<BitString>,
    next_message: NextMessage,
}

impl ProtocolSpec {
    pub fn new(
        n: usize,
        len: usize,
        inputs: Vec<BitString>,
        next_message: NextMessage,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("party count must be at least 2, got {n}")));
        }
        if len == 0 {
            return Err(Error::Config("protocol length must be positive".into()));
        }
        if inputs.len() != n {
            return Err(Error::MalformedSpec(format!(
                "expected {n} inputs, got {}",
                inputs.len()
            )));
        }
        Ok(Self { n, len, inputs, next_message })
    }

    /// Random table-driven protocol with `input_bits`-bit random inputs.
    pub fn random(n: usize, len: usize, seed: u64) -> Result<Self> {
        let input_bits = 64;
        let inputs = (0..n)
            .map(|i| {
                let word = prf::derive_seed(seed, &[0x1a9u64, i as u64]);
                BitString::from_u64(word, input_bits)
            })
            .collect();
        Self::new(n, len, inputs, NextMessage::Table { seed: prf::derive_seed(seed, &[0x7ab]) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unpadded transcript length L.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn inputs(&self) -> &[BitString] {
        &self.inputs
    }

    pub fn next_message_kind(&self) -> &NextMessage {
        &self.next_message
    }

    /// Windows of the padded transcript, `⌈L/n⌉`.
    pub fn windows(&self) -> usize {
        self.len.div_ceil(self.n)
    }

    /// Levels of `party`'s view that lie before depth L. Levels are
    /// chronological, so these form a prefix.
    pub fn real_levels(&self, party: PartyId) -> usize {
        (0..2 * self.windows())
            .take_while(|&lvl| self.view_level(party, lvl).1 < self.len)
            .count()
    }

    pub fn sender(&self, depth: usize) -> PartyId {
        depth % self.n
    }

    pub fn recipient(&self, depth: usize) -> PartyId {
        (depth + 1) % self.n
    }

    /// Party whose bits `party` receives.
    pub fn source_of(&self, party: PartyId) -> PartyId {
        (party + self.n - 1) % self.n
    }

    /// Owner and global transcript depth of `level` in `party`'s two-party
    /// tree. Each window contributes two levels: the relayed incoming bit
    /// and the party's own bit, in the order they occur in the window.
    pub fn view_level(&self, party: PartyId, level: usize) -> (LevelOwner, usize) {
        let window = level / 2;
        let base = window * self.n;
        match (party, level % 2) {
            (0, 0) => (LevelOwner::Party, base),
            (0, _) => (LevelOwner::Coordinator, base + self.n - 1),
            (p, 0) => (LevelOwner::Coordinator, base + p - 1),
            (p, _) => (LevelOwner::Party, base + p),
        }
    }

    /// Level in `party`'s view at which the party's own bit of `window` sits.
    pub fn own_level(&self, party: PartyId, window: usize) -> usize {
        if party == 0 {
            2 * window
        } else {
            2 * window + 1
        }
    }

    /// Level in `party`'s view at which its incoming bit of `window` sits.
    pub fn relay_level(&self, party: PartyId, window: usize) -> usize {
        if party == 0 {
            2 * window + 1
        } else {
            2 * window
        }
    }

    /// The next-message function. Depths at or beyond L are dummy padding
    /// and always yield 0.
    pub fn next_bit(&self, party: PartyId, global_depth: usize, trans: &BitString) -> Result<bool> {
        if global_depth >= self.len {
            return Ok(false);
        }
        let input = &self.inputs[party];
        let raw = match &self.next_message {
            NextMessage::Table { seed } => table_bit(*seed, party, input, trans),
            NextMessage::Builtin(b) => builtin_bit(*b, input, trans, party),
            NextMessage::Custom(f) => f(party, input, trans),
        };
        match raw {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::MalformedSpec(format!(
                "next-message function of party {party} returned {other}"
            ))),
        }
    }

    /// Projection of a global transcript onto `party`'s view, covering the
    /// first `windows` windows.
    pub fn project(&self, transcript: &BitString, party: PartyId, windows: usize) -> BitString {
        (0..2 * windows)
            .map(|lvl| {
                let (_, g) = self.view_level(party, lvl);
                transcript.get(g).unwrap_or(false)
            })
            .collect()
    }
}

fn table_bit(seed: u64, party: PartyId, input: &BitString, trans: &BitString) -> u8 {
    let mut s = prf::absorb(seed, party as u64);
    s = absorb_bits(s, input);
    s = prf::absorb(s, 0xfeed);
    s = absorb_bits(s, trans);
    (prf::mix64(s) & 1) as u8
}

fn absorb_bits(mut s: u64, bits: &BitString) -> u64 {
    s = prf::absorb(s, bits.len() as u64);
    for chunk in bits.as_slice().chunks(64) {
        let w = chunk
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
        s = prf::absorb(s, w);
    }
    s
}

fn builtin_bit(b: Builtin, input: &BitString, trans: &BitString, party: PartyId) -> u8 {
    // Own bits sit on odd levels for parties >= 1 and even levels for party 0;
    // either way the count of own bits sent so far is the window index.
    let window = trans.len() / 2;
    let next_input = input.get(window).unwrap_or(false) as u8;
    match b {
        Builtin::Broadcast => next_input,
        Builtin::RelayParity => {
            let last_in = if party == 0 {
                if window == 0 {
                    0
                } else {
                    trans.get(2 * window - 1).unwrap_or(false) as u8
                }
            } else {
                trans.get(2 * window).unwrap_or(false) as u8
            };
            next_input ^ last_in
        }
    }
}

/// Runs the protocol without noise, returning the L-bit transcript.
pub fn run_noiseless(spec: &ProtocolSpec) -> Result<BitString> {
    let mut views: Vec<BitString> = vec![BitString::new(); spec.n()];
    let mut transcript = BitString::new();
    for depth in 0..spec.len() {
        let from = spec.sender(depth);
        let to = spec.recipient(depth);
        let bit = spec.next_bit(from, depth, &views[from])?;
        transcript.push(bit);
        views[from].push(bit);
        views[to].push(bit);
    }
    Ok(transcript)
}

/// Chunking of the (padded) protocol tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkGeometry {
    /// Chunk depth in global tree levels.
    pub k: usize,
    /// Exchanges-per-chunk multiplier.
    pub m: usize,
    /// Set when `k` was rounded up instead of derived exactly.
    pub rounded: bool,
}

impl ChunkGeometry {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::Config("chunk depth and multiplier must be positive".into()));
        }
        Ok(Self { k, m, rounded: false })
    }

    pub fn num_chunks(&self, len: usize) -> usize {
        len.div_ceil(self.k)
    }

    /// Symbol slots in one chunk simulation.
    pub fn slots(&self) -> usize {
        self.m * self.k
    }

    pub fn windows_per_chunk(&self, n: usize) -> usize {
        self.k / n
    }

    /// Depths covered by chunk `j`.
    pub fn span(&self, j: usize) -> std::ops::Range<usize> {
        j * self.k..(j + 1) * self.k
    }
}

pub fn chunk_of(depth: usize, geom: &ChunkGeometry) -> usize {
    depth / geom.k
}

/// Chunk depth from `4 n beta t = m k`.
///
/// In paper-consistent mode `4nβt` must be divisible by `m` and the result
/// must be a whole number of windows; otherwise `k` is rounded up to the
/// next multiple of `n` and flagged.
pub fn derive_chunk_geometry(
    n: usize,
    beta: usize,
    t: usize,
    m: usize,
    paper_consistent: bool,
) -> Result<ChunkGeometry> {
    if n == 0 || beta == 0 || t == 0 || m == 0 {
        return Err(Error::Config("chunk geometry parameters must be positive".into()));
    }
    let total = 4 * n * beta * t;
    if total.is_multiple_of(m) && (total / m).is_multiple_of(n) {
        return ChunkGeometry::new(total / m, m);
    }
    if paper_consistent {
        return Err(Error::Config(format!(
            "4nβt = {total} is not a multiple of m·n = {}",
            m * n
        )));
    }
    let k = total.div_ceil(m).div_ceil(n) * n;
    Ok(ChunkGeometry { k, m, rounded: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn broadcast(n: usize, len: usize, inputs: &[&str]) -> ProtocolSpec {
        let inputs = inputs.iter().map(|s| BitString::parse(s).unwrap()).collect();
        ProtocolSpec::new(n, len, inputs, NextMessage::Builtin(Builtin::Broadcast)).unwrap()
    }

    #[test]
    fn broadcast_three_parties() {
        let spec = broadcast(3, 3, &["1", "0", "1"]);
        assert_eq!(run_noiseless(&spec).unwrap().to_string(), "101");
    }

    #[test]
    fn broadcast_two_windows() {
        let spec = broadcast(3, 6, &["10", "01", "11"]);
        assert_eq!(run_noiseless(&spec).unwrap().to_string(), "101011");
    }

    #[test]
    fn non_bit_output_is_malformed() {
        let f: NextMessageFn = Arc::new(|_, _, _| 2);
        let spec = ProtocolSpec::new(2, 2, vec![BitString::new(); 2], NextMessage::Custom(f)).unwrap();
        assert!(matches!(run_noiseless(&spec), Err(Error::MalformedSpec(_))));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(ProtocolSpec::random(1, 4, 0).is_err());
        assert!(ProtocolSpec::random(3, 0, 0).is_err());
    }

    #[test]
    fn view_levels_cover_send_and_receive() {
        let spec = ProtocolSpec::random(4, 8, 1).unwrap();
        for p in 0..4 {
            let mut owned = Vec::new();
            for lvl in 0..4 {
                let (owner, g) = spec.view_level(p, lvl);
                match owner {
                    LevelOwner::Party => assert_eq!(spec.sender(g), p),
                    LevelOwner::Coordinator => assert_eq!(spec.recipient(g), p),
                }
                owned.push(g);
            }
            // levels are chronological
            assert!(owned.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn padded_windows_and_real_levels() {
        let spec = ProtocolSpec::random(5, 12, 3).unwrap();
        assert_eq!(spec.windows(), 3);
        // depths 10 (0 -> 1) and 11 (1 -> 2) are real in the last window
        let real: Vec<usize> = (0..5).map(|p| spec.real_levels(p)).collect();
        assert_eq!(real, vec![5, 6, 5, 4, 4]);
        let full = ProtocolSpec::random(4, 8, 3).unwrap();
        assert!((0..4).all(|p| full.real_levels(p) == 4));
    }

    #[test]
    fn chunk_boundaries() {
        let g = ChunkGeometry::new(48, 4).unwrap();
        assert_eq!(chunk_of(0, &g), 0);
        assert_eq!(chunk_of(47, &g), 0);
        assert_eq!(chunk_of(48, &g), 1);
        assert_eq!(chunk_of(96, &g), 2);
    }

    #[test]
    fn geometry_formula() {
        assert_eq!(derive_chunk_geometry(4, 2, 24, 4, true).unwrap().k, 192);
        assert_eq!(derive_chunk_geometry(3, 2, 8, 4, true).unwrap().k, 48);
        assert_eq!(derive_chunk_geometry(4, 2, 24, 1, true).unwrap().k, 768);
    }

    #[test]
    fn geometry_non_divisible() {
        assert!(derive_chunk_geometry(3, 2, 8, 5, true).is_err());
        let g = derive_chunk_geometry(3, 2, 8, 5, false).unwrap();
        assert!(g.rounded);
        assert_eq!(g.k % 3, 0);
        assert!(g.k * 5 >= 4 * 3 * 2 * 8);
    }
}
