//! The rotating-leader compiler: iterations of γ collection, tapping the
//! previous leader, chunk simulation and the hash-chain consistency check.

use crate::bits::BitString;
use crate::channel::{AdversaryContext, CellCount, Channel, FlipRecord, Phase, Transmission};
use crate::chunk::{simulate_chunk, ChunkContext, ChunkOutcome, LeaderMode, PartyStart, WindowRecord};
use crate::codec::{BlockCode, Digest, HashFamily, HashKey, HashParams};
use crate::error::{Error, Result};
use crate::prf::derive_seed;
use crate::progress;
use crate::protocol::{run_noiseless, PartyId, ProtocolSpec};
use crate::params::RunParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directive {
    F,
    B1,
    B2,
}

impl Directive {
    fn code(self) -> u64 {
        match self {
            Directive::F => 1,
            Directive::B1 => 2,
            Directive::B2 => 3,
        }
    }

    fn from_code(c: u64) -> Option<Self> {
        match c {
            1 => Some(Directive::F),
            2 => Some(Directive::B1),
            3 => Some(Directive::B2),
            _ => None,
        }
    }
}

/// The digest bundle a leader keeps for the interval it led.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedInterval {
    pub chunk: usize,
    pub bundle: Vec<Digest>,
    pub tapped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyState {
    pub id: PartyId,
    pub gamma: usize,
    /// Accepted path in the party's tree; `gamma · levels` long between
    /// iterations.
    pub path: Vec<bool>,
    /// Party-side digest per chunk.
    pub rho: Vec<Option<Digest>>,
    /// Who simulated each chunk most recently, as learned from `F`.
    pub record: Vec<Option<(PartyId, usize)>>,
    /// Bundles of the intervals this party led, by interval.
    pub led: BTreeMap<usize, LedInterval>,
    pub tap_responses: usize,
    pub leader_stints: usize,
}

impl PartyState {
    fn new(id: PartyId, chunks: usize) -> Self {
        Self {
            id,
            gamma: 0,
            path: Vec::new(),
            rho: vec![None; chunks + 1],
            record: vec![None; chunks + 1],
            led: BTreeMap::new(),
            tap_responses: 0,
            leader_stints: 0,
        }
    }

    /// Applies a directive; returns true when `B2` at chunk 0 was clamped.
    pub fn chunk_update(&mut self, d: Directive, levels: usize) -> bool {
        let clamped = d == Directive::B2 && self.gamma == 0;
        match d {
            Directive::F => self.gamma += 1,
            Directive::B1 => {}
            Directive::B2 if clamped => {}
            Directive::B2 => self.gamma -= 1,
        }
        self.path.resize(self.gamma * levels, false);
        clamped
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapOutcome {
    /// No tap needed; a filler exchange was made instead.
    NotNeeded,
    /// The leader had no record of who simulated the previous chunk.
    NoRecord,
    /// The leader led that interval itself.
    Local,
    Delivered,
    /// The target stayed silent.
    Timeout,
    /// A response arrived but did not decode.
    Undecodable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapEvent {
    pub outcome: TapOutcome,
    pub target: Option<PartyId>,
    pub interval: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    Simulated,
    GarbageGammaMismatch,
    GarbageNoBundle,
    GarbageForced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub leader: PartyId,
    pub target_chunk: usize,
    pub reported_gamma: Vec<Option<usize>>,
    pub gamma: Vec<usize>,
    pub c_beta: usize,
    #[serde(rename = "M")]
    pub m: i64,
    pub phi: f64,
    pub budget: u64,
    pub spent: u64,
    pub flips: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flip_log: Vec<FlipRecord>,
    pub chunk_mode: ChunkMode,
    pub chunk_complete: bool,
    /// Protocol-visible verdict of the consistency check.
    pub chunk_good: bool,
    /// Analysis verdict: no corruption had any effect.
    pub iteration_good: bool,
    pub misdecoded_words: usize,
    pub tap: TapEvent,
    /// Party and interval whose bundle was surrendered this iteration.
    pub responder: Option<(PartyId, usize)>,
    pub directives: Vec<Directive>,
    pub clamped: usize,
    pub undecodable_directives: usize,
    pub collisions: usize,
    pub hash_comparisons: usize,
    pub slots: usize,
    pub bits_sent: Vec<u64>,
    pub bits_received: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<WindowRecord>>,
}

impl IterationRecord {
    pub fn bits(&self) -> u64 {
        self.bits_sent.iter().sum()
    }
}

/// Fault injection for tests.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FaultHooks {
    /// Iterations whose leader runs a garbage chunk regardless.
    pub force_garbage: Vec<usize>,
    /// Iterations whose leader treats every digest as matching while its
    /// view of the next party's chunk is off by one bit.
    pub force_collision: Vec<usize>,
    /// (iteration, party) digests the leader treats as mismatched.
    pub force_mismatch: Vec<(usize, PartyId)>,
    /// (iteration, value): the tap target hears `value` as the request.
    pub misroute_tap: Vec<(usize, u64)>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub hooks: FaultHooks,
    /// Record per-round window instrumentation for simulated chunks.
    pub instrument_windows: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub params: RunParams,
    pub oracle: BitString,
    /// Each party's reconstructed view; `None` when its path is too short.
    pub outputs: Vec<Option<BitString>>,
    /// The oracle projected on each party's view.
    pub expected: Vec<BitString>,
    pub records: Vec<IterationRecord>,
    pub flips: Vec<FlipRecord>,
    pub final_gamma: Vec<usize>,
    pub final_c_beta: usize,
    pub totals: Vec<CellCount>,
    pub total_bits: u64,
    pub cells: BTreeMap<(usize, PartyId, Phase), CellCount>,
    pub tap_responses: Vec<usize>,
    pub leader_stints: Vec<usize>,
    pub total_slots: usize,
    /// Final party states.
    pub parties: Vec<PartyState>,
}

impl RunResult {
    pub fn correct(&self) -> bool {
        self.outputs.iter().zip(&self.expected).all(|(o, e)| o.as_ref() == Some(e))
    }

    pub fn collisions(&self) -> usize {
        self.records.iter().map(|r| r.collisions).sum()
    }

    pub fn hash_comparisons(&self) -> usize {
        self.records.iter().map(|r| r.hash_comparisons).sum()
    }

    pub fn spent(&self) -> u64 {
        self.flips.len() as u64
    }
}

struct Codecs {
    enc1: BlockCode,
    enc2: BlockCode,
    hash: HashFamily,
    hash_params: HashParams,
    t: usize,
}

impl Codecs {
    fn new(p: &RunParams) -> Result<Self> {
        let hash_params = HashParams::new(p.hash_exponent)?;
        Ok(Self {
            enc1: BlockCode::new(2 * p.t, p.beta)?,
            enc2: BlockCode::new(p.n * p.t, p.beta)?,
            hash: HashFamily::new(hash_params),
            hash_params,
            t: p.t,
        })
    }

    fn value_word(&self, v: u64) -> BitString {
        let w = 64.min(2 * self.t);
        BitString::from_u64(v, w).concat(&BitString::zeros(2 * self.t - w))
    }

    fn word_value(&self, b: &BitString) -> u64 {
        b.slice(0, 64.min(2 * self.t)).to_u64()
    }

    fn zero_digest(&self) -> Digest {
        Digest::from_bits(BitString::zeros(self.t), &self.hash_params).expect("digest length")
    }

    /// Per-iteration bits outside timeouts.
    fn iteration_bits(&self, p: &RunParams) -> u64 {
        let c1 = self.enc1.codeword_len() as u64;
        let c2 = self.enc2.codeword_len() as u64;
        let n = p.n as u64;
        3 * (n - 1) * c1 + c1 + c2 + (p.m * p.k) as u64 * crate::tree_code::TreeCode::new(0, p.c, 1).symbol_bits() as u64
    }
}

/// Per-iteration scratch shared by the word exchanges.
struct Exchange<'a> {
    channel: &'a mut Channel,
    iteration: usize,
    leader: PartyId,
    misdecoded: usize,
}

impl Exchange<'_> {
    fn send(&mut self, code: &BlockCode, msg: &BitString, phase: Phase, from: PartyId, to: PartyId) -> Result<Option<BitString>> {
        let tx = Transmission { iteration: self.iteration, leader: self.leader, phase, from, to };
        let got = self.channel.transmit(&tx, 0, &code.encode(msg)?);
        let dec = code.decode(&got)?;
        if dec.as_ref() != Some(msg) {
            self.misdecoded += 1;
        }
        Ok(dec)
    }
}

fn concat_bits(path: &[bool], tail: Option<&BitString>) -> BitString {
    let mut b = BitString::from_bools(path.to_vec());
    if let Some(t) = tail {
        b.extend_from(t);
    }
    b
}

/// Runs the compiled protocol.
pub fn run_compiled(spec: &ProtocolSpec, params: &RunParams, opts: &RunOptions) -> Result<RunResult> {
    if spec.n() != params.n || spec.len() != params.len {
        return Err(Error::Config(format!(
            "protocol has n={}, L={} but parameters were derived for n={}, L={}",
            spec.n(),
            spec.len(),
            params.n,
            params.len
        )));
    }
    let n = params.n;
    let levels = params.levels();
    let codecs = Codecs::new(params)?;
    let oracle = run_noiseless(spec)?;
    let truth: Vec<Vec<bool>> = (0..n)
        .map(|i| spec.project(&oracle, i, (params.chunks + 1) * levels / 2).as_slice().to_vec())
        .collect();
    let per_iter = codecs.iteration_bits(params);
    let mut channel = Channel::new(
        params.strategy.clone(),
        params.budget,
        derive_seed(params.seed, &[0xad]),
        AdversaryContext {
            iterations: params.iterations,
            slots_per_chunk: params.m * params.k,
            expected_bits: per_iter * params.iterations as u64,
        },
    );
    let mut parties: Vec<PartyState> = (0..n).map(|i| PartyState::new(i, params.chunks)).collect();
    let mut records = Vec::with_capacity(params.iterations);
    let mut total_slots = 0;

    for j in 0..params.iterations {
        let slots = params.slots_in(j);
        if slots == 0 {
            break;
        }
        let leader = j % n;
        parties[leader].leader_stints += 1;
        let flips_before = channel.flips().len();
        let mut ex = Exchange { channel: &mut channel, iteration: j, leader, misdecoded: 0 };

        // γ collection
        let mut reported: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            reported[i] = if i == leader {
                Some(parties[i].gamma)
            } else {
                let w = codecs.value_word(parties[i].gamma as u64);
                ex.send(&codecs.enc1, &w, Phase::GammaReport, i, leader)?
                    .map(|b| codecs.word_value(&b) as usize)
            };
        }
        let s = parties[leader].gamma;
        let all_agree = reported.iter().all(|&g| g == Some(s));
        let min_gamma = reported.iter().flatten().copied().min().unwrap_or(s);

        // tap
        let mut tap = TapEvent { outcome: TapOutcome::NotNeeded, target: None, interval: None };
        let mut bundle: Option<Vec<Digest>> = None;
        let mut remote: Option<(PartyId, usize)> = None;
        if all_agree && s >= 1 {
            match parties[leader].record.get(s - 1).copied().flatten() {
                None => tap.outcome = TapOutcome::NoRecord,
                Some((target, interval)) => {
                    tap.target = Some(target);
                    tap.interval = Some(interval);
                    if target == leader {
                        match parties[leader].led.get_mut(&interval) {
                            Some(li) if !li.tapped => {
                                li.tapped = true;
                                bundle = Some(li.bundle.clone());
                                tap.outcome = TapOutcome::Local;
                            }
                            _ => tap.outcome = TapOutcome::Timeout,
                        }
                    } else {
                        remote = Some((target, interval));
                    }
                }
            }
        }
        let (to, request) = match remote {
            Some((t, interval)) => (t, interval as u64 + 1),
            None => ((leader + n - 1) % n, 0),
        };
        let mut responder = None;
        let heard = ex.send(&codecs.enc1, &codecs.value_word(request), Phase::TapRequest, leader, to)?;
        let heard = match opts.hooks.misroute_tap.iter().find(|&&(it, _)| it == j) {
            Some(&(_, v)) => Some(codecs.value_word(v)),
            None => heard,
        };
        let payload = match heard.map(|b| codecs.word_value(&b)) {
            Some(0) => Some(BitString::zeros(n * codecs.t)),
            Some(r) => match parties[to].led.get_mut(&(r as usize - 1)) {
                Some(li) if !li.tapped => {
                    li.tapped = true;
                    let mut bits = BitString::new();
                    for d in &li.bundle {
                        bits.extend_from(d.bits());
                    }
                    parties[to].tap_responses += 1;
                    responder = Some((to, r as usize - 1));
                    Some(bits)
                }
                _ => None,
            },
            None => None,
        };
        match payload {
            Some(bits) => {
                let got = ex.send(&codecs.enc2, &bits, Phase::TapResponse, to, leader)?;
                if remote.is_some() {
                    match got {
                        Some(b) => {
                            let t = codecs.t;
                            bundle = Some(
                                (0..n)
                                    .map(|i| Digest::from_bits(b.slice(i * t, (i + 1) * t), &codecs.hash_params))
                                    .collect::<Result<_>>()?,
                            );
                            tap.outcome = TapOutcome::Delivered;
                        }
                        None => tap.outcome = TapOutcome::Undecodable,
                    }
                }
            }
            None if remote.is_some() => tap.outcome = TapOutcome::Timeout,
            None => {}
        }

        // chunk
        let mode = if !all_agree {
            ChunkMode::GarbageGammaMismatch
        } else if s >= 1 && bundle.is_none() {
            ChunkMode::GarbageNoBundle
        } else if opts.hooks.force_garbage.contains(&j) {
            ChunkMode::GarbageForced
        } else {
            ChunkMode::Simulated
        };
        let starts: Vec<PartyStart> = parties
            .iter()
            .map(|p| PartyStart { chunk: p.gamma, prefix: p.path.clone() })
            .collect();
        let ctx = ChunkContext {
            spec,
            geometry: params.geometry(),
            iteration: j,
            leader,
            chunk: s,
            slots,
            seed: params.seed,
            alphabet: params.c,
            search: params.search,
        };
        let leader_mode = if mode == ChunkMode::Simulated { LeaderMode::Simulate } else { LeaderMode::Garbage };
        let chunk_truth: Option<Vec<Vec<bool>>> = (opts.instrument_windows && s < params.chunks + 1)
            .then(|| truth.iter().map(|t| t[s * levels..(s + 1) * levels].to_vec()).collect());
        let chunk_flips_before = ex.channel.flips().len();
        let outcome = simulate_chunk(&ctx, &starts, leader_mode, ex.channel, chunk_truth.as_deref())?;
        total_slots += outcome.slots;
        let chunk_hit = ex.channel.flips()[chunk_flips_before..].iter().any(|f| f.phase == Phase::ChunkSymbol);
        let chunk_unaffected = !chunk_hit || {
            let clean = simulate_chunk(&ctx, &starts, leader_mode, &mut Channel::noiseless(), None)?;
            same_paths(&clean, &outcome)
        };

        // consistency check
        let mut psi = Vec::with_capacity(n);
        let mut keys = Vec::with_capacity(n);
        let mut heard_digest: Vec<Option<(Digest, HashKey)>> = vec![None; n];
        for i in 0..n {
            let p = &parties[i];
            let prev = if p.gamma >= 1 { p.rho[p.gamma - 1].as_ref().map(|d| d.bits()) } else { None };
            let x = concat_bits(&outcome.party_paths[i], prev);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, &[0x6b, j as u64, i as u64]));
            let key = codecs.hash.sample_key(&mut rng);
            let digest = codecs.hash.hash(&key, &x)?;
            heard_digest[i] = if i == leader {
                Some((digest.clone(), key.clone()))
            } else {
                let msg = digest.bits().concat(key.bits());
                ex.send(&codecs.enc1, &msg, Phase::Digest, i, leader)?.map(|b| {
                    let t = codecs.t;
                    (
                        Digest::from_bits(b.slice(0, t), &codecs.hash_params).expect("digest length"),
                        HashKey::from_bits(b.slice(t, 2 * t), &codecs.hash_params).expect("key length"),
                    )
                })
            };
            let g = parties[i].gamma;
            parties[i].rho[g.min(params.chunks)] = Some(digest);
            psi.push(x);
            keys.push(key);
        }

        let mut matches = vec![false; n];
        let mut collisions = 0;
        let mut hash_comparisons = 0;
        let mut led_bundle = vec![codecs.zero_digest(); n];
        if mode == ChunkMode::Simulated {
            let forced = opts.hooks.force_collision.contains(&j);
            for i in 0..n {
                let Some((digest, key)) = &heard_digest[i] else { continue };
                let tail = bundle.as_ref().map(|b| b[i].bits());
                let mut star = concat_bits(&outcome.leader_paths[i], tail);
                if forced && i == (leader + 1) % n && !star.is_empty() {
                    star.flip(0);
                }
                let h = codecs.hash.hash(key, &star)?;
                hash_comparisons += 1;
                matches[i] = forced || (&h == digest && !opts.hooks.force_mismatch.contains(&(j, i)));
                if matches[i] && star != psi[i] {
                    collisions += 1;
                }
                led_bundle[i] = h;
            }
        }
        parties[leader].led.insert(j, LedInterval { chunk: s, bundle: led_bundle, tapped: false });
        let chunk_good = mode == ChunkMode::Simulated && outcome.complete && matches.iter().all(|&m| m);

        let directive_for = |i: PartyId| -> Directive {
            if chunk_good {
                return Directive::F;
            }
            let at_min = reported[i] == Some(min_gamma);
            match mode {
                ChunkMode::Simulated if i == leader => if at_min { Directive::B1 } else { Directive::B2 },
                ChunkMode::Simulated => if at_min && matches[i] { Directive::B1 } else { Directive::B2 },
                ChunkMode::GarbageGammaMismatch => if at_min { Directive::B1 } else { Directive::B2 },
                ChunkMode::GarbageNoBundle | ChunkMode::GarbageForced => Directive::B2,
            }
        };
        let mut applied = Vec::with_capacity(n);
        let mut undecodable = 0;
        for i in 0..n {
            let d = directive_for(i);
            let got = if i == leader {
                d
            } else {
                match ex.send(&codecs.enc1, &codecs.value_word(d.code()), Phase::Directive, leader, i)? {
                    Some(b) => Directive::from_code(codecs.word_value(&b)).unwrap_or_else(|| {
                        undecodable += 1;
                        Directive::B1
                    }),
                    None => {
                        undecodable += 1;
                        Directive::B1
                    }
                }
            };
            applied.push(got);
        }
        let misdecoded = ex.misdecoded;

        // chunk update
        let mut clamped = 0;
        for (i, &d) in applied.iter().enumerate() {
            let p = &mut parties[i];
            let g = p.gamma;
            if d == Directive::F {
                let mut sigma = outcome.party_paths[i].clone();
                sigma.resize(levels, false);
                p.path.truncate(g * levels);
                p.path.extend(sigma);
                p.record[g] = Some((leader, j));
            }
            clamped += p.chunk_update(d, levels) as usize;
        }

        let flips_now = channel.flips().len();
        let c_beta = progress::compute_c_beta(&parties, &truth, levels, records.last().map(|r: &IterationRecord| r.c_beta));
        let gmax = parties.iter().map(|p| p.gamma).max().unwrap_or(0);
        let m = 2 * c_beta as i64 - gmax as i64;
        let spent = channel.budget().spent;
        let (bits_sent, bits_received) = iteration_bits(&channel, j, n);
        records.push(IterationRecord {
            iteration: j,
            leader,
            target_chunk: s,
            reported_gamma: reported,
            gamma: parties.iter().map(|p| p.gamma).collect(),
            c_beta,
            m,
            phi: progress::potential(m, spent, params),
            budget: params.budget,
            spent,
            flips: flips_now - flips_before,
            flip_log: channel.flips()[flips_before..flips_now].to_vec(),
            chunk_mode: mode,
            chunk_complete: outcome.complete,
            chunk_good,
            iteration_good: misdecoded == 0 && chunk_unaffected && tap.outcome != TapOutcome::Undecodable,
            misdecoded_words: misdecoded,
            tap,
            responder,
            directives: applied,
            clamped,
            undecodable_directives: undecodable,
            collisions,
            hash_comparisons,
            slots: outcome.slots,
            bits_sent,
            bits_received,
            windows: opts.instrument_windows.then_some(outcome.windows),
        });
    }

    let windows = spec.windows();
    let outputs = parties
        .iter()
        .map(|p| {
            let real = spec.real_levels(p.id);
            (p.path.len() >= real).then(|| BitString::from_bools(p.path[..real].to_vec()))
        })
        .collect();
    let expected = (0..n)
        .map(|i| {
            let full = spec.project(&oracle, i, windows);
            BitString::from_bools(full.as_slice()[..spec.real_levels(i)].to_vec())
        })
        .collect();
    let mut totals = vec![CellCount::default(); n];
    for (&(_, party, _), c) in channel.cells() {
        totals[party].sent += c.sent;
        totals[party].received += c.received;
    }
    Ok(RunResult {
        params: params.clone(),
        oracle,
        outputs,
        expected,
        final_gamma: parties.iter().map(|p| p.gamma).collect(),
        final_c_beta: records.last().map_or(0, |r| r.c_beta),
        records,
        flips: channel.flips().to_vec(),
        totals,
        total_bits: channel.total_sent(),
        cells: channel.cells().clone(),
        tap_responses: parties.iter().map(|p| p.tap_responses).collect(),
        leader_stints: parties.iter().map(|p| p.leader_stints).collect(),
        total_slots,
        parties,
    })
}

fn same_paths(a: &ChunkOutcome, b: &ChunkOutcome) -> bool {
    a.party_paths == b.party_paths && a.leader_paths == b.leader_paths
}

fn iteration_bits(channel: &Channel, j: usize, n: usize) -> (Vec<u64>, Vec<u64>) {
    let mut sent = vec![0; n];
    let mut recv = vec![0; n];
    for (&(_, party, _), c) in channel.cells().range((j, 0, Phase::GammaReport)..(j + 1, 0, Phase::GammaReport)) {
        sent[party] += c.sent;
        recv[party] += c.received;
    }
    (sent, recv)
}
