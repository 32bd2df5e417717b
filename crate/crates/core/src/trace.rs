//! Run traces: JSON Lines with a header record followed by one record per
//! iteration, plus a summary carrying the verdict and the load report.

use crate::compiler::{IterationRecord, RunResult, TapOutcome};
use crate::error::{Error, Result};
use crate::params::RunParams;
use crate::progress::{check_progress_claims, potential, Claim, ClaimReport, ClaimViolation};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT: &str = "rotor-trace/1";
/// Largest accepted max/min per-party bit ratio over a full run.
pub const LOAD_RATIO_THRESHOLD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    /// Where the underlying protocol came from, e.g. `random:7` or a path.
    pub protocol: String,
    pub params: RunParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Iteration(IterationRecord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub fn from_run(run: &RunResult, protocol: &str) -> Self {
        Self {
            header: TraceHeader { format: FORMAT.into(), protocol: protocol.into(), params: run.params.clone() },
            records: run.records.clone(),
        }
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Line::Header(self.header.clone()))?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&Line::Iteration(r.clone()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = match lines.next().map(serde_json::from_str::<Line>).transpose()? {
            Some(Line::Header(h)) => h,
            _ => return Err(Error::Config("trace must start with a header record".into())),
        };
        if header.format != FORMAT {
            return Err(Error::Config(format!("unknown trace format {:?}", header.format)));
        }
        let mut records = Vec::new();
        for l in lines {
            match serde_json::from_str::<Line>(l)? {
                Line::Iteration(r) => records.push(r),
                Line::Header(_) => return Err(Error::Config("second header record in trace".into())),
            }
        }
        Ok(Self { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_jsonl()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Progress claims plus the per-record identities for M and φ.
    pub fn verify(&self) -> ClaimReport {
        verify_records(&self.records, &self.header.params)
    }

    pub fn load_report(&self) -> LoadReport {
        load_report(&self.records, self.header.params.n)
    }
}

/// [`check_progress_claims`] plus the identities `M = 2c_β − max γ` and
/// `φ = M·k + (4n/(εm))·E_spent` on every record.
pub fn verify_records(records: &[IterationRecord], params: &RunParams) -> ClaimReport {
    let mut report = check_progress_claims(records, params);
    for r in records {
        let gmax = r.gamma.iter().copied().max().unwrap_or(0) as i64;
        let m = 2 * r.c_beta as i64 - gmax;
        if r.m != m || r.phi != potential(m, r.spent, params) {
            report.violations.push(ClaimViolation {
                iteration: r.iteration,
                claim: Claim::RecordIdentity,
                detail: format!("recorded M = {}, φ = {} do not match c_β = {}, γ_max = {gmax}", r.m, r.phi, r.c_beta),
            });
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Bits sent plus bits received, per party.
    pub bits: Vec<u64>,
    pub leader_stints: Vec<usize>,
    pub tap_responses: Vec<usize>,
    /// `⌈I/n⌉`.
    pub bound: usize,
    /// max/min of `bits`; `None` if some party moved no bits.
    pub ratio: Option<f64>,
}

impl LoadReport {
    /// Every party leads `⌊I/n⌋` or `⌈I/n⌉` iterations.
    pub fn stints_balanced(&self) -> bool {
        let total: usize = self.leader_stints.iter().sum();
        let floor = total / self.leader_stints.len().max(1);
        self.leader_stints.iter().all(|&s| s == floor || s == self.bound)
    }

    pub fn taps_bounded(&self) -> bool {
        self.tap_responses.iter().all(|&t| t <= self.bound)
    }

    pub fn ok(&self, threshold: f64) -> bool {
        self.stints_balanced() && self.taps_bounded() && self.ratio.is_some_and(|r| r <= threshold)
    }
}

pub fn load_report(records: &[IterationRecord], n: usize) -> LoadReport {
    let mut bits = vec![0u64; n];
    let mut leader_stints = vec![0; n];
    let mut tap_responses = vec![0; n];
    for r in records {
        for (b, (s, v)) in bits.iter_mut().zip(r.bits_sent.iter().zip(&r.bits_received)) {
            *b += s + v;
        }
        leader_stints[r.leader] += 1;
        if let Some((p, _)) = r.responder {
            tap_responses[p] += 1;
        }
    }
    let max = bits.iter().copied().max().unwrap_or(0);
    let min = bits.iter().copied().min().unwrap_or(0);
    LoadReport {
        bits,
        leader_stints,
        tap_responses,
        bound: records.len().div_ceil(n),
        ratio: (min > 0).then(|| max as f64 / min as f64),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Correct,
    Failed,
    /// The adversary exceeded its budget, ε was set above the calibrated
    /// limit, or a hash collided.
    OutOfContract,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub verdict: Verdict,
    pub transcript_correct: bool,
    pub in_contract: bool,
    pub iterations: usize,
    pub final_c_beta: usize,
    pub final_gamma: Vec<usize>,
    pub total_bits: u64,
    pub total_slots: usize,
    pub budget: u64,
    pub spent: u64,
    pub collisions: usize,
    pub hash_comparisons: usize,
    pub timeouts: usize,
    /// Every transmitted bit sits in exactly one (iteration, party, phase)
    /// cell and the cells add up to the channel counter.
    pub accounting_ok: bool,
    pub claims: ClaimReport,
    pub load: LoadReport,
}

impl Summary {
    pub fn new(run: &RunResult) -> Self {
        let p = &run.params;
        let spent = run.records.last().map_or(0, |r| r.spent);
        let collisions = run.collisions();
        let limit = p.epsilon_prime.min(p.lambda_hat / 5.0);
        let in_contract = spent <= p.budget && collisions == 0 && p.epsilon <= limit + 1e-12;
        let transcript_correct = run.correct();
        let verdict = match (in_contract, transcript_correct) {
            (false, _) => Verdict::OutOfContract,
            (true, true) => Verdict::Correct,
            (true, false) => Verdict::Failed,
        };
        let cell_sum: u64 = run.cells.values().map(|c| c.sent).sum();
        let record_sum: u64 = run.records.iter().map(|r| r.bits()).sum();
        Self {
            verdict,
            transcript_correct,
            in_contract,
            iterations: run.records.len(),
            final_c_beta: run.final_c_beta,
            final_gamma: run.final_gamma.clone(),
            total_bits: run.total_bits,
            total_slots: run.total_slots,
            budget: p.budget,
            spent,
            collisions,
            hash_comparisons: run.hash_comparisons(),
            timeouts: run.records.iter().filter(|r| r.tap.outcome == TapOutcome::Timeout).count(),
            accounting_ok: cell_sum == run.total_bits && record_sum == run.total_bits,
            claims: verify_records(&run.records, p),
            load: load_report(&run.records, p.n),
        }
    }

    /// 0 when everything holds, 2 for a wrong transcript within contract,
    /// 3 for a claim or accounting violation within contract.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Failed => 2,
            Verdict::Correct if !self.claims.ok() || !self.accounting_ok => 3,
            _ => 0,
        }
    }
}
