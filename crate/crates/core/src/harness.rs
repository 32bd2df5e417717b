//! Experiment orchestration: calibrate, run, summarize, and fan sweeps out
//! over worker threads.

use crate::calibrate::{calibrate, CalibrationOptions};
use crate::channel::Strategy;
use crate::compiler::{run_compiled, RunOptions, RunResult};
use crate::error::{Error, Result};
use crate::params::{assemble, RunConfig, RunParams};
use crate::protocol::ProtocolSpec;
use crate::trace::{Summary, Trace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub fn prepare(cfg: &RunConfig, opts: &CalibrationOptions) -> Result<RunParams> {
    let report = calibrate(cfg, opts)?;
    assemble(cfg, &report.calibration)
}

pub fn execute(spec: &ProtocolSpec, cfg: &RunConfig, opts: &CalibrationOptions) -> Result<RunResult> {
    if spec.n() != cfg.n || spec.len() != cfg.len {
        return Err(Error::Config(format!(
            "protocol has n={}, L={} but the run asks for n={}, L={}",
            spec.n(),
            spec.len(),
            cfg.n,
            cfg.len
        )));
    }
    run_compiled(spec, &prepare(cfg, opts)?, &RunOptions::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: Option<f64>,
    pub strategy: Strategy,
    pub seed: u64,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let eps = self.epsilon.map_or("cal".to_string(), |e| format!("{e}"));
        format!("{}-eps{eps}-seed{}", self.strategy.name(), self.seed)
    }
}

pub struct SweepOutcome {
    pub point: SweepPoint,
    pub summary: Summary,
    pub trace: Trace,
}

/// Runs every point in parallel. `spec_for` builds the protocol for a seed
/// together with a label naming its source.
pub fn sweep<F>(base: &RunConfig, points: &[SweepPoint], opts: &CalibrationOptions, spec_for: F) -> Result<Vec<SweepOutcome>>
where
    F: Fn(u64) -> Result<(ProtocolSpec, String)> + Sync,
{
    // calibration does not depend on ε, strategy or seed; warm the cache once
    calibrate(base, opts)?;
    points
        .par_iter()
        .map(|pt| {
            let mut cfg = base.clone();
            cfg.epsilon = pt.epsilon;
            cfg.strategy = pt.strategy.clone();
            cfg.seed = pt.seed;
            let (spec, source) = spec_for(pt.seed)?;
            let run = execute(&spec, &cfg, opts)?;
            Ok(SweepOutcome {
                point: pt.clone(),
                summary: Summary::new(&run),
                trace: Trace::from_run(&run, &source),
            })
        })
        .collect()
}
