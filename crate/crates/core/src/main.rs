use clap::{Args, Parser, Subcommand, ValueEnum};
use rotor::calibrate::{calibrate, CalibrationOptions};
use rotor::channel::Strategy;
use rotor::error::{Error, Result};
use rotor::harness::{self, SweepPoint};
use rotor::params::{assemble, RunConfig, StopRule, DEFAULT_GAMMA};
use rotor::protocol::{run_noiseless, ProtocolSpec};
use rotor::spec_file::SpecDocument;
use rotor::trace::{Summary, Trace, Verdict, LOAD_RATIO_THRESHOLD};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "rotor", version, about = "Multi-party interactive coding with a rotating coordinator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one compiled simulation and print its summary.
    Run(RunArgs),
    /// Run a grid over ε, strategy and seed.
    Sweep(SweepArgs),
    /// Re-check the progress claims and load bounds of a stored trace.
    VerifyTrace {
        path: PathBuf,
    },
    /// Measure m, k, λ̂ and ε′ for a configuration.
    Calibrate(CalibrateArgs),
    /// Print the noiseless transcript.
    Oracle(ProtocolArgs),
}

#[derive(Args)]
struct ProtocolArgs {
    /// Protocol document (JSON); overrides --n and --L.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long = "L", default_value_t = 768)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    Iterations,
    Symbols,
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = StopArg::Iterations)]
    stop_rule: StopArg,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    paper_consistent: Toggle,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Overrides the calibrated ε.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value = "none")]
    strategy: String,
    /// Directory for trace.jsonl and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated ε values; the calibrated ε when omitted.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Comma-separated strategies, or `all` for the budgeted suite.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    strategy: Vec<String>,
    /// Seeds per (ε, strategy) cell, starting at --seed.
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// Directory for one trace per run plus sweep.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Monte Carlo trials per flip count in the tolerance measurement.
    #[arg(long, default_value_t = 20)]
    trials: usize,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::VerifyTrace { path } => verify(&path),
        Cmd::Calibrate(a) => calibrate_cmd(a),
        Cmd::Oracle(a) => {
            let (spec, _) = load_protocol(&a, a.seed)?;
            println!("{}", run_noiseless(&spec)?);
            Ok(0)
        }
    }
}

fn load_protocol(a: &ProtocolArgs, seed: u64) -> Result<(ProtocolSpec, String)> {
    match &a.spec {
        Some(path) => Ok((SpecDocument::load(path)?.to_spec()?, path.display().to_string())),
        None => Ok((ProtocolSpec::random(a.n, a.len, seed)?, format!("random:{seed}"))),
    }
}

fn base_config(a: &ConfigArgs) -> Result<RunConfig> {
    let (n, len) = match &a.protocol.spec {
        Some(path) => {
            let doc = SpecDocument::load(path)?;
            (doc.n, doc.len)
        }
        None => (a.protocol.n, a.protocol.len),
    };
    let mut cfg = RunConfig::new(n, len);
    cfg.gamma = a.gamma;
    cfg.seed = a.protocol.seed;
    cfg.stop_rule = match a.stop_rule {
        StopArg::Iterations => StopRule::Iterations,
        StopArg::Symbols => StopRule::Symbols,
    };
    cfg.paper_consistent = matches!(a.paper_consistent, Toggle::On);
    Ok(cfg)
}

fn parse_strategy(name: &str) -> Result<Strategy> {
    Strategy::parse(name).ok_or_else(|| Error::Config(format!("unknown strategy {name:?}")))
}

fn exit_for(summaries: &[&Summary]) -> u8 {
    summaries.iter().map(|s| s.exit_code() as u8).max().unwrap_or(0)
}

fn run(a: RunArgs) -> Result<u8> {
    let mut cfg = base_config(&a.config)?;
    cfg.epsilon = a.epsilon;
    cfg.strategy = parse_strategy(&a.strategy)?;
    let (spec, source) = load_protocol(&a.config.protocol, cfg.seed)?;
    let result = harness::execute(&spec, &cfg, &CalibrationOptions::default())?;
    let summary = Summary::new(&result);
    let json = serde_json::to_string_pretty(&summary)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        Trace::from_run(&result, &source).write(&dir.join("trace.jsonl"))?;
        std::fs::write(dir.join("summary.json"), format!("{json}\n"))?;
    }
    println!("{json}");
    Ok(exit_for(&[&summary]))
}

fn sweep(a: SweepArgs) -> Result<u8> {
    let base = base_config(&a.config)?;
    let strategies = if a.strategy.iter().any(|s| s == "all") {
        Strategy::suite()
    } else {
        a.strategy.iter().map(|s| parse_strategy(s)).collect::<Result<_>>()?
    };
    let epsilons: Vec<Option<f64>> =
        if a.epsilon.is_empty() { vec![None] } else { a.epsilon.iter().map(|&e| Some(e)).collect() };
    let mut points = Vec::new();
    for eps in &epsilons {
        for s in &strategies {
            for seed in base.seed..base.seed + a.trials {
                points.push(SweepPoint { epsilon: *eps, strategy: s.clone(), seed });
            }
        }
    }
    let proto = &a.config.protocol;
    let outcomes = harness::sweep(&base, &points, &CalibrationOptions::default(), |seed| load_protocol(proto, seed))?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        for o in &outcomes {
            o.trace.write(&dir.join(format!("{}.jsonl", o.point.label())))?;
        }
        let rows: Vec<_> = outcomes.iter().map(|o| (&o.point, &o.summary)).collect();
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&rows)?)?;
    }
    let mut tally = [0usize; 3];
    for o in &outcomes {
        let s = &o.summary;
        tally[match s.verdict {
            Verdict::Correct => 0,
            Verdict::Failed => 1,
            Verdict::OutOfContract => 2,
        }] += 1;
        println!(
            "{:<40} {:<15} E={:<3} spent={:<3} c_beta={:<3} bits={} violations={}",
            o.point.label(),
            format!("{:?}", s.verdict),
            s.budget,
            s.spent,
            s.final_c_beta,
            s.total_bits,
            s.claims.violations.len()
        );
    }
    println!("runs={} correct={} failed={} out_of_contract={}", outcomes.len(), tally[0], tally[1], tally[2]);
    Ok(exit_for(&outcomes.iter().map(|o| &o.summary).collect::<Vec<_>>()))
}

fn verify(path: &Path) -> Result<u8> {
    let trace = Trace::load(path)?;
    let claims = trace.verify();
    let load = trace.load_report();
    for v in &claims.violations {
        println!("iteration {}: {:?}: {}", v.iteration, v.claim, v.detail);
    }
    println!(
        "checked {} iterations, {} violations; leader stints {:?}, tap responses {:?} (bound {}), load ratio {}",
        claims.checked,
        claims.violations.len(),
        load.leader_stints,
        load.tap_responses,
        load.bound,
        load.ratio.map_or("undefined".into(), |r| format!("{r:.3}"))
    );
    let load_ok = load.ok(LOAD_RATIO_THRESHOLD) || trace.records.len() < trace.header.params.n;
    Ok(if claims.ok() && load_ok { 0 } else { 3 })
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<u8> {
    let cfg = base_config(&a.config)?;
    let opts = CalibrationOptions { tolerance_trials: a.trials, ..Default::default() };
    let report = calibrate(&cfg, &opts)?;
    let params = assemble(&cfg, &report.calibration)?;
    let out = serde_json::json!({ "calibration": report, "params": params });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}
