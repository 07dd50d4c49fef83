//! Command-line surface: stream folding, simulation, Monte-Carlo evaluation
//! and the mixture-scale tuner. Files and pipes only.

use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dbcs::dgps::{generate, DgpKind, DgpSpec, PanelParams, ProxyModel};
use dbcs::engine::{evaluate_stop_rules, Boundary, CsEngine, Decision, Design, EngineSpec, StopRule};
use dbcs::evalsuite::{peeking_ttest_curve, presets, run_mc, sig9, write_curve_csv, McConfig};
use dbcs::io::{band_header, band_row, read_snapshot, read_steps, write_records, write_snapshot, write_truth_csv, SnapshotFile};
use dbcs::stream::{BoundaryConfig, StreamState};
use dbcs::{tune_eta, DbcsError};

/// Exit code when a stop rule fires mid-stream.
const EXIT_STOPPED: u8 = 3;

#[derive(Parser)]
#[command(name = "dbcs", version, about = "Anytime-valid confidence sequences for streaming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fold a JSONL record stream and print one band row per step.
    Stream(StreamArgs),
    /// Generate a synthetic experiment stream (and optionally its truth path).
    Simulate(SimulateArgs),
    /// Run a named Monte-Carlo scenario and print its summary CSV.
    Eval(EvalArgs),
    /// Print the mixture scale minimizing the width at a target step.
    TuneEta(TuneEtaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Fixed,
    Bandit,
    Timeseries,
    Panel,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Design {
        match d {
            DesignArg::Fixed => Design::Fixed,
            DesignArg::Bandit => Design::Bandit,
            DesignArg::Timeseries => Design::Timeseries,
            DesignArg::Panel => Design::Panel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Exact,
    Asymptotic,
    Mixture,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Boundary {
        match b {
            BoundaryArg::Exact => Boundary::Exact,
            BoundaryArg::Asymptotic => Boundary::Asymptotic,
            BoundaryArg::Mixture => Boundary::Mixture,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    NullExclusion,
    HarmThreshold,
    FutilityBelowEpsilon,
    Horizon,
}

#[derive(Args)]
struct EngineFlags {
    #[arg(long, value_enum, default_value = "fixed")]
    design: DesignArg,
    #[arg(long, value_enum, default_value = "asymptotic")]
    boundary: BoundaryArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = dbcs::DEFAULT_ETA)]
    eta: f64,
    /// m = M / p_min; required by the exact and mixture boundaries.
    #[arg(long)]
    m_bound: Option<f64>,
    /// Truncated-gamma parameter of the mixture boundary.
    #[arg(long)]
    rho: Option<f64>,
    /// Use proxy residuals; every record must then carry "yhat".
    #[arg(long, default_value_t = false)]
    proxy: bool,
}

impl EngineFlags {
    fn spec(&self) -> EngineSpec {
        EngineSpec {
            design: self.design.into(),
            boundary: self.boundary.into(),
            proxy: self.proxy,
            config: BoundaryConfig {
                alpha: self.alpha,
                eta: self.eta,
                m_bound: self.m_bound,
                rho: self.rho,
            },
        }
    }
}

#[derive(Args)]
struct StreamArgs {
    /// Input JSONL file; stdin when omitted.
    input: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
    /// Stop rule evaluated after each step.
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// Threshold for the harm / futility rules.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Horizon for the horizon rule.
    #[arg(long)]
    horizon: Option<u64>,
    /// Steps before the stop rule is armed.
    #[arg(long, default_value_t = 0)]
    warmup: u64,
    /// Tolerate unknown JSON keys instead of rejecting them.
    #[arg(long, default_value_t = false)]
    lenient: bool,
    /// Write the final (or stop-time) state here.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Resume from a state written by --snapshot-out.
    #[arg(long)]
    snapshot_in: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    BinarySignup,
    TwoArmBandit,
    NoveltyCarryover,
    PanelLinear,
    PanelNonlinear,
    IidGaussianNull,
    PrepaidAnalogue,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, default_value_t = 500)]
    horizon: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which replicate index of the seed to realize.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Attach pooled-OLS proxy predictions ("yhat") to panel records.
    #[arg(long, default_value_t = false)]
    proxy: bool,
    /// Stream output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-step true estimand path as CSV.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// table1-linear, table1-linear-proxy, table1-nonlinear,
    /// table1-nonlinear-proxy, table1-series, table2, example1,
    /// example1-exact, example1-mixture, example4, fig1
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 200)]
    reps: u64,
    /// Override the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon override (scenarios have sensible defaults).
    #[arg(long)]
    horizon: Option<u64>,
    /// Output CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneEtaArgs {
    alpha: f64,
    t_star: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Stream(args) => cmd_stream(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::TuneEta(args) => cmd_tune_eta(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// DBCS_THREADS caps the rayon pool; results are identical either way.
fn init_threads() {
    if let Ok(v) = std::env::var("DBCS_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn cmd_stream(args: StreamArgs) -> Result<ExitCode, DbcsError> {
    let spec = args.engine.spec();
    let rules: Vec<StopRule> = match args.rule {
        None => Vec::new(),
        Some(RuleArg::NullExclusion) => vec![StopRule::NullExclusion],
        Some(RuleArg::HarmThreshold) => vec![StopRule::HarmThreshold {
            epsilon: args.epsilon.unwrap_or(0.0),
        }],
        Some(RuleArg::FutilityBelowEpsilon) => vec![StopRule::FutilityBelowEpsilon {
            epsilon: args.epsilon.ok_or_else(|| {
                DbcsError::InvalidParameter("--epsilon is required for the futility rule".into())
            })?,
        }],
        Some(RuleArg::Horizon) => vec![StopRule::Horizon {
            horizon: args.horizon.ok_or_else(|| {
                DbcsError::InvalidParameter("--horizon is required for the horizon rule".into())
            })?,
        }],
    };

    let mut engine = match &args.snapshot_in {
        Some(path) => {
            let snap = read_snapshot(path)?;
            if snap.spec != spec {
                return Err(DbcsError::InvalidSnapshot(
                    "snapshot was produced under different engine flags".into(),
                ));
            }
            CsEngine::with_state(spec, StreamState::restore(&snap.state)?)?
        }
        None => CsEngine::new(spec)?,
    };

    let steps = match &args.input {
        Some(path) => {
            let f = std::fs::File::open(path)
                .map_err(|e| DbcsError::InvalidParameter(format!("{}: {e}", path.display())))?;
            read_steps(BufReader::new(f), !args.lenient)?
        }
        None => read_steps(std::io::stdin().lock(), !args.lenient)?,
    };

    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    band_header(&mut out).map_err(io_to_dbcs)?;
    let mut stopped = None;
    for records in &steps {
        let band = engine.step(records)?;
        band_row(&mut out, &band).map_err(io_to_dbcs)?;
        if !rules.is_empty() && engine.state().n_steps() > args.warmup {
            let decision = evaluate_stop_rules(&band, &rules);
            if decision != Decision::Continue {
                writeln!(out, "decision,{}", decision_name(decision)).map_err(io_to_dbcs)?;
                stopped = Some(decision);
                break;
            }
        }
    }
    out.flush().map_err(io_to_dbcs)?;

    if let Some(path) = &args.snapshot_out {
        write_snapshot(
            path,
            &SnapshotFile {
                spec,
                state: engine.state().snapshot(),
            },
        )?;
    }
    Ok(if stopped.is_some() {
        ExitCode::from(EXIT_STOPPED)
    } else {
        ExitCode::SUCCESS
    })
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Continue => "continue",
        Decision::StopRejectNull => "stop_reject_null",
        Decision::StopFutility => "stop_futility",
        Decision::StopHorizon => "stop_horizon",
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, DbcsError> {
    let kind = match args.kind {
        KindArg::BinarySignup => DgpKind::binary_signup(),
        KindArg::TwoArmBandit => DgpKind::two_arm_bandit(),
        KindArg::NoveltyCarryover => DgpKind::novelty_carryover(),
        KindArg::PanelLinear => DgpKind::PanelLinear(PanelParams::default()),
        KindArg::PanelNonlinear => DgpKind::PanelNonlinear(PanelParams::default()),
        KindArg::IidGaussianNull => DgpKind::IidGaussianNull,
        KindArg::PrepaidAnalogue => DgpKind::PrepaidAnalogue {
            p_base: 0.15,
            effect: 0.05,
        },
    };
    let spec = DgpSpec { kind, seed: args.seed };
    let proxy = if args.proxy { ProxyModel::PooledOls } else { ProxyModel::None };
    let stream = generate(&spec, args.horizon, args.replicate, proxy)?;

    match &args.out {
        Some(path) => {
            let f = std::fs::File::create(path)
                .map_err(|e| DbcsError::InvalidParameter(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(f);
            write_records(&mut w, &stream.steps)?;
            w.flush().map_err(io_to_dbcs)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_records(&mut w, &stream.steps)?;
            w.flush().map_err(io_to_dbcs)?;
        }
    }
    if let Some(path) = &args.truth_out {
        let f = std::fs::File::create(path)
            .map_err(|e| DbcsError::InvalidParameter(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        write_truth_csv(&mut w, &stream.truth).map_err(io_to_dbcs)?;
        w.flush().map_err(io_to_dbcs)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, DbcsError> {
    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(std::fs::File::create(path).map_err(
            |e| DbcsError::InvalidParameter(format!("{}: {e}", path.display())),
        )?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    };

    if args.scenario == "fig1" {
        let horizon = args.horizon.unwrap_or(500);
        let curve = peeking_ttest_curve(0.10, horizon, args.reps, args.seed.unwrap_or(2001))?;
        write_curve_csv(&mut sink, &curve).map_err(io_to_dbcs)?;
        sink.flush().map_err(io_to_dbcs)?;
        return Ok(ExitCode::SUCCESS);
    }

    let mut cfg: McConfig = match args.scenario.as_str() {
        "table1-linear" => presets::table1_linear(args.reps, false),
        "table1-linear-proxy" => presets::table1_linear(args.reps, true),
        "table1-nonlinear" => presets::table1_nonlinear(args.reps, false),
        "table1-nonlinear-proxy" => presets::table1_nonlinear(args.reps, true),
        "table1-series" => presets::table1_series(args.reps),
        "table2" => presets::table2(args.reps),
        "example1" => presets::example1(args.reps, args.horizon.unwrap_or(500), Boundary::Asymptotic),
        "example1-exact" => presets::example1(args.reps, args.horizon.unwrap_or(500), Boundary::Exact),
        "example1-mixture" => presets::example1(args.reps, args.horizon.unwrap_or(500), Boundary::Mixture),
        "example4" => presets::example4(args.reps, args.horizon.unwrap_or(500)),
        other => {
            return Err(DbcsError::InvalidParameter(format!(
                "unknown scenario '{other}'; see --help for the list"
            )))
        }
    };
    if let Some(seed) = args.seed {
        cfg.dgp.seed = seed;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    let report = run_mc(&cfg)?;
    report
        .write_summary_csv(&mut sink, &args.scenario)
        .map_err(io_to_dbcs)?;
    sink.flush().map_err(io_to_dbcs)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_tune_eta(args: TuneEtaArgs) -> Result<ExitCode, DbcsError> {
    let choice = tune_eta(args.alpha, args.t_star)?;
    println!("{}", sig9(choice.eta));
    Ok(ExitCode::SUCCESS)
}

fn io_to_dbcs(e: std::io::Error) -> DbcsError {
    DbcsError::InvalidParameter(format!("io error: {e}"))
}
