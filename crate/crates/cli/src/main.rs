//! `adaptive-grading` command-line tool.
//!
//! Exit codes: 0 success, 1 other failures, 2 configuration errors,
//! 3 degenerate numeric input, 4 inconclusive session.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_grading::config::RunConfig;
use adaptive_grading::engine::{Session, Transcript};
use adaptive_grading::lower_bound::{self, SolveMode};
use adaptive_grading::simulator::{self, ExperimentResult};
use adaptive_grading::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Parser)]
#[command(name = "adaptive-grading", version, about = "Adaptive grading: lower bounds, sessions and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the lower-bound program at an ability.
    Lb(LbArgs),
    /// Run simulated candidates.
    Simulate {
        #[command(subcommand)]
        command: SimulateCommand,
    },
    /// Grade a human who answers the questions on the terminal.
    Session(SessionArgs),
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// One simulated session.
    Run(RunArgs),
    /// Monte Carlo batch (or a δ sweep when the config lists `deltas`).
    Mc(McArgs),
    /// Mean hardness paths for the easy, oracle and hard starts.
    Explore(McArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    RestrictedSingle,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Override the stopping error level δ.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct Overrides {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulated candidate's ability.
    #[arg(long)]
    p_true: Option<f64>,
}

#[derive(Args)]
struct LbArgs {
    #[command(flatten)]
    common: Common,
    /// Ability at which to solve.
    #[arg(long)]
    p: f64,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: Overrides,
    /// Write the session transcript (JSON lines) here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: Overrides,
    /// Directory for the CSV and JSON outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    delta: Option<f64>,
    /// Seed of the question randomization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the session transcript (JSON lines) here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateAbility { .. }
            | Error::DegenerateAlternative(_)
            | Error::ZeroSeparation { .. }
            | Error::InfeasibleSeparation
            | Error::CaseMismatch { .. } => EXIT_DEGENERATE,
            Error::InvalidConfig(_)
            | Error::InvalidModel(_)
            | Error::InvalidDomain(_)
            | Error::InvalidBank(_)
            | Error::InvalidGrades(_)
            | Error::AbilityOutOfDomain { .. } => EXIT_CONFIG,
            _ => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_OTHER, message: e.to_string() }
    }
}

type CliResult = Result<u8, Failure>;

fn load(common: &Common, overrides: Option<&Overrides>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(d) = common.delta {
        cfg.stopping.delta = d;
    }
    if let Some(o) = overrides {
        if let Some(exp) = cfg.experiment.as_mut() {
            exp.seed = o.seed.unwrap_or(exp.seed);
            exp.p_true = o.p_true.unwrap_or(exp.p_true);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn cmd_lb(args: &LbArgs) -> CliResult {
    let cfg = load(&args.common, None)?;
    let mode = match args.mode {
        Mode::Exact => SolveMode::Exact,
        Mode::RestrictedSingle => SolveMode::RestrictedSingle,
    };
    let model = cfg.response_model()?;
    let solution = lower_bound::solve(&model, args.p, &cfg.grade_scheme()?, &cfg.bank, mode)?;
    let report = lower_bound::report(&solution, cfg.stopping.delta);
    match args.common.format {
        Format::Json => print_json(&json!({ "p": args.p, "solution": solution, "report": report })),
        Format::Text => {
            println!(
                "case                {}",
                serde_json::to_value(solution.case).expect("tags serialize").as_str().unwrap_or("")
            );
            println!("m*                  {:.6}", solution.m_star);
            if solution.is_single_level() {
                println!("plan                single level x = {:.6}", solution.x1);
            } else {
                println!(
                    "plan                x1 = {:.6} (w = {:.6}), x2 = {:.6}",
                    solution.x1, solution.w, solution.x2
                );
            }
            println!("lambda              {:.6}", solution.lambda);
            println!("restricted gap      {:.6}", solution.restricted_gap);
            println!("m* ln(1/(2.4 delta)) {:.3}  (delta = {})", report.expected_questions, report.delta);
        }
    }
    Ok(0)
}

fn write_transcript(path: &Path, transcript: &Transcript) -> io::Result<()> {
    fs::write(path, transcript.to_json_lines())
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let cfg = load(&args.common, Some(&args.overrides))?;
    let spec = cfg.experiment_spec()?;
    let engine = spec.engine()?;
    let run = simulator::run_session(&engine, spec.p_true, spec.seed, 0, true)?;
    let transcript = run.transcript.as_ref().expect("transcript was requested");
    if let Some(path) = &args.transcript {
        write_transcript(path, transcript)?;
    }
    let end = transcript.end.expect("finished sessions carry a final record");
    match args.common.format {
        Format::Json => print_json(&json!({
            "seed": run.seed,
            "p_true": spec.p_true,
            "tau": run.tau,
            "verdict": run.verdict,
            "lower": end.lower,
            "upper": end.upper,
            "correct": run.correct,
            "inconclusive": run.inconclusive,
        })),
        Format::Text => {
            println!("questions asked   {}", run.tau);
            if let (Some(v), Some(lo), Some(hi)) = (run.verdict, end.lower, end.upper) {
                println!("verdict           bracket {v}: [{lo}, {hi})");
            }
            println!("correct           {}", run.correct);
            if run.inconclusive {
                println!("stopped by the question cap (inconclusive)");
            }
        }
    }
    Ok(if run.inconclusive { EXIT_INCONCLUSIVE } else { 0 })
}

fn write_result(dir: &Path, result: &ExperimentResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    result.write_sessions_csv(BufWriter::new(File::create(dir.join("sessions.csv"))?))?;
    result.write_path_csv(BufWriter::new(File::create(dir.join("path.csv"))?))?;
    result.write_allocation_csv(BufWriter::new(File::create(dir.join("allocation.csv"))?))?;
    fs::write(dir.join("summary.json"), result.summary_json() + "\n")
}

fn summary_table(results: &[ExperimentResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>6} {:>10} {:>10} {:>12} {:>12} {:>10} {:>10}",
        "delta", "reps", "error", "error_ub", "mean_tau", "tau_ratio", "m*", "bound"
    );
    for r in results {
        let m = &r.summary;
        let _ = writeln!(
            s,
            "{:>8} {:>6} {:>10.4} {:>10.4} {:>12.1} {:>12.2} {:>10.3} {:>10.1}",
            m.delta, m.replications, m.error_rate, m.error_rate_upper, m.mean_tau, m.tau_ratio, m.m_star, m.lower_bound
        );
    }
    s
}

fn cmd_mc(args: &McArgs) -> CliResult {
    let cfg = load(&args.common, Some(&args.overrides))?;
    let spec = cfg.experiment_spec()?;
    let deltas = &cfg.experiment()?.deltas;
    let results = if deltas.is_empty() {
        vec![simulator::run_monte_carlo(&spec)?]
    } else {
        simulator::run_delta_sweep(&spec, deltas)?
    };
    if let Some(out) = &args.out {
        if deltas.is_empty() {
            write_result(out, &results[0])?;
        } else {
            for r in &results {
                write_result(&out.join(format!("delta_{}", r.summary.delta)), r)?;
            }
            fs::write(out.join("sweep.txt"), summary_table(&results))?;
        }
    }
    match args.common.format {
        Format::Json => {
            let summaries: Vec<_> = results.iter().map(|r| &r.summary).collect();
            print_json(&json!({ "results": summaries }));
        }
        Format::Text => print!("{}", summary_table(&results)),
    }
    Ok(0)
}

fn cmd_explore(args: &McArgs) -> CliResult {
    let cfg = load(&args.common, Some(&args.overrides))?;
    let spec = cfg.experiment_spec()?;
    let horizon = cfg.experiment()?.horizon;
    let result = simulator::run_exploration_experiment(&spec, horizon)?;
    let gap_step = 50.min(horizon as usize);
    let meta = json!({
        "delta": result.delta,
        "seed": spec.seed,
        "replications": spec.replications,
        "horizon": horizon,
        "p_true": spec.p_true,
        "start_levels": result.start_levels,
        "gap_step": gap_step,
        "max_gap": result.max_gap_at(gap_step),
    });
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        result.write_csv(BufWriter::new(File::create(out.join("exploration.csv"))?))?;
        fs::write(out.join("exploration.json"), serde_json::to_string_pretty(&meta).expect("json") + "\n")?;
    }
    match args.common.format {
        Format::Json => print_json(&meta),
        Format::Text => {
            println!("delta {}  replications {}  horizon {}", result.delta, spec.replications, horizon);
            for (name, (start, path)) in
                ["easy", "oracle", "hard"].iter().zip(result.start_levels.iter().zip(&result.paths))
            {
                println!(
                    "{name:>7} start {start:>8.4}  final mean level {:>8.4}",
                    path.last().copied().unwrap_or(f64::NAN)
                );
            }
            println!("max gap at step {gap_step}: {:.4}", result.max_gap_at(gap_step));
        }
    }
    Ok(0)
}

/// Reads responses until one is 0 or 1; `None` on end of input.
fn read_outcome(input: &mut impl BufRead, out: &mut impl Write) -> io::Result<Option<u8>> {
    let mut line = String::new();
    loop {
        write!(out, "answer (1 = correct, 0 = wrong): ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(None);
        }
        match line.trim() {
            "0" => return Ok(Some(0)),
            "1" => return Ok(Some(1)),
            other => writeln!(out, "please type 0 or 1 (got {other:?})")?,
        }
    }
}

fn cmd_session(args: &SessionArgs) -> CliResult {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(d) = args.delta {
        cfg.stopping.delta = d;
    }
    cfg.validate()?;
    let engine = cfg.engine()?;
    let mut session: Session = engine.session(args.seed);
    let mut transcript = Transcript::default();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    while !session.state().stopped {
        let level = session.next_question()?;
        writeln!(out, "question {}: difficulty {level:.4}", session.state().t() + 1)?;
        match read_outcome(&mut input, &mut out)? {
            Some(outcome) => transcript.steps.push(session.record_response(level, outcome)?),
            None => session.abort(),
        }
    }
    transcript.end = session.final_record();
    if let Some(path) = &args.transcript {
        write_transcript(path, &transcript)?;
    }
    let end = transcript.end.expect("stopped sessions carry a final record");
    if end.inconclusive {
        writeln!(out, "session ended after {} questions without a verdict (inconclusive)", end.tau)?;
        return Ok(EXIT_INCONCLUSIVE);
    }
    if let (Some(v), Some(lo), Some(hi)) = (end.verdict, end.lower, end.upper) {
        writeln!(out, "verdict: grade bracket {v}, ability in [{lo}, {hi}), after {} questions", end.tau)?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Lb(a) => cmd_lb(a),
        Command::Simulate { command: SimulateCommand::Run(a) } => cmd_run(a),
        Command::Simulate { command: SimulateCommand::Mc(a) } => cmd_mc(a),
        Command::Simulate { command: SimulateCommand::Explore(a) } => cmd_explore(a),
        Command::Session(a) => cmd_session(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
