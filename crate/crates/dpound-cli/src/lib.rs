//! Batch front end for the simulator: validate configs, run scenarios,
//! build the evaluation matrix and replay traces.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dpound_sim::engine::{
    check_expectations, evaluate_matrix, parse_expectations, render_matrix, replay, run, validate, EngineError,
    PostconditionReport, RunOutput, Scenario, WorldConfig,
};
use dpound_sim::options::UseCase;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_ASSERTION: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "dpound", about = "Deterministic digital-pound ecosystem simulator")]
pub struct Cli {
    /// Print the trace and report to stdout as well.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the world and scenarios parse and fit together.
    Validate(Common),
    /// Run scenarios and write trace, report and exposure files.
    Run(Common),
    /// Evaluate every design option and write the matrix.
    Matrix(MatrixArgs),
    /// Check a trace and re-run it, comparing line by line.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub scenario: Vec<PathBuf>,
    #[arg(long, env = "DPOUND_SANDBOX_OUT", default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[command(flatten)]
    pub common: Common,
    /// `all`, or a use case (`U1`, `U2`, `U3`).
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Exposure expectations to check the matrix against.
    #[arg(long)]
    pub expect: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub trace: PathBuf,
}

/// Exit code for a set of reports: assertion failure if any failed.
pub fn exit_code(reports: &[PostconditionReport]) -> u8 {
    if reports.iter().all(PostconditionReport::passed) {
        EXIT_OK
    } else {
        EXIT_ASSERTION
    }
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Failed(_) => EXIT_ASSERTION,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::TraceMismatch { .. } | EngineError::TraceInvariant { .. } => CliError::Failed(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Invalid(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
}

fn load_world(c: &Common) -> Result<WorldConfig, CliError> {
    let text = read(&c.world)?;
    WorldConfig::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", c.world.display())))
}

fn load_scenario(p: &Path) -> Result<Scenario, CliError> {
    let text = read(p)?;
    Scenario::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
}

/// Scenario files named on the command line, or every `.cfg` under a
/// `scenarios` directory beside the world file.
fn scenario_paths(c: &Common) -> Result<Vec<PathBuf>, CliError> {
    if !c.scenario.is_empty() {
        return Ok(c.scenario.clone());
    }
    let dir = c.world.parent().unwrap_or(Path::new(".")).join("scenarios");
    let entries = fs::read_dir(&dir).map_err(|e| CliError::Invalid(format!("no --scenario and {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "cfg")).collect();
    paths.sort();
    Ok(paths)
}

fn artifacts(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    let name = &out.report.scenario;
    write(dir, &format!("{name}.trace"), &out.trace_text())?;
    write(dir, &format!("{name}.report"), &out.report.render())?;
    write(dir, &format!("{name}.exposure"), &out.exposure.export())
}

fn cmd_validate(c: &Common) -> Result<String, CliError> {
    let cfg = load_world(c)?;
    let mut s = String::new();
    for p in scenario_paths(c)? {
        let sc = load_scenario(&p)?;
        validate(&cfg, &sc).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
        s.push_str(&format!("ok {}\n", sc.name));
    }
    Ok(s)
}

fn cmd_run(c: &Common, verbose: bool) -> Result<String, CliError> {
    let cfg = load_world(c)?;
    let mut reports = Vec::new();
    let mut s = String::new();
    for p in scenario_paths(c)? {
        let sc = load_scenario(&p)?;
        let out = run(&cfg, &sc, c.seed).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
        artifacts(&c.out, &out)?;
        if verbose {
            s.push_str(&out.trace_text());
            s.push_str(&out.report.render());
        }
        s.push_str(&format!("{} {}\n", if out.passed() { "PASS" } else { "FAIL" }, sc.name));
        reports.push(out.report);
    }
    match exit_code(&reports) {
        EXIT_OK => Ok(s),
        _ => Err(CliError::Failed(s)),
    }
}

fn cmd_matrix(m: &MatrixArgs) -> Result<String, CliError> {
    let c = &m.common;
    let mut cfg = load_world(c)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let only: Option<UseCase> = match m.suite.as_str() {
        "all" => None,
        u => Some(u.parse().map_err(|_| CliError::Invalid(format!("unknown suite `{u}`")))?),
    };
    let mut scenarios = Vec::new();
    for p in scenario_paths(c)? {
        let sc = load_scenario(&p)?;
        if only.is_none_or(|u| u == sc.use_case) {
            scenarios.push(sc);
        }
    }
    let rows = evaluate_matrix(&cfg, &scenarios)?;
    let table = render_matrix(&rows);
    write(&c.out, "matrix.txt", &table)?;
    let mut problems: Vec<String> = rows.iter().filter(|r| !r.standard_ok).map(|r| format!("{} standard run failed", r.label())).collect();
    if let Some(path) = &m.expect {
        let exp = parse_expectations(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        problems.extend(check_expectations(&rows, &exp));
    }
    for sc in &scenarios {
        artifacts(&c.out, &run(&cfg, sc, None)?)?;
    }
    let mut s = table;
    for p in &problems {
        s.push_str(&format!("FAIL {p}\n"));
    }
    if problems.is_empty() {
        Ok(s)
    } else {
        Err(CliError::Failed(s))
    }
}

fn cmd_replay(r: &ReplayArgs) -> Result<String, CliError> {
    let c = &r.common;
    let cfg = load_world(c)?;
    let [p] = &c.scenario[..] else { return Err(CliError::Invalid("replay takes exactly one --scenario".into())) };
    let sc = load_scenario(p)?;
    let text = read(&r.trace)?;
    replay(&cfg, &sc, &text, c.seed)?;
    Ok(format!("identical {}\n", r.trace.display()))
}

/// Run one parsed invocation. Returns the text for stdout on success, or
/// the error with its exit code.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::Run(c) => cmd_run(c, cli.verbose),
        Command::Matrix(m) => cmd_matrix(m),
        Command::Replay(r) => cmd_replay(r),
    }
}
