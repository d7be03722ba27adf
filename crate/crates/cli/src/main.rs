//! `etso-bench`: run scenario matrices, summarize record files and export
//! plot-ready tables.
//!
//! Exit codes:
//!
//! | code | meaning                                        |
//! |------|------------------------------------------------|
//! | 0    | success                                        |
//! | 2    | usage error                                    |
//! | 3    | config file not found or unknown scenario      |
//! | 4    | invalid config, scenario or override           |
//! | 5    | output not writable                            |
//! | 6    | record file schema error                       |
//! | 7    | numerical or runtime failure                   |
//!
//! Every failure prints one line to stderr: `etso-bench: error[<kind>]: <message>`.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use etso::bench::{
    self, parse_seeds, plot_data, read_records, summarize, write_records, write_summary,
    write_table, RunConfig, CURVE_SCHEMA, EVENTS_SCHEMA,
};
use etso::error::Error;
use etso::exec::Execution;
use etso::optimizer::PolicyKind;
use etso::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "etso-bench",
    version,
    about = "Seeded benchmark runs for event-triggered safe optimization"
)]
struct Cli {
    /// More progress output on stderr.
    #[arg(short, long, global = true, conflicts_with = "quiet")]
    verbose: bool,
    /// No summary output on stdout.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a (policy x seed) matrix and write records.jsonl and summary.csv.
    Run(RunArgs),
    /// Summarize a record file as long-format CSV.
    Summarize {
        records: PathBuf,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write <scenario>_curve.csv and <scenario>_events.csv for each scenario in a record file.
    ExportPlotData {
        records: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sweep a scenario's grid and check its declared assumptions.
    ValidateScenario {
        /// Catalog id, scenario file or run config.
        #[arg(short, long)]
        config: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Catalog id, scenario file or run config.
    #[arg(short, long)]
    config: String,
    /// Comma-separated policies, e.g. `etso,safeopt-budget`.
    #[arg(short, long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Seed list such as `1..20` or `3,5,8`.
    #[arg(short, long)]
    seeds: Option<String>,
    /// Setting override, repeatable, e.g. `trigger.delta_b=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `results/<scenario>`.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            kind,
            message: message.into(),
        }
    }

    fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::new(5, "output", format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::UnknownScenario(_) => (3, "not-found"),
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => {
                (3, "not-found")
            }
            Error::Config(_) => (4, "config"),
            Error::Schema(_) => (6, "schema"),
            Error::Io { .. } => (5, "io"),
            Error::Dimension { .. }
            | Error::Numerical { .. }
            | Error::Domain(_)
            | Error::BackupUnsafe(_) => (7, "runtime"),
        };
        Failure::new(code, kind, e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            let message = message.join(" ");
            eprintln!(
                "etso-bench: error[usage]: {}",
                message.trim_start_matches("error: ")
            );
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(&cli, args),
        Command::Summarize { records, output } => cmd_summarize(records, output.as_deref()),
        Command::ExportPlotData { records, output } => cmd_export(&cli, records, output),
        Command::ValidateScenario { config, overrides } => cmd_validate(&cli, config, overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace('\n', " ");
            eprintln!("etso-bench: error[{}]: {message}", f.kind);
            ExitCode::from(f.code)
        }
    }
}

/// A run config file (has a `scenario` key), a scenario file, or a catalog id.
fn load_config(name: &str) -> CliResult<RunConfig> {
    let path = Path::new(name);
    if !path.is_file() {
        if Scenario::catalog_ids().any(|id| id == name) {
            return Ok(RunConfig::new(
                name,
                PolicyKind::ALL.to_vec(),
                bench::default_seeds(),
            ));
        }
        return Err(Failure::new(
            3,
            "not-found",
            format!("no config file or catalog scenario `{name}`"),
        ));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(3, "not-found", format!("{name}: {e}")))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        Failure::new(4, "config", format!("{name}: {}", e.message()))
    })?;
    if !table.contains_key("scenario") {
        return Ok(RunConfig::new(
            name,
            PolicyKind::ALL.to_vec(),
            bench::default_seeds(),
        ));
    }
    let mut config: RunConfig = table.try_into().map_err(|e: toml::de::Error| {
        Failure::new(4, "config", format!("{name}: {}", e.message()))
    })?;
    // Scenario paths in a run config are relative to the config file.
    let is_catalog = Scenario::catalog_ids().any(|id| id == config.scenario);
    let scenario_path = Path::new(&config.scenario);
    if !is_catalog && scenario_path.is_relative() {
        if let Some(dir) = path.parent() {
            config.scenario = dir.join(scenario_path).to_string_lossy().into_owned();
        }
    }
    Ok(config)
}

fn apply_overrides(config: &mut RunConfig, overrides: &[String]) -> CliResult {
    for o in overrides {
        config.settings.apply_override(o)?;
    }
    Ok(())
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> CliResult {
    let mut config = load_config(&args.config)?;
    if !args.policy.is_empty() {
        config.policies = args
            .policy
            .iter()
            .map(|p| {
                PolicyKind::parse(p.trim())
                    .ok_or_else(|| Failure::new(4, "config", format!("unknown policy `{p}`")))
            })
            .collect::<CliResult<_>>()?;
    }
    if let Some(spec) = &args.seeds {
        config.seeds = parse_seeds(spec)?;
    }
    apply_overrides(&mut config, &args.overrides)?;
    let scenario = Scenario::resolve(&config.scenario)?;
    config.validate(&scenario)?;

    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let started = Instant::now();
    if cli.verbose {
        eprintln!(
            "running {} with {} policies x {} seeds",
            scenario.id,
            config.policies.len(),
            config.seeds.len()
        );
    }
    let result = bench::run_matrix(&config, execution)?;
    if cli.verbose {
        eprintln!("finished in {:.1}s", started.elapsed().as_secs_f64());
    }

    let mut records = Vec::new();
    write_records(&mut records, &config, &result)?;
    let mut summary = Vec::new();
    write_summary(&mut summary, &summarize(&result.records)?)?;

    let dir = args
        .output
        .clone()
        .unwrap_or_else(|| Path::new("results").join(&result.scenario));
    fs::create_dir_all(&dir).map_err(|e| Failure::output(&dir, e))?;
    for (name, bytes) in [("records.jsonl", &records), ("summary.csv", &summary)] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::output(&path, e))?;
    }

    for o in result.outcomes.iter().filter(|o| o.error.is_some()) {
        eprintln!(
            "etso-bench: warning: {} seed {} stopped early: {}",
            o.policy,
            o.seed,
            o.error.as_deref().unwrap_or_default()
        );
    }
    if !cli.quiet {
        let mut out = io::stdout().lock();
        let _ = writeln!(
            out,
            "{:<18} {:>8} {:>8} {:>8}",
            "policy", "crashes", "resets", "seeds"
        );
        for &p in &config.policies {
            let resets: u32 = result
                .outcomes
                .iter()
                .filter(|o| o.policy == p)
                .map(|o| o.resets)
                .sum();
            let _ = writeln!(
                out,
                "{:<18} {:>8} {:>8} {:>8}",
                p.name(),
                result.unsafe_queries(p),
                resets,
                config.seeds.len()
            );
        }
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    Ok(())
}

fn open_records(path: &Path) -> CliResult<Vec<bench::ExperimentRecord>> {
    let file = fs::File::open(path).map_err(|e| {
        let code = if e.kind() == io::ErrorKind::NotFound {
            3
        } else {
            5
        };
        Failure::new(code, "not-found", format!("{}: {e}", path.display()))
    })?;
    let (_, records) = read_records(BufReader::new(file))?;
    Ok(records)
}

fn cmd_summarize(records: &Path, output: Option<&Path>) -> CliResult {
    let rows = summarize(&open_records(records)?)?;
    let mut buf = Vec::new();
    write_summary(&mut buf, &rows)?;
    match output {
        Some(path) => fs::write(path, &buf).map_err(|e| Failure::output(path, e)),
        None => io::stdout()
            .lock()
            .write_all(&buf)
            .map_err(|e| Failure::new(5, "output", e.to_string())),
    }
}

fn cmd_export(cli: &Cli, records: &Path, dir: &Path) -> CliResult {
    let data = plot_data(&open_records(records)?)?;
    let mut files = Vec::new();
    for d in &data {
        let mut curve = Vec::new();
        write_table(&mut curve, CURVE_SCHEMA, &d.curve)?;
        let mut events = Vec::new();
        write_table(&mut events, EVENTS_SCHEMA, &d.events)?;
        files.push((format!("{}_curve.csv", d.scenario), curve));
        files.push((format!("{}_events.csv", d.scenario), events));
    }
    fs::create_dir_all(dir).map_err(|e| Failure::output(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::output(&path, e))?;
        if !cli.quiet {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_validate(cli: &Cli, name: &str, overrides: &[String]) -> CliResult {
    let mut config = load_config(name)?;
    apply_overrides(&mut config, overrides)?;
    let scenario = Scenario::resolve(&config.scenario)?;
    let audit = scenario.audit(&config.settings.etso_config(&scenario, Execution::Parallel))?;
    if !cli.quiet {
        println!("scenario {}", audit.id);
        for m in &audit.modes {
            println!(
                "mode {} from round {}: backup {:.4} scale {} j_min {:.4} safe {} crashed {} best {:.4} at {:?}",
                m.mode,
                m.start,
                m.backup_cost,
                m.scale,
                m.j_min_raw,
                m.safe_points,
                m.crashed_points,
                m.best_cost,
                m.best_theta
            );
        }
        for c in &audit.changes {
            println!(
                "change at round {}: delta at incumbent {:.4}, top decile {:.4}..{:.4}, kappa {:.4}/{:.4}, shifted {}, incumbent crashes {}",
                c.round,
                c.delta_at_incumbent,
                c.top_delta_min,
                c.top_delta_max,
                c.kappa_floor,
                c.kappa_exploit,
                c.shifted_points,
                c.incumbent_crashes
            );
        }
        for v in &audit.violations {
            println!("violation: {v}");
        }
    }
    if !audit.is_valid() {
        return Err(Failure::new(
            4,
            "scenario",
            format!("{}: {}", audit.id, audit.violations.join("; ")),
        ));
    }
    if let Some(expected) = &scenario.expected {
        if !audit.matches(expected.class) {
            return Err(Failure::new(
                4,
                "scenario",
                format!(
                    "{}: sweep does not match declared class {:?}",
                    audit.id, expected.class
                ),
            ));
        }
        if !cli.quiet {
            println!("class {:?}: ok", expected.class);
        }
    }
    Ok(())
}
