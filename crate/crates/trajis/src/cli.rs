//! Command-line verbs.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use trajis_core::cohortgen::{generate, CohortConfig};
use trajis_core::ingest::{parse_records, write_records, ColumnMapping};
use trajis_core::query::ParseError;
use trajis_core::store::{SnapshotHeader, StoreOptions};
use trajis_core::{anonymize, build_store, execute, parse, AnonymizationConfig, HopCap, QueryGraph, TrajectoryStore};

use crate::{api, render};

/// Exit status for usage, parse and validation errors.
pub const EXIT_INVALID: u8 = 2;
/// Exit status for I/O and other runtime failures.
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub status: u8,
    pub message: String,
}

impl CliError {
    fn failure(message: impl Into<String>) -> Self {
        Self { status: EXIT_FAILURE, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self { status: EXIT_INVALID, message: message.into() }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "trajis", version, about = "Explore event trajectories as graph patterns and Sankey flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Stage, value, count and percent rows.
    Table,
    /// The result as JSON, as served by the HTTP API.
    SankeyData,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an event table, optionally anonymize it, and write a store snapshot.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// TOML column mapping; defaults to the standard column names.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        anonymize: bool,
        #[arg(long, requires = "anonymize")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4, requires = "anonymize")]
        max_shift: u32,
        #[arg(long, default_value_t = 15, requires = "anonymize")]
        snap_day: u32,
        /// Longest materialized hop edge: a positive integer or `unlimited`.
        #[arg(long, default_value = "unlimited")]
        hop_cap: HopCap,
        /// Fail if any row is rejected instead of skipping it.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic cohort table from a TOML configuration.
    Gen {
        #[arg(long, required_unless_present = "print_default_config")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_config")]
        out: Option<PathBuf>,
        /// Also write the generation ledger as JSON.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Print the built-in screening configuration and exit.
        #[arg(long, conflicts_with_all = ["config", "out", "ledger"])]
        print_default_config: bool,
    },
    /// Run one query against a store snapshot.
    Query {
        #[arg(long, env = "TRAJIS_STORE")]
        store: PathBuf,
        /// File with a DSL query, or a JSON wire-form query if it ends in `.json`.
        #[arg(long, conflicts_with = "query", required_unless_present = "query")]
        file: Option<PathBuf>,
        /// Inline DSL query.
        #[arg(long)]
        query: Option<String>,
        #[arg(long, value_enum, default_value = "table")]
        output: OutputFormat,
        /// Write output here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API over a store snapshot.
    Serve {
        #[arg(long, env = "TRAJIS_STORE")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Queries executed concurrently; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the header of a store snapshot.
    SnapshotInfo { path: PathBuf },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

fn load_store(path: &Path) -> Result<TrajectoryStore, CliError> {
    TrajectoryStore::load(path).map_err(|e| CliError::failure(format!("cannot load store {}: {e}", path.display())))
}

fn ingest(
    input: &Path,
    schema: Option<&Path>,
    anonymization: Option<AnonymizationConfig>,
    hop_cap: HopCap,
    strict: bool,
    out: &Path,
) -> CliResult {
    let mapping = match schema {
        Some(p) => ColumnMapping::from_toml_str(&read(p)?).map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?,
        None => ColumnMapping::default(),
    };
    if let Some(cfg) = &anonymization {
        cfg.validate().map_err(|e| CliError::invalid(e.to_string()))?;
    }
    let file = fs::File::open(input).map_err(|e| CliError::failure(format!("{}: {e}", input.display())))?;
    let parsed =
        parse_records(io::BufReader::new(file), &mapping).map_err(|e| CliError::invalid(format!("{}: {e}", input.display())))?;
    for e in &parsed.errors {
        eprintln!("{}:{e}", input.display());
    }
    if strict && !parsed.errors.is_empty() {
        return Err(CliError::invalid(format!("{} rows rejected", parsed.errors.len())));
    }
    let records = match &anonymization {
        Some(cfg) => anonymize(&parsed.records, cfg),
        None => parsed.records,
    };
    let store = build_store(&records, StoreOptions::with_hop_cap(hop_cap)).map_err(|e| CliError::failure(e.to_string()))?;
    store.snapshot(out).map_err(|e| CliError::failure(format!("{}: {e}", out.display())))?;
    let s = store.stats();
    eprintln!(
        "wrote {}: {} entities, {} events, {} edges ({} rows rejected)",
        out.display(),
        s.entities,
        s.events,
        s.edges,
        parsed.errors.len()
    );
    Ok(())
}

fn gen(config: &Path, out: &Path, ledger_path: Option<&Path>) -> CliResult {
    let cfg = CohortConfig::from_toml_str(&read(config)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", config.display())))?;
    let (records, ledger) = generate(&cfg).map_err(|e| CliError::invalid(e.to_string()))?;
    let mut text = Vec::new();
    write_records(&records, &mut text).map_err(|e| CliError::failure(e.to_string()))?;
    write(out, &text)?;
    if let Some(p) = ledger_path {
        write(p, ledger.to_json().as_bytes())?;
    }
    eprintln!("wrote {}: {} entities, {} events", out.display(), ledger.entities, ledger.events);
    Ok(())
}

fn parse_error(label: &str, source: &str, e: &ParseError) -> CliError {
    let (line, column) = e.position();
    let text = source.lines().nth(line.saturating_sub(1)).unwrap_or("");
    let caret = format!("{}^", " ".repeat(column.saturating_sub(1)));
    CliError::invalid(format!("{label}:{e}\n  {text}\n  {caret}"))
}

fn load_query(file: Option<&Path>, inline: Option<&str>) -> Result<QueryGraph, CliError> {
    let (label, source) = match (file, inline) {
        (Some(p), _) => (p.display().to_string(), read(p)?),
        (None, Some(q)) => ("--query".to_string(), q.to_string()),
        (None, None) => return Err(CliError::invalid("either --file or --query is required")),
    };
    if file.is_some_and(|p| p.extension().is_some_and(|x| x == "json")) {
        return serde_json::from_str(&source).map_err(|e| CliError::invalid(format!("{label}: {e}")));
    }
    parse(&source).map_err(|e| parse_error(&label, &source, &e))
}

/// Run a query and render it. The `sankey-data` text is the exact body the
/// HTTP API returns for the same query and store.
pub fn run_query(store: &TrajectoryStore, q: &QueryGraph, output: OutputFormat) -> Result<String, CliError> {
    let result = execute(store, q).map_err(|e| {
        let lines: Vec<String> = e.0.iter().map(|v| format!("  {v}")).collect();
        CliError::invalid(format!("query is invalid:\n{}", lines.join("\n")))
    })?;
    Ok(match output {
        OutputFormat::Table => render::table(&result),
        OutputFormat::SankeyData => result.to_json(),
    })
}

fn query(store: &Path, file: Option<&Path>, inline: Option<&str>, output: OutputFormat, out: Option<&Path>) -> CliResult {
    let q = load_query(file, inline)?;
    let store = load_store(store)?;
    let text = run_query(&store, &q, output)?;
    match out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| CliError::failure(e.to_string()))
        }
    }
}

fn serve(store: &Path, bind: SocketAddr, workers: Option<usize>) -> CliResult {
    let store = Arc::new(load_store(store)?);
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::failure(e.to_string()))?;
    runtime.block_on(async {
        let listener =
            tokio::net::TcpListener::bind(bind).await.map_err(|e| CliError::failure(format!("cannot bind {bind}: {e}")))?;
        let s = store.stats();
        tracing::info!(%bind, workers, entities = s.entities, events = s.events, "serving");
        api::serve(listener, api::AppState::new(store, workers)).await.map_err(|e| CliError::failure(e.to_string()))
    })
}

fn snapshot_info(path: &Path) -> CliResult {
    let h = SnapshotHeader::read(path).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
    println!("version       {}", h.version);
    println!("hop_cap       {}", h.hop_cap);
    println!("birth_day     {}", h.birth_day);
    println!("entities      {}", h.entities);
    println!("events        {}", h.events);
    println!("payload_bytes {}", h.payload_bytes);
    println!("sha256        {}", h.sha256);
    Ok(())
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest { input, schema, anonymize, seed, max_shift, snap_day, hop_cap, strict, out } => {
            let anonymization = anonymize.then(|| AnonymizationConfig {
                seed: seed.unwrap_or(0),
                max_shift_months: max_shift,
                snap_day,
            });
            if anonymize && seed.is_none() {
                return Err(CliError::invalid("--anonymize requires --seed"));
            }
            ingest(&input, schema.as_deref(), anonymization, hop_cap, strict, &out)
        }
        Command::Gen { print_default_config: true, .. } => {
            print!("{}", CohortConfig::screening(10_000, 1).to_toml_string());
            Ok(())
        }
        Command::Gen { config, out, ledger, .. } => {
            gen(config.as_deref().unwrap(), out.as_deref().unwrap(), ledger.as_deref())
        }
        Command::Query { store, file, query: inline, output, out } => {
            query(&store, file.as_deref(), inline.as_deref(), output, out.as_deref())
        }
        Command::Serve { store, bind, workers } => serve(&store, bind, workers),
        Command::SnapshotInfo { path } => snapshot_info(&path),
    }
}
