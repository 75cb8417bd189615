//! `substrate` — inspect and mutate an artifact substrate log.
//!
//! One process is one writer: mutating commands take a lock file beside the
//! log; read-only commands skip the lock. Exit codes are stable:
//! 0 success, 1 io/log, 2 validation, 3 authority violation, 4 unknown
//! artifact, 5 conflict surfaced by resolve, 6 unknown role, 7 malformed
//! benchmark instance or snapshot.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use substrate_core::artifact::DocumentError;
use substrate_core::benchmark::{
    self, macro_average, BenchmarkInstance, GenParams, GenerateError, PerturbationFamily,
    Scorecard, SystemSnapshot,
};
use substrate_core::canon::{self, CanonError};
use substrate_core::lineage::{self, LineageError};
use substrate_core::logfile::{self, LogError};
use substrate_core::resolver::{self, ResolveError, Resolution};
use substrate_core::store::{CorruptLog, StoreError};
use substrate_core::{ArtifactId, AuthorityMode, Role, Scope, Store};

const EXIT_HELP: &str = "Exit codes:
  0  success
  1  io, lock, or corrupt log
  2  validation failed
  3  authority violation
  4  unknown artifact
  5  resolution is in conflict
  6  unknown role
  7  malformed benchmark instance or snapshot";

#[derive(Parser)]
#[command(name = "substrate", version, about = "Maintained-state artifact substrate", after_help = EXIT_HELP)]
struct Cli {
    /// Path to the event log (default: $SUBSTRATE_LOG)
    #[arg(long, global = true)]
    log: Option<PathBuf>,

    /// Emit canonical JSON instead of text
    #[arg(long, global = true)]
    json: bool,

    /// fsync the log after each mutating command
    #[arg(long, global = true)]
    fsync: bool,

    /// Record a conflict marker instead of rejecting an additive commit
    /// into an occupied single-active role
    #[arg(long, global = true)]
    allow_conflict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Declare a role's authority mode (single|multi)
    Declare { role: String, mode: String },
    /// Commit a record document additively
    Commit(CommitArgs),
    /// Commit a record document that supersedes its listed targets
    Supersede(CommitArgs),
    /// Resolve what is active for a role within a scope
    Resolve { role: String, scope: String },
    /// Show the regeneration plan for a superseding commit
    Plan { trigger: String },
    /// Show the four lineage relations of an artifact
    Lineage { id: String },
    /// Mark an active artifact historical
    Historical { id: String },
    /// Generate or score benchmark instances
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct CommitArgs {
    /// JSON record document
    file: PathBuf,
    /// Treat the document as a superseding commit
    #[arg(long)]
    supersede: bool,
    /// Scope to use when the document has none
    #[arg(long)]
    scope: Option<String>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Write deterministic benchmark instances
    Gen {
        /// authority_swap | local_correction | branch_isolated | transitive_impact
        #[arg(long)]
        family: String,
        #[arg(long)]
        seed: u64,
        /// Instances to write (seeds seed..seed+count)
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Setup artifact count per instance
        #[arg(long, default_value_t = 24)]
        size: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Score system snapshots against instances
    Score {
        /// Instance file; repeatable
        #[arg(long = "instance")]
        instances: Vec<PathBuf>,
        /// Snapshot file paired positionally with --instance; repeatable
        #[arg(long = "snapshot")]
        snapshots: Vec<PathBuf>,
        /// Score the engine's own snapshot instead of snapshot files
        #[arg(long)]
        reference: bool,
    },
}

enum CliError {
    Io(String),
    Validation(String),
    Authority(String),
    UnknownArtifact(String),
    UnknownRole(String),
    Bench(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Validation(_) => 2,
            Self::Authority(_) => 3,
            Self::UnknownArtifact(_) => 4,
            Self::UnknownRole(_) => 6,
            Self::Bench(_) => 7,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            Self::Io(_) => "io",
            Self::Validation(_) => "validation",
            Self::Authority(_) => "authority",
            Self::UnknownArtifact(_) => "unknown-artifact",
            Self::UnknownRole(_) => "unknown-role",
            Self::Bench(_) => "bench-format",
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Io(m)
            | Self::Validation(m)
            | Self::Authority(m)
            | Self::UnknownArtifact(m)
            | Self::UnknownRole(m)
            | Self::Bench(m) => m,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        match &err {
            StoreError::Validation(_)
            | StoreError::SupersedeInactive { .. }
            | StoreError::AlreadyInactive { .. }
            | StoreError::AdditiveHasSupersedes
            | StoreError::SupersedingNeedsTargets
            | StoreError::InvalidRoleName(_) => Self::Validation(err.to_string()),
            StoreError::AuthorityModeConflict { .. } | StoreError::AuthorityViolation { .. } => {
                Self::Authority(err.to_string())
            }
            StoreError::UnknownArtifact(_) => Self::UnknownArtifact(err.to_string()),
            StoreError::UndeclaredRole(_) => Self::UnknownRole(err.to_string()),
        }
    }
}

impl From<ResolveError> for CliError {
    fn from(err: ResolveError) -> Self {
        match &err {
            ResolveError::UnknownRole(_) => Self::UnknownRole(err.to_string()),
            ResolveError::UnknownArtifact(_) => Self::UnknownArtifact(err.to_string()),
        }
    }
}

impl From<LineageError> for CliError {
    fn from(err: LineageError) -> Self {
        match &err {
            LineageError::UnknownArtifact(_) => Self::UnknownArtifact(err.to_string()),
            LineageError::NotSuperseding(_) => Self::Validation(err.to_string()),
        }
    }
}

impl From<DocumentError> for CliError {
    fn from(err: DocumentError) -> Self {
        Self::Validation(err.to_string())
    }
}

impl From<CanonError> for CliError {
    fn from(err: CanonError) -> Self {
        Self::Validation(err.to_string())
    }
}

impl From<LogError> for CliError {
    fn from(err: LogError) -> Self {
        Self::Io(err.to_string())
    }
}

impl From<CorruptLog> for CliError {
    fn from(err: CorruptLog) -> Self {
        Self::Io(err.to_string())
    }
}

impl From<GenerateError> for CliError {
    fn from(err: GenerateError) -> Self {
        Self::Validation(err.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}: {}", err.category(), err.message());
            err.code()
        }
    });
}

fn log_path(cli: &Cli) -> Result<PathBuf, CliError> {
    cli.log
        .clone()
        .or_else(|| std::env::var_os("SUBSTRATE_LOG").map(PathBuf::from))
        .ok_or_else(|| {
            CliError::Validation("no log path; pass --log or set SUBSTRATE_LOG".into())
        })
}

/// Held for the duration of a mutating command.
struct LogLock {
    path: PathBuf,
}

impl LogLock {
    fn acquire(log: &Path) -> Result<Self, CliError> {
        let path = PathBuf::from(format!("{}.lock", log.display()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(err) if err.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io(
                format!("{} exists; another writer holds the log", path.display()),
            )),
            Err(err) => Err(CliError::Io(format!("{}: {err}", path.display()))),
        }
    }
}

impl Drop for LogLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn read_store(cli: &Cli) -> Result<Store, CliError> {
    let path = log_path(cli)?;
    let events = logfile::read_log(&path)?;
    Ok(Store::replay(events)?)
}

fn with_writer<T>(
    cli: &Cli,
    op: impl FnOnce(&mut Store) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let path = log_path(cli)?;
    let _lock = LogLock::acquire(&path)?;
    let events = logfile::read_log(&path)?;
    let mut store = Store::replay(events)?;
    let before = store.events().len();
    let out = op(&mut store)?;
    logfile::append_events(&path, store.events_since(before), cli.fsync)?;
    Ok(out)
}

fn emit(cli: &Cli, value: Value, text: String) {
    if cli.json {
        println!("{}", canon::canonical_json(&value));
    } else {
        println!("{text}");
    }
}

fn parse_id(text: &str) -> Result<ArtifactId, CliError> {
    ArtifactId::parse(text).map_err(|e| CliError::Validation(e.to_string()))
}

fn join_ids<'a>(ids: impl IntoIterator<Item = &'a ArtifactId>) -> String {
    ids.into_iter()
        .map(ArtifactId::render)
        .collect::<Vec<_>>()
        .join(" ")
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Declare { role, mode } => cmd_declare(cli, role, mode),
        Command::Commit(args) => cmd_commit(cli, args, args.supersede),
        Command::Supersede(args) => cmd_commit(cli, args, true),
        Command::Resolve { role, scope } => cmd_resolve(cli, role, scope),
        Command::Plan { trigger } => cmd_plan(cli, trigger),
        Command::Lineage { id } => cmd_lineage(cli, id),
        Command::Historical { id } => cmd_historical(cli, id),
        Command::Bench(bench) => cmd_bench(cli, bench),
    }
}

fn cmd_declare(cli: &Cli, role: &str, mode: &str) -> Result<i32, CliError> {
    let mode = match mode {
        "single" | "single_active" => AuthorityMode::SingleActive,
        "multi" | "multi_active" => AuthorityMode::MultiActive,
        other => {
            return Err(CliError::Validation(format!(
                "unknown mode {other:?}; expected single or multi"
            )))
        }
    };
    let role = Role::new(role, mode).map_err(|e| CliError::Validation(e.to_string()))?;
    let name = role.name.clone();
    with_writer(cli, |store| Ok(store.declare_role(role)?))?;
    let mut doc = Map::new();
    doc.insert("authority_mode".into(), Value::String(mode.as_str().into()));
    doc.insert("role".into(), Value::String(name.clone()));
    emit(cli, Value::Object(doc), format!("declared {name} {mode}"));
    Ok(0)
}

fn cmd_commit(cli: &Cli, args: &CommitArgs, superseding: bool) -> Result<i32, CliError> {
    let text = fs::read_to_string(&args.file)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.file.display())))?;
    let doc = canon::parse_document(&text)?;
    let scope = match &args.scope {
        Some(s) => Some(Scope::new(s.clone()).map_err(|e| CliError::Validation(e.to_string()))?),
        None => None,
    };
    let draft =
        substrate_core::artifact::draft_from_document(&doc, scope.as_ref(), "cli")?;

    let (id, displaced, conflicted) = with_writer(cli, |store| {
        if superseding {
            let outcome = store.commit_superseding(draft)?;
            Ok((outcome.committed, outcome.displaced, false))
        } else {
            let (id, conflicted) = store.commit_additive_with(draft, cli.allow_conflict)?;
            Ok((id, Vec::new(), conflicted))
        }
    })?;

    let mut doc = Map::new();
    doc.insert("artifact_id".into(), Value::String(id.render()));
    doc.insert("conflict".into(), Value::Bool(conflicted));
    doc.insert(
        "displaced".into(),
        Value::Array(displaced.iter().map(|d| Value::String(d.render())).collect()),
    );
    emit(cli, Value::Object(doc), id.render());
    Ok(0)
}

fn cmd_resolve(cli: &Cli, role: &str, scope: &str) -> Result<i32, CliError> {
    let scope = Scope::new(scope).map_err(|e| CliError::Validation(e.to_string()))?;
    let store = read_store(cli)?;
    let resolution = resolver::resolve_active(&store, role, &scope)?;
    let text = match &resolution {
        Resolution::Single(id) => format!("single {}", id.render()),
        Resolution::Set(ids) => format!("set {}", join_ids(ids)),
        Resolution::NoActive => "no_active".to_string(),
        Resolution::Conflict(ids) => format!("conflict {}", join_ids(ids)),
    };
    let conflicted = matches!(resolution, Resolution::Conflict(_));
    emit(cli, resolution.to_value(), text);
    Ok(if conflicted { 5 } else { 0 })
}

fn cmd_plan(cli: &Cli, trigger: &str) -> Result<i32, CliError> {
    let trigger = parse_id(trigger)?;
    let store = read_store(cli)?;
    let plan = lineage::plan_regeneration(&store, &trigger)?;
    let mut text = format!("trigger {}\n", plan.trigger.render());
    text.push_str(&format!("invalidated {}\n", join_ids(&plan.invalidated)));
    text.push_str(&format!("rebuild_order {}\n", plan.rebuild_order.join(" ")));
    text.push_str(&format!("preserved {}", join_ids(&plan.preserved)));
    for warning in &plan.warnings {
        text.push_str(&format!("\nwarning {warning}"));
    }
    emit(cli, plan.to_value(), text);
    Ok(0)
}

fn cmd_lineage(cli: &Cli, id: &str) -> Result<i32, CliError> {
    let id = parse_id(id)?;
    let store = read_store(cli)?;
    let view = lineage::lineage(&store, &id)?;
    let mut doc = Map::new();
    doc.insert(
        "consumed_by".into(),
        Value::Array(
            view.consumed_by
                .iter()
                .map(|c| Value::String(c.render()))
                .collect(),
        ),
    );
    doc.insert(
        "produced_by".into(),
        Value::String(view.produced_by.clone()),
    );
    doc.insert(
        "superseded_by".into(),
        match &view.superseded_by {
            Some(s) => Value::String(s.render()),
            None => Value::Null,
        },
    );
    doc.insert(
        "supersedes".into(),
        Value::Array(
            view.supersedes
                .iter()
                .map(|s| Value::String(s.render()))
                .collect(),
        ),
    );
    let text = format!(
        "produced_by {}\nconsumed_by {}\nsupersedes {}\nsuperseded_by {}",
        view.produced_by,
        join_ids(&view.consumed_by),
        join_ids(&view.supersedes),
        view.superseded_by
            .as_ref()
            .map(ArtifactId::render)
            .unwrap_or_default()
    );
    emit(cli, Value::Object(doc), text);
    Ok(0)
}

fn cmd_historical(cli: &Cli, id: &str) -> Result<i32, CliError> {
    let id = parse_id(id)?;
    with_writer(cli, |store| Ok(store.mark_historical(&id)?))?;
    let mut doc = Map::new();
    doc.insert("artifact_id".into(), Value::String(id.render()));
    doc.insert("status".into(), Value::String("historical".into()));
    emit(cli, Value::Object(doc), format!("historical {}", id.render()));
    Ok(0)
}

fn cmd_bench(cli: &Cli, bench: &BenchCommand) -> Result<i32, CliError> {
    match bench {
        BenchCommand::Gen {
            family,
            seed,
            count,
            size,
            out,
        } => {
            let kind = PerturbationFamily::parse(family).ok_or_else(|| {
                CliError::Validation(format!(
                    "unknown perturbation family {family:?}; expected one of {}",
                    PerturbationFamily::ALL.map(|k| k.as_str()).join(", ")
                ))
            })?;
            fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            let mut written = Vec::new();
            for offset in 0..*count {
                let instance_seed = seed + offset;
                let instance =
                    benchmark::generate_instance(kind, instance_seed, GenParams { artifacts: *size })?;
                let path = out.join(format!("instance-{}-{instance_seed:08}.json", kind.as_str()));
                let body = canon::canonical_json(&benchmark::instance_to_value(&instance));
                fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                written.push(path);
            }
            let doc = Value::Array(
                written
                    .iter()
                    .map(|p| Value::String(p.display().to_string()))
                    .collect(),
            );
            let text = written
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join("\n");
            emit(cli, doc, text);
            Ok(0)
        }
        BenchCommand::Score {
            instances,
            snapshots,
            reference,
        } => cmd_bench_score(cli, instances, snapshots, *reference),
    }
}

fn read_instance(path: &Path) -> Result<BenchmarkInstance, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value =
        canon::parse_json(&text).map_err(|e| CliError::Bench(format!("{}: {e}", path.display())))?;
    benchmark::instance_from_value(&value)
        .map_err(|e| CliError::Bench(format!("{}: {e}", path.display())))
}

fn read_snapshot(path: &Path) -> Result<SystemSnapshot, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value =
        canon::parse_json(&text).map_err(|e| CliError::Bench(format!("{}: {e}", path.display())))?;
    benchmark::snapshot_from_value(&value)
        .map_err(|e| CliError::Bench(format!("{}: {e}", path.display())))
}

fn cmd_bench_score(
    cli: &Cli,
    instances: &[PathBuf],
    snapshots: &[PathBuf],
    reference: bool,
) -> Result<i32, CliError> {
    if reference {
        if !snapshots.is_empty() {
            return Err(CliError::Validation(
                "--reference does not take --snapshot files".into(),
            ));
        }
    } else if instances.len() != snapshots.len() {
        return Err(CliError::Validation(format!(
            "{} instance(s) but {} snapshot(s); pair them positionally",
            instances.len(),
            snapshots.len()
        )));
    }

    let mut results: Vec<(String, Scorecard)> = Vec::new();
    for (index, instance_path) in instances.iter().enumerate() {
        let instance = read_instance(instance_path)?;
        let snapshot = if reference {
            benchmark::reference_snapshot(&instance)
                .map_err(|e| CliError::Bench(e.to_string()))?
        } else {
            read_snapshot(&snapshots[index])?
        };
        let card = benchmark::score(&snapshot, &instance)
            .map_err(|e| CliError::Bench(e.to_string()))?;
        results.push((instance_path.display().to_string(), card));
    }

    let aggregate = macro_average(
        &results
            .iter()
            .map(|(_, card)| card.clone())
            .collect::<Vec<_>>(),
    );

    if cli.json {
        let mut doc = Map::new();
        doc.insert(
            "aggregate".into(),
            aggregate.as_ref().map(Scorecard::to_value).unwrap_or(Value::Null),
        );
        doc.insert(
            "results".into(),
            Value::Array(
                results
                    .iter()
                    .map(|(path, card)| {
                        let mut entry = Map::new();
                        entry.insert("instance".into(), Value::String(path.clone()));
                        entry.insert("scorecard".into(), card.to_value());
                        Value::Object(entry)
                    })
                    .collect(),
            ),
        );
        println!("{}", canon::canonical_json(&Value::Object(doc)));
    } else if results.is_empty() {
        println!("no instances scored");
    } else {
        for (path, card) in &results {
            println!("== {path}");
            print!("{}", card.render_text());
            println!();
        }
        if results.len() > 1 {
            if let Some(aggregate) = &aggregate {
                println!("== aggregate over {} instances", results.len());
                print!("{}", aggregate.render_text());
            }
        }
    }
    Ok(0)
}
