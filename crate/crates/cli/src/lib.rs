//! `odsc`: validate, compile, store and check ODS policies from the shell.
//!
//! Exit codes: `0` success, `1` denied (only with
//! `--exit-policy status-reflects-decision`), `2` validation, compile,
//! store or check errors, `3` unreadable input files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ods_core::check::{check, CheckRequest, Decision};
use ods_core::compiler::{compile_policy_set, Backend, OpenFgaBackend};
use ods_core::diag::render_text;
use ods_core::odrl::OdrlPolicy;
use ods_core::profile::analyze_document;
use ods_core::rebac::{import_model, parse_tuple_file, AuthorizationModel, ObjectRef, TupleFile, TupleSet};
use ods_core::store::Store;
use ods_core::{Diagnostic, Value};
use ods_service::ServiceConfig;
use serde_json::{json, Value as JsonValue};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DENIED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_UNREADABLE: i32 = 3;

/// Environment variable naming the default store directory.
pub const STORE_ENV: &str = "ODS_STORE_DIR";

#[derive(Debug, Parser)]
#[command(name = "odsc", version, about = "ODRL/ODS policy compiler and ReBAC check tool")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExitPolicy {
    StatusAlwaysZero,
    StatusReflectsDecision,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a policy against the ODS profile.
    Validate { policy: PathBuf },
    /// Compile policies to a model, a tuple file and obligation records.
    Compile(CompileArgs),
    /// Store a tuple file, optionally putting a model first.
    Write(WriteArgs),
    /// Answer one check request.
    Check(CheckArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[arg(required = true)]
    pub policies: Vec<PathBuf>,
    #[arg(long, default_value = "model.fga.json")]
    pub out_model: PathBuf,
    #[arg(long, default_value = "tuples.jsonl")]
    pub out_tuples: PathBuf,
    #[arg(long, default_value = "obligations.jsonl")]
    pub out_obligations: PathBuf,
}

#[derive(Debug, Args)]
pub struct WriteArgs {
    /// Store directory, created on demand.
    #[arg(long, env = STORE_ENV)]
    pub store: PathBuf,
    /// Model file to store before the tuples.
    #[arg(long)]
    pub model: Option<PathBuf>,
    pub tuples: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Store directory. Ignored when `--model` is given.
    #[arg(long, env = STORE_ENV)]
    pub store: Option<PathBuf>,
    /// Model file, checked against `--tuples` instead of a store.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub tuples: Option<PathBuf>,
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub relation: String,
    #[arg(long)]
    pub object: String,
    /// Request context entry `key=value`; repeatable.
    #[arg(long = "context", value_name = "KEY=VALUE")]
    pub context: Vec<String>,
    #[arg(long, value_enum, default_value_t = ExitPolicy::StatusAlwaysZero)]
    pub exit_policy: ExitPolicy,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = STORE_ENV)]
    pub store_dir: PathBuf,
}

/// A failed command: exit code plus the message for stderr.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn error(message: impl ToString) -> Self {
        Self {
            code: EXIT_ERROR,
            message: message.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure {
        code: EXIT_UNREADABLE,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|_| Failure {
        code: EXIT_UNREADABLE,
        message: format!("{} is not UTF-8", path.display()),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::error(format!("cannot write {}: {e}", path.display())))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let format = cli.format;
    let result = match cli.command {
        Command::Validate { policy } => cmd_validate(&policy, format, out),
        Command::Compile(args) => cmd_compile(&args, format, out, err),
        Command::Write(args) => cmd_write(&args, format, out),
        Command::Check(args) => cmd_check(&args, format, out),
        Command::Serve(args) => cmd_serve(&args, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn diagnostics_json(diagnostics: &[Diagnostic]) -> JsonValue {
    serde_json::to_value(diagnostics).unwrap_or_default()
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(Failure::error)
}

fn cmd_validate(path: &Path, format: OutputFormat, out: &mut dyn Write) -> Result<i32, Failure> {
    let analysis = analyze_document(&read(path)?);
    let parse_error = analysis.parse_error.as_ref().map(|e| e.to_string());
    match format {
        OutputFormat::Text => {
            let mut text = render_text(&analysis.diagnostics);
            if let Some(e) = &parse_error {
                text.push_str(&format!("ERROR parse: {e}\n"));
            }
            emit(out, &text)?;
        }
        OutputFormat::Machine => {
            let doc = json!({
                "valid": !analysis.has_errors(),
                "parse_error": parse_error,
                "diagnostics": diagnostics_json(&analysis.diagnostics),
            });
            emit(out, &format!("{doc}\n"))?;
        }
    }
    Ok(if analysis.has_errors() { EXIT_ERROR } else { EXIT_OK })
}

/// Reads and validates every policy. Diagnostics go to `err`, prefixed with
/// the file they belong to.
fn load_policies(paths: &[PathBuf], err: &mut dyn Write) -> Result<(Vec<OdrlPolicy>, Vec<Diagnostic>), Failure> {
    let mut policies = Vec::new();
    let mut all = Vec::new();
    let mut failed = false;
    for path in paths {
        let analysis = analyze_document(&read(path)?);
        for d in &analysis.diagnostics {
            let _ = writeln!(err, "{}: {d}", path.display());
        }
        if let Some(e) = &analysis.parse_error {
            let _ = writeln!(err, "{}: ERROR parse: {e}", path.display());
        }
        failed |= analysis.has_errors();
        all.extend(analysis.diagnostics);
        policies.extend(analysis.policy);
    }
    if failed {
        return Err(Failure::error("validation failed"));
    }
    Ok((policies, all))
}

fn cmd_compile(args: &CompileArgs, format: OutputFormat, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let (policies, diagnostics) = load_policies(&args.policies, err)?;
    let result = compile_policy_set(&policies).map_err(Failure::error)?;
    let artifacts = OpenFgaBackend.emit(&result).map_err(Failure::error)?;
    let mut written = Vec::new();
    for artifact in &artifacts {
        let path = match artifact.file_name.as_str() {
            "model.fga.json" => &args.out_model,
            "tuples.jsonl" => &args.out_tuples,
            "obligations.jsonl" => &args.out_obligations,
            other => return Err(Failure::error(format!("unexpected artifact {other}"))),
        };
        write_file(path, &artifact.bytes)?;
        written.push(path);
    }
    match format {
        OutputFormat::Text => {
            for path in written {
                emit(out, &format!("wrote {}\n", path.display()))?;
            }
        }
        OutputFormat::Machine => {
            let doc = json!({
                "model": args.out_model,
                "tuples": args.out_tuples,
                "obligations": args.out_obligations,
                "tuple_count": result.tuples.len(),
                "obligation_count": result.obligations.len(),
                "diagnostics": diagnostics_json(&diagnostics),
            });
            emit(out, &format!("{doc}\n"))?;
        }
    }
    Ok(EXIT_OK)
}

fn load_model(path: &Path) -> Result<AuthorizationModel, Failure> {
    import_model(&read(path)?).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn load_tuples(path: &Path) -> Result<TupleFile, Failure> {
    parse_tuple_file(&read_text(path)?).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn open_store(dir: &Path) -> Result<Store, Failure> {
    Store::open(dir).map_err(|e| Failure::error(format!("{}: {e}", dir.display())))
}

fn cmd_write(args: &WriteArgs, format: OutputFormat, out: &mut dyn Write) -> Result<i32, Failure> {
    let model = args.model.as_deref().map(load_model).transpose()?;
    let file = load_tuples(&args.tuples)?;
    let store = open_store(&args.store)?;
    let model_id = match &model {
        Some(m) => Some(store.put_model(m).map_err(Failure::error)?),
        None => None,
    };
    let tuples = &file.tuples;
    let revision = if tuples.is_empty() && model_id.is_some() {
        store.revision()
    } else {
        store.write(tuples, &[]).map_err(Failure::error)?
    };
    match format {
        OutputFormat::Text => {
            if let Some(id) = &model_id {
                emit(out, &format!("model {id}\n"))?;
            }
            emit(out, &format!("revision {revision}\n"))?;
        }
        OutputFormat::Machine => {
            let doc = json!({"authorization_model_id": model_id, "revision": revision});
            emit(out, &format!("{doc}\n"))?;
        }
    }
    Ok(EXIT_OK)
}

/// Splits `key=value`, typing the value as a timestamp if RFC 3339 shaped,
/// an integer if all digits, text otherwise.
pub fn parse_context_arg(arg: &str) -> Result<(String, Value), String> {
    match arg.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), Value::from_text(v))),
        _ => Err(format!("context entry `{arg}` is not key=value")),
    }
}

/// The machine rendering of a decision.
pub fn decision_json(decision: &Decision) -> JsonValue {
    json!({
        "allowed": decision.allowed,
        "nodes_visited": decision.nodes_visited,
        "cycle_detected": decision.cycle_detected,
        "missing_context": decision.missing_context,
    })
}

fn cmd_check(args: &CheckArgs, format: OutputFormat, out: &mut dyn Write) -> Result<i32, Failure> {
    let user: ObjectRef = args.user.parse().map_err(|e| Failure::error(format!("--user: {e}")))?;
    let object: ObjectRef = args.object.parse().map_err(|e| Failure::error(format!("--object: {e}")))?;
    let mut request = CheckRequest::new(user, args.relation.clone(), object);
    for entry in &args.context {
        let (k, v) = parse_context_arg(entry).map_err(Failure::error)?;
        request.context.insert(k, v);
    }

    let decision = match (&args.model, &args.store) {
        (Some(model_path), _) => {
            let model = load_model(model_path)?;
            let tuples = match &args.tuples {
                Some(p) => load_tuples(p)?.tuples.into_iter().collect(),
                None => TupleSet::new(),
            };
            check(&tuples, &model, &request)
        }
        (None, Some(dir)) => {
            let snapshot = open_store(dir)?.snapshot();
            let model = snapshot.model(None).map_err(Failure::error)?;
            check(&snapshot.tuples, &model, &request)
        }
        (None, None) => return Err(Failure::error(format!("need --store, {STORE_ENV} or --model"))),
    }
    .map_err(Failure::error)?;

    match format {
        OutputFormat::Text => {
            let mut line = if decision.allowed { "allowed".to_string() } else { "denied".to_string() };
            if !decision.missing_context.is_empty() {
                line.push_str(&format!(" (missing context: {})", decision.missing_context.join(", ")));
            }
            emit(out, &format!("{line}\n"))?;
        }
        OutputFormat::Machine => emit(out, &format!("{}\n", decision_json(&decision)))?,
    }
    Ok(match (args.exit_policy, decision.allowed) {
        (ExitPolicy::StatusReflectsDecision, false) => EXIT_DENIED,
        _ => EXIT_OK,
    })
}

fn cmd_serve(args: &ServeArgs, err: &mut dyn Write) -> Result<i32, Failure> {
    let mut config = ServiceConfig::new(&args.store_dir).with_env_token();
    config.listen_port = args.port;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::error)?;
    let _ = writeln!(err, "listening on port {} with data in {}", args.port, args.store_dir.display());
    runtime.block_on(ods_service::serve(&config)).map_err(Failure::error)?;
    Ok(EXIT_OK)
}
