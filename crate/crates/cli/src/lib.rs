//! The `litterbox` command.
//!
//! Exit codes: 0 on success, 1 for usage errors and unreadable input, 2
//! when the model or the server fails.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use litterbox_core::blocktext::{print_program_lossy, Scope};
use litterbox_core::lint::{run_detectors, Issue, IssueKind, Selection, Severity};
use litterbox_core::llm::{AnalyzeMode, AskScope, Assistant, FixOutcome, LlmConfig, LlmError, LlmProvider};
use litterbox_core::model::{Program, ScriptId};
use litterbox_core::sb3::{load_sb3, save_sb3};
use litterbox_service::{AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "litterbox", version, about = "Find bugs in Scratch programs and ask a language model about them")]
pub struct Cli {
    #[command(flatten)]
    pub settings: SettingsArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command. They take precedence over
/// `LITTERBOX_*` environment variables and the config file.
#[derive(Debug, Args, Default)]
pub struct SettingsArgs {
    /// TOML file with `llm.*` and `server.*` settings
    #[arg(long, global = true, env = "LITTERBOX_CONFIG")]
    pub config: Option<PathBuf>,
    /// openai, selfhosted or mock
    #[arg(long, global = true)]
    pub provider: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub api_key: Option<String>,
    /// Language of the model's answers, as a tag such as `de`
    #[arg(long, global = true)]
    pub language: Option<String>,
    /// Directory with prompt templates replacing the built-in ones
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    /// Directory with recorded responses for the mock provider
    #[arg(long, global = true)]
    pub mock_dir: Option<PathBuf>,
    /// Print progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Static analysis and language model tasks
    Llm {
        #[command(subcommand)]
        task: LlmCommand,
    },
    /// Print a program as scratchblocks text
    Print(PrintArgs),
    /// Run the HTTP API
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum LlmCommand {
    /// List issues found by the static analysis and, optionally, by the model
    Analyze(AnalyzeArgs),
    /// Ask the model to explain an issue
    Explain(IssueArgs),
    /// Ask the model to fix an issue and write the fixed program
    Fix(IssueArgs),
    /// Ask a question about a program
    Ask(AskArgs),
    /// Ask the model to extend a script and write the result
    Complete(CompleteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// An .sb3 file, or a directory whose .sb3 files are all analysed
    #[arg(long)]
    pub path: PathBuf,
    /// Sprite the model looks at; every sprite when left out
    #[arg(long)]
    pub target: Option<String>,
    /// Also ask the model for bugs and smells
    #[arg(long)]
    pub new_issues: bool,
    /// Also ask the model for code perfumes
    #[arg(long)]
    pub perfumes: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct IssueArgs {
    #[arg(long)]
    pub path: PathBuf,
    /// Issue id as listed by `llm analyze`, e.g. MissingLoop@Boat:1#1
    #[arg(long)]
    pub issue: String,
    /// Where to write the fixed program; defaults to <name>.fixed.sb3
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub question: String,
    /// Limit the question to one sprite
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub path: PathBuf,
    /// Script id such as Boat:1
    #[arg(long)]
    pub script: String,
    /// Where to write the result; defaults to <name>.completed.sb3
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PrintArgs {
    #[arg(long)]
    pub path: PathBuf,
    /// Print only this sprite
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

/// A failed command: exit code and message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn backend(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        match &e {
            LlmError::EmptyQuestion | LlmError::UnknownSprite(_) | LlmError::UnknownScript(_) | LlmError::Unprintable(_) => {
                Failure::usage(e.to_string())
            }
            LlmError::NothingUsable { dropped, .. } | LlmError::TargetScriptMissing { dropped, .. } => {
                let mut message = e.to_string();
                for d in dropped {
                    for diag in &d.diagnostics {
                        let _ = write!(message, "\n  {diag}");
                    }
                }
                Failure::backend(message)
            }
            _ => Failure::backend(e.to_string()),
        }
    }
}

/// Parses `args` and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{}", e.render());
                    return if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 };
                }
                _ => 1,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let level = if cli.settings.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(cli, None, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Runs a parsed command. `provider` replaces the configured provider.
pub fn execute(cli: Cli, provider: Option<Arc<dyn LlmProvider>>, out: &mut dyn Write) -> Result<(), Failure> {
    let settings = load_settings(&cli.settings)?;
    let assistant = || -> Result<Assistant, Failure> {
        settings
            .build_assistant(provider.clone())
            .map_err(|e| Failure::usage(e.to_string()))
    };
    match cli.command {
        Command::Print(args) => print(&args, out),
        Command::Serve(args) => serve(&args, &settings),
        Command::Llm { task } => match task {
            LlmCommand::Analyze(args) => {
                let needs_model = args.new_issues || args.perfumes;
                let assistant = if needs_model { Some(assistant()?) } else { None };
                analyze(&args, assistant.as_ref(), out)
            }
            LlmCommand::Explain(args) => explain(&args, &assistant()?, out),
            LlmCommand::Fix(args) => fix(&args, &assistant()?, out),
            LlmCommand::Ask(args) => ask(&args, &assistant()?, out),
            LlmCommand::Complete(args) => complete(&args, &assistant()?, out),
        },
    }
}

/// File settings, then environment, then flags.
pub fn load_settings(args: &SettingsArgs) -> Result<LlmConfig, Failure> {
    let mut settings = match &args.config {
        Some(path) => LlmConfig::from_file(path).map_err(|e| Failure::usage(e.to_string()))?,
        None => LlmConfig::new(),
    };
    settings.apply_env(std::env::vars());
    let flags = [
        ("llm.provider", args.provider.clone()),
        ("llm.model", args.model.clone()),
        ("llm.base-url", args.base_url.clone()),
        ("llm.openai.api-key", args.api_key.clone()),
        ("llm.language", args.language.clone()),
        ("llm.prompts", args.prompts.as_ref().map(|p| p.display().to_string())),
        ("llm.mock-dir", args.mock_dir.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            settings.set(key, &v);
        }
    }
    Ok(settings)
}

fn load(path: &Path) -> Result<Program, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    load_sb3(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn single_file(path: &Path) -> Result<Program, Failure> {
    if path.is_dir() {
        return Err(Failure::usage(format!("{} is a directory; this command takes one .sb3 file", path.display())));
    }
    load(path)
}

/// The .sb3 files of a directory in name order, or the path itself.
fn inputs(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("sb3")))
        .collect();
    files.sort();
    Ok(files)
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure::backend(e.to_string()))
}

fn print(args: &PrintArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut text = String::new();
    for file in inputs(&args.path)? {
        let program = load(&file)?;
        let scope = match &args.target {
            Some(t) => Scope::Sprite(t.clone()),
            None => Scope::Program,
        };
        let (printed, skipped) = print_program_lossy(&program, &scope).map_err(|e| Failure::usage(e.to_string()))?;
        for id in skipped {
            log::warn!("{}: script {id} has blocks without a text form", file.display());
        }
        text.push_str(&printed);
    }
    write_out(out, &text)
}

struct Report {
    file: PathBuf,
    issues: Vec<Issue>,
    warnings: usize,
}

fn analyze(args: &AnalyzeArgs, assistant: Option<&Assistant>, out: &mut dyn Write) -> Result<(), Failure> {
    let files = inputs(&args.path)?;
    if files.is_empty() {
        return Err(Failure::usage(format!("no .sb3 files in {}", args.path.display())));
    }
    let mut reports = Vec::new();
    for file in &files {
        let program = load(file)?;
        let mut issues = run_detectors(&program, &Selection::All).map_err(|e| Failure::usage(e.to_string()))?;
        let mut warnings = 0;
        let mut found = 0;
        if let Some(assistant) = assistant {
            let targets: Vec<String> = match &args.target {
                Some(t) => {
                    if program.target(t).is_none() {
                        return Err(Failure::usage(format!("{}: unknown sprite `{t}`", file.display())));
                    }
                    vec![t.clone()]
                }
                None => program.sprites.iter().map(|s| s.name.clone()).collect(),
            };
            let mut modes = Vec::new();
            if args.new_issues {
                modes.push(AnalyzeMode::NewIssues);
            }
            if args.perfumes {
                modes.push(AnalyzeMode::Perfumes);
            }
            for target in &targets {
                for mode in &modes {
                    let report = assistant.analyze(&program, target, *mode)?;
                    warnings += report.warnings;
                    for mut issue in report.issues {
                        found += 1;
                        issue.id = format!("llm@{}#{found}", issue.location.target);
                        issues.push(issue);
                    }
                }
            }
            if warnings > 0 {
                log::warn!("{}: skipped {warnings} response lines that were not findings", file.display());
            }
        }
        reports.push(Report {
            file: file.clone(),
            issues,
            warnings,
        });
    }
    let batch = args.path.is_dir();
    let text = match args.format {
        Format::Json => {
            let values: Vec<_> = reports
                .iter()
                .map(|r| json!({"file": r.file.display().to_string(), "issues": r.issues, "skipped_lines": r.warnings}))
                .collect();
            let value = if batch { json!(values) } else { values.into_iter().next().unwrap() };
            format!("{}\n", serde_json::to_string_pretty(&value).unwrap())
        }
        Format::Table => table(&reports, batch),
    };
    write_out(out, &text)
}

fn kind_name(kind: IssueKind) -> &'static str {
    match kind {
        IssueKind::Bug => "bug",
        IssueKind::Smell => "smell",
        IssueKind::Perfume => "perfume",
    }
}

fn severity_name(severity: Severity) -> &'static str {
    match severity {
        Severity::Info => "info",
        Severity::Warn => "warn",
        Severity::Error => "error",
    }
}

fn table(reports: &[Report], batch: bool) -> String {
    let mut header = vec!["ID", "KIND", "SEVERITY", "FINDER", "LOCATION", "TITLE"];
    if batch {
        header.insert(0, "FILE");
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for r in reports {
        for i in &r.issues {
            let location = match &i.location.script {
                Some(s) => s.to_string(),
                None => i.location.target.clone(),
            };
            let mut row = vec![
                i.id.clone(),
                kind_name(i.kind).to_string(),
                severity_name(i.severity).to_string(),
                i.finder.clone(),
                location,
                i.title.clone(),
            ];
            if batch {
                let name = r.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                row.insert(0, name);
            }
            rows.push(row);
        }
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut text = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut l = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c + 1 == cells.len() {
                l.push_str(cell);
            } else {
                let _ = write!(l, "{cell:<w$}  ", w = widths[c]);
            }
        }
        text.push_str(l.trim_end());
        text.push('\n');
    };
    line(header.clone());
    for row in &rows {
        line(row.iter().map(String::as_str).collect());
    }
    if rows.is_empty() {
        text.push_str("no issues found\n");
    }
    text
}

fn find_issue(program: &Program, id: &str) -> Result<Issue, Failure> {
    run_detectors(program, &Selection::All)
        .map_err(|e| Failure::usage(e.to_string()))?
        .into_iter()
        .find(|i| i.id == id)
        .ok_or_else(|| Failure::usage(format!("no issue with id `{id}`; run `litterbox llm analyze` to list them")))
}

fn explain(args: &IssueArgs, assistant: &Assistant, out: &mut dyn Write) -> Result<(), Failure> {
    let program = single_file(&args.path)?;
    let issue = find_issue(&program, &args.issue)?;
    let explained = assistant.explain_issue(&program, &issue)?;
    let text = match args.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&explained).unwrap()),
        Format::Table => format!(
            "{} ({}) in {}\n\n{}\n\nGPT (may be wrong):\n{}\n",
            explained.title,
            kind_name(explained.kind),
            explained.location.target,
            explained.generic_description,
            explained.llm_explanation.as_deref().unwrap_or_default()
        ),
    };
    write_out(out, &text)
}

fn default_out(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "program".into());
    path.with_file_name(format!("{stem}.{suffix}.sb3"))
}

fn write_outcome(outcome: &FixOutcome, path: &Path, format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    let bytes = save_sb3(&outcome.updated).map_err(|e| Failure::backend(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    let text = match format {
        Format::Json => {
            let mut v = json!(outcome.summary());
            v["out"] = json!(path.display().to_string());
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
        Format::Table => {
            let mut t = String::new();
            let ids = |ids: &[ScriptId]| ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ");
            if !outcome.replaced.is_empty() {
                let _ = writeln!(t, "replaced: {}", ids(&outcome.replaced));
            }
            if !outcome.added_scripts.is_empty() {
                let _ = writeln!(t, "added scripts: {}", ids(&outcome.added_scripts));
            }
            if !outcome.added_sprites.is_empty() {
                let _ = writeln!(t, "added sprites: {}", outcome.added_sprites.join(", "));
            }
            if !outcome.dropped.is_empty() {
                let _ = writeln!(t, "dropped: {} unusable script(s)", outcome.dropped.len());
            }
            let _ = writeln!(t, "re-prompts: {}", outcome.attempts_used);
            let _ = writeln!(t, "written: {}", path.display());
            t
        }
    };
    write_out(out, &text)
}

fn fix(args: &IssueArgs, assistant: &Assistant, out: &mut dyn Write) -> Result<(), Failure> {
    let program = single_file(&args.path)?;
    let issue = find_issue(&program, &args.issue)?;
    let outcome = assistant.fix_issue(&program, &issue)?;
    let target = args.out.clone().unwrap_or_else(|| default_out(&args.path, "fixed"));
    write_outcome(&outcome, &target, args.format, out)
}

fn ask(args: &AskArgs, assistant: &Assistant, out: &mut dyn Write) -> Result<(), Failure> {
    let program = single_file(&args.path)?;
    let scope = match &args.target {
        Some(t) => AskScope::Sprite(t.clone()),
        None => AskScope::Program,
    };
    let answer = assistant.ask(&program, &args.question, &scope)?;
    write_out(out, &format!("{}\n", answer.trim_end()))
}

fn complete(args: &CompleteArgs, assistant: &Assistant, out: &mut dyn Write) -> Result<(), Failure> {
    let program = single_file(&args.path)?;
    let outcome = assistant.complete_script(&program, &ScriptId::from(args.script.as_str()))?;
    let target = args.out.clone().unwrap_or_else(|| default_out(&args.path, "completed"));
    write_outcome(&outcome, &target, args.format, out)
}

fn serve(args: &ServeArgs, settings: &LlmConfig) -> Result<(), Failure> {
    let mut config = ServiceConfig::from_settings(settings).map_err(Failure::usage)?;
    if let Some(port) = args.port {
        config.port = port;
    }
    let state = AppState::from_settings(settings, config.clone());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::backend(e.to_string()))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, config.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::backend(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::backend(e.to_string()))?;
        eprintln!("listening on http://{local}");
        litterbox_service::serve(listener, state, litterbox_service::shutdown_signal())
            .await
            .map_err(|e| Failure::backend(e.to_string()))
    })
}
