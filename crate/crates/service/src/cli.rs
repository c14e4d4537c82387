//! Operator command line.
//!
//! Exit codes: 0 success, 1 usage, 2 input or validation failure, 3 backend
//! failure.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use counsel_core::emotion::{CorpusSession, RemoteClassifier};
use counsel_core::evaluation::read_questionnaire_csv;
use counsel_core::knowledge_base::KnowledgeBase;
use counsel_core::matching::Matcher;
use counsel_core::session::{DialogueEngine, HttpBackendConfig, SessionError};

use crate::analysis::{corpus_report, eval_report};
use crate::config::{validate_window, BackendConfig, ClassifierConfig, ServiceConfig};
use crate::output;
use crate::server::{self, StartupError};
use crate::sessions::{LiveSession, SessionStore, TurnError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "counsel", version, about = "Knowledge-grounded counseling dialogue service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ConfigArgs),
    /// Hold a session in the terminal.
    Chat(ConfigArgs),
    /// Knowledge base utilities.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Per-group emotion trends of a transcript corpus.
    Analyze {
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        classifier: ClassifierArgs,
        /// Moving-average window (odd).
        #[arg(long)]
        window: Option<usize>,
    },
    /// Questionnaire group summaries and one-way ANOVA.
    Eval { questionnaire: PathBuf },
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Load a knowledge base in strict mode.
    Validate { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
struct ClassifierArgs {
    /// Directory holding positive.txt and negative.txt.
    #[arg(long, conflicts_with = "classifier_url")]
    lexicon_dir: Option<PathBuf>,
    /// Remote sentiment classifier endpoint.
    #[arg(long)]
    classifier_url: Option<String>,
    #[arg(long, requires = "classifier_url")]
    classifier_timeout_ms: Option<u64>,
}

impl ClassifierArgs {
    fn apply(&self, cfg: &mut ClassifierConfig) {
        if let Some(dir) = &self.lexicon_dir {
            *cfg = ClassifierConfig::Lexicon { dir: Some(dir.clone()) };
        }
        if let Some(url) = &self.classifier_url {
            let timeout_ms = self.classifier_timeout_ms.unwrap_or(match cfg {
                ClassifierConfig::Remote(r) => r.timeout_ms,
                ClassifierConfig::Lexicon { .. } => 10_000,
            });
            *cfg = ClassifierConfig::Remote(RemoteClassifier {
                url: url.clone(),
                timeout_ms,
            });
        }
    }
}

/// Flags mirroring the service config file; each overrides the file.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Accept unknown keys and empty prognosis or assessment fields.
    #[arg(long)]
    lenient_kb: bool,
    #[arg(long)]
    initial_threshold: Option<f64>,
    #[arg(long)]
    intervention_threshold: Option<f64>,
    #[arg(long)]
    keyword_k: Option<usize>,
    #[arg(long)]
    summary_sentences: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    backend_model: Option<String>,
    #[arg(long)]
    backend_timeout_ms: Option<u64>,
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(long)]
    smoothing_window: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ServiceConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => ServiceConfig::load(path).map_err(Failure::input)?,
            None => ServiceConfig::default(),
        };
        if let Some(v) = &self.listen {
            cfg.listen = v.clone();
        }
        if let Some(v) = &self.data_dir {
            cfg.data_dir = v.clone();
        }
        if let Some(v) = &self.kb {
            cfg.kb_path = v.clone();
        }
        if self.lenient_kb {
            cfg.strict_kb = false;
        }
        let m = &mut cfg.matching;
        m.initial_threshold = self.initial_threshold.unwrap_or(m.initial_threshold);
        m.intervention_threshold = self.intervention_threshold.unwrap_or(m.intervention_threshold);
        m.keyword_k = self.keyword_k.unwrap_or(m.keyword_k);
        m.summary_sentences = self.summary_sentences.unwrap_or(m.summary_sentences);

        let wants_http = self.backend == Some(BackendKind::Http)
            || (self.backend.is_none() && (self.backend_url.is_some() || self.backend_model.is_some()));
        if self.backend == Some(BackendKind::Mock) {
            cfg.backend = BackendConfig::Mock;
        } else if wants_http {
            let mut http = match &cfg.backend {
                BackendConfig::Http(http) => http.clone(),
                BackendConfig::Mock => HttpBackendConfig {
                    url: String::new(),
                    model: String::new(),
                    token: None,
                    timeout_ms: 30_000,
                },
            };
            http.url = self.backend_url.clone().unwrap_or(http.url);
            http.model = self.backend_model.clone().unwrap_or(http.model);
            http.timeout_ms = self.backend_timeout_ms.unwrap_or(http.timeout_ms);
            cfg.backend = BackendConfig::Http(http);
        }
        self.classifier.apply(&mut cfg.classifier);
        cfg.smoothing_window = self.smoothing_window.unwrap_or(cfg.smoothing_window);
        cfg.apply_env();
        cfg.validate().map_err(Failure::input)?;
        Ok(cfg)
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(err: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: err.to_string(),
        }
    }

    fn backend(err: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: err.to_string(),
        }
    }
}

impl From<StartupError> for Failure {
    fn from(err: StartupError) -> Self {
        Self::input(err)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdin.lock(), &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn execute(command: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Serve(args) => {
            let cfg = args.resolve()?;
            init_tracing();
            let runtime = tokio::runtime::Runtime::new().map_err(Failure::input)?;
            runtime.block_on(server::serve(cfg))?;
            Ok(())
        }
        Command::Chat(args) => chat(args.resolve()?, input, out),
        Command::Kb {
            command: KbCommand::Validate { path },
        } => {
            let kb = KnowledgeBase::load(&path, true).map_err(Failure::input)?;
            writeln!(out, "OK ({} disorders)", kb.len()).map_err(Failure::input)
        }
        Command::Analyze {
            corpus,
            config,
            classifier,
            window,
        } => {
            let mut cfg = match &config {
                Some(path) => ServiceConfig::load(path).map_err(Failure::input)?,
                None => ServiceConfig::default(),
            };
            classifier.apply(&mut cfg.classifier);
            let window = window.unwrap_or(cfg.smoothing_window);
            validate_window(window).map_err(Failure::input)?;
            let text = std::fs::read_to_string(&corpus)
                .map_err(|e| Failure::input(format!("{}: {e}", corpus.display())))?;
            let sessions: Vec<CorpusSession> = serde_json::from_str(&text)
                .map_err(|e| Failure::input(format!("{}: {e}", corpus.display())))?;
            let classifier = cfg.classifier.build().map_err(Failure::input)?;
            let report = corpus_report(&sessions, classifier.as_ref(), window).map_err(|e| match e {
                counsel_core::emotion::EmotionError::Classifier(_) => Failure::backend(e),
                other => Failure::input(other),
            })?;
            out.write_all(output::to_pretty(&report).as_bytes()).map_err(Failure::input)
        }
        Command::Eval { questionnaire } => {
            let file = std::fs::File::open(&questionnaire)
                .map_err(|e| Failure::input(format!("{}: {e}", questionnaire.display())))?;
            let rows = read_questionnaire_csv(file).map_err(Failure::input)?;
            let report = eval_report(&rows).map_err(Failure::input)?;
            out.write_all(output::to_pretty(&report).as_bytes()).map_err(Failure::input)
        }
    }
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Terminal session, logged to the data directory like service sessions.
fn chat(cfg: ServiceConfig, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), Failure> {
    let kb = Arc::new(KnowledgeBase::load(&cfg.kb_path, cfg.strict_kb).map_err(Failure::input)?);
    let engine = DialogueEngine::new(Arc::new(Matcher::new(kb)));
    let backend = cfg.build_backend();
    let dir = SessionStore::sessions_dir(&cfg.data_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut live = LiveSession::create(&dir, &engine, cfg.matching).map_err(Failure::input)?;
    let io = Failure::input;
    writeln!(out, "session {} (type /quit to end)", live.state().session_id).map_err(io)?;

    let mut line = String::new();
    loop {
        write!(out, "[{}] you> ", live.state().stage.as_str()).map_err(io)?;
        out.flush().map_err(io)?;
        line.clear();
        if input.read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        let text = line.trim();
        if text == "/quit" {
            break;
        }
        if text.is_empty() {
            continue;
        }
        match live.turn(&engine, backend.as_ref(), text) {
            Ok(outcome) => writeln!(out, "counselor> {}", outcome.reply.text).map_err(io)?,
            Err(TurnError::Rejected(err)) => writeln!(out, "({err})").map_err(io)?,
            Err(TurnError::Failed(err @ SessionError::Backend(_))) => return Err(Failure::backend(err)),
            Err(err) => return Err(Failure::input(err)),
        }
    }
    live.close().map_err(io)?;
    writeln!(out, "session closed").map_err(io)?;
    Ok(())
}
