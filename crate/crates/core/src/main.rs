use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mobiliscope::client::{Client, ClientError};
use mobiliscope::config::{ConfigError, Settings};
use mobiliscope::pipeline::{Pipeline, PipelineError};
use mobiliscope::privacy::{encode_client_trace, encrypt_envelope, parse_client_trace, pseudonymize, KeyRing, PrivacyError};
use mobiliscope::server::{self, AppState};
use mobiliscope::simulator::{corpus, write_corpus, SimError, Suite};
use mobiliscope::store::{IngestService, Store, SystemClock};

#[derive(Debug, Parser)]
#[command(name = "mobiliscope", version, about = "Transport-mode detection and mobility analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic trace corpus with its truth manifest.
    Simulate {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run mode detection on one trace file and print the report.
    Detect {
        #[arg(long)]
        trace: PathBuf,
        /// Overrides the transit file named in the config.
        #[arg(long)]
        transit: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Write a fresh key file (envelope key and pseudonym secret).
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        key_id: u32,
    },
    /// Pseudonymize a client trace and encrypt it into an upload envelope.
    Seal {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, env = "MOBILISCOPE_KEY_FILE")]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the ingestion and analytics HTTP service until interrupted.
    Serve {
        #[arg(long, env = "MOBILISCOPE_DATA_DIR")]
        data: PathBuf,
        #[arg(long, env = "MOBILISCOPE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "MOBILISCOPE_KEY_FILE")]
        key: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "MOBILISCOPE_TOKEN", hide_env_values = true)]
        token: Option<String>,
    },
    /// Upload an envelope file and print the server's answer.
    Ingest {
        #[arg(long)]
        envelope: PathBuf,
        #[command(flatten)]
        conn: Conn,
    },
    /// Query an analytics endpoint and print its JSON.
    Query {
        #[arg(value_enum)]
        what: QueryKind,
        #[command(flatten)]
        conn: Conn,
        #[command(flatten)]
        filter: FilterArgs,
    },
}

#[derive(Debug, Args)]
struct Conn {
    #[arg(long, env = "MOBILISCOPE_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, env = "MOBILISCOPE_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// First date, YYYY-MM-DD.
    #[arg(long)]
    from: Option<String>,
    /// Last date, YYYY-MM-DD.
    #[arg(long)]
    to: Option<String>,
    /// Comma-separated modes, e.g. WALK,METRO.
    #[arg(long)]
    modes: Option<String>,
    /// Comma-separated zones; for `od` the matrix axes.
    #[arg(long)]
    zones: Option<String>,
    /// HH:MM, inclusive.
    #[arg(long)]
    time_from: Option<String>,
    /// HH:MM, exclusive.
    #[arg(long)]
    time_to: Option<String>,
    #[arg(long)]
    pseudonym: Option<String>,
    #[arg(long)]
    cursor: Option<String>,
    #[arg(long)]
    limit: Option<u32>,
    #[arg(long)]
    min_support: Option<u32>,
}

impl FilterArgs {
    fn params(&self) -> Vec<(String, String)> {
        let limit = self.limit.map(|n| n.to_string());
        let min_support = self.min_support.map(|n| n.to_string());
        [
            ("from", &self.from),
            ("to", &self.to),
            ("modes", &self.modes),
            ("zones", &self.zones),
            ("time_from", &self.time_from),
            ("time_to", &self.time_to),
            ("pseudonym", &self.pseudonym),
            ("cursor", &self.cursor),
            ("limit", &limit),
            ("min_support", &min_support),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_owned(), v.clone())))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QueryKind {
    ModalSplit,
    Od,
    Carbon,
    Trips,
    Routes,
    Records,
}

impl QueryKind {
    fn path(self) -> &'static str {
        match self {
            QueryKind::ModalSplit => "/v1/analytics/modal-split",
            QueryKind::Od => "/v1/analytics/od",
            QueryKind::Carbon => "/v1/analytics/carbon",
            QueryKind::Trips => "/v1/analytics/trips",
            QueryKind::Routes => "/v1/analytics/routes",
            QueryKind::Records => "/v1/records",
        }
    }
}

/// A failed command and its process exit status.
struct Failure {
    code: u8,
    message: String,
}

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_CONNECT: u8 = 4;
const EXIT_HTTP_CLIENT: u8 = 5;

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => EXIT_USAGE,
            _ => EXIT_PARSE,
        };
        fail(code, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            e => fail(EXIT_PARSE, e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Io { .. } | SimError::UnknownSuite(_) => EXIT_USAGE,
            SimError::Parse { .. } => EXIT_PARSE,
            _ => EXIT_OTHER,
        };
        fail(code, e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Connection { .. } => fail(EXIT_CONNECT, e.to_string()),
            ClientError::Http { status, body } if (400..500).contains(&status) => {
                println!("{body}");
                fail(EXIT_HTTP_CLIENT, format!("server answered {status}"))
            }
            e => fail(EXIT_OTHER, e.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Creates `path` readable by the owner only; fails if it already exists.
fn write_secret(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    std::os::unix::fs::OpenOptionsExt::mode(&mut opts, 0o600);
    let err = |e: std::io::Error| fail(EXIT_USAGE, format!("{}: {e}", path.display()));
    let mut f = opts.open(path).map_err(err)?;
    f.write_all(bytes).and_then(|()| f.sync_all()).map_err(err)
}

fn load_pipeline(config: Option<&Path>, transit: Option<&Path>) -> Result<Pipeline, Failure> {
    let mut settings = match config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(t) = transit {
        settings.transit_file = Some(t.to_owned());
    }
    Ok(Pipeline::from_settings(settings)?)
}

fn load_keys(path: &Path) -> Result<KeyRing, Failure> {
    KeyRing::parse(&read_text(path)?).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn privacy_failure(e: PrivacyError) -> Failure {
    let code = match e {
        PrivacyError::Parse(_) | PrivacyError::KeyFile(_) => EXIT_PARSE,
        PrivacyError::EmptyDeviceId | PrivacyError::PolicyViolation(_) => EXIT_PARSE,
        _ => EXIT_OTHER,
    };
    fail(code, e.to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { suite, seed, out, config } => {
            let pipeline = load_pipeline(config.as_deref(), None)?;
            let suite = Suite::by_name(&suite)?;
            let entries = corpus(&suite, seed, &pipeline.transit, &pipeline.settings.matcher)?;
            write_corpus(&out, &entries)?;
            info!("wrote {} traces to {}", entries.len(), out.display());
        }
        Command::Detect { trace, transit, config, format } => {
            let pipeline = load_pipeline(config.as_deref(), transit.as_deref())?;
            let text = read_text(&trace)?;
            let client = parse_client_trace(&text)
                .map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", trace.display())))?;
            let report = pipeline.report(&client.trace);
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
            }
        }
        Command::Keygen { out, key_id } => {
            write_secret(&out, KeyRing::generate(key_id).to_key_file().as_bytes())?;
        }
        Command::Seal { trace, key, out } => {
            let keys = load_keys(&key)?;
            let pkey = keys
                .pseudonym_key()
                .ok_or_else(|| fail(EXIT_PARSE, format!("{}: no pseudonym key", key.display())))?;
            let key_id = keys
                .current_key_id()
                .ok_or_else(|| fail(EXIT_PARSE, format!("{}: no envelope key", key.display())))?;
            let text = read_text(&trace)?;
            let mut client = parse_client_trace(&text)
                .map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", trace.display())))?;
            client.trace.pseudonym =
                pseudonymize(&client.trace.pseudonym, client.trace.date, pkey).map_err(privacy_failure)?;
            let payload = encode_client_trace(&client.trace, &client.profile);
            let env = encrypt_envelope(payload.as_bytes(), key_id, &keys).map_err(privacy_failure)?;
            write_file(&out, &env.to_bytes())?;
            println!("{}", env.envelope_id_hex());
        }
        Command::Serve { data, port, key, host, config, token } => {
            let keys = load_keys(&key)?;
            let pipeline = load_pipeline(config.as_deref(), None)?;
            let store = Store::open(&data, Arc::new(SystemClock)).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
            let zones = pipeline.zones.iter().map(|z| z.id().to_owned()).collect();
            let state = AppState {
                ingest: IngestService::new(Arc::new(store), Arc::new(pipeline), Arc::new(keys)),
                zones,
                token: token.filter(|t| !t.is_empty()),
            };
            serve(SocketAddr::new(host, port), state)?;
        }
        Command::Ingest { envelope, conn } => {
            let bytes = fs::read(&envelope).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", envelope.display())))?;
            let body = Client::new(&conn.url, conn.token).upload(&bytes)?;
            println!("{body}");
        }
        Command::Query { what, conn, filter } => {
            let body = Client::new(&conn.url, conn.token).get(what.path(), &filter.params())?;
            println!("{body}");
        }
    }
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
    info!("shutting down");
}

fn serve(addr: SocketAddr, state: AppState) -> Result<(), Failure> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| fail(EXIT_OTHER, e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| fail(EXIT_USAGE, format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| fail(EXIT_OTHER, e.to_string()))?;
        println!("listening on {local}");
        let _ = std::io::stdout().flush();
        server::serve(listener, state, shutdown_signal())
            .await
            .map_err(|e| fail(EXIT_OTHER, e.to_string()))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
