//! Orchestration behind the `chns` binary: single runs, ensembles, property
//! checks, measure reports over archives and the order probe.
//!
//! Exit codes: 0 ok, 2 config error, 3 blow-up, 4 property failure, 5 I/O.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chns_core::config::RunConfig;
use chns_core::Error;

pub mod check;
pub mod measure;
pub mod run;

/// Environment variable overriding `output.directory`.
pub const OUT_DIR_ENV: &str = "CHNS_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    BlowUp(String),
    Property(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::BlowUp(_) => 3,
            Self::Property(_) => 4,
            Self::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::BlowUp(m) => write!(f, "blow-up: {m}"),
            Self::Property(m) => write!(f, "property failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::InvalidGrid(_)
            | Error::GridMismatch { .. }
            | Error::ModeOutOfRange { .. } => Self::Config(e.to_string()),
            Error::BlowUp { .. } => Self::BlowUp(e.to_string()),
            _ => Self::Io(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Options shared by all subcommands.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub quiet: bool,
    pub workers: Option<usize>,
}

impl Options {
    pub(crate) fn note(&self, msg: impl fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

/// Reads and validates a config, applying the seed override.
pub fn load_config(path: &Path, opts: &Options) -> CliResult<(RunConfig, String)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut cfg = RunConfig::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = opts.seed_override {
        cfg.noise.seed = seed;
    }
    Ok((cfg, text))
}

/// `--out`, then `$CHNS_OUT_DIR`, then `output.directory`.
pub fn output_dir(cfg: &RunConfig, opts: &Options) -> PathBuf {
    if let Some(p) = &opts.out {
        return p.clone();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output.directory.clone(),
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(contents).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Run record: the config snapshot followed by a `[manifest]` section.
/// Parsing it as a config reproduces the run.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub config: RunConfig,
    pub command: String,
    pub members: usize,
    pub workers: usize,
    pub started: f64,
    pub finished: f64,
    pub status: String,
    /// Last checkpointed step of each member.
    pub checkpoints: Vec<Option<u64>>,
}

impl RunManifest {
    pub fn to_ini(&self) -> String {
        let ckpt: Vec<String> = self
            .checkpoints
            .iter()
            .map(|c| c.map_or("none".into(), |s| s.to_string()))
            .collect();
        format!(
            "{}\n[manifest]\ncommand = {}\ncode_version = {}\nmembers = {}\nworkers = {}\n\
             start_unix = {:.3}\nend_unix = {:.3}\nstatus = {}\ncheckpoint_index = {}\n",
            self.config.to_ini(),
            self.command,
            env!("CARGO_PKG_VERSION"),
            self.members,
            self.workers,
            self.started,
            self.finished,
            self.status,
            ckpt.join(", ")
        )
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_atomic(&dir.join("manifest.ini"), self.to_ini().as_bytes())
    }
}

/// `members = N` from the `[manifest]` section, if present.
pub fn manifest_members(text: &str) -> Option<usize> {
    let mut in_manifest = false;
    for line in text.lines() {
        let l = line.trim();
        if l.starts_with('[') {
            in_manifest = l == "[manifest]";
            continue;
        }
        if in_manifest {
            if let Some((k, v)) = l.split_once('=') {
                if k.trim() == "members" {
                    return v.trim().parse().ok();
                }
            }
        }
    }
    None
}

pub(crate) fn thread_pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
}
