//! Command-line front end for the sdmimo experiments.
//!
//! Every subcommand reads one JSON experiment description, writes its tables
//! under `--out` and finishes with a `manifest.json` that records the
//! effective configuration, seed, timestamps and the files produced.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sdmimo_core::harness::{
    ber_csv, constellation_csv, fmt_sig, pa_curves, pa_curves_csv, run_ber, run_scatter, run_shaping_spectrum, scatter_csv, spectrum_csv,
    ExperimentConfig, PaConfig, SchemeSelector,
};
use sdmimo_core::Scheme;

const CONFIG_KEYS: &str = "\
Config keys (one JSON document):
  system     N, K, D, d_over_lambda,
             ofdm {M, M_s, M_cp, osf},
             channel {J, L, angle_spread_deg, delay_range, filter {kind: rrc|delta, rolloff, span}}
  pa         kind (ideal|modified_rapp|twta), A, r_max, phi, zeta, B, C, chi
  scheme     auto | none | none-tail | sd1 | tsd1 | sd2 | tsd2
  precoder   arms [name | {precoder, scheme, label}],
             slp {rho, admm_max_iter, apg_max_iter, objective_tol, residual_tol, apg_step_tol, initial_step, shrink}
  noise      snr_db [..]
  run        trials, blocks_per_trial, seed, scatter_subcarrier, spectrum {angles_deg, frames}

Precoders: zf-sd zf-tsd zf-bo zf-tp zf-ref slp-sd slp-tsd slp-bo slp-ref

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.";

#[derive(Debug, Parser)]
#[command(name = "sdmimo", version, about = "Spatial sigma-delta MIMO-OFDM experiments", after_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// AM-AM/AM-PM table of the configured PA next to the ideal clipper.
    PaCurves {
        #[command(flatten)]
        common: Common,
        /// Number of amplitude samples.
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Largest amplitude as a multiple of r_max.
        #[arg(long, default_value_t = 2.0)]
        span: f64,
    },
    /// Beamformed distortion power versus angle, measured and predicted.
    ShapingSpectrum {
        #[command(flatten)]
        common: Common,
        /// Transmit chain; defaults to the config's scheme, or tsd1 when that is auto.
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Bit error rate against 1/sigma_v^2 for every configured arm.
    Ber {
        #[command(flatten)]
        common: Common,
    },
    /// Noise-free received constellation at one subcarrier.
    Scatter {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::PaCurves { common, .. }
            | Command::ShapingSpectrum { common, .. }
            | Command::Ber { common }
            | Command::Scatter { common } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::PaCurves { .. } => "pa-curves",
            Command::ShapingSpectrum { .. } => "shaping-spectrum",
            Command::Ber { .. } => "ber",
            Command::Scatter { .. } => "scatter",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Config { message: String, path: Option<String> },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config { .. } => 3,
            CliError::Runtime(_) => 1,
        }
    }

    /// Single-line JSON description printed on stderr.
    pub fn to_json(&self) -> Value {
        match self {
            CliError::Usage(m) => json!({"error": "usage", "message": m}),
            CliError::Config { message, path } => json!({"error": "invalid_config", "message": message, "path": path}),
            CliError::Runtime(m) => json!({"error": "runtime", "message": m}),
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config { message: message.into(), path: None }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Record written next to the outputs of every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub started: String,
    pub finished: String,
    pub files: Vec<String>,
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config {
            message: format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            path: (path != ".").then_some(path),
        }
    })
}

fn read_config(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))
}

fn load_experiment(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = parse_json(&read_config(&common.config)?)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    cfg.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(cfg)
}

/// Only the PA block matters for the curve table; other sections are ignored.
#[derive(Debug, Deserialize)]
struct PaOnly {
    #[serde(default)]
    pa: PaConfig,
    #[serde(default)]
    run: Option<Value>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn scatter_summary_csv(rows: &[sdmimo_core::harness::ScatterSummary]) -> String {
    let mut text = String::from("label,rms_deviation,samples\n");
    for r in rows {
        text.push_str(&format!("{},{},{}\n", r.label, fmt_sig(r.rms_deviation), r.samples));
    }
    text
}

fn execute(cmd: &Command) -> Result<(), CliError> {
    let common = cmd.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    let started = Utc::now();
    let (config, seed, mut out) = match cmd {
        Command::PaCurves { points, span, .. } => {
            let parsed: PaOnly = parse_json(&read_config(&common.config)?)?;
            let pa = parsed.pa.model;
            pa.validate().map_err(|e| config_error(e.to_string()))?;
            if !(*span > 0.0) || *points < 2 {
                return Err(CliError::Usage("--span must be positive and --points at least 2".into()));
            }
            let seed = common
                .seed
                .or_else(|| parsed.run.as_ref().and_then(|r| r.get("seed")).and_then(Value::as_u64))
                .unwrap_or(0);
            let mut out = Outputs::new(&common.out)?;
            let (rows, r1db) = pa_curves(&pa, span * pa.r_max, *points).map_err(runtime)?;
            out.write("pa_curves.csv", &pa_curves_csv(&rows))?;
            log::info!("r_1dB = {r1db:?}");
            (json!({"pa": parsed.pa, "points": points, "span": span}), seed, out)
        }
        Command::ShapingSpectrum { scheme, .. } => {
            let cfg = load_experiment(common)?;
            let scheme = scheme.unwrap_or(match cfg.scheme {
                SchemeSelector::Fixed(s) => s,
                SchemeSelector::Auto => Scheme::Tsd1,
            });
            let mut out = Outputs::new(&common.out)?;
            let rows = run_shaping_spectrum(&cfg, scheme).map_err(runtime)?;
            out.write("spectrum.csv", &spectrum_csv(&rows))?;
            let mut snapshot = serde_json::to_value(&cfg).map_err(runtime)?;
            snapshot["scheme"] = json!(scheme.as_str());
            (snapshot, cfg.run.seed, out)
        }
        Command::Ber { .. } => {
            let cfg = load_experiment(common)?;
            let mut out = Outputs::new(&common.out)?;
            let records = run_ber(&cfg).map_err(runtime)?;
            out.write("ber.csv", &ber_csv(&records))?;
            (serde_json::to_value(&cfg).map_err(runtime)?, cfg.run.seed, out)
        }
        Command::Scatter { .. } => {
            let cfg = load_experiment(common)?;
            let mut out = Outputs::new(&common.out)?;
            let result = run_scatter(&cfg, cfg.run.scatter_subcarrier).map_err(runtime)?;
            out.write("scatter.csv", &scatter_csv(&result.points))?;
            out.write("scatter_summary.csv", &scatter_summary_csv(&result.summary))?;
            let q = cfg.system.constellation().map_err(runtime)?;
            out.write("constellation.csv", &constellation_csv(&q))?;
            (serde_json::to_value(&cfg).map_err(runtime)?, cfg.run.seed, out)
        }
    };
    let mut files = out.files.clone();
    files.push("manifest.json".into());
    let manifest = RunManifest {
        tool: "sdmimo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        seed,
        config,
        started: timestamp(started),
        finished: timestamp(Utc::now()),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    out.write("manifest.json", &text)?;
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported as one JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}
