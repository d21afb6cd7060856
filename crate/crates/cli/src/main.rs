mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use commands::Locations;
use config::{RunConfig, DATA_DIR_ENV, RESOLVED_CONFIG};
use error::CliError;

/// Physics-guided graph interpolation of sparse PM2.5 sensor networks.
#[derive(Parser)]
#[command(name = "graphy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw sensor and wind CSVs into a canonical dataset.
    Ingest {
        /// Directory with sensors.csv, pm25_raw.csv and wind_raw.csv.
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a synthetic dataset.
    Synth {
        /// JSON simulation spec; omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed on a sensor split.
    Train(RunArgs),
    /// Score the trained ensemble and the baselines on the test sensors.
    Evaluate(RunArgs),
    /// Predict PM2.5 at arbitrary locations from the context sensors.
    Interpolate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, allow_hyphen_values = true, requires = "lon", conflicts_with = "grid")]
        lat: Option<f64>,
        #[arg(long, allow_hyphen_values = true, requires = "lat")]
        lon: Option<f64>,
        /// lat_min,lat_max,lon_min,lon_max,n_lat,n_lon
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// First (or only) hour, e.g. 2024-01-03T05:00:00Z.
        #[arg(long)]
        hour: String,
        /// Last hour of a range (inclusive).
        #[arg(long)]
        to: Option<String>,
    },
}

/// Options shared by the run commands. Flags override `--set`, which
/// overrides the config file.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory of a trained ensemble.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// S, M or L.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    split_seed: Option<u64>,
    /// Worker threads for parallel seeds and hours (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// inverse_M or direct_M.
    #[arg(long)]
    local_norm: Option<String>,
    #[arg(long)]
    idw_power: Option<f64>,
}

/// Keys a run inherits from the resolved config stored with its models.
const INHERITED_KEYS: [&str; 3] = ["dataset", "seeds", "split_seed"];

fn resolve(args: &RunArgs, inherit: bool) -> Result<RunConfig, CliError> {
    let build = |inherited: Option<&Path>| -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            cfg.set("dataset", &dir)?;
        }
        if let Some(path) = inherited {
            let mut stored = RunConfig::default();
            stored.apply_file(path)?;
            let text = stored.to_text();
            for line in text.lines() {
                if let Some((k, v)) = line.split_once('=') {
                    if INHERITED_KEYS.contains(&k.trim()) && !v.trim().is_empty() {
                        cfg.set(k, v)?;
                    }
                }
            }
        }
        if let Some(path) = &args.config {
            cfg.apply_file(path)?;
        }
        for pair in &args.set {
            let (k, v) =
                pair.split_once('=').ok_or_else(|| CliError::User(format!("--set {pair:?}: expected KEY=VALUE")))?;
            cfg.set(k, v)?;
        }
        let flags: [(&str, Option<String>); 9] = [
            ("dataset", args.dataset.as_ref().map(|p| p.display().to_string())),
            ("models", args.models.as_ref().map(|p| p.display().to_string())),
            ("out", args.out.as_ref().map(|p| p.display().to_string())),
            ("preset", args.preset.clone()),
            ("seeds", args.seeds.clone()),
            ("split_seed", args.split_seed.map(|v| v.to_string())),
            ("workers", args.workers.map(|v| v.to_string())),
            ("local_norm", args.local_norm.clone()),
            ("idw_power", args.idw_power.map(|v| v.to_string())),
        ];
        for (k, v) in &flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    };
    let mut cfg = build(None)?;
    if inherit {
        if let Some(stored) = cfg.models.as_ref().map(|m| m.join(RESOLVED_CONFIG)).filter(|p| p.exists()) {
            cfg = build(Some(&stored))?;
        }
    }
    cfg.validate()?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { raw, out } => commands::ingest(&raw, &out),
        Command::Synth { spec, seed, out } => commands::synth(spec.as_deref(), seed, &out),
        Command::Train(args) => commands::train(&resolve(&args, false)?),
        Command::Evaluate(args) => commands::evaluate_cmd(&resolve(&args, true)?),
        Command::Interpolate { run, lat, lon, grid, hour, to } => {
            let cfg = resolve(&run, true)?;
            let locations = match (lat, lon, grid) {
                (Some(lat), Some(lon), None) => Locations::Point { lat, lon },
                (None, None, Some(g)) => Locations::parse_grid(&g)?,
                _ => return Err(CliError::User("give either --lat and --lon or --grid".into())),
            };
            commands::interpolate(&cfg, &locations, &hour, to.as_deref())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
