//! Run configuration: a flat `key = value` text file.
//!
//! Precedence, lowest first: built-in defaults, `GRAPHY_DATA_DIR` (dataset
//! only), keys inherited from a models directory, the `--config` file,
//! `--set key=value` pairs, dedicated flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use graphy::model::{Aggregation, LocalNorm, Preset};

use crate::error::CliError;

pub const DATA_DIR_ENV: &str = "GRAPHY_DATA_DIR";
pub const RESOLVED_CONFIG: &str = "run_config.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub preset: Preset,
    pub window: usize,
    pub local_norm: LocalNorm,
    pub aggregation: Aggregation,
    pub idw_power: f64,
    pub seeds: Vec<u64>,
    pub split_seed: u64,
    /// Rayon threads; 0 uses every core.
    pub workers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_hour_stride: usize,
    pub hour_stride: usize,
    pub top_sh_quantile: f64,
    pub density: bool,
    pub density_repeats: usize,
    pub density_seed: u64,
    pub density_hour_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            models: None,
            out: None,
            preset: Preset::S,
            window: 1,
            local_norm: LocalNorm::default(),
            aggregation: Aggregation::default(),
            idw_power: 1.0,
            seeds: vec![0, 1, 2, 3, 4],
            split_seed: 0,
            workers: 0,
            lr: 1e-4,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            val_hour_stride: 1,
            hour_stride: 1,
            top_sh_quantile: 0.75,
            density: true,
            density_repeats: 5,
            density_seed: 0,
            density_hour_stride: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| CliError::User(format!("config key {key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::User(format!("config key {key}: expected true or false, got {value:?}"))),
    }
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>, CliError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse::<u64>("seeds", s)).collect()
}

fn path_or_none(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::S => "S",
        Preset::M => "M",
        Preset::L => "L",
    }
}

fn local_norm_name(n: LocalNorm) -> &'static str {
    match n {
        LocalNorm::DirectM => "direct_M",
        LocalNorm::InverseM => "inverse_M",
    }
}

fn aggregation_name(a: Aggregation) -> &'static str {
    match a {
        Aggregation::Sum => "sum",
        Aggregation::Mean => "mean",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = path_or_none(v),
            "models" => self.models = path_or_none(v),
            "out" => self.out = path_or_none(v),
            "preset" => self.preset = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "local_norm" => self.local_norm = parse(key, v)?,
            "aggregation" => self.aggregation = parse(key, v)?,
            "idw_power" => self.idw_power = parse(key, v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "val_hour_stride" => self.val_hour_stride = parse(key, v)?,
            "hour_stride" => self.hour_stride = parse(key, v)?,
            "top_sh_quantile" => self.top_sh_quantile = parse(key, v)?,
            "density" => self.density = parse_bool(key, v)?,
            "density_repeats" => self.density_repeats = parse(key, v)?,
            "density_seed" => self.density_seed = parse(key, v)?,
            "density_hour_stride" => self.density_hour_stride = parse(key, v)?,
            other => return Err(CliError::User(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` document. Blank lines and `#` comments are
    /// ignored; a key may appear once.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::User(format!("{origin}:{}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(CliError::User(format!("{origin}:{}: duplicate key {k}", n + 1)));
            }
            self.set(k, v).map_err(|e| CliError::User(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its resolved value, in a form `apply_text` accepts.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let pairs = [
            ("dataset", path(&self.dataset)),
            ("models", path(&self.models)),
            ("out", path(&self.out)),
            ("preset", preset_name(self.preset).to_string()),
            ("window", self.window.to_string()),
            ("local_norm", local_norm_name(self.local_norm).to_string()),
            ("aggregation", aggregation_name(self.aggregation).to_string()),
            ("idw_power", self.idw_power.to_string()),
            ("seeds", seeds.join(",")),
            ("split_seed", self.split_seed.to_string()),
            ("workers", self.workers.to_string()),
            ("lr", format!("{:e}", self.lr)),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("val_hour_stride", self.val_hour_stride.to_string()),
            ("hour_stride", self.hour_stride.to_string()),
            ("top_sh_quantile", self.top_sh_quantile.to_string()),
            ("density", self.density.to_string()),
            ("density_repeats", self.density_repeats.to_string()),
            ("density_seed", self.density_seed.to_string()),
            ("density_hour_stride", self.density_hour_stride.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::User("seeds must not be empty".into()));
        }
        let unique: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if unique.len() != self.seeds.len() {
            return Err(CliError::User("seeds must be unique".into()));
        }
        for (name, p) in [("dataset", &self.dataset), ("models", &self.models)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::User(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        if self.window == 0 {
            return Err(CliError::User("window must be at least 1".into()));
        }
        if !(self.idw_power.is_finite() && self.idw_power > 0.0) {
            return Err(CliError::User("idw_power must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.top_sh_quantile) {
            return Err(CliError::User("top_sh_quantile must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn require_dataset(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| {
            CliError::User(format!("no dataset given (use --dataset, the dataset key or {DATA_DIR_ENV})"))
        })
    }

    pub fn require_models(&self) -> Result<&Path, CliError> {
        self.models.as_deref().ok_or_else(|| CliError::User("no models directory given (use --models)".into()))
    }

    pub fn require_out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::User("no output directory given (use --out)".into()))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_text()).map_err(|e| CliError::io(&path, e))
    }
}
