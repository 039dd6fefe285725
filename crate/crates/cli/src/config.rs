//! Flat `key = value` configuration, grid files, and their resolution into
//! fully materialized [`Settings`].
//!
//! Precedence: command-line flags, then the config file, then defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dlrlab_core::experiments::{ParamGrid, Protocol, DEFAULT_REPLAY_SEED_OFFSET};
use dlrlab_core::optim::{Algorithm, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Compare,
    Minsize,
    Replay,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Train => "train",
            Command::Compare => "compare",
            Command::Minsize => "minsize",
            Command::Replay => "replay",
        })
    }
}

const RUN_KEYS: &[&str] = &[
    "algo",
    "algos",
    "hidden",
    "batch",
    "threshold",
    "max_epochs",
    "eval_interval",
    "seeds",
    "workers",
    "sizes",
    "start_size",
    "size_step",
    "replay_seed_offset",
    "data_dir",
];

fn is_optimizer_key(key: &str) -> bool {
    Algorithm::ALL
        .iter()
        .any(|a| a.param_keys().contains(&key))
}

/// One `key = value` entry and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub origin: String,
}

pub type RawConfig = BTreeMap<String, Entry>;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, origin: &Path) -> Result<Vec<(String, String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = format!("{}:{}", origin.display(), n + 1);
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{at}: expected `key = value`, got `{line}`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(CliError::Config(format!("{at}: empty key")));
        }
        out.push((key.to_owned(), value.to_owned(), at));
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config file {}: {e}", path.display())))?;
    let mut raw = RawConfig::new();
    for (key, value, origin) in parse_kv(&text, path)? {
        let key = key.replace('-', "_");
        if !RUN_KEYS.contains(&key.as_str()) && !is_optimizer_key(&key) {
            return Err(CliError::Config(format!("{origin}: unknown key `{key}`")));
        }
        raw.insert(key, Entry { value, origin });
    }
    Ok(raw)
}

/// Grid file lines look like `dlr-pre.eta0 = 0.3, 1, 3`.
pub fn load_grid_file(path: &Path) -> Result<Vec<ParamGrid>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read grid file {}: {e}", path.display())))?;
    let mut grids: BTreeMap<Algorithm, ParamGrid> = BTreeMap::new();
    for (key, value, origin) in parse_kv(&text, path)? {
        let (algo, param) = key.split_once('.').ok_or_else(|| {
            CliError::Config(format!("{origin}: grid keys look like `algorithm.parameter`"))
        })?;
        let algo: Algorithm = algo
            .parse()
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        let values = parse_list::<f64>(&value)
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        let grid = grids.entry(algo).or_insert_with(|| ParamGrid::new(algo));
        grid.axes.insert(param.replace('-', "_"), values);
    }
    Ok(grids.into_values().collect())
}

pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String> {
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    items
        .into_iter()
        .map(|s| s.parse().map_err(|_| format!("cannot parse `{s}`")))
        .collect()
}

/// `0,3,7` or a half-open range `0..10`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        if hi <= lo {
            return Err(format!("empty seed range `{text}`"));
        }
        return Ok((lo..hi).collect());
    }
    parse_list(text)
}

/// Everything a run needs, with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub command: Command,
    /// Single optimizer for `train` and `replay`.
    pub optimizer: Option<OptimizerConfig>,
    /// Per-algorithm grids for `compare` and `minsize`.
    pub grids: Vec<ParamGrid>,
    pub hidden: usize,
    pub sizes: Vec<usize>,
    pub start_size: usize,
    pub size_step: usize,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub replay_seed_offset: u64,
}

impl Settings {
    pub fn resolve(
        command: Command,
        raw: &RawConfig,
        grid_file: Option<Vec<ParamGrid>>,
    ) -> Result<Self, CliError> {
        let get = |key: &str| raw.get(key);
        fn bad(key: &str, e: &Entry, msg: impl fmt::Display) -> CliError {
            CliError::Config(format!("invalid value for {key} ({}): {msg}", e.origin))
        }
        fn num<T: std::str::FromStr>(raw: &RawConfig, key: &str, default: T) -> Result<T, CliError> {
            match raw.get(key) {
                None => Ok(default),
                Some(e) => e
                    .value
                    .parse()
                    .map_err(|_| bad(key, e, format!("cannot parse `{}`", e.value))),
            }
        }

        let defaults = Protocol::default();
        let protocol = Protocol {
            batch_size: num(raw, "batch", defaults.batch_size)?,
            accuracy_threshold: num(raw, "threshold", defaults.accuracy_threshold)?,
            max_epochs: num(raw, "max_epochs", defaults.max_epochs)?,
            eval_interval: num(raw, "eval_interval", defaults.eval_interval)?,
        };
        if let Err(e) = protocol.validate() {
            let key = if !(0.0..=1.0).contains(&protocol.accuracy_threshold) {
                "threshold"
            } else if protocol.batch_size == 0 {
                "batch"
            } else if protocol.eval_interval == 0 {
                "eval_interval"
            } else {
                "max_epochs"
            };
            return Err(CliError::Config(format!("invalid value for {key}: {e}")));
        }

        let default_seeds: Vec<u64> = match command {
            Command::Train => vec![0],
            _ => (0..10).collect(),
        };
        let seeds = match get("seeds") {
            None => default_seeds,
            Some(e) => parse_seeds(&e.value).map_err(|m| bad("seeds", e, m))?,
        };
        if command == Command::Train && seeds.len() != 1 {
            return Err(CliError::Config("train runs exactly one seed".into()));
        }
        let workers = num(raw, "workers", 1usize)?;
        if workers == 0 {
            return Err(CliError::Config("invalid value for workers: must be at least 1".into()));
        }
        let hidden = num(raw, "hidden", 100usize)?;
        if hidden == 0 {
            return Err(CliError::Config("invalid value for hidden: must be at least 1".into()));
        }
        let sizes = match get("sizes") {
            None => vec![hidden],
            Some(e) => parse_list::<usize>(&e.value).map_err(|m| bad("sizes", e, m))?,
        };
        if sizes.contains(&0) {
            return Err(CliError::Config("invalid value for sizes: sizes must be positive".into()));
        }
        let start_size = num(raw, "start_size", 50usize)?;
        let size_step = num(raw, "size_step", 5usize)?;
        if start_size == 0 || size_step == 0 {
            return Err(CliError::Config(
                "invalid value for start_size/size_step: must be at least 1".into(),
            ));
        }
        let replay_seed_offset = num(raw, "replay_seed_offset", DEFAULT_REPLAY_SEED_OFFSET)?;

        let mut opt_params: BTreeMap<String, f64> = BTreeMap::new();
        for (key, e) in raw.iter().filter(|(k, _)| is_optimizer_key(k)) {
            let v: f64 = e
                .value
                .parse()
                .map_err(|_| bad(key, e, format!("cannot parse `{}`", e.value)))?;
            opt_params.insert(key.clone(), v);
        }

        let (optimizer, grids) = match command {
            Command::Train | Command::Replay => {
                let default_algo = if command == Command::Replay { "dlr-pre" } else { "sgd" };
                let algo_entry = get("algo");
                let algo: Algorithm = algo_entry
                    .map_or(default_algo, |e| e.value.as_str())
                    .parse()
                    .map_err(|e| CliError::Config(format!("invalid value for algo: {e}")))?;
                if command == Command::Replay && !algo.is_dlr() {
                    return Err(CliError::Config(format!(
                        "invalid value for algo: replay needs dlr-pre or dlr-post, got {algo}"
                    )));
                }
                let cfg = OptimizerConfig::from_params(algo, &opt_params)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                (Some(cfg), Vec::new())
            }
            Command::Compare | Command::Minsize => {
                let algos: Vec<Algorithm> = match get("algos").or(get("algo")) {
                    None => vec![
                        Algorithm::Sgd,
                        Algorithm::Nesterov,
                        Algorithm::Adam,
                        Algorithm::DlrPre,
                    ],
                    Some(e) => parse_list::<String>(&e.value)
                        .map_err(|m| bad("algos", e, m))?
                        .iter()
                        .map(|s| s.parse::<Algorithm>())
                        .collect::<Result<_, _>>()
                        .map_err(|m| bad("algos", e, m))?,
                };
                if algos.contains(&Algorithm::Scheduled) {
                    return Err(CliError::Config(
                        "invalid value for algos: scheduled runs only inside replay".into(),
                    ));
                }
                let from_file = grid_file.unwrap_or_default();
                let mut grids = Vec::new();
                for algo in algos {
                    let mut grid = from_file
                        .iter()
                        .find(|g| g.algorithm == algo)
                        .cloned()
                        .unwrap_or_else(|| ParamGrid::default_for(algo));
                    for (k, &v) in &opt_params {
                        if algo.param_keys().contains(&k.as_str()) {
                            grid.axes.insert(k.clone(), vec![v]);
                        }
                    }
                    grid.points()
                        .map_err(|e| CliError::Config(format!("grid for {algo}: {e}")))?;
                    if grids.iter().any(|g: &ParamGrid| g.algorithm == algo) {
                        return Err(CliError::Config(format!("algorithm {algo} listed twice")));
                    }
                    grids.push(grid);
                }
                (None, grids)
            }
        };

        Ok(Settings {
            command,
            optimizer,
            grids,
            hidden,
            sizes,
            start_size,
            size_step,
            protocol,
            seeds,
            workers,
            replay_seed_offset,
        })
    }
}

/// Data directory: explicit setting, then `DLRLAB_DATA_DIR`.
pub fn resolve_data_dir(raw: &RawConfig) -> Result<PathBuf, CliError> {
    if let Some(e) = raw.get("data_dir") {
        return Ok(PathBuf::from(&e.value));
    }
    match std::env::var_os("DLRLAB_DATA_DIR") {
        Some(dir) if !dir.is_empty() => Ok(PathBuf::from(dir)),
        _ => Err(CliError::Config(
            "no data directory: pass --data-dir or set DLRLAB_DATA_DIR".into(),
        )),
    }
}
