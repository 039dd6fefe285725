use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlrlab::commands::{execute, RunManifest};
use dlrlab::config::{
    load_config_file, load_grid_file, resolve_data_dir, Command, Entry, RawConfig, Settings,
};
use dlrlab::{CliError, EXIT_USAGE};
use dlrlab_core::data::MnistPaths;

/// Training-speed experiments for small MNIST networks.
#[derive(Parser)]
#[command(name = "dlrlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one network to the accuracy threshold.
    Train(RunArgs),
    /// Compare optimizers' best epochs-to-threshold across hidden sizes.
    Compare(RunArgs),
    /// Shrink the hidden layer until training stops reaching the threshold.
    Minsize(RunArgs),
    /// Train with DLR, fit its mean rates, and retrain with the fitted schedules.
    Replay(RunArgs),
    /// Run again from a manifest written by an earlier run.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter grid file with lines like `sgd.eta = 0.3, 1, 3`.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "dlrlab-out")]
    out: PathBuf,
    /// Directory holding the four MNIST IDX files [env: DLRLAB_DATA_DIR].
    #[arg(long)]
    data_dir: Option<String>,

    #[arg(long)]
    algo: Option<String>,
    /// Comma-separated algorithms for compare and minsize.
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    /// Minibatch updates between test evaluations.
    #[arg(long)]
    eval_interval: Option<String>,
    /// Seed list `0,1,2` or half-open range `0..10`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Hidden sizes for compare, e.g. `30,100,300`.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    start_size: Option<String>,
    #[arg(long)]
    size_step: Option<String>,
    #[arg(long)]
    replay_seed_offset: Option<String>,

    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    adam_alpha: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    eta0: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 22] {
        [
            ("data_dir", &self.data_dir),
            ("algo", &self.algo),
            ("algos", &self.algos),
            ("hidden", &self.hidden),
            ("batch", &self.batch),
            ("threshold", &self.threshold),
            ("max_epochs", &self.max_epochs),
            ("eval_interval", &self.eval_interval),
            ("seeds", &self.seeds),
            ("workers", &self.workers),
            ("sizes", &self.sizes),
            ("start_size", &self.start_size),
            ("size_step", &self.size_step),
            ("replay_seed_offset", &self.replay_seed_offset),
            ("eta", &self.eta),
            ("mu", &self.mu),
            ("adam_alpha", &self.adam_alpha),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("epsilon", &self.epsilon),
            ("eta0", &self.eta0),
            ("alpha", &self.alpha),
        ]
    }

    fn manifest(&self, command: Command) -> Result<RunManifest, CliError> {
        let mut raw = match &self.config {
            Some(path) => load_config_file(path)?,
            None => RawConfig::new(),
        };
        for (key, value) in self.overrides() {
            if let Some(value) = value {
                raw.insert(
                    key.to_owned(),
                    Entry {
                        value: value.clone(),
                        origin: format!("--{}", key.replace('_', "-")),
                    },
                );
            }
        }
        let grids = self.grid.as_deref().map(load_grid_file).transpose()?;
        let settings = Settings::resolve(command, &raw, grids)?;
        let data_dir = resolve_data_dir(&raw)?;
        let data_dir = data_dir.canonicalize().unwrap_or(data_dir);
        Ok(RunManifest::new(
            settings,
            MnistPaths::in_dir(data_dir),
            self.out.clone(),
            self.config.clone(),
            self.grid.clone(),
        ))
    }
}

#[derive(Args)]
struct RerunArgs {
    /// manifest.json from an earlier run.
    manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let manifest = match cli.command {
        Cmd::Train(a) => a.manifest(Command::Train)?,
        Cmd::Compare(a) => a.manifest(Command::Compare)?,
        Cmd::Minsize(a) => a.manifest(Command::Minsize)?,
        Cmd::Replay(a) => a.manifest(Command::Replay)?,
        Cmd::Rerun(a) => {
            let mut m = RunManifest::read(&a.manifest)?;
            if let Some(out) = a.out {
                m.out_dir = out;
            }
            if let Some(w) = a.workers {
                if w == 0 {
                    return Err(CliError::Config("invalid value for workers: must be at least 1".into()));
                }
                m.settings.workers = w;
            }
            m
        }
    };
    execute(&manifest)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
