//! `asep-lab`: run one experiment described by a JSON config and write its
//! artifacts plus a `manifest.json` into an output directory.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use config::{ExperimentConfig, Kind};
use output::RunOutput;

#[derive(Parser, Debug)]
#[command(name = "asep-lab", version, about = "Open ASEP height-function experiments")]
struct Cli {
    /// Experiment to run; overrides `kind` in the config file.
    #[arg(value_enum)]
    kind: Option<Kind>,
    /// JSON experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to `$ASEP_LAB_OUT/<kind>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "ASEP_LAB_OUT", default_value = "runs")]
    out_root: PathBuf,
    /// Skip gnuplot scripts.
    #[arg(long)]
    no_plots: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cli.kind {
        cfg.kind = Some(k);
    }
    if cfg.kind.is_none() {
        anyhow::bail!("no experiment kind: pass it on the command line or set field `kind`");
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.out.is_some() {
        cfg.out.clone_from(&cli.out);
    }
    if cli.no_plots {
        cfg.plots = false;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<PathBuf> {
    let cfg = load(cli)?;
    let kind = cfg.kind.expect("checked in load");
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| cli.out_root.join(format!("{}-seed{}", kind.name(), cfg.seed)));
    let mut out = RunOutput::create(&dir, cfg.plots)?;
    run::dispatch(&cfg, &mut out)?;
    out.finish(kind.name(), &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
