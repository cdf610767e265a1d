use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Output directory of one run and the artifacts written into it.
pub struct RunOutput {
    pub dir: PathBuf,
    plots: bool,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'static str,
    version: &'static str,
    seed: u64,
    threads: Option<usize>,
    replica_stream: &'static str,
    config: &'a ExperimentConfig,
    artifacts: &'a [String],
}

impl RunOutput {
    pub fn create(dir: &Path, plots: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            plots,
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Open `name` for writing and record it as an artifact.
    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Gnuplot script `name` plotting columns of `csv`.
    pub fn plot(&mut self, name: &str, csv: &str, body: &str) -> Result<()> {
        if !self.plots {
            return Ok(());
        }
        let mut w = self.writer(name)?;
        writeln!(w, "set datafile separator ','")?;
        writeln!(w, "set key autotitle columnhead")?;
        writeln!(w, "data = '{csv}'")?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn record(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    pub fn finish(mut self, kind: &'static str, cfg: &ExperimentConfig) -> Result<PathBuf> {
        self.artifacts.sort();
        self.artifacts.dedup();
        let manifest = Manifest {
            kind,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            threads: cfg.threads,
            replica_stream: "ChaCha8 seeded from the master seed, stream = replica index",
            config: cfg,
            artifacts: &self.artifacts,
        };
        let path = self.path("manifest.json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(self.dir)
    }
}
