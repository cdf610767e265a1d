use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asep_core::dynamics::InitialData;
use asep_core::lattice::{Anchor, BoundaryRates, Geometry, LocalFunction, SystemParams};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    MeanProfile,
    Martingale,
    Rterms,
    KernelBounds,
    SheCompare,
    Kv,
    Semigroup,
    Entropy,
    OneBlock,
    Localization,
    Cutoff,
    BoundaryParams,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::MeanProfile => "mean-profile",
            Kind::Martingale => "martingale",
            Kind::Rterms => "rterms",
            Kind::KernelBounds => "kernel-bounds",
            Kind::SheCompare => "she-compare",
            Kind::Kv => "kv",
            Kind::Semigroup => "semigroup",
            Kind::Entropy => "entropy",
            Kind::OneBlock => "one-block",
            Kind::Localization => "localization",
            Kind::Cutoff => "cutoff",
            Kind::BoundaryParams => "boundary-params",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    Interval,
    HalfSpace,
    LeftWindow,
    RightWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Flat,
    Product,
    Given,
}

/// A boundary rate: a constant or a full table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
    Table(LocalFunction),
}

impl RateSpec {
    fn resolve(&self, anchor: Anchor, name: &str) -> Result<LocalFunction> {
        match self {
            RateSpec::Constant(c) => Ok(LocalFunction::constant(*c, anchor)),
            RateSpec::Table(t) => {
                if t.anchor() != anchor {
                    bail!("field `{name}`: table must be anchored {anchor:?}");
                }
                Ok(t.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KvMode {
    Exact,
    Mc,
    Both,
}

/// Observable for the KV experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observable {
    Named(NamedObservable),
    Table(LocalFunction),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedObservable {
    FLeft,
    SpinPair,
}

fn default_n() -> usize {
    32
}
fn default_horizon() -> f64 {
    1.0
}
fn default_observations() -> usize {
    10
}
fn default_replicas() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_sites() -> usize {
    8
}
fn default_rho() -> f64 {
    0.2
}
fn default_kappa() -> Vec<f64> {
    vec![0.5]
}
fn default_block() -> usize {
    4
}
fn default_ell() -> usize {
    8
}
fn default_samples() -> usize {
    2000
}
fn default_dt() -> f64 {
    1e-4
}

/// Flat experiment description. Every field except `kind` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub geometry: Option<GeometryKind>,
    #[serde(default)]
    pub l_trunc: Option<usize>,
    #[serde(default)]
    pub window_len: Option<usize>,
    #[serde(default)]
    pub alpha: Option<RateSpec>,
    #[serde(default)]
    pub gamma: Option<RateSpec>,
    #[serde(default)]
    pub delta: Option<RateSpec>,
    #[serde(default)]
    pub beta: Option<RateSpec>,
    #[serde(default)]
    pub initial: Option<InitialKind>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub spins: Option<Vec<i8>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_observations")]
    pub observations: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// First replica index; replicas `first_replica..first_replica + replicas` run.
    #[serde(default)]
    pub first_replica: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub plots: bool,
    #[serde(default)]
    pub record_events: bool,
    #[serde(default)]
    pub variant: usize,
    // kernel-bounds
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub spatial_ratios: Option<Vec<f64>>,
    #[serde(default)]
    pub temporal_ratios: Option<Vec<f64>>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    // she-compare
    #[serde(default = "default_dt")]
    pub dt: f64,
    // kv / semigroup
    #[serde(default = "default_sites")]
    pub sites: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub kv_mode: Option<KvMode>,
    #[serde(default)]
    pub observable: Option<Observable>,
    // one-block
    #[serde(default)]
    pub function: Option<LocalFunction>,
    #[serde(default = "default_block")]
    pub block: usize,
    #[serde(default = "default_ell")]
    pub ell: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    // localization / cutoff
    #[serde(default = "default_kappa")]
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub l_short: Option<usize>,
    #[serde(default)]
    pub l_long: Option<usize>,
    #[serde(default)]
    pub stop_after_hits: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("invalid config at line {}, column {}: {e}", e.line(), e.column())
        })?;
        Ok(cfg)
    }

    pub fn rates(&self) -> Result<BoundaryRates> {
        let get = |spec: &Option<RateSpec>, anchor, name| -> Result<LocalFunction> {
            match spec {
                None => Ok(LocalFunction::zero(anchor)),
                Some(s) => s.resolve(anchor, name),
            }
        };
        let mut r = BoundaryRates::zero();
        r.alpha = get(&self.alpha, Anchor::Left, "alpha")?;
        r.gamma = get(&self.gamma, Anchor::Left, "gamma")?;
        r.delta = get(&self.delta, Anchor::Right, "delta")?;
        r.beta = get(&self.beta, Anchor::Right, "beta")?;
        r.validate_anchors().context("field `alpha`/`gamma`/`delta`/`beta`")?;
        Ok(r)
    }

    pub fn geometry_for(&self, n: usize) -> Result<Geometry> {
        Ok(match self.geometry.unwrap_or(GeometryKind::Interval) {
            GeometryKind::Interval => Geometry::Interval,
            GeometryKind::HalfSpace => Geometry::HalfSpace {
                l_trunc: self.l_trunc.unwrap_or(4 * n),
            },
            GeometryKind::LeftWindow => Geometry::LeftWindow {
                len: self.window_len.context("field `window_len` is required for a left window")?,
            },
            GeometryKind::RightWindow => Geometry::RightWindow {
                len: self.window_len.context("field `window_len` is required for a right window")?,
            },
        })
    }

    pub fn params_for(&self, n: usize) -> Result<SystemParams> {
        SystemParams::new(n, self.geometry_for(n)?, self.rates()?).context("field `n`/`geometry`/rates")
    }

    pub fn params(&self) -> Result<SystemParams> {
        self.params_for(self.n)
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        Ok(match self.initial.unwrap_or(InitialKind::Flat) {
            InitialKind::Flat => InitialData::Flat,
            InitialKind::Product => InitialData::Product { sigma: self.sigma },
            InitialKind::Given => InitialData::Given {
                spins: self.spins.clone().context("field `spins` is required for given initial data")?,
            },
        })
    }

    pub fn n_grid(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| vec![self.n])
    }

    /// Uniform observation grid `horizon * k / observations`, `k = 1..=observations`.
    pub fn observation_times(&self) -> Vec<f64> {
        (1..=self.observations)
            .map(|k| self.horizon * k as f64 / self.observations as f64)
            .collect()
    }
}
