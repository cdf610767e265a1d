//! Basic coupling of a reference chain with a shorter chain living on a prefix
//! of its sites, and first-passage statistics of their discrepancies.
//!
//! Both chains are left-anchored: site `x` means the same site in each. A move
//! is identified by what it does (flip at site 1, swap at bond `b`, flip at the
//! last site). When a move exists in both chains with the same spins on the
//! sites it touches and the same rate, it fires in both at once; otherwise
//! each chain runs it on its own clock.

use serde::{Deserialize, Serialize};

use crate::dynamics::{replica_initial, run_replicas, Chain, Event, InitialData};
use crate::error::{AsepError, Result};
use crate::lattice::{BoundaryRates, Geometry, SpinConfiguration, SystemParams};
use crate::rng::{open_unit, replica_rng, replica_substream, ReplicaRng};
use crate::stats::{self, ks_two_sample, wilson_interval};
use crate::sumtree::SumTree;

use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Move {
    LeftFlip,
    Bond(usize),
    RightFlip,
}

fn move_at(len: usize, slot: usize) -> Option<Move> {
    match slot {
        0 => Some(Move::LeftFlip),
        s if s < len => Some(Move::Bond(s)),
        s if s == len => Some(Move::RightFlip),
        _ => None,
    }
}

/// Which chains a coupled move acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Joint,
    ReferenceOnly,
    LocalOnly,
}

impl Channel {
    fn from_leaf(leaf: usize) -> Self {
        match leaf % 3 {
            0 => Self::Joint,
            1 => Self::ReferenceOnly,
            _ => Self::LocalOnly,
        }
    }
}

/// Outcome of one coupled jump.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledEvent {
    pub time: f64,
    pub channel: Channel,
    pub reference: Option<Event>,
    pub local: Option<Event>,
    /// Sites that became discrepancies in this jump.
    pub births: Vec<usize>,
    /// Births not within the rate-dependence radius of an earlier discrepancy
    /// or of the local chain's right end.
    pub nonlocal_births: usize,
}

/// A reference chain and a chain on its first `L_local` sites, run under the
/// basic coupling.
#[derive(Clone, Debug)]
pub struct CoupledState {
    reference: Chain,
    local: Chain,
    tree: SumTree,
    discrepant: Vec<bool>,
    count: usize,
    radius: usize,
    first_site: Option<usize>,
    nonlocal_births: u64,
}

impl CoupledState {
    /// Couple `reference` with `local`. The local chain must not be longer;
    /// both must share `N` and the left reservoir rates.
    pub fn new(reference: Chain, local: Chain) -> Result<Self> {
        let (pr, pl) = (reference.params(), local.params());
        if local.len() > reference.len() {
            return Err(AsepError::InvalidParameter(format!(
                "local chain ({} sites) is longer than the reference ({} sites)",
                local.len(),
                reference.len()
            )));
        }
        if pr.n != pl.n {
            return Err(AsepError::InvalidParameter("coupled chains need the same N".into()));
        }
        let radius = pr
            .rates
            .left_window()
            .max(pr.rates.right_window())
            .max(pl.rates.left_window())
            .max(pl.rates.right_window())
            .max(1);
        let slots = reference.len() + 1;
        let mut state = Self {
            tree: SumTree::new(&vec![0.0; 3 * slots]),
            discrepant: vec![false; local.len()],
            count: 0,
            radius,
            first_site: None,
            nonlocal_births: 0,
            reference,
            local,
        };
        for slot in 0..slots {
            state.refresh_slot(slot);
        }
        for x in 1..=state.local.len() {
            if state.reference.eta()[x - 1] != state.local.eta()[x - 1] {
                state.discrepant[x - 1] = true;
                state.count += 1;
                state.first_site = Some(state.first_site.map_or(x, |f: usize| f.min(x)));
            }
        }
        Ok(state)
    }

    /// Reference chain with initial data `initial` and the local chain started
    /// from its restriction.
    pub fn from_prefix(reference: SystemParams, local: SystemParams, initial: &SpinConfiguration) -> Result<Self> {
        let len = local.sites();
        let prefix = initial.window(1, len.min(initial.len()));
        Self::new(Chain::new(reference, initial)?, Chain::new(local, &prefix)?)
    }

    #[must_use]
    pub fn reference(&self) -> &Chain {
        &self.reference
    }

    #[must_use]
    pub fn local(&self) -> &Chain {
        &self.local
    }

    #[must_use]
    pub fn time(&self) -> f64 {
        self.reference.time()
    }

    /// Current discrepancies, in increasing order.
    #[must_use]
    pub fn discrepancies(&self) -> Vec<usize> {
        (1..=self.discrepant.len()).filter(|&x| self.discrepant[x - 1]).collect()
    }

    #[must_use]
    pub fn discrepancy_count(&self) -> usize {
        self.count
    }

    /// Sites where the two configurations differ, computed from scratch.
    #[must_use]
    pub fn recomputed_discrepancies(&self) -> Vec<usize> {
        let (a, b) = (self.reference.eta(), self.local.eta());
        (1..=self.local.len()).filter(|&x| a[x - 1] != b[x - 1]).collect()
    }

    /// Smallest site that has ever been a discrepancy.
    #[must_use]
    pub fn first_site_reached(&self) -> Option<usize> {
        self.first_site
    }

    #[must_use]
    pub fn nonlocal_births(&self) -> u64 {
        self.nonlocal_births
    }

    #[must_use]
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Total rate of all coupled moves.
    #[must_use]
    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// `(joint, reference-only, local-only)` rates of slot `slot`.
    #[must_use]
    pub fn slot_rates(&self, slot: usize) -> (f64, f64, f64) {
        (self.tree.get(3 * slot), self.tree.get(3 * slot + 1), self.tree.get(3 * slot + 2))
    }

    fn refresh_slot(&mut self, slot: usize) {
        let (lr, ll) = (self.reference.len(), self.local.len());
        let rr = if slot <= lr { self.reference.table().rate(slot) } else { 0.0 };
        let rl = if slot <= ll { self.local.table().rate(slot) } else { 0.0 };
        let joint = match (move_at(lr, slot), move_at(ll, slot)) {
            (Some(m), Some(k)) if m == k && rr == rl && rr > 0.0 => {
                let (a, b) = (self.reference.eta(), self.local.eta());
                let same = match m {
                    Move::LeftFlip => a[0] == b[0],
                    Move::Bond(s) => a[s - 1] == b[s - 1] && a[s] == b[s],
                    Move::RightFlip => a[lr - 1] == b[ll - 1],
                };
                if same {
                    rr
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        self.tree.set(3 * slot, joint);
        self.tree.set(3 * slot + 1, rr - joint);
        self.tree.set(3 * slot + 2, rl - joint);
    }

    fn refresh_after(&mut self, sites: &[usize]) {
        let (lr, ll) = (self.reference.len(), self.local.len());
        let mut slots = vec![0, ll, lr];
        for &x in sites {
            slots.extend([x.saturating_sub(1), x, x + 1]);
        }
        slots.sort_unstable();
        slots.dedup();
        for s in slots.into_iter().filter(|&s| s <= lr) {
            self.refresh_slot(s);
        }
    }

    /// Apply coupled leaf `leaf` at `time`.
    fn fire(&mut self, leaf: usize, time: f64) -> CoupledEvent {
        let slot = leaf / 3;
        let channel = Channel::from_leaf(leaf);
        let mut touched = Vec::with_capacity(4);
        let record = |e: &Event, touched: &mut Vec<usize>| {
            let (a, b) = e.changed_sites();
            touched.push(a);
            if let Some(b) = b {
                touched.push(b);
            }
        };
        let reference = matches!(channel, Channel::Joint | Channel::ReferenceOnly).then(|| {
            let e = self.reference.apply(slot, time);
            record(&e, &mut touched);
            e
        });
        let local = matches!(channel, Channel::Joint | Channel::LocalOnly).then(|| {
            let e = self.local.apply(slot, time);
            record(&e, &mut touched);
            e
        });
        self.reference.wait_until(time);
        self.local.wait_until(time);
        touched.sort_unstable();
        touched.dedup();

        let before: Vec<usize> = if touched.iter().any(|&x| x <= self.local.len()) {
            self.discrepancies()
        } else {
            Vec::new()
        };
        let mut births = Vec::new();
        let mut nonlocal = 0;
        let ll = self.local.len();
        for &x in touched.iter().filter(|&&x| x <= ll) {
            let now = self.reference.eta()[x - 1] != self.local.eta()[x - 1];
            let was = self.discrepant[x - 1];
            if now == was {
                continue;
            }
            self.discrepant[x - 1] = now;
            if now {
                self.count += 1;
                births.push(x);
                self.first_site = Some(self.first_site.map_or(x, |f| f.min(x)));
                let near_old = before.iter().any(|&d| d.abs_diff(x) <= self.radius);
                let near_edge = ll.abs_diff(x) <= self.radius;
                if !near_old && !near_edge {
                    nonlocal += 1;
                }
            } else {
                self.count -= 1;
            }
        }
        self.nonlocal_births += nonlocal as u64;
        self.refresh_after(&touched);
        CoupledEvent {
            time,
            channel,
            reference,
            local,
            births,
            nonlocal_births: nonlocal,
        }
    }

    /// Draw and apply the next coupled jump if it happens before `horizon`;
    /// otherwise move both clocks to `horizon` and return `None`.
    pub fn coupled_step<R: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut R) -> Option<CoupledEvent> {
        let total = self.tree.total();
        let dt = if total > 0.0 {
            -open_unit(rng).ln() / total
        } else {
            f64::INFINITY
        };
        let t_next = self.time() + dt;
        if t_next > horizon {
            self.reference.wait_until(horizon.max(self.time()));
            self.local.wait_until(horizon.max(self.time()));
            return None;
        }
        let leaf = self.tree.search(rng.gen::<f64>() * total);
        Some(self.fire(leaf, t_next))
    }

    /// Run to `horizon`, stopping early once a discrepancy has been seen at a
    /// site `<= target`. Returns whether that happened.
    pub fn run_until_passage<R: Rng + ?Sized>(&mut self, horizon: f64, target: usize, rng: &mut R) -> bool {
        if self.first_site.is_some_and(|f| f <= target) {
            return true;
        }
        while let Some(ev) = self.coupled_step(horizon, rng) {
            if ev.births.iter().any(|&x| x <= target) {
                return true;
            }
        }
        false
    }
}

/// First-passage estimate for one setting. `kappa_or_l` is the fattening
/// exponent (localization) or the short truncation length (cutoff);
/// `tau_or_horizon` the time window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageRow {
    pub n: usize,
    pub kappa_or_l: f64,
    pub tau_or_horizon: f64,
    pub hits: usize,
    pub replicas: usize,
    pub p_hat: f64,
    pub wilson_upper: f64,
}

impl PassageRow {
    fn new(n: usize, kappa_or_l: f64, tau_or_horizon: f64, hits: usize, replicas: usize) -> Self {
        let p_hat = if replicas == 0 { 0.0 } else { hits as f64 / replicas as f64 };
        let wilson_upper = if replicas == 0 {
            1.0
        } else {
            wilson_interval(hits, replicas, stats::Z95).1
        };
        Self {
            n,
            kappa_or_l,
            tau_or_horizon,
            hits,
            replicas,
            p_hat,
            wilson_upper,
        }
    }
}

/// Write rows with columns `N,kappa_or_L,tau_or_horizon,p_hat,replicas,wilson_upper`.
pub fn write_passage_csv<W: std::io::Write>(mut w: W, rows: &[PassageRow]) -> Result<()> {
    writeln!(w, "N,kappa_or_L,tau_or_horizon,p_hat,replicas,wilson_upper")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{},{:e}",
            r.n, r.kappa_or_l, r.tau_or_horizon, r.p_hat, r.replicas, r.wilson_upper
        )?;
    }
    Ok(())
}

/// Replicas run per batch when early stopping is enabled; fixed so the
/// result does not depend on the thread count.
const PASSAGE_BATCH: usize = 16;

#[allow(clippy::too_many_arguments)]
fn passage_count(
    reference: &SystemParams,
    local: &SystemParams,
    initial: &InitialData,
    horizon: f64,
    target: usize,
    replicas: usize,
    seed: u64,
    stop_after_hits: Option<usize>,
) -> Result<(usize, usize)> {
    let len = reference.sites();
    let run = |r: u64, rng: &mut ReplicaRng| -> Result<bool> {
        let eta = replica_initial(initial, len, seed, r)?;
        let mut state = CoupledState::from_prefix(reference.clone(), local.clone(), &eta)?;
        Ok(state.run_until_passage(horizon, target, rng))
    };
    let Some(stop) = stop_after_hits else {
        let hits = run_replicas(seed, replicas, run)
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|&h| h)
            .count();
        return Ok((hits, replicas));
    };
    let (mut hits, mut done) = (0, 0);
    while done < replicas && hits < stop {
        let batch = PASSAGE_BATCH.min(replicas - done);
        let start = done as u64;
        let results: Vec<Result<bool>> = {
            use rayon::prelude::*;
            (start..start + batch as u64)
                .into_par_iter()
                .map(|r| run(r, &mut replica_rng(seed, r)))
                .collect()
        };
        for h in results {
            hits += usize::from(h?);
        }
        done += batch;
    }
    Ok((hits, done))
}

/// Localization setting: the reference chain against the localized chain on
/// `[1, window + ceil(N^kappa)]` with only the left reservoir.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConfig {
    pub n: usize,
    pub rates: BoundaryRates,
    /// Geometry of the reference chain.
    pub geometry: Geometry,
    /// Right end of the target window; `None` uses the left rate window.
    pub window: Option<usize>,
    pub kappa: f64,
    pub tau: f64,
    pub initial: InitialData,
    pub replicas: usize,
    pub seed: u64,
    pub stop_after_hits: Option<usize>,
}

impl LocalizationConfig {
    #[must_use]
    pub fn target(&self) -> usize {
        self.window.unwrap_or_else(|| self.rates.left_window().max(1))
    }

    /// `|window + ceil(N^kappa)|`.
    #[must_use]
    pub fn fat_len(&self) -> usize {
        self.target() + (self.n as f64).powf(self.kappa).ceil() as usize
    }
}

/// Probability that a discrepancy between the reference chain and the
/// localized chain reaches the target window by `tau`.
pub fn localization_experiment(cfg: &LocalizationConfig) -> Result<PassageRow> {
    let reference = SystemParams::new(cfg.n, cfg.geometry, cfg.rates.clone())?;
    let fat = cfg.fat_len();
    if fat > reference.sites() {
        return Err(AsepError::InvalidParameter(format!(
            "fattened window of {fat} sites exceeds the {} reference sites",
            reference.sites()
        )));
    }
    let local = SystemParams::new(cfg.n, Geometry::LeftWindow { len: fat }, cfg.rates.clone())?;
    let (hits, done) = passage_count(
        &reference,
        &local,
        &cfg.initial,
        cfg.tau,
        cfg.target(),
        cfg.replicas,
        cfg.seed,
        cfg.stop_after_hits,
    )?;
    Ok(PassageRow::new(cfg.n, cfg.kappa, cfg.tau, hits, done))
}

/// Half-space truncated at `l_short` against the longer truncation `l_long`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffConfig {
    pub n: usize,
    pub rates: BoundaryRates,
    pub l_short: usize,
    pub l_long: usize,
    /// Observation window `1..=window`; `None` uses `N`.
    pub window: Option<usize>,
    pub horizon: f64,
    pub initial: InitialData,
    pub replicas: usize,
    pub seed: u64,
    /// Stop once this many replicas have a passage (checked between fixed
    /// batches of replicas).
    pub stop_after_hits: Option<usize>,
}

/// Probability that the two truncations differ somewhere in the observation
/// window by the horizon.
pub fn cutoff_experiment(cfg: &CutoffConfig) -> Result<PassageRow> {
    if cfg.l_short > cfg.l_long {
        return Err(AsepError::InvalidParameter("l_short must not exceed l_long".into()));
    }
    let reference = SystemParams::new(cfg.n, Geometry::HalfSpace { l_trunc: cfg.l_long }, cfg.rates.clone())?;
    let local = SystemParams::new(cfg.n, Geometry::HalfSpace { l_trunc: cfg.l_short }, cfg.rates.clone())?;
    let (hits, done) = passage_count(
        &reference,
        &local,
        &cfg.initial,
        cfg.horizon,
        cfg.window.unwrap_or(cfg.n),
        cfg.replicas,
        cfg.seed,
        cfg.stop_after_hits,
    )?;
    Ok(PassageRow::new(cfg.n, cfg.l_short as f64, cfg.horizon, hits, done))
}

/// Two independently simulated half-space truncations compared through the
/// law of `Z` at one site and time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub n: usize,
    pub rates: BoundaryRates,
    pub l_short: usize,
    pub l_long: usize,
    pub site: usize,
    pub horizon: f64,
    pub initial: InitialData,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub mean_short: f64,
    pub mean_long: f64,
    pub replicas: usize,
}

/// Two-sample KS comparison of `Z_{horizon, site}` under the two truncations.
pub fn truncation_invariance(cfg: &TruncationConfig) -> Result<TruncationReport> {
    if cfg.site > cfg.l_short.min(cfg.l_long) {
        return Err(AsepError::InvalidParameter("observation site beyond the truncation".into()));
    }
    let sample = |l_trunc: usize, purpose: u64| -> Result<Vec<f64>> {
        let params = SystemParams::new(cfg.n, Geometry::HalfSpace { l_trunc }, cfg.rates.clone())?;
        run_replicas(cfg.seed ^ purpose, cfg.replicas, |r, rng| -> Result<f64> {
            let mut init_rng = replica_substream(cfg.seed, r, purpose);
            let eta = cfg.initial.realize(l_trunc, &mut init_rng)?;
            let mut chain = Chain::new(params.clone(), &eta)?;
            chain.advance_to(cfg.horizon, rng, &mut ());
            Ok(chain.log_z(cfg.site).exp())
        })
        .into_iter()
        .collect()
    };
    let short = sample(cfg.l_short, 2)?;
    let long = sample(cfg.l_long, 3)?;
    let (d, p) = ks_two_sample(&short, &long);
    Ok(TruncationReport {
        ks_statistic: d,
        p_value: p,
        mean_short: stats::mean(&short),
        mean_long: stats::mean(&long),
        replicas: cfg.replicas,
    })
}
