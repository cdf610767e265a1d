//! Continuous-time simulation of the open exclusion process and its
//! Gärtner-transformed height field.
//!
//! Heights are stored as integers `H_x = sqrt(N) h_x`, so that
//! `Z_x = exp(-H_x / sqrt(N) + nu t)`. Every event changes exactly one `H_x`:
//! a swap at bond `(x, x+1)` moves `H_x` by two, a flip at site 1 moves `H_0`
//! and a flip at site `L` moves `H_L`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AsepError, Result};
use crate::lattice::{
    left_drift_ratio, right_drift_ratio, Geometry, ProductMeasure, SpinConfiguration, SystemParams,
};
use crate::rng::{open_unit, replica_rng, replica_substream, ReplicaRng};
use crate::sumtree::SumTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u32)]
pub enum EventKind {
    /// `(+,-) -> (-,+)` at bond `(site, site+1)`.
    SwapRight = 0,
    /// `(-,+) -> (+,-)` at bond `(site, site+1)`.
    SwapLeft = 1,
    /// `-1 -> +1` at site 1.
    LeftCreate = 2,
    /// `+1 -> -1` at site 1.
    LeftRemove = 3,
    /// `-1 -> +1` at the last site.
    RightCreate = 4,
    /// `+1 -> -1` at the last site.
    RightRemove = 5,
}

impl EventKind {
    #[must_use]
    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Self::SwapRight,
            1 => Self::SwapLeft,
            2 => Self::LeftCreate,
            3 => Self::LeftRemove,
            4 => Self::RightCreate,
            5 => Self::RightRemove,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub site: u32,
    pub kind: EventKind,
}

impl Event {
    /// Sites whose spin changed.
    #[must_use]
    pub fn changed_sites(&self) -> (usize, Option<usize>) {
        let s = self.site as usize;
        match self.kind {
            EventKind::SwapRight | EventKind::SwapLeft => (s, Some(s + 1)),
            _ => (s, None),
        }
    }

    /// Site `x` whose height `H_x` moved.
    #[must_use]
    pub fn height_site(&self, len: usize) -> usize {
        match self.kind {
            EventKind::SwapRight | EventKind::SwapLeft => self.site as usize,
            EventKind::LeftCreate | EventKind::LeftRemove => 0,
            EventKind::RightCreate | EventKind::RightRemove => len,
        }
    }

    /// Little-endian 16-byte record: `f64` time, `u32` site, `u32` kind.
    #[must_use]
    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.time.to_le_bytes());
        out[8..12].copy_from_slice(&self.site.to_le_bytes());
        out[12..].copy_from_slice(&(self.kind as u32).to_le_bytes());
        out
    }

    #[must_use]
    pub fn from_bytes(b: &[u8; 16]) -> Option<Self> {
        let time = f64::from_le_bytes(b[..8].try_into().ok()?);
        let site = u32::from_le_bytes(b[8..12].try_into().ok()?);
        let kind = EventKind::from_code(u32::from_le_bytes(b[12..].try_into().ok()?))?;
        Some(Self { time, site, kind })
    }
}

/// Rates of every possible move. Slot 0 is the flip at site 1, slot `x` in
/// `1..L` the swap at bond `(x, x+1)`, slot `L` the flip at site `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTable {
    tree: SumTree,
}

impl EventTable {
    #[must_use]
    pub fn build(params: &SystemParams, eta: &[i8]) -> Self {
        let len = eta.len();
        let rates: Vec<f64> = (0..=len).map(|slot| slot_rate(params, eta, slot)).collect();
        Self {
            tree: SumTree::new(&rates),
        }
    }

    #[must_use]
    pub fn total(&self) -> f64 {
        self.tree.total()
    }

    #[must_use]
    pub fn rate(&self, slot: usize) -> f64 {
        self.tree.get(slot)
    }

    #[must_use]
    pub fn rates(&self) -> &[f64] {
        self.tree.leaves()
    }

    fn refresh(&mut self, params: &SystemParams, eta: &[i8], slot: usize) {
        let r = slot_rate(params, eta, slot);
        if r != self.tree.get(slot) {
            self.tree.set(slot, r);
        }
    }

    /// Slot selected by a uniform draw `u` in `[0, 1)`.
    #[must_use]
    pub fn select(&self, u: f64) -> usize {
        self.tree.search(u * self.tree.total())
    }
}

/// Rate of slot `slot` in configuration `eta`.
#[must_use]
pub fn slot_rate(params: &SystemParams, eta: &[i8], slot: usize) -> f64 {
    let len = eta.len();
    if slot == 0 {
        params.left_flip_rate(eta)
    } else if slot == len {
        params.right_flip_rate(eta)
    } else {
        params.swap_rate(eta, slot)
    }
}

/// Integer heights `H_x = 2c + sum_{y<=x} eta_y` for `x = 0..=L`, where `c`
/// counts removals minus creations at site 1.
#[must_use]
pub fn integer_heights(eta: &[i8], boundary_counter: i64) -> Vec<i64> {
    let mut h = Vec::with_capacity(eta.len() + 1);
    let mut acc = 2 * boundary_counter;
    h.push(acc);
    for &s in eta {
        acc += i64::from(s);
        h.push(acc);
    }
    h
}

/// Gärtner field `Z_x`, `x = 0..=L`, kept in log form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GartnerField {
    pub time: f64,
    pub log_z: Vec<f64>,
}

impl GartnerField {
    #[must_use]
    pub fn from_heights(params: &SystemParams, heights: &[i64], time: f64) -> Self {
        let u = params.u();
        let shift = params.nu * time;
        Self {
            time,
            log_z: heights.iter().map(|&h| -(h as f64) * u + shift).collect(),
        }
    }

    #[must_use]
    pub fn z(&self) -> Vec<f64> {
        self.log_z.iter().map(|l| l.exp()).collect()
    }

    /// Height `h_x = -log Z_x + nu t`.
    #[must_use]
    pub fn h(&self, nu: f64) -> Vec<f64> {
        self.log_z.iter().map(|l| -l + nu * self.time).collect()
    }
}

/// `Z` for a configuration, boundary counter and time.
#[must_use]
pub fn gartner_snapshot(params: &SystemParams, eta: &[i8], boundary_counter: i64, time: f64) -> GartnerField {
    GartnerField::from_heights(params, &integer_heights(eta, boundary_counter), time)
}

/// Exact drift of `Z_x` divided by `Z_x`, including the `nu` term.
#[must_use]
pub fn site_drift_ratio(params: &SystemParams, eta: &[i8], x: usize) -> f64 {
    let len = eta.len();
    if x == 0 {
        return left_drift_ratio(params, eta);
    }
    if x == len {
        return right_drift_ratio(params, eta);
    }
    let u = params.u();
    params.nu
        + match (eta[x - 1], eta[x]) {
            (1, -1) => params.rate_right_swap() * (2.0 * u).exp_m1(),
            (-1, 1) => params.rate_left_swap() * (-2.0 * u).exp_m1(),
            _ => 0.0,
        }
}

/// Sum over moves changing `Z_x` of `rate * (factor - 1)^2`.
#[must_use]
pub fn site_bracket_ratio(params: &SystemParams, eta: &[i8], x: usize) -> f64 {
    let len = eta.len();
    let u = params.u();
    let up = (2.0 * u).exp_m1().powi(2);
    let down = (-2.0 * u).exp_m1().powi(2);
    if x == 0 {
        let r = params.left_flip_rate(eta);
        return r * if eta[0] == -1 { up } else { down };
    }
    if x == len {
        let r = params.right_flip_rate(eta);
        return r * if eta[len - 1] == -1 { down } else { up };
    }
    match (eta[x - 1], eta[x]) {
        (1, -1) => params.rate_right_swap() * up,
        (-1, 1) => params.rate_left_swap() * down,
        _ => 0.0,
    }
}

/// `(Z, phi)_N`-drift: sum over moves of `rate * jump` plus `nu (Z, phi)_N`,
/// with `weights[x] = phi(x/N) / N`.
#[must_use]
pub fn exact_pairing_drift(params: &SystemParams, eta: &[i8], heights: &[i64], time: f64, weights: &[f64]) -> f64 {
    let field = GartnerField::from_heights(params, heights, time);
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(x, w)| w * field.log_z[x].exp() * site_drift_ratio(params, eta, x))
        .sum()
}

/// Receives the holding intervals and jumps of a running chain.
pub trait Observer {
    /// The chain held its current state on `[t0, t1)`.
    fn hold(&mut self, _chain: &Chain, _t0: f64, _t1: f64) {}
    /// `event` has just been applied.
    fn jump(&mut self, _chain: &Chain, _event: &Event) {}
}

impl Observer for () {}

/// Collects every event.
#[derive(Default, Debug)]
pub struct JumpLedger {
    pub events: Vec<Event>,
}

impl Observer for JumpLedger {
    fn jump(&mut self, _chain: &Chain, event: &Event) {
        self.events.push(*event);
    }
}

/// The particle system together with its integer heights and event table.
#[derive(Clone, Debug)]
pub struct Chain {
    params: SystemParams,
    eta: Vec<i8>,
    heights: Vec<i64>,
    time: f64,
    table: EventTable,
    event_count: u64,
}

impl Chain {
    pub fn new(params: SystemParams, initial: &SpinConfiguration) -> Result<Self> {
        if initial.len() != params.sites() {
            return Err(AsepError::InvalidConfiguration(format!(
                "initial configuration has {} sites, geometry needs {}",
                initial.len(),
                params.sites()
            )));
        }
        let eta = initial.spins().to_vec();
        let heights = integer_heights(&eta, 0);
        let table = EventTable::build(&params, &eta);
        Ok(Self {
            params,
            eta,
            heights,
            time: 0.0,
            table,
            event_count: 0,
        })
    }

    #[must_use]
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    #[must_use]
    pub fn eta(&self) -> &[i8] {
        &self.eta
    }

    #[must_use]
    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    #[must_use]
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Let the clock run to `time` without a jump. `time` must not be earlier
    /// than the current time.
    pub fn wait_until(&mut self, time: f64) {
        debug_assert!(time >= self.time);
        self.time = time;
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    #[must_use]
    pub fn table(&self) -> &EventTable {
        &self.table
    }

    #[must_use]
    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Boundary counter `c` (removals minus creations at site 1).
    #[must_use]
    pub fn boundary_counter(&self) -> i64 {
        self.heights[0] / 2
    }

    #[must_use]
    pub fn field(&self) -> GartnerField {
        GartnerField::from_heights(&self.params, &self.heights, self.time)
    }

    #[must_use]
    pub fn log_z(&self, x: usize) -> f64 {
        -(self.heights[x] as f64) * self.params.u() + self.params.nu * self.time
    }

    /// Apply the move in `slot` (its rate must be positive) at time `time`.
    pub fn apply(&mut self, slot: usize, time: f64) -> Event {
        let len = self.eta.len();
        self.time = time;
        self.event_count += 1;
        let event = if slot == 0 {
            let kind = if self.eta[0] == -1 {
                self.heights[0] -= 2;
                EventKind::LeftCreate
            } else {
                self.heights[0] += 2;
                EventKind::LeftRemove
            };
            self.eta[0] = -self.eta[0];
            Event { time, site: 1, kind }
        } else if slot == len {
            let kind = if self.eta[len - 1] == -1 {
                self.heights[len] += 2;
                EventKind::RightCreate
            } else {
                self.heights[len] -= 2;
                EventKind::RightRemove
            };
            self.eta[len - 1] = -self.eta[len - 1];
            Event {
                time,
                site: len as u32,
                kind,
            }
        } else {
            let kind = if self.eta[slot - 1] == 1 {
                self.heights[slot] -= 2;
                EventKind::SwapRight
            } else {
                self.heights[slot] += 2;
                EventKind::SwapLeft
            };
            self.eta.swap(slot - 1, slot);
            Event {
                time,
                site: slot as u32,
                kind,
            }
        };
        self.refresh_around(&event);
        event
    }

    fn refresh_around(&mut self, event: &Event) {
        let len = self.eta.len();
        let ml = self.params.rates.left_window().max(1);
        let mr = self.params.rates.right_window().max(1);
        let (a, b) = event.changed_sites();
        let lo = a;
        let hi = b.unwrap_or(a);
        for slot in lo.saturating_sub(1).max(1)..=hi.min(len - 1) {
            self.table.refresh(&self.params, &self.eta, slot);
        }
        if lo <= ml {
            self.table.refresh(&self.params, &self.eta, 0);
        }
        if hi + mr > len {
            self.table.refresh(&self.params, &self.eta, len);
        }
    }

    /// Draw and apply the next event. Returns `None` when every rate is zero.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Event> {
        let total = self.table.total();
        if total <= 0.0 {
            return None;
        }
        let dt = -open_unit(rng).ln() / total;
        let slot = self.table.select(rng.gen::<f64>());
        Some(self.apply(slot, self.time + dt))
    }

    /// Run until `horizon`, reporting holding intervals and jumps.
    ///
    /// The event that would overshoot the horizon is discarded; by memorylessness
    /// the next call draws a fresh one.
    pub fn advance_to<R: Rng + ?Sized, O: Observer + ?Sized>(&mut self, horizon: f64, rng: &mut R, obs: &mut O) {
        loop {
            let total = self.table.total();
            let dt = if total > 0.0 {
                -open_unit(rng).ln() / total
            } else {
                f64::INFINITY
            };
            let t_next = self.time + dt;
            if t_next > horizon {
                obs.hold(self, self.time, horizon);
                self.time = horizon;
                return;
            }
            obs.hold(self, self.time, t_next);
            let slot = self.table.select(rng.gen::<f64>());
            let event = self.apply(slot, t_next);
            obs.jump(self, &event);
        }
    }

    /// Re-apply a recorded event sequence.
    pub fn replay(&mut self, events: &[Event]) -> Result<()> {
        let len = self.eta.len();
        for e in events {
            let slot = match e.kind {
                EventKind::SwapLeft | EventKind::SwapRight => e.site as usize,
                EventKind::LeftCreate | EventKind::LeftRemove => 0,
                EventKind::RightCreate | EventKind::RightRemove => len,
            };
            if self.table.rate(slot) <= 0.0 {
                return Err(AsepError::InvalidConfiguration(format!(
                    "recorded event at slot {slot} is not allowed in the current state"
                )));
            }
            let applied = self.apply(slot, e.time);
            if applied.kind != e.kind {
                return Err(AsepError::InvalidConfiguration("recorded event kind mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Sum over sites of `coef(eta, x) * exp(-p H_x / sqrt(N))`, updated in O(1)
/// per jump. Its value at time `t` is `sum * exp(p nu t)`.
pub struct LocalSum<'a> {
    power: i32,
    coef: Box<dyn Fn(&[i8], usize) -> f64 + Send + Sync + 'a>,
    /// Coefficient at bulk `x` reads sites `x..=x+reach`.
    reach: usize,
    /// Coefficient at 0 reads sites `1..=left_dep`.
    left_dep: usize,
    /// Coefficient at `L` reads sites `L+1-right_dep..=L`.
    right_dep: usize,
    contrib: Vec<f64>,
    sum: f64,
    since_resync: usize,
}

impl<'a> LocalSum<'a> {
    pub fn new(
        chain: &Chain,
        power: i32,
        reach: usize,
        coef: impl Fn(&[i8], usize) -> f64 + Send + Sync + 'a,
    ) -> Self {
        let rates = &chain.params().rates;
        let mut s = Self {
            power,
            coef: Box::new(coef),
            reach: reach.max(1),
            left_dep: rates.left_window().max(reach + 1).max(1),
            right_dep: rates.right_window().max(1),
            contrib: vec![0.0; chain.len() + 1],
            sum: 0.0,
            since_resync: 0,
        };
        s.resync(chain);
        s
    }

    fn site_value(&self, chain: &Chain, x: usize) -> f64 {
        let c = (self.coef)(chain.eta(), x);
        if c == 0.0 {
            0.0
        } else {
            c * (-(f64::from(self.power)) * chain.heights()[x] as f64 * chain.params().u()).exp()
        }
    }

    pub fn resync(&mut self, chain: &Chain) {
        for x in 0..self.contrib.len() {
            self.contrib[x] = self.site_value(chain, x);
        }
        self.sum = self.contrib.iter().sum();
        self.since_resync = 0;
    }

    /// Bring the cached contributions up to date after `event`.
    pub fn update(&mut self, chain: &Chain, event: &Event) {
        let len = chain.len();
        let (a, b) = event.changed_sites();
        let hi = b.unwrap_or(a);
        let lo_x = a.saturating_sub(self.reach).max(1);
        for x in lo_x..=hi.min(len - 1) {
            self.refresh(chain, x);
        }
        if a <= self.left_dep {
            self.refresh(chain, 0);
        }
        if hi + self.right_dep > len || hi + self.reach >= len {
            self.refresh(chain, len);
        }
        self.since_resync += 1;
        if self.since_resync >= 4 * len {
            self.resync(chain);
        }
    }

    fn refresh(&mut self, chain: &Chain, x: usize) {
        let v = self.site_value(chain, x);
        self.sum += v - self.contrib[x];
        self.contrib[x] = v;
    }

    /// Value at `time`.
    #[must_use]
    pub fn value(&self, nu: f64, time: f64) -> f64 {
        self.sum * (f64::from(self.power) * nu * time).exp()
    }

    /// Exact integral of the current value over `[t0, t1]`.
    #[must_use]
    pub fn integral(&self, nu: f64, t0: f64, t1: f64) -> f64 {
        let k = f64::from(self.power) * nu;
        self.sum * ((k * t1).exp() - (k * t0).exp()) / k
    }

    #[must_use]
    pub fn raw_sum(&self) -> f64 {
        self.sum
    }
}

/// How to produce the initial configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitialData {
    /// Alternating spins: zero-slope height profile.
    Flat,
    /// Product Bernoulli with spin mean `sigma`.
    Product { sigma: f64 },
    /// A fixed configuration.
    Given { spins: Vec<i8> },
}

impl InitialData {
    pub fn realize<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<SpinConfiguration> {
        match self {
            InitialData::Flat => Ok(SpinConfiguration::alternating(len)),
            InitialData::Product { sigma } => Ok(ProductMeasure::new(*sigma, len)?.sample(rng)),
            InitialData::Given { spins } => {
                let c = SpinConfiguration::new(spins.clone())?;
                if c.len() != len {
                    return Err(AsepError::InvalidConfiguration(format!(
                        "given configuration has {} sites, expected {len}",
                        c.len()
                    )));
                }
                Ok(c)
            }
        }
    }
}

/// When to record snapshots and whether to keep the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationPlan {
    pub times: Vec<f64>,
    pub record_events: bool,
}

impl ObservationPlan {
    /// `count` equally spaced times in `(0, horizon]`.
    #[must_use]
    pub fn uniform(horizon: f64, count: usize) -> Self {
        Self {
            times: (1..=count).map(|k| horizon * k as f64 / count as f64).collect(),
            record_events: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub eta: Vec<i8>,
    pub heights: Vec<i64>,
}

impl Snapshot {
    #[must_use]
    pub fn field(&self, params: &SystemParams) -> GartnerField {
        GartnerField::from_heights(params, &self.heights, self.time)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<Event>,
}

/// Simulate one path: snapshot at time 0 and at each plan time up to `horizon`.
pub fn simulate<R: Rng + ?Sized>(
    params: &SystemParams,
    initial: &SpinConfiguration,
    horizon: f64,
    plan: &ObservationPlan,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut chain = Chain::new(params.clone(), initial)?;
    let mut ledger = JumpLedger::default();
    let mut snapshots = vec![Snapshot {
        time: 0.0,
        eta: chain.eta().to_vec(),
        heights: chain.heights().to_vec(),
    }];
    for &t in plan.times.iter().filter(|&&t| t > 0.0 && t <= horizon) {
        if plan.record_events {
            chain.advance_to(t, rng, &mut ledger);
        } else {
            chain.advance_to(t, rng, &mut ());
        }
        snapshots.push(Snapshot {
            time: t,
            eta: chain.eta().to_vec(),
            heights: chain.heights().to_vec(),
        });
    }
    Ok(Trajectory {
        snapshots,
        events: ledger.events,
    })
}

/// Run `f(replica, rng)` for every replica in parallel. Output order and
/// content do not depend on the number of worker threads.
pub fn run_replicas<T, F>(seed: u64, replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ReplicaRng) -> T + Sync + Send,
{
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            f(r, &mut rng)
        })
        .collect()
}

/// Initial configuration for replica `r`, drawn from its own sub-stream.
pub fn replica_initial(data: &InitialData, len: usize, seed: u64, r: u64) -> Result<SpinConfiguration> {
    let mut rng = replica_substream(seed, r, 1);
    data.realize(len, &mut rng)
}

/// Half-space parameters truncated at `l_trunc` sites (at least `4N`).
pub fn truncate_halfspace(params: &SystemParams, l_trunc: usize) -> Result<SystemParams> {
    SystemParams::new(params.n, Geometry::HalfSpace { l_trunc }, params.rates.clone())
}

/// Write events as consecutive 16-byte records.
pub fn write_event_log<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    for e in events {
        w.write_all(&e.to_bytes())?;
    }
    Ok(())
}

/// Parse a binary event log.
pub fn read_event_log(bytes: &[u8]) -> Result<Vec<Event>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(AsepError::InvalidConfiguration("event log length is not a multiple of 16".into()));
    }
    bytes
        .chunks_exact(16)
        .map(|c| {
            let rec: &[u8; 16] = c.try_into().expect("chunk of 16");
            Event::from_bytes(rec).ok_or_else(|| AsepError::InvalidConfiguration("bad event kind".into()))
        })
        .collect()
}

/// Snapshot rows `replica,t,x,eta,h,Z`; `eta` is empty at `x = 0`.
pub fn write_snapshot_csv<W: Write>(
    mut w: W,
    params: &SystemParams,
    rows: &[(u64, Vec<Snapshot>)],
    header: bool,
) -> Result<()> {
    if header {
        writeln!(w, "replica,t,x,eta,h,Z")?;
    }
    for (replica, snaps) in rows {
        for s in snaps {
            let field = s.field(params);
            let h = field.h(params.nu);
            for x in 0..field.log_z.len() {
                let eta = if x == 0 { String::new() } else { s.eta[x - 1].to_string() };
                writeln!(w, "{replica},{},{x},{eta},{},{}", s.time, h[x], field.log_z[x].exp())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Anchor, BoundaryRates, LocalFunction};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn interval(n: usize, rates: BoundaryRates) -> SystemParams {
        SystemParams::new(n, Geometry::Interval, rates).unwrap()
    }

    #[test]
    fn table_example_n4() {
        let p = interval(4, BoundaryRates::zero());
        let eta = SpinConfiguration::new(vec![1, -1, 1, -1]).unwrap();
        let t = EventTable::build(&p, eta.spins());
        assert_eq!(t.rates(), &[4.0, 4.0, 12.0, 4.0, 4.0]);
        assert_eq!(t.total(), 28.0);
        let plus = EventTable::build(&p, SpinConfiguration::all_plus(4).spins());
        assert_eq!(plus.rates(), &[4.0, 0.0, 0.0, 0.0, 4.0]);
        let mut r = BoundaryRates::zero();
        r.alpha = LocalFunction::constant(0.5, Anchor::Left);
        let p = interval(4, r);
        let t = EventTable::build(&p, &[-1, 1, 1, 1]);
        assert_eq!(t.rate(0), 8.0);
    }

    #[test]
    fn single_active_move_is_certain() {
        let p = SystemParams::new(4, Geometry::LeftWindow { len: 2 }, BoundaryRates::zero()).unwrap();
        // Only the left flip is possible from (+,+).
        let mut rng = ReplicaRng::seed_from_u64(9);
        let mut total_dt = 0.0;
        let trials = 20_000;
        for _ in 0..trials {
            let mut c = Chain::new(p.clone(), &SpinConfiguration::all_plus(2)).unwrap();
            let e = c.step(&mut rng).unwrap();
            assert_eq!(e.kind, EventKind::LeftRemove);
            total_dt += e.time;
        }
        let mean = total_dt / f64::from(trials);
        assert!((mean - 0.25).abs() < 4.0 * 0.25 / f64::from(trials).sqrt(), "{mean}");
    }

    #[test]
    fn heights_follow_spins_and_counter() {
        let mut r = BoundaryRates::liggett(0.2, 0.1, 0.0, 0.3);
        r.gamma = LocalFunction::new(2, Anchor::Left, vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let p = interval(12, r);
        let mut c = Chain::new(p, &SpinConfiguration::alternating(12)).unwrap();
        let mut rng = ReplicaRng::seed_from_u64(1);
        for _ in 0..5000 {
            c.step(&mut rng).unwrap();
            let expected = integer_heights(c.eta(), c.boundary_counter());
            assert_eq!(c.heights(), &expected[..]);
        }
    }

    #[test]
    fn flat_initial_field() {
        let p = interval(16, BoundaryRates::zero());
        let f = gartner_snapshot(&p, SpinConfiguration::alternating(16).spins(), 0, 0.0);
        for (x, z) in f.z().iter().enumerate() {
            assert_abs_diff_eq!(*z, (-((x % 2) as f64) / 4.0).exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_horizon_returns_initial_snapshot() {
        let p = interval(8, BoundaryRates::zero());
        let init = SpinConfiguration::alternating(8);
        let mut rng = ReplicaRng::seed_from_u64(2);
        let tr = simulate(&p, &init, 0.0, &ObservationPlan::uniform(0.0, 3), &mut rng).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0].eta, init.spins());
    }

    #[test]
    fn replay_reproduces_state() {
        let p = interval(10, BoundaryRates::liggett(0.1, 0.2, 0.3, 0.0));
        let init = SpinConfiguration::alternating(10);
        let mut rng = ReplicaRng::seed_from_u64(5);
        let mut plan = ObservationPlan::uniform(0.05, 1);
        plan.record_events = true;
        let tr = simulate(&p, &init, 0.05, &plan, &mut rng).unwrap();
        let mut bytes = Vec::new();
        write_event_log(&mut bytes, &tr.events).unwrap();
        let events = read_event_log(&bytes).unwrap();
        let mut c = Chain::new(p, &init).unwrap();
        c.replay(&events).unwrap();
        let last = tr.snapshots.last().unwrap();
        assert_eq!(c.eta(), &last.eta[..]);
        assert_eq!(c.heights(), &last.heights[..]);
    }

    #[test]
    fn local_sum_matches_direct_sum() {
        let mut r = BoundaryRates::liggett(0.1, 0.0, 0.2, 0.1);
        r.alpha = LocalFunction::new(3, Anchor::Left, (0..8).map(|i| f64::from(i) * 0.05).collect()).unwrap();
        r.beta = LocalFunction::new(2, Anchor::Right, vec![0.0, 0.2, -0.1, 0.1]).unwrap();
        let p = interval(16, r);
        let mut c = Chain::new(p.clone(), &SpinConfiguration::alternating(16)).unwrap();
        let pp = p.clone();
        let mut s = LocalSum::new(&c, 1, 1, move |eta, x| site_drift_ratio(&pp, eta, x));
        let mut rng = ReplicaRng::seed_from_u64(4);
        let w = vec![1.0; 17];
        for _ in 0..3000 {
            let e = c.step(&mut rng).unwrap();
            s.update(&c, &e);
            let direct = exact_pairing_drift(&p, c.eta(), c.heights(), c.time(), &w);
            let v = s.value(p.nu, c.time());
            assert!((v - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{v} vs {direct}");
        }
    }
}
