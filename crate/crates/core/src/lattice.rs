//! Spin configurations, local functions, boundary rates and the Robin
//! parameters they induce.
//!
//! Sites are numbered `1..=L`. Spins are `+1` / `-1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AsepError, Result};

/// Largest window a [`LocalFunction`] table may span.
pub const MAX_WINDOW: usize = 8;

/// Spin configuration on sites `1..=L`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(AsepError::InvalidConfiguration("no sites".into()));
        }
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(AsepError::InvalidConfiguration(format!(
                "site {} holds {}, expected +1 or -1",
                pos + 1,
                spins[pos]
            )));
        }
        Ok(Self { spins })
    }

    #[must_use]
    pub fn all_plus(len: usize) -> Self {
        Self { spins: vec![1; len] }
    }

    #[must_use]
    pub fn all_minus(len: usize) -> Self {
        Self { spins: vec![-1; len] }
    }

    /// `+1, -1, +1, ...` starting at site 1: the flat (zero-slope) profile.
    #[must_use]
    pub fn alternating(len: usize) -> Self {
        Self {
            spins: (0..len).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect(),
        }
    }

    /// Configuration whose bit `k` is set iff site `k + 1` holds `+1`.
    #[must_use]
    pub fn from_index(index: usize, len: usize) -> Self {
        Self {
            spins: (0..len).map(|k| if index >> k & 1 == 1 { 1 } else { -1 }).collect(),
        }
    }

    #[must_use]
    pub fn to_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &s)| if s == 1 { acc | 1 << k } else { acc })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// Spin at `site` (1-based).
    #[must_use]
    pub fn get(&self, site: usize) -> i8 {
        self.spins[site - 1]
    }

    pub fn set(&mut self, site: usize, spin: i8) {
        debug_assert!(spin == 1 || spin == -1);
        self.spins[site - 1] = spin;
    }

    pub fn flip(&mut self, site: usize) {
        self.spins[site - 1] = -self.spins[site - 1];
    }

    /// Exchange the spins at `bond` and `bond + 1`.
    pub fn swap(&mut self, bond: usize) {
        self.spins.swap(bond - 1, bond);
    }

    #[must_use]
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[must_use]
    pub fn spin_sum(&self) -> i64 {
        self.spins.iter().map(|&s| i64::from(s)).sum()
    }

    /// Sub-configuration on sites `first..first + len`.
    #[must_use]
    pub fn window(&self, first: usize, len: usize) -> Self {
        Self {
            spins: self.spins[first - 1..first - 1 + len].to_vec(),
        }
    }
}

/// Which end of the lattice a boundary table is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// Window position `k` is site `k`.
    Left,
    /// Window position `k` is site `L + 1 - k`, so position 1 is the last site.
    Right,
}

/// A function of the spins in a window of `m <= 8` sites, stored as a dense
/// table of `2^m` values. Bit `k` of a table index is set iff the spin at
/// window position `k + 1` is `+1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalFunction {
    window_size: usize,
    anchor: Anchor,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLocalFunction {
    window_size: usize,
    anchor: Anchor,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for LocalFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawLocalFunction::deserialize(d)?;
        Self::new(raw.window_size, raw.anchor, raw.values).map_err(serde::de::Error::custom)
    }
}

/// Spins of window positions `1..=m` encoded by a table index.
fn index_spins(index: usize, m: usize) -> impl Iterator<Item = i8> {
    (0..m).map(move |k| if index >> k & 1 == 1 { 1 } else { -1 })
}

impl LocalFunction {
    pub fn new(window_size: usize, anchor: Anchor, values: Vec<f64>) -> Result<Self> {
        if window_size == 0 || window_size > MAX_WINDOW {
            return Err(AsepError::InvalidParameter(format!(
                "window size {window_size} outside 1..={MAX_WINDOW}"
            )));
        }
        if values.len() != 1 << window_size {
            return Err(AsepError::InvalidParameter(format!(
                "window size {window_size} needs {} values, got {}",
                1 << window_size,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AsepError::InvalidParameter("non-finite table entry".into()));
        }
        Ok(Self {
            window_size,
            anchor,
            values,
        })
    }

    /// Table built from a closure over the window spins (position order).
    pub fn from_fn(window_size: usize, anchor: Anchor, f: impl Fn(&[i8]) -> f64) -> Result<Self> {
        let mut buf = vec![0i8; window_size];
        let values = (0..1usize << window_size.min(MAX_WINDOW + 1))
            .map(|idx| {
                for (slot, s) in buf.iter_mut().zip(index_spins(idx, window_size)) {
                    *slot = s;
                }
                f(&buf)
            })
            .collect();
        Self::new(window_size, anchor, values)
    }

    #[must_use]
    pub fn constant(c: f64, anchor: Anchor) -> Self {
        Self {
            window_size: 1,
            anchor,
            values: vec![c, c],
        }
    }

    #[must_use]
    pub fn zero(anchor: Anchor) -> Self {
        Self::constant(0.0, anchor)
    }

    /// `c * (spin at window position 1)`.
    #[must_use]
    pub fn boundary_spin(c: f64, anchor: Anchor) -> Self {
        Self {
            window_size: 1,
            anchor,
            values: vec![-c, c],
        }
    }

    #[must_use]
    pub fn window_size(&self) -> usize {
        self.window_size
    }

    #[must_use]
    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[must_use]
    pub fn value_at(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Table index read from spins `spins[0..m]` in window-position order.
    #[must_use]
    pub fn index_of(&self, spins: &[i8]) -> usize {
        spins[..self.window_size]
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &s)| if s == 1 { acc | 1 << k } else { acc })
    }

    /// Table index of the window of `eta` determined by the anchor.
    #[must_use]
    pub fn window_index(&self, eta: &[i8]) -> usize {
        let m = self.window_size;
        let len = eta.len();
        let mut idx = 0;
        for k in 0..m {
            let s = match self.anchor {
                Anchor::Left => eta[k],
                Anchor::Right => eta[len - 1 - k],
            };
            if s == 1 {
                idx |= 1 << k;
            }
        }
        idx
    }

    /// Evaluate on a configuration using the anchor. The configuration must
    /// have at least `window_size` sites.
    #[must_use]
    pub fn eval(&self, eta: &[i8]) -> f64 {
        self.values[self.window_index(eta)]
    }

    /// Evaluate with window position `k` read at site `first + k - 1`
    /// (left orientation, ignoring the anchor).
    #[must_use]
    pub fn eval_at(&self, eta: &[i8], first: usize) -> f64 {
        let mut idx = 0;
        for k in 0..self.window_size {
            if eta[first - 1 + k] == 1 {
                idx |= 1 << k;
            }
        }
        self.values[idx]
    }

    /// Expectation under the product Bernoulli measure with spin mean `sigma`.
    #[must_use]
    pub fn product_expectation(&self, sigma: f64) -> f64 {
        let p = 0.5 * (1.0 + sigma);
        let q = 0.5 * (1.0 - sigma);
        self.values
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let w: f64 = (0..self.window_size)
                    .map(|k| if idx >> k & 1 == 1 { p } else { q })
                    .product();
                v * w
            })
            .sum()
    }

    /// Uniform-measure expectation of `f * g` where `g` reads the window spins.
    #[must_use]
    pub fn uniform_expectation_with(&self, g: impl Fn(&[i8]) -> f64) -> f64 {
        let m = self.window_size;
        let mut buf = vec![0i8; m];
        let mut sum = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            for (slot, s) in buf.iter_mut().zip(index_spins(idx, m)) {
                *slot = s;
            }
            sum += v * g(&buf);
        }
        sum / self.values.len() as f64
    }

    /// Expectation under the canonical measure on a block of `len` sites with
    /// spin sum `spin_sum`; the window occupies the first `m` block sites.
    pub fn canonical_expectation(&self, len: usize, spin_sum: i64) -> Result<f64> {
        let measure = CanonicalMeasure::new(len, spin_sum)?;
        if self.window_size > len {
            return Err(AsepError::InvalidParameter(format!(
                "window {} larger than block {len}",
                self.window_size
            )));
        }
        Ok(self
            .values
            .iter()
            .enumerate()
            .map(|(idx, v)| v * measure.window_probability(self.window_size, idx.count_ones() as usize))
            .sum())
    }

    /// True when `f(-eta) = -f(eta)` for every window configuration.
    #[must_use]
    pub fn is_odd(&self) -> bool {
        let full = self.values.len() - 1;
        self.values
            .iter()
            .enumerate()
            .all(|(idx, v)| (v + self.values[full ^ idx]).abs() <= 1e-12 * (1.0 + v.abs()))
    }

    #[must_use]
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[must_use]
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Draw a table with entries uniform in `[lo, hi)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, window_size: usize, anchor: Anchor, lo: f64, hi: f64) -> Self {
        let values = (0..1usize << window_size).map(|_| rng.gen_range(lo..hi)).collect();
        Self {
            window_size,
            anchor,
            values,
        }
    }
}

/// Boundary rate tables. `alpha`, `gamma` act at site 1 and are left-anchored;
/// `delta`, `beta` act at site `L` and are right-anchored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRates {
    /// Creation speed at site 1 (used when site 1 holds `-1`).
    pub alpha: LocalFunction,
    /// Annihilation speed at site 1 (used when site 1 holds `+1`).
    pub gamma: LocalFunction,
    /// Creation speed at site `L` (used when site `L` holds `-1`).
    pub delta: LocalFunction,
    /// Annihilation speed at site `L` (used when site `L` holds `+1`).
    pub beta: LocalFunction,
}

impl BoundaryRates {
    /// Constant speeds.
    #[must_use]
    pub fn liggett(alpha: f64, gamma: f64, delta: f64, beta: f64) -> Self {
        Self {
            alpha: LocalFunction::constant(alpha, Anchor::Left),
            gamma: LocalFunction::constant(gamma, Anchor::Left),
            delta: LocalFunction::constant(delta, Anchor::Right),
            beta: LocalFunction::constant(beta, Anchor::Right),
        }
    }

    #[must_use]
    pub fn zero() -> Self {
        Self::liggett(0.0, 0.0, 0.0, 0.0)
    }

    pub fn validate_anchors(&self) -> Result<()> {
        for (name, f, want) in [
            ("alpha", &self.alpha, Anchor::Left),
            ("gamma", &self.gamma, Anchor::Left),
            ("delta", &self.delta, Anchor::Right),
            ("beta", &self.beta, Anchor::Right),
        ] {
            if f.anchor() != want {
                return Err(AsepError::InvalidParameter(format!("{name} must be {want:?}-anchored")));
            }
        }
        Ok(())
    }

    /// Every total flip rate `N^2/4 + N^{3/2} v` must be nonnegative.
    pub fn check_positivity(&self, n: usize) -> Result<()> {
        let nf = n as f64;
        for (name, f) in [
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("beta", &self.beta),
        ] {
            for (index, v) in f.values().iter().enumerate() {
                let rate = nf * nf / 4.0 + nf.powf(1.5) * v;
                if rate < 0.0 {
                    return Err(AsepError::NegativeRate { name, index, rate });
                }
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn left_window(&self) -> usize {
        self.alpha.window_size().max(self.gamma.window_size())
    }

    #[must_use]
    pub fn right_window(&self) -> usize {
        self.delta.window_size().max(self.beta.window_size())
    }

    /// Left Robin parameter `A = 3/2 + 2E(alpha - gamma) - 2E(eta_1 (alpha + gamma))`
    /// under the uniform measure.
    #[must_use]
    pub fn param_a(&self) -> f64 {
        let e_diff = self.alpha.product_expectation(0.0) - self.gamma.product_expectation(0.0);
        let e_spin = self.alpha.uniform_expectation_with(|s| f64::from(s[0]))
            + self.gamma.uniform_expectation_with(|s| f64::from(s[0]));
        1.5 + 2.0 * e_diff - 2.0 * e_spin
    }

    /// Right Robin parameter `B = -3/2 + 2E(delta - beta) - 2E(eta_L (delta + beta))`.
    #[must_use]
    pub fn param_b(&self) -> f64 {
        let e_diff = self.delta.product_expectation(0.0) - self.beta.product_expectation(0.0);
        let e_spin = self.delta.uniform_expectation_with(|s| f64::from(s[0]))
            + self.beta.uniform_expectation_with(|s| f64::from(s[0]));
        -1.5 + 2.0 * e_diff - 2.0 * e_spin
    }

    /// Left parameter as the boundary-drift derivation literally prints it,
    /// with `(alpha - gamma)` in the spin-weighted term. Kept for comparison
    /// output only; it does not make the left drift mean zero.
    #[must_use]
    pub fn param_a_printed(&self) -> f64 {
        let e_diff = self.alpha.product_expectation(0.0) - self.gamma.product_expectation(0.0);
        let e_spin = self.alpha.uniform_expectation_with(|s| f64::from(s[0]))
            - self.gamma.uniform_expectation_with(|s| f64::from(s[0]));
        1.5 + 2.0 * e_diff - 2.0 * e_spin
    }

    /// Right parameter as literally printed, with `2E(delta + beta)` in the
    /// unweighted term. Comparison output only.
    #[must_use]
    pub fn param_b_printed(&self) -> f64 {
        let e_sum = self.delta.product_expectation(0.0) + self.beta.product_expectation(0.0);
        let e_spin = self.delta.uniform_expectation_with(|s| f64::from(s[0]))
            + self.beta.uniform_expectation_with(|s| f64::from(s[0]));
        -1.5 + 2.0 * e_sum - 2.0 * e_spin
    }
}

/// Lattice geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Geometry {
    /// Sites `1..=N` with reservoirs at both ends.
    Interval,
    /// Sites `1..=l_trunc` with the left reservoir and a closed right end;
    /// stands in for the half-line. Requires `l_trunc >= 4N`.
    HalfSpace { l_trunc: usize },
    /// Sites `1..=len` with the left reservoir and a closed right end.
    LeftWindow { len: usize },
    /// Sites `1..=len` with the right reservoir at `len` and a closed left end.
    RightWindow { len: usize },
}

impl Geometry {
    #[must_use]
    pub fn sites(&self, n: usize) -> usize {
        match *self {
            Geometry::Interval => n,
            Geometry::HalfSpace { l_trunc } => l_trunc,
            Geometry::LeftWindow { len } | Geometry::RightWindow { len } => len,
        }
    }

    #[must_use]
    pub fn has_left_reservoir(&self) -> bool {
        !matches!(self, Geometry::RightWindow { .. })
    }

    #[must_use]
    pub fn has_right_reservoir(&self) -> bool {
        matches!(self, Geometry::Interval | Geometry::RightWindow { .. })
    }
}

/// Everything the dynamics needs: scaling parameter, geometry, rate tables
/// and the derived constants `A`, `B`, `nu = N/2 - 1/24`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n: usize,
    pub geometry: Geometry,
    pub rates: BoundaryRates,
    pub a: f64,
    pub b: f64,
    pub nu: f64,
}

impl SystemParams {
    pub fn new(n: usize, geometry: Geometry, rates: BoundaryRates) -> Result<Self> {
        if n < 2 {
            return Err(AsepError::InvalidParameter(format!("N = {n} must be at least 2")));
        }
        rates.validate_anchors()?;
        rates.check_positivity(n)?;
        let len = geometry.sites(n);
        if len < 2 {
            return Err(AsepError::InvalidParameter(format!("lattice of {len} sites is too small")));
        }
        if let Geometry::HalfSpace { l_trunc } = geometry {
            if l_trunc < 4 * n {
                return Err(AsepError::InvalidParameter(format!(
                    "half-space truncation {l_trunc} is below 4N = {}",
                    4 * n
                )));
            }
        }
        if geometry.has_left_reservoir() && rates.left_window() > len {
            return Err(AsepError::InvalidParameter("left rate window exceeds lattice".into()));
        }
        if geometry.has_right_reservoir() && rates.right_window() > len {
            return Err(AsepError::InvalidParameter("right rate window exceeds lattice".into()));
        }
        let a = rates.param_a();
        let b = rates.param_b();
        Ok(Self {
            n,
            geometry,
            rates,
            a,
            b,
            nu: n as f64 / 2.0 - 1.0 / 24.0,
        })
    }

    #[must_use]
    pub fn sites(&self) -> usize {
        self.geometry.sites(self.n)
    }

    /// `N^{-1/2}`.
    #[must_use]
    pub fn u(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    /// Rate of `(+,-) -> (-,+)` at a bond.
    #[must_use]
    pub fn rate_right_swap(&self) -> f64 {
        let nf = self.n as f64;
        0.5 * (nf * nf - nf.powf(1.5))
    }

    /// Rate of `(-,+) -> (+,-)` at a bond.
    #[must_use]
    pub fn rate_left_swap(&self) -> f64 {
        let nf = self.n as f64;
        0.5 * (nf * nf + nf.powf(1.5))
    }

    /// Total flip rate at a boundary given the speed `v`.
    #[must_use]
    pub fn flip_rate(&self, v: f64) -> f64 {
        let nf = self.n as f64;
        nf * nf / 4.0 + nf.powf(1.5) * v
    }

    /// Current flip rate at site 1 (zero without a left reservoir).
    #[must_use]
    pub fn left_flip_rate(&self, eta: &[i8]) -> f64 {
        if !self.geometry.has_left_reservoir() {
            return 0.0;
        }
        let v = if eta[0] == -1 {
            self.rates.alpha.eval(eta)
        } else {
            self.rates.gamma.eval(eta)
        };
        self.flip_rate(v)
    }

    /// Current flip rate at the last site (zero without a right reservoir).
    #[must_use]
    pub fn right_flip_rate(&self, eta: &[i8]) -> f64 {
        if !self.geometry.has_right_reservoir() {
            return 0.0;
        }
        let v = if eta[eta.len() - 1] == -1 {
            self.rates.delta.eval(eta)
        } else {
            self.rates.beta.eval(eta)
        };
        self.flip_rate(v)
    }

    /// Swap rate at bond `(x, x+1)`.
    #[must_use]
    pub fn swap_rate(&self, eta: &[i8], x: usize) -> f64 {
        match (eta[x - 1], eta[x]) {
            (1, -1) => self.rate_right_swap(),
            (-1, 1) => self.rate_left_swap(),
            _ => 0.0,
        }
    }
}

/// Product Bernoulli measure with spin mean `sigma` on `len` sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMeasure {
    pub sigma: f64,
    pub len: usize,
}

impl ProductMeasure {
    pub fn new(sigma: f64, len: usize) -> Result<Self> {
        if !(-1.0..=1.0).contains(&sigma) {
            return Err(AsepError::InvalidParameter(format!("spin mean {sigma} outside [-1, 1]")));
        }
        Ok(Self { sigma, len })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinConfiguration {
        let p = 0.5 * (1.0 + self.sigma);
        SpinConfiguration {
            spins: (0..self.len).map(|_| if rng.gen::<f64>() < p { 1 } else { -1 }).collect(),
        }
    }
}

/// Uniform measure on configurations of `len` sites with a fixed spin sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMeasure {
    pub len: usize,
    pub spin_sum: i64,
}

impl CanonicalMeasure {
    pub fn new(len: usize, spin_sum: i64) -> Result<Self> {
        let l = len as i64;
        if len == 0 || spin_sum.abs() > l || (spin_sum + l) % 2 != 0 {
            return Err(AsepError::EmptyHyperplane { len, spin_sum });
        }
        Ok(Self { len, spin_sum })
    }

    /// Number of `+1` spins.
    #[must_use]
    pub fn plus_count(&self) -> usize {
        ((self.spin_sum + self.len as i64) / 2) as usize
    }

    /// Spin density `sum / len`.
    #[must_use]
    pub fn density(&self) -> f64 {
        self.spin_sum as f64 / self.len as f64
    }

    /// Probability that the first `m` sites show one specific pattern with
    /// `k` plus spins.
    #[must_use]
    pub fn window_probability(&self, m: usize, k: usize) -> f64 {
        let p = self.plus_count();
        if k > p || m - k > self.len - p {
            return 0.0;
        }
        // C(len - m, p - k) / C(len, p) as a falling-factorial ratio.
        let mut prob = 1.0;
        for i in 0..k {
            prob *= (p - i) as f64 / (self.len - i) as f64;
        }
        for j in 0..m - k {
            prob *= (self.len - p - j) as f64 / (self.len - k - j) as f64;
        }
        prob
    }

    /// Uniform draw from the hyperplane.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinConfiguration {
        let mut spins: Vec<i8> = (0..self.len).map(|i| if i < self.plus_count() { 1 } else { -1 }).collect();
        for i in (1..spins.len()).rev() {
            let j = rng.gen_range(0..=i);
            spins.swap(i, j);
        }
        SpinConfiguration { spins }
    }
}

/// Order-`N` left boundary drift
/// `f_left = 3/4 + alpha - gamma - eta_1 (alpha + gamma) - A/2`.
#[must_use]
pub fn f_left(params: &SystemParams, eta: &[i8]) -> f64 {
    let r = &params.rates;
    let al = r.alpha.eval(eta);
    let ga = r.gamma.eval(eta);
    0.75 + al - ga - f64::from(eta[0]) * (al + ga) - params.a / 2.0
}

/// Order-`N` right boundary drift
/// `f_right = 3/4 - delta + beta + eta_L (delta + beta) + B/2`.
#[must_use]
pub fn f_right(params: &SystemParams, eta: &[i8]) -> f64 {
    let r = &params.rates;
    let de = r.delta.eval(eta);
    let be = r.beta.eval(eta);
    0.75 - de + be + f64::from(eta[eta.len() - 1]) * (de + be) + params.b / 2.0
}

/// Exact drift of `Z_0` divided by `Z_0` (time factor included).
#[must_use]
pub fn left_drift_ratio(params: &SystemParams, eta: &[i8]) -> f64 {
    let u = params.u();
    let rate = params.left_flip_rate(eta);
    let factor = if eta[0] == -1 { (2.0 * u).exp_m1() } else { (-2.0 * u).exp_m1() };
    rate * factor + params.nu
}

/// Exact drift of `Z_L` divided by `Z_L` (time factor included).
#[must_use]
pub fn right_drift_ratio(params: &SystemParams, eta: &[i8]) -> f64 {
    let u = params.u();
    let rate = params.right_flip_rate(eta);
    let factor = if eta[eta.len() - 1] == -1 { (-2.0 * u).exp_m1() } else { (2.0 * u).exp_m1() };
    rate * factor + params.nu
}

/// Robin-Laplacian term `(N^2/2)(Delta_{A,B} Z)_0 / Z_0`.
#[must_use]
pub fn left_laplacian_ratio(params: &SystemParams, eta: &[i8]) -> f64 {
    let nf = params.n as f64;
    let u = params.u();
    0.5 * nf * nf * (-u * f64::from(eta[0])).exp_m1() + nf * params.a / 2.0
}

/// Robin-Laplacian term `(N^2/2)(Delta_{A,B} Z)_L / Z_L`.
#[must_use]
pub fn right_laplacian_ratio(params: &SystemParams, eta: &[i8]) -> f64 {
    let nf = params.n as f64;
    let u = params.u();
    0.5 * nf * nf * (u * f64::from(eta[eta.len() - 1])).exp_m1() - nf * params.b / 2.0
}

/// Left boundary decomposition `(f_left, b_left)`: the drift of `Z_0` equals
/// `(N^2/2) Delta_{A,B} Z_0 + N f_left Z_0 + N^{1/2} b_left Z_0` exactly.
#[must_use]
pub fn boundary_drift_left(params: &SystemParams, eta: &[i8]) -> (f64, f64) {
    let nf = params.n as f64;
    let f = f_left(params, eta);
    let rest = left_drift_ratio(params, eta) - left_laplacian_ratio(params, eta) - nf * f;
    (f, rest / nf.sqrt())
}

/// Right boundary decomposition `(f_right, b_right)`.
#[must_use]
pub fn boundary_drift_right(params: &SystemParams, eta: &[i8]) -> (f64, f64) {
    let nf = params.n as f64;
    let f = f_right(params, eta);
    let rest = right_drift_ratio(params, eta) - right_laplacian_ratio(params, eta) - nf * f;
    (f, rest / nf.sqrt())
}

/// `sup |b_left|` over every configuration of the left rate window.
#[must_use]
pub fn sup_abs_b_left(params: &SystemParams) -> f64 {
    let m = params.rates.left_window().max(1);
    (0..1usize << m)
        .map(|idx| {
            let eta = SpinConfiguration::from_index(idx, m);
            boundary_drift_left(params, eta.spins()).1.abs()
        })
        .fold(0.0, f64::max)
}

/// `sup |b_right|` over every configuration of the right rate window.
#[must_use]
pub fn sup_abs_b_right(params: &SystemParams) -> f64 {
    let m = params.rates.right_window().max(1);
    (0..1usize << m)
        .map(|idx| {
            // Window position k is site L + 1 - k, so reverse the bit order.
            let mut spins: Vec<i8> = SpinConfiguration::from_index(idx, m).spins().to_vec();
            spins.reverse();
            boundary_drift_right(params, &spins).1.abs()
        })
        .fold(0.0, f64::max)
}

/// Uniform-measure expectation of a function of the first `m` sites.
#[must_use]
pub fn uniform_expectation_left(m: usize, f: impl Fn(&[i8]) -> f64) -> f64 {
    let total: f64 = (0..1usize << m)
        .map(|idx| f(SpinConfiguration::from_index(idx, m).spins()))
        .sum();
    total / (1usize << m) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(rates: BoundaryRates, n: usize) -> SystemParams {
        SystemParams::new(n, Geometry::Interval, rates).unwrap()
    }

    #[test]
    fn local_function_examples() {
        let eta = SpinConfiguration::new(vec![1, -1, 1]).unwrap();
        assert_eq!(LocalFunction::zero(Anchor::Left).eval(eta.spins()), 0.0);
        assert_eq!(LocalFunction::boundary_spin(0.7, Anchor::Left).eval(eta.spins()), 0.7);
        let equal = LocalFunction::from_fn(2, Anchor::Left, |s| f64::from(u8::from(s[0] == s[1]))).unwrap();
        assert_eq!(equal.eval(eta.spins()), 0.0);
    }

    #[test]
    fn right_anchor_reads_from_the_end() {
        let eta = [1, 1, -1];
        let f = LocalFunction::boundary_spin(2.0, Anchor::Right);
        assert_eq!(f.eval(&eta), -2.0);
    }

    #[test]
    fn product_expectation_examples() {
        let s1 = LocalFunction::boundary_spin(1.0, Anchor::Left);
        assert_abs_diff_eq!(s1.product_expectation(0.4), 0.4, epsilon = 1e-15);
        let s12 = LocalFunction::from_fn(2, Anchor::Left, |s| f64::from(s[0] * s[1])).unwrap();
        assert_abs_diff_eq!(s12.product_expectation(0.3), 0.09, epsilon = 1e-15);
        let pm = LocalFunction::from_fn(2, Anchor::Left, |s| f64::from(u8::from(s == [1, -1]))).unwrap();
        assert_abs_diff_eq!(pm.product_expectation(0.0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn canonical_expectation_examples() {
        let s1 = LocalFunction::boundary_spin(1.0, Anchor::Left);
        assert_abs_diff_eq!(s1.canonical_expectation(5, 5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1.canonical_expectation(4, 0).unwrap(), 0.0, epsilon = 1e-15);
        let s12 = LocalFunction::from_fn(2, Anchor::Left, |s| f64::from(s[0] * s[1])).unwrap();
        assert_abs_diff_eq!(s12.canonical_expectation(4, 0).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(
            s1.canonical_expectation(4, 1),
            Err(AsepError::EmptyHyperplane { .. })
        ));
        assert!(s1.canonical_expectation(4, 6).is_err());
    }

    #[test]
    fn robin_parameters_for_constant_and_spin_rates() {
        assert_eq!(BoundaryRates::zero().param_a(), 1.5);
        assert_eq!(BoundaryRates::zero().param_b(), -1.5);
        let r = BoundaryRates::liggett(0.3, 0.1, 0.2, 0.6);
        assert_abs_diff_eq!(r.param_a(), 1.5 + 2.0 * (0.3 - 0.1), epsilon = 1e-15);
        assert_abs_diff_eq!(r.param_b(), -1.5 + 2.0 * (0.2 - 0.6), epsilon = 1e-15);
        let mut r = BoundaryRates::zero();
        r.alpha = LocalFunction::boundary_spin(0.4, Anchor::Left);
        assert_abs_diff_eq!(r.param_a(), 1.5 - 0.8, epsilon = 1e-15);
        let mut r = BoundaryRates::zero();
        r.delta = LocalFunction::boundary_spin(0.4, Anchor::Right);
        assert_abs_diff_eq!(r.param_b(), -1.5 - 0.8, epsilon = 1e-15);
    }

    #[test]
    fn constant_rate_drifts_are_spin_linear() {
        let (a, g, d, b) = (0.3, 0.1, 0.2, 0.6);
        let p = params(BoundaryRates::liggett(a, g, d, b), 16);
        for eta in [[1i8, -1, 1, 1], [-1, 1, -1, -1]] {
            let mut full = eta.to_vec();
            full.resize(16, 1);
            full[15] = eta[3];
            assert_abs_diff_eq!(f_left(&p, &full), -f64::from(eta[0]) * (a + g), epsilon = 1e-14);
            assert_abs_diff_eq!(f_right(&p, &full), f64::from(eta[3]) * (d + b), epsilon = 1e-14);
        }
    }

    #[test]
    fn drift_remainders_are_bounded_in_n() {
        let mut r = BoundaryRates::liggett(0.2, 0.1, 0.3, 0.05);
        r.alpha = LocalFunction::new(2, Anchor::Left, vec![0.1, 0.3, -0.2, 0.4]).unwrap();
        let sups: Vec<f64> = [16, 64, 256, 1024, 4096]
            .iter()
            .map(|&n| sup_abs_b_left(&params(r.clone(), n)).max(sup_abs_b_right(&params(r.clone(), n))))
            .collect();
        let first = sups[0];
        assert!(sups.iter().all(|s| *s < 4.0 * first + 1.0), "{sups:?}");
    }

    #[test]
    fn drift_decomposition_is_exact() {
        let mut r = BoundaryRates::liggett(0.2, -0.1, 0.3, 0.05);
        r.gamma = LocalFunction::new(2, Anchor::Left, vec![0.1, -0.3, 0.2, 0.0]).unwrap();
        let p = params(r, 9);
        let nf = 9f64;
        for idx in 0..1 << 9 {
            let eta = SpinConfiguration::from_index(idx, 9);
            let (f, b) = boundary_drift_left(&p, eta.spins());
            let lhs = left_drift_ratio(&p, eta.spins());
            let rhs = left_laplacian_ratio(&p, eta.spins()) + nf * f + nf.sqrt() * b;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampling_extremes_and_mean() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert_eq!(ProductMeasure::new(1.0, 50).unwrap().sample(&mut rng), SpinConfiguration::all_plus(50));
        assert_eq!(ProductMeasure::new(-1.0, 50).unwrap().sample(&mut rng), SpinConfiguration::all_minus(50));
        let n = 100_000;
        let s = ProductMeasure::new(0.0, n).unwrap().sample(&mut rng).spin_sum() as f64 / n as f64;
        assert!(s.abs() < 4.0 / (n as f64).sqrt());
        assert!(ProductMeasure::new(1.5, 3).is_err());
    }

    #[test]
    fn negative_rates_are_rejected() {
        let r = BoundaryRates::liggett(-10.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            SystemParams::new(16, Geometry::Interval, r),
            Err(AsepError::NegativeRate { name: "alpha", .. })
        ));
    }

    #[test]
    fn halfspace_truncation_floor() {
        let r = BoundaryRates::zero();
        assert!(SystemParams::new(8, Geometry::HalfSpace { l_trunc: 31 }, r.clone()).is_err());
        assert!(SystemParams::new(8, Geometry::HalfSpace { l_trunc: 32 }, r).is_ok());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let f = LocalFunction::new(2, Anchor::Right, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"window_size":2,"anchor":"right","values":[0.0,1.0,2.0,3.0]}"#);
        let back: LocalFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<LocalFunction>(r#"{"window_size":2,"anchor":"left","values":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<LocalFunction>(r#"{"window_size":9,"anchor":"left","values":[]}"#).is_err());
    }
}
