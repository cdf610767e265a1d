//! Exact computations on small chains (at most 12 sites, 4096 states).
//!
//! States are indexed by the bit encoding of [`SpinConfiguration`]. Densities
//! are taken with respect to the uniform product measure, so the density of a
//! law `p` is `2^L p`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_replicas, Chain, Observer};
use crate::error::{AsepError, Result};
use crate::lattice::{BoundaryRates, Geometry, LocalFunction, ProductMeasure, SpinConfiguration, SystemParams};
use crate::linalg::expm_action;
use crate::stats;

pub const MAX_EXACT_SITES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Asymmetric swaps, reservoirs at site 1 and site `L`.
    Full,
    /// Asymmetric swaps, reservoir at site 1 only.
    LocalizedLeft,
    /// Asymmetric swaps, reservoir at site `L` only.
    LocalizedRight,
    /// Swaps at `N^2/2`, flip at site 1 at `N^2/4`.
    SymmetricLeft,
    /// Swaps at `N^2/2`, flip at site `L` at `N^2/4`.
    SymmetricRight,
    /// Swaps at `N^2/2`, flips at both ends at `N^2/4`.
    SymmetricFull,
}

impl GeneratorKind {
    #[must_use]
    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::SymmetricLeft | Self::SymmetricRight | Self::SymmetricFull)
    }

    /// Symmetric part with the same reservoirs.
    #[must_use]
    pub fn symmetric_part(self) -> Self {
        match self {
            Self::Full | Self::SymmetricFull => Self::SymmetricFull,
            Self::LocalizedLeft | Self::SymmetricLeft => Self::SymmetricLeft,
            Self::LocalizedRight | Self::SymmetricRight => Self::SymmetricRight,
        }
    }

    fn left_flip(self) -> bool {
        matches!(self, Self::Full | Self::LocalizedLeft | Self::SymmetricLeft | Self::SymmetricFull)
    }

    fn right_flip(self) -> bool {
        matches!(self, Self::Full | Self::LocalizedRight | Self::SymmetricRight | Self::SymmetricFull)
    }
}

/// Sparse generator of a chain on `2^L` states. Row `i` lists the jumps out of
/// state `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub sites: usize,
    pub n: usize,
    pub kind: GeneratorKind,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    exit: Vec<f64>,
}

fn check_sites(sites: usize) -> Result<()> {
    if sites == 0 || sites > MAX_EXACT_SITES {
        return Err(AsepError::StateSpaceTooLarge {
            sites,
            cap: 1 << MAX_EXACT_SITES,
        });
    }
    Ok(())
}

/// Generator of `kind` on `sites` sites; `n` enters only through the rates.
pub fn build_generator(n: usize, rates: &BoundaryRates, sites: usize, kind: GeneratorKind) -> Result<Generator> {
    check_sites(sites)?;
    rates.validate_anchors()?;
    rates.check_positivity(n)?;
    if kind.left_flip() && !kind.is_symmetric() && rates.left_window() > sites {
        return Err(AsepError::InvalidParameter("left rate window exceeds the chain".into()));
    }
    if kind.right_flip() && !kind.is_symmetric() && rates.right_window() > sites {
        return Err(AsepError::InvalidParameter("right rate window exceeds the chain".into()));
    }
    let nf = n as f64;
    let n2 = nf * nf;
    let n32 = nf.powf(1.5);
    let states = 1usize << sites;
    let mut row_ptr = Vec::with_capacity(states + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut exit = Vec::with_capacity(states);
    row_ptr.push(0);
    for i in 0..states {
        let eta = SpinConfiguration::from_index(i, sites);
        let s = eta.spins();
        let mut total = 0.0;
        for x in 1..sites {
            let (a, b) = (s[x - 1], s[x]);
            if a == b {
                continue;
            }
            let rate = if kind.is_symmetric() {
                n2 / 2.0
            } else if a == 1 {
                (n2 - n32) / 2.0
            } else {
                (n2 + n32) / 2.0
            };
            if rate > 0.0 {
                cols.push(i ^ (0b11 << (x - 1)));
                vals.push(rate);
                total += rate;
            }
        }
        if kind.left_flip() {
            let rate = if kind.is_symmetric() {
                n2 / 4.0
            } else {
                let v = if s[0] == -1 { rates.alpha.eval(s) } else { rates.gamma.eval(s) };
                n2 / 4.0 + n32 * v
            };
            if rate > 0.0 {
                cols.push(i ^ 1);
                vals.push(rate);
                total += rate;
            }
        }
        if kind.right_flip() {
            let rate = if kind.is_symmetric() {
                n2 / 4.0
            } else {
                let v = if s[sites - 1] == -1 { rates.delta.eval(s) } else { rates.beta.eval(s) };
                n2 / 4.0 + n32 * v
            };
            if rate > 0.0 {
                cols.push(i ^ (1 << (sites - 1)));
                vals.push(rate);
                total += rate;
            }
        }
        exit.push(total);
        row_ptr.push(cols.len());
    }
    Ok(Generator {
        sites,
        n,
        kind,
        row_ptr,
        cols,
        vals,
        exit,
    })
}

impl Generator {
    #[must_use]
    pub fn states(&self) -> usize {
        1 << self.sites
    }

    /// Jumps `(target, rate)` out of `state`.
    pub fn row(&self, state: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[state]..self.row_ptr[state + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    #[must_use]
    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit[state]
    }

    #[must_use]
    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().copied().fold(0.0, f64::max)
    }

    #[must_use]
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.states();
        let mut q = DMatrix::zeros(m, m);
        for i in 0..m {
            for (j, r) in self.row(i) {
                q[(i, j)] += r;
            }
            q[(i, i)] -= self.exit[i];
        }
        q
    }

    /// `(Q f)(i)`.
    #[must_use]
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.states())
            .map(|i| self.row(i).map(|(j, r)| r * f[j]).sum::<f64>() - self.exit[i] * f[i])
            .collect()
    }

    /// `(p^T Q)(j)`.
    #[must_use]
    pub fn apply_forward(&self, p: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.states()).map(|i| -self.exit[i] * p[i]).collect();
        for (i, &pi) in p.iter().enumerate() {
            if pi != 0.0 {
                for (j, r) in self.row(i) {
                    out[j] += r * pi;
                }
            }
        }
        out
    }

    /// `max_i sum_j |Q_ij - Q'_ij|`, the operator norm on bounded functions.
    #[must_use]
    pub fn sup_norm_difference(&self, other: &Generator) -> f64 {
        let a = self.dense();
        let b = other.dense();
        (a - b)
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Law at time `t` from law `p0` (row-vector evolution) by uniformization.
    #[must_use]
    pub fn evolve_distribution(&self, p0: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(p0, t, true)
    }

    /// `T_t f = e^{tQ} f` by uniformization.
    #[must_use]
    pub fn evolve_function(&self, f: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(f, t, false)
    }

    fn uniform_step(&self, v: &[f64], lambda: f64, forward: bool) -> Vec<f64> {
        let q = if forward { self.apply_forward(v) } else { self.apply(v) };
        v.iter().zip(q).map(|(a, b)| a + b / lambda).collect()
    }

    fn uniformize(&self, v0: &[f64], t: f64, forward: bool) -> Vec<f64> {
        let lambda = self.max_exit_rate() * 1.02;
        if t <= 0.0 || lambda <= 0.0 {
            return v0.to_vec();
        }
        let chunks = (lambda * t / 30.0).ceil().max(1.0) as usize;
        let h = t / chunks as f64;
        let mu = lambda * h;
        let mut v = v0.to_vec();
        for _ in 0..chunks {
            let mut weight = (-mu).exp();
            let mut cum = weight;
            let mut term = v.clone();
            let mut acc: Vec<f64> = term.iter().map(|x| x * weight).collect();
            let mut k = 0usize;
            // Past the mode the Poisson weights decay geometrically, so the
            // remaining tail is below `weight / (1 - mu / k)`.
            while k < 10_000 && !(k as f64 > 2.0 * mu && weight < 1e-17 * cum) {
                k += 1;
                term = self.uniform_step(&term, lambda, forward);
                weight *= mu / k as f64;
                cum += weight;
                for (a, x) in acc.iter_mut().zip(&term) {
                    *a += weight * x;
                }
            }
            v = acc;
        }
        v
    }
}

/// Generator with site-1 flips reweighted by the factor they apply to `Z_0`:
/// `exp(2/sqrt(N))` for creations and `exp(-2/sqrt(N))` for removals. For a
/// chain started at counter zero, `E[Z_{t,x}] = e^{nu t} (e^{tT} g_x)(eta_0)`
/// with `g_x(eta) = exp(-N^{-1/2} sum_{y<=x} eta_y)`.
pub fn tilted_generator(n: usize, rates: &BoundaryRates, sites: usize) -> Result<DMatrix<f64>> {
    let g = build_generator(n, rates, sites, GeneratorKind::Full)?;
    let u = 1.0 / (n as f64).sqrt();
    let mut t = g.dense();
    for i in 0..g.states() {
        let j = i ^ 1;
        let creation = i & 1 == 0;
        t[(i, j)] *= if creation { (2.0 * u).exp() } else { (-2.0 * u).exp() };
    }
    Ok(t)
}

/// `g_x(eta)` as a state vector, for `x = 0..=sites`.
#[must_use]
pub fn prefix_exponentials(n: usize, sites: usize) -> Vec<DVector<f64>> {
    let u = 1.0 / (n as f64).sqrt();
    (0..=sites)
        .map(|x| {
            DVector::from_fn(1 << sites, |i, _| {
                let s: i64 = (0..x).map(|k| if i >> k & 1 == 1 { 1 } else { -1 }).sum();
                (-(s as f64) * u).exp()
            })
        })
        .collect()
}

/// Exact mean profile `E[Z_{t,x}]`, `x = 0..=L`, from `eta0` with counter 0.
pub fn exact_mean_field(n: usize, rates: &BoundaryRates, eta0: &SpinConfiguration, t: f64) -> Result<Vec<f64>> {
    let sites = eta0.len();
    let tilt = tilted_generator(n, rates, sites)?;
    let nu = n as f64 / 2.0 - 1.0 / 24.0;
    let i0 = eta0.to_index();
    Ok(prefix_exponentials(n, sites)
        .iter()
        .map(|g| (nu * t).exp() * expm_action(&tilt, t, g)[i0])
        .collect())
}

/// Density `P_t` (w.r.t. the uniform measure) from density `p0`.
pub fn forward_density(generator: &Generator, p0: &[f64], t: f64) -> Result<Vec<f64>> {
    if p0.len() != generator.states() {
        return Err(AsepError::InvalidParameter("density has the wrong number of states".into()));
    }
    let m = generator.states() as f64;
    let law: Vec<f64> = p0.iter().map(|p| p / m).collect();
    Ok(generator.evolve_distribution(&law, t).into_iter().map(|p| p * m).collect())
}

/// Density of the point mass at `state` on `sites` sites.
#[must_use]
pub fn point_mass_density(sites: usize, state: usize) -> Vec<f64> {
    let mut p = vec![0.0; 1 << sites];
    p[state] = (1usize << sites) as f64;
    p
}

/// `H(P) = E^0[P log P]`.
#[must_use]
pub fn relative_entropy(density: &[f64]) -> f64 {
    let m = density.len() as f64;
    density
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
        / m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletForm {
    /// Bonds plus flips at both ends.
    Full,
    /// Bonds plus the flip at site 1.
    Left,
    /// Bonds plus the flip at site `L`.
    Right,
    /// Bonds only.
    Canonical,
}

/// `D(P) = sum_bonds E^0 |L_x sqrt P|^2` plus the flip terms of `form`.
#[must_use]
pub fn fisher_information(density: &[f64], sites: usize, form: DirichletForm) -> f64 {
    let states = density.len();
    let root: Vec<f64> = density.iter().map(|p| p.max(0.0).sqrt()).collect();
    let mut total = 0.0;
    for i in 0..states {
        for x in 1..sites {
            let j = i ^ (0b11 << (x - 1));
            let differ = (i >> (x - 1) & 1) != (i >> x & 1);
            if differ {
                total += (root[j] - root[i]).powi(2);
            }
        }
        if matches!(form, DirichletForm::Full | DirichletForm::Left) {
            total += (root[i ^ 1] - root[i]).powi(2);
        }
        if matches!(form, DirichletForm::Full | DirichletForm::Right) {
            total += (root[i ^ (1 << (sites - 1))] - root[i]).powi(2);
        }
    }
    total / states as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub n: usize,
    pub initial_state: usize,
    pub initial_entropy: f64,
    pub dirichlet_integral: f64,
    pub final_entropy: f64,
    /// `N^{-2} H(P_0) + N^{-1/2} T`.
    pub bound_shape: f64,
    pub ratio: f64,
}

/// Time nodes `0, T 10^{-6}, ..., T` (geometric) for integrating a function
/// that relaxes on the `N^{-2}` scale.
#[must_use]
pub fn relaxation_grid(horizon: f64, count: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(crate::robin::geometric_grid(horizon * 1e-6, horizon, count));
    g
}

/// `int_0^T D(P_s) ds` for the full chain on `L = N` sites started from a
/// point mass, compared with `N^{-2} H(P_0) + N^{-1/2} T`.
pub fn entropy_production_experiment(
    n_list: &[usize],
    rates: &BoundaryRates,
    horizon: f64,
    initial_states: &dyn Fn(usize) -> Vec<usize>,
) -> Result<Vec<EntropyRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let gen = build_generator(n, rates, n, GeneratorKind::Full)?;
        let grid = relaxation_grid(horizon, 160);
        for state in initial_states(n) {
            let p0 = point_mass_density(n, state);
            let h0 = relative_entropy(&p0);
            let mut p = p0.clone();
            let mut d_prev = fisher_information(&p, n, DirichletForm::Full);
            let mut integral = 0.0;
            for w in grid.windows(2) {
                p = forward_density(&gen, &p, w[1] - w[0])?;
                let d = fisher_information(&p, n, DirichletForm::Full);
                integral += 0.5 * (d + d_prev) * (w[1] - w[0]);
                d_prev = d;
            }
            let nf = n as f64;
            let shape = h0 / (nf * nf) + horizon / nf.sqrt();
            rows.push(EntropyRow {
                n,
                initial_state: state,
                initial_entropy: h0,
                dirichlet_integral: integral,
                final_entropy: relative_entropy(&p),
                bound_shape: shape,
                ratio: integral / shape,
            });
        }
    }
    Ok(rows)
}

/// `sup_eta sum_eta' |e^{sG}(eta, eta') - e^{sG'}(eta, eta')|`.
#[must_use]
pub fn semigroup_distance(a: &Generator, b: &Generator, s: f64) -> f64 {
    assert_eq!(a.states(), b.states(), "generators act on different state spaces");
    let m = a.states();
    let mut best: f64 = 0.0;
    let mut delta = vec![0.0; m];
    for i in 0..m {
        delta[i] = 1.0;
        let ra = a.evolve_distribution(&delta, s);
        let rb = b.evolve_distribution(&delta, s);
        delta[i] = 0.0;
        best = best.max(ra.iter().zip(&rb).map(|(x, y)| (x - y).abs()).sum());
    }
    best
}

/// Distance between a localized generator and its symmetric part at time `s`.
pub fn localized_semigroup_distance(n: usize, rates: &BoundaryRates, sites: usize, s: f64) -> Result<f64> {
    let full = build_generator(n, rates, sites, GeneratorKind::LocalizedLeft)?;
    let symm = build_generator(n, rates, sites, GeneratorKind::SymmetricLeft)?;
    Ok(semigroup_distance(&full, &symm, s))
}

/// `d` evaluated on every state.
#[must_use]
pub fn state_vector(sites: usize, d: &dyn Fn(&[i8]) -> f64) -> Vec<f64> {
    (0..1usize << sites)
        .map(|i| d(SpinConfiguration::from_index(i, sites).spins()))
        .collect()
}

/// `E^0 |tau^{-1} int_0^tau d(eta_s) ds|^2` for the chain started from the
/// uniform measure, computed exactly as `2 tau^{-2} J` where
/// `J = int int_{s1 + u <= tau} pi0 e^{s1 Q} D e^{u Q} d` is read off one
/// exponential of the block matrix `[[Q, D, 0], [0, Q, d], [0, 0, 0]]`.
pub fn kv_second_moment_exact(gen: &Generator, d: &[f64], tau: f64) -> Result<f64> {
    let m = gen.states();
    if d.len() != m {
        return Err(AsepError::InvalidParameter("function has the wrong number of states".into()));
    }
    if tau <= 0.0 {
        return Err(AsepError::InvalidParameter("averaging time must be positive".into()));
    }
    let q = gen.dense();
    let size = 2 * m + 1;
    let mut c = DMatrix::zeros(size, size);
    c.view_mut((0, 0), (m, m)).copy_from(&q);
    c.view_mut((m, m), (m, m)).copy_from(&q);
    for i in 0..m {
        c[(i, m + i)] = d[i];
        c[(m + i, 2 * m)] = d[i];
    }
    let mut e = DVector::zeros(size);
    e[2 * m] = 1.0;
    let col = expm_action(&c, tau, &e);
    let j: f64 = (0..m).map(|i| col[i]).sum::<f64>() / m as f64;
    Ok(2.0 * j / (tau * tau))
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on the Legendre polynomial, nodes on [-1, 1].
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for k in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * k - 1) as f64 * z * p2 - (k - 1) as f64 * p3) / k as f64;
            }
            let pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let pp = {
                    let (mut p1, mut p2) = (1.0, 0.0);
                    for k in 1..=n {
                        let p3 = p2;
                        p2 = p1;
                        p1 = ((2 * k - 1) as f64 * z * p2 - (k - 1) as f64 * p3) / k as f64;
                    }
                    n as f64 * (z * p1 - p2) / (z * z - 1.0)
                };
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
                break;
            }
        }
    }
    (x, w)
}

/// The same second moment by nested Gauss-Legendre quadrature over the
/// triangle, doubling the node count until successive values agree to `rtol`.
pub fn kv_second_moment_quadrature(gen: &Generator, d: &[f64], tau: f64, rtol: f64) -> Result<f64> {
    let m = gen.states();
    let uniform = vec![1.0 / m as f64; m];
    let eval = |nodes: usize| -> f64 {
        let (x, w) = gauss_legendre(nodes);
        let mut total = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let s1 = 0.5 * tau * (xi + 1.0);
            let p = gen.evolve_distribution(&uniform, s1);
            let span = tau - s1;
            let mut inner = 0.0;
            for (yj, wj) in x.iter().zip(&w) {
                let uu = 0.5 * span * (yj + 1.0);
                let td = gen.evolve_function(d, uu);
                let v: f64 = (0..m).map(|k| p[k] * d[k] * td[k]).sum();
                inner += wj * v;
            }
            total += wi * inner * 0.5 * span;
        }
        total * 0.5 * tau
    };
    let mut nodes = 8;
    let mut prev = eval(nodes);
    loop {
        nodes *= 2;
        let next = eval(nodes);
        if (next - prev).abs() <= rtol * next.abs().max(1e-300) || nodes >= 128 {
            return Ok(2.0 * next / (tau * tau));
        }
        prev = next;
    }
}

struct TimeAverage<'a> {
    d: &'a (dyn Fn(&[i8]) -> f64 + Sync),
    integral: f64,
}

impl Observer for TimeAverage<'_> {
    fn hold(&mut self, chain: &Chain, t0: f64, t1: f64) {
        self.integral += (self.d)(chain.eta()) * (t1 - t0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub sem: f64,
    pub replicas: usize,
}

/// Monte Carlo estimate of the same second moment using the simulator on a
/// left window of `sites` sites with uniform initial data.
pub fn kv_second_moment_mc(
    n: usize,
    rates: &BoundaryRates,
    sites: usize,
    d: &(dyn Fn(&[i8]) -> f64 + Sync),
    tau: f64,
    replicas: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let params = SystemParams::new(n, Geometry::LeftWindow { len: sites }, rates.clone())?;
    let init = ProductMeasure::new(0.0, sites)?;
    let values = run_replicas(seed, replicas, |_, rng| {
        let eta = init.sample(rng);
        let mut chain = Chain::new(params.clone(), &eta).expect("window length matches");
        let mut avg = TimeAverage { d, integral: 0.0 };
        chain.advance_to(tau, rng, &mut avg);
        (avg.integral / tau).powi(2)
    });
    Ok(MonteCarloEstimate {
        mean: stats::mean(&values),
        sem: stats::sem(&values),
        replicas,
    })
}

/// Canonical expectation of `a` over the block `first..first+block` at the
/// block's empirical spin sum in `eta`.
pub fn canonical_ensemble_psi(a: &LocalFunction, eta: &[i8], first: usize, block: usize) -> Result<f64> {
    let sum: i64 = eta[first - 1..first - 1 + block].iter().map(|&s| i64::from(s)).sum();
    a.canonical_expectation(block, sum)
}

/// `sup_sigma E^{sigma,L} |l^{-1} sum_{w=1}^{l} (a_w - Psi_w)|`, where `a_w`
/// reads the window starting at site `w`, `Psi_w` is its canonical
/// expectation over the block `w..w+block-1`, and `L` covers `l + block - 1`
/// sites. Exact for `L <= 12`, otherwise Monte Carlo with `samples` draws per
/// spin sum.
pub fn one_block_gap<R: Rng + ?Sized>(
    a: &LocalFunction,
    block: usize,
    ell: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if block < a.window_size() || ell == 0 {
        return Err(AsepError::InvalidParameter("block must contain the function window".into()));
    }
    let sites = ell + block - 1;
    let stat = |eta: &[i8]| -> f64 {
        let mut acc = 0.0;
        for w in 1..=ell {
            acc += a.eval_at(eta, w) - canonical_ensemble_psi(a, eta, w, block).expect("block sum is attainable");
        }
        (acc / ell as f64).abs()
    };
    let mut best: f64 = 0.0;
    if sites <= MAX_EXACT_SITES {
        let mut sums = vec![(0.0, 0usize); sites + 1];
        for i in 0..1usize << sites {
            let eta = SpinConfiguration::from_index(i, sites);
            let k = i.count_ones() as usize;
            sums[k].0 += stat(eta.spins());
            sums[k].1 += 1;
        }
        for (s, c) in sums {
            best = best.max(s / c as f64);
        }
    } else {
        for plus in 0..=sites {
            let measure = crate::lattice::CanonicalMeasure::new(sites, 2 * plus as i64 - sites as i64)?;
            let total: f64 = (0..samples).map(|_| stat(measure.sample(rng).spins())).sum();
            best = best.max(total / samples as f64);
        }
    }
    Ok(best)
}

/// Smallest `C` with `|Psi| <= |E^{sigma} a| + C / block` over all block sums
/// and the given block sizes, where `sigma` is the block density.
pub fn psi_density_constant(a: &LocalFunction, blocks: &[usize]) -> Result<f64> {
    let mut c: f64 = 0.0;
    for &k in blocks {
        for plus in 0..=k {
            let sum = 2 * plus as i64 - k as i64;
            let psi = a.canonical_expectation(k, sum)?;
            let prod = a.product_expectation(sum as f64 / k as f64);
            c = c.max((psi.abs() - prod.abs()) * k as f64);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Anchor;
    use approx::assert_abs_diff_eq;

    fn sample_rates() -> BoundaryRates {
        let mut r = BoundaryRates::liggett(0.2, 0.1, 0.15, 0.3);
        r.alpha = LocalFunction::new(2, Anchor::Left, vec![0.1, 0.3, -0.2, 0.4]).unwrap();
        r.beta = LocalFunction::new(2, Anchor::Right, vec![0.0, 0.25, 0.1, -0.1]).unwrap();
        r
    }

    #[test]
    fn single_site_symmetric_generator() {
        let g = build_generator(6, &BoundaryRates::zero(), 1, GeneratorKind::SymmetricLeft).unwrap();
        let q = g.dense();
        assert_eq!(q, DMatrix::from_row_slice(2, 2, &[-9.0, 9.0, 9.0, -9.0]));
    }

    #[test]
    fn rows_sum_to_zero_and_off_diagonals_nonnegative() {
        for kind in [
            GeneratorKind::Full,
            GeneratorKind::LocalizedLeft,
            GeneratorKind::LocalizedRight,
            GeneratorKind::SymmetricFull,
        ] {
            let q = build_generator(5, &sample_rates(), 4, kind).unwrap().dense();
            for i in 0..16 {
                assert_abs_diff_eq!(q.row(i).sum(), 0.0, epsilon = 1e-10);
                for j in 0..16 {
                    if i != j {
                        assert!(q[(i, j)] >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_chain_is_rejected() {
        assert!(matches!(
            build_generator(13, &BoundaryRates::zero(), 13, GeneratorKind::Full),
            Err(AsepError::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn uniformization_matches_dense_exponential() {
        let g = build_generator(4, &sample_rates(), 4, GeneratorKind::Full).unwrap();
        let q = g.dense();
        for t in [0.3, 4.0] {
            let e = crate::linalg::expm(&q, t);
            let mut p0 = vec![0.0; 16];
            p0[5] = 1.0;
            let p = g.evolve_distribution(&p0, t);
            for j in 0..16 {
                assert_abs_diff_eq!(p[j], e[(5, j)], epsilon = 1e-12);
            }
            let f: Vec<f64> = (0..16).map(|i| f64::from(i).sin()).collect();
            let tf = g.evolve_function(&f, t);
            let oracle = &e * DVector::from_column_slice(&f);
            for i in 0..16 {
                assert_abs_diff_eq!(tf[i], oracle[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn entropy_of_point_mass() {
        let p = point_mass_density(5, 3);
        assert_abs_diff_eq!(relative_entropy(&p), 5.0 * std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_entropy(&vec![1.0; 32]), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn h_theorem_for_symmetric_dynamics() {
        let g = build_generator(4, &BoundaryRates::zero(), 5, GeneratorKind::SymmetricFull).unwrap();
        let mut p = point_mass_density(5, 9);
        let mut prev = relative_entropy(&p);
        for _ in 0..20 {
            p = forward_density(&g, &p, 0.005).unwrap();
            let h = relative_entropy(&p);
            assert!(h <= prev + 1e-12);
            prev = h;
        }
    }

    #[test]
    fn entropy_production_inequality() {
        // (a - b)(log a - log b) >= 4 (sqrt a - sqrt b)^2 and the slowest move
        // rate N^2/4 give dH/dt <= -(N^2/2) D.
        let n = 4;
        let g = build_generator(n, &BoundaryRates::zero(), 4, GeneratorKind::SymmetricFull).unwrap();
        let p = forward_density(&g, &point_mass_density(4, 6), 0.01).unwrap();
        let dt = 1e-7;
        let h0 = relative_entropy(&p);
        let h1 = relative_entropy(&forward_density(&g, &p, dt).unwrap());
        let slope = (h1 - h0) / dt;
        let d = fisher_information(&p, 4, DirichletForm::Full);
        assert!(slope <= -((n * n) as f64) / 2.0 * d * (1.0 - 1e-3), "{slope} {d}");
    }

    #[test]
    fn semigroup_distance_basics() {
        let a = build_generator(16, &sample_rates(), 4, GeneratorKind::LocalizedLeft).unwrap();
        let b = build_generator(16, &sample_rates(), 4, GeneratorKind::SymmetricLeft).unwrap();
        assert_eq!(semigroup_distance(&a, &b, 0.0), 0.0);
        for s in [1e-4, 1e-3, 1e-2, 1.0] {
            let d = semigroup_distance(&a, &b, s);
            assert!(d <= 2.0 + 1e-12);
            assert!(d <= s * a.sup_norm_difference(&b) + 1e-12);
        }
    }

    #[test]
    fn kv_exact_matches_quadrature_and_small_tau_limit() {
        let rates = sample_rates();
        let g = build_generator(8, &rates, 4, GeneratorKind::LocalizedLeft).unwrap();
        let d = state_vector(4, &|s: &[i8]| f64::from(s[0]) - 0.5 * f64::from(s[0] * s[1]) + 0.2);
        let tau = 0.01;
        let exact = kv_second_moment_exact(&g, &d, tau).unwrap();
        let quad = kv_second_moment_quadrature(&g, &d, tau, 1e-6).unwrap();
        assert!((exact - quad).abs() < 1e-6 * exact.abs(), "{exact} {quad}");
        let e_d2: f64 = d.iter().map(|v| v * v).sum::<f64>() / 16.0;
        let tiny = kv_second_moment_exact(&g, &d, 1e-12 / 64.0).unwrap();
        assert_abs_diff_eq!(tiny, e_d2, epsilon = 1e-6);
    }

    #[test]
    fn canonical_psi_and_one_block() {
        use rand::SeedableRng;
        let a = LocalFunction::from_fn(2, Anchor::Left, |s| f64::from(s[0] * s[1])).unwrap();
        let eta = [1, -1, 1, -1, 1, 1];
        assert_abs_diff_eq!(canonical_ensemble_psi(&a, &eta, 1, 4).unwrap(), -1.0 / 3.0, epsilon = 1e-14);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let spin = LocalFunction::boundary_spin(1.0, Anchor::Left);
        // A single spin averaged over whole blocks is density-measurable when the block is one site.
        assert_abs_diff_eq!(one_block_gap(&spin, 1, 6, 0, &mut rng).unwrap(), 0.0, epsilon = 1e-14);
        let g4 = one_block_gap(&a, 3, 4, 0, &mut rng).unwrap();
        let g8 = one_block_gap(&a, 3, 8, 0, &mut rng).unwrap();
        assert!(g8 < g4, "{g4} {g8}");
        let c = psi_density_constant(&a, &[2, 4, 8, 16, 32]).unwrap();
        assert!(c.is_finite() && c <= 2.0, "{c}");
    }
}
