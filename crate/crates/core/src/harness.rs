//! Martingale-problem diagnostics for the Gärtner field.
//!
//! For a test function `phi` compatible with the Robin conditions, the pairing
//! `(Z_t, phi)_N = N^{-1} sum_x Z_{t,x} phi(x/N)` satisfies
//!
//! `(Z_t,phi) - (Z_0,phi) = int (Z, phi''/2) + R0 + R1 + R2 + R3 + R4 + Rbulk + M_t`
//!
//! where `M_t` is a martingale. `R0` is the lattice-vs-continuum Laplacian
//! mismatch, `R1`/`R2` integrate the order-`N` boundary drifts, `R3`/`R4` the
//! bounded boundary remainders, and `Rbulk` the bulk mismatch between the
//! exact jump drift and `(N^2/2) Delta Z`. `R5` is the `eta_x eta_{x+1}`
//! correction in the quadratic variation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    replica_initial, run_replicas, site_bracket_ratio, site_drift_ratio, Chain, Event, GartnerField, InitialData,
    LocalSum, Observer,
};
use crate::error::{AsepError, Result};
use crate::lattice::{boundary_drift_left, boundary_drift_right, sup_abs_b_left, sup_abs_b_right, Geometry, SystemParams};
use crate::robin::{heat_kernel, RobinLaplacian};
use crate::stats::{self, column_mean_sem};

/// Smooth test function satisfying `phi'(0) = -A phi(0)` and, on the
/// interval, `phi'(1) = -B phi(1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinTestFunction {
    pub a: f64,
    pub b: f64,
    /// Coefficients of `1, x, x^2, x^3, x^4`.
    pub poly: [f64; 5],
    /// `Some((start, end))`: multiplied by a C^2 cutoff falling from 1 at
    /// `start` to 0 at `end`.
    pub cutoff: Option<(f64, f64)>,
}

fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let s2 = s * s;
    let s3 = s2 * s;
    (
        6.0 * s3 * s2 - 15.0 * s2 * s2 + 10.0 * s3,
        30.0 * s2 * s2 - 60.0 * s3 + 30.0 * s2,
        120.0 * s3 - 180.0 * s2 + 60.0 * s,
    )
}

impl RobinTestFunction {
    /// Member `variant` of the Robin-compatible family for `params`.
    ///
    /// On the interval the base is `1 - A x + c x^3` (or `c x^4` when `B = -3`
    /// makes the cubic degenerate); variants add `k x^2 (1-x)^2`, which leaves
    /// both boundary conditions intact. On the half-space the base is
    /// `1 - A x` with a cutoff on `[1, 2]`; variants add `k x^2`.
    #[must_use]
    pub fn family(params: &SystemParams, variant: usize) -> Self {
        let (a, b) = (params.a, params.b);
        let k = variant as f64;
        match params.geometry {
            Geometry::Interval => {
                let mut poly = [1.0, -a, 0.0, 0.0, 0.0];
                let num = a - b * (1.0 - a);
                if (3.0 + b).abs() > 1e-9 {
                    poly[3] = num / (3.0 + b);
                } else {
                    poly[4] = num / (4.0 + b);
                }
                // k x^2 (1 - x)^2 = k (x^2 - 2x^3 + x^4)
                poly[2] += k;
                poly[3] -= 2.0 * k;
                poly[4] += k;
                Self { a, b, poly, cutoff: None }
            }
            _ => Self {
                a,
                b: 0.0,
                poly: [1.0, -a, k, 0.0, 0.0],
                cutoff: Some((1.0, 2.0)),
            },
        }
    }

    fn poly_derivs(&self, x: f64) -> (f64, f64, f64) {
        let p = &self.poly;
        let v = p[0] + x * (p[1] + x * (p[2] + x * (p[3] + x * p[4])));
        let d1 = p[1] + x * (2.0 * p[2] + x * (3.0 * p[3] + x * 4.0 * p[4]));
        let d2 = 2.0 * p[2] + x * (6.0 * p[3] + x * 12.0 * p[4]);
        (v, d1, d2)
    }

    fn cut(&self, x: f64) -> (f64, f64, f64) {
        match self.cutoff {
            None => (1.0, 0.0, 0.0),
            Some((s, e)) => {
                let w = e - s;
                let (v, d1, d2) = smoothstep((x - s) / w);
                (1.0 - v, -d1 / w, -d2 / (w * w))
            }
        }
    }

    #[must_use]
    pub fn eval(&self, x: f64) -> f64 {
        self.poly_derivs(x).0 * self.cut(x).0
    }

    #[must_use]
    pub fn derivative(&self, x: f64) -> f64 {
        let (p, p1, _) = self.poly_derivs(x);
        let (c, c1, _) = self.cut(x);
        p1 * c + p * c1
    }

    #[must_use]
    pub fn second_derivative(&self, x: f64) -> f64 {
        let (p, p1, p2) = self.poly_derivs(x);
        let (c, c1, c2) = self.cut(x);
        p2 * c + 2.0 * p1 * c1 + p * c2
    }

    /// `phi(x / N)` for `x = 0..=len`.
    #[must_use]
    pub fn sample(&self, n: usize, len: usize) -> Vec<f64> {
        (0..=len).map(|x| self.eval(x as f64 / n as f64)).collect()
    }
}

/// `(psi, phi)_N = N^{-1} sum_x psi_x phi(x/N)`.
#[must_use]
pub fn pairing(psi: &[f64], phi: impl Fn(f64) -> f64, n: usize) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(x, p)| p * phi(x as f64 / n as f64))
        .sum::<f64>()
        / n as f64
}

/// `(Z, phi)_N` for a field in log form.
#[must_use]
pub fn field_pairing(field: &GartnerField, weights: &[f64]) -> f64 {
    field.log_z.iter().zip(weights).map(|(l, w)| w * l.exp()).sum()
}

/// Martingale `M_t` and the compensated square `M_t^2 - <M>_t`.
pub struct MartingaleMonitor<'a> {
    nu: f64,
    pair: LocalSum<'a>,
    drift: LocalSum<'a>,
    bracket: LocalSum<'a>,
    initial_pairing: f64,
    drift_integral: f64,
    bracket_integral: f64,
}

impl<'a> MartingaleMonitor<'a> {
    pub fn new(chain: &Chain, phi: &RobinTestFunction) -> Self {
        let params = chain.params().clone();
        let n = params.n as f64;
        let w: Vec<f64> = phi.sample(params.n, chain.len()).iter().map(|v| v / n).collect();
        let w1 = w.clone();
        let w2 = w.clone();
        let p1 = params.clone();
        let p2 = params.clone();
        let pair = LocalSum::new(chain, 1, 1, move |_, x| w[x]);
        let drift = LocalSum::new(chain, 1, 1, move |eta, x| {
            if w1[x] == 0.0 {
                0.0
            } else {
                w1[x] * site_drift_ratio(&p1, eta, x)
            }
        });
        let bracket = LocalSum::new(chain, 2, 1, move |eta, x| {
            if w2[x] == 0.0 {
                0.0
            } else {
                w2[x] * w2[x] * site_bracket_ratio(&p2, eta, x)
            }
        });
        let initial_pairing = pair.value(params.nu, chain.time());
        Self {
            nu: params.nu,
            pair,
            drift,
            bracket,
            initial_pairing,
            drift_integral: 0.0,
            bracket_integral: 0.0,
        }
    }

    /// `M_t` at the chain's current time.
    #[must_use]
    pub fn martingale(&self, time: f64) -> f64 {
        self.pair.value(self.nu, time) - self.initial_pairing - self.drift_integral
    }

    /// Predictable quadratic variation `<M>_t`.
    #[must_use]
    pub fn bracket(&self) -> f64 {
        self.bracket_integral
    }
}

impl Observer for MartingaleMonitor<'_> {
    fn hold(&mut self, _chain: &Chain, t0: f64, t1: f64) {
        self.drift_integral += self.drift.integral(self.nu, t0, t1);
        self.bracket_integral += self.bracket.integral(self.nu, t0, t1);
    }

    fn jump(&mut self, chain: &Chain, event: &Event) {
        self.pair.update(chain, event);
        self.drift.update(chain, event);
        self.bracket.update(chain, event);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleConfig {
    pub params: SystemParams,
    pub initial: InitialData,
    pub variant: usize,
    pub horizon: f64,
    pub grid_points: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub times: Vec<f64>,
    /// Ensemble mean and SEM of `M_t`.
    pub martingale: Vec<(f64, f64)>,
    /// Ensemble mean and SEM of `M_t^2 - <M>_t`.
    pub compensated_square: Vec<(f64, f64)>,
    pub replicas: usize,
}

impl MartingaleReport {
    /// Largest `|mean| / SEM` over both statistics and all times.
    #[must_use]
    pub fn max_z_score(&self) -> f64 {
        self.martingale
            .iter()
            .chain(&self.compensated_square)
            .map(|(m, s)| if *s > 0.0 { m.abs() / s } else if *m == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Ensemble of `M_t` and `M_t^2 - <M>_t` on a uniform time grid.
pub fn martingale_series(cfg: &MartingaleConfig) -> Result<MartingaleReport> {
    let len = cfg.params.sites();
    let phi = RobinTestFunction::family(&cfg.params, cfg.variant);
    let times: Vec<f64> = (1..=cfg.grid_points)
        .map(|k| cfg.horizon * k as f64 / cfg.grid_points as f64)
        .collect();
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = run_replicas(cfg.seed, cfg.replicas, |r, rng| {
        let eta = replica_initial(&cfg.initial, len, cfg.seed, r)?;
        let mut chain = Chain::new(cfg.params.clone(), &eta)?;
        let mut mon = MartingaleMonitor::new(&chain, &phi);
        let mut m = Vec::with_capacity(times.len());
        let mut q = Vec::with_capacity(times.len());
        for &t in &times {
            chain.advance_to(t, rng, &mut mon);
            let mt = mon.martingale(t);
            m.push(mt);
            q.push(mt * mt - mon.bracket());
        }
        Ok((m, q))
    });
    let mut ms = Vec::with_capacity(rows.len());
    let mut qs = Vec::with_capacity(rows.len());
    for row in rows {
        let (m, q) = row?;
        ms.push(m);
        qs.push(q);
    }
    Ok(MartingaleReport {
        times,
        martingale: column_mean_sem(&ms),
        compensated_square: column_mean_sem(&qs),
        replicas: cfg.replicas,
    })
}

/// Names of the remainder series, in the order stored by [`RTermMonitor`].
pub const RTERM_NAMES: [&str; 8] = ["R0", "R1", "R2", "R3", "R4", "R5", "Rbulk", "stochII"];

/// Incremental tracker of every remainder integral on the interval.
pub struct RTermMonitor<'a> {
    nu: f64,
    sums: Vec<LocalSum<'a>>,
    /// Index of the `(Z, phi''/2)` sum.
    continuum: LocalSum<'a>,
    pair: LocalSum<'a>,
    drift: LocalSum<'a>,
    integrals: [f64; 8],
    continuum_integral: f64,
    drift_integral: f64,
    initial_pairing: f64,
    sup_z0: f64,
    sup_zl: f64,
}

impl<'a> RTermMonitor<'a> {
    pub fn new(chain: &Chain, phi: &RobinTestFunction) -> Result<Self> {
        let params = chain.params().clone();
        if params.geometry != Geometry::Interval {
            return Err(AsepError::InvalidParameter("remainder monitor needs the interval geometry".into()));
        }
        let len = chain.len();
        let n = params.n as f64;
        let u = params.u();
        let vals = phi.sample(params.n, len);
        let w: Vec<f64> = vals.iter().map(|v| v / n).collect();
        let lap = RobinLaplacian::interval(params.n, params.a, params.b)?;
        let dphi = lap.apply(&vals)?;
        let k0: Vec<f64> = (0..=len)
            .map(|x| (0.5 * n * n * dphi[x] - 0.5 * phi.second_derivative(x as f64 / n)) / n)
            .collect();
        let cont: Vec<f64> = (0..=len).map(|x| 0.5 * phi.second_derivative(x as f64 / n) / n).collect();
        let (phi0, phi1) = (vals[0], vals[len]);
        let root_n = n.sqrt();
        let half_n2 = 0.5 * n * n;

        let p = params.clone();
        let r1 = move |eta: &[i8], x: usize| if x == 0 { phi0 * boundary_drift_left(&p, eta).0 } else { 0.0 };
        let p = params.clone();
        let r2 = move |eta: &[i8], x: usize| if x == len { phi1 * boundary_drift_right(&p, eta).0 } else { 0.0 };
        let p = params.clone();
        let r3 = move |eta: &[i8], x: usize| {
            if x == 0 {
                phi0 * boundary_drift_left(&p, eta).1 / root_n
            } else {
                0.0
            }
        };
        let p = params.clone();
        let r4 = move |eta: &[i8], x: usize| {
            if x == len {
                phi1 * boundary_drift_right(&p, eta).1 / root_n
            } else {
                0.0
            }
        };
        let w5 = w.clone();
        let r5 = move |eta: &[i8], x: usize| {
            if x == 0 || x == len {
                0.0
            } else {
                -0.5 * f64::from(eta[x - 1] * eta[x]) * w5[x] * w5[x] * n
            }
        };
        let p = params.clone();
        let wb = w.clone();
        let rbulk = move |eta: &[i8], x: usize| {
            if x == 0 || x == len {
                0.0
            } else {
                let lap = half_n2 * ((u * f64::from(eta[x - 1])).exp() + (-u * f64::from(eta[x])).exp() - 2.0);
                wb[x] * (site_drift_ratio(&p, eta, x) - lap)
            }
        };
        let ws = w.clone();
        let stoch = move |eta: &[i8], x: usize| {
            if x == 0 || x == len {
                0.0
            } else {
                f64::from(eta[x - 1] * eta[x]) * ws[x]
            }
        };
        let wd = w.clone();
        let p = params.clone();
        let drift = move |eta: &[i8], x: usize| wd[x] * site_drift_ratio(&p, eta, x);

        let sums = vec![
            LocalSum::new(chain, 1, 1, move |_, x| k0[x]),
            LocalSum::new(chain, 1, 1, r1),
            LocalSum::new(chain, 1, 1, r2),
            LocalSum::new(chain, 1, 1, r3),
            LocalSum::new(chain, 1, 1, r4),
            LocalSum::new(chain, 2, 1, r5),
            LocalSum::new(chain, 1, 1, rbulk),
            LocalSum::new(chain, 2, 1, stoch),
        ];
        let pair = LocalSum::new(chain, 1, 1, move |_, x| w[x]);
        let initial_pairing = pair.value(params.nu, chain.time());
        Ok(Self {
            nu: params.nu,
            sums,
            continuum: LocalSum::new(chain, 1, 1, move |_, x| cont[x]),
            pair,
            drift: LocalSum::new(chain, 1, 1, drift),
            integrals: [0.0; 8],
            continuum_integral: 0.0,
            drift_integral: 0.0,
            initial_pairing,
            sup_z0: chain.log_z(0).exp(),
            sup_zl: chain.log_z(len).exp(),
        })
    }

    /// Current values of the remainder integrals, ordered as [`RTERM_NAMES`].
    #[must_use]
    pub fn values(&self) -> [f64; 8] {
        self.integrals
    }

    /// `sup_{s <= t} Z_{s,0}` and `sup_{s <= t} Z_{s,L}`.
    #[must_use]
    pub fn boundary_sups(&self) -> (f64, f64) {
        (self.sup_z0, self.sup_zl)
    }

    /// The martingale by compensating with the exact drift.
    #[must_use]
    pub fn martingale(&self, time: f64) -> f64 {
        self.pair.value(self.nu, time) - self.initial_pairing - self.drift_integral
    }

    /// The same martingale assembled from the continuum term and remainders.
    #[must_use]
    pub fn martingale_from_remainders(&self, time: f64) -> f64 {
        let r = &self.integrals;
        self.pair.value(self.nu, time)
            - self.initial_pairing
            - self.continuum_integral
            - (r[0] + r[1] + r[2] + r[3] + r[4] + r[6])
    }
}

impl Observer for RTermMonitor<'_> {
    fn hold(&mut self, chain: &Chain, t0: f64, t1: f64) {
        for (acc, s) in self.integrals.iter_mut().zip(&self.sums) {
            *acc += s.integral(self.nu, t0, t1);
        }
        self.continuum_integral += self.continuum.integral(self.nu, t0, t1);
        self.drift_integral += self.drift.integral(self.nu, t0, t1);
        let len = chain.len();
        let u = chain.params().u();
        let z0 = (-(chain.heights()[0] as f64) * u + self.nu * t1).exp();
        let zl = (-(chain.heights()[len] as f64) * u + self.nu * t1).exp();
        self.sup_z0 = self.sup_z0.max(z0);
        self.sup_zl = self.sup_zl.max(zl);
    }

    fn jump(&mut self, chain: &Chain, event: &Event) {
        for s in &mut self.sums {
            s.update(chain, event);
        }
        self.continuum.update(chain, event);
        self.pair.update(chain, event);
        self.drift.update(chain, event);
        let len = chain.len();
        self.sup_z0 = self.sup_z0.max(chain.log_z(0).exp());
        self.sup_zl = self.sup_zl.max(chain.log_z(len).exp());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RTermConfig {
    pub params: SystemParams,
    pub initial: InitialData,
    pub variant: usize,
    pub horizon: f64,
    pub grid_points: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RTermReplica {
    /// `series[k][i]`: remainder `k` at grid time `i`.
    pub series: Vec<Vec<f64>>,
    /// Violations of the deterministic `R3` / `R4` envelopes.
    pub envelope_violations: usize,
    /// Largest gap between the two martingale assemblies.
    pub closure_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RTermReport {
    pub n: usize,
    pub times: Vec<f64>,
    /// Median over replicas of `sup_t |R_k(t)|`, ordered as [`RTERM_NAMES`].
    pub median_sup: Vec<f64>,
    /// Ensemble mean and SEM of each remainder at each grid time.
    pub mean_series: Vec<Vec<(f64, f64)>>,
    pub envelope_violations: usize,
    pub max_closure_error: f64,
    pub replicas: usize,
}

pub fn rterm_series(cfg: &RTermConfig) -> Result<RTermReport> {
    let params = &cfg.params;
    let len = params.sites();
    let phi = RobinTestFunction::family(params, cfg.variant);
    let phi0 = phi.eval(0.0).abs();
    let phi1 = phi.eval(len as f64 / params.n as f64).abs();
    let sup_bl = sup_abs_b_left(params);
    let sup_br = sup_abs_b_right(params);
    let root_n = (params.n as f64).sqrt();
    let times: Vec<f64> = (1..=cfg.grid_points)
        .map(|k| cfg.horizon * k as f64 / cfg.grid_points as f64)
        .collect();
    let rows: Vec<Result<RTermReplica>> = run_replicas(cfg.seed, cfg.replicas, |r, rng| {
        let eta = replica_initial(&cfg.initial, len, cfg.seed, r)?;
        let mut chain = Chain::new(params.clone(), &eta)?;
        let mut mon = RTermMonitor::new(&chain, &phi)?;
        let mut series = vec![Vec::with_capacity(times.len()); RTERM_NAMES.len()];
        let mut violations = 0;
        let mut closure: f64 = 0.0;
        for &t in &times {
            chain.advance_to(t, rng, &mut mon);
            let v = mon.values();
            for (k, s) in series.iter_mut().enumerate() {
                s.push(v[k]);
            }
            let (z0, zl) = mon.boundary_sups();
            let slack = 1.0 + 1e-9;
            if v[3].abs() > t / root_n * sup_bl * z0 * phi0 * slack {
                violations += 1;
            }
            if v[4].abs() > t / root_n * sup_br * zl * phi1 * slack {
                violations += 1;
            }
            let a = mon.martingale(t);
            let b = mon.martingale_from_remainders(t);
            closure = closure.max((a - b).abs() / (1.0 + a.abs()));
        }
        Ok(RTermReplica {
            series,
            envelope_violations: violations,
            closure_error: closure,
        })
    });
    let reps: Vec<RTermReplica> = rows.into_iter().collect::<Result<_>>()?;
    let median_sup = (0..RTERM_NAMES.len())
        .map(|k| {
            let sups: Vec<f64> = reps
                .iter()
                .map(|r| r.series[k].iter().fold(0.0, |m: f64, v| m.max(v.abs())))
                .collect();
            stats::median(&sups)
        })
        .collect();
    let mean_series = (0..RTERM_NAMES.len())
        .map(|k| {
            let table: Vec<Vec<f64>> = reps.iter().map(|r| r.series[k].clone()).collect();
            column_mean_sem(&table)
        })
        .collect();
    Ok(RTermReport {
        n: params.n,
        times,
        median_sup,
        mean_series,
        envelope_violations: reps.iter().map(|r| r.envelope_violations).sum(),
        max_closure_error: reps.iter().map(|r| r.closure_error).fold(0.0, f64::max),
        replicas: cfg.replicas,
    })
}

/// `R0` integrand computed two ways: applying the Laplacian to `Z` and
/// pairing, or pairing `Z` with the Laplacian of `phi`.
pub fn r0_integrand_two_ways(params: &SystemParams, z: &[f64], phi: &RobinTestFunction) -> Result<(f64, f64)> {
    let n = params.n as f64;
    let len = z.len() - 1;
    let lap = RobinLaplacian::interval(params.n, params.a, params.b)?;
    let vals = phi.sample(params.n, len);
    let dz = lap.apply(z)?;
    let dphi = lap.apply(&vals)?;
    let cont: f64 = (0..=len)
        .map(|x| z[x] * 0.5 * phi.second_derivative(x as f64 / n))
        .sum::<f64>()
        / n;
    let direct = (0..=len).map(|x| 0.5 * n * n * dz[x] * vals[x]).sum::<f64>() / n - cont;
    let by_parts = (0..=len).map(|x| 0.5 * n * n * z[x] * dphi[x]).sum::<f64>() / n - cont;
    Ok((direct, by_parts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanProfileReport {
    pub n: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `max_x |mean - predicted| / max_x predicted`.
    pub max_relative_deviation: f64,
    /// `max_x sem / max_x predicted`.
    pub max_relative_sem: f64,
    pub replicas: usize,
}

/// Ensemble mean of `Z_t` against `H(t) E[Z_0]`.
pub fn mean_profile_experiment(
    params: &SystemParams,
    initial: &InitialData,
    time: f64,
    replicas: usize,
    seed: u64,
) -> Result<MeanProfileReport> {
    let len = params.sites();
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = run_replicas(seed, replicas, |r, rng| {
        let eta = replica_initial(initial, len, seed, r)?;
        let mut chain = Chain::new(params.clone(), &eta)?;
        let z0 = chain.field().z();
        chain.advance_to(time, rng, &mut ());
        Ok((z0, chain.field().z()))
    });
    let mut z0s = Vec::with_capacity(replicas);
    let mut zts = Vec::with_capacity(replicas);
    for row in rows {
        let (a, b) = row?;
        z0s.push(a);
        zts.push(b);
    }
    let lap = match params.geometry {
        Geometry::Interval => RobinLaplacian::interval(params.n, params.a, params.b)?,
        Geometry::HalfSpace { l_trunc } => RobinLaplacian::half_space(params.n, params.a, l_trunc)?,
        _ => return Err(AsepError::InvalidParameter("mean profile needs interval or half-space".into())),
    };
    let mean_z0: Vec<f64> = column_mean_sem(&z0s).into_iter().map(|(m, _)| m).collect();
    let h = heat_kernel(&lap, time)?;
    let predicted: Vec<f64> = (&h.matrix * nalgebra::DVector::from_column_slice(&mean_z0))
        .iter()
        .copied()
        .collect();
    let ms = column_mean_sem(&zts);
    let scale = predicted.iter().copied().fold(0.0, f64::max);
    let dev = ms
        .iter()
        .zip(&predicted)
        .map(|((m, _), p)| (m - p).abs())
        .fold(0.0, f64::max);
    let max_sem = ms.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    Ok(MeanProfileReport {
        n: params.n,
        time,
        mean: ms.iter().map(|(m, _)| *m).collect(),
        sem: ms.iter().map(|(_, s)| *s).collect(),
        predicted,
        max_relative_deviation: dev / scale,
        max_relative_sem: max_sem / scale,
        replicas,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub statistic: String,
    pub time: f64,
    pub value: f64,
    pub sem: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub n_grid: Vec<usize>,
    pub rates: crate::lattice::BoundaryRates,
    pub initial: InitialData,
    pub horizon: f64,
    pub grid_points: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub n_grid: Vec<usize>,
    pub mean_profile_deviation: Vec<f64>,
    /// Log-log slope in `N` of the median `sup |R_k|`, ordered as [`RTERM_NAMES`].
    pub rterm_slopes: Vec<f64>,
    pub envelope_violations: usize,
}

/// Mean-profile deviation and remainder decay across an `N` grid.
pub fn scaling_suite(cfg: &ScalingConfig) -> Result<(Vec<ScalingRow>, ScalingSummary)> {
    let mut rows = Vec::new();
    let mut devs = Vec::new();
    let mut medians: Vec<Vec<f64>> = vec![Vec::new(); RTERM_NAMES.len()];
    let mut violations = 0;
    let reports: Vec<Result<(MeanProfileReport, RTermReport)>> = cfg
        .n_grid
        .par_iter()
        .map(|&n| {
            let params = SystemParams::new(n, Geometry::Interval, cfg.rates.clone())?;
            let mp = mean_profile_experiment(&params, &cfg.initial, cfg.horizon, cfg.replicas, cfg.seed)?;
            let rt = rterm_series(&RTermConfig {
                params,
                initial: cfg.initial.clone(),
                variant: 0,
                horizon: cfg.horizon,
                grid_points: cfg.grid_points,
                replicas: cfg.replicas,
                seed: cfg.seed,
            })?;
            Ok((mp, rt))
        })
        .collect();
    for rep in reports {
        let (mp, rt) = rep?;
        rows.push(ScalingRow {
            n: mp.n,
            statistic: "mean_profile_deviation".into(),
            time: mp.time,
            value: mp.max_relative_deviation,
            sem: mp.max_relative_sem,
            replicas: mp.replicas,
        });
        devs.push(mp.max_relative_deviation);
        for (k, name) in RTERM_NAMES.iter().enumerate() {
            rows.push(ScalingRow {
                n: rt.n,
                statistic: format!("median_sup_{name}"),
                time: cfg.horizon,
                value: rt.median_sup[k],
                sem: f64::NAN,
                replicas: rt.replicas,
            });
            medians[k].push(rt.median_sup[k]);
            for (i, t) in rt.times.iter().enumerate() {
                let (m, s) = rt.mean_series[k][i];
                rows.push(ScalingRow {
                    n: rt.n,
                    statistic: format!("mean_{name}"),
                    time: *t,
                    value: m,
                    sem: s,
                    replicas: rt.replicas,
                });
            }
        }
        violations += rt.envelope_violations;
    }
    let ns: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    let rterm_slopes = medians
        .iter()
        .map(|m| {
            if m.iter().all(|v| *v > 0.0) {
                stats::loglog_slope(&ns, m)
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok((
        rows,
        ScalingSummary {
            n_grid: cfg.n_grid.clone(),
            mean_profile_deviation: devs,
            rterm_slopes,
            envelope_violations: violations,
        },
    ))
}

/// Rows `N,statistic,time,value,sem,replicas`.
pub fn write_scaling_csv<W: std::io::Write>(mut w: W, rows: &[ScalingRow]) -> Result<()> {
    writeln!(w, "N,statistic,time,value,sem,replicas")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.n, r.statistic, r.time, r.value, r.sem, r.replicas)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Anchor, BoundaryRates, LocalFunction, SpinConfiguration};
    use approx::assert_abs_diff_eq;

    fn params(n: usize, rates: BoundaryRates) -> SystemParams {
        SystemParams::new(n, Geometry::Interval, rates).unwrap()
    }

    #[test]
    fn test_function_satisfies_robin_conditions() {
        for (a, g, d, b) in [(0.0, 0.0, 0.0, 0.0), (0.3, 0.1, 0.2, 0.4), (0.0, 0.0, 0.0, 0.75)] {
            let p = params(16, BoundaryRates::liggett(a, g, d, b));
            for variant in 0..3 {
                let f = RobinTestFunction::family(&p, variant);
                assert_abs_diff_eq!(f.derivative(0.0), -p.a * f.eval(0.0), epsilon = 1e-12);
                assert_abs_diff_eq!(f.derivative(1.0), -p.b * f.eval(1.0), epsilon = 1e-12);
            }
        }
        // B = -3 switches to the quartic member.
        let p = params(16, BoundaryRates::liggett(0.1, 0.0, 0.0, 0.75));
        assert_abs_diff_eq!(p.b, -3.0, epsilon = 1e-15);
        let f = RobinTestFunction::family(&p, 0);
        assert_ne!(f.poly[4], 0.0);
        assert_abs_diff_eq!(f.derivative(1.0), -p.b * f.eval(1.0), epsilon = 1e-12);
    }

    #[test]
    fn halfspace_test_function_has_compact_support() {
        let p = SystemParams::new(8, Geometry::HalfSpace { l_trunc: 32 }, BoundaryRates::zero()).unwrap();
        let f = RobinTestFunction::family(&p, 1);
        assert_abs_diff_eq!(f.derivative(0.0), -p.a * f.eval(0.0), epsilon = 1e-12);
        assert_eq!(f.eval(2.0), 0.0);
        assert_eq!(f.eval(3.5), 0.0);
        let h = 1e-5;
        let x = 1.3;
        let fd = (f.eval(x + h) - 2.0 * f.eval(x) + f.eval(x - h)) / (h * h);
        assert!((fd - f.second_derivative(x)).abs() < 1e-3);
    }

    #[test]
    fn pairing_examples() {
        let n = 10;
        assert_abs_diff_eq!(pairing(&[1.0; 11], |_| 1.0, n), 1.1, epsilon = 1e-15);
        let mut ind = vec![0.0; 11];
        ind[3] = 1.0;
        assert_abs_diff_eq!(pairing(&ind, |x| x * x, n), 0.09 / 10.0, epsilon = 1e-15);
    }

    #[test]
    fn r0_two_ways_agree() {
        let p = params(32, BoundaryRates::liggett(0.2, 0.1, 0.0, 0.3));
        let f = RobinTestFunction::family(&p, 1);
        let z: Vec<f64> = (0..=32).map(|x| 1.0 + 0.3 * (f64::from(x) * 0.4).sin()).collect();
        let (a, b) = r0_integrand_two_ways(&p, &z, &f).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn remainder_decomposition_closes_exactly() {
        let mut r = BoundaryRates::liggett(0.2, 0.1, 0.3, 0.05);
        r.alpha = LocalFunction::new(2, Anchor::Left, vec![0.1, 0.3, -0.2, 0.4]).unwrap();
        let p = params(16, r);
        let rep = rterm_series(&RTermConfig {
            params: p,
            initial: InitialData::Flat,
            variant: 0,
            horizon: 0.2,
            grid_points: 5,
            replicas: 4,
            seed: 7,
        })
        .unwrap();
        assert!(rep.max_closure_error < 1e-8, "{}", rep.max_closure_error);
        assert_eq!(rep.envelope_violations, 0);
    }

    #[test]
    fn r1_vanishes_for_zero_rates() {
        let p = params(16, BoundaryRates::zero());
        let rep = rterm_series(&RTermConfig {
            params: p,
            initial: InitialData::Flat,
            variant: 0,
            horizon: 0.1,
            grid_points: 4,
            replicas: 2,
            seed: 1,
        })
        .unwrap();
        assert_eq!(rep.median_sup[1], 0.0);
        assert_eq!(rep.median_sup[2], 0.0);
    }

    #[test]
    fn martingale_monitor_matches_direct_recomputation() {
        let p = params(12, BoundaryRates::liggett(0.1, 0.2, 0.0, 0.1));
        let phi = RobinTestFunction::family(&p, 0);
        let mut chain = Chain::new(p.clone(), &SpinConfiguration::alternating(12)).unwrap();
        let mut mon = MartingaleMonitor::new(&chain, &phi);
        let w: Vec<f64> = phi.sample(12, 12).iter().map(|v| v / 12.0).collect();
        let z0 = field_pairing(&chain.field(), &w);
        let mut rng = crate::rng::replica_rng(3, 0);
        chain.advance_to(0.05, &mut rng, &mut mon);
        // Drift integral recomputed with a fine Riemann sum is not available
        // after the fact; check the pairing part instead.
        let direct = field_pairing(&chain.field(), &w) - z0;
        let via = mon.martingale(0.05) + mon.drift_integral;
        assert!((direct - via).abs() < 1e-10 * (1.0 + direct.abs()));
    }
}
