//! Robin-boundary discrete Laplacians, their heat kernels and a stochastic
//! heat equation integrator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{AsepError, Result};
use crate::linalg::expm;
use crate::stats::multi_linear_fit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum HeatDomain {
    /// Points `0..=N` with Robin conditions `A` at 0 and `B` at `N`.
    Interval,
    /// Points `0..=len` with Robin `A` at 0 and a reflecting end at `len`.
    HalfSpace { len: usize },
}

/// `Delta_{A,B}` on `N^{-1}`-spaced points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinLaplacian {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub domain: HeatDomain,
}

impl RobinLaplacian {
    pub fn interval(n: usize, a: f64, b: f64) -> Result<Self> {
        if n < 2 {
            return Err(AsepError::InvalidParameter(format!("N = {n} must be at least 2")));
        }
        Ok(Self {
            n,
            a,
            b,
            domain: HeatDomain::Interval,
        })
    }

    pub fn half_space(n: usize, a: f64, len: usize) -> Result<Self> {
        if n < 2 || len < n {
            return Err(AsepError::InvalidParameter(format!(
                "half-space truncation {len} must be at least N = {n}"
            )));
        }
        Ok(Self {
            n,
            a,
            b: 0.0,
            domain: HeatDomain::HalfSpace { len },
        })
    }

    /// Number of lattice points.
    #[must_use]
    pub fn size(&self) -> usize {
        match self.domain {
            HeatDomain::Interval => self.n + 1,
            HeatDomain::HalfSpace { len } => len + 1,
        }
    }

    fn right_coefficient(&self) -> f64 {
        match self.domain {
            HeatDomain::Interval => -self.b / self.n as f64,
            HeatDomain::HalfSpace { .. } => 0.0,
        }
    }

    /// `(Delta phi)_x`: bulk second difference, `phi_1 - phi_0 + (A/N) phi_0`
    /// at 0 and `phi_{M-1} - phi_M - (B/N) phi_M` at the last point.
    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let m = self.size();
        if phi.len() != m {
            return Err(AsepError::InvalidParameter(format!(
                "profile has {} points, Laplacian needs {m}",
                phi.len()
            )));
        }
        let nf = self.n as f64;
        let last = m - 1;
        let mut out = vec![0.0; m];
        out[0] = phi[1] - phi[0] + self.a / nf * phi[0];
        for x in 1..last {
            out[x] = phi[x + 1] + phi[x - 1] - 2.0 * phi[x];
        }
        out[last] = phi[last - 1] - phi[last] + self.right_coefficient() * phi[last];
        Ok(out)
    }

    /// Dense symmetric matrix of `Delta`.
    #[must_use]
    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.size();
        let mut d = DMatrix::zeros(m, m);
        for x in 0..m {
            if x > 0 {
                d[(x, x - 1)] = 1.0;
            }
            if x + 1 < m {
                d[(x, x + 1)] = 1.0;
            }
        }
        for x in 1..m - 1 {
            d[(x, x)] = -2.0;
        }
        d[(0, 0)] = -1.0 + self.a / self.n as f64;
        d[(m - 1, m - 1)] = -1.0 + self.right_coefficient();
        d
    }

    /// Generator `(N^2/2) Delta`.
    #[must_use]
    pub fn generator(&self) -> DMatrix<f64> {
        let nf = self.n as f64;
        self.matrix() * (0.5 * nf * nf)
    }
}

/// `H = exp(elapsed (N^2/2) Delta_{A,B})`, indexed `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatKernel {
    pub laplacian: RobinLaplacian,
    pub elapsed: f64,
    pub matrix: DMatrix<f64>,
}

impl HeatKernel {
    #[must_use]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.matrix[(x, y)]
    }

    #[must_use]
    pub fn sup(&self) -> f64 {
        self.matrix.iter().copied().fold(0.0, f64::max)
    }

    /// Rows `x,y,value` with a header comment carrying the parameters.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let l = &self.laplacian;
        writeln!(w, "# N={},A={},B={},elapsed={}", l.n, l.a, l.b, self.elapsed)?;
        writeln!(w, "x,y,value")?;
        for x in 0..self.matrix.nrows() {
            for y in 0..self.matrix.ncols() {
                writeln!(w, "{x},{y},{}", self.matrix[(x, y)])?;
            }
        }
        Ok(())
    }
}

pub fn heat_kernel(lap: &RobinLaplacian, elapsed: f64) -> Result<HeatKernel> {
    if elapsed < 0.0 || !elapsed.is_finite() {
        return Err(AsepError::InvalidParameter(format!("elapsed time {elapsed} must be nonnegative")));
    }
    Ok(HeatKernel {
        laplacian: *lap,
        elapsed,
        matrix: expm(&lap.generator(), elapsed),
    })
}

/// `H(elapsed) Z0`: the deterministic mean profile.
pub fn evolve_mean_profile(lap: &RobinLaplacian, z0: &[f64], elapsed: f64) -> Result<Vec<f64>> {
    if z0.len() != lap.size() {
        return Err(AsepError::InvalidParameter(format!(
            "profile has {} points, kernel needs {}",
            z0.len(),
            lap.size()
        )));
    }
    let k = heat_kernel(lap, elapsed)?;
    Ok((&k.matrix * DVector::from_column_slice(z0)).iter().copied().collect())
}

/// Exponential-Euler integrator for `dZ = (1/2) Delta Z dt - Z dW` with
/// independent per-point noise of variance `dt N` and amplitude `noise`.
pub struct SheIntegrator {
    step_kernel: DMatrix<f64>,
    dt: f64,
    n: usize,
    pub noise: f64,
}

impl SheIntegrator {
    pub fn new(lap: &RobinLaplacian, dt: f64, noise: f64) -> Result<Self> {
        if dt <= 0.0 {
            return Err(AsepError::InvalidParameter("time step must be positive".into()));
        }
        Ok(Self {
            step_kernel: heat_kernel(lap, dt)?.matrix,
            dt,
            n: lap.n,
            noise,
        })
    }

    /// Advance `steps` steps from `z0`; returns the profile after each step.
    pub fn run<R: Rng + ?Sized>(&self, z0: &[f64], steps: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let sd = self.noise * (self.dt * self.n as f64).sqrt();
        let mut z = DVector::from_column_slice(z0);
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let mut next = &self.step_kernel * &z;
            if sd > 0.0 {
                for x in 0..z.len() {
                    let xi: f64 = rng.sample(StandardNormal);
                    next[x] -= z[x] * sd * xi;
                }
            }
            z = next;
            out.push(z.iter().copied().collect());
        }
        out
    }
}

pub fn integrate_she<R: Rng + ?Sized>(
    lap: &RobinLaplacian,
    z0: &[f64],
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if z0.len() != lap.size() {
        return Err(AsepError::InvalidParameter("initial profile size mismatch".into()));
    }
    Ok(SheIntegrator::new(lap, dt, 1.0)?.run(z0, steps, rng))
}

/// Sampling design for the kernel-bound scaling fits.
///
/// Increments are sampled where the interpolation bounds are attained: spatial
/// gaps `g = ratio * N sqrt(t)` and temporal gaps `r - t = ratio * t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundsConfig {
    pub n_grid: Vec<usize>,
    pub times: Vec<f64>,
    pub spatial_ratios: Vec<f64>,
    pub temporal_ratios: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl Default for KernelBoundsConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![32, 64, 128, 256],
            times: geometric_grid(0.001, 0.01, 10),
            spatial_ratios: geometric_grid(1.2, 2.8, 5),
            temporal_ratios: geometric_grid(3.0, 12.0, 5),
            a: 1.5,
            b: -1.5,
        }
    }
}

/// `count` geometrically spaced points from `lo` to `hi` inclusive.
#[must_use]
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub statistic: String,
    pub n: usize,
    pub elapsed: f64,
    pub gap: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundsReport {
    /// Exponents of `(N, t)` for `sup H`.
    pub sup_exponents: [f64; 2],
    /// Exponents of `(N, t, |x - w|)` for spatial increments.
    pub spatial_exponents: [f64; 3],
    /// Exponents of `(N, t, r - t)` for temporal increments.
    pub temporal_exponents: [f64; 3],
    /// Largest observed ratio of each statistic to its bound shape.
    pub sup_constant: f64,
    pub spatial_constant: f64,
    pub temporal_constant: f64,
    pub samples: Vec<KernelSample>,
}

fn max_abs_diff_over_gap(m: &DMatrix<f64>, gap: usize) -> f64 {
    let size = m.nrows();
    let mut best: f64 = 0.0;
    for x in 0..size.saturating_sub(gap) {
        for y in 0..size {
            best = best.max((m[(x, y)] - m[(x + gap, y)]).abs());
        }
    }
    best
}

pub fn verify_kernel_bounds(cfg: &KernelBoundsConfig) -> Result<KernelBoundsReport> {
    let mut samples = Vec::new();
    let (mut sup_x, mut sup_y) = (Vec::new(), Vec::new());
    let (mut sp_x, mut sp_y) = (Vec::new(), Vec::new());
    let (mut tm_x, mut tm_y) = (Vec::new(), Vec::new());
    let (mut c_sup, mut c_sp, mut c_tm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for &n in &cfg.n_grid {
        let lap = RobinLaplacian::interval(n, cfg.a, cfg.b)?;
        let nf = n as f64;
        for &t in &cfg.times {
            let h = heat_kernel(&lap, t)?;
            let s = h.sup();
            sup_x.push(vec![nf.ln(), t.ln()]);
            sup_y.push(s.ln());
            c_sup = c_sup.max(s * nf * t.sqrt());
            samples.push(KernelSample {
                statistic: "sup".into(),
                n,
                elapsed: t,
                gap: 0.0,
                value: s,
            });
            for &ratio in &cfg.spatial_ratios {
                let gap = (ratio * nf * t.sqrt()).round().max(1.0) as usize;
                if gap >= lap.size() {
                    continue;
                }
                let q = max_abs_diff_over_gap(&h.matrix, gap);
                let g = gap as f64;
                sp_x.push(vec![nf.ln(), t.ln(), g.ln()]);
                sp_y.push(q.ln());
                c_sp = c_sp.max(q / (nf.powf(-1.5) * t.powf(-0.75) * g.sqrt()));
                samples.push(KernelSample {
                    statistic: "spatial".into(),
                    n,
                    elapsed: t,
                    gap: g,
                    value: q,
                });
            }
            for &ratio in &cfg.temporal_ratios {
                let later = heat_kernel(&lap, t * (1.0 + ratio))?;
                let q = (&later.matrix - &h.matrix).amax();
                let dt = ratio * t;
                tm_x.push(vec![nf.ln(), t.ln(), dt.ln()]);
                tm_y.push(q.ln());
                c_tm = c_tm.max(q / (t.powf(-0.75) * dt.powf(0.25) / nf));
                samples.push(KernelSample {
                    statistic: "temporal".into(),
                    n,
                    elapsed: t,
                    gap: dt,
                    value: q,
                });
            }
        }
    }
    let fs = multi_linear_fit(&sup_x, &sup_y);
    let fp = multi_linear_fit(&sp_x, &sp_y);
    let ft = multi_linear_fit(&tm_x, &tm_y);
    Ok(KernelBoundsReport {
        sup_exponents: [fs[1], fs[2]],
        spatial_exponents: [fp[1], fp[2], fp[3]],
        temporal_exponents: [ft[1], ft[2], ft[3]],
        sup_constant: c_sup,
        spatial_constant: c_sp,
        temporal_constant: c_tm,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn laplacian_examples() {
        let lap = RobinLaplacian::interval(10, 0.0, 0.0).unwrap();
        assert!(lap.apply(&[1.0; 11]).unwrap().iter().all(|v| *v == 0.0));
        let lap = RobinLaplacian::interval(10, 2.0, 3.0).unwrap();
        let out = lap.apply(&[1.0; 11]).unwrap();
        assert_abs_diff_eq!(out[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(out[10], -0.3, epsilon = 1e-15);
        assert!(out[1..10].iter().all(|v| *v == 0.0));
        let lap = RobinLaplacian::interval(10, 0.0, 0.0).unwrap();
        let lin: Vec<f64> = (0..=10).map(|x| f64::from(x) / 10.0).collect();
        let out = lap.apply(&lin).unwrap();
        assert_abs_diff_eq!(out[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(out[10], -0.1, epsilon = 1e-15);
        assert!(out[1..10].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matrix_agrees_with_apply() {
        let lap = RobinLaplacian::interval(7, 1.3, -0.4).unwrap();
        let phi: Vec<f64> = (0..8).map(|x| (f64::from(x) * 0.7).sin()).collect();
        let direct = lap.apply(&phi).unwrap();
        let via = lap.matrix() * DVector::from_column_slice(&phi);
        for x in 0..8 {
            assert_abs_diff_eq!(direct[x], via[x], epsilon = 1e-14);
        }
    }

    #[test]
    fn kernel_identity_and_stochastic_rows() {
        let lap = RobinLaplacian::interval(12, 0.0, 0.0).unwrap();
        let h0 = heat_kernel(&lap, 0.0).unwrap();
        assert_eq!(h0.matrix, DMatrix::identity(13, 13));
        let h = heat_kernel(&lap, 0.05).unwrap();
        for row in h.matrix.row_iter() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_matches_spectral_oracle() {
        let lap = RobinLaplacian::interval(20, 1.5, -1.5).unwrap();
        let t = 0.03;
        let h = heat_kernel(&lap, t).unwrap();
        let eig = lap.generator().symmetric_eigen();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (l * t).exp()));
        let oracle = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        assert!((&h.matrix - &oracle).amax() < 1e-12 * oracle.amax());
    }

    #[test]
    fn semigroup_property() {
        let lap = RobinLaplacian::interval(16, 0.8, 0.3).unwrap();
        let h1 = heat_kernel(&lap, 0.02).unwrap().matrix;
        let h2 = heat_kernel(&lap, 0.04).unwrap().matrix;
        assert!((&h1 * &h1 - &h2).amax() < 1e-10);
    }

    #[test]
    fn positive_a_makes_mass_grow() {
        let lap = RobinLaplacian::interval(16, 1.0, 0.0).unwrap();
        let z = evolve_mean_profile(&lap, &[1.0; 17], 0.2).unwrap();
        assert!(z.iter().sum::<f64>() > 17.0);
    }

    #[test]
    fn noiseless_she_is_the_mean_profile_and_zero_stays_zero() {
        use rand::SeedableRng;
        let lap = RobinLaplacian::interval(16, 1.5, -1.5).unwrap();
        let z0: Vec<f64> = (0..17).map(|x| 1.0 + 0.1 * f64::from(x)).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let path = SheIntegrator::new(&lap, 0.001, 0.0).unwrap().run(&z0, 50, &mut rng);
        let mean = evolve_mean_profile(&lap, &z0, 0.05).unwrap();
        for x in 0..17 {
            assert_abs_diff_eq!(path[49][x], mean[x], epsilon = 1e-10);
        }
        let zero = integrate_she(&lap, &[0.0; 17], 0.001, 20, &mut rng).unwrap();
        assert!(zero[19].iter().all(|v| *v == 0.0));
    }
}
