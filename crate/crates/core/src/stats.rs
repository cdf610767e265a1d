//! Small statistics toolkit used by the experiment reports.

use nalgebra::{DMatrix, DVector};

#[must_use]
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
#[must_use]
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean.
#[must_use]
pub fn sem(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

#[must_use]
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope and intercept of `y` against `x`.
#[must_use]
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
#[must_use]
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Ordinary least squares with an intercept: returns `[intercept, b_1, .., b_k]`.
#[must_use]
pub fn multi_linear_fit(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(rows.len(), k + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let svd = x.svd(true, true);
    let beta = svd.solve(&yv, 1e-12).expect("svd solve with both factors computed");
    beta.iter().copied().collect()
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
#[must_use]
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = p + z2 / (2.0 * nf);
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    (((centre - half) / denom).max(0.0), ((centre + half) / denom).min(1.0))
}

/// Two-sided 95% quantile used for Wilson bounds in reports.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Total-variation distance between two probability vectors.
#[must_use]
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Complementary Kolmogorov distribution `P(K > lambda)`.
#[must_use]
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[must_use]
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
    (d, p)
}

/// Mean and standard error over the columns of a replica-by-time table.
#[must_use]
pub fn column_mean_sem(table: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let cols = table.first().map_or(0, Vec::len);
    (0..cols)
        .map(|c| {
            let col: Vec<f64> = table.iter().map(|r| r[c]).collect();
            (mean(&col), sem(&col))
        })
        .collect()
}
