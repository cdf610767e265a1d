//! Dense matrix exponentials.

use nalgebra::{DMatrix, DVector};

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(t M)` by Taylor scaling and squaring, with relative truncation target
/// `1e-16` per scaled step.
///
/// The diagonal is first shifted by `c = max(0, -min_i M_ii)`, so for a
/// Metzler matrix every Taylor term is entrywise nonnegative and so is the
/// result.
#[must_use]
pub fn expm(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    if t == 0.0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    let shift = (0..n).map(|i| -m[(i, i)]).fold(0.0, f64::max);
    let mut b = m * t;
    for i in 0..n {
        b[(i, i)] += shift * t;
    }
    let norm = inf_norm(&b);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    b *= scale;
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=60 {
        term = &term * &b / f64::from(k);
        result += &term;
        if inf_norm(&term) <= 1e-17 * inf_norm(&result) {
            break;
        }
    }
    result *= (-shift * t * scale).exp();
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `exp(t M) v` by Taylor stepping, without forming the exponential.
#[must_use]
pub fn expm_action(m: &DMatrix<f64>, t: f64, v: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows();
    if t == 0.0 {
        return v.clone();
    }
    let shift = (0..n).map(|i| -m[(i, i)]).fold(0.0, f64::max);
    let mut b = m.clone();
    for i in 0..n {
        b[(i, i)] += shift;
    }
    let norm = inf_norm(&b) * t.abs();
    let steps = (norm / 0.5).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let damp = (-shift * h).exp();
    let mut x = v.clone();
    for _ in 0..steps {
        let mut acc = x.clone();
        let mut term = x.clone();
        for k in 1..=60 {
            term = &b * &term * (h / f64::from(k));
            acc += &term;
            if term.amax() <= 1e-17 * acc.amax() {
                break;
            }
        }
        x = acc * damp;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_state_generator() {
        let (a, b) = (3.0, 1.0);
        let q = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
        let t = 0.7;
        let e = expm(&q, t);
        let s = a + b;
        let decay = (-s * t).exp();
        assert_abs_diff_eq!(e[(0, 0)], (b + a * decay) / s, epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)], (a - a * decay) / s, epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 0)], (b - b * decay) / s, epsilon = 1e-14);
    }

    #[test]
    fn action_matches_full_exponential() {
        let m = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.5, 0.3, -1.0, 0.2, -0.4, 0.7, 0.1]);
        let v = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let full = expm(&m, 2.3) * &v;
        let act = expm_action(&m, 2.3, &v);
        for i in 0..3 {
            assert_abs_diff_eq!(full[i], act[i], epsilon = 1e-12);
        }
    }
}
