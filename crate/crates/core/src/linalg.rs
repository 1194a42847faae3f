//! Dense matrix helpers shared by the model modules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Self-loop symmetric normalization `D^{-1/2} (A + I) D^{-1/2}`.
pub fn normalized_adjacency(adjacency: &Mat) -> Mat {
    let n = adjacency.nrows();
    let mut a = adjacency.clone();
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = a.row(i).iter().sum();
            1.0 / deg.sqrt()
        })
        .collect();
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

/// Adds a `1 x cols` bias row to every row of `m`.
pub fn add_row_bias(m: &mut Mat, bias: &Mat) {
    debug_assert_eq!(bias.nrows(), 1);
    debug_assert_eq!(bias.ncols(), m.ncols());
    for j in 0..m.ncols() {
        let b = bias[(0, j)];
        for v in m.column_mut(j).iter_mut() {
            *v += b;
        }
    }
}

pub fn column_sums(m: &Mat) -> Mat {
    Mat::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

/// Mean over rows, as a `1 x cols` matrix.
pub fn row_mean(m: &Mat) -> Mat {
    let n = m.nrows().max(1) as f64;
    Mat::from_fn(1, m.ncols(), |_, j| m.column(j).sum() / n)
}

/// Rescales all entries into [0, 1]. A constant matrix maps to zeros.
pub fn min_max_scale(m: &Mat) -> Mat {
    let lo = m.min();
    let hi = m.max();
    let span = hi - lo;
    if span <= 0.0 || !span.is_finite() {
        return Mat::zeros(m.nrows(), m.ncols());
    }
    m.map(|v| (v - lo) / span)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `sigmoid(F F^T)`.
pub fn sigmoid_gram(f: &Mat) -> Mat {
    (f * f.transpose()).map(sigmoid)
}

/// Gradient of a scalar through `C = sigmoid(F F^T)` with respect to `F`.
pub fn sigmoid_gram_backward(f: &Mat, c: &Mat, d_c: &Mat) -> Mat {
    let d_s = d_c.component_mul(&c.map(|v| v * (1.0 - v)));
    (&d_s + d_s.transpose()) * f
}

/// First non-finite entry in row-major scan order.
pub fn first_non_finite(m: &Mat) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

pub fn check_shape(field: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Shape {
            field: field.to_string(),
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// `aᵀ b` through the blocked product (nalgebra's `tr_mul` is a plain loop).
pub fn t_mul(a: &Mat, b: &Mat) -> Mat {
    a.transpose() * b
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn row_vec(m: &Mat, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}
