use super::Tensor;
use crate::error::{Error, Result};

/// Norm below which a frame is treated as carrying no direction.
pub const COSINE_EPS: f64 = 1e-12;

fn require_matrix(op: &'static str, t: &Tensor) -> Result<()> {
    if t.ndim() != 2 {
        return Err(Error::dim(op, t.shape(), &[0, 0]));
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows() {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    require_matrix("transpose", a)?;
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

/// Softmax along the last axis, max-subtracted.
pub fn softmax(x: &Tensor) -> Tensor {
    let n = x.cols();
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(n) {
        softmax_in_place(row);
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-channel mean over the frame axis of a `T x C` sequence.
pub fn global_avg_pool(f: &Tensor) -> Result<Tensor> {
    if f.ndim() != 2 {
        return Err(Error::Domain(format!(
            "global_avg_pool expects a T x C sequence, got shape {:?}",
            f.shape()
        )));
    }
    let (t, c) = (f.rows(), f.cols());
    let mut out = vec![0.0; c];
    for row in f.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= t as f64;
    }
    Ok(Tensor::from_parts(vec![c], out))
}

/// Cosine distance `1 - <a,b>/(|a||b|)`, clamped to `[0, 2]`.
/// Returns 1.0 when either vector has (near) zero norm.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine_distance length mismatch");
    let na = norm(a);
    let nb = norm(b);
    if a == b && na >= COSINE_EPS {
        return 0.0;
    }
    cosine_from_parts(dot(a, b), na, nb)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn cosine_from_parts(dot: f64, na: f64, nb: f64) -> f64 {
    if na < COSINE_EPS || nb < COSINE_EPS {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// All pairwise frame distances between `x` (`N x C`) and `y` (`M x C`).
pub fn cosine_distance_matrix(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.ndim() != 2 || y.ndim() != 2 || x.cols() != y.cols() {
        return Err(Error::dim("cosine_distance_matrix", x.shape(), y.shape()));
    }
    let xn: Vec<f64> = x.row_iter().map(norm).collect();
    let yn: Vec<f64> = y.row_iter().map(norm).collect();
    let mut out = Vec::with_capacity(x.rows() * y.rows());
    for (xr, &nx) in x.row_iter().zip(&xn) {
        for (yr, &ny) in y.row_iter().zip(&yn) {
            // Identical frames are exactly zero apart, not 1 - (1 +- ulp).
            out.push(if xr == yr && nx >= COSINE_EPS {
                0.0
            } else {
                cosine_from_parts(dot(xr, yr), nx, ny)
            });
        }
    }
    Ok(Tensor::from_parts(vec![x.rows(), y.rows()], out))
}
