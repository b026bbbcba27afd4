//! Brute-force reference implementations. Nothing here calls into the fast
//! path: frame distances, minima, means and warping paths are recomputed
//! from scratch, with DTW evaluated by enumerating every monotone path.

use super::{Direction, MetricFamily, MetricKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest sequence length the oracle accepts (path enumeration is
/// exponential).
pub const ORACLE_MAX_FRAMES: usize = 8;

fn frame_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
    }
    for v in a {
        aa += v * v;
    }
    for v in b {
        bb += v * v;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        return 1.0;
    }
    let d = 1.0 - ab / (na * nb);
    if d < 0.0 {
        0.0
    } else if d > 2.0 {
        2.0
    } else {
        d
    }
}

fn frames(t: &Tensor) -> Vec<Vec<f64>> {
    let c = t.cols();
    t.data().chunks(c).map(|r| r.to_vec()).collect()
}

// max over a of min over b of d(X[a], Y[b])
fn max_min(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for a in x {
        let mut best = f64::INFINITY;
        for b in y {
            best = best.min(frame_distance(a, b));
        }
        worst = worst.max(best);
    }
    worst
}

fn mean_min(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for a in x {
        let mut best = f64::INFINITY;
        for b in y {
            best = best.min(frame_distance(a, b));
        }
        total += best;
    }
    total / x.len() as f64
}

fn enumerate_paths(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    i: usize,
    j: usize,
    acc: f64,
    best: &mut f64,
) {
    let acc = acc + frame_distance(&x[i], &y[j]);
    if i + 1 == x.len() && j + 1 == y.len() {
        *best = best.min(acc);
        return;
    }
    if i + 1 < x.len() {
        enumerate_paths(x, y, i + 1, j, acc, best);
    }
    if j + 1 < y.len() {
        enumerate_paths(x, y, i, j + 1, acc, best);
    }
    if i + 1 < x.len() && j + 1 < y.len() {
        enumerate_paths(x, y, i + 1, j + 1, acc, best);
    }
}

/// Recomputes `kind` between `x` and `y` by exhaustive enumeration.
/// Both sequences must have at most [`ORACLE_MAX_FRAMES`] frames.
pub fn oracle_metric(kind: MetricKind, x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.ndim() != 2 || y.ndim() != 2 || x.cols() != y.cols() {
        return Err(Error::dim("oracle_metric", x.shape(), y.shape()));
    }
    if x.rows() > ORACLE_MAX_FRAMES || y.rows() > ORACLE_MAX_FRAMES {
        return Err(Error::Usage(format!(
            "oracle supports at most {ORACLE_MAX_FRAMES} frames per sequence, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    let (xf, yf) = (frames(x), frames(y));
    let value = match (kind.family, kind.direction) {
        (MetricFamily::Hausdorff, Direction::Forward) => max_min(&xf, &yf),
        (MetricFamily::Hausdorff, Direction::Backward) => max_min(&yf, &xf),
        (MetricFamily::Hausdorff, Direction::Bidirectional) => {
            max_min(&xf, &yf).max(max_min(&yf, &xf))
        }
        (MetricFamily::DirectedMhm, Direction::Forward) => mean_min(&xf, &yf),
        (MetricFamily::DirectedMhm, Direction::Backward) => mean_min(&yf, &xf),
        (MetricFamily::DirectedMhm, Direction::Bidirectional) | (MetricFamily::BiMhm, _) => {
            mean_min(&xf, &yf) + mean_min(&yf, &xf)
        }
        (MetricFamily::Diagonal, _) => {
            if xf.len() != yf.len() {
                return Err(Error::Domain("diagonal needs equal lengths".into()));
            }
            let mut total = 0.0;
            for t in 0..xf.len() {
                total += frame_distance(&xf[t], &yf[t]);
            }
            total / xf.len() as f64
        }
        (MetricFamily::PlainDtw, _) => {
            let mut best = f64::INFINITY;
            enumerate_paths(&xf, &yf, 0, 0, 0.0, &mut best);
            best
        }
    };
    Ok(value)
}
