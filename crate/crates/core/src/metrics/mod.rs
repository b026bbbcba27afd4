//! Distances between two frame sequences.
//!
//! Sequences are `N x C` tensors; the local cost between two frames is the
//! cosine distance. The Hausdorff family treats each sequence as an
//! unordered set of frames:
//!
//! - `hausdorff`: `max(h(X,Y), h(Y,X))` with `h(X,Y) = max_a min_b d(a,b)`
//! - `directed_mhm`: `(1/N_x) sum_a min_b d(a,b)`
//! - `bi_mhm`: `directed_mhm(X,Y) + directed_mhm(Y,X)`
//!
//! `diagonal` and `plain_dtw` are order-aware baselines. Every function here
//! has a taped twin in [`on_tape`] that yields identical values.

mod oracle;

use std::fmt;
use std::str::FromStr;

pub use oracle::{oracle_metric, ORACLE_MAX_FRAMES};

use crate::error::{Error, Result};
use crate::tensor::{cosine_distance_matrix, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricFamily {
    Diagonal,
    PlainDtw,
    Hausdorff,
    DirectedMhm,
    BiMhm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// From the support side (first argument) to the query side.
    Forward,
    Backward,
    Bidirectional,
}

/// Metric selector. `BiMhm`, `Diagonal` and `PlainDtw` ignore the direction;
/// `DirectedMhm` with `Bidirectional` is `BiMhm`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MetricKind {
    pub family: MetricFamily,
    pub direction: Direction,
}

impl MetricKind {
    pub const DIAGONAL: Self = Self::bidirectional(MetricFamily::Diagonal);
    pub const PLAIN_DTW: Self = Self::bidirectional(MetricFamily::PlainDtw);
    pub const HAUSDORFF: Self = Self::bidirectional(MetricFamily::Hausdorff);
    pub const BI_MHM: Self = Self::bidirectional(MetricFamily::BiMhm);
    pub const DIRECTED_MHM: Self = Self {
        family: MetricFamily::DirectedMhm,
        direction: Direction::Forward,
    };

    pub const fn bidirectional(family: MetricFamily) -> Self {
        Self {
            family,
            direction: Direction::Bidirectional,
        }
    }

    pub const fn new(family: MetricFamily, direction: Direction) -> Self {
        Self { family, direction }
    }

    pub const NAMES: &'static str =
        "diagonal, plain-dtw, hausdorff[:forward|:backward], directed-mhm[:forward|:backward], bi-mhm";
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.family {
            MetricFamily::Diagonal => "diagonal",
            MetricFamily::PlainDtw => "plain-dtw",
            MetricFamily::Hausdorff => "hausdorff",
            MetricFamily::DirectedMhm => "directed-mhm",
            MetricFamily::BiMhm => "bi-mhm",
        };
        let suffix = match (self.family, self.direction) {
            (MetricFamily::Hausdorff | MetricFamily::DirectedMhm, Direction::Forward) => ":forward",
            (MetricFamily::Hausdorff | MetricFamily::DirectedMhm, Direction::Backward) => ":backward",
            (MetricFamily::DirectedMhm, Direction::Bidirectional) => ":bidirectional",
            _ => "",
        };
        f.pad(&format!("{name}{suffix}"))
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, dir) = match s.split_once(':') {
            Some((n, d)) => (n.to_string(), Some(d.to_string())),
            None => (s.clone(), None),
        };
        let family = match name.replace('_', "-").as_str() {
            "diagonal" => MetricFamily::Diagonal,
            "plain-dtw" | "dtw" => MetricFamily::PlainDtw,
            "hausdorff" => MetricFamily::Hausdorff,
            "directed-mhm" => MetricFamily::DirectedMhm,
            "bi-mhm" | "bimhm" => MetricFamily::BiMhm,
            _ => {
                return Err(Error::Usage(format!(
                    "unknown metric {s:?}; valid names: {}",
                    Self::NAMES
                )))
            }
        };
        let direction = match dir.as_deref() {
            None if family == MetricFamily::DirectedMhm => Direction::Forward,
            None | Some("bidirectional") => Direction::Bidirectional,
            Some("forward") => Direction::Forward,
            Some("backward") => Direction::Backward,
            Some(other) => {
                return Err(Error::Usage(format!(
                    "unknown metric direction {other:?} (forward, backward, bidirectional)"
                )))
            }
        };
        Ok(Self { family, direction })
    }
}

/// Cosine distances between every frame of `x` and every frame of `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix(Tensor);

impl DistanceMatrix {
    pub fn between(x: &Tensor, y: &Tensor) -> Result<Self> {
        check_pair(x, y)?;
        Ok(Self(cosine_distance_matrix(x, y)?))
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0.get(a, b)
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    fn row_mins(&self) -> Vec<f64> {
        self.0.row_iter().map(min_of).collect()
    }

    fn col_mins(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|b| min_of((0..self.rows()).map(|a| self.get(a, b))))
            .collect()
    }
}

fn min_of<I: IntoIterator<Item = impl std::borrow::Borrow<f64>>>(it: I) -> f64 {
    it.into_iter()
        .map(|v| *v.borrow())
        .fold(f64::INFINITY, |m, v| if v < m { v } else { m })
}

fn max_of(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, |m, v| if v > m { v } else { m })
}

fn check_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.ndim() != 2 || y.ndim() != 2 {
        return Err(Error::Domain(format!(
            "metrics need N x C frame sequences, got {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::dim("metric", x.shape(), y.shape()));
    }
    Ok(())
}

pub fn hausdorff(x: &Tensor, y: &Tensor) -> Result<f64> {
    let d = DistanceMatrix::between(x, y)?;
    Ok(max_of(&d.row_mins()).max(max_of(&d.col_mins())))
}

/// `max_a min_b d(a, b)`: the one-sided Hausdorff distance from `x` to `y`.
pub fn directed_hausdorff(x: &Tensor, y: &Tensor) -> Result<f64> {
    let d = DistanceMatrix::between(x, y)?;
    Ok(max_of(&d.row_mins()))
}

pub fn directed_mhm(x: &Tensor, y: &Tensor) -> Result<f64> {
    let d = DistanceMatrix::between(x, y)?;
    Ok(set_mean(&d.row_mins()))
}

pub fn bi_mhm(x: &Tensor, y: &Tensor) -> Result<f64> {
    let d = DistanceMatrix::between(x, y)?;
    Ok(set_mean(&d.row_mins()) + set_mean(&d.col_mins()))
}

/// Mean frame-by-frame distance; both sequences must have the same length.
pub fn diagonal(x: &Tensor, y: &Tensor) -> Result<f64> {
    check_pair(x, y)?;
    if x.rows() != y.rows() {
        return Err(Error::Domain(format!(
            "diagonal matching needs equal lengths, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    let d = DistanceMatrix::between(x, y)?;
    let n = d.rows();
    Ok((0..n).map(|t| d.get(t, t)).sum::<f64>() / n as f64)
}

/// Minimal summed cost over monotone warping paths with unit steps
/// down, right and diagonal, start and end cells included. Not normalised
/// by path length.
pub fn plain_dtw(x: &Tensor, y: &Tensor) -> Result<f64> {
    let d = DistanceMatrix::between(x, y)?;
    Ok(crate::tensor::dtw_cost(d.as_tensor()))
}

pub fn distance(kind: MetricKind, x: &Tensor, y: &Tensor) -> Result<f64> {
    use Direction::*;
    use MetricFamily::*;
    match (kind.family, kind.direction) {
        (Diagonal, _) => diagonal(x, y),
        (PlainDtw, _) => plain_dtw(x, y),
        (BiMhm, _) | (DirectedMhm, Bidirectional) => bi_mhm(x, y),
        (DirectedMhm, Forward) => directed_mhm(x, y),
        (DirectedMhm, Backward) => directed_mhm(y, x),
        (Hausdorff, Bidirectional) => hausdorff(x, y),
        (Hausdorff, Forward) => directed_hausdorff(x, y),
        (Hausdorff, Backward) => directed_hausdorff(y, x),
    }
}

fn set_mean(values: &[f64]) -> f64 {
    crate::tensor::order_free_mean(values)
}

/// Recorded versions of the metrics; gradients route through the selected
/// minima/maxima and the optimal warping path.
pub mod on_tape {
    use super::*;

    pub fn metric(tape: &Tape, kind: MetricKind, x: Var, y: Var) -> Result<Var> {
        use Direction::*;
        use MetricFamily::*;
        check_pair(&tape.value(x), &tape.value(y))?;
        match (kind.family, kind.direction) {
            (Diagonal, _) => diagonal(tape, x, y),
            (PlainDtw, _) => {
                let d = tape.cosine_distance_matrix(x, y)?;
                tape.dtw(d)
            }
            (BiMhm, _) | (DirectedMhm, Bidirectional) => bi_mhm(tape, x, y),
            (DirectedMhm, Forward) => directed_mhm(tape, x, y),
            (DirectedMhm, Backward) => directed_mhm(tape, y, x),
            (Hausdorff, dir) => {
                let d = tape.cosine_distance_matrix(x, y)?;
                let parts = match dir {
                    Forward => vec![tape.row_min(d)?],
                    Backward => vec![tape.col_min(d)?],
                    Bidirectional => vec![tape.row_min(d)?, tape.col_min(d)?],
                };
                let all = tape.concat(&parts)?;
                Ok(tape.max_all(all))
            }
        }
    }

    pub fn directed_mhm(tape: &Tape, x: Var, y: Var) -> Result<Var> {
        let d = tape.cosine_distance_matrix(x, y)?;
        let m = tape.row_min(d)?;
        Ok(tape.set_mean(m))
    }

    pub fn bi_mhm(tape: &Tape, x: Var, y: Var) -> Result<Var> {
        let d = tape.cosine_distance_matrix(x, y)?;
        let rows = tape.row_min(d)?;
        let cols = tape.col_min(d)?;
        let a = tape.set_mean(rows);
        let b = tape.set_mean(cols);
        tape.add(a, b)
    }

    pub fn diagonal(tape: &Tape, x: Var, y: Var) -> Result<Var> {
        let (xs, ys) = (tape.shape(x), tape.shape(y));
        if xs[0] != ys[0] {
            return Err(Error::Domain(format!(
                "diagonal matching needs equal lengths, got {} and {}",
                xs[0], ys[0]
            )));
        }
        let d = tape.cosine_distance_matrix(x, y)?;
        let diag = tape.diag(d)?;
        Ok(tape.mean(diag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn xy() -> (Tensor, Tensor) {
        (seq(&[&[1.0, 0.0], &[0.0, 1.0]]), seq(&[&[1.0, 0.0]]))
    }

    #[test]
    fn orthogonal_frames_examples() {
        let (x, y) = xy();
        assert_eq!(hausdorff(&x, &y).unwrap(), 1.0);
        assert_eq!(directed_hausdorff(&x, &y).unwrap(), 1.0);
        assert_eq!(directed_hausdorff(&y, &x).unwrap(), 0.0);
        assert_eq!(directed_mhm(&x, &y).unwrap(), 0.5);
        assert_eq!(bi_mhm(&x, &y).unwrap(), 0.5);
    }

    #[test]
    fn swapped_frames_examples() {
        let x = seq(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = seq(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(diagonal(&x, &y).unwrap(), 1.0);
        assert_eq!(plain_dtw(&x, &y).unwrap(), 2.0);
        assert_eq!(bi_mhm(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn identity_is_zero() {
        let x = seq(&[&[0.3, -1.2, 0.5], &[2.0, 0.1, -0.4], &[0.0, 0.7, 0.7]]);
        for kind in [
            MetricKind::DIAGONAL,
            MetricKind::PLAIN_DTW,
            MetricKind::HAUSDORFF,
            MetricKind::DIRECTED_MHM,
            MetricKind::BI_MHM,
        ] {
            assert_eq!(distance(kind, &x, &x).unwrap(), 0.0, "{kind}");
        }
    }

    #[test]
    fn input_errors() {
        let x = seq(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = seq(&[&[1.0, 0.0]]);
        assert!(matches!(diagonal(&x, &y), Err(Error::Domain(_))));
        let z = seq(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(bi_mhm(&x, &z), Err(Error::Dimension { .. })));
        let v = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(matches!(hausdorff(&v, &x), Err(Error::Domain(_))));
    }

    #[test]
    fn directed_bidirectional_is_bi_mhm() {
        let x = seq(&[&[1.0, 0.2], &[0.1, 1.0], &[-0.5, 0.5]]);
        let y = seq(&[&[0.9, 0.1], &[0.3, -1.0]]);
        let k = MetricKind::new(MetricFamily::DirectedMhm, Direction::Bidirectional);
        assert_eq!(distance(k, &x, &y).unwrap(), bi_mhm(&x, &y).unwrap());
        let back = MetricKind::new(MetricFamily::DirectedMhm, Direction::Backward);
        assert_eq!(distance(back, &x, &y).unwrap(), directed_mhm(&y, &x).unwrap());
    }

    #[test]
    fn names_round_trip() {
        for s in [
            "diagonal",
            "plain-dtw",
            "hausdorff",
            "hausdorff:forward",
            "directed-mhm:forward",
            "directed-mhm:backward",
            "bi-mhm",
        ] {
            let k: MetricKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        let err = "otam".parse::<MetricKind>().unwrap_err().to_string();
        assert!(err.contains("bi-mhm"), "{err}");
    }

    #[test]
    fn taped_metrics_agree_with_plain() {
        let x = seq(&[&[1.0, 0.2, 0.0], &[0.1, 1.0, 0.3], &[-0.5, 0.5, 0.9]]);
        let y = seq(&[&[0.9, 0.1, -0.2], &[0.3, -1.0, 0.4], &[0.0, 0.2, 1.0]]);
        for s in [
            "diagonal",
            "plain-dtw",
            "hausdorff",
            "hausdorff:forward",
            "hausdorff:backward",
            "directed-mhm:forward",
            "directed-mhm:backward",
            "bi-mhm",
        ] {
            let kind: MetricKind = s.parse().unwrap();
            let tape = Tape::new();
            let (xv, yv) = (tape.leaf(x.clone()), tape.leaf(y.clone()));
            let out = on_tape::metric(&tape, kind, xv, yv).unwrap();
            assert_eq!(tape.value(out).item(), distance(kind, &x, &y).unwrap(), "{s}");
        }
    }
}
