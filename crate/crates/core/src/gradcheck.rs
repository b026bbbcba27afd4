//! Central finite-difference checks of tape gradients.
//!
//! [`check_point`] compares the analytic gradient of a scalar function of
//! several tensors against `(f(x+h) - f(x-h)) / 2h` for every coordinate.
//! Points whose forward pass selects a min/max within [`TIE_EXCLUSION`] of
//! its runner-up are skipped, since the finite difference straddles a kink
//! there. [`run_suite`] drives the full set of components used by the CLI.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::data::FrameSequence;
use crate::episodic::{loss_vars, Episode, TrainConfig};
use crate::metrics;
use crate::relation::{hybrid_relation_on, IntraKind, PoolMode, RelationConfig, RelationFlags, RelationParams};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-3;
pub const TIE_EXCLUSION: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Worst relative error at one point, or `None` if the point sits too close
/// to a min/max tie (on the unperturbed or any perturbed evaluation).
pub fn check_point<F>(inputs: &[Tensor], f: F) -> Result<Option<f64>>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    if tape.selection_margin() < TIE_EXCLUSION {
        return Ok(None);
    }
    let grads = tape.backward(loss)?;

    let eval = |k: usize, e: usize, delta: f64| -> Result<(f64, f64)> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == k {
                    let mut data = t.data().to_vec();
                    data[e] += delta;
                    tape.leaf(Tensor::from_parts(t.shape().to_vec(), data))
                } else {
                    tape.leaf(t.clone())
                }
            })
            .collect();
        let out = f(&tape, &vars)?;
        let value = tape.value(out).item();
        Ok((value, tape.selection_margin()))
    };

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        for e in 0..input.len() {
            let (fp, mp) = eval(k, e, FD_STEP)?;
            let (fm, mm) = eval(k, e, -FD_STEP)?;
            if mp < TIE_EXCLUSION || mm < TIE_EXCLUSION {
                return Ok(None);
            }
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let a = analytic.map_or(0.0, |g| g.data()[e]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(Some(worst))
}

/// Worst error over `points` tie-free random points drawn by `sample`.
pub fn check_random<S, F>(rng: &mut ChaCha8Rng, points: usize, mut sample: S, f: F) -> Result<f64>
where
    S: FnMut(&mut ChaCha8Rng) -> Vec<Tensor>,
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < points {
        attempts += 1;
        if attempts > points * 20 + 100 {
            return Err(Error::Domain(format!(
                "only {done} of {points} sampled points were tie-free"
            )));
        }
        let inputs = sample(rng);
        if let Some(err) = check_point(&inputs, &f)? {
            worst = worst.max(err);
            done += 1;
        }
    }
    Ok(worst)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
}

type Sampler = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor> + Send + Sync>;
type Forward = Box<dyn Fn(&Tape, &[Var]) -> Result<Var> + Send + Sync>;

/// A named differentiable function together with a sampler for its inputs.
pub struct Case {
    pub name: &'static str,
    pub sample: Sampler,
    pub forward: Forward,
}

impl Case {
    pub fn run(&self, rng: &mut ChaCha8Rng, points: usize) -> Result<f64> {
        check_random(rng, points, &self.sample, &self.forward)
    }
}

/// Reduces any tensor to a scalar with fixed, non-uniform weights so that
/// every output element gets a distinct upstream gradient.
pub fn weighted_sum(tape: &Tape, v: Var) -> Result<Var> {
    let shape = tape.shape(v);
    let n: usize = shape.iter().product();
    let w = Tensor::from_parts(shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect());
    let w = tape.leaf(w);
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn shapes(list: &'static [&'static [usize]], scale: f64) -> Sampler {
    Box::new(move |rng| list.iter().map(|s| uniform(rng, s, scale)).collect())
}

fn case(
    name: &'static str,
    sample: Sampler,
    f: impl Fn(&Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
) -> Case {
    Case {
        name,
        sample,
        forward: Box::new(move |t, v| {
            let out = f(t, v)?;
            weighted_sum(t, out)
        }),
    }
}

/// One case per recorded tape primitive.
pub fn primitive_cases() -> Vec<Case> {
    vec![
        case("matmul", shapes(&[&[3, 4], &[4, 2]], 1.0), |t, v| t.matmul(v[0], v[1])),
        case("add", shapes(&[&[3, 4], &[3, 4]], 1.0), |t, v| t.add(v[0], v[1])),
        case("sub", shapes(&[&[3, 4], &[3, 4]], 1.0), |t, v| t.sub(v[0], v[1])),
        case("mul", shapes(&[&[3, 4], &[3, 4]], 1.0), |t, v| t.mul(v[0], v[1])),
        case("scale", shapes(&[&[3, 4]], 1.0), |t, v| Ok(t.scale(v[0], -1.7))),
        case("div_scalar", shapes(&[&[3, 4]], 1.0), |t, v| Ok(t.div_scalar(v[0], 3.0))),
        case("add_bias", shapes(&[&[3, 4], &[4]], 1.0), |t, v| t.add_bias(v[0], v[1])),
        case("transpose", shapes(&[&[3, 4]], 1.0), |t, v| t.transpose(v[0])),
        case("concat_cols", shapes(&[&[3, 2], &[3, 3]], 1.0), |t, v| t.concat_cols(v)),
        case("stack_rows", shapes(&[&[4], &[4], &[4]], 1.0), |t, v| t.stack_rows(v)),
        case("concat", shapes(&[&[2], &[], &[3]], 1.0), |t, v| t.concat(v)),
        case("row", shapes(&[&[3, 4]], 1.0), |t, v| t.row(v[0], 1)),
        case("tile_rows", shapes(&[&[4]], 1.0), |t, v| t.tile_rows(v[0], 3)),
        case("reshape", shapes(&[&[3, 4]], 1.0), |t, v| t.reshape(v[0], &[2, 6])),
        case("mean_rows", shapes(&[&[5, 3]], 1.0), |t, v| t.mean_rows(v[0])),
        case("mean", shapes(&[&[3, 4]], 1.0), |t, v| Ok(t.mean(v[0]))),
        case("set_mean", shapes(&[&[6]], 1.0), |t, v| Ok(t.set_mean(v[0]))),
        case("sum", shapes(&[&[3, 4]], 1.0), |t, v| Ok(t.sum(v[0]))),
        case("softmax", shapes(&[&[3, 5]], 2.0), |t, v| Ok(t.softmax(v[0]))),
        case("sigmoid", shapes(&[&[3, 4]], 3.0), |t, v| Ok(t.sigmoid(v[0]))),
        case("tanh", shapes(&[&[3, 4]], 2.0), |t, v| Ok(t.tanh(v[0]))),
        case("gelu", shapes(&[&[3, 4]], 3.0), |t, v| Ok(t.gelu(v[0]))),
        case("cosine_distance_matrix", shapes(&[&[3, 4], &[5, 4]], 1.0), |t, v| {
            t.cosine_distance_matrix(v[0], v[1])
        }),
        case("cosine_distance", shapes(&[&[4], &[4]], 1.0), |t, v| t.cosine_distance(v[0], v[1])),
        case("row_min", shapes(&[&[4, 5]], 1.0), |t, v| t.row_min(v[0])),
        case("col_min", shapes(&[&[4, 5]], 1.0), |t, v| t.col_min(v[0])),
        case("max_all", shapes(&[&[3, 4]], 1.0), |t, v| Ok(t.max_all(v[0]))),
        case("diag", shapes(&[&[4, 4]], 1.0), |t, v| t.diag(v[0])),
        case("dtw", shapes(&[&[4, 5]], 1.0), |t, v| t.dtw(v[0])),
        case("cross_entropy", shapes(&[&[3, 5]], 2.0), |t, v| t.cross_entropy(v[0], &[0, 3, 1])),
    ]
}

fn relation_case(name: &'static str, intra: IntraKind) -> Case {
    let template = RelationParams::zeros(RelationConfig::new(intra, 4, 2, 2)).expect("valid config");
    let n = template.iter().count();
    let shapes: Vec<Vec<usize>> = template.iter().map(|(_, t)| t.shape().to_vec()).collect();
    let sample: Sampler = Box::new(move |rng| {
        let mut v: Vec<Tensor> = shapes.iter().map(|s| uniform(rng, s, 0.5)).collect();
        v.extend((0..3).map(|_| uniform(rng, &[3, 4], 1.0)));
        v
    });
    case(name, sample, move |t, v| {
        let p = template.bind(&v[..n])?;
        let out = hybrid_relation_on(
            t,
            &v[n..n + 2],
            v[n + 2],
            &p,
            RelationFlags::FULL,
            PoolMode::SupportAndQuery,
        )?;
        let mut parts = out.supports;
        parts.push(out.query);
        t.concat_cols(&parts)
    })
}

fn episode_case() -> Case {
    let cfg = TrainConfig {
        way: 2,
        shot: 1,
        queries: 2,
        frames: 3,
        channels: 4,
        heads: 2,
        lambda: 0.5,
        ..TrainConfig::default()
    };
    let template = RelationParams::zeros(cfg.relation_config(2)).expect("valid config");
    let n = template.iter().count();
    let shapes: Vec<Vec<usize>> = template.iter().map(|(_, t)| t.shape().to_vec()).collect();
    let video = |label| FrameSequence {
        features: Tensor::zeros(&[3, 4]),
        label,
    };
    let episode = Episode {
        supports: vec![video(0), video(1)],
        queries: vec![video(1), video(0)],
        class_ids: vec![1, 0],
        video_ids: vec![0, 1, 2, 3],
        way: 2,
        shot: 1,
        seed: 0,
    };
    let sample: Sampler = Box::new(move |rng| {
        let mut v: Vec<Tensor> = shapes.iter().map(|s| uniform(rng, s, 0.5)).collect();
        v.extend((0..4).map(|_| uniform(rng, &[3, 4], 1.0)));
        v
    });
    Case {
        name: "episode loss",
        sample,
        forward: Box::new(move |t, v| {
            let p = template.bind(&v[..n])?;
            let (_, _, total, _) = loss_vars(t, &episode, &v[n..n + 2], &v[n + 2..], &p, &cfg)?;
            Ok(total)
        }),
    }
}

/// Worst relative error of one component of the suite.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub component: String,
    pub worst: f64,
    pub points: usize,
}

/// Every checked component: each tensor primitive, the hybrid relation
/// module for each intra-relation kind, Bi-MHM through its min routing and
/// the total loss of a 2-way 1-shot episode.
pub fn suite_cases() -> Vec<Case> {
    let mut cases: Vec<Case> = primitive_cases();
    cases.push(relation_case("relation msa", IntraKind::Msa));
    cases.push(relation_case("relation transformer", IntraKind::TransformerBlock));
    cases.push(relation_case("relation bilstm", IntraKind::BiLstm));
    cases.push(relation_case("relation bigru", IntraKind::BiGru));
    cases.push(Case {
        name: "bi_mhm",
        sample: shapes(&[&[5, 4], &[4, 4]], 1.0),
        forward: Box::new(|t, v| metrics::on_tape::bi_mhm(t, v[0], v[1])),
    });
    cases.push(episode_case());
    cases
}

/// Runs every suite case at `points` tie-free points. Each case draws from
/// its own stream, so the report only depends on `seed`.
pub fn run_suite(seed: u64, points: usize) -> Result<Vec<ComponentReport>> {
    suite_cases()
        .into_par_iter()
        .enumerate()
        .map(|(i, case)| {
            let mut rng = stream_rng(seed, Stream::GradCheck, i as u64);
            let worst = case.run(&mut rng, points)?;
            Ok(ComponentReport {
                component: case.name.to_string(),
                worst,
                points,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_seeded_and_passes() {
        let a = run_suite(3, 4).unwrap();
        let b = run_suite(3, 4).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.worst < DEFAULT_TOLERANCE, "{}: {}", r.component, r.worst);
        }
        let names: Vec<&str> = a.iter().map(|r| r.component.as_str()).collect();
        for want in ["matmul", "relation msa", "bi_mhm", "episode loss"] {
            assert!(names.contains(&want));
        }
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // |x|^2 with a deliberately detached half: numeric and analytic differ.
        let x = Tensor::vector(vec![0.4, -0.3]).unwrap();
        let err = check_point(&[x], |t, v| {
            let detached = t.leaf((*t.value(v[0])).clone());
            let sq = t.mul(v[0], detached)?;
            Ok(t.sum(sq))
        })
        .unwrap()
        .unwrap();
        assert!(err > 0.4);
    }
}
