//! Finite-difference checks of every graph operation and of whole episode
//! losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, Graph, NodeId, Tensor};
use crate::episodes::Episode;
use crate::error::Result;
use crate::imp::ImpConfig;
use crate::model::{self, ModelKind, ModelParams, ParamNodes};

/// One named gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub report: GradCheckReport,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Contracts any tensor to a scalar with fixed pseudo-random weights, so
/// that every output element contributes a distinct gradient.
fn project(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let n = g.value(x).len();
    let flat = g.reshape(x, vec![1, n])?;
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.7548776662).fract() - 0.5).collect();
    let w = g.constant(Tensor::matrix(n, 1, w)?);
    let y = g.matmul(flat, w)?;
    g.sum(y)
}

type Builder = Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>>;

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor>, Builder)> {
    let m = |rng: &mut ChaCha8Rng, r, c| uniform(rng, &[r, c], -1.0, 1.0);
    // ReLU inputs are kept away from the kink at zero.
    let mut relu_in = m(rng, 3, 4);
    for v in relu_in.data_mut() {
        *v += 0.2 * v.signum();
    }
    vec![
        ("matmul", vec![m(rng, 3, 4), m(rng, 4, 2)], Box::new(|g: &mut Graph, p: &[NodeId]| {
            let y = g.matmul(p[0], p[1])?;
            project(g, y)
        })),
        ("add", vec![m(rng, 3, 4), m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.add(p[0], p[1])?;
            project(g, y)
        })),
        ("sub", vec![m(rng, 3, 4), m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.sub(p[0], p[1])?;
            project(g, y)
        })),
        ("add_row", vec![m(rng, 3, 4), uniform(rng, &[4], -1.0, 1.0)], Box::new(|g, p| {
            let y = g.add_row(p[0], p[1])?;
            project(g, y)
        })),
        ("scale", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.scale(p[0], -1.7)?;
            project(g, y)
        })),
        ("relu", vec![relu_in], Box::new(|g, p| {
            let y = g.relu(p[0])?;
            project(g, y)
        })),
        ("pairwise_sqdist", vec![m(rng, 3, 4), m(rng, 2, 4)], Box::new(|g, p| {
            let y = g.pairwise_sqdist(p[0], p[1])?;
            project(g, y)
        })),
        ("softmax", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.softmax(p[0], None)?;
            project(g, y)
        })),
        ("softmax_masked", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let mask = vec![true, false, true, true, true, true, false, true, false, true, true, true];
            let y = g.softmax(p[0], Some(mask))?;
            project(g, y)
        })),
        ("log_sum_exp", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.log_sum_exp(p[0])?;
            project(g, y)
        })),
        (
            "gaussian_log_density",
            vec![m(rng, 3, 4), m(rng, 2, 4), uniform(rng, &[2], 0.5, 2.0)],
            Box::new(|g, p| {
                let y = g.gaussian_log_density(p[0], p[1], p[2])?;
                project(g, y)
            }),
        ),
        ("weighted_mean", vec![m(rng, 4, 3), uniform(rng, &[4, 2], 0.2, 1.2)], Box::new(|g, p| {
            let y = g.weighted_mean(p[0], p[1], None)?;
            project(g, y)
        })),
        ("weighted_mean_fallback", vec![m(rng, 4, 3), m(rng, 2, 3)], Box::new(|g, p| {
            let w = g.constant(Tensor::matrix(4, 2, vec![0.3, 0.0, 1.0, 0.0, 0.5, 0.0, 0.2, 0.0])?);
            let y = g.weighted_mean(p[0], w, Some(p[1]))?;
            project(g, y)
        })),
        ("exp_param", vec![uniform(rng, &[3], -1.0, 1.0)], Box::new(|g, p| {
            let y = g.exp_param(p[0])?;
            project(g, y)
        })),
        ("gather_rows", vec![m(rng, 4, 3)], Box::new(|g, p| {
            let y = g.gather_rows(p[0], vec![2, 0, 2])?;
            project(g, y)
        })),
        ("concat_rows", vec![m(rng, 2, 3), m(rng, 1, 3)], Box::new(|g, p| {
            let y = g.concat_rows(&[p[0], p[1]])?;
            project(g, y)
        })),
        ("take_cols", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.take_cols(p[0], vec![vec![0, 3], vec![1, 1], vec![2, 0]])?;
            project(g, y)
        })),
        ("mean", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.mean(p[0])?;
            g.scale(y, 2.5)
        })),
        ("sum", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.sum(p[0])?;
            g.scale(y, -0.5)
        })),
        ("reshape", vec![m(rng, 3, 4)], Box::new(|g, p| {
            let y = g.reshape(p[0], vec![4, 3])?;
            project(g, y)
        })),
        ("cross_entropy", vec![m(rng, 3, 4)], Box::new(|g, p| g.cross_entropy(p[0], &[2, 0, 3]))),
    ]
}

/// Checks every graph operation on random inputs drawn from `seed`.
pub fn check_ops(seed: u64, epsilon: f64, tolerance: f64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op_cases(&mut rng)
        .into_iter()
        .map(|(name, inputs, f)| {
            Ok(CheckResult {
                name: name.to_string(),
                report: grad_check(f, &inputs, epsilon, tolerance)?,
            })
        })
        .collect()
}

/// Checks the training loss of `kind` on `episode` with respect to every
/// model parameter, including both log-variances.
pub fn check_episode(
    params: &ModelParams,
    kind: ModelKind,
    episode: &Episode,
    config: &ImpConfig,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let n_layers = params.embedding.layers.len();
    grad_check(
        |g, ids| {
            let layers = (0..n_layers).map(|l| (ids[2 * l], ids[2 * l + 1])).collect();
            let nodes = ParamNodes::from_leaves(g, layers, ids[2 * n_layers], ids[2 * n_layers + 1])?;
            Ok(model::episode_loss(g, &nodes, kind, episode, config)?.loss)
        },
        &tensors,
        epsilon,
        tolerance,
    )
}
