//! Forward kernels and vector-Jacobian products for the graph operations.
//!
//! The forward kernels are plain functions over [`Tensor`] so inference code
//! can call them without building a graph; the graph calls the same kernels,
//! which keeps training-time and evaluation-time arithmetic identical.

use std::f64::consts::PI;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Total soft mass below which a weighted mean falls back to its previous value.
pub const MASS_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `[n, k] x [k, m] -> [n, m]`
    MatMul,
    /// Elementwise sum of equal shapes.
    Add,
    /// Elementwise difference of equal shapes.
    Sub,
    /// `[n, m] + [m]`, the bias broadcast of a dense layer.
    AddRow,
    Scale(f64),
    Relu,
    /// `[n, m], [c, m] -> [n, c]` squared Euclidean distances.
    PairwiseSqDist,
    /// Row-wise softmax over the last axis. Masked-out entries are exactly zero.
    Softmax { mask: Option<Vec<bool>> },
    /// Row-wise log-sum-exp over the last axis, dropping that axis.
    LogSumExp,
    /// `points [n, m], means [c, m], variances [c] -> [n, c]` spherical
    /// Gaussian log-densities with covariance `variance * I`.
    GaussianLogDensity,
    /// `points [k, m], weights [k, c] (, fallback [c, m]) -> [c, m]`.
    ///
    /// Column `c` is `sum_i w_ic x_i / sum_i w_ic`. With a fallback input,
    /// columns whose mass is below [`MASS_FLOOR`] copy the fallback row.
    WeightedMean,
    /// Elementwise `exp`, mapping log-variances to positive variances.
    ExpParam,
    GatherRows(Vec<usize>),
    ConcatRows,
    /// `[r, c] -> [r, k]` picking `idx[i][j]` from row `i`.
    TakeCols(Vec<Vec<usize>>),
    Mean,
    Sum,
    Reshape(Vec<usize>),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::AddRow => "add_row",
            Op::Scale(_) => "scale",
            Op::Relu => "relu",
            Op::PairwiseSqDist => "pairwise_sqdist",
            Op::Softmax { .. } => "softmax",
            Op::LogSumExp => "log_sum_exp",
            Op::GaussianLogDensity => "gaussian_log_density",
            Op::WeightedMean => "weighted_mean",
            Op::ExpParam => "exp_param",
            Op::GatherRows(_) => "gather_rows",
            Op::ConcatRows => "concat_rows",
            Op::TakeCols(_) => "take_cols",
            Op::Mean => "mean",
            Op::Sum => "sum",
            Op::Reshape(_) => "reshape",
        }
    }
}

fn shape_err(op: &'static str, inputs: &[&Tensor]) -> Error {
    Error::Shape {
        op,
        shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

fn arity(op: &Op, inputs: &[&Tensor], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&inputs.len()) {
        Ok(())
    } else {
        Err(shape_err(op.name(), inputs))
    }
}

fn is_matrix(t: &Tensor) -> bool {
    t.shape().len() == 2
}

/// `(rows, cols)` when the last axis is the reduction axis.
fn last_axis(t: &Tensor) -> (usize, usize) {
    match t.shape().len() {
        0 => (1, 1),
        1 => (1, t.shape()[0]),
        _ => {
            let c = *t.shape().last().unwrap();
            (t.len() / c.max(1), c)
        }
    }
}

/// Evaluates `op` on `inputs`. The result is checked for finiteness.
pub fn forward(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    let out = match op {
        Op::MatMul => {
            arity(op, inputs, &[2])?;
            matmul(inputs[0], inputs[1])?
        }
        Op::Add | Op::Sub => {
            arity(op, inputs, &[2])?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(shape_err(op.name(), inputs));
            }
            let sign = if matches!(op, Op::Add) { 1.0 } else { -1.0 };
            let data = a.data().iter().zip(b.data()).map(|(x, y)| x + sign * y).collect();
            Tensor::new(a.shape().to_vec(), data)?
        }
        Op::AddRow => {
            arity(op, inputs, &[2])?;
            let (a, b) = (inputs[0], inputs[1]);
            if !is_matrix(a) || b.shape() != [a.shape()[1]] {
                return Err(shape_err(op.name(), inputs));
            }
            let m = b.len();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(k, x)| x + b.data()[k % m])
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        }
        Op::Scale(c) => {
            arity(op, inputs, &[1])?;
            let a = inputs[0];
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| c * x).collect())?
        }
        Op::Relu => {
            arity(op, inputs, &[1])?;
            let a = inputs[0];
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.max(0.0)).collect())?
        }
        Op::PairwiseSqDist => {
            arity(op, inputs, &[2])?;
            pairwise_sqdist(inputs[0], inputs[1])?
        }
        Op::Softmax { mask } => {
            arity(op, inputs, &[1])?;
            softmax_rows(inputs[0], mask.as_deref())?
        }
        Op::LogSumExp => {
            arity(op, inputs, &[1])?;
            log_sum_exp_rows(inputs[0])?
        }
        Op::GaussianLogDensity => {
            arity(op, inputs, &[3])?;
            gaussian_log_density(inputs[0], inputs[1], inputs[2])?
        }
        Op::WeightedMean => {
            arity(op, inputs, &[2, 3])?;
            weighted_mean(inputs[0], inputs[1], inputs.get(2).copied())?
        }
        Op::ExpParam => {
            arity(op, inputs, &[1])?;
            let a = inputs[0];
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.exp()).collect())?
        }
        Op::GatherRows(idx) => {
            arity(op, inputs, &[1])?;
            gather_rows(inputs[0], idx)?
        }
        Op::ConcatRows => {
            if inputs.is_empty() {
                return Err(shape_err(op.name(), inputs));
            }
            concat_rows(inputs)?
        }
        Op::TakeCols(idx) => {
            arity(op, inputs, &[1])?;
            take_cols(inputs[0], idx)?
        }
        Op::Mean | Op::Sum => {
            arity(op, inputs, &[1])?;
            let a = inputs[0];
            if a.is_empty() {
                return Err(shape_err(op.name(), inputs));
            }
            let s: f64 = a.data().iter().sum();
            if matches!(op, Op::Mean) {
                Tensor::scalar(s / a.len() as f64)
            } else {
                Tensor::scalar(s)
            }
        }
        Op::Reshape(shape) => {
            arity(op, inputs, &[1])?;
            inputs[0].clone().reshaped(shape.clone())?
        }
    };
    if !out.is_finite() {
        return Err(Error::NonFinite { op: op.name() });
    }
    Ok(out)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !is_matrix(a) || !is_matrix(b) || a.shape()[1] != b.shape()[0] {
        return Err(shape_err("matmul", &[a, b]));
    }
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::matrix(n, m, out)
}

/// `a^T b` without materializing the transpose.
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let arow = a.row(i);
        let brow = b.row(i);
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(k, m, out).expect("shape")
}

/// `a b^T` without materializing the transpose.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.shape()[0];
    let k = b.shape()[0];
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = a.row(i);
        for p in 0..k {
            out[i * k + p] = dot(arow, b.row(p));
        }
    }
    Tensor::matrix(n, k, out).expect("shape")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn pairwise_sqdist(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if !is_matrix(x) || !is_matrix(y) || x.shape()[1] != y.shape()[1] {
        return Err(shape_err("pairwise_sqdist", &[x, y]));
    }
    let (n, c) = (x.shape()[0], y.shape()[0]);
    let mut out = Vec::with_capacity(n * c);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..c {
            out.push(sq_dist(xi, y.row(j)));
        }
    }
    Tensor::matrix(n, c, out)
}

pub fn softmax_rows(x: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    if let Some(m) = mask {
        if m.len() != x.len() {
            return Err(Error::Shape {
                op: "softmax",
                shapes: vec![x.shape().to_vec(), vec![m.len()]],
            });
        }
    }
    let (r, c) = last_axis(x);
    let mut out = vec![0.0; x.len()];
    for i in 0..r {
        let row = &x.data()[i * c..(i + 1) * c];
        let keep = |j: usize| mask.is_none_or(|m| m[i * c + j]);
        let mut max = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if keep(j) && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!(
                "softmax: row {i} has no unmasked entries"
            )));
        }
        let mut total = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if keep(j) {
                let e = (v - max).exp();
                out[i * c + j] = e;
                total += e;
            }
        }
        for o in &mut out[i * c..(i + 1) * c] {
            *o /= total;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn log_sum_exp_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = last_axis(x);
    if c == 0 {
        return Err(shape_err("log_sum_exp", &[x]));
    }
    let mut out = Vec::with_capacity(r);
    for i in 0..r {
        let row = &x.data()[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - max).exp()).sum();
        out.push(max + s.ln());
    }
    let shape = match x.shape().len() {
        0 | 1 => Vec::new(),
        n => x.shape()[..n - 1].to_vec(),
    };
    Tensor::new(shape, out)
}

/// Log-density of `x` under a spherical Gaussian `N(mean, variance * I)`.
pub fn gaussian_log_pdf(x: &[f64], mean: &[f64], variance: f64) -> f64 {
    let m = x.len() as f64;
    -sq_dist(x, mean) / (2.0 * variance) - 0.5 * m * (2.0 * PI * variance).ln()
}

pub fn gaussian_log_density(points: &Tensor, means: &Tensor, variances: &Tensor) -> Result<Tensor> {
    if !is_matrix(points)
        || !is_matrix(means)
        || points.shape()[1] != means.shape()[1]
        || variances.shape() != [means.shape()[0]]
    {
        return Err(shape_err("gaussian_log_density", &[points, means, variances]));
    }
    if let Some(&v) = variances.data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveVariance {
            op: "gaussian_log_density",
            value: v,
        });
    }
    let (n, c) = (points.shape()[0], means.shape()[0]);
    let mut out = Vec::with_capacity(n * c);
    for i in 0..n {
        let xi = points.row(i);
        for j in 0..c {
            out.push(gaussian_log_pdf(xi, means.row(j), variances.data()[j]));
        }
    }
    Tensor::matrix(n, c, out)
}

fn column_mass(weights: &Tensor) -> Vec<f64> {
    let (k, c) = (weights.shape()[0], weights.shape()[1]);
    let mut mass = vec![0.0; c];
    for i in 0..k {
        for (j, m) in mass.iter_mut().enumerate() {
            *m += weights.data()[i * c + j];
        }
    }
    mass
}

pub fn weighted_mean(points: &Tensor, weights: &Tensor, fallback: Option<&Tensor>) -> Result<Tensor> {
    if !is_matrix(points) || !is_matrix(weights) || points.shape()[0] != weights.shape()[0] {
        let mut ins = vec![points, weights];
        ins.extend(fallback);
        return Err(shape_err("weighted_mean", &ins));
    }
    let (k, m) = (points.shape()[0], points.shape()[1]);
    let c = weights.shape()[1];
    if let Some(f) = fallback {
        if f.shape() != [c, m] {
            return Err(shape_err("weighted_mean", &[points, weights, f]));
        }
    }
    let mass = column_mass(weights);
    let mut out = vec![0.0; c * m];
    for j in 0..c {
        let orow = &mut out[j * m..(j + 1) * m];
        if mass[j] < MASS_FLOOR {
            match fallback {
                Some(f) => {
                    orow.copy_from_slice(f.row(j));
                    continue;
                }
                None if mass[j] <= 0.0 => {
                    return Err(Error::Numeric(format!(
                        "weighted_mean: column {j} has non-positive mass {}",
                        mass[j]
                    )))
                }
                None => {}
            }
        }
        for i in 0..k {
            let w = weights.data()[i * c + j];
            if w == 0.0 {
                continue;
            }
            for (o, x) in orow.iter_mut().zip(points.row(i)) {
                *o += w * x;
            }
        }
        for o in orow.iter_mut() {
            *o /= mass[j];
        }
    }
    Tensor::matrix(c, m, out)
}

fn row_shape(t: &Tensor, rows: usize) -> Vec<usize> {
    let mut shape = vec![rows];
    if t.shape().len() > 1 {
        shape.extend_from_slice(&t.shape()[1..]);
    }
    shape
}

pub fn gather_rows(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    if x.shape().is_empty() || idx.iter().any(|&i| i >= x.rows()) {
        return Err(Error::Shape {
            op: "gather_rows",
            shapes: vec![x.shape().to_vec(), idx.to_vec()],
        });
    }
    let mut data = Vec::with_capacity(idx.len() * x.cols());
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(row_shape(x, idx.len()), data)
}

pub fn concat_rows(inputs: &[&Tensor]) -> Result<Tensor> {
    let trailing = |t: &Tensor| -> Vec<usize> {
        if t.shape().len() > 1 {
            t.shape()[1..].to_vec()
        } else {
            Vec::new()
        }
    };
    let tail = trailing(inputs[0]);
    let mut rows = 0;
    let mut data = Vec::new();
    for t in inputs {
        if trailing(t) != tail {
            return Err(shape_err("concat_rows", inputs));
        }
        rows += if t.shape().is_empty() { 1 } else { t.shape()[0] };
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![rows];
    shape.extend(tail);
    Tensor::new(shape, data)
}

pub fn take_cols(x: &Tensor, idx: &[Vec<usize>]) -> Result<Tensor> {
    let bad = || Error::Shape {
        op: "take_cols",
        shapes: vec![x.shape().to_vec(), vec![idx.len()]],
    };
    if !is_matrix(x) || idx.len() != x.shape()[0] {
        return Err(bad());
    }
    let k = idx.first().map_or(0, |r| r.len());
    let c = x.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * k);
    for (i, row) in idx.iter().enumerate() {
        if row.len() != k || row.iter().any(|&j| j >= c) {
            return Err(bad());
        }
        data.extend(row.iter().map(|&j| x.data()[i * c + j]));
    }
    Tensor::matrix(idx.len(), k, data)
}

/// Gradients of the op's inputs given the output gradient `g`.
///
/// Only inputs flagged in `needs` get a tensor; the rest are `None`.
pub(crate) fn vjp(
    op: &Op,
    inputs: &[&Tensor],
    out: &Tensor,
    g: &Tensor,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let want = |i: usize| needs.get(i).copied().unwrap_or(false);
    let like = |t: &Tensor, data: Vec<f64>| Tensor::new(t.shape().to_vec(), data).expect("shape");
    match op {
        Op::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            vec![
                want(0).then(|| matmul_nt(g, b)),
                want(1).then(|| matmul_tn(a, g)),
            ]
        }
        Op::Add => vec![want(0).then(|| g.clone()), want(1).then(|| g.clone())],
        Op::Sub => vec![
            want(0).then(|| g.clone()),
            want(1).then(|| like(g, g.data().iter().map(|v| -v).collect())),
        ],
        Op::AddRow => {
            let m = inputs[1].len();
            let db = want(1).then(|| {
                let mut s = vec![0.0; m];
                for (k, v) in g.data().iter().enumerate() {
                    s[k % m] += v;
                }
                Tensor::vector(s)
            });
            vec![want(0).then(|| g.clone()), db]
        }
        Op::Scale(c) => vec![want(0).then(|| like(g, g.data().iter().map(|v| c * v).collect()))],
        Op::Relu => {
            let a = inputs[0];
            vec![want(0).then(|| {
                like(
                    a,
                    a.data()
                        .iter()
                        .zip(g.data())
                        .map(|(x, gv)| if *x > 0.0 { *gv } else { 0.0 })
                        .collect(),
                )
            })]
        }
        Op::PairwiseSqDist => {
            let (x, y) = (inputs[0], inputs[1]);
            let (n, c, m) = (x.shape()[0], y.shape()[0], x.shape()[1]);
            let mut dx = vec![0.0; n * m];
            let mut dy = vec![0.0; c * m];
            for i in 0..n {
                for j in 0..c {
                    let gij = g.data()[i * c + j];
                    if gij == 0.0 {
                        continue;
                    }
                    for p in 0..m {
                        let d = 2.0 * gij * (x.data()[i * m + p] - y.data()[j * m + p]);
                        dx[i * m + p] += d;
                        dy[j * m + p] -= d;
                    }
                }
            }
            vec![want(0).then(|| like(x, dx)), want(1).then(|| like(y, dy))]
        }
        Op::Softmax { .. } => {
            let (r, c) = last_axis(out);
            let mut dx = vec![0.0; out.len()];
            for i in 0..r {
                let y = &out.data()[i * c..(i + 1) * c];
                let gr = &g.data()[i * c..(i + 1) * c];
                let inner = dot(y, gr);
                for j in 0..c {
                    dx[i * c + j] = y[j] * (gr[j] - inner);
                }
            }
            vec![want(0).then(|| like(inputs[0], dx))]
        }
        Op::LogSumExp => {
            let x = inputs[0];
            let (r, c) = last_axis(x);
            let mut dx = vec![0.0; x.len()];
            for i in 0..r {
                let row = &x.data()[i * c..(i + 1) * c];
                let lse = out.data()[i];
                for j in 0..c {
                    dx[i * c + j] = g.data()[i] * (row[j] - lse).exp();
                }
            }
            vec![want(0).then(|| like(x, dx))]
        }
        Op::GaussianLogDensity => {
            let (p, mu, var) = (inputs[0], inputs[1], inputs[2]);
            let (n, c, m) = (p.shape()[0], mu.shape()[0], p.shape()[1]);
            let mut dp = vec![0.0; n * m];
            let mut dmu = vec![0.0; c * m];
            let mut dvar = vec![0.0; c];
            for i in 0..n {
                for j in 0..c {
                    let gij = g.data()[i * c + j];
                    if gij == 0.0 {
                        continue;
                    }
                    let v = var.data()[j];
                    let mut d2 = 0.0;
                    for q in 0..m {
                        let diff = p.data()[i * m + q] - mu.data()[j * m + q];
                        d2 += diff * diff;
                        let t = gij * diff / v;
                        dp[i * m + q] -= t;
                        dmu[j * m + q] += t;
                    }
                    dvar[j] += gij * (d2 / (2.0 * v * v) - m as f64 / (2.0 * v));
                }
            }
            vec![
                want(0).then(|| like(p, dp)),
                want(1).then(|| like(mu, dmu)),
                want(2).then(|| like(var, dvar)),
            ]
        }
        Op::WeightedMean => {
            let (p, w) = (inputs[0], inputs[1]);
            let (k, m) = (p.shape()[0], p.shape()[1]);
            let c = w.shape()[1];
            let mass = column_mass(w);
            let frozen: Vec<bool> = mass
                .iter()
                .map(|&s| inputs.len() == 3 && s < MASS_FLOOR)
                .collect();
            let mut dp = vec![0.0; k * m];
            let mut dw = vec![0.0; k * c];
            let mut df = vec![0.0; c * m];
            for j in 0..c {
                let gj = g.row(j);
                if frozen[j] {
                    df[j * m..(j + 1) * m].copy_from_slice(gj);
                    continue;
                }
                let oj = out.row(j);
                for i in 0..k {
                    let wij = w.data()[i * c + j];
                    let xi = p.row(i);
                    let mut acc = 0.0;
                    for q in 0..m {
                        dp[i * m + q] += gj[q] * wij / mass[j];
                        acc += gj[q] * (xi[q] - oj[q]);
                    }
                    dw[i * c + j] = acc / mass[j];
                }
            }
            let mut res = vec![want(0).then(|| like(p, dp)), want(1).then(|| like(w, dw))];
            if inputs.len() == 3 {
                res.push(want(2).then(|| like(inputs[2], df)));
            }
            res
        }
        Op::ExpParam => vec![want(0).then(|| {
            like(
                inputs[0],
                out.data().iter().zip(g.data()).map(|(y, gv)| y * gv).collect(),
            )
        })],
        Op::GatherRows(idx) => {
            let x = inputs[0];
            let cols = x.cols();
            vec![want(0).then(|| {
                let mut dx = vec![0.0; x.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for q in 0..cols {
                        dx[i * cols + q] += g.data()[r * cols + q];
                    }
                }
                like(x, dx)
            })]
        }
        Op::ConcatRows => {
            let mut offset = 0;
            inputs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let n = t.len();
                    let slice = &g.data()[offset..offset + n];
                    offset += n;
                    want(i).then(|| like(t, slice.to_vec()))
                })
                .collect()
        }
        Op::TakeCols(idx) => {
            let x = inputs[0];
            let c = x.shape()[1];
            vec![want(0).then(|| {
                let mut dx = vec![0.0; x.len()];
                let k = idx.first().map_or(0, |r| r.len());
                for (i, row) in idx.iter().enumerate() {
                    for (q, &j) in row.iter().enumerate() {
                        dx[i * c + j] += g.data()[i * k + q];
                    }
                }
                like(x, dx)
            })]
        }
        Op::Mean | Op::Sum => {
            let x = inputs[0];
            let scale = if matches!(op, Op::Mean) {
                1.0 / x.len() as f64
            } else {
                1.0
            };
            vec![want(0).then(|| Tensor::full(x.shape(), g.item() * scale))]
        }
        Op::Reshape(_) => vec![want(0).then(|| like(inputs[0], g.data().to_vec()))],
    }
}
