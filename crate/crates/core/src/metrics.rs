//! Episode accuracy intervals and external clustering indices.
//!
//! NMI and AMI use the arithmetic mean of the two entropies as normalizer
//! and natural logarithms throughout.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Mean accuracy and the half-width of its 95% normal-approximation interval.
pub fn accuracy_ci(per_episode: &[f64]) -> Result<(f64, f64)> {
    let e = per_episode.len();
    if e < 2 {
        return Err(Error::Insufficient(format!(
            "a confidence interval needs at least 2 episodes, got {e}"
        )));
    }
    let n = e as f64;
    let mean = per_episode.iter().sum::<f64>() / n;
    let var = per_episode.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, 1.96 * var.sqrt() / n.sqrt()))
}

/// Counts of points per (predicted cluster, true class), with both label
/// sets compacted to `0..k` in increasing label order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    // Re-number in sorted label order so the table does not depend on first appearance.
    for (k, v) in ids.values_mut().enumerate() {
        *v = k;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::InvalidArgument(format!(
                "prediction has {} labels, truth has {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Insufficient("clustering metrics need at least one point".into()));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut table = vec![vec![0u64; kt]; kp];
        for (a, b) in p.iter().zip(&t) {
            table[*a][*b] += 1;
        }
        Ok(Contingency {
            table,
            n: pred.len() as u64,
        })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut s = vec![0; self.table.first().map_or(0, Vec::len)];
        for r in &self.table {
            for (c, v) in s.iter_mut().zip(r) {
                *c += v;
            }
        }
        s
    }

    /// True when the two labelings are the same partition.
    pub fn is_bijective(&self) -> bool {
        self.table.len() == self.col_sums().len()
            && self.table.iter().all(|r| r.iter().filter(|&&v| v > 0).count() == 1)
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let (a, b) = (self.row_sums(), self.col_sums());
        let mut mi = 0.0;
        for (i, r) in self.table.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v > 0 {
                    let v = v as f64;
                    mi += v / n * (n * v / (a[i] as f64 * b[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }
}

fn entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Fraction of points that belong to the majority class of their cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = Contingency::new(pred, truth)?;
    let hits: u64 = t.table.iter().map(|r| *r.iter().max().unwrap_or(&0)).sum();
    Ok(hits as f64 / t.n as f64)
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = Contingency::new(pred, truth)?;
    if t.is_bijective() {
        return Ok(1.0);
    }
    let hp = entropy(&t.row_sums(), t.n);
    let ht = entropy(&t.col_sums(), t.n);
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    Ok(t.mutual_information() / (0.5 * (hp + ht)))
}

/// Expected mutual information between random partitions with the same
/// cluster sizes (hypergeometric model).
pub fn expected_mutual_information(t: &Contingency) -> f64 {
    let n = t.n as usize;
    let nf = n as f64;
    let mut ln_fact = vec![0.0; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let (a, b) = (t.row_sums(), t.col_sums());
    let mut emi = 0.0;
    for &ai in &a {
        let ai = ai as usize;
        for &bj in &b {
            let bj = bj as usize;
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = ln_fact[ai] + ln_fact[bj] + ln_fact[n - ai] + ln_fact[n - bj] - ln_fact[n];
            for nij in lo..=hi {
                let v = nij as f64;
                let term = v / nf * (nf * v / (ai as f64 * bj as f64)).ln();
                let ln_p = fixed
                    - ln_fact[nij]
                    - ln_fact[ai - nij]
                    - ln_fact[bj - nij]
                    - ln_fact[n + nij - ai - bj];
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

pub fn ami(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = Contingency::new(pred, truth)?;
    if t.is_bijective() {
        return Ok(1.0);
    }
    let mi = t.mutual_information();
    let emi = expected_mutual_information(&t);
    let norm = 0.5 * (entropy(&t.row_sums(), t.n) + entropy(&t.col_sums(), t.n));
    let mut denom = norm - emi;
    if denom.abs() < f64::EPSILON {
        denom = f64::EPSILON.copysign(denom);
    }
    Ok((mi - emi) / denom)
}
