//! External clustering validity indices.
//!
//! All scores are computed from a [`Contingency`] table, so they are
//! invariant under relabeling of either partition. Label ids need not be
//! contiguous.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Co-occurrence counts: rows are predicted clusters, columns true classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::InvalidInput(format!(
                "label vectors differ in length: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::InvalidInput("empty label vectors".into()));
        }
        let (p, rows) = compact(pred);
        let (t, cols) = compact(truth);
        let mut counts = vec![vec![0u64; cols]; rows];
        for (a, b) in p.iter().zip(&t) {
            counts[*a][*b] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Contingency {
            counts,
            row_sums,
            col_sums,
            n: pred.len() as u64,
        })
    }

    /// True when both partitions group the samples identically.
    pub fn same_partition(&self) -> bool {
        self.counts.len() == self.col_sums.len()
            && self
                .counts
                .iter()
                .all(|r| r.iter().filter(|c| **c > 0).count() == 1)
    }
}

/// Minimum-cost assignment for a square cost matrix; `result[row] = column`.
///
/// Shortest augmenting path with row/column potentials, `O(n^3)`.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based arrays with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Best one-to-one matching of clusters to classes.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let size = ct.counts.len().max(ct.col_sums.len());
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    let c = ct.counts.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0);
                    -(c as f64)
                })
                .collect()
        })
        .collect();
    let matched: f64 = hungarian_match(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| -cost[i][j])
        .sum();
    Ok(matched / ct.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let n = ct.n as f64;
    let hp = entropy(&ct.row_sums, n);
    let ht = entropy(&ct.col_sums, n);
    if ct.same_partition() {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in ct.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (ct.row_sums[i] as f64 * ct.col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let hits: u64 = ct.counts.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / ct.n as f64)
}

fn pairs(c: u64) -> f64 {
    (c * c.saturating_sub(1) / 2) as f64
}

struct PairCounts {
    both: f64,
    pred: f64,
    truth: f64,
    total: f64,
}

fn pair_counts(ct: &Contingency) -> PairCounts {
    PairCounts {
        both: ct.counts.iter().flatten().map(|&c| pairs(c)).sum(),
        pred: ct.row_sums.iter().map(|&c| pairs(c)).sum(),
        truth: ct.col_sums.iter().map(|&c| pairs(c)).sum(),
        total: pairs(ct.n),
    }
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let pc = pair_counts(&ct);
    if pc.total == 0.0 {
        return Ok(if ct.same_partition() { 1.0 } else { 0.0 });
    }
    let expected = pc.pred * pc.truth / pc.total;
    let max = 0.5 * (pc.pred + pc.truth);
    if max == expected {
        return Ok(if ct.same_partition() { 1.0 } else { 0.0 });
    }
    Ok((pc.both - expected) / (max - expected))
}

/// Pairwise F1 over same-cluster sample pairs.
pub fn f_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let pc = pair_counts(&ct);
    if pc.pred == 0.0 && pc.truth == 0.0 {
        // Both partitions are all singletons.
        return Ok(1.0);
    }
    let precision = if pc.pred > 0.0 { pc.both / pc.pred } else { 0.0 };
    let recall = if pc.truth > 0.0 { pc.both / pc.truth } else { 0.0 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
    pub ari: f64,
    pub fscore: f64,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Scores> {
    Ok(Scores {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        purity: purity(pred, truth)?,
        ari: ari(pred, truth)?,
        fscore: f_score(pred, truth)?,
    })
}
