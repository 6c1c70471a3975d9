//! Dirichlet-multinomial transition statistics.
//!
//! Column `j` of a [`HyperMatrix`] is the Dirichlet prior over the multinomial
//! of views that follow view `j`; column `j` of a [`CountMatrix`] holds the
//! observed successor counts of `j`. Together they are sufficient statistics
//! for the posterior predictive
//!
//! ```text
//! p(i | j) = (alpha[i][j] + f[i][j]) / sum_k (alpha[k][j] + f[k][j])
//! ```
//!
//! Hyperparameters are learned by maximizing the Dirichlet-multinomial
//! evidence of count data pooled across environments, one column at a time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::view_model::ViewId;

/// Smallest hyperparameter value the optimizer will produce.
pub const ALPHA_FLOOR: f64 = 1e-6;

/// Largest hyperparameter value the optimizer will produce.
pub const ALPHA_CEIL: f64 = 1e8;

/// ν×ν matrix of positive Dirichlet pseudo-counts, `alpha[i][j]` for `j → i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHyper", into = "RawHyper")]
pub struct HyperMatrix {
    nu: usize,
    alpha: Vec<f64>,
    col_sums: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawHyper {
    nu: usize,
    alpha: Vec<f64>,
}

impl TryFrom<RawHyper> for HyperMatrix {
    type Error = Error;
    fn try_from(raw: RawHyper) -> Result<Self> {
        HyperMatrix::from_row_major(raw.nu, raw.alpha)
    }
}

impl From<HyperMatrix> for RawHyper {
    fn from(h: HyperMatrix) -> Self {
        RawHyper {
            nu: h.nu,
            alpha: h.alpha,
        }
    }
}

impl HyperMatrix {
    /// Every entry set to `value`.
    pub fn uniform(nu: usize, value: f64) -> Result<Self> {
        Self::from_row_major(nu, vec![value; nu * nu])
    }

    pub fn from_row_major(nu: usize, alpha: Vec<f64>) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidInput("hyper matrix needs nu >= 1".into()));
        }
        if alpha.len() != nu * nu {
            return Err(Error::DimensionMismatch {
                expected: nu * nu,
                actual: alpha.len(),
            });
        }
        if let Some(bad) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Domain(format!(
                "hyperparameters must be finite and positive, found {bad}"
            )));
        }
        let col_sums = (0..nu)
            .map(|j| (0..nu).map(|i| alpha[i * nu + j]).sum())
            .collect();
        Ok(Self {
            nu,
            alpha,
            col_sums,
        })
    }

    /// Builds a matrix from per-column vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let nu = columns.len();
        let mut alpha = vec![0.0; nu * nu];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != nu {
                return Err(Error::DimensionMismatch {
                    expected: nu,
                    actual: col.len(),
                });
            }
            for (i, a) in col.iter().enumerate() {
                alpha[i * nu + j] = *a;
            }
        }
        Self::from_row_major(nu, alpha)
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.nu + j]
    }

    /// Cached column sum ᾱ_j.
    pub fn col_sum(&self, j: usize) -> f64 {
        self.col_sums[j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nu).map(|i| self.get(i, j)).collect()
    }

    pub fn row_major(&self) -> &[f64] {
        &self.alpha
    }
}

/// ν×ν transition counts, `f[i][j]` = number of times view `i` followed view `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCounts", into = "RawCounts")]
pub struct CountMatrix {
    nu: usize,
    f: Vec<u64>,
    col_sums: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawCounts {
    nu: usize,
    counts: Vec<u64>,
}

impl TryFrom<RawCounts> for CountMatrix {
    type Error = Error;
    fn try_from(raw: RawCounts) -> Result<Self> {
        CountMatrix::from_row_major(raw.nu, raw.counts)
    }
}

impl From<CountMatrix> for RawCounts {
    fn from(c: CountMatrix) -> Self {
        RawCounts {
            nu: c.nu,
            counts: c.f,
        }
    }
}

impl CountMatrix {
    pub fn zeros(nu: usize) -> Self {
        Self {
            nu,
            f: vec![0; nu * nu],
            col_sums: vec![0; nu],
        }
    }

    pub fn from_row_major(nu: usize, f: Vec<u64>) -> Result<Self> {
        if f.len() != nu * nu {
            return Err(Error::DimensionMismatch {
                expected: nu * nu,
                actual: f.len(),
            });
        }
        let col_sums = (0..nu)
            .map(|j| (0..nu).map(|i| f[i * nu + j]).sum())
            .collect();
        Ok(Self { nu, f, col_sums })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.f[i * self.nu + j]
    }

    /// Cached column sum f̄_{|j}.
    pub fn col_sum(&self, j: usize) -> u64 {
        self.col_sums[j]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.nu).map(|i| self.get(i, j)).collect()
    }

    pub fn row_major(&self) -> &[u64] {
        &self.f
    }

    pub fn total(&self) -> u64 {
        self.col_sums.iter().sum()
    }

    /// Records one transition `from → to`.
    pub fn increment(&mut self, from: ViewId, to: ViewId) {
        let (i, j) = (to.index(), from.index());
        assert!(i < self.nu && j < self.nu, "view index out of range");
        self.f[i * self.nu + j] += 1;
        self.col_sums[j] += 1;
    }

    /// Adds `count` observations of the transition `from → to`.
    pub fn add(&mut self, from: ViewId, to: ViewId, count: u64) {
        let (i, j) = (to.index(), from.index());
        self.f[i * self.nu + j] += count;
        self.col_sums[j] += count;
    }

    /// Element-wise sum of two matrices of equal size.
    pub fn merged(&self, other: &CountMatrix) -> Result<CountMatrix> {
        if self.nu != other.nu {
            return Err(Error::DimensionMismatch {
                expected: self.nu,
                actual: other.nu,
            });
        }
        let f = self.f.iter().zip(&other.f).map(|(a, b)| a + b).collect();
        CountMatrix::from_row_major(self.nu, f)
    }
}

/// Per-environment count matrices sharing one view alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDataset {
    environments: Vec<CountMatrix>,
}

impl TrainingDataset {
    pub fn new(environments: Vec<CountMatrix>) -> Result<Self> {
        let first = environments
            .first()
            .ok_or_else(|| Error::InvalidInput("training dataset needs at least one environment".into()))?;
        let nu = first.nu();
        if let Some(bad) = environments.iter().find(|c| c.nu() != nu) {
            return Err(Error::DimensionMismatch {
                expected: nu,
                actual: bad.nu(),
            });
        }
        Ok(Self { environments })
    }

    pub fn nu(&self) -> usize {
        self.environments[0].nu()
    }

    pub fn environments(&self) -> &[CountMatrix] {
        &self.environments
    }

    /// Count columns for view `j`, one per environment.
    pub fn columns(&self, j: usize) -> Vec<Vec<u64>> {
        self.environments.iter().map(|c| c.column(j)).collect()
    }

    /// Sum of all environments' counts.
    pub fn pooled(&self) -> CountMatrix {
        let mut acc = CountMatrix::zeros(self.nu());
        for env in &self.environments {
            acc = acc.merged(env).expect("nu checked at construction");
        }
        acc
    }
}

/// Posterior predictive probability that view `i` follows view `j`.
pub fn predictive(alpha: &HyperMatrix, counts: &CountMatrix, i: ViewId, j: ViewId) -> f64 {
    predictive_weighted(alpha, counts, 1.0, i.index(), j.index())
}

/// Predictive with the counts scaled by `weight` before entering the ratio.
pub fn predictive_weighted(
    alpha: &HyperMatrix,
    counts: &CountMatrix,
    weight: f64,
    i: usize,
    j: usize,
) -> f64 {
    let num = alpha.get(i, j) + weight * counts.get(i, j) as f64;
    let den = alpha.col_sum(j) + weight * counts.col_sum(j) as f64;
    num / den
}

/// Full predictive distribution over successors of view `j`.
pub fn predictive_column(alpha: &HyperMatrix, counts: &CountMatrix, weight: f64, j: usize) -> Vec<f64> {
    (0..alpha.nu())
        .map(|i| predictive_weighted(alpha, counts, weight, i, j))
        .collect()
}

/// `ln Γ(a + n) − ln Γ(a)`, exactly zero when `n == 0`.
fn ln_rising(a: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        ln_gamma(a + n as f64) - ln_gamma(a)
    }
}

fn check_column(alpha_col: &[f64], data_cols: &[Vec<u64>]) -> Result<()> {
    if let Some(bad) = alpha_col.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Domain(format!(
            "alpha entries must be positive and finite, found {bad}"
        )));
    }
    if let Some(col) = data_cols.iter().find(|c| c.len() != alpha_col.len()) {
        return Err(Error::DimensionMismatch {
            expected: alpha_col.len(),
            actual: col.len(),
        });
    }
    Ok(())
}

/// Log of the Dirichlet-multinomial evidence of `data_cols` (one count column
/// per environment) under the prior column `alpha_col`.
pub fn log_evidence(alpha_col: &[f64], data_cols: &[Vec<u64>]) -> Result<f64> {
    check_column(alpha_col, data_cols)?;
    Ok(log_evidence_unchecked(alpha_col, data_cols))
}

fn log_evidence_unchecked(alpha_col: &[f64], data_cols: &[Vec<u64>]) -> f64 {
    let alpha_sum: f64 = alpha_col.iter().sum();
    data_cols
        .iter()
        .map(|col| {
            let total: u64 = col.iter().sum();
            let per_view: f64 = col.iter().zip(alpha_col).map(|(&f, &a)| ln_rising(a, f)).sum();
            per_view - ln_rising(alpha_sum, total)
        })
        .sum()
}

/// Gradient of [`log_evidence`] with respect to each entry of `alpha_col`.
pub fn log_evidence_grad(alpha_col: &[f64], data_cols: &[Vec<u64>]) -> Result<Vec<f64>> {
    check_column(alpha_col, data_cols)?;
    Ok(log_evidence_grad_unchecked(alpha_col, data_cols))
}

fn log_evidence_grad_unchecked(alpha_col: &[f64], data_cols: &[Vec<u64>]) -> Vec<f64> {
    let alpha_sum: f64 = alpha_col.iter().sum();
    let mut grad = vec![0.0; alpha_col.len()];
    for col in data_cols {
        let total: u64 = col.iter().sum();
        if total == 0 {
            continue;
        }
        let shared = digamma(alpha_sum) - digamma(alpha_sum + total as f64);
        for ((g, &f), &a) in grad.iter_mut().zip(col).zip(alpha_col) {
            if f > 0 {
                *g += digamma(a + f as f64) - digamma(a);
            }
            *g += shared;
        }
    }
    grad
}

/// Stopping rules for [`map_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    /// Convergence threshold on the ∞-norm of the log-space gradient.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 2000,
        }
    }
}

/// MAP (flat hyper-prior) estimate of the hyperparameters, column by column.
pub fn map_estimate(data: &TrainingDataset, init: &HyperMatrix, opts: MapOptions) -> Result<HyperMatrix> {
    let nu = data.nu();
    if init.nu() != nu {
        return Err(Error::DimensionMismatch {
            expected: nu,
            actual: init.nu(),
        });
    }
    let columns: Vec<Vec<f64>> = (0..nu)
        .into_par_iter()
        .map(|j| maximize_column(j, &init.column(j), &data.columns(j), opts))
        .collect::<Result<_>>()?;
    HyperMatrix::from_columns(&columns)
}

/// Maximizes one column's evidence by Polak-Ribière conjugate gradients in
/// `ln α`, with box projection onto `[ALPHA_FLOOR, ALPHA_CEIL]`.
pub fn maximize_column(
    column: usize,
    init: &[f64],
    data_cols: &[Vec<u64>],
    opts: MapOptions,
) -> Result<Vec<f64>> {
    check_column(init, data_cols)?;
    let lo = ALPHA_FLOOR.ln();
    let hi = ALPHA_CEIL.ln();
    let objective = |beta: &[f64]| -> (f64, Vec<f64>) {
        let alpha: Vec<f64> = beta.iter().map(|b| b.exp()).collect();
        let value = log_evidence_unchecked(&alpha, data_cols);
        let grad = log_evidence_grad_unchecked(&alpha, data_cols)
            .into_iter()
            .zip(&alpha)
            .map(|(g, a)| g * a)
            .collect();
        (value, grad)
    };
    // Gradient with components pinned at an active bound removed.
    let projected = |beta: &[f64], grad: &[f64]| -> Vec<f64> {
        beta.iter()
            .zip(grad)
            .map(|(&b, &g)| if (b <= lo && g < 0.0) || (b >= hi && g > 0.0) { 0.0 } else { g })
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let inf_norm = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

    let init_beta: Vec<f64> = init.iter().map(|a| a.ln().clamp(lo, hi)).collect();
    let (init_value, grad0) = objective(&init_beta);
    if !init_value.is_finite() {
        return Err(Error::NonFiniteEvidence { column });
    }
    let mut beta = init_beta.clone();
    let mut value = init_value;
    let mut grad = projected(&beta, &grad0);
    let mut dir = grad.clone();
    let mut step = 1.0;
    let nu = init.len();

    for iter in 0..opts.max_iters {
        if inf_norm(&grad) < opts.tol {
            break;
        }
        if iter % nu.max(2) == 0 || dot(&grad, &dir) <= 0.0 {
            dir = grad.clone();
        }
        let slope = dot(&grad, &dir);
        let try_at = |s: f64| -> (Vec<f64>, f64, Vec<f64>) {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&dir)
                .map(|(b, d)| (b + s * d).clamp(lo, hi))
                .collect();
            let (v, g) = objective(&cand);
            (cand, v, g)
        };
        let armijo = |s: f64, v: f64| v.is_finite() && v >= value + 1e-4 * s * slope;

        let mut s = step;
        let (mut cand, mut cand_value, mut cand_grad) = try_at(s);
        if armijo(s, cand_value) {
            // Expand while the objective keeps improving.
            loop {
                let (c2, v2, g2) = try_at(2.0 * s);
                if v2.is_finite() && v2 > cand_value && armijo(2.0 * s, v2) {
                    s *= 2.0;
                    cand = c2;
                    cand_value = v2;
                    cand_grad = g2;
                    if s > 1e12 {
                        break;
                    }
                } else {
                    break;
                }
            }
        } else {
            let mut accepted = false;
            while s > 1e-20 {
                s *= 0.5;
                let (c2, v2, g2) = try_at(s);
                if armijo(s, v2) {
                    cand = c2;
                    cand_value = v2;
                    cand_grad = g2;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                if dir == grad {
                    break;
                }
                dir = grad.clone();
                continue;
            }
        }
        if !cand_value.is_finite() {
            return Err(Error::NonFiniteEvidence { column });
        }
        step = s;
        let new_grad = projected(&cand, &cand_grad);
        let denom = dot(&grad, &grad);
        let beta_pr = if denom > 0.0 {
            (dot(&new_grad, &new_grad) - dot(&new_grad, &grad)) / denom
        } else {
            0.0
        };
        dir = new_grad
            .iter()
            .zip(&dir)
            .map(|(g, d)| g + beta_pr.max(0.0) * d)
            .collect();
        beta = cand;
        value = cand_value;
        grad = new_grad;
    }

    if value <= init_value {
        return Ok(init.to_vec());
    }
    Ok(beta
        .iter()
        .map(|b| b.exp().clamp(ALPHA_FLOOR, ALPHA_CEIL))
        .collect())
}
