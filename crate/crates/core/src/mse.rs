//! Closed-form mean squared error of the difference-in-means estimator.
//!
//! For a balanced design with allocation covariance `Σ`,
//!
//! ```text
//! MSE = ( v'Σv + 2 (p_T'(1 - p_T) + p_C'(1 - p_C)) ) / (4 n^2),   v = p_T + p_C
//! ```
//!
//! Only `v'Σv` depends on the design. For block designs it reduces to sums of
//! squared within-block differences of `v`, which is what makes the pair
//! matching comparisons below cheap to evaluate.

use serde::Serialize;

use crate::designs::covariance_matrix;
use crate::domain::{BlockPartition, CovarianceMatrix, MatchSet, ResponseModel};
use crate::error::{Error, Result};

/// Sample average treatment effect: mean of `p_T` minus mean of `p_C`.
pub fn tau(model: &ResponseModel) -> f64 {
    let m = model.len() as f64;
    model.p_t().iter().zip(model.p_c()).map(|(t, c)| t - c).sum::<f64>() / m
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `v'Σv`.
pub fn quadratic_form(v: &[f64], sigma: &CovarianceMatrix) -> Result<f64> {
    check_len(sigma.dim(), v.len())?;
    let s = sigma.matrix();
    let mut acc = 0.0;
    for i in 0..v.len() {
        let mut row = 0.0;
        for j in 0..v.len() {
            row += s[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    Ok(acc)
}

/// `v'Σv` for pair matching: the sum of squared within-pair differences.
pub fn pm_quadratic_form(v: &[f64], matches: &MatchSet) -> Result<f64> {
    check_len(matches.n_subjects(), v.len())?;
    Ok(matches.pairs().iter().map(|&(i, j)| (v[i] - v[j]).powi(2)).sum())
}

/// Sum of squared differences over all unordered pairs of `values`.
pub fn pairwise_sum_of_squares(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, a) in values.iter().enumerate() {
        for b in &values[k + 1..] {
            acc += (a - b).powi(2);
        }
    }
    acc
}

/// `v'Σv` for a block design, `Σ_b n_b/(n_b - 1) ||v_b - mean(v_b)||²`.
pub fn block_quadratic_form(v: &[f64], partition: &BlockPartition) -> Result<f64> {
    check_len(partition.n_subjects(), v.len())?;
    let mut acc = 0.0;
    for block in partition.blocks() {
        let nb = block.len() as f64;
        let mean = block.iter().map(|&i| v[i]).sum::<f64>() / nb;
        let ss: f64 = block.iter().map(|&i| (v[i] - mean).powi(2)).sum();
        acc += nb / (nb - 1.0) * ss;
    }
    Ok(acc)
}

/// Same quantity as [`block_quadratic_form`], computed from within-block
/// pairwise differences: `Σ_b (1/(n_b - 1)) Σ_{i<j in b} (v_i - v_j)²`.
pub fn block_quadratic_form_pairwise(v: &[f64], partition: &BlockPartition) -> Result<f64> {
    check_len(partition.n_subjects(), v.len())?;
    let mut acc = 0.0;
    for block in partition.blocks() {
        let values: Vec<f64> = block.iter().map(|&i| v[i]).collect();
        acc += pairwise_sum_of_squares(&values) / (block.len() as f64 - 1.0);
    }
    Ok(acc)
}

/// MSE split into its design-dependent and design-free parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseBreakdown {
    /// `v'Σv`
    pub quadratic_form: f64,
    /// `2 (p_T'(1 - p_T) + p_C'(1 - p_C))`
    pub bernoulli_term: f64,
    /// `(quadratic_form + bernoulli_term) / (4 n²)`
    pub total: f64,
}

impl MseBreakdown {
    /// Share of the MSE a design can influence.
    pub fn design_fraction(&self) -> f64 {
        if self.quadratic_form + self.bernoulli_term == 0.0 {
            0.0
        } else {
            self.quadratic_form / (self.quadratic_form + self.bernoulli_term)
        }
    }
}

fn bernoulli_term(model: &ResponseModel) -> f64 {
    let var = |p: &[f64]| p.iter().map(|x| x * (1.0 - x)).sum::<f64>();
    2.0 * (var(model.p_t()) + var(model.p_c()))
}

fn assemble(model: &ResponseModel, quadratic_form: f64) -> MseBreakdown {
    let n = model.len() as f64 / 2.0;
    let bernoulli_term = bernoulli_term(model);
    MseBreakdown { quadratic_form, bernoulli_term, total: (quadratic_form + bernoulli_term) / (4.0 * n * n) }
}

/// Exact MSE of the difference-in-means estimator under a block design.
pub fn exact_mse(model: &ResponseModel, partition: &BlockPartition) -> Result<MseBreakdown> {
    let q = block_quadratic_form(&model.v(), partition)?;
    Ok(assemble(model, q))
}

/// Exact MSE for an arbitrary balanced design given its covariance matrix.
pub fn exact_mse_with_covariance(model: &ResponseModel, sigma: &CovarianceMatrix) -> Result<MseBreakdown> {
    let q = quadratic_form(&model.v(), sigma)?;
    Ok(assemble(model, q))
}

/// `MSE(BCRD) - MSE(PM)` for the match set `matches`. Positive when pair
/// matching wins.
pub fn mse_gap_bcrd_pm(v: &[f64], matches: &MatchSet) -> Result<f64> {
    let pm = pm_quadratic_form(v, matches)?;
    let m = v.len() as f64;
    let n = m / 2.0;
    let bcrd = pairwise_sum_of_squares(v) / (m - 1.0);
    Ok((bcrd - pm) / (4.0 * n * n))
}

/// True when complete randomization beats the given matching, i.e. matched
/// pairs are on average further apart than an arbitrary pair.
pub fn bcrd_beats_pm(v: &[f64], matches: &MatchSet) -> Result<bool> {
    let m = v.len() as f64;
    let n = m / 2.0;
    let average_any_pair = pairwise_sum_of_squares(v) / (n * (m - 1.0));
    let average_matched = pm_quadratic_form(v, matches)? / n;
    Ok(average_any_pair < average_matched)
}

/// One-way ANOVA R² of `v` on the pair labels of `matches`.
pub fn match_r_squared(v: &[f64], matches: &MatchSet) -> Result<f64> {
    check_len(matches.n_subjects(), v.len())?;
    if v.iter().all(|&x| x == v[0]) {
        return Err(Error::ConstantVector);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let total: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let within = 0.5 * pm_quadratic_form(v, matches)?;
    Ok(1.0 - within / total)
}

/// Expected match R² when the pairs are formed at random (equivalently under
/// complete randomization): `(n - 1)/(2n - 1)` for `n` pairs.
pub fn bcrd_expected_r_squared(n_pairs: usize) -> f64 {
    assert!(n_pairs >= 1, "need at least one pair");
    (n_pairs as f64 - 1.0) / (2.0 * n_pairs as f64 - 1.0)
}

/// Worst case of `v'Σv` over sorted `v` with entries in `[0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerMax {
    pub value: f64,
    /// First corner (fewest twos) attaining `value`.
    pub corner: Vec<f64>,
    /// `values[m]` is the form at the corner with `m` trailing twos.
    pub values: Vec<f64>,
}

/// The staircase corner with `twos` trailing entries equal to 2.
pub fn corner(dim: usize, twos: usize) -> Vec<f64> {
    (0..dim).map(|i| if i + twos >= dim { 2.0 } else { 0.0 }).collect()
}

/// Evaluate `v'Σv` at the `2n + 1` corners `(0,…,0,2,…,2)` of the sorted
/// box and return the largest. A convex form attains its maximum over that
/// polytope at one of these points.
pub fn corner_max_quadratic_form(sigma: &CovarianceMatrix) -> CornerMax {
    let dim = sigma.dim();
    let s = sigma.matrix();
    // c'Σc with c = 2 on the last m coordinates is 4 * (sum of the trailing m×m block)
    let mut values = Vec::with_capacity(dim + 1);
    let mut block_sum = 0.0;
    values.push(0.0);
    for m in 1..=dim {
        let k = dim - m;
        let mut cross = 0.0;
        for j in (k + 1)..dim {
            cross += s[(k, j)];
        }
        block_sum += s[(k, k)] + 2.0 * cross;
        values.push(4.0 * block_sum);
    }
    let mut best = 0;
    for (m, &val) in values.iter().enumerate() {
        if val > values[best] {
            best = m;
        }
    }
    CornerMax { value: values[best], corner: corner(dim, best), values }
}

/// [`corner_max_quadratic_form`] for a block design via the closed-form `Σ`.
pub fn corner_max_for_partition(partition: &BlockPartition) -> CornerMax {
    corner_max_quadratic_form(&covariance_matrix(partition))
}
