//! Brute-force oracles for the closed forms and design comparisons.
//!
//! Every check returns a [`CheckReport`] with a pass flag, the worst case
//! found (as a witness) and the seed it consumed, so a failing run can be
//! replayed exactly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use crate::designs::{
    covariance_matrix, empirical_covariance, enumerate_even_partitions, enumerate_support, even_compositions,
    random_mixture_design, sorted_partition_with_sizes, DEFAULT_SUPPORT_CAP,
};
use crate::domain::{BlockPartition, CovarianceMatrix, MatchSet, ResponseModel};
use crate::error::{Error, Result};
use crate::matching::{
    brute_force_matching, enumerate_matchings, matchset_to_partition, min_weight_perfect_matching, random_matching,
};
use crate::mse::{
    bcrd_beats_pm, bcrd_expected_r_squared, block_quadratic_form, corner_max_quadratic_form, exact_mse,
    match_r_squared, mse_gap_bcrd_pm, pairwise_sum_of_squares, quadratic_form, tau,
};
use crate::rng::replicate_rng;
use crate::simulation::{monte_carlo_mse, RealizedDesign};

/// The corner maximum of the pair-matching form has been quoted as 2; direct
/// evaluation at corners with entries in {0, 2} gives 4.
pub const QUOTED_CORNER_CONSTANT: f64 = 2.0;

/// Neumaier-compensated sum, so exhaustive averages stay at rounding level.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
    pub deviation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation seen; its meaning is check-specific.
    pub worst: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(check: &str, tolerance: f64, seed: Option<u64>) -> Self {
        Self {
            check: check.to_string(),
            passed: true,
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            seed,
            witness: None,
            measurements: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Record one case whose deviation must not exceed the tolerance. The
    /// witness is the first failure, or the worst case when nothing failed.
    fn observe(&mut self, deviation: f64, witness: impl FnOnce() -> Witness) {
        self.cases += 1;
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
        if !(deviation <= self.tolerance) {
            self.fail(witness());
        } else if self.failures == 0 && (self.witness.is_none() || deviation > self.worst) {
            self.witness = Some(witness());
        }
        if deviation > self.worst || deviation.is_nan() {
            self.worst = deviation;
        }
    }

    fn fail(&mut self, witness: Witness) {
        self.failures += 1;
        self.passed = false;
        if self.failures == 1 {
            self.witness = Some(witness);
        }
    }

    fn measure(&mut self, name: impl Into<String>, value: f64) {
        self.measurements.push(Measurement { name: name.into(), value });
    }

    pub fn measurement(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

fn witness(v: Option<&[f64]>, design: Option<String>, deviation: f64, detail: impl Into<String>) -> Witness {
    Witness { v: v.map(<[f64]>::to_vec), design, deviation, detail: detail.into() }
}

/// Fault injection for exercising the failure path of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    /// Use `-1/n_b` instead of `-1/(n_b - 1)` off the diagonal of the closed-form `Σ`.
    WrongSigma,
}

// ---------------------------------------------------------------------------
// Exhaustive MSE and bias

fn conditional_moments(model: &ResponseModel, partition: &BlockPartition) -> Result<Vec<(f64, f64)>> {
    if model.len() != partition.n_subjects() {
        return Err(Error::DimensionMismatch { expected: partition.n_subjects(), found: model.len() });
    }
    let n = model.len() as f64 / 2.0;
    let support = enumerate_support(partition, DEFAULT_SUPPORT_CAP)?;
    Ok(support
        .iter()
        .map(|w| {
            let mut mean = 0.0;
            let mut var = 0.0;
            for (i, &s) in w.signs().iter().enumerate() {
                let pi = model.conditional_mean(i, s);
                mean += f64::from(s) * pi;
                var += pi * (1.0 - pi);
            }
            (mean / n, var / (n * n))
        })
        .collect())
}

/// MSE of the difference in means by enumerating every allocation and
/// combining the exact Bernoulli moments:
/// `E_w[ Var(τ̂ | w) + (E[τ̂ | w] - τ)² ]`.
pub fn brute_force_mse(model: &ResponseModel, partition: &BlockPartition) -> Result<f64> {
    let moments = conditional_moments(model, partition)?;
    let t = tau(model);
    let m = moments.len() as f64;
    Ok(compensated_sum(moments.iter().map(|&(mean, var)| var + (mean - t).powi(2))) / m)
}

/// `|E_w E[τ̂ | w] - τ|` by exhaustive enumeration.
pub fn check_unbiasedness(model: &ResponseModel, partition: &BlockPartition) -> Result<f64> {
    let moments = conditional_moments(model, partition)?;
    let t = tau(model);
    let m = moments.len() as f64;
    Ok((compensated_sum(moments.iter().map(|&(mean, _)| mean - t)) / m).abs())
}

/// Random response models paired with uniformly chosen even partitions.
pub fn random_instances(count: usize, sizes: &[usize], seed: u64) -> Result<Vec<(ResponseModel, BlockPartition)>> {
    let mut rng = replicate_rng(seed, "instances", 0);
    let catalog: Vec<Vec<BlockPartition>> =
        sizes.iter().map(|&n| enumerate_even_partitions(n)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let n = sizes[k % sizes.len()];
        let p_t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let p_c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let partition = catalog[k % sizes.len()].choose(&mut rng).expect("nonempty").clone();
        out.push((ResponseModel::new(p_t, p_c)?, partition));
    }
    Ok(out)
}

pub fn check_exact_mse(instances: &[(ResponseModel, BlockPartition)], seed: Option<u64>) -> Result<CheckReport> {
    let mut report = CheckReport::new("exact_mse", 1e-12, seed);
    for (model, partition) in instances {
        let closed = exact_mse(model, partition)?.total;
        let brute = brute_force_mse(model, partition)?;
        let dev = (closed - brute).abs();
        report.observe(dev, || {
            witness(
                Some(&model.v()),
                Some(partition.to_string()),
                dev,
                format!("closed form {closed}, enumeration {brute}"),
            )
        });
    }
    Ok(report)
}

pub fn check_bias(instances: &[(ResponseModel, BlockPartition)], seed: Option<u64>) -> Result<CheckReport> {
    let mut report = CheckReport::new("unbiasedness", 1e-14, seed);
    for (model, partition) in instances {
        let bias = check_unbiasedness(model, partition)?;
        report.observe(bias, || witness(Some(&model.v()), Some(partition.to_string()), bias, "exhaustive bias"));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Closed-form covariance

fn faulty_covariance(partition: &BlockPartition) -> CovarianceMatrix {
    let n = partition.n_subjects();
    let mut sigma = DMatrix::zeros(n, n);
    for block in partition.blocks() {
        let off = -1.0 / block.len() as f64;
        for &i in block {
            for &j in block {
                sigma[(i, j)] = if i == j { 1.0 } else { off };
            }
        }
    }
    CovarianceMatrix::from_matrix_unchecked(sigma)
}

/// Closed-form `Σ` against the covariance of the enumerated support, for
/// every even partition of each size.
pub fn check_sigma(sizes: &[usize], fault: Option<Fault>) -> Result<CheckReport> {
    let mut report = CheckReport::new("sigma", 1e-12, None);
    for &n in sizes {
        for partition in enumerate_even_partitions(n)? {
            let closed = match fault {
                Some(Fault::WrongSigma) => faulty_covariance(&partition),
                None => covariance_matrix(&partition),
            };
            let empirical = empirical_covariance(&enumerate_support(&partition, DEFAULT_SUPPORT_CAP)?)?;
            let dev = closed.max_abs_diff(&empirical);
            report.observe(dev, || {
                witness(None, Some(partition.to_string()), dev, "max entrywise |closed - enumerated|")
            });
        }
    }
    if fault.is_some() {
        report.notes.push("fault injected: off-diagonal -1/n_b".into());
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Pair matching beats coarser blocking on sorted v

/// One block's contribution to both forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockTerm {
    /// 1-based subject indices of the block.
    pub block: Vec<usize>,
    /// Sum of squared differences of the sorted neighbour pairs inside the block.
    pub pm_term: f64,
    /// `(1/(n_b - 1))` times the sum of squared differences over all pairs in the block.
    pub block_term: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SortedPairsReport {
    pub pm_quadratic_form: f64,
    pub block_quadratic_form: f64,
    pub holds: bool,
    pub strict: bool,
    pub blocks: Vec<BlockTerm>,
}

fn check_sorted(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("v"));
    }
    match v.windows(2).position(|w| w[0] > w[1]) {
        Some(i) => Err(Error::Unsorted(i + 2)),
        None => Ok(()),
    }
}

const QF_TOL: f64 = 1e-12;

/// Compare the sorted-neighbour pairing with the block design of
/// `partition` for ascending `v`, block by block. Blocks need not be
/// consecutive; within a block the neighbours in sort order are paired.
pub fn sorted_pairs_vs_partition(v: &[f64], partition: &BlockPartition) -> Result<SortedPairsReport> {
    check_sorted(v)?;
    if v.len() != partition.n_subjects() {
        return Err(Error::DimensionMismatch { expected: partition.n_subjects(), found: v.len() });
    }
    let pm_total: f64 = v.chunks(2).map(|p| (p[0] - p[1]).powi(2)).sum();
    let block_total = block_quadratic_form(v, partition)?;
    let mut blocks = Vec::with_capacity(partition.n_blocks());
    for block in partition.blocks() {
        let mut idx = block.clone();
        idx.sort_unstable();
        let values: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
        let pm_term: f64 = values.chunks(2).map(|p| (p[0] - p[1]).powi(2)).sum();
        let block_term = pairwise_sum_of_squares(&values) / (values.len() as f64 - 1.0);
        blocks.push(BlockTerm {
            block: idx.iter().map(|i| i + 1).collect(),
            pm_term,
            block_term,
            holds: pm_term <= block_term + QF_TOL,
        });
    }
    Ok(SortedPairsReport {
        pm_quadratic_form: pm_total,
        block_quadratic_form: block_total,
        holds: pm_total <= block_total + QF_TOL,
        strict: pm_total < block_total - QF_TOL,
        blocks,
    })
}

/// Pair matching versus consecutive blocks of the given even sizes.
pub fn check_sorted_pairs(v: &[f64], block_sizes: &[usize]) -> Result<SortedPairsReport> {
    check_sorted(v)?;
    if let Some(&odd) = block_sizes.iter().find(|&&s| s % 2 != 0 || s == 0) {
        return Err(Error::OddBlock { block: block_sizes.iter().position(|&s| s == odd).unwrap() + 1, size: odd });
    }
    let partition = sorted_partition_with_sizes(v, block_sizes)?;
    sorted_pairs_vs_partition(v, &partition)
}

fn random_sorted_v<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// For `n_vectors` random sorted `v` with distinct entries and every
/// consecutive even-block design with fewer than `n` blocks, the pair
/// design's form must be strictly smaller.
pub fn sorted_pairs_sweep(n_subjects: usize, n_vectors: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("sorted_pairs", QF_TOL, Some(seed));
    let n_pairs = n_subjects / 2;
    let compositions: Vec<Vec<usize>> =
        even_compositions(n_subjects).into_iter().filter(|c| c.len() < n_pairs).collect();
    let mut rng = replicate_rng(seed, "sorted_pairs", n_subjects as u64);
    let mut not_strict = 0usize;
    let mut min_margin = f64::INFINITY;
    for _ in 0..n_vectors {
        let v = random_sorted_v(n_subjects, &mut rng);
        for sizes in &compositions {
            let r = check_sorted_pairs(&v, sizes)?;
            let margin = r.block_quadratic_form - r.pm_quadratic_form;
            min_margin = min_margin.min(margin);
            let deviation = (-margin).max(0.0);
            report.observe(deviation, || {
                witness(Some(&v), Some(format!("{sizes:?}")), deviation, "pm exceeds block form")
            });
            if !r.strict {
                not_strict += 1;
                report.fail(witness(Some(&v), Some(format!("{sizes:?}")), margin, "equality with distinct v"));
            }
        }
    }
    report.measure("designs_per_vector", compositions.len() as f64);
    report.measure("min_margin", min_margin);
    report.measure("non_strict", not_strict as f64);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Minimax over the corners of the sorted box

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxReport {
    pub n_subjects: usize,
    pub pm_corner_max: f64,
    /// `pm_corner_max / Σ_nn`: 4 for any unit-diagonal design.
    pub measured_constant: f64,
    pub quoted_constant: f64,
    pub block_designs: usize,
    pub mixture_designs: usize,
    pub extra_designs: usize,
    pub skipped_extra: usize,
    pub min_other_corner_max: f64,
    pub random_v: usize,
    pub max_random_v_over_corner: f64,
    pub report: CheckReport,
}

/// Pair matching's worst case over sorted `v` in `[0, 2]` is no larger than
/// that of every even block design (all partitions), of `n_mixtures` random
/// mirrored mixtures of balanced allocations and of every supplied
/// unit-diagonal `Σ`. Also confirms on random `v` that no interior point
/// exceeds the corner maximum.
pub fn check_minimax(
    n_subjects: usize,
    extra: &[CovarianceMatrix],
    n_mixtures: usize,
    n_random_v: usize,
    seed: u64,
) -> Result<MinimaxReport> {
    let mut report = CheckReport::new("minimax", QF_TOL, Some(seed));
    let pm = BlockPartition::new((0..n_subjects / 2).map(|k| vec![2 * k, 2 * k + 1]).collect(), n_subjects)?;
    let pm_sigma = covariance_matrix(&pm);
    let pm_max = corner_max_quadratic_form(&pm_sigma);
    let last = pm_sigma.matrix()[(n_subjects - 1, n_subjects - 1)];
    let measured_constant = pm_max.value / last;
    if measured_constant != 4.0 {
        report.fail(witness(Some(&pm_max.corner), Some("pm".into()), pm_max.value, "pm corner max differs from 4"));
    }
    let mut others: Vec<(String, CovarianceMatrix)> = Vec::new();
    let partitions = enumerate_even_partitions(n_subjects)?;
    let block_designs = partitions.len();
    for p in &partitions {
        others.push((p.to_string(), covariance_matrix(p)));
    }
    let mut rng = replicate_rng(seed, "minimax", n_subjects as u64);
    for k in 0..n_mixtures {
        let size = rng.random_range(1..=8);
        let support = random_mixture_design(n_subjects, size, &mut rng)?;
        others.push((format!("mixture #{k} ({} allocations)", support.len()), empirical_covariance(&support)?));
    }
    let mut skipped = 0;
    for (k, s) in extra.iter().enumerate() {
        if s.dim() == n_subjects && s.has_unit_diagonal(1e-12) {
            others.push((format!("supplied #{k}"), s.clone()));
        } else {
            skipped += 1;
        }
    }
    let mut min_other = f64::INFINITY;
    for (label, sigma) in &others {
        let m = corner_max_quadratic_form(sigma);
        min_other = min_other.min(m.value);
        let dev = (pm_max.value - m.value).max(0.0);
        report.observe(dev, || {
            witness(Some(&m.corner), Some(label.clone()), dev, "design with smaller corner max than pm")
        });
    }
    // no interior point beats the corners
    let bcrd_sigma = covariance_matrix(&BlockPartition::new(vec![(0..n_subjects).collect()], n_subjects)?);
    let bcrd_max = corner_max_quadratic_form(&bcrd_sigma).value;
    let mut worst_ratio = f64::NEG_INFINITY;
    for _ in 0..n_random_v {
        let v = random_sorted_v(n_subjects, &mut rng);
        for (sigma, cap, label) in [(&pm_sigma, pm_max.value, "pm"), (&bcrd_sigma, bcrd_max, "bcrd")] {
            let q = quadratic_form(&v, sigma)?;
            worst_ratio = worst_ratio.max(q - cap);
            let dev = (q - cap).max(0.0);
            report.observe(dev, || witness(Some(&v), Some(label.into()), dev, "random v exceeds corner max"));
        }
    }
    report.measure("pm_corner_max", pm_max.value);
    report.measure("measured_constant", measured_constant);
    report.measure("quoted_constant", QUOTED_CORNER_CONSTANT);
    report.measure("min_other_corner_max", min_other);
    report.notes.push(format!(
        "measured corner constant {measured_constant} vs quoted {QUOTED_CORNER_CONSTANT}; the ordering of designs is unaffected"
    ));
    Ok(MinimaxReport {
        n_subjects,
        pm_corner_max: pm_max.value,
        measured_constant,
        quoted_constant: QUOTED_CORNER_CONSTANT,
        block_designs,
        mixture_designs: n_mixtures,
        extra_designs: extra.len() - skipped,
        skipped_extra: skipped,
        min_other_corner_max: min_other,
        random_v: n_random_v,
        max_random_v_over_corner: worst_ratio,
        report,
    })
}

// ---------------------------------------------------------------------------
// Random pairs versus complete randomization

/// Max entrywise deviation of the average pair-design `Σ` over every
/// perfect matching from the complete-randomization `Σ`.
pub fn check_random_pairs(n_subjects: usize) -> Result<CheckReport> {
    let mut report = CheckReport::new("random_pairs", 1e-12, None);
    let matchings = enumerate_matchings(n_subjects)?;
    let mut avg = DMatrix::<f64>::zeros(n_subjects, n_subjects);
    for m in &matchings {
        avg += covariance_matrix(&matchset_to_partition(m)?).matrix();
    }
    avg /= matchings.len() as f64;
    let bcrd = covariance_matrix(&BlockPartition::new(vec![(0..n_subjects).collect()], n_subjects)?);
    let dev = (avg - bcrd.matrix()).abs().max();
    report.observe(dev, || witness(None, Some(format!("{} matchings", matchings.len())), dev, "mean pair Σ vs BCRD Σ"));
    report.measure("matchings", matchings.len() as f64);
    Ok(report)
}

/// Monte Carlo MSE of random-pair matching versus complete randomization
/// for a fixed random model; they must agree within 3 combined SEs.
pub fn check_random_pairs_monte_carlo(n_subjects: usize, n_sim: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("random_pairs_monte_carlo", 3.0, Some(seed));
    let mut rng = replicate_rng(seed, "random_pairs", 0);
    let p_t: Vec<f64> = (0..n_subjects).map(|_| rng.random()).collect();
    let p_c: Vec<f64> = (0..n_subjects).map(|_| rng.random()).collect();
    let model = ResponseModel::new(p_t, p_c)?;
    let bcrd = BlockPartition::new(vec![(0..n_subjects).collect()], n_subjects)?;
    let exact = exact_mse(&model, &bcrd)?.total;
    let (random_pm, se_pm) = monte_carlo_mse(&model, &RealizedDesign::RandomPairs, n_sim, seed)?;
    let (full, se_full) = monte_carlo_mse(&model, &RealizedDesign::Fixed(bcrd), n_sim, seed.wrapping_add(1))?;
    let z = (random_pm - full).abs() / (se_pm * se_pm + se_full * se_full).sqrt();
    report.observe(z, || witness(Some(&model.v()), Some("random_pm vs bcrd".into()), z, "difference in SE units"));
    let z_exact = (random_pm - exact).abs() / se_pm;
    report.observe(z_exact, || witness(Some(&model.v()), Some("random_pm vs exact".into()), z_exact, "SE units"));
    report.measure("mse_random_pm", random_pm);
    report.measure("se_random_pm", se_pm);
    report.measure("mse_bcrd", full);
    report.measure("se_bcrd", se_full);
    report.measure("mse_bcrd_exact", exact);
    Ok(report)
}

// ---------------------------------------------------------------------------
// When complete randomization beats a given matching

/// Sign agreement on random `(v, matching)` pairs between the MSE gap, the
/// direct "matched pairs further apart than average" inequality and the
/// match-R² comparison; the gap must also equal the difference of exact MSEs.
pub fn check_gap_sign(n_subjects: usize, n_instances: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("gap_sign", 1e-12, Some(seed));
    let mut rng = replicate_rng(seed, "gap_sign", n_subjects as u64);
    let n_pairs = n_subjects / 2;
    let threshold = bcrd_expected_r_squared(n_pairs);
    let bcrd = BlockPartition::new(vec![(0..n_subjects).collect()], n_subjects)?;
    let mut disagreements = 0;
    let mut positive = 0;
    for k in 0..n_instances {
        let v: Vec<f64> = (0..n_subjects).map(|_| 2.0 * rng.random::<f64>()).collect();
        // alternate random and sort-informed pairings so both signs occur
        let m =
            if k % 2 == 0 { random_matching(n_subjects, &mut rng)? } else { crate::designs::sorted_pair_matching(&v)? };
        let gap = mse_gap_bcrd_pm(&v, &m)?;
        let beats = bcrd_beats_pm(&v, &m)?;
        let r2 = match_r_squared(&v, &m)?;
        if gap > 0.0 {
            positive += 1;
        }
        let agree = (gap < 0.0) == beats && (gap > 0.0) == (r2 > threshold);
        if !agree {
            disagreements += 1;
            report.fail(witness(Some(&v), Some(m.to_string()), gap, format!("gap {gap}, bcrd wins {beats}, R² {r2}")));
        }
        let model = ResponseModel::from_v(&v)?;
        let direct = exact_mse(&model, &bcrd)?.total - exact_mse(&model, &matchset_to_partition(&m)?)?.total;
        let dev = (direct - gap).abs();
        report.observe(dev, || witness(Some(&v), Some(m.to_string()), dev, "gap vs difference of exact MSEs"));
    }
    report.measure("disagreements", disagreements as f64);
    report.measure("pm_better", positive as f64);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Constant v

/// `c1'Σ(c1)` for each design (must vanish) and the spread of exact MSEs
/// across designs for a model with constant `v = c`.
pub fn check_constant_v(designs: &[CovarianceMatrix], constant: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new("constant_v", 1e-12, None);
    if designs.is_empty() {
        return Ok(report);
    }
    let n = designs[0].dim();
    let v = vec![constant; n];
    let model = ResponseModel::from_v(&v)?;
    let mut totals = Vec::with_capacity(designs.len());
    for (k, sigma) in designs.iter().enumerate() {
        let q = quadratic_form(&v, sigma)?;
        report.observe(q.abs(), || {
            witness(Some(&v), Some(format!("design #{k}")), q, "quadratic form of a constant vector")
        });
        totals.push(crate::mse::exact_mse_with_covariance(&model, sigma)?.total);
    }
    let spread =
        totals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - totals.iter().copied().fold(f64::INFINITY, f64::min);
    report.measure("mse_spread", spread);
    if spread > 1e-15 {
        report.fail(witness(Some(&v), None, spread, "exact MSE differs across designs"));
    }
    Ok(report)
}

/// Every even block design of `n_subjects` plus `n_mixtures` mirrored mixtures.
pub fn constant_v_designs(n_subjects: usize, n_mixtures: usize, seed: u64) -> Result<Vec<CovarianceMatrix>> {
    let mut out: Vec<CovarianceMatrix> = enumerate_even_partitions(n_subjects)?.iter().map(covariance_matrix).collect();
    let mut rng = replicate_rng(seed, "constant_v", n_subjects as u64);
    for _ in 0..n_mixtures {
        let k = rng.random_range(1..=8);
        out.push(empirical_covariance(&random_mixture_design(n_subjects, k, &mut rng)?)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact matching

/// Blossom solver against exhaustive search on random distance matrices,
/// and invariance of its answer under positive rescaling.
pub fn check_matching(sizes: &[usize], per_size: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("matching", 0.0, Some(seed));
    for &n in sizes {
        let mut rng = replicate_rng(seed, "matching", n as u64);
        for _ in 0..per_size {
            let mut d = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let x: f64 = rng.random();
                    d[(i, j)] = x;
                    d[(j, i)] = x;
                }
            }
            let exact = min_weight_perfect_matching(&d)?;
            let brute = brute_force_matching(&d)?;
            let gap = (exact.total_weight(&d) - brute.total_weight(&d)).abs();
            let same = exact == brute;
            report.observe(if same { 0.0 } else { gap.max(f64::MIN_POSITIVE) }, || {
                witness(None, Some(format!("blossom {exact} vs exhaustive {brute}")), gap, format!("{n} nodes"))
            });
            let c = 10f64.powf(rng.random_range(-3.0..3.0));
            let scaled: MatchSet = min_weight_perfect_matching(&(&d * c))?;
            if scaled != exact {
                report.fail(witness(None, Some(format!("{scaled} vs {exact}")), c, "matching changed under rescaling"));
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Suite

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Sigma,
    ExactMse,
    Unbiasedness,
    SortedPairs,
    Minimax,
    RandomPairs,
    GapSign,
    ConstantV,
    Matching,
}

impl CheckName {
    pub const ALL: [CheckName; 9] = [
        CheckName::Sigma,
        CheckName::ExactMse,
        CheckName::Unbiasedness,
        CheckName::SortedPairs,
        CheckName::Minimax,
        CheckName::RandomPairs,
        CheckName::GapSign,
        CheckName::ConstantV,
        CheckName::Matching,
    ];
}

impl FromStr for CheckName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "theorem1" => Some(CheckName::SortedPairs),
            "remark1" => Some(CheckName::RandomPairs),
            "remark2" => Some(CheckName::GapSign),
            "remark3" => Some(CheckName::ConstantV),
            _ => None,
        };
        alias
            .or_else(|| Self::ALL.into_iter().find(|c| c.to_string() == key))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown check {s:?}")))
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckName::Sigma => "sigma",
            CheckName::ExactMse => "exact_mse",
            CheckName::Unbiasedness => "unbiasedness",
            CheckName::SortedPairs => "sorted_pairs",
            CheckName::Minimax => "minimax",
            CheckName::RandomPairs => "random_pairs",
            CheckName::GapSign => "gap_sign",
            CheckName::ConstantV => "constant_v",
            CheckName::Matching => "matching",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub only: Vec<CheckName>,
    /// Overrides the subject count of size-parameterized checks.
    pub n_subjects: Option<usize>,
    pub seed: u64,
    pub fault: Option<Fault>,
    /// Replicates for the Monte Carlo part of the random-pairs check; 0 skips it.
    pub monte_carlo_replicates: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { only: Vec::new(), n_subjects: None, seed: 20_140_501, fault: None, monte_carlo_replicates: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub seed: u64,
    pub checks: Vec<CheckReport>,
}

/// Run the selected checks (all by default) at desk-scale sizes.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let selected: Vec<CheckName> = if opts.only.is_empty() { CheckName::ALL.to_vec() } else { opts.only.clone() };
    let sizes = |default: &[usize]| opts.n_subjects.map_or_else(|| default.to_vec(), |n| vec![n]);
    let seed = opts.seed;
    let mut checks = Vec::new();
    let mut instances = None;
    for check in selected {
        match check {
            CheckName::Sigma => checks.push(check_sigma(&sizes(&[4, 6, 8, 10]), opts.fault)?),
            CheckName::ExactMse | CheckName::Unbiasedness => {
                if instances.is_none() {
                    instances = Some(random_instances(200, &sizes(&[4, 6, 8]), seed)?);
                }
                let inst = instances.as_deref().unwrap();
                checks.push(if check == CheckName::ExactMse {
                    check_exact_mse(inst, Some(seed))?
                } else {
                    check_bias(inst, Some(seed))?
                });
            }
            CheckName::SortedPairs => {
                for n in sizes(&[8, 12, 16]) {
                    let mut r = sorted_pairs_sweep(n, 1000, seed)?;
                    r.check = format!("sorted_pairs (2n = {n})");
                    checks.push(r);
                }
            }
            CheckName::Minimax => {
                for n in sizes(&[4, 6, 8]) {
                    let mut r = check_minimax(n, &[], 100, 10_000, seed)?.report;
                    r.check = format!("minimax (2n = {n})");
                    checks.push(r);
                }
            }
            CheckName::RandomPairs => {
                for n in sizes(&[4, 6, 8]) {
                    let mut r = check_random_pairs(n)?;
                    r.check = format!("random_pairs (2n = {n})");
                    checks.push(r);
                }
                if opts.monte_carlo_replicates > 0 {
                    let n = opts.n_subjects.unwrap_or(8);
                    checks.push(check_random_pairs_monte_carlo(n, opts.monte_carlo_replicates, seed)?);
                }
            }
            CheckName::GapSign => {
                for n in sizes(&[4, 8, 16]) {
                    let mut r = check_gap_sign(n, 1000, seed)?;
                    r.check = format!("gap_sign (2n = {n})");
                    checks.push(r);
                }
            }
            CheckName::ConstantV => {
                for n in sizes(&[4, 6, 8, 10]) {
                    let designs = constant_v_designs(n, 50, seed)?;
                    for c in [1.0, 2.0, 0.37] {
                        let mut r = check_constant_v(&designs, c)?;
                        r.check = format!("constant_v (2n = {n}, v = {c})");
                        checks.push(r);
                    }
                }
            }
            CheckName::Matching => checks.push(check_matching(&sizes(&[6, 8, 10]), 500, seed)?),
        }
    }
    Ok(SuiteReport { passed: checks.iter().all(|c| c.passed), seed, checks })
}
