//! Monte Carlo comparison of designs: synthetic covariates on a logistic
//! quantile grid, a parametric bootstrap on user data, and a deterministic
//! parallel reduction over replicates.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{
    bcrd, nested_block_partition, sample_allocation, sorted_block_partition, sorted_pair_matching, BlockSplit,
};
use crate::domain::{check_subject_count, Allocation, BlockPartition, ResponseModel, Subjects};
use crate::error::{Error, Result};
use crate::estimators::{diff_in_means, log_odds_ratio, logistic_fit, LogisticModelSpec, TrialOutcome};
use crate::matching::{
    mahalanobis_distance_matrix, matchset_to_partition, min_weight_perfect_matching, random_matching,
};
use crate::mse::tau;
use crate::rng::replicate_rng;

/// Replicates accumulated serially before partial sums are merged.
pub const CHUNK: usize = 4096;

/// A design family to compare. Blocking and matching are built from the
/// covariates; `RandomPairs` re-draws a uniform matching every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DesignSpec {
    Bcrd,
    Blocked(usize),
    PairMatched,
    RandomPairs,
}

impl FromStr for DesignSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "bcrd" => return Ok(DesignSpec::Bcrd),
            "pm" => return Ok(DesignSpec::PairMatched),
            "random_pm" => return Ok(DesignSpec::RandomPairs),
            _ => {}
        }
        let blocks = lower
            .strip_prefix("block:")
            .or_else(|| lower.strip_prefix("bl:"))
            .and_then(|b| b.parse::<usize>().ok())
            .filter(|&b| b >= 1);
        blocks.map(DesignSpec::Blocked).ok_or_else(|| {
            Error::InvalidConfig(format!("unknown design {s:?} (expected bcrd, block:<B>, pm or random_pm)"))
        })
    }
}

impl TryFrom<String> for DesignSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DesignSpec> for String {
    fn from(d: DesignSpec) -> String {
        d.to_string()
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignSpec::Bcrd => f.write_str("bcrd"),
            DesignSpec::Blocked(b) => write!(f, "block:{b}"),
            DesignSpec::PairMatched => f.write_str("pm"),
            DesignSpec::RandomPairs => f.write_str("random_pm"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    RiskDifference,
    LogOddsRatio,
    Logistic,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "risk_difference" | "diff_in_means" | "rd" => Ok(EstimatorKind::RiskDifference),
            "log_odds_ratio" | "lor" => Ok(EstimatorKind::LogOddsRatio),
            "logistic" | "logistic_beta_t" => Ok(EstimatorKind::Logistic),
            _ => Err(Error::InvalidConfig(format!(
                "unknown estimator {s:?} (expected risk_difference, log_odds_ratio or logistic)"
            ))),
        }
    }
}

/// Output rows contributed by one estimator. The log odds ratio is scored
/// against both `β_T` and `2β_T` because `w` is coded `±1`.
fn estimator_labels(kind: EstimatorKind) -> &'static [&'static str] {
    match kind {
        EstimatorKind::RiskDifference => &["risk_difference"],
        EstimatorKind::LogOddsRatio => &["lor_vs_beta_t", "lor_vs_2beta_t"],
        EstimatorKind::Logistic => &["logistic_beta_t"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub d: usize,
    pub designs: Vec<DesignSpec>,
    pub model: LogisticModelSpec,
    pub n_sim: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        check_subject_count(self.n_subjects)?;
        if self.n_sim == 0 {
            return Err(Error::InvalidConfig("n_sim must be at least 1".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::Empty("design list"));
        }
        if self.estimators.is_empty() {
            return Err(Error::Empty("estimator list"));
        }
        if self.model.beta.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: self.model.beta.len() });
        }
        Ok(())
    }
}

/// Aggregate for one (design, estimator) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub design: String,
    pub estimator: String,
    /// Number of subjects per simulated trial.
    pub n: usize,
    pub d: usize,
    /// Mean of the per-replicate true parameter.
    pub target: f64,
    pub mean_estimate: f64,
    pub mse: f64,
    /// Monte Carlo standard error of `mse`; infinite with fewer than two replicates.
    pub mc_se: f64,
    pub excluded: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
}

impl SimResult {
    pub fn get(&self, design: &str, estimator: &str) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.design == design && r.estimator == estimator)
    }
}

/// Standard logistic quantiles at probabilities spaced linearly from 0.005
/// to 0.995 inclusive.
pub fn logistic_quantile_grid(n_subjects: usize) -> Vec<f64> {
    assert!(n_subjects >= 2, "grid needs at least two points");
    let step = 0.99 / (n_subjects - 1) as f64;
    (0..n_subjects)
        .map(|i| {
            let p = 0.005 + step * i as f64;
            (p / (1.0 - p)).ln()
        })
        .collect()
}

/// Nested blocking used with [`block_homogeneous_covariates`]: eight blocks
/// for every supported dimension.
pub fn blocking_scheme(d: usize) -> Result<Vec<BlockSplit>> {
    let split = |column, parts| BlockSplit { column, parts };
    match d {
        1 => Ok(vec![split(0, 8)]),
        2 => Ok(vec![split(0, 4), split(1, 2)]),
        5 => Ok(vec![split(0, 2), split(1, 2), split(2, 2)]),
        _ => Err(Error::InvalidConfig(format!("synthetic covariates support d in {{1, 2, 5}}, got {d}"))),
    }
}

/// Covariates on the logistic quantile grid arranged so that the eight
/// blocks of [`blocking_scheme`] are exactly balanced: the first covariate is
/// the sorted grid, every further blocking covariate puts equally many of
/// its low and high values in each cell, and remaining covariates are
/// shuffled grids.
pub fn block_homogeneous_covariates<R: Rng + ?Sized>(n_subjects: usize, d: usize, rng: &mut R) -> Result<Subjects> {
    let scheme = blocking_scheme(d)?;
    check_subject_count(n_subjects)?;
    if !n_subjects.is_multiple_of(16) {
        return Err(Error::Indivisible { n_subjects, n_blocks: 8 });
    }
    let grid = logistic_quantile_grid(n_subjects);
    let mut x = DMatrix::zeros(n_subjects, d);
    x.set_column(0, &nalgebra::DVector::from_column_slice(&grid));
    for level in 1..scheme.len() {
        let cells = nested_block_partition(&x.columns(0, level).into_owned(), &scheme[..level])?;
        let parts = scheme[level].parts;
        let group_len = n_subjects / parts;
        let mut groups: Vec<Vec<f64>> = grid.chunks(group_len).map(<[f64]>::to_vec).collect();
        for g in &mut groups {
            g.shuffle(rng);
        }
        let mut cursor = vec![0usize; parts];
        for cell in cells.blocks() {
            let take = cell.len() / parts;
            let mut values = Vec::with_capacity(cell.len());
            for (g, c) in groups.iter().zip(cursor.iter_mut()) {
                values.extend_from_slice(&g[*c..*c + take]);
                *c += take;
            }
            values.shuffle(rng);
            for (&i, v) in cell.iter().zip(values) {
                x[(i, scheme[level].column)] = v;
            }
        }
    }
    for column in scheme.len()..d {
        let mut values = grid.clone();
        values.shuffle(rng);
        x.set_column(column, &nalgebra::DVector::from_vec(values));
    }
    Subjects::with_default_ids(x)
}

/// Independent Bernoulli responses with success probability `p_T,i` when
/// `w_i = +1` and `p_C,i` otherwise.
pub fn draw_responses<R: Rng + ?Sized>(model: &ResponseModel, w: &Allocation, rng: &mut R) -> Result<Vec<u8>> {
    if model.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: model.len(), found: w.len() });
    }
    Ok(w.signs()
        .iter()
        .enumerate()
        .map(|(i, &s)| u8::from(rng.random::<f64>() < model.conditional_mean(i, s)))
        .collect())
}

/// A design instantiated on a fixed set of subjects.
#[derive(Debug, Clone)]
pub enum RealizedDesign {
    Fixed(BlockPartition),
    RandomPairs,
}

impl RealizedDesign {
    pub fn sample<R: Rng + ?Sized>(&self, n_subjects: usize, rng: &mut R) -> Result<Allocation> {
        match self {
            RealizedDesign::Fixed(p) => Ok(sample_allocation(p, rng)),
            RealizedDesign::RandomPairs => {
                let m = random_matching(n_subjects, rng)?;
                Ok(sample_allocation(&matchset_to_partition(&m)?, rng))
            }
        }
    }
}

/// Build a design on `subjects`. Blocks come from `splits` when their cell
/// count equals the requested block count, otherwise from sorting the first
/// covariate. Pairs are sorted neighbours for one covariate and
/// Mahalanobis-optimal pairs otherwise.
pub fn realize_design(spec: DesignSpec, subjects: &Subjects, splits: Option<&[BlockSplit]>) -> Result<RealizedDesign> {
    let n = subjects.n_subjects();
    let partition = match spec {
        DesignSpec::Bcrd => bcrd(n)?,
        DesignSpec::RandomPairs => return Ok(RealizedDesign::RandomPairs),
        DesignSpec::Blocked(b) => match splits {
            Some(s) if s.iter().map(|s| s.parts).product::<usize>() == b => {
                nested_block_partition(subjects.covariates(), s)?
            }
            _ => {
                if subjects.dim() == 0 {
                    return Err(Error::NoCovariates);
                }
                sorted_block_partition(&subjects.column(0), b)?
            }
        },
        DesignSpec::PairMatched => {
            let matches = match subjects.dim() {
                0 => return Err(Error::NoCovariates),
                1 => sorted_pair_matching(&subjects.column(0))?,
                _ => min_weight_perfect_matching(&mahalanobis_distance_matrix(subjects)?)?,
            };
            matchset_to_partition(&matches)?
        }
    };
    Ok(RealizedDesign::Fixed(partition))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Acc {
    count: usize,
    excluded: usize,
    sum_est: f64,
    sum_target: f64,
    sum_err2: f64,
    sum_err4: f64,
}

impl Acc {
    fn push(&mut self, estimate: Option<f64>, target: f64) {
        match estimate {
            Some(e) if e.is_finite() => {
                let err2 = (e - target).powi(2);
                self.count += 1;
                self.sum_est += e;
                self.sum_target += target;
                self.sum_err2 += err2;
                self.sum_err4 += err2 * err2;
            }
            _ => self.excluded += 1,
        }
    }

    fn merge(&mut self, other: &Acc) {
        self.count += other.count;
        self.excluded += other.excluded;
        self.sum_est += other.sum_est;
        self.sum_target += other.sum_target;
        self.sum_err2 += other.sum_err2;
        self.sum_err4 += other.sum_err4;
    }

    fn mse_and_se(&self) -> (f64, f64) {
        let m = self.count as f64;
        if self.count == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mse = self.sum_err2 / m;
        if self.count < 2 {
            return (mse, f64::INFINITY);
        }
        let var = ((self.sum_err4 - m * mse * mse) / (m - 1.0)).max(0.0);
        (mse, (var / m).sqrt())
    }
}

/// Everything a replicate needs; shared read-only across threads.
struct Engine<'a> {
    subjects: &'a Subjects,
    model: ResponseModel,
    spec: &'a LogisticModelSpec,
    splits: Option<Vec<BlockSplit>>,
    designs: Vec<DesignSpec>,
    estimators: Vec<EstimatorKind>,
    seed: u64,
    n_sim: usize,
    /// Trial size when drawing a fresh subsample each replicate.
    subsample: Option<usize>,
    /// Designs built once on the full sample when not subsampling.
    fixed: Vec<RealizedDesign>,
    full_tau: f64,
}

impl Engine<'_> {
    fn slots(&self) -> usize {
        self.estimators.iter().map(|&e| estimator_labels(e).len()).sum()
    }

    fn run_chunk(&self, design: usize, chunk: usize) -> Vec<Acc> {
        let mut accs = vec![Acc::default(); self.slots()];
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(self.n_sim);
        for r in start..end {
            self.replicate(design, r as u64, &mut accs);
        }
        accs
    }

    fn replicate(&self, design: usize, r: u64, accs: &mut [Acc]) {
        let spec = self.designs[design];
        let sub;
        let (subjects, model, realized, tau_r) = match self.subsample {
            None => (self.subjects, &self.model, &self.fixed[design], self.full_tau),
            Some(n0) => {
                let mut rng = replicate_rng(self.seed, "subsample", r);
                let mut idx = index::sample(&mut rng, self.subjects.n_subjects(), n0).into_vec();
                idx.sort_unstable();
                let built = self.subjects.select(&idx).and_then(|s| {
                    let m = ResponseModel::new(
                        idx.iter().map(|&i| self.model.p_t()[i]).collect(),
                        idx.iter().map(|&i| self.model.p_c()[i]).collect(),
                    )?;
                    let d = realize_design(spec, &s, self.splits.as_deref())?;
                    Ok((s, m, d))
                });
                match built {
                    Ok(b) => {
                        sub = b;
                        let t = tau(&sub.1);
                        (&sub.0, &sub.1, &sub.2, t)
                    }
                    Err(_) => {
                        accs.iter_mut().for_each(|a| a.excluded += 1);
                        return;
                    }
                }
            }
        };
        let mut rng = replicate_rng(self.seed, &spec.to_string(), r);
        let outcome = realized.sample(subjects.n_subjects(), &mut rng).and_then(|w| {
            let y = draw_responses(model, &w, &mut rng)?;
            TrialOutcome::new(w, y)
        });
        let Ok(outcome) = outcome else {
            accs.iter_mut().for_each(|a| a.excluded += 1);
            return;
        };
        let beta_t = self.spec.beta_t;
        let mut slot = 0;
        for &kind in &self.estimators {
            match kind {
                EstimatorKind::RiskDifference => {
                    accs[slot].push(Some(diff_in_means(&outcome)), tau_r);
                    slot += 1;
                }
                EstimatorKind::LogOddsRatio => {
                    let lor = log_odds_ratio(&outcome);
                    accs[slot].push(Some(lor), beta_t);
                    accs[slot + 1].push(Some(lor), 2.0 * beta_t);
                    slot += 2;
                }
                EstimatorKind::Logistic => {
                    let est = logistic_fit(subjects, &outcome).ok().filter(|f| f.is_reliable()).map(|f| f.beta_t);
                    accs[slot].push(est, beta_t);
                    slot += 1;
                }
            }
        }
    }

    fn run(&self) -> SimResult {
        let chunks = self.n_sim.div_ceil(CHUNK);
        let tasks: Vec<(usize, usize)> =
            (0..self.designs.len()).flat_map(|d| (0..chunks).map(move |c| (d, c))).collect();
        let partials = map_tasks(&tasks, |&(d, c)| self.run_chunk(d, c));
        let n = self.subsample.unwrap_or(self.subjects.n_subjects());
        let mut rows = Vec::new();
        for (d, spec) in self.designs.iter().enumerate() {
            let mut total = vec![Acc::default(); self.slots()];
            for part in &partials[d * chunks..(d + 1) * chunks] {
                for (t, p) in total.iter_mut().zip(part) {
                    t.merge(p);
                }
            }
            let labels = self.estimators.iter().flat_map(|&e| estimator_labels(e).iter());
            for (acc, label) in total.iter().zip(labels) {
                let (mse, mc_se) = acc.mse_and_se();
                let m = acc.count as f64;
                rows.push(SimRow {
                    design: spec.to_string(),
                    estimator: (*label).to_string(),
                    n,
                    d: self.subjects.dim(),
                    target: if acc.count > 0 { acc.sum_target / m } else { f64::NAN },
                    mean_estimate: if acc.count > 0 { acc.sum_est / m } else { f64::NAN },
                    mse,
                    mc_se,
                    excluded: acc.excluded,
                    replicates: acc.count + acc.excluded,
                });
            }
        }
        SimResult { rows }
    }
}

#[cfg(feature = "parallel")]
fn map_tasks<T: Sync, U: Send>(tasks: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    tasks.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_tasks<T, U>(tasks: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    tasks.iter().map(f).collect()
}

/// Simulate trials on synthetic block-homogeneous covariates. Covariates
/// are drawn once from the master seed; replicate `r` of design `D` uses
/// its own generator derived from `(seed, D, r)`, so the result is
/// bit-identical for any thread count.
pub fn run_monte_carlo(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, "covariates", 0);
    let subjects = block_homogeneous_covariates(config.n_subjects, config.d, &mut rng)?;
    let splits = blocking_scheme(config.d)?;
    run_on_subjects(&subjects, &config.model, config, Some(splits), None)
}

/// Compare designs on fixed covariates with responses drawn from `fitted`.
/// When `config.n_subjects` is smaller than the data, every replicate draws
/// a fresh subsample of that size without replacement (the same subsample
/// for every design) and its own true risk difference.
pub fn parametric_bootstrap(subjects: &Subjects, fitted: &LogisticModelSpec, config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    if config.d != subjects.dim() {
        return Err(Error::DimensionMismatch { expected: subjects.dim(), found: config.d });
    }
    if fitted.beta.len() != subjects.dim() {
        return Err(Error::DimensionMismatch { expected: subjects.dim(), found: fitted.beta.len() });
    }
    let total = subjects.n_subjects();
    let subsample = match config.n_subjects {
        n if n > total => {
            return Err(Error::InvalidConfig(format!("subsample size {n} exceeds the {total} subjects available")))
        }
        n if n == total => None,
        n => Some(n),
    };
    run_on_subjects(subjects, fitted, config, None, subsample)
}

/// Exposed for callers that bring their own covariates and blocking.
pub fn run_on_subjects(
    subjects: &Subjects,
    spec: &LogisticModelSpec,
    config: &SimConfig,
    splits: Option<Vec<BlockSplit>>,
    subsample: Option<usize>,
) -> Result<SimResult> {
    let model = spec.response_model(subjects)?;
    let fixed = if subsample.is_none() {
        config.designs.iter().map(|&d| realize_design(d, subjects, splits.as_deref())).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let engine = Engine {
        subjects,
        full_tau: tau(&model),
        model,
        spec,
        splits,
        designs: config.designs.clone(),
        estimators: config.estimators.clone(),
        seed: config.seed,
        n_sim: config.n_sim,
        subsample,
        fixed,
    };
    Ok(engine.run())
}

/// Monte Carlo estimate of the diff-in-means MSE for an explicit model and
/// design; used to cross-check the closed form.
pub fn monte_carlo_mse(model: &ResponseModel, design: &RealizedDesign, n_sim: usize, seed: u64) -> Result<(f64, f64)> {
    let n = model.len();
    check_subject_count(n)?;
    let target = tau(model);
    let chunks = n_sim.div_ceil(CHUNK);
    let tasks: Vec<usize> = (0..chunks).collect();
    let partials = map_tasks(&tasks, |&c| -> Result<Acc> {
        let mut acc = Acc::default();
        for r in c * CHUNK..((c + 1) * CHUNK).min(n_sim) {
            let mut rng = replicate_rng(seed, "mse", r as u64);
            let w = design.sample(n, &mut rng)?;
            let y = draw_responses(model, &w, &mut rng)?;
            acc.push(Some(diff_in_means(&TrialOutcome::new(w, y)?)), target);
        }
        Ok(acc)
    });
    let mut total = Acc::default();
    for p in partials {
        total.merge(&p?);
    }
    Ok(total.mse_and_se())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Link;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_grid() {
        let g = logistic_quantile_grid(64);
        assert_eq!(g.len(), 64);
        assert!((g[0] + 199f64.ln()).abs() < 1e-12);
        assert!((g[63] - 199f64.ln()).abs() < 1e-12);
        assert!((g[0] + 5.2933).abs() < 1e-4);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(logistic_quantile_grid(5)[2].abs() < 1e-15);
    }

    #[test]
    fn design_spec_round_trip() {
        for s in ["bcrd", "block:8", "pm", "random_pm"] {
            assert_eq!(s.parse::<DesignSpec>().unwrap().to_string(), s);
        }
        assert_eq!("BL:4".parse::<DesignSpec>().unwrap(), DesignSpec::Blocked(4));
        assert!("block:0".parse::<DesignSpec>().is_err());
        assert!("pairs".parse::<DesignSpec>().is_err());
    }

    #[test]
    fn synthetic_covariates_block_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = block_homogeneous_covariates(64, 1, &mut rng).unwrap();
        assert_eq!(one.column(0), logistic_quantile_grid(64));
        for d in [2, 5] {
            let s = block_homogeneous_covariates(64, d, &mut rng).unwrap();
            let p = nested_block_partition(s.covariates(), &blocking_scheme(d).unwrap()).unwrap();
            assert_eq!(p.sizes(), vec![8; 8]);
            // every column is a permutation of the grid
            for c in 0..d {
                let mut col = s.column(c);
                col.sort_by(f64::total_cmp);
                assert_eq!(col, logistic_quantile_grid(64));
            }
            // each later blocking covariate splits every cell at the global median
            let scheme = blocking_scheme(d).unwrap();
            let median = 0.0;
            for block in p.blocks() {
                for split in &scheme[1..] {
                    let below = block.iter().filter(|&&i| s.covariates()[(i, split.column)] < median).count();
                    assert!(below == 0 || below == block.len(), "column {} not homogeneous", split.column);
                }
            }
        }
        assert!(block_homogeneous_covariates(64, 3, &mut rng).is_err());
        assert!(block_homogeneous_covariates(40, 1, &mut rng).is_err());
    }

    #[test]
    fn responses_follow_the_arm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Allocation::new(vec![1, -1, 1, -1]).unwrap();
        let ones = ResponseModel::new(vec![1.0; 4], vec![1.0; 4]).unwrap();
        assert_eq!(draw_responses(&ones, &w, &mut rng).unwrap(), vec![1; 4]);
        let split = ResponseModel::new(vec![1.0; 4], vec![0.0; 4]).unwrap();
        assert_eq!(draw_responses(&split, &w, &mut rng).unwrap(), vec![1, 0, 1, 0]);
    }

    fn small_config(n_sim: usize) -> SimConfig {
        SimConfig {
            n_subjects: 16,
            d: 1,
            designs: vec![DesignSpec::Bcrd, DesignSpec::Blocked(8), DesignSpec::PairMatched],
            model: LogisticModelSpec { beta0: 0.0, beta: vec![1.0], beta_t: 0.5, link: Link::Expit },
            n_sim,
            seed: 9,
            estimators: vec![EstimatorKind::RiskDifference, EstimatorKind::LogOddsRatio, EstimatorKind::Logistic],
        }
    }

    #[test]
    fn single_replicate_runs() {
        let r = run_monte_carlo(&small_config(1)).unwrap();
        assert_eq!(r.rows.len(), 3 * 4);
        for row in &r.rows {
            assert_eq!(row.replicates, 1);
            assert!(row.excluded > 0 || row.mc_se.is_infinite());
        }
    }

    #[test]
    fn rows_are_complete_and_consistent() {
        let r = run_monte_carlo(&small_config(2000)).unwrap();
        for row in &r.rows {
            assert_eq!(row.replicates, 2000);
            assert_eq!(row.n, 16);
            if row.excluded < 2000 {
                assert!(row.mse >= 0.0 && row.mc_se >= 0.0);
            }
        }
        let lor = r.get("pm", "lor_vs_beta_t").unwrap();
        let lor2 = r.get("pm", "lor_vs_2beta_t").unwrap();
        assert_eq!(lor.mean_estimate, lor2.mean_estimate);
        assert_eq!(lor2.target, 1.0);
    }

    #[test]
    fn full_size_bootstrap_matches_monte_carlo() {
        let config = small_config(500);
        let mut rng = replicate_rng(config.seed, "covariates", 0);
        let subjects = block_homogeneous_covariates(16, 1, &mut rng).unwrap();
        let boot = parametric_bootstrap(&subjects, &config.model, &config).unwrap();
        // sorted blocking on x1 and the one-level scheme coincide for d = 1
        assert_eq!(boot, run_monte_carlo(&config).unwrap());
    }

    #[test]
    fn subsampled_bootstrap_uses_per_replicate_truth() {
        let mut config = small_config(300);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let subjects = block_homogeneous_covariates(32, 1, &mut rng).unwrap();
        config.n_subjects = 16;
        let r = parametric_bootstrap(&subjects, &config.model, &config).unwrap();
        let rd = r.get("bcrd", "risk_difference").unwrap();
        assert_eq!(rd.n, 16);
        assert_eq!(rd.excluded, 0);
        config.n_subjects = 48;
        assert!(parametric_bootstrap(&subjects, &config.model, &config).is_err());
    }
}
