//! Domain types shared by every module.
//!
//! Indices are 0-based inside the crate. Constructors that accept external
//! (1-based) indices are suffixed `_one_based`; `Display` impls print 1-based.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest admissible trial size. Two subjects make every design identical.
pub const MIN_SUBJECTS: usize = 4;

pub fn check_subject_count(n: usize) -> Result<()> {
    if !n.is_multiple_of(2) {
        return Err(Error::OddSubjectCount(n));
    }
    if n < MIN_SUBJECTS {
        return Err(Error::TooFewSubjects(n));
    }
    Ok(())
}

/// Fixed covariates of the `2n` subjects in the trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Subjects {
    ids: Vec<String>,
    x: DMatrix<f64>,
}

impl Subjects {
    /// `x` has one row per subject. Zero columns is allowed.
    pub fn new(ids: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        check_subject_count(x.nrows())?;
        if ids.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: ids.len() });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariates"));
        }
        Ok(Self { ids, x })
    }

    /// Subjects labelled `1..=2n`.
    pub fn with_default_ids(x: DMatrix<f64>) -> Result<Self> {
        let ids = (1..=x.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, x)
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>], d: usize) -> Result<Self> {
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(ids, x)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n_subjects(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_pairs(&self) -> usize {
        self.x.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// The subjects at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n_subjects();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad + 1, n });
        }
        let x = self.x.select_rows(indices);
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        Self::new(ids, x)
    }
}

/// Per-subject success probabilities under treatment and under control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseModel {
    p_t: Vec<f64>,
    p_c: Vec<f64>,
}

impl ResponseModel {
    pub fn new(p_t: Vec<f64>, p_c: Vec<f64>) -> Result<Self> {
        if p_t.is_empty() {
            return Err(Error::Empty("response model"));
        }
        if p_t.len() != p_c.len() {
            return Err(Error::DimensionMismatch { expected: p_t.len(), found: p_c.len() });
        }
        for (i, &p) in p_t.iter().chain(p_c.iter()).enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ProbabilityOutOfRange { index: i % p_t.len() + 1, value: p });
            }
        }
        Ok(Self { p_t, p_c })
    }

    /// Build a model whose `v = p_T + p_C` is the given vector, split evenly
    /// between arms (no treatment effect).
    pub fn from_v(v: &[f64]) -> Result<Self> {
        let half: Vec<f64> = v.iter().map(|x| x / 2.0).collect();
        Self::new(half.clone(), half)
    }

    pub fn len(&self) -> usize {
        self.p_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_t.is_empty()
    }

    pub fn p_t(&self) -> &[f64] {
        &self.p_t
    }

    pub fn p_c(&self) -> &[f64] {
        &self.p_c
    }

    /// `v = p_T + p_C`, the only part of the model the design interacts with.
    pub fn v(&self) -> Vec<f64> {
        self.p_t.iter().zip(&self.p_c).map(|(t, c)| t + c).collect()
    }

    /// Success probability of subject `i` given its arm.
    pub fn conditional_mean(&self, i: usize, w: i8) -> f64 {
        if w > 0 {
            self.p_t[i]
        } else {
            self.p_c[i]
        }
    }
}

/// A balanced assignment: entries are `+1` (treatment) or `-1` (control)
/// and sum to zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Allocation {
    w: Vec<i8>,
}

impl Allocation {
    pub fn new(w: Vec<i8>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Empty("allocation"));
        }
        let mut sum = 0i64;
        for (i, &s) in w.iter().enumerate() {
            if s != 1 && s != -1 {
                return Err(Error::InvalidSign { index: i + 1, value: s as i64 });
            }
            sum += s as i64;
        }
        if sum != 0 {
            return Err(Error::UnbalancedAllocation(sum));
        }
        Ok(Self { w })
    }

    pub(crate) fn new_unchecked(w: Vec<i8>) -> Self {
        debug_assert_eq!(w.iter().map(|&s| s as i64).sum::<i64>(), 0);
        Self { w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.w
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.w.iter().map(|&s| s as f64).collect()
    }

    /// The mirrored allocation `-w`.
    pub fn flipped(&self) -> Self {
        Self { w: self.w.iter().map(|&s| -s).collect() }
    }
}

/// How a block partition should be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DesignKind {
    /// One block holding everybody.
    CompleteRandomization,
    /// `n` blocks of two.
    PairMatched,
    /// Anything in between.
    Blocked { n_blocks: usize },
}

/// Structural summary returned by [`validate_design_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_subjects: usize,
    pub n_blocks: usize,
    pub block_sizes: Vec<usize>,
    pub kind: DesignKind,
}

/// Check that `blocks` partitions `0..n_subjects` into blocks of even size,
/// which is what balanced within-block randomization and equal marginal
/// assignment probabilities require.
pub fn validate_design_assumptions(blocks: &[Vec<usize>], n_subjects: usize) -> Result<ValidationReport> {
    check_subject_count(n_subjects)?;
    let mut seen = vec![false; n_subjects];
    for block in blocks {
        for &i in block {
            if i >= n_subjects {
                return Err(Error::IndexOutOfRange { index: i + 1, n: n_subjects });
            }
            if seen[i] {
                return Err(Error::DuplicateIndex(i + 1));
            }
            seen[i] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::MissingIndex(missing + 1));
    }
    for (b, block) in blocks.iter().enumerate() {
        if block.len() % 2 != 0 || block.is_empty() {
            return Err(Error::OddBlock { block: b + 1, size: block.len() });
        }
    }
    let block_sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    let kind = if blocks.len() == 1 {
        DesignKind::CompleteRandomization
    } else if block_sizes.iter().all(|&s| s == 2) {
        DesignKind::PairMatched
    } else {
        DesignKind::Blocked { n_blocks: blocks.len() }
    };
    Ok(ValidationReport { n_subjects, n_blocks: blocks.len(), block_sizes, kind })
}

/// Disjoint blocks of even size covering every subject. Randomization is
/// balanced and independent within each block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    n_subjects: usize,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>, n_subjects: usize) -> Result<Self> {
        validate_design_assumptions(&blocks, n_subjects)?;
        Ok(Self { blocks, n_subjects })
    }

    pub fn from_one_based(blocks: &[Vec<usize>], n_subjects: usize) -> Result<Self> {
        let mut zero = Vec::with_capacity(blocks.len());
        for block in blocks {
            let mut b = Vec::with_capacity(block.len());
            for &i in block {
                if i == 0 {
                    return Err(Error::IndexOutOfRange { index: 0, n: n_subjects });
                }
                b.push(i - 1);
            }
            zero.push(b);
        }
        Self::new(zero, n_subjects)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn kind(&self) -> DesignKind {
        if self.blocks.len() == 1 {
            DesignKind::CompleteRandomization
        } else if self.blocks.iter().all(|b| b.len() == 2) {
            DesignKind::PairMatched
        } else {
            DesignKind::Blocked { n_blocks: self.blocks.len() }
        }
    }

    /// Block label of every subject.
    pub fn membership(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_subjects];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                out[i] = b;
            }
        }
        out
    }
}

impl fmt::Display for BlockPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                write!(f, ",")?;
            }
            write!(f, "(")?;
            for (k, i) in block.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, ")")?;
        }
        write!(f, "}}")
    }
}

/// A perfect pairing of the subjects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchSet {
    pairs: Vec<(usize, usize)>,
    n_subjects: usize,
}

impl MatchSet {
    pub fn new(pairs: Vec<(usize, usize)>, n_subjects: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("match set"));
        }
        let blocks: Vec<Vec<usize>> = pairs.iter().map(|&(i, j)| vec![i, j]).collect();
        validate_design_assumptions(&blocks, n_subjects)?;
        Ok(Self { pairs, n_subjects })
    }

    pub fn from_one_based(pairs: &[(usize, usize)], n_subjects: usize) -> Result<Self> {
        let mut zero = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i == 0 || j == 0 {
                return Err(Error::IndexOutOfRange { index: 0, n: n_subjects });
            }
            zero.push((i - 1, j - 1));
        }
        Self::new(zero, n_subjects)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same matching with every pair ordered `(small, large)` and pairs sorted.
    /// Two match sets describe the same pairing iff their canonical forms agree.
    pub fn canonical(&self) -> Self {
        let mut pairs: Vec<(usize, usize)> = self.pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
        pairs.sort_unstable();
        Self { pairs, n_subjects: self.n_subjects }
    }

    /// `mate[i]` is the partner of subject `i`.
    pub fn mates(&self) -> Vec<usize> {
        let mut mate = vec![0; self.n_subjects];
        for &(i, j) in &self.pairs {
            mate[i] = j;
            mate[j] = i;
        }
        mate
    }

    /// Total weight of the pairing under a symmetric distance matrix.
    pub fn total_weight(&self, d: &DMatrix<f64>) -> f64 {
        self.pairs.iter().map(|&(i, j)| d[(i, j)]).sum()
    }
}

impl fmt::Display for MatchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, (i, j)) in self.pairs.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "<{},{}>", i + 1, j + 1)?;
        }
        write!(f, "}}")
    }
}

/// Variance-covariance matrix of a design's random allocation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    sigma: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Accepts any finite symmetric square matrix.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::DimensionMismatch { expected: sigma.nrows(), found: sigma.ncols() });
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        let n = sigma.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "covariance matrix is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { sigma })
    }

    pub(crate) fn from_matrix_unchecked(sigma: DMatrix<f64>) -> Self {
        Self { sigma }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn has_unit_diagonal(&self, tol: f64) -> bool {
        self.sigma.diagonal().iter().all(|d| (d - 1.0).abs() <= tol)
    }

    /// Largest absolute row sum; zero for every balanced design.
    pub fn max_abs_row_sum(&self) -> f64 {
        self.sigma.row_iter().map(|r| r.iter().sum::<f64>().abs()).fold(0.0, f64::max)
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &CovarianceMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.sigma.iter().zip(other.sigma.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_pm_partition_is_valid() {
        let report = validate_design_assumptions(&[vec![0, 1], vec![2, 3]], 4).unwrap();
        assert_eq!(report.kind, DesignKind::PairMatched);
        assert_eq!(report.block_sizes, vec![2, 2]);
    }

    #[test]
    fn odd_blocks_are_rejected() {
        let err = validate_design_assumptions(&[vec![0, 1, 2], vec![3]], 4).unwrap_err();
        assert_eq!(err, Error::OddBlock { block: 1, size: 3 });
    }

    #[test]
    fn overlapping_blocks_are_a_partition_error() {
        let err = validate_design_assumptions(&[vec![0, 1], vec![1, 2]], 4).unwrap_err();
        assert_eq!(err, Error::DuplicateIndex(2));
        let err = validate_design_assumptions(&[vec![0, 1]], 4).unwrap_err();
        assert_eq!(err, Error::MissingIndex(3));
    }

    #[test]
    fn two_subjects_are_rejected() {
        assert_eq!(validate_design_assumptions(&[vec![0, 1]], 2).unwrap_err(), Error::TooFewSubjects(2));
    }

    #[test]
    fn allocation_requires_balance() {
        assert!(Allocation::new(vec![1, -1, 1, -1]).is_ok());
        assert_eq!(Allocation::new(vec![1, 1, 1, -1]).unwrap_err(), Error::UnbalancedAllocation(2));
        assert!(matches!(Allocation::new(vec![1, 0, -1, 0]), Err(Error::InvalidSign { index: 2, .. })));
    }

    #[test]
    fn subjects_validation() {
        let x = DMatrix::zeros(4, 0);
        let s = Subjects::with_default_ids(x).unwrap();
        assert_eq!(s.dim(), 0);
        assert_eq!(s.n_pairs(), 2);
        let dup = Subjects::new(vec!["a".into(), "b".into(), "a".into(), "c".into()], DMatrix::zeros(4, 1));
        assert_eq!(dup.unwrap_err(), Error::DuplicateId("a".into()));
        assert_eq!(Subjects::with_default_ids(DMatrix::zeros(5, 1)).unwrap_err(), Error::OddSubjectCount(5));
    }

    #[test]
    fn response_model_accepts_corners() {
        let m = ResponseModel::new(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(m.v(), vec![2.0, 0.0]);
        assert!(ResponseModel::new(vec![1.1, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn one_based_display_round_trip() {
        let p = BlockPartition::from_one_based(&[vec![2, 4], vec![1, 3]], 4).unwrap();
        assert_eq!(p.to_string(), "{(2,4),(1,3)}");
        let m = MatchSet::from_one_based(&[(2, 3), (1, 4)], 4).unwrap();
        assert_eq!(m.to_string(), "{<2,3>,<1,4>}");
        assert_eq!(m.canonical().pairs(), &[(0, 3), (1, 2)]);
    }
}
