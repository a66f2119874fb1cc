//! Pair matching on covariates: Mahalanobis distances and an exact
//! minimum-weight perfect matching on the complete graph.

mod blossom;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{check_subject_count, BlockPartition, MatchSet, Subjects};
use crate::error::{Error, Result};

use blossom::{max_weight_matching, Edge};

/// Largest instance [`brute_force_matching`] accepts (10395 matchings).
pub const BRUTE_FORCE_MAX_SUBJECTS: usize = 12;

/// Relative cutoff below which sample-covariance eigenvalues are treated as zero.
const PINV_CUTOFF: f64 = 1e-10;

/// Resolution of the integer weights handed to the blossom solver.
const WEIGHT_SCALE: f64 = (1u64 << 40) as f64;

/// Sample covariance of the rows of `x` with the `1/(m - 1)` normalizer.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows();
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    centered.transpose() * &centered / (m as f64 - 1.0)
}

/// Moore-Penrose inverse of a symmetric positive semidefinite matrix.
pub fn pseudo_inverse_psd(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let largest = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * largest;
    let inv: Vec<f64> =
        eig.eigenvalues.iter().map(|&l| if largest > 0.0 && l > cutoff { 1.0 / l } else { 0.0 }).collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `D[i][j] = (x_i - x_j)' S⁻ (x_i - x_j)` with `S` the sample covariance of
/// all subjects and `S⁻` its (pseudo-)inverse.
pub fn mahalanobis_distance_matrix(subjects: &Subjects) -> Result<DMatrix<f64>> {
    if subjects.dim() == 0 {
        return Err(Error::NoCovariates);
    }
    let x = subjects.covariates();
    let precision = pseudo_inverse_psd(&sample_covariance(x));
    let m = x.nrows();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let diff = (x.row(i) - x.row(j)).transpose();
            let dist = (diff.transpose() * &precision * &diff)[(0, 0)].max(0.0);
            out[(i, j)] = dist;
            out[(j, i)] = dist;
        }
    }
    Ok(out)
}

fn check_distance_matrix(d: &DMatrix<f64>) -> Result<()> {
    if d.nrows() != d.ncols() {
        return Err(Error::DimensionMismatch { expected: d.nrows(), found: d.ncols() });
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("distance matrix"));
    }
    if d.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidConfig("distance matrix has negative entries".into()));
    }
    Ok(())
}

struct Quantized {
    cost: Vec<Vec<i64>>,
    ceiling: i64,
}

impl Quantized {
    fn new(d: &DMatrix<f64>) -> Self {
        let n = d.nrows();
        let largest = d.iter().copied().fold(0.0, f64::max);
        let scale = if largest > 0.0 { WEIGHT_SCALE / largest } else { 0.0 };
        // only the upper triangle is read
        let cost: Vec<Vec<i64>> =
            (0..n).map(|i| (0..n).map(|j| (d[(i.min(j), i.max(j))] * scale).round() as i64).collect()).collect();
        let ceiling = cost.iter().flatten().copied().max().unwrap_or(0) + 1;
        Self { cost, ceiling }
    }

    fn weight(&self, i: usize, j: usize) -> i64 {
        self.ceiling - self.cost[i][j]
    }

    /// Optimal perfect matching of `vertices`; returns global mates and cost.
    fn solve(&self, vertices: &[usize]) -> (Vec<(usize, usize)>, i64, blossom::Solution) {
        let m = vertices.len();
        let mut edges = Vec::with_capacity(m * (m - 1) / 2);
        for a in 0..m {
            for b in (a + 1)..m {
                edges.push(Edge { i: a, j: b, w: self.weight(vertices[a], vertices[b]) });
            }
        }
        let sol = max_weight_matching(m, &edges, true);
        let mut pairs = Vec::with_capacity(m / 2);
        let mut cost = 0;
        for a in 0..m {
            let b = sol.mate[a];
            assert!(b < m, "solver returned an imperfect matching");
            if a < b {
                pairs.push((vertices[a], vertices[b]));
                cost += self.cost[vertices[a]][vertices[b]];
            }
        }
        (pairs, cost, sol)
    }
}

/// Exact minimum-weight perfect matching on the complete graph with edge
/// weights `d` (upper triangle).
///
/// Among several optimal matchings the lexicographically smallest canonical
/// pair list is returned. Weights are quantized to 40-bit integers so the
/// blossom dual updates are exact; relative differences below `2^-40` of the
/// largest distance count as ties.
pub fn min_weight_perfect_matching(d: &DMatrix<f64>) -> Result<MatchSet> {
    check_distance_matrix(d)?;
    let n = d.nrows();
    check_subject_count(n)?;
    let q = Quantized::new(d);
    let all: Vec<usize> = (0..n).collect();
    let (pairs, mut remaining_cost, certificate) = q.solve(&all);

    let mut mate = vec![0usize; n];
    for &(a, b) in &pairs {
        mate[a] = b;
        mate[b] = a;
    }
    // Edges with positive reduced cost cannot appear in any optimal matching.
    let tight: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| j != i && certificate.slack(i, j, q.weight(i, j)) == 0).collect()).collect();
    if tight.iter().all(|t| t.len() == 1) {
        return MatchSet::new(pairs, n).map(|m| m.canonical());
    }

    // Tie-break: fix the smallest free vertex to its smallest feasible partner.
    let mut remaining: Vec<usize> = all;
    let mut fixed = Vec::with_capacity(n / 2);
    while let Some(&i) = remaining.first() {
        let mut partner = mate[i];
        for &j in &tight[i] {
            if j >= partner {
                break;
            }
            if !remaining.contains(&j) {
                continue;
            }
            let rest: Vec<usize> = remaining.iter().copied().filter(|&k| k != i && k != j).collect();
            let (rest_pairs, rest_cost) = if rest.is_empty() {
                (Vec::new(), 0)
            } else {
                let (p, c, _) = q.solve(&rest);
                (p, c)
            };
            if q.cost[i][j] + rest_cost == remaining_cost {
                for (a, b) in rest_pairs {
                    mate[a] = b;
                    mate[b] = a;
                }
                mate[i] = j;
                mate[j] = i;
                partner = j;
                break;
            }
        }
        remaining_cost -= q.cost[i][partner];
        fixed.push((i, partner));
        remaining.retain(|&k| k != i && k != partner);
    }
    MatchSet::new(fixed, n).map(|m| m.canonical())
}

/// Call `visit` with every perfect matching of `0..n`, in lexicographic
/// order of canonical pair lists.
pub fn for_each_matching<F: FnMut(&[(usize, usize)])>(n: usize, mut visit: F) {
    fn rec<F: FnMut(&[(usize, usize)])>(free: &mut Vec<usize>, pairs: &mut Vec<(usize, usize)>, visit: &mut F) {
        if free.is_empty() {
            visit(pairs);
            return;
        }
        let i = free.remove(0);
        for k in 0..free.len() {
            let j = free.remove(k);
            pairs.push((i, j));
            rec(free, pairs, visit);
            pairs.pop();
            free.insert(k, j);
        }
        free.insert(0, i);
    }
    if !n.is_multiple_of(2) {
        return;
    }
    let mut free: Vec<usize> = (0..n).collect();
    rec(&mut free, &mut Vec::with_capacity(n / 2), &mut visit);
}

/// Every perfect matching of `n_subjects` subjects; `(n_subjects - 1)!!` of them.
pub fn enumerate_matchings(n_subjects: usize) -> Result<Vec<MatchSet>> {
    check_subject_count(n_subjects)?;
    if n_subjects > BRUTE_FORCE_MAX_SUBJECTS {
        return Err(Error::SupportTooLarge { size: double_factorial(n_subjects - 1), cap: 10395 });
    }
    let mut out = Vec::new();
    for_each_matching(n_subjects, |pairs| out.push(MatchSet::new(pairs.to_vec(), n_subjects).unwrap()));
    Ok(out)
}

fn double_factorial(k: usize) -> u128 {
    (1..=k).rev().step_by(2).map(|x| x as u128).product()
}

/// Exhaustive minimum-weight perfect matching with the same tie rule as
/// [`min_weight_perfect_matching`]. Accepts up to 12 subjects.
pub fn brute_force_matching(d: &DMatrix<f64>) -> Result<MatchSet> {
    check_distance_matrix(d)?;
    let n = d.nrows();
    check_subject_count(n)?;
    if n > BRUTE_FORCE_MAX_SUBJECTS {
        return Err(Error::SupportTooLarge { size: double_factorial(n - 1), cap: 10395 });
    }
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    for_each_matching(n, |pairs| {
        let total: f64 = pairs.iter().map(|&(i, j)| d[(i, j)]).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, pairs.to_vec()));
        }
    });
    let (_, pairs) = best.expect("at least one matching");
    MatchSet::new(pairs, n)
}

/// Repeatedly take the globally shortest remaining edge. A baseline only;
/// it is not optimal in general.
pub fn greedy_matching(d: &DMatrix<f64>) -> Result<MatchSet> {
    check_distance_matrix(d)?;
    let n = d.nrows();
    check_subject_count(n)?;
    let mut edges: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    edges.sort_by(|a, b| d[*a].total_cmp(&d[*b]).then(a.cmp(b)));
    let mut used = vec![false; n];
    let mut pairs = Vec::with_capacity(n / 2);
    for (i, j) in edges {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
        }
    }
    MatchSet::new(pairs, n).map(|m| m.canonical())
}

/// A perfect matching drawn uniformly at random.
pub fn random_matching<R: Rng + ?Sized>(n_subjects: usize, rng: &mut R) -> Result<MatchSet> {
    check_subject_count(n_subjects)?;
    let mut order: Vec<usize> = (0..n_subjects).collect();
    order.shuffle(rng);
    MatchSet::new(order.chunks(2).map(|c| (c[0], c[1])).collect(), n_subjects)
}

/// View a pairing as a block design with `n` blocks of two.
pub fn matchset_to_partition(matches: &MatchSet) -> Result<BlockPartition> {
    if matches.is_empty() {
        return Err(Error::Empty("match set"));
    }
    BlockPartition::new(matches.pairs().iter().map(|&(i, j)| vec![i, j]).collect(), matches.n_subjects())
}
