//! Construction of complete-randomization, block and pair-matching designs,
//! uniform sampling from their supports and their closed-form covariance.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{check_subject_count, Allocation, BlockPartition, CovarianceMatrix, MatchSet};
use crate::error::{Error, Result};

/// Default ceiling on the number of allocations [`enumerate_support`] will materialize.
pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

/// Indices of `key` in ascending order, ties broken by index.
pub fn sorted_order(key: &[f64]) -> Result<Vec<usize>> {
    if key.iter().any(|k| !k.is_finite()) {
        return Err(Error::NonFinite("sort key"));
    }
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Balanced complete randomization: a single block with every subject.
pub fn bcrd(n_subjects: usize) -> Result<BlockPartition> {
    check_subject_count(n_subjects)?;
    BlockPartition::new(vec![(0..n_subjects).collect()], n_subjects)
}

/// `n_blocks` equal blocks filled with consecutive runs of the sort order of `key`.
pub fn sorted_block_partition(key: &[f64], n_blocks: usize) -> Result<BlockPartition> {
    let n = key.len();
    check_subject_count(n)?;
    if n_blocks == 0 || !n.is_multiple_of(n_blocks) || !(n / n_blocks).is_multiple_of(2) {
        return Err(Error::Indivisible { n_subjects: n, n_blocks });
    }
    let size = n / n_blocks;
    sorted_partition_with_sizes(key, &vec![size; n_blocks])
}

/// Blocks of the given (even, possibly unequal) sizes filled in sort order of `key`.
pub fn sorted_partition_with_sizes(key: &[f64], sizes: &[usize]) -> Result<BlockPartition> {
    let n = key.len();
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::DimensionMismatch { expected: n, found: total });
    }
    let order = sorted_order(key)?;
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        blocks.push(order[start..start + s].to_vec());
        start += s;
    }
    BlockPartition::new(blocks, n)
}

/// One level of a nested blocking scheme: split every current cell into
/// `parts` equal runs of the sort order of covariate `column`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSplit {
    pub column: usize,
    pub parts: usize,
}

/// Stratify on several covariates in turn. With a single split this is
/// [`sorted_block_partition`] on that column.
pub fn nested_block_partition(x: &DMatrix<f64>, splits: &[BlockSplit]) -> Result<BlockPartition> {
    let n = x.nrows();
    check_subject_count(n)?;
    let total_blocks: usize = splits.iter().map(|s| s.parts).product();
    if splits.is_empty()
        || total_blocks == 0
        || !n.is_multiple_of(total_blocks)
        || !(n / total_blocks).is_multiple_of(2)
    {
        return Err(Error::Indivisible { n_subjects: n, n_blocks: total_blocks });
    }
    let mut cells: Vec<Vec<usize>> = vec![(0..n).collect()];
    for split in splits {
        if split.column >= x.ncols() {
            return Err(Error::DimensionMismatch { expected: x.ncols(), found: split.column + 1 });
        }
        let mut next = Vec::with_capacity(cells.len() * split.parts);
        for cell in &cells {
            let key: Vec<f64> = cell.iter().map(|&i| x[(i, split.column)]).collect();
            let order = sorted_order(&key)?;
            let size = cell.len() / split.parts;
            for chunk in order.chunks(size) {
                next.push(chunk.iter().map(|&k| cell[k]).collect());
            }
        }
        cells = next;
    }
    BlockPartition::new(cells, n)
}

/// Pair neighbours in the sort order of `key`.
pub fn sorted_pair_matching(key: &[f64]) -> Result<MatchSet> {
    let n = key.len();
    check_subject_count(n)?;
    let order = sorted_order(key)?;
    let pairs = order.chunks(2).map(|c| (c[0], c[1])).collect();
    MatchSet::new(pairs, n)
}

/// Draw one allocation: in every block a uniformly random half is treated,
/// independently across blocks.
pub fn sample_allocation<R: Rng + ?Sized>(partition: &BlockPartition, rng: &mut R) -> Allocation {
    let mut w = vec![0i8; partition.n_subjects()];
    let mut signs = Vec::new();
    for block in partition.blocks() {
        let half = block.len() / 2;
        signs.clear();
        signs.extend(std::iter::repeat_n(1i8, half));
        signs.extend(std::iter::repeat_n(-1i8, half));
        signs.shuffle(rng);
        for (&i, &s) in block.iter().zip(signs.iter()) {
            w[i] = s;
        }
    }
    Allocation::new_unchecked(w)
}

/// Closed-form `Var(W)`: unit diagonal, `-1/(n_b - 1)` within block `b`, zero across blocks.
pub fn covariance_matrix(partition: &BlockPartition) -> CovarianceMatrix {
    let n = partition.n_subjects();
    let mut sigma = DMatrix::zeros(n, n);
    for block in partition.blocks() {
        let off = -1.0 / (block.len() as f64 - 1.0);
        for &i in block {
            for &j in block {
                sigma[(i, j)] = if i == j { 1.0 } else { off };
            }
        }
    }
    CovarianceMatrix::from_matrix_unchecked(sigma)
}

pub(crate) fn choose(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of allocations a block design can produce.
pub fn support_size(partition: &BlockPartition) -> u128 {
    partition.blocks().iter().map(|b| choose(b.len(), b.len() / 2)).fold(1u128, |acc, c| acc.saturating_mul(c))
}

// All k-subsets of 0..n in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every allocation in the support of a block design, each exactly once.
pub fn enumerate_support(partition: &BlockPartition, cap: usize) -> Result<Vec<Allocation>> {
    let size = support_size(partition);
    if size > cap as u128 {
        return Err(Error::SupportTooLarge { size, cap });
    }
    let per_block: Vec<Vec<Vec<i8>>> = partition
        .blocks()
        .iter()
        .map(|block| {
            let m = block.len();
            combinations(m, m / 2)
                .into_iter()
                .map(|treated| {
                    let mut s = vec![-1i8; m];
                    for t in treated {
                        s[t] = 1;
                    }
                    s
                })
                .collect()
        })
        .collect();

    let n = partition.n_subjects();
    let mut out = Vec::with_capacity(size as usize);
    let mut counter = vec![0usize; per_block.len()];
    loop {
        let mut w = vec![0i8; n];
        for (b, block) in partition.blocks().iter().enumerate() {
            for (&i, &s) in block.iter().zip(&per_block[b][counter[b]]) {
                w[i] = s;
            }
        }
        out.push(Allocation::new_unchecked(w));
        // odometer increment
        let mut b = per_block.len();
        loop {
            if b == 0 {
                return Ok(out);
            }
            b -= 1;
            counter[b] += 1;
            if counter[b] < per_block[b].len() {
                break;
            }
            counter[b] = 0;
        }
    }
}

/// Covariance of the uniform law on `allocations`: mean of `w w'` minus the
/// outer product of the mean.
pub fn empirical_covariance(allocations: &[Allocation]) -> Result<CovarianceMatrix> {
    let first = allocations.first().ok_or(Error::Empty("allocation list"))?;
    let n = first.len();
    let mut second = DMatrix::<f64>::zeros(n, n);
    let mut mean = vec![0.0; n];
    for a in allocations {
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.len() });
        }
        let w = a.signs();
        for i in 0..n {
            mean[i] += w[i] as f64;
            for j in 0..n {
                second[(i, j)] += (w[i] * w[j]) as f64;
            }
        }
    }
    let m = allocations.len() as f64;
    let sigma = DMatrix::from_fn(n, n, |i, j| second[(i, j)] / m - (mean[i] / m) * (mean[j] / m));
    Ok(CovarianceMatrix::from_matrix_unchecked(sigma))
}

/// A design outside the block family: uniform over `k` random balanced
/// allocations and their mirror images. Mirroring makes every marginal mean
/// exactly zero.
pub fn random_mixture_design<R: Rng + ?Sized>(n_subjects: usize, k: usize, rng: &mut R) -> Result<Vec<Allocation>> {
    let full = bcrd(n_subjects)?;
    let mut out = Vec::with_capacity(2 * k);
    for _ in 0..k.max(1) {
        let a = sample_allocation(&full, rng);
        out.push(a.flipped());
        out.push(a);
    }
    Ok(out)
}

/// All partitions of `0..n_subjects` into blocks of even size, in a fixed order.
/// Grows super-exponentially; intended for `n_subjects <= 10`.
pub fn enumerate_even_partitions(n_subjects: usize) -> Result<Vec<BlockPartition>> {
    check_subject_count(n_subjects)?;
    fn rec(remaining: &[usize], current: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        let Some((&first, rest)) = remaining.split_first() else {
            out.push(current.clone());
            return;
        };
        // the block holding `first` takes an odd number of the others
        for k in (1..=rest.len()).step_by(2) {
            for chosen in combinations(rest.len(), k) {
                let mut block = vec![first];
                block.extend(chosen.iter().map(|&c| rest[c]));
                let left: Vec<usize> =
                    rest.iter().enumerate().filter(|(i, _)| !chosen.contains(i)).map(|(_, &v)| v).collect();
                current.push(block);
                rec(&left, current, out);
                current.pop();
            }
        }
    }
    let all: Vec<usize> = (0..n_subjects).collect();
    let mut raw = Vec::new();
    rec(&all, &mut Vec::new(), &mut raw);
    raw.into_iter().map(|blocks| BlockPartition::new(blocks, n_subjects)).collect()
}

/// Compositions of `n_subjects` into even parts, listed as block sizes.
pub fn even_compositions(n_subjects: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(current.clone());
            return;
        }
        for s in (2..=left).step_by(2) {
            current.push(s);
            rec(left - s, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    if n_subjects.is_multiple_of(2) && n_subjects > 0 {
        rec(n_subjects, &mut Vec::new(), &mut out);
    }
    out
}
