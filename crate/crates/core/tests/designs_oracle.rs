use pairdesign::designs::{
    bcrd, covariance_matrix, empirical_covariance, enumerate_even_partitions, enumerate_support, sample_allocation,
    sorted_block_partition, support_size, DEFAULT_SUPPORT_CAP,
};
use pairdesign::{Allocation, BlockPartition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashMap;

#[test]
fn closed_form_sigma_matches_enumeration_for_every_partition() {
    for n in [4, 6, 8, 10] {
        for p in enumerate_even_partitions(n).unwrap() {
            let support = enumerate_support(&p, DEFAULT_SUPPORT_CAP).unwrap();
            assert_eq!(support.len() as u128, support_size(&p));
            let closed = covariance_matrix(&p);
            assert!(closed.max_abs_diff(&empirical_covariance(&support).unwrap()) <= 1e-12, "{p}");
            assert!(closed.max_abs_row_sum() <= 1e-12);
            assert!(closed.has_unit_diagonal(0.0));
        }
    }
}

#[test]
fn support_is_duplicate_free() {
    let p = BlockPartition::from_one_based(&[vec![1, 4, 5, 8], vec![2, 3], vec![6, 7]], 8).unwrap();
    let support = enumerate_support(&p, DEFAULT_SUPPORT_CAP).unwrap();
    let mut sorted = support.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), support.len());
    assert_eq!(support.len(), 6 * 2 * 2);
}

#[test]
fn bcrd_of_four_is_uniform_over_its_six_allocations() {
    let p = bcrd(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 60_000;
    let mut counts: HashMap<Allocation, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(sample_allocation(&p, &mut rng)).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let expected = draws as f64 / 6.0;
    let stat: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);
    assert!(p_value > 1e-4, "chi-square {stat}, p = {p_value}");
}

#[test]
fn marginals_are_one_half() {
    let key: Vec<f64> = (0..16).map(|i| ((i * 7) % 16) as f64).collect();
    let designs =
        [bcrd(16).unwrap(), sorted_block_partition(&key, 4).unwrap(), sorted_block_partition(&key, 8).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    for p in &designs {
        let mut sums = [0i64; 16];
        for _ in 0..draws {
            for (s, &w) in sums.iter_mut().zip(sample_allocation(p, &mut rng).signs()) {
                *s += i64::from(w);
            }
        }
        for s in sums {
            assert!((s as f64 / draws as f64).abs() < 4.0 / (draws as f64).sqrt());
        }
    }
}

#[test]
fn pair_design_draws_one_of_each_per_pair() {
    let p = BlockPartition::from_one_based(&[vec![1, 2], vec![3, 4], vec![5, 6]], 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let w = sample_allocation(&p, &mut rng);
        for b in p.blocks() {
            assert_eq!(w.signs()[b[0]] + w.signs()[b[1]], 0);
        }
    }
}
