use nalgebra::DMatrix;
use pairdesign::designs::sorted_pair_matching;
use pairdesign::matching::{brute_force_matching, min_weight_perfect_matching, random_matching};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng, levels: Option<u32>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = match levels {
                Some(k) => rng.random_range(0..k) as f64,
                None => rng.random::<f64>(),
            };
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

#[test]
fn blossom_agrees_with_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    for n in [4, 6, 8, 10] {
        for _ in 0..200 {
            let d = random_symmetric(n, &mut rng, None);
            assert_eq!(min_weight_perfect_matching(&d).unwrap(), brute_force_matching(&d).unwrap(), "{d}");
        }
    }
}

#[test]
fn ties_match_exhaustive_search() {
    // few distinct integer weights -> many equally optimal matchings
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [4, 6, 8, 10, 12] {
        for levels in [1, 2, 3] {
            for _ in 0..60 {
                let d = random_symmetric(n, &mut rng, Some(levels));
                assert_eq!(min_weight_perfect_matching(&d).unwrap(), brute_force_matching(&d).unwrap(), "{d}");
            }
        }
    }
}

#[test]
fn positive_rescaling_keeps_the_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let d = random_symmetric(10, &mut rng, None);
        let base = min_weight_perfect_matching(&d).unwrap();
        for c in [1e-6, 0.37, 3.0, 1e6] {
            assert_eq!(min_weight_perfect_matching(&(&d * c)).unwrap(), base);
        }
    }
}

#[test]
fn exact_beats_random_matchings() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let d = random_symmetric(40, &mut rng, None);
        let best = min_weight_perfect_matching(&d).unwrap().total_weight(&d);
        for _ in 0..100 {
            let m = random_matching(40, &mut rng).unwrap();
            assert!(best <= m.total_weight(&d) + 1e-12);
        }
    }
}

#[test]
fn sorted_pairs_are_optimal_on_a_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [4, 6, 8, 10] {
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let d = DMatrix::from_fn(n, n, |i, j| (x[i] - x[j]).powi(2));
            let sorted = sorted_pair_matching(&x).unwrap().canonical();
            assert_eq!(brute_force_matching(&d).unwrap(), sorted);
            assert_eq!(min_weight_perfect_matching(&d).unwrap(), sorted);
        }
    }
}
