use deeptox::evaluation::{auc, mann_whitney_two_sided};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean over all positive-negative pairs, ties counted as one half.
fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    num / pairs
}

/// Two-sided exact p by enumerating every way to choose which pooled
/// observations form sample `a`.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|&x| {
            let less = pooled.iter().filter(|&&y| y < x).count() as f64;
            let equal = pooled.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let na = a.len();
    let expected = na as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..na].iter().sum::<f64>() - expected).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let s: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        total += 1;
        if (s - expected).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn tied_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let levels = rng.random_range(2..=n.max(2));
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

#[test]
fn auc_matches_pairwise_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let (scores, labels) = tied_instance(&mut rng, n);
        let fast = auc(&scores, &labels).unwrap();
        assert!((fast - brute_auc(&scores, &labels)).abs() < 1e-12);
    }
}

#[test]
fn exact_p_matches_enumeration_up_to_twelve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for na in 1..12 {
        for nb in 1..=(12 - na) {
            for _ in 0..3 {
                let levels = rng.random_range(2..8);
                let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..levels) as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..levels) as f64).collect();
                if a.iter().chain(&b).all(|&x| x == a[0]) {
                    continue;
                }
                let p = mann_whitney_two_sided(&a, &b).unwrap();
                assert!((p - enumerated_p(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn auc_invariant_under_increasing_transform(
        scores in prop::collection::vec(-5i32..5, 4..40),
        flips in prop::collection::vec(any::<bool>(), 40),
    ) {
        let mut labels: Vec<bool> = flips[..scores.len()].to_vec();
        labels[0] = true;
        labels[1] = false;
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let t: Vec<f64> = s.iter().map(|x| (x * 0.7).exp() + 3.0).collect();
        prop_assert_eq!(auc(&s, &labels).unwrap(), auc(&t, &labels).unwrap());
    }

    #[test]
    fn mann_whitney_is_symmetric(
        a in prop::collection::vec(0i32..10, 1..15),
        b in prop::collection::vec(0i32..10, 1..15),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        match (mann_whitney_two_sided(&a, &b), mann_whitney_two_sided(&b, &a)) {
            (Ok(p), Ok(q)) => prop_assert!((p - q).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
