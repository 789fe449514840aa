use confnoise::metrics::{accuracy, auroc, per_class_accuracy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(scores: &[f64], positives: &[bool]) -> f64 {
    let mut ordered = 0.0;
    let mut pairs = 0.0;
    for (i, &p) in positives.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &n) in positives.iter().enumerate() {
            if n {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                ordered += 1.0;
            } else if scores[i] == scores[j] {
                ordered += 0.5;
            }
        }
    }
    ordered / pairs
}

#[test]
fn auroc_matches_pairwise_count_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for round in 0..5 {
        let positives: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.3)).collect();
        // coarse scores so ties are common
        let scores: Vec<f64> = positives
            .iter()
            .map(|&p| {
                let s: f64 = rng.random::<f64>() + if p { 0.3 } else { 0.0 };
                if round % 2 == 0 {
                    (s * 20.0).round() / 20.0
                } else {
                    s
                }
            })
            .collect();
        let fast = auroc(&scores, &positives).unwrap();
        assert!((fast - brute_force(&scores, &positives)).abs() <= 1e-9);
    }
}

#[test]
fn auroc_is_undefined_without_both_classes() {
    assert_eq!(auroc(&[0.1, 0.2], &[true, true]), None);
    assert_eq!(auroc(&[0.1, 0.2], &[false, false]), None);
}

#[test]
fn accuracy_counts() {
    assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 2]), 0.75);
    assert_eq!(
        per_class_accuracy(&[0, 1, 2, 2], &[0, 1, 1, 2], 3),
        vec![(1, 1), (1, 2), (1, 1)]
    );
}
