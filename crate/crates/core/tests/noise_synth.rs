use confnoise::metrics::{accuracy, predict};
use confnoise::noise_synth::{
    corrupt_cluster_vote, corrupt_pairflip, corrupt_weak_model, noise_report, search_weak_model,
    synth_gaussian_dataset, WeakModelParams,
};
use confnoise::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// truck -> automobile, bird -> airplane, deer -> horse, cat <-> dog
const CIFAR10_PAIRS: [(usize, usize); 5] = [(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)];

fn assert_only_noisy_labels_changed(clean: &Dataset64, noisy: &Dataset64) {
    assert_eq!(clean.features(), noisy.features());
    assert_eq!(clean.clean_labels(), noisy.clean_labels());
    assert_eq!(clean.dim(), noisy.dim());
}

#[test]
fn gaussian_counts_are_exact() {
    let d = synth_gaussian_dataset::<f64>(4, 250, 2, 2.0, 11).unwrap();
    assert_eq!(d.len(), 1000);
    assert_eq!(d.noisy_histogram(), vec![250; 4]);
    assert_eq!(
        d,
        synth_gaussian_dataset::<f64>(4, 250, 2, 2.0, 11).unwrap()
    );
}

#[test]
fn well_separated_blobs_are_linearly_separable() {
    let d = synth_gaussian_dataset::<f64>(2, 100, 2, 20.0, 3).unwrap();
    let config = TrainConfig {
        hidden: vec![],
        activation: Activation::Identity,
        epochs: 30,
        ..Default::default()
    };
    let state = train_naive(&d, &config).unwrap();
    let train_acc = accuracy(
        &predict(&state.model, &d).unwrap(),
        d.clean_labels().unwrap(),
    );
    assert_eq!(train_acc, 1.0);
}

#[test]
fn one_epoch_linear_weak_model_rate_is_recorded() {
    let d = synth_gaussian_dataset::<f64>(4, 250, 2, 2.0, 0).unwrap();
    let out = corrupt_weak_model(&d, &WeakModelParams::default(), 0).unwrap();
    let report = noise_report(&out).unwrap();
    println!(
        "one-epoch linear weak model, seed 0: noise rate {}",
        report.noise_rate
    );
    assert_eq!(report.corrupted, 340);
    assert_eq!(report.noise_rate, 0.34);
    assert_only_noisy_labels_changed(&d, &out);
}

#[test]
fn weak_model_search_hits_target_rate() {
    let d = synth_gaussian_dataset::<f64>(4, 50, 2, 5.0, 100).unwrap();
    let params = WeakModelParams {
        hidden: vec![64],
        activation: Activation::Sin,
        init_scale: 3.0,
        epochs: 50,
        learning_rate: 0.003,
        momentum: 0.9,
        ..Default::default()
    };
    let s = search_weak_model(&d, &params, 0.3, 0.05, 0).unwrap();
    let report = noise_report(&s.dataset).unwrap();
    assert!(
        (report.noise_rate - 0.3).abs() <= 0.05,
        "{}",
        report.noise_rate
    );
    let replay = s.dataset.noise_spec.clone().unwrap().apply(&d).unwrap();
    assert_eq!(replay.noisy_labels(), s.dataset.noisy_labels());
}

#[test]
fn cluster_vote_is_constant_per_cluster_and_deterministic() {
    let d = synth_gaussian_dataset::<f64>(3, 40, 2, 2.0, 5).unwrap();
    let a = corrupt_cluster_vote(&d, 6, 1).unwrap();
    let b = corrupt_cluster_vote(&d, 6, 1).unwrap();
    assert_eq!(a.dataset, b.dataset);
    for (i, &c) in a.clustering.assignments.iter().enumerate() {
        assert_eq!(a.dataset.noisy_labels()[i], a.cluster_labels[c]);
    }
    assert_only_noisy_labels_changed(&d, &a.dataset);
    let every_point = corrupt_cluster_vote(&d, d.len(), 1).unwrap();
    assert_eq!(noise_report(&every_point.dataset).unwrap().noise_rate, 0.0);
}

#[test]
fn pairflip_fraction_on_ten_classes_is_within_three_sigma() {
    let per_class = 100;
    let d = synth_gaussian_dataset::<f64>(10, per_class, 4, 3.0, 2).unwrap();
    let out = corrupt_pairflip(&d, &CIFAR10_PAIRS, 0.3, 8).unwrap();
    let n = (CIFAR10_PAIRS.len() * per_class) as f64;
    let flips = noise_report(&out).unwrap().corrupted as f64;
    let sigma = (n * 0.3 * 0.7).sqrt();
    assert!(
        (flips - 0.15 * d.len() as f64).abs() <= 3.0 * sigma,
        "{flips}"
    );
    assert_only_noisy_labels_changed(&d, &out);
    for (&y, &n) in d.clean_labels().unwrap().iter().zip(out.noisy_labels()) {
        if !CIFAR10_PAIRS.iter().any(|&(s, _)| s == y) {
            assert_eq!(y, n);
        }
    }
}

#[test]
fn pairflip_counts_pass_chi_square_over_100_seeds() {
    let per_class = 200;
    let rate = 0.4;
    let pairs = [(0, 1), (1, 2), (2, 3), (3, 0)];
    let d = synth_gaussian_dataset::<f64>(4, per_class, 2, 3.0, 0).unwrap();
    let n = per_class as f64;
    let var = n * rate * (1.0 - rate);
    let mut statistic = 0.0;
    let mut terms = 0;
    for seed in 0..100 {
        let out = corrupt_pairflip(&d, &pairs, rate, seed).unwrap();
        let confusion = noise_report(&out).unwrap().confusion;
        for &(s, t) in &pairs {
            let k = confusion[s][t] as f64;
            statistic += (k - n * rate).powi(2) / var;
            terms += 1;
        }
    }
    let p_value = 1.0 - ChiSquared::new(terms as f64).unwrap().cdf(statistic);
    assert!(
        p_value > 0.001,
        "chi-square {statistic:.1} on {terms} dof, p = {p_value:.2e}"
    );
}

#[test]
fn report_recounts_pairflip_output() {
    let d = synth_gaussian_dataset::<f64>(4, 100, 2, 3.0, 1).unwrap();
    let out = corrupt_pairflip(&d, &[(0, 1), (2, 3)], 0.4, 3).unwrap();
    let report = noise_report(&out).unwrap();
    let flipped = d
        .clean_labels()
        .unwrap()
        .iter()
        .zip(out.noisy_labels())
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(report.corrupted, flipped);
    assert_eq!(report.noise_rate, flipped as f64 / d.len() as f64);
    assert_eq!(report.confusion[0][1] + report.confusion[2][3], flipped);
}

#[test]
fn noise_spec_replays_every_protocol() {
    let d = synth_gaussian_dataset::<f64>(3, 30, 2, 2.0, 4).unwrap();
    let outputs = [
        corrupt_pairflip(&d, &[(0, 2)], 0.5, 1).unwrap(),
        corrupt_cluster_vote(&d, 4, 1).unwrap().dataset,
        corrupt_weak_model(&d, &WeakModelParams::default(), 1).unwrap(),
    ];
    for out in outputs {
        let spec = out.noise_spec.clone().unwrap();
        assert_eq!(spec.apply(&d).unwrap(), out);
    }
}
