use confnoise::noise_synth::synth_gaussian_dataset;
use confnoise::psi::{psi_from_model, read_psi, write_psi};
use confnoise::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick_config() -> TrainConfig64 {
    TrainConfig {
        hidden: vec![16],
        epochs: 40,
        ..Default::default()
    }
}

#[test]
fn separable_task_gives_psi_near_one() {
    let d = synth_gaussian_dataset::<f64>(3, 60, 2, 20.0, 1).unwrap();
    let est = estimate_psi(&d, &quick_config()).unwrap();
    let min = est.psi.iter().copied().fold(1.0, f64::min);
    assert!(min >= 0.99, "min psi {min}");
}

#[test]
fn uniform_model_gives_one_over_classes() {
    let d = synth_gaussian_dataset::<f64>(5, 10, 3, 2.0, 2).unwrap();
    let mut model = Mlp64::init(
        quick_config().architecture(3, 5),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    model.zero_output_layer();
    for p in psi_from_model(&model, &d).unwrap() {
        assert!((p - 0.2).abs() < 1e-15);
    }
}

#[test]
fn estimate_is_deterministic_and_in_range() {
    let d = synth_gaussian_dataset::<f64>(4, 30, 2, 2.0, 3).unwrap();
    let a = estimate_psi(&d, &quick_config()).unwrap();
    let b = estimate_psi(&d, &quick_config()).unwrap();
    assert_eq!(a.psi, b.psi);
    assert!(a.psi.iter().all(|&p| (1e-6..=1.0).contains(&p)));
    assert_eq!(a.naive.history.len(), 40);
}

#[test]
fn epoch_cap_shortens_the_naive_run() {
    let d = synth_gaussian_dataset::<f64>(2, 20, 2, 2.0, 4).unwrap();
    let config = TrainConfig {
        psi_epoch_cap: Some(5),
        ..quick_config()
    };
    assert_eq!(estimate_psi(&d, &config).unwrap().naive.history.len(), 5);
}

#[test]
fn psi_file_round_trip() {
    let d = synth_gaussian_dataset::<f64>(3, 10, 2, 2.0, 5).unwrap();
    let est = estimate_psi(&d, &quick_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.csv");
    write_psi(&path, &est.psi).unwrap();
    assert_eq!(read_psi::<f64>(&path).unwrap(), est.psi);
    assert!(read_psi::<f64>(dir.path().join("missing.csv")).is_err());
}

#[test]
fn empty_dataset_is_rejected() {
    let d = Dataset64::new(vec![], 2, vec![], 3).unwrap();
    assert!(estimate_psi(&d, &quick_config()).is_err());
}
