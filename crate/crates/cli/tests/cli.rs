use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use confnoise::noise_synth::synth_gaussian_dataset;
use confnoise::{Architecture, Checkpoint64, Dataset64, EpochMetrics, Mlp64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const QUICK: &[&str] = &[
    "--set",
    "train.epochs=12",
    "--set",
    "train.hidden=16",
    "--set",
    "train.eta_update_start_epoch=3",
    "--set",
    "train.eta_update_every_epochs=2",
    "--set",
    "data.test_per_class=200",
];

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confnoise"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn metrics(path: &Path) -> Vec<EpochMetrics> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn noise_rate(dir: &Path) -> f64 {
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("data/noise_report.json")).unwrap())
            .unwrap();
    v["report"]["noise_rate"].as_f64().unwrap()
}

#[test]
fn zero_rate_pairflip_reports_no_noise() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--set", "noise.rate=0"]);
    assert_eq!(noise_rate(dir.path()), 0.0);
}

#[test]
fn synth_is_reproducible_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(
            d.path(),
            &[
                "synth",
                "--seed",
                "5",
                "--set",
                "data.val_per_class=10",
                "--set",
                "data.clean_per_class=5",
            ],
        );
    }
    for f in [
        "train.csv",
        "train.json",
        "val.csv",
        "test.csv",
        "clean.csv",
        "noise_report.json",
    ] {
        let x = fs::read(a.path().join("data").join(f)).unwrap();
        let y = fs::read(b.path().join("data").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["synth", "--seed", "6"]);
    assert_ne!(
        fs::read(a.path().join("data/train.csv")).unwrap(),
        fs::read(c.path().join("data/train.csv")).unwrap()
    );
}

#[test]
fn weak_model_synth_hits_target_rate() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--set",
            "noise.protocol=weak-model",
            "--set",
            "noise.target_rate=0.3",
        ],
    );
    let rate = noise_rate(dir.path());
    assert!((rate - 0.3).abs() <= 0.05, "{rate}");
}

#[test]
fn naive_on_clean_separable_data_is_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(
        QUICK,
        &["--set", "noise.protocol=none", "--set", "train.mode=naive"],
    );
    ok(dir.path(), &with(&["synth"], &args));
    ok(dir.path(), &with(&["train"], &args));
    let report: Value = serde_json::from_str(&ok(dir.path(), &with(&["eval"], &args))).unwrap();
    let acc = report["accuracy_vs_clean"].as_f64().unwrap();
    assert!(acc >= 0.95, "{acc}");
    assert!(!dir.path().join("runs/default/eta.csv").exists());
}

#[test]
fn method_without_eta_matches_naive() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with(&["synth"], QUICK));
    let method = with(
        QUICK,
        &[
            "--set",
            "run.name=method",
            "--set",
            "train.eta_init=0",
            "--set",
            "train.eta_updates=false",
        ],
    );
    let naive = with(
        QUICK,
        &["--set", "run.name=naive", "--set", "train.mode=naive"],
    );
    ok(dir.path(), &with(&["train"], &method));
    ok(dir.path(), &with(&["train"], &naive));
    let load = |name: &str| {
        Checkpoint64::load(
            dir.path()
                .join(format!("runs/{name}/checkpoints/final.json")),
        )
        .unwrap()
    };
    assert_eq!(load("method").layers, load("naive").layers);
    let accs = |name: &str| {
        metrics(&dir.path().join(format!("runs/{name}/metrics.jsonl")))
            .iter()
            .map(|m| m.test_acc)
            .collect::<Vec<_>>()
    };
    assert_eq!(accs("method"), accs("naive"));
}

#[test]
fn method_run_streams_eta_auroc_and_reproduces_from_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with(&["synth"], QUICK));
    ok(dir.path(), &with(&["train"], QUICK));
    let run = dir.path().join("runs/default");
    let first = metrics(&run.join("metrics.jsonl"));
    assert_eq!(first.len(), 12);
    assert!(first.iter().all(|m| m.eta_auroc.is_some()));

    // last line of the stream agrees with re-evaluating the final checkpoint
    let report: Value = serde_json::from_str(&ok(dir.path(), &with(&["eval"], QUICK))).unwrap();
    assert_eq!(
        report["accuracy_vs_clean"].as_f64(),
        first.last().unwrap().test_acc
    );

    let checkpoint = fs::read(run.join("checkpoints/final.json")).unwrap();
    let resolved = fs::read_to_string(run.join("config.resolved")).unwrap();
    fs::write(
        dir.path().join("again.ini"),
        resolved.replace("name = default", "name = again"),
    )
    .unwrap();
    ok(dir.path(), &["train", "--config", "again.ini"]);
    let again = dir.path().join("runs/again");
    assert_eq!(
        fs::read(again.join("metrics.jsonl")).unwrap(),
        fs::read(run.join("metrics.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(again.join("checkpoints/final.json")).unwrap(),
        checkpoint
    );
    assert_eq!(
        fs::read(again.join("eta.csv")).unwrap(),
        fs::read(run.join("eta.csv")).unwrap()
    );

    // rerunning in place is idempotent
    ok(dir.path(), &with(&["train"], QUICK));
    assert_eq!(
        fs::read(run.join("checkpoints/final.json")).unwrap(),
        checkpoint
    );

    let plot = fs::read_to_string(run.join("plots/test_acc.dat")).unwrap();
    assert!(plot.starts_with("# "));
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 12);
    assert!(plot.lines().skip(2).all(|l| l.split(' ').count() == 2));
}

#[test]
fn estimated_psi_is_reused_by_train() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with(&["synth"], QUICK));
    ok(dir.path(), &with(&["estimate-psi"], QUICK));
    let psi = fs::read(dir.path().join("runs/default/psi.csv")).unwrap();
    ok(dir.path(), &with(&["train"], QUICK));
    assert_eq!(
        fs::read(dir.path().join("runs/default/psi.csv")).unwrap(),
        psi
    );
    let eta = fs::read_to_string(dir.path().join("runs/default/eta.csv")).unwrap();
    assert_eq!(eta.lines().count(), 201);
}

#[test]
fn clean_mix_pins_trusted_pool() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(
        QUICK,
        &[
            "--set",
            "data.clean_per_class=5",
            "--set",
            "train.mode=clean-mix",
        ],
    );
    ok(dir.path(), &with(&["synth"], &args));
    ok(dir.path(), &with(&["train"], &args));
    let eta = fs::read_to_string(dir.path().join("runs/default/eta.csv")).unwrap();
    let pinned: Vec<&str> = eta
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",true"))
        .collect();
    assert_eq!(pinned.len(), 20);
    assert!(pinned
        .iter()
        .all(|l| l.split(',').nth(1) == Some("0.0") || l.split(',').nth(1) == Some("0")));
    let report: Value =
        serde_json::from_str(&ok(dir.path(), &with(&["eta-report"], &args))).unwrap();
    assert_eq!(report["instances"], 200);
    assert!(metrics(&dir.path().join("runs/default/metrics.jsonl"))
        .iter()
        .all(|m| m.max_eta_pinned == Some(0.0)));
}

fn write_eta(path: &Path, etas: &[f64]) {
    let mut s = String::from("index,eta,psi,pinned\n");
    for (i, e) in etas.iter().enumerate() {
        s.push_str(&format!("{i},{e},0.5,false\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn eta_report_extremes() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--set",
            "data.per_class=25",
            "--set",
            "data.test_per_class=0",
        ],
    );
    let d = Dataset64::read(dir.path().join("data/train.csv")).unwrap();
    let mask = d.corrupted_mask().unwrap();

    write_eta(&dir.path().join("flat.csv"), &vec![0.3; d.len()]);
    let r: Value =
        serde_json::from_str(&ok(dir.path(), &["eta-report", "--eta", "flat.csv"])).unwrap();
    assert_eq!(r["auroc"].as_f64(), Some(0.5));

    let perfect: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    write_eta(&dir.path().join("perfect.csv"), &perfect);
    let r: Value = serde_json::from_str(&ok(
        dir.path(),
        &[
            "eta-report",
            "--eta",
            "perfect.csv",
            "--set",
            "report.top_k=3",
        ],
    ))
    .unwrap();
    assert_eq!(r["auroc"].as_f64(), Some(1.0));
    assert_eq!(r["mean_eta_corrupted"].as_f64(), Some(1.0));
    let top = r["top_k"].as_array().unwrap();
    assert_eq!(top.len(), 3);
    assert!(top.iter().all(|t| t["noisy_label"] != t["clean_label"]));
    let hist =
        fs::read_to_string(dir.path().join("runs/default/plots/eta_hist_corrupted.dat")).unwrap();
    let last = hist.lines().last().unwrap();
    assert_eq!(
        last,
        format!("0.975 {}", mask.iter().filter(|&&m| m).count())
    );
}

#[test]
fn eta_report_without_clean_labels_omits_auroc() {
    let dir = tempfile::tempdir().unwrap();
    let d = Dataset64::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0, 1, 0, 1], 2).unwrap();
    d.write(dir.path().join("plain.csv")).unwrap();
    write_eta(&dir.path().join("eta.csv"), &[0.1, 0.2, 0.3, 0.4]);
    let out = cli(
        dir.path(),
        &["eta-report", "--eta", "eta.csv", "--data", "plain.csv"],
    );
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r.get("auroc").is_none());
    assert!(String::from_utf8_lossy(&out.stderr).contains("AUROC omitted"));
    assert!(dir
        .path()
        .join("runs/default/plots/eta_hist_all.dat")
        .exists());
}

fn uniform_checkpoint(path: &Path, input: usize, classes: usize) {
    let mut m = Mlp64::init(
        Architecture::linear(input, classes),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    m.zero_output_layer();
    Checkpoint64::new(&m, 0, None).save(path).unwrap();
}

#[test]
fn eval_without_clean_labels_reports_noisy_accuracy_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = Dataset64::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0, 1, 0, 1], 2).unwrap();
    d.write(dir.path().join("plain.csv")).unwrap();
    uniform_checkpoint(&dir.path().join("u.json"), 1, 2);
    let r: Value = serde_json::from_str(&ok(
        dir.path(),
        &["eval", "--checkpoint", "u.json", "--data", "plain.csv"],
    ))
    .unwrap();
    assert!(r.get("accuracy_vs_clean").is_none());
    assert_eq!(r["accuracy_vs_noisy"].as_f64(), Some(0.5));
}

#[test]
fn uniform_model_scores_one_over_classes() {
    let dir = tempfile::tempdir().unwrap();
    synth_gaussian_dataset::<f64>(5, 20, 3, 2.0, 1)
        .unwrap()
        .write(dir.path().join("bal.csv"))
        .unwrap();
    uniform_checkpoint(&dir.path().join("u.json"), 3, 5);
    let r: Value = serde_json::from_str(&ok(
        dir.path(),
        &["eval", "--checkpoint", "u.json", "--data", "bal.csv"],
    ))
    .unwrap();
    assert_eq!(r["accuracy_vs_clean"].as_f64(), Some(0.2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["train", "--set", "train.etaa_init=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.etaa_init"));

    fs::write(dir.path().join("bad.ini"), "[train]\nbogus = 1\n").unwrap();
    let out = cli(dir.path(), &["synth", "--config", "bad.ini"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.bogus"));

    assert_eq!(
        cli(dir.path(), &["train", "--set", "train.alpha1=-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cli(dir.path(), &["train"]).status.code(), Some(4));
    assert_eq!(
        cli(dir.path(), &["synth", "--config", "missing.ini"])
            .status
            .code(),
        Some(4)
    );

    ok(dir.path(), &with(&["synth"], QUICK));
    uniform_checkpoint(&dir.path().join("wide.json"), 7, 4);
    assert_eq!(
        cli(dir.path(), &["eval", "--checkpoint", "wide.json"])
            .status
            .code(),
        Some(2)
    );

    let out = cli(
        dir.path(),
        &with(
            &[
                "train",
                "--set",
                "train.learning_rate=1e300",
                "--set",
                "train.activation=identity",
                "--set",
                "train.mode=naive",
            ],
            QUICK,
        ),
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nonfinite.json"), "{stderr}");
    assert!(Checkpoint64::load(dir.path().join("runs/default/checkpoints/nonfinite.json")).is_ok());
}
