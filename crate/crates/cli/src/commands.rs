use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use confnoise::metrics::{accuracy, auroc, per_class_accuracy, predict};
use confnoise::noise_synth::{
    corrupt_cluster_vote, corrupt_pairflip, corrupt_weak_model, noise_report, search_weak_model,
    synth_gaussian_dataset,
};
use confnoise::psi::{read_psi, write_psi};
use confnoise::{
    estimate_psi, Checkpoint64, Dataset64, EpochMetrics, Error, Split, TrainState64, Trainer,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Mode, Protocol, RunConfig};
use crate::error::CliError;
use crate::plots::{histogram, write_columns};

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<Dataset64, CliError> {
    Dataset64::read(path).map_err(|e| match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
            CliError::io(format!("{}: {e}", path.display()))
        }
        other => CliError::from(other),
    })
}

fn read_optional(path: &Path) -> Result<Option<Dataset64>, CliError> {
    if path.exists() {
        read_dataset(path).map(Some)
    } else {
        Ok(None)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let d = &cfg.data;
    create_dir(&d.dir)?;
    let sample = |per_class: usize, offset: u64, split: Split| {
        synth_gaussian_dataset::<f64>(d.classes, per_class, d.dim, d.separation, cfg.seed + offset)
            .map(|ds| ds.with_split(split))
    };
    let clean = sample(d.per_class, 0, Split::Train)?;

    let mut search_steps = None;
    let train = match &cfg.noise {
        Protocol::None => clean.clone(),
        Protocol::PairFlip { pairs, rate } => corrupt_pairflip(&clean, pairs, *rate, cfg.seed)?,
        Protocol::ClusterVote { k } => corrupt_cluster_vote(&clean, *k, cfg.seed)?.dataset,
        Protocol::WeakModel {
            params,
            target: None,
        } => corrupt_weak_model(&clean, params, cfg.seed)?,
        Protocol::WeakModel {
            params,
            target: Some((rate, tol)),
        } => {
            let s = search_weak_model(&clean, params, *rate, *tol, cfg.seed)?;
            search_steps = Some(s.steps);
            s.dataset
        }
    };
    train.write(d.dir.join("train.csv"))?;
    if d.val_per_class > 0 {
        sample(d.val_per_class, 1, Split::Val)?.write(d.dir.join("val.csv"))?;
    }
    if d.test_per_class > 0 {
        sample(d.test_per_class, 2, Split::Test)?.write(d.dir.join("test.csv"))?;
    }
    if d.clean_per_class > 0 {
        let pool = sample(d.clean_per_class, 3, Split::Train)?;
        let pool = pool.clone().with_trusted(vec![true; pool.len()])?;
        pool.write(d.dir.join("clean.csv"))?;
    }

    let report = noise_report(&train)?;
    println!(
        "wrote {} training instances to {}: noise rate {:.4} ({} corrupted)",
        train.len(),
        d.dir.display(),
        report.noise_rate,
        report.corrupted
    );
    write_json(
        &d.dir.join("noise_report.json"),
        &json!({
            "noise_spec": train.noise_spec,
            "weak_model_steps": search_steps,
            "report": report,
        }),
    )?;
    cfg.write_resolved(&d.dir.join("config.resolved"))
}

fn load_or_estimate_psi(cfg: &RunConfig, train: &Dataset64) -> Result<Vec<f64>, CliError> {
    let path = cfg
        .psi
        .clone()
        .unwrap_or_else(|| cfg.run_dir().join("psi.csv"));
    if path.exists() {
        log::info!("using psi from {}", path.display());
        return read_psi(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())));
    }
    if cfg.psi.is_some() {
        return Err(CliError::io(format!(
            "psi file {} not found",
            path.display()
        )));
    }
    log::info!("estimating psi with a naive run");
    let psi = estimate_psi(train, &cfg.train)?.psi;
    write_psi(&path, &psi)?;
    Ok(psi)
}

pub fn estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let run_dir = cfg.run_dir();
    create_dir(&run_dir)?;
    cfg.write_resolved(&run_dir.join("config.resolved"))?;
    let train = read_dataset(&cfg.data.dir.join("train.csv"))?;
    let est = estimate_psi(&train, &cfg.train)?;
    let path = cfg.psi.clone().unwrap_or_else(|| run_dir.join("psi.csv"));
    write_psi(&path, &est.psi)?;
    let mean = est.psi.iter().sum::<f64>() / est.psi.len() as f64;
    println!(
        "wrote psi for {} instances to {} (mean {mean:.4})",
        est.psi.len(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EtaRow {
    index: usize,
    eta: f64,
    psi: f64,
    pinned: bool,
}

fn write_eta(path: &Path, state: &TrainState64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, ((&eta, &psi), &pinned)) in state
        .eta()
        .iter()
        .zip(state.psi())
        .zip(state.pinned())
        .enumerate()
    {
        w.serialize(EtaRow {
            index: i,
            eta,
            psi,
            pinned,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_curves(dir: &Path, history: &[EpochMetrics]) -> Result<(), CliError> {
    type Field = fn(&EpochMetrics) -> Option<f64>;
    let curves: [(&str, Field); 8] = [
        ("train_acc_vs_noisy", |m| Some(m.train_acc_vs_noisy)),
        ("val_acc", |m| m.val_acc),
        ("test_acc", |m| m.test_acc),
        ("mean_eta_clean", |m| m.mean_eta_clean),
        ("mean_eta_corrupted", |m| m.mean_eta_corrupted),
        ("eta_auroc", |m| m.eta_auroc),
        ("lower_bound", |m| m.lower_bound),
        ("log_likelihood", |m| m.log_likelihood),
    ];
    for (name, field) in curves {
        let rows: Vec<(f64, f64)> = history
            .iter()
            .filter_map(|m| field(m).map(|v| (m.epoch as f64, v)))
            .collect();
        if !rows.is_empty() {
            write_columns(
                &dir.join(format!("{name}.dat")),
                name,
                ("epoch", name),
                rows,
            )?;
        }
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let run_dir = cfg.run_dir();
    let checkpoints = run_dir.join("checkpoints");
    let plots = run_dir.join("plots");
    create_dir(&checkpoints)?;
    create_dir(&plots)?;
    cfg.write_resolved(&run_dir.join("config.resolved"))?;

    let data = &cfg.data.dir;
    let train = read_dataset(&data.join("train.csv"))?;
    let val = read_optional(&data.join("val.csv"))?;
    let test = read_optional(&data.join("test.csv"))?;
    let clean = match cfg.mode {
        Mode::CleanMix => Some(read_dataset(&data.join("clean.csv"))?),
        _ => None,
    };
    let psi = match cfg.mode {
        Mode::Naive => None,
        _ => Some(load_or_estimate_psi(cfg, &train)?),
    };

    let metrics_path = run_dir.join("metrics.jsonl");
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    let mut failure: Option<CliError> = None;
    let log_every = (cfg.train.epochs / 10).max(1);
    let observer = |state: &TrainState64| {
        if failure.is_some() {
            return;
        }
        let Some(m) = state.history.last() else {
            return;
        };
        let result = (|| -> Result<(), CliError> {
            serde_json::to_writer(&mut metrics, m)?;
            metrics.write_all(b"\n")?;
            metrics.flush()?;
            if cfg.checkpoint_every > 0 && state.epoch.is_multiple_of(cfg.checkpoint_every) {
                let path = checkpoints.join(format!("epoch_{:05}.json", state.epoch));
                state.checkpoint().save(path)?;
            }
            Ok(())
        })();
        failure = result.err();
        if state.epoch.is_multiple_of(log_every) {
            log::info!(
                "epoch {}: train acc (noisy) {:.4}, test acc {}",
                m.epoch,
                m.train_acc_vs_noisy,
                m.test_acc.map_or("-".to_string(), |a| format!("{a:.4}"))
            );
        }
    };

    let mut trainer = Trainer::new(cfg.train.clone()).observer(observer);
    if let Some(v) = &val {
        trainer = trainer.validation(v);
    }
    if let Some(t) = &test {
        trainer = trainer.test(t);
    }
    if !cfg.diagnostics {
        trainer = trainer.without_diagnostics();
    }
    let outcome = match (cfg.mode, &psi, &clean) {
        (Mode::Naive, _, _) => trainer.run_naive(&train),
        (Mode::Method, Some(psi), _) => trainer.run(&train, psi),
        (Mode::CleanMix, Some(psi), Some(clean)) => trainer.run_clean_mix(&train, clean, psi),
        _ => unreachable!("psi and clean pool are loaded for the modes that need them"),
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let state = match outcome {
        Ok(state) => state,
        Err(Error::NonFinite {
            epoch,
            step,
            snapshot,
        }) => {
            let path = checkpoints.join("nonfinite.json");
            fs::write(&path, snapshot.as_str())?;
            return Err(CliError::numerical(format!(
                "non-finite parameters at epoch {epoch}, step {step}; last finite state saved to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    state.checkpoint().save(checkpoints.join("final.json"))?;
    if cfg.mode != Mode::Naive {
        write_eta(&run_dir.join("eta.csv"), &state)?;
    }
    write_curves(&plots, &state.history)?;
    if let Some(m) = state.history.last() {
        println!(
            "{} run `{}` finished {} epochs: train acc (noisy) {:.4}, test acc {}",
            cfg.mode,
            cfg.name,
            m.epoch,
            m.train_acc_vs_noisy,
            m.test_acc.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassAccuracy {
    class: usize,
    correct: usize,
    total: usize,
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    dataset: PathBuf,
    instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy_vs_clean: Option<f64>,
    accuracy_vs_noisy: f64,
    /// Against clean labels when present, otherwise noisy labels.
    per_class: Vec<ClassAccuracy>,
}

pub fn eval(
    cfg: &RunConfig,
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
) -> Result<(), CliError> {
    let checkpoint = checkpoint.unwrap_or_else(|| cfg.run_dir().join("checkpoints/final.json"));
    let data = data.unwrap_or_else(|| cfg.data.dir.join("test.csv"));
    let model = Checkpoint64::load(&checkpoint)
        .and_then(|c| c.model())
        .map_err(|e| CliError::io(format!("{}: {e}", checkpoint.display())))?;
    let d = read_dataset(&data)?;
    let arch = model.architecture();
    if arch.input != d.dim() || arch.classes != d.classes() {
        return Err(CliError::config(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            arch.input,
            arch.classes,
            d.dim(),
            d.classes()
        )));
    }
    let pred = predict(&model, &d)?;
    let reference = d.clean_labels().unwrap_or(d.noisy_labels());
    let report = EvalReport {
        checkpoint,
        dataset: data,
        instances: d.len(),
        accuracy_vs_clean: d.clean_labels().map(|c| accuracy(&pred, c)),
        accuracy_vs_noisy: accuracy(&pred, d.noisy_labels()),
        per_class: per_class_accuracy(&pred, reference, d.classes())
            .into_iter()
            .enumerate()
            .map(|(class, (correct, total))| ClassAccuracy {
                class,
                correct,
                total,
            })
            .collect(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct Flagged {
    index: usize,
    eta: f64,
    psi: f64,
    noisy_label: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    clean_label: Option<usize>,
}

#[derive(Serialize)]
struct EtaReport {
    instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_eta_clean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_eta_corrupted: Option<f64>,
    top_k: Vec<Flagged>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn eta_report(
    cfg: &RunConfig,
    eta: Option<PathBuf>,
    data: Option<PathBuf>,
) -> Result<(), CliError> {
    let run_dir = cfg.run_dir();
    let eta_path = eta.unwrap_or_else(|| run_dir.join("eta.csv"));
    let data = data.unwrap_or_else(|| cfg.data.dir.join("train.csv"));
    let d = read_dataset(&data)?;
    let mut reader = csv::Reader::from_path(&eta_path)
        .map_err(|e| CliError::io(format!("{}: {e}", eta_path.display())))?;
    // trusted clean-pool rows are pinned and follow the training set
    let rows: Vec<EtaRow> = reader
        .deserialize()
        .collect::<Result<Vec<EtaRow>, _>>()?
        .into_iter()
        .filter(|r| !r.pinned)
        .collect();
    if rows.len() != d.len() {
        return Err(CliError::config(format!(
            "{} has {} unpinned entries but {} has {} instances",
            eta_path.display(),
            rows.len(),
            data.display(),
            d.len()
        )));
    }
    let etas: Vec<f64> = rows.iter().map(|r| r.eta).collect();
    let corrupted = d.corrupted_mask();
    let plots = run_dir.join("plots");
    create_dir(&plots)?;

    let (auroc_value, mean_clean, mean_corrupted) = match &corrupted {
        Some(mask) => {
            let split = |want: bool| -> Vec<&EtaRow> {
                rows.iter()
                    .zip(mask)
                    .filter(|(_, &m)| m == want)
                    .map(|(r, _)| r)
                    .collect()
            };
            let (clean, noisy) = (split(false), split(true));
            for (group, members) in [("clean", &clean), ("corrupted", &noisy)] {
                write_columns(
                    &plots.join(format!("eta_hist_{group}.dat")),
                    &format!("eta histogram, {group} instances"),
                    ("eta", "count"),
                    histogram(members.iter().map(|r| r.eta), cfg.bins),
                )?;
                write_columns(
                    &plots.join(format!("eta_psi_{group}.dat")),
                    &format!("eta against psi, {group} instances"),
                    ("psi", "eta"),
                    members.iter().map(|r| (r.psi, r.eta)),
                )?;
            }
            let etas_of = |g: &[&EtaRow]| g.iter().map(|r| r.eta).collect::<Vec<_>>();
            (
                auroc(&etas, mask),
                mean(&etas_of(&clean)),
                mean(&etas_of(&noisy)),
            )
        }
        None => {
            log::warn!("{} has no clean labels; AUROC omitted", data.display());
            write_columns(
                &plots.join("eta_hist_all.dat"),
                "eta histogram, all instances",
                ("eta", "count"),
                histogram(etas.iter().copied(), cfg.bins),
            )?;
            (None, None, None)
        }
    };

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| etas[b].total_cmp(&etas[a]).then(a.cmp(&b)));
    let top_k = order
        .iter()
        .take(cfg.top_k)
        .map(|&i| Flagged {
            index: i,
            eta: etas[i],
            psi: rows[i].psi,
            noisy_label: d.noisy_labels()[i],
            clean_label: d.clean_labels().map(|c| c[i]),
        })
        .collect();
    let report = EtaReport {
        instances: d.len(),
        auroc: auroc_value,
        mean_eta_clean: mean_clean,
        mean_eta_corrupted: mean_corrupted,
        top_k,
    };
    write_json(&run_dir.join("eta_report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
