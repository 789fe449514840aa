//! INI experiment configuration.
//!
//! Keys are addressed as `section.key`. A config file, `--set` overrides and `--seed`
//! are merged into a flat map, checked against the known keys and resolved into
//! [`RunConfig`]. [`RunConfig::to_ini`] writes every key back with its effective value,
//! so the resolved file reproduces the run on its own.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use confnoise::noise_synth::WeakModelParams;
use confnoise::{Activation, LrSchedule, TrainConfig64};
use ini::Ini;

use crate::error::CliError;

const KEYS: &[(&str, &[&str])] = &[
    ("run", &["name", "out_dir", "seed"]),
    (
        "data",
        &[
            "dir",
            "classes",
            "per_class",
            "dim",
            "separation",
            "val_per_class",
            "test_per_class",
            "clean_per_class",
        ],
    ),
    (
        "noise",
        &[
            "protocol",
            "rate",
            "pairs",
            "k",
            "target_rate",
            "tolerance",
            "weak_hidden",
            "weak_activation",
            "weak_init_scale",
            "weak_epochs",
            "weak_max_steps",
            "weak_learning_rate",
            "weak_momentum",
            "weak_batch_size",
        ],
    ),
    (
        "train",
        &[
            "mode",
            "preset",
            "hidden",
            "activation",
            "init_scale",
            "eta_init",
            "alpha1",
            "epsilon",
            "epochs",
            "batch_size",
            "eta_updates",
            "eta_update_start_epoch",
            "eta_update_every_epochs",
            "eta_gradient_mode",
            "oversample",
            "learning_rate",
            "momentum",
            "weight_decay",
            "lr_schedule",
            "psi_epoch_cap",
            "psi",
            "checkpoint_every",
            "diagnostics",
        ],
    ),
    ("report", &["top_k", "bins"]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Method,
    Naive,
    CleanMix,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "method" => Ok(Mode::Method),
            "naive" => Ok(Mode::Naive),
            "clean-mix" => Ok(Mode::CleanMix),
            _ => Err("expected method, naive or clean-mix".into()),
        }
    }
}

impl Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Method => "method",
            Mode::Naive => "naive",
            Mode::CleanMix => "clean-mix",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Default,
    Desk,
    Cifar,
    Clothing1m,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "default" => Ok(Preset::Default),
            "desk" => Ok(Preset::Desk),
            "cifar" => Ok(Preset::Cifar),
            "clothing1m" => Ok(Preset::Clothing1m),
            _ => Err("expected default, desk, cifar or clothing1m".into()),
        }
    }
}

impl Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Default => "default",
            Preset::Desk => "desk",
            Preset::Cifar => "cifar",
            Preset::Clothing1m => "clothing1m",
        })
    }
}

impl Preset {
    fn config(self) -> TrainConfig64 {
        match self {
            Preset::Default => TrainConfig64::default(),
            Preset::Desk => TrainConfig64::desk(),
            Preset::Cifar => TrainConfig64::cifar(),
            Preset::Clothing1m => TrainConfig64::clothing1m(),
        }
    }

    /// The preset's step schedule stretched to `epochs`.
    fn schedule(self, epochs: usize) -> LrSchedule<f64> {
        match self {
            Preset::Default | Preset::Desk => LrSchedule::every(epochs / 4 * 3, 10.0, epochs),
            Preset::Cifar => LrSchedule::every(epochs / 4, 10.0, epochs),
            Preset::Clothing1m => LrSchedule::every(epochs / 3, 10.0, epochs),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Protocol {
    None,
    PairFlip {
        pairs: Vec<(usize, usize)>,
        rate: f64,
    },
    ClusterVote {
        k: usize,
    },
    WeakModel {
        params: WeakModelParams,
        target: Option<(f64, f64)>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub val_per_class: usize,
    pub test_per_class: usize,
    /// Size per class of the trusted pool used by clean-mix training.
    pub clean_per_class: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub data: DataConfig,
    pub noise: Protocol,
    /// Raw noise settings, echoed verbatim for the protocols that don't use them.
    noise_raw: BTreeMap<String, String>,
    pub mode: Mode,
    pub preset: Preset,
    pub train: TrainConfig64,
    pub psi: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub diagnostics: bool,
    pub top_k: usize,
    pub bins: usize,
}

/// Merged `section.key -> value` pairs.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        let Some(path) = path else {
            return Ok(raw);
        };
        let ini = Ini::load_from_file_noescape(path).map_err(|e| match e {
            ini::Error::Io(e) => CliError::io(format!("{}: {e}", path.display())),
            ini::Error::Parse(e) => CliError::config(format!("{}: {e}", path.display())),
        })?;
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let Some(section) = section else {
                    return Err(CliError::config(format!(
                        "key `{key}` must be inside a [section]"
                    )));
                };
                raw.insert(&format!("{section}.{key}"), value)?;
            }
        }
        Ok(raw)
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override `{assignment}` is not key=value")))?;
        self.insert(key.trim(), value.trim())
    }

    fn insert(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let known = key.split_once('.').is_some_and(|(section, name)| {
            KEYS.iter()
                .any(|(s, names)| *s == section && names.contains(&name))
        });
        if !known {
            return Err(CliError::config(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| CliError::config(format!("`{key}` = `{v}`: {e}"))),
        }
    }

    /// `none` (or an empty value) means absent.
    fn get_opt<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("" | "none") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::config(format!("`{key}` = `{v}`: {e}"))),
        }
    }

    fn get_with<T>(
        &self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => parse(v).map_err(|e| CliError::config(format!("`{key}` = `{v}`: {e}"))),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let seed = self.get("run.seed", 0u64)?;
        let data = DataConfig {
            dir: self.get("data.dir", PathBuf::from("data"))?,
            classes: self.get("data.classes", 4)?,
            per_class: self.get("data.per_class", 50)?,
            dim: self.get("data.dim", 2)?,
            separation: self.get("data.separation", 5.0)?,
            val_per_class: self.get("data.val_per_class", 0)?,
            test_per_class: self.get("data.test_per_class", 1000)?,
            clean_per_class: self.get("data.clean_per_class", 0)?,
        };
        let noise = self.resolve_noise(data.classes)?;
        let noise_raw = self
            .values
            .iter()
            .filter(|(k, _)| k.starts_with("noise."))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        let preset = self.get("train.preset", Preset::Default)?;
        let mut train = preset.config();
        train.seed = seed;
        train.hidden = self.get_with("train.hidden", train.hidden, parse_widths)?;
        train.activation = self.get("train.activation", train.activation)?;
        train.init_scale = self.get("train.init_scale", train.init_scale)?;
        train.eta_init = self.get("train.eta_init", train.eta_init)?;
        train.alpha1 = self.get("train.alpha1", train.alpha1)?;
        train.epsilon = self.get("train.epsilon", train.epsilon)?;
        train.epochs = self.get("train.epochs", train.epochs)?;
        train.batch_size = self.get("train.batch_size", train.batch_size)?;
        train.eta_updates = self.get("train.eta_updates", train.eta_updates)?;
        train.eta_update_start_epoch =
            self.get("train.eta_update_start_epoch", train.eta_update_start_epoch)?;
        train.eta_update_every_epochs = self.get(
            "train.eta_update_every_epochs",
            train.eta_update_every_epochs,
        )?;
        train.eta_gradient_mode = self.get("train.eta_gradient_mode", train.eta_gradient_mode)?;
        train.oversample = self.get("train.oversample", train.oversample)?;
        train.optimizer.learning_rate =
            self.get("train.learning_rate", train.optimizer.learning_rate)?;
        train.optimizer.momentum = self.get("train.momentum", train.optimizer.momentum)?;
        train.optimizer.weight_decay =
            self.get("train.weight_decay", train.optimizer.weight_decay)?;
        train.optimizer.schedule = if self.has("train.lr_schedule") {
            self.get_with("train.lr_schedule", LrSchedule::default(), parse_schedule)?
        } else {
            preset.schedule(train.epochs)
        };
        train.psi_epoch_cap = self.get_opt("train.psi_epoch_cap", train.psi_epoch_cap)?;
        train
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;

        let run = RunConfig {
            name: self.get("run.name", "default".to_string())?,
            out_dir: self.get("run.out_dir", PathBuf::from("runs"))?,
            seed,
            data,
            noise,
            noise_raw,
            mode: self.get("train.mode", Mode::Method)?,
            preset,
            train,
            psi: self.get_opt("train.psi", None)?,
            checkpoint_every: self.get("train.checkpoint_every", 0)?,
            diagnostics: self.get("train.diagnostics", true)?,
            top_k: self.get("report.top_k", 10)?,
            bins: self.get("report.bins", 20)?,
        };
        run.validate()?;
        Ok(run)
    }

    fn resolve_noise(&self, classes: usize) -> Result<Protocol, CliError> {
        let protocol: String = self.get("noise.protocol", "pair-flip".to_string())?;
        Ok(match protocol.as_str() {
            "none" => Protocol::None,
            "pair-flip" => Protocol::PairFlip {
                pairs: self.get_with("noise.pairs", cyclic_pairs(classes), |s| {
                    parse_pairs(s, classes)
                })?,
                rate: self.get("noise.rate", 0.4)?,
            },
            "cluster-vote" => Protocol::ClusterVote {
                k: self.get("noise.k", 10)?,
            },
            "weak-model" => {
                let params = WeakModelParams {
                    hidden: self.get_with("noise.weak_hidden", vec![64], parse_widths)?,
                    activation: self.get("noise.weak_activation", Activation::Sin)?,
                    init_scale: self.get("noise.weak_init_scale", 3.0)?,
                    epochs: self.get("noise.weak_epochs", 50)?,
                    max_steps: self.get_opt("noise.weak_max_steps", None)?,
                    learning_rate: self.get("noise.weak_learning_rate", 0.003)?,
                    momentum: self.get("noise.weak_momentum", 0.9)?,
                    batch_size: self.get("noise.weak_batch_size", 32)?,
                };
                let target = self
                    .get_opt("noise.target_rate", Some(0.3))?
                    .map(|t| self.get("noise.tolerance", 0.05).map(|tol| (t, tol)))
                    .transpose()?;
                Protocol::WeakModel { params, target }
            }
            other => {
                return Err(CliError::config(format!(
                    "`noise.protocol` = `{other}`: expected none, pair-flip, cluster-vote or weak-model"
                )))
            }
        })
    }
}

fn cyclic_pairs(classes: usize) -> Vec<(usize, usize)> {
    (0..classes).map(|c| (c, (c + 1) % classes)).collect()
}

fn parse_widths(s: &str) -> Result<Vec<usize>, String> {
    if s.trim().is_empty() || s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_pairs(s: &str, classes: usize) -> Result<Vec<(usize, usize)>, String> {
    if s.trim() == "cyclic" {
        return Ok(cyclic_pairs(classes));
    }
    s.split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or("pairs are source:target")?;
            let a = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
            let b = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
            Ok((a, b))
        })
        .collect()
}

fn parse_schedule(s: &str) -> Result<LrSchedule<f64>, String> {
    if s.trim().is_empty() || s.trim() == "none" {
        return Ok(LrSchedule::default());
    }
    let milestones = s
        .split(',')
        .map(|p| {
            let (epoch, divisor) = p
                .split_once(':')
                .ok_or("schedule entries are epoch:divisor")?;
            let epoch = epoch.trim().parse::<usize>().map_err(|e| e.to_string())?;
            let divisor = divisor.trim().parse::<f64>().map_err(|e| e.to_string())?;
            Ok((epoch, divisor))
        })
        .collect::<Result<Vec<_>, String>>()?;
    LrSchedule::new(milestones).map_err(|e| e.to_string())
}

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.classes < 2 || d.per_class == 0 || d.dim == 0 {
            return Err(CliError::config(
                "data needs classes >= 2, per_class >= 1 and dim >= 1",
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::config(format!(
                "run.name `{}` is not a plain name",
                self.name
            )));
        }
        if self.bins == 0 {
            return Err(CliError::config("report.bins must be >= 1"));
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }

    pub fn to_ini(&self) -> Ini {
        let mut ini = Ini::new();
        ini.with_section(Some("run"))
            .set("name", &self.name)
            .set("out_dir", self.out_dir.display().to_string())
            .set("seed", self.seed.to_string());
        let d = &self.data;
        ini.with_section(Some("data"))
            .set("dir", d.dir.display().to_string())
            .set("classes", d.classes.to_string())
            .set("per_class", d.per_class.to_string())
            .set("dim", d.dim.to_string())
            .set("separation", d.separation.to_string())
            .set("val_per_class", d.val_per_class.to_string())
            .set("test_per_class", d.test_per_class.to_string())
            .set("clean_per_class", d.clean_per_class.to_string());

        let mut noise = BTreeMap::new();
        for (k, v) in &self.noise_raw {
            noise.insert(k.trim_start_matches("noise.").to_string(), v.clone());
        }
        match &self.noise {
            Protocol::None => {
                noise.insert("protocol".into(), "none".into());
            }
            Protocol::PairFlip { pairs, rate } => {
                noise.insert("protocol".into(), "pair-flip".into());
                noise.insert(
                    "pairs".into(),
                    join(pairs.iter().map(|(a, b)| format!("{a}:{b}"))),
                );
                noise.insert("rate".into(), rate.to_string());
            }
            Protocol::ClusterVote { k } => {
                noise.insert("protocol".into(), "cluster-vote".into());
                noise.insert("k".into(), k.to_string());
            }
            Protocol::WeakModel { params, target } => {
                noise.insert("protocol".into(), "weak-model".into());
                noise.insert("weak_hidden".into(), join(&params.hidden));
                noise.insert("weak_activation".into(), params.activation.to_string());
                noise.insert("weak_init_scale".into(), params.init_scale.to_string());
                noise.insert("weak_epochs".into(), params.epochs.to_string());
                noise.insert("weak_max_steps".into(), opt(&params.max_steps));
                noise.insert(
                    "weak_learning_rate".into(),
                    params.learning_rate.to_string(),
                );
                noise.insert("weak_momentum".into(), params.momentum.to_string());
                noise.insert("weak_batch_size".into(), params.batch_size.to_string());
                noise.insert("target_rate".into(), opt(&target.map(|t| t.0)));
                if let Some((_, tol)) = target {
                    noise.insert("tolerance".into(), tol.to_string());
                }
            }
        }
        let mut section = ini.with_section(Some("noise"));
        for (k, v) in &noise {
            section.set(k, v);
        }

        let t = &self.train;
        ini.with_section(Some("train"))
            .set("mode", self.mode.to_string())
            .set("preset", self.preset.to_string())
            .set("hidden", join(&t.hidden))
            .set("activation", t.activation.to_string())
            .set("init_scale", t.init_scale.to_string())
            .set("eta_init", t.eta_init.to_string())
            .set("alpha1", t.alpha1.to_string())
            .set("epsilon", t.epsilon.to_string())
            .set("epochs", t.epochs.to_string())
            .set("batch_size", t.batch_size.to_string())
            .set("eta_updates", t.eta_updates.to_string())
            .set(
                "eta_update_start_epoch",
                t.eta_update_start_epoch.to_string(),
            )
            .set(
                "eta_update_every_epochs",
                t.eta_update_every_epochs.to_string(),
            )
            .set("eta_gradient_mode", t.eta_gradient_mode.to_string())
            .set("oversample", t.oversample.to_string())
            .set("learning_rate", t.optimizer.learning_rate.to_string())
            .set("momentum", t.optimizer.momentum.to_string())
            .set("weight_decay", t.optimizer.weight_decay.to_string())
            .set(
                "lr_schedule",
                if t.optimizer.schedule.milestones.is_empty() {
                    "none".to_string()
                } else {
                    join(
                        t.optimizer
                            .schedule
                            .milestones
                            .iter()
                            .map(|(e, d)| format!("{e}:{d}")),
                    )
                },
            )
            .set("psi_epoch_cap", opt(&t.psi_epoch_cap))
            .set("psi", opt(&self.psi.as_ref().map(|p| p.display())))
            .set("checkpoint_every", self.checkpoint_every.to_string())
            .set("diagnostics", self.diagnostics.to_string());
        ini.with_section(Some("report"))
            .set("top_k", self.top_k.to_string())
            .set("bins", self.bins.to_string());
        ini
    }

    pub fn write_resolved(&self, path: &Path) -> Result<(), CliError> {
        self.to_ini()
            .write_to_file_opt(
                path,
                ini::WriteOption {
                    escape_policy: ini::EscapePolicy::Nothing,
                    kv_separator: " = ",
                    ..Default::default()
                },
            )
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}
