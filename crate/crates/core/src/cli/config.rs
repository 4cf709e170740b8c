//! Flat `key = value` run configuration.
//!
//! Values are layered: built-in defaults, then `SCR_SEED`, then the config
//! file, then command-line flags. Unknown keys are rejected before any work.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::contrastive::Aggregation;
use crate::data::SynthSpec;
use crate::interpret::{default_group_size, ImportanceConfig};
use crate::pipeline::{Mode, TrainPlan};
use crate::seed;
use crate::{Result, ScrError};

/// Every accepted key with its help text, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; every random stream derives from it"),
    ("mode", "scr | no-corruption | self-supervised-pairs | baseline-mlp"),
    ("data", "dataset CSV (input, or output of synth)"),
    ("truth", "ground-truth sidecar CSV written by synth (auto: <data>.truth.csv)"),
    ("checkpoint", "model checkpoint path (auto: <report_dir>/model.ckpt)"),
    ("report_dir", "directory for reports"),
    ("split.seed", "seed of the 70/10/20 split (auto: derived from seed)"),
    ("model.hidden_dim", "width of hidden layers and embeddings"),
    ("pretrain.batch_size", "contrastive batch size b"),
    ("pretrain.corruption_rate", "feature corruption rate c"),
    ("pretrain.temperature", "temperature tau"),
    ("pretrain.threshold", "label difference threshold theta"),
    ("pretrain.aggregation", "mean | sum over anchors"),
    ("pretrain.lr", "pretraining learning rate"),
    ("pretrain.patience", "pretraining early-stopping patience"),
    ("pretrain.max_epochs", "pretraining epoch cap"),
    ("finetune.batch_size", "fine-tuning batch size"),
    ("finetune.lr", "fine-tuning learning rate"),
    ("finetune.patience", "fine-tuning early-stopping patience"),
    ("finetune.max_epochs", "fine-tuning epoch cap"),
    ("synth.n_samples", "synthetic rows"),
    ("synth.n_features", "synthetic columns"),
    ("synth.n_informative", "number of informative columns"),
    ("synth.noise_std", "label noise standard deviation"),
    ("synth.nonlinear", "add tanh terms (true | false)"),
    ("synth.seed", "generator seed (auto: seed)"),
    ("importance.group_size", "features shuffled together (auto: round(0.1 D))"),
    ("importance.n_permutations", "number of grouped permutations"),
    ("importance.retrain", "retrain per permutation (false: shuffle test rows only)"),
    ("importance.master_seed", "permutation seed (auto: seed)"),
    ("workers", "worker threads for importance and sweep"),
];

const AUTO: &str = "auto";

/// `pretrain.batch_size` → `pretrain.batch-size`.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

pub fn is_known_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Parses config text into ordered pairs. `#` starts a comment.
pub fn parse_config_text(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ScrError::Config(format!("{source}:{}: expected `key = value`", i + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !is_known_key(key) {
            return Err(ScrError::Config(format!("{source}:{}: unknown key `{key}`", i + 1)));
        }
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(ScrError::Config(format!("{source}:{}: duplicate key `{key}`", i + 1)));
        }
        pairs.push((key.to_owned(), value.to_owned()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub noise_std: f64,
    pub nonlinear: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSettings {
    pub group_size: Option<usize>,
    pub n_permutations: usize,
    pub retrain: bool,
    pub master_seed: Option<u64>,
}

/// Fully resolved configuration. `None` fields resolve to their derived value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report_dir: PathBuf,
    pub split_seed: Option<u64>,
    /// Plan with `seed` already applied.
    pub plan: TrainPlan,
    pub synth: SynthSettings,
    pub importance: ImportanceSettings,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let imp = ImportanceConfig::for_features(1);
        Self {
            seed: 0,
            data: None,
            truth: None,
            checkpoint: None,
            report_dir: PathBuf::from("report"),
            split_seed: None,
            plan: TrainPlan::default(),
            synth: SynthSettings {
                n_samples: 2000,
                n_features: 100,
                n_informative: 10,
                noise_std: 0.5,
                nonlinear: true,
                seed: None,
            },
            importance: ImportanceSettings {
                group_size: None,
                n_permutations: imp.n_permutations,
                retrain: imp.retrain,
                master_seed: None,
            },
            workers: 1,
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> ScrError {
    ScrError::Config(format!("key `{key}`: cannot parse `{value}` as {want}"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(key, v, "a finite number"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn parse_auto<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v == AUTO {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (v != AUTO && !v.is_empty()).then(|| PathBuf::from(v))
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| AUTO.to_owned(), T::to_string)
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| AUTO.to_owned(), |p| p.display().to_string())
}

impl RunConfig {
    /// Resolves layered sources. `env_seed` is the value of `SCR_SEED`.
    pub fn resolve(
        env_seed: Option<&str>,
        file: &[(String, String)],
        flags: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(s) = env_seed {
            cfg.seed = parse_u64("SCR_SEED", s.trim())?;
        }
        for (k, v) in file.iter().chain(flags) {
            cfg.set(k, v)?;
        }
        cfg.plan.seed = cfg.seed;
        cfg.plan.validate()?;
        if cfg.workers == 0 {
            return Err(ScrError::Config("workers must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.plan;
        match key {
            "seed" => self.seed = parse_u64(key, v)?,
            "mode" => {
                p.mode = Mode::from_tag(v).ok_or_else(|| bad(key, v, "a training mode"))?;
            }
            "data" => self.data = parse_path(v),
            "truth" => self.truth = parse_path(v),
            "checkpoint" => self.checkpoint = parse_path(v),
            "report_dir" => self.report_dir = PathBuf::from(v),
            "split.seed" => self.split_seed = parse_auto(v, |v| parse_u64(key, v))?,
            "model.hidden_dim" => p.hidden_dim = parse_usize(key, v)?,
            "pretrain.batch_size" => p.pretrain.batch_size = parse_usize(key, v)?,
            "pretrain.corruption_rate" => p.pretrain.corruption_rate = parse_f64(key, v)?,
            "pretrain.temperature" => p.pretrain.temperature = parse_f64(key, v)?,
            "pretrain.threshold" => p.pretrain.threshold = parse_f64(key, v)?,
            "pretrain.aggregation" => {
                p.pretrain.aggregation =
                    Aggregation::from_tag(v).ok_or_else(|| bad(key, v, "mean or sum"))?;
            }
            "pretrain.lr" => p.pretrain.learning_rate = parse_f64(key, v)?,
            "pretrain.patience" => p.pretrain.patience = parse_usize(key, v)?,
            "pretrain.max_epochs" => p.pretrain.max_epochs = parse_usize(key, v)?,
            "finetune.batch_size" => p.finetune.batch_size = parse_usize(key, v)?,
            "finetune.lr" => p.finetune.learning_rate = parse_f64(key, v)?,
            "finetune.patience" => p.finetune.patience = parse_usize(key, v)?,
            "finetune.max_epochs" => p.finetune.max_epochs = parse_usize(key, v)?,
            "synth.n_samples" => self.synth.n_samples = parse_usize(key, v)?,
            "synth.n_features" => self.synth.n_features = parse_usize(key, v)?,
            "synth.n_informative" => self.synth.n_informative = parse_usize(key, v)?,
            "synth.noise_std" => self.synth.noise_std = parse_f64(key, v)?,
            "synth.nonlinear" => self.synth.nonlinear = parse_bool(key, v)?,
            "synth.seed" => self.synth.seed = parse_auto(v, |v| parse_u64(key, v))?,
            "importance.group_size" => {
                self.importance.group_size = parse_auto(v, |v| parse_usize(key, v))?;
            }
            "importance.n_permutations" => self.importance.n_permutations = parse_usize(key, v)?,
            "importance.retrain" => self.importance.retrain = parse_bool(key, v)?,
            "importance.master_seed" => {
                self.importance.master_seed = parse_auto(v, |v| parse_u64(key, v))?;
            }
            "workers" => self.workers = parse_usize(key, v)?,
            _ => return Err(ScrError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn train_plan(&self) -> TrainPlan {
        self.plan.with_seed(self.seed)
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or_else(|| seed::derive(self.seed, "split"))
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let s = &self.synth;
        SynthSpec::with_random_informative(
            s.n_samples,
            s.n_features,
            s.n_informative,
            s.noise_std,
            s.nonlinear,
            s.seed.unwrap_or(self.seed),
        )
    }

    pub fn importance_config(&self, n_features: usize) -> ImportanceConfig {
        ImportanceConfig {
            group_size: self
                .importance
                .group_size
                .unwrap_or_else(|| default_group_size(n_features)),
            n_permutations: self.importance.n_permutations,
            retrain: self.importance.retrain,
            master_seed: self.importance.master_seed.unwrap_or(self.seed),
            workers: self.workers,
        }
    }

    pub fn require_data(&self) -> Result<&PathBuf> {
        self.data
            .as_ref()
            .ok_or_else(|| ScrError::Config("`data` is required for this command".into()))
    }

    pub fn truth_path(&self) -> Result<PathBuf> {
        match &self.truth {
            Some(p) => Ok(p.clone()),
            None => Ok(self.require_data()?.with_extension("truth.csv")),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.report_dir.join("model.ckpt"))
    }

    /// Value of `key` as it would be written in a config file.
    pub fn value_of(&self, key: &str) -> Option<String> {
        let p = &self.plan;
        let v = match key {
            "seed" => self.seed.to_string(),
            "mode" => p.mode.tag().to_owned(),
            "data" => show_path(&self.data),
            "truth" => show_path(&self.truth),
            "checkpoint" => show_path(&self.checkpoint),
            "report_dir" => self.report_dir.display().to_string(),
            "split.seed" => show(&self.split_seed),
            "model.hidden_dim" => p.hidden_dim.to_string(),
            "pretrain.batch_size" => p.pretrain.batch_size.to_string(),
            "pretrain.corruption_rate" => format!("{:?}", p.pretrain.corruption_rate),
            "pretrain.temperature" => format!("{:?}", p.pretrain.temperature),
            "pretrain.threshold" => format!("{:?}", p.pretrain.threshold),
            "pretrain.aggregation" => p.pretrain.aggregation.tag().to_owned(),
            "pretrain.lr" => format!("{:?}", p.pretrain.learning_rate),
            "pretrain.patience" => p.pretrain.patience.to_string(),
            "pretrain.max_epochs" => p.pretrain.max_epochs.to_string(),
            "finetune.batch_size" => p.finetune.batch_size.to_string(),
            "finetune.lr" => format!("{:?}", p.finetune.learning_rate),
            "finetune.patience" => p.finetune.patience.to_string(),
            "finetune.max_epochs" => p.finetune.max_epochs.to_string(),
            "synth.n_samples" => self.synth.n_samples.to_string(),
            "synth.n_features" => self.synth.n_features.to_string(),
            "synth.n_informative" => self.synth.n_informative.to_string(),
            "synth.noise_std" => format!("{:?}", self.synth.noise_std),
            "synth.nonlinear" => self.synth.nonlinear.to_string(),
            "synth.seed" => show(&self.synth.seed),
            "importance.group_size" => show(&self.importance.group_size),
            "importance.n_permutations" => self.importance.n_permutations.to_string(),
            "importance.retrain" => self.importance.retrain.to_string(),
            "importance.master_seed" => show(&self.importance.master_seed),
            "workers" => self.workers.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Every key with its resolved value, parseable by [`parse_config_text`].
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let value = self.value_of(key).expect("every listed key has a value");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
