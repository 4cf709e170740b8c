use crate::augment::CorruptionConfig;
use crate::contrastive::{Aggregation, ContrastiveConfig};
use crate::{Result, ScrError};

/// Training mode, including the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Label-threshold pairs over `[X; X̃]`, then frozen-encoder fine-tuning.
    #[default]
    Full,
    /// Label-threshold pairs over `X` alone; no corruption.
    NoCorruption,
    /// Each sample is positive only with its own corrupted copy; labels unused.
    SelfSupervisedPairs,
    /// No pretraining: encoder and regressor trained jointly with MSE.
    BaselineMlp,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Full => "scr",
            Mode::NoCorruption => "no-corruption",
            Mode::SelfSupervisedPairs => "self-supervised-pairs",
            Mode::BaselineMlp => "baseline-mlp",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "scr" | "full" => Some(Mode::Full),
            "no-corruption" => Some(Mode::NoCorruption),
            "self-supervised-pairs" => Some(Mode::SelfSupervisedPairs),
            "baseline-mlp" => Some(Mode::BaselineMlp),
            _ => None,
        }
    }

    pub fn pretrains(self) -> bool {
        self != Mode::BaselineMlp
    }

    pub fn corrupts(self) -> bool {
        matches!(self, Mode::Full | Mode::SelfSupervisedPairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainPlan {
    pub batch_size: usize,
    pub corruption_rate: f64,
    pub temperature: f64,
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for PretrainPlan {
    fn default() -> Self {
        Self {
            batch_size: 256,
            corruption_rate: 0.5,
            temperature: 1.0,
            threshold: 0.35,
            aggregation: Aggregation::Mean,
            learning_rate: 1e-3,
            patience: 3,
            max_epochs: 200,
        }
    }
}

impl PretrainPlan {
    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: self.temperature,
            threshold: self.threshold,
            aggregation: self.aggregation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetunePlan {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for FinetunePlan {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 1e-3,
            patience: 3,
            max_epochs: 200,
        }
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainPlan {
    pub pretrain: PretrainPlan,
    pub finetune: FinetunePlan,
    pub mode: Mode,
    /// Width of every hidden layer and of the encoder/projector outputs.
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            pretrain: PretrainPlan::default(),
            finetune: FinetunePlan::default(),
            mode: Mode::Full,
            hidden_dim: 256,
            seed: 0,
        }
    }
}

impl TrainPlan {
    /// Settings used on the full-size cohort: pretraining batch 2048.
    pub fn cohort_scale() -> Self {
        let mut plan = Self::default();
        plan.pretrain.batch_size = 2048;
        plan
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pretrain;
        let f = &self.finetune;
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(ScrError::Config(format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        };
        positive("pretrain.batch_size", p.batch_size)?;
        positive("pretrain.patience", p.patience)?;
        positive("pretrain.max_epochs", p.max_epochs)?;
        positive("finetune.batch_size", f.batch_size)?;
        positive("finetune.patience", f.patience)?;
        positive("finetune.max_epochs", f.max_epochs)?;
        positive("model.hidden_dim", self.hidden_dim)?;
        for (name, lr) in [("pretrain.lr", p.learning_rate), ("finetune.lr", f.learning_rate)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(ScrError::Config(format!("{name} must be finite and > 0")));
            }
        }
        CorruptionConfig {
            rate: p.corruption_rate,
            seed: self.seed,
        }
        .validate()?;
        p.contrastive().validate()
    }
}
