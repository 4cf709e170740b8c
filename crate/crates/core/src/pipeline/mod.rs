//! Two-phase training (contrastive pretraining, then frozen-encoder
//! fine-tuning), ablation modes, prediction, ensembling and persistence.
//!
//! Architecture: the encoder has four ReLU layers `D → h → h → h → h`; the
//! projector `h → h → h` and the regressor `h → h → 1` each have two layers
//! with a linear output. `h` is [`TrainPlan::hidden_dim`] (256 by default).

mod checkpoint;
mod early_stop;
mod finetune;
mod plan;
mod pretrain;
mod report;
mod selfcheck;

pub use checkpoint::{bundle_from_str, bundle_to_string, load_bundle, save_bundle};
pub use early_stop::{EarlyStopping, Verdict};
pub use finetune::{finetune, joint_mse_and_grads, mse_of, train_baseline};
pub use plan::{FinetunePlan, Mode, PretrainPlan, TrainPlan};
pub use pretrain::{
    assemble_batch, contrastive_loss, contrastive_loss_and_grads, pretrain, ContrastiveBatch, Pretrained,
};
pub use report::{EpochRecord, Phase, PhaseReport, TrainReport};
pub use selfcheck::{gradient_self_check, GradcheckOutcome, CHECK_FEATURES, CHECK_SAMPLES, GRADCHECK_TOLERANCE};

use std::time::Instant;

use crate::data::{Dataset, SplitIndices, Standardizer};
use crate::metrics::{evaluate, EvalResult};
use crate::nncore::{Activation, Mlp};
use crate::seed;
use crate::{Result, ScrError};

pub const ENCODER_LAYERS: usize = 4;

pub(crate) fn build_encoder(n_features: usize, plan: &TrainPlan) -> Result<Mlp> {
    let h = plan.hidden_dim;
    let mut dims = vec![n_features];
    dims.extend(std::iter::repeat(h).take(ENCODER_LAYERS));
    Mlp::glorot(&dims, Activation::Relu, &mut seed::stream(plan.seed, "init.encoder"))
}

pub(crate) fn build_projector(plan: &TrainPlan) -> Result<Mlp> {
    let h = plan.hidden_dim;
    Mlp::glorot(&[h, h, h], Activation::Identity, &mut seed::stream(plan.seed, "init.projector"))
}

pub(crate) fn build_regressor(in_dim: usize, plan: &TrainPlan) -> Result<Mlp> {
    Mlp::glorot(
        &[in_dim, plan.hidden_dim, 1],
        Activation::Identity,
        &mut seed::stream(plan.seed, "init.regressor"),
    )
}

/// Everything needed to predict from raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub encoder: Mlp,
    /// Kept for the record; never on the prediction path. Absent for the baseline.
    pub projector: Option<Mlp>,
    pub regressor: Mlp,
    pub standardizer: Standardizer,
    pub modality_tag: String,
    pub mode: Mode,
}

impl ModelBundle {
    pub fn n_features(&self) -> usize {
        self.encoder.input_dim()
    }
}

/// Standardized train/validation/test views of one split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub standardizer: Standardizer,
}

pub fn prepare_split(dataset: &Dataset, split: &SplitIndices) -> Result<PreparedSplit> {
    let standardizer = Standardizer::fit(dataset, &split.train)?;
    let all = standardizer.apply(dataset)?;
    Ok(PreparedSplit {
        train: all.subset(&split.train)?,
        val: all.subset(&split.val)?,
        test: all.subset(&split.test)?,
        standardizer,
    })
}

/// Trains on already-prepared data.
pub fn train_prepared(prepared: &PreparedSplit, modality_tag: &str, plan: &TrainPlan) -> Result<(ModelBundle, TrainReport)> {
    plan.validate()?;
    let started = Instant::now();
    let mut report = TrainReport::default();
    let (encoder, projector, regressor) = if plan.mode.pretrains() {
        let pre = pretrain(&prepared.train, &prepared.val, plan)?;
        report.corruption_calls = pre.corruption_calls;
        report.phases.push(pre.report);
        let (regressor, ft) = finetune(&pre.encoder, &prepared.train, &prepared.val, plan)?;
        report.phases.push(ft);
        (pre.encoder, Some(pre.projector), regressor)
    } else {
        let (encoder, regressor, rep) = train_baseline(&prepared.train, &prepared.val, plan)?;
        report.phases.push(rep);
        (encoder, None, regressor)
    };
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    let bundle = ModelBundle {
        encoder,
        projector,
        regressor,
        standardizer: prepared.standardizer.clone(),
        modality_tag: modality_tag.to_owned(),
        mode: plan.mode,
    };
    Ok((bundle, report))
}

/// Standardize on the training rows, then pretrain and fine-tune (or train the
/// baseline) according to `plan.mode`.
pub fn train_scr(dataset: &Dataset, split: &SplitIndices, plan: &TrainPlan) -> Result<(ModelBundle, TrainReport)> {
    let prepared = prepare_split(dataset, split)?;
    train_prepared(&prepared, dataset.modality_tag(), plan)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub bundle: ModelBundle,
    pub report: TrainReport,
    pub test: EvalResult,
    pub test_predictions: Vec<f64>,
}

/// [`train_scr`] followed by evaluation on the test rows.
pub fn fit_and_evaluate(dataset: &Dataset, split: &SplitIndices, plan: &TrainPlan) -> Result<RunResult> {
    let prepared = prepare_split(dataset, split)?;
    let (bundle, report) = train_prepared(&prepared, dataset.modality_tag(), plan)?;
    let test_predictions = predict(&bundle, &prepared.test)?;
    let test = evaluate(&test_predictions, prepared.test.labels())?;
    Ok(RunResult {
        bundle,
        report,
        test,
        test_predictions,
    })
}

/// Predictions for a dataset already standardized with the bundle's standardizer.
pub fn predict(bundle: &ModelBundle, dataset: &Dataset) -> Result<Vec<f64>> {
    if dataset.n_features() != bundle.n_features() {
        return Err(ScrError::contract(format!(
            "model expects {} features, dataset has {}",
            bundle.n_features(),
            dataset.n_features()
        )));
    }
    if !dataset.is_standardized() {
        return Err(ScrError::contract(
            "predict expects standardized features; use predict_raw for raw data",
        ));
    }
    let h = bundle.encoder.predict(dataset.features())?;
    let out = bundle.regressor.predict(h.view())?;
    Ok(out.column(0).to_vec())
}

/// Applies the bundle's standardizer, then predicts.
pub fn predict_raw(bundle: &ModelBundle, dataset: &Dataset) -> Result<Vec<f64>> {
    if dataset.is_standardized() {
        return predict(bundle, dataset);
    }
    let standardized = bundle.standardizer.apply(dataset)?;
    predict(bundle, &standardized)
}

/// Elementwise mean of equally long prediction vectors.
pub fn ensemble_mean(predictions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = predictions
        .first()
        .ok_or_else(|| ScrError::contract("ensemble needs at least one member"))?;
    if predictions.iter().any(|p| p.len() != first.len()) {
        return Err(ScrError::contract("ensemble members predict different row counts"));
    }
    let k = predictions.len() as f64;
    Ok((0..first.len())
        .map(|i| predictions.iter().map(|p| p[i]).sum::<f64>() / k)
        .collect())
}

/// Average of per-modality predictions; `datasets[i]` feeds `bundles[i]` and
/// rows are aligned by position. Raw datasets are standardized per bundle.
pub fn ensemble_predict(bundles: &[ModelBundle], datasets: &[Dataset]) -> Result<Vec<f64>> {
    if bundles.len() != datasets.len() {
        return Err(ScrError::contract(format!(
            "{} models but {} datasets",
            bundles.len(),
            datasets.len()
        )));
    }
    if let Some(first) = datasets.first() {
        if datasets.iter().any(|d| d.n_samples() != first.n_samples()) {
            return Err(ScrError::contract("ensemble datasets have different row counts"));
        }
    }
    let preds = bundles
        .iter()
        .zip(datasets)
        .map(|(b, d)| predict_raw(b, d))
        .collect::<Result<Vec<_>>>()?;
    ensemble_mean(&preds)
}
