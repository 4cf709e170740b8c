//! MSE training of the regression head (frozen encoder) and of the baseline MLP.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::early_stop::{EarlyStopping, Verdict};
use super::plan::TrainPlan;
use super::report::{EpochRecord, Phase, PhaseReport};
use super::{build_encoder, build_regressor};
use crate::data::Dataset;
use crate::nncore::{AdamConfig, AdamState, Matrix, Mlp, MlpGrads};
use crate::seed;
use crate::{Result, ScrError};

/// Mean squared error of a `B × 1` prediction and its gradient.
fn mse_and_grad(pred: &Matrix, targets: &[f64]) -> (f64, Matrix) {
    let b = targets.len() as f64;
    let mut grad = Array2::zeros((targets.len(), 1));
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let r = pred[[i, 0]] - t;
        loss += r * r;
        grad[[i, 0]] = 2.0 * r / b;
    }
    (loss / b, grad)
}

/// MSE of `net` on `inputs` against `targets`.
pub fn mse_of(net: &Mlp, inputs: ArrayView2<f64>, targets: &[f64]) -> Result<f64> {
    let pred = net.predict(inputs)?;
    Ok(mse_and_grad(&pred, targets).0)
}

/// Loss and gradients of `MSE(reg(enc(x)), y)` for both networks.
pub fn joint_mse_and_grads(
    encoder: &Mlp,
    regressor: &Mlp,
    x: ArrayView2<f64>,
    y: &[f64],
) -> Result<(f64, MlpGrads, MlpGrads)> {
    let (h, enc_cache) = encoder.forward(x)?;
    let (pred, reg_cache) = regressor.forward(h.view())?;
    let (loss, grad) = mse_and_grad(&pred, y);
    let (reg_grads, dh) = regressor.backward(&reg_cache, grad.view())?;
    let (enc_grads, _) = encoder.backward(&enc_cache, dh.view())?;
    Ok((loss, enc_grads, reg_grads))
}

fn check_inputs(train: &Dataset, val: &Dataset) -> Result<()> {
    if !train.is_standardized() || !val.is_standardized() {
        return Err(ScrError::contract("training expects standardized datasets"));
    }
    if train.n_features() != val.n_features() {
        return Err(ScrError::contract("train and validation feature counts differ"));
    }
    Ok(())
}

/// Trains a fresh regressor on the outputs of a frozen encoder.
///
/// The encoder is only borrowed immutably; its embeddings are computed once.
pub fn finetune(encoder: &Mlp, train: &Dataset, val: &Dataset, plan: &TrainPlan) -> Result<(Mlp, PhaseReport)> {
    plan.validate()?;
    check_inputs(train, val)?;
    let h_train = encoder.predict(train.features())?;
    let h_val = encoder.predict(val.features())?;
    let mut regressor = build_regressor(encoder.output_dim(), plan)?;
    let mut opt = AdamState::for_mlp(&regressor, AdamConfig::with_learning_rate(plan.finetune.learning_rate));
    let mut rng = seed::stream(plan.seed, "finetune.batching");
    let mut stopper = EarlyStopping::new(plan.finetune.patience);
    let mut best = regressor.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.n_samples()).collect();

    for epoch in 1..=plan.finetune.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(plan.finetune.batch_size) {
            let x = h_train.select(Axis(0), rows);
            let y: Vec<f64> = rows.iter().map(|&i| train.labels()[i]).collect();
            let (pred, cache) = regressor.forward(x.view())?;
            let (loss, grad) = mse_and_grad(&pred, &y);
            let (grads, _) = regressor.backward(&cache, grad.view())?;
            opt.step(&mut regressor, &grads)?;
            total += loss * rows.len() as f64;
        }
        let train_loss = total / train.n_samples() as f64;
        let val_loss = mse_of(&regressor, h_val.view(), val.labels())?;
        if !val_loss.is_finite() {
            return Err(ScrError::numeric("finetune", "non-finite validation loss"));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(val_loss) {
            Verdict::Improved => best = regressor.clone(),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    let report = PhaseReport {
        phase: Phase::Finetune,
        stopping_epoch: history.len(),
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        history,
    };
    Ok((best, report))
}

/// Baseline: encoder and regressor trained jointly with MSE, no pretraining.
pub fn train_baseline(train: &Dataset, val: &Dataset, plan: &TrainPlan) -> Result<(Mlp, Mlp, PhaseReport)> {
    plan.validate()?;
    check_inputs(train, val)?;
    let mut encoder = build_encoder(train.n_features(), plan)?;
    let mut regressor = build_regressor(encoder.output_dim(), plan)?;
    let adam = AdamConfig::with_learning_rate(plan.finetune.learning_rate);
    let mut enc_opt = AdamState::for_mlp(&encoder, adam);
    let mut reg_opt = AdamState::for_mlp(&regressor, adam);
    let mut rng = seed::stream(plan.seed, "finetune.batching");
    let mut stopper = EarlyStopping::new(plan.finetune.patience);
    let mut best = (encoder.clone(), regressor.clone());
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.n_samples()).collect();

    for epoch in 1..=plan.finetune.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(plan.finetune.batch_size) {
            let x = train.features().select(Axis(0), rows);
            let y: Vec<f64> = rows.iter().map(|&i| train.labels()[i]).collect();
            let (loss, enc_grads, reg_grads) = joint_mse_and_grads(&encoder, &regressor, x.view(), &y)?;
            enc_opt.step(&mut encoder, &enc_grads)?;
            reg_opt.step(&mut regressor, &reg_grads)?;
            total += loss * rows.len() as f64;
        }
        let train_loss = total / train.n_samples() as f64;
        let h_val = encoder.predict(val.features())?;
        let val_loss = mse_of(&regressor, h_val.view(), val.labels())?;
        if !val_loss.is_finite() {
            return Err(ScrError::numeric("baseline", "non-finite validation loss"));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(val_loss) {
            Verdict::Improved => best = (encoder.clone(), regressor.clone()),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    let report = PhaseReport {
        phase: Phase::Baseline,
        stopping_epoch: history.len(),
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        history,
    };
    Ok((best.0, best.1, report))
}
