//! Contrastive pretraining of encoder + projector.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::early_stop::{EarlyStopping, Verdict};
use super::plan::{Mode, TrainPlan};
use super::report::{EpochRecord, Phase, PhaseReport};
use super::{build_encoder, build_projector};
use crate::augment::{corrupt_batch, ColumnPool};
use crate::contrastive::{determine_pairs, l2_normalize, stack_rows, supcon_loss, PairMask};
use crate::data::Dataset;
use crate::nncore::{AdamConfig, AdamState, Matrix, Mlp, MlpGrads};
use crate::seed::{self, Rng};
use crate::{Result, ScrError};

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub encoder: Mlp,
    pub projector: Mlp,
    pub report: PhaseReport,
    pub corruption_calls: usize,
}

/// One assembled contrastive batch: stacked inputs plus their pair mask.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub inputs: Matrix,
    pub mask: PairMask,
}

/// Builds the combined batch for `mode`: `[X; X̃]` with label pairs (Full),
/// `[X; X̃]` with copy-only pairs (SelfSupervisedPairs) or `X` alone (NoCorruption).
pub fn assemble_batch(
    x: ArrayView2<f64>,
    labels: &[f64],
    mode: Mode,
    pool: &ColumnPool,
    plan: &TrainPlan,
    rng: &mut Rng,
    corruption_calls: &mut usize,
) -> Result<ContrastiveBatch> {
    match mode {
        Mode::Full | Mode::SelfSupervisedPairs => {
            *corruption_calls += 1;
            let corrupted = corrupt_batch(x, labels, pool, plan.pretrain.corruption_rate, rng)?;
            let inputs = stack_rows(x, corrupted.features.view())?;
            let mask = if mode == Mode::Full {
                let mut both = labels.to_vec();
                both.extend_from_slice(&corrupted.labels);
                determine_pairs(&both, plan.pretrain.threshold)?
            } else {
                PairMask::copies_only(x.nrows())
            };
            Ok(ContrastiveBatch { inputs, mask })
        }
        Mode::NoCorruption => Ok(ContrastiveBatch {
            inputs: x.to_owned(),
            mask: determine_pairs(labels, plan.pretrain.threshold)?,
        }),
        Mode::BaselineMlp => Err(ScrError::contract("baseline mode has no contrastive batches")),
    }
}

/// Loss and parameter gradients of the contrastive objective on one batch.
pub fn contrastive_loss_and_grads(
    encoder: &Mlp,
    projector: &Mlp,
    batch: &ContrastiveBatch,
    plan: &TrainPlan,
) -> Result<(f64, MlpGrads, MlpGrads)> {
    let (h, enc_cache) = encoder.forward(batch.inputs.view())?;
    let (p, proj_cache) = projector.forward(h.view())?;
    let z = l2_normalize(p.view())?;
    let out = supcon_loss(
        &z,
        &batch.mask,
        plan.pretrain.temperature,
        plan.pretrain.aggregation,
    )?;
    let dp = z.backward(out.grad.view())?;
    let (proj_grads, dh) = projector.backward(&proj_cache, dp.view())?;
    let (enc_grads, _) = encoder.backward(&enc_cache, dh.view())?;
    Ok((out.loss, enc_grads, proj_grads))
}

pub fn contrastive_loss(
    encoder: &Mlp,
    projector: &Mlp,
    batch: &ContrastiveBatch,
    plan: &TrainPlan,
) -> Result<f64> {
    let h = encoder.predict(batch.inputs.view())?;
    let p = projector.predict(h.view())?;
    let z = l2_normalize(p.view())?;
    supcon_loss(
        &z,
        &batch.mask,
        plan.pretrain.temperature,
        plan.pretrain.aggregation,
    )
    .map(|o| o.loss)
}

/// Splits `n` items into `ceil(n / size)` chunks whose sizes differ by at most one.
fn balanced_chunks(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    let k = n.div_ceil(size.max(1)).max(1);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for c in 0..k {
        let len = base + usize::from(c < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Fixed validation batches, corrupted once from their own seeded stream.
fn validation_batches(
    val: &Dataset,
    pool: &ColumnPool,
    plan: &TrainPlan,
    corruption_calls: &mut usize,
) -> Result<Vec<ContrastiveBatch>> {
    let mut rng = seed::stream(plan.seed, "pretrain.validation");
    let mut order: Vec<usize> = (0..val.n_samples()).collect();
    order.shuffle(&mut rng);
    let mut batches = Vec::new();
    for chunk in balanced_chunks(&order, plan.pretrain.batch_size) {
        let x = val.features().select(Axis(0), &chunk);
        let y: Vec<f64> = chunk.iter().map(|&i| val.labels()[i]).collect();
        let batch = assemble_batch(x.view(), &y, plan.mode, pool, plan, &mut rng, corruption_calls)?;
        if batch.mask.anchor_count() > 0 {
            batches.push(batch);
        }
    }
    if batches.is_empty() {
        return Err(ScrError::DegenerateBatch(
            "no validation batch contains a positive pair".into(),
        ));
    }
    Ok(batches)
}

fn mean_validation_loss(
    encoder: &Mlp,
    projector: &Mlp,
    batches: &[ContrastiveBatch],
    plan: &TrainPlan,
) -> Result<f64> {
    let mut total = 0.0;
    for b in batches {
        total += contrastive_loss(encoder, projector, b, plan)?;
    }
    Ok(total / batches.len() as f64)
}

/// Trains encoder and projector with the supervised contrastive loss and
/// returns the weights of the best validation epoch.
pub fn pretrain(train: &Dataset, val: &Dataset, plan: &TrainPlan) -> Result<Pretrained> {
    plan.validate()?;
    if !plan.mode.pretrains() {
        return Err(ScrError::contract("pretrain called in baseline mode"));
    }
    if !train.is_standardized() || !val.is_standardized() {
        return Err(ScrError::contract("pretraining expects standardized datasets"));
    }
    if val.n_features() != train.n_features() {
        return Err(ScrError::contract("train and validation feature counts differ"));
    }
    let n = train.n_samples();
    let batch_size = plan.pretrain.batch_size.min(n);
    if batch_size < 2 && plan.mode == Mode::NoCorruption {
        return Err(ScrError::contract("need at least two training rows"));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let pool = ColumnPool::from_rows(train, &all_rows)?;

    let mut encoder = build_encoder(train.n_features(), plan)?;
    let mut projector = build_projector(plan)?;
    let adam = AdamConfig::with_learning_rate(plan.pretrain.learning_rate);
    let mut enc_opt = AdamState::for_mlp(&encoder, adam);
    let mut proj_opt = AdamState::for_mlp(&projector, adam);

    let mut corruption_calls = 0;
    let val_batches = validation_batches(val, &pool, plan, &mut corruption_calls)?;
    let mut batch_rng = seed::stream(plan.seed, "pretrain.batching");
    let mut corrupt_rng = seed::stream(plan.seed, "pretrain.corruption");

    let mut stopper = EarlyStopping::new(plan.pretrain.patience);
    let mut best = (encoder.clone(), projector.clone());
    let mut history = Vec::new();
    let mut order = all_rows.clone();

    for epoch in 1..=plan.pretrain.max_epochs {
        order.shuffle(&mut batch_rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        // The trailing partial batch is dropped.
        for rows in order.chunks_exact(batch_size) {
            let mut rows = rows.to_vec();
            let mut attempt = 0;
            let batch = loop {
                let x = train.features().select(Axis(0), &rows);
                let y: Vec<f64> = rows.iter().map(|&i| train.labels()[i]).collect();
                let b = assemble_batch(
                    x.view(),
                    &y,
                    plan.mode,
                    &pool,
                    plan,
                    &mut corrupt_rng,
                    &mut corruption_calls,
                )?;
                if b.mask.anchor_count() > 0 {
                    break b;
                }
                if attempt == 1 {
                    return Err(ScrError::DegenerateBatch(format!(
                        "epoch {epoch}: resampled batch still has no positive pairs"
                    )));
                }
                attempt += 1;
                rows = rand::seq::index::sample(&mut batch_rng, n, batch_size).into_vec();
            };
            let (loss, enc_grads, proj_grads) =
                contrastive_loss_and_grads(&encoder, &projector, &batch, plan)?;
            enc_opt.step(&mut encoder, &enc_grads)?;
            proj_opt.step(&mut projector, &proj_grads)?;
            epoch_loss += loss;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches.max(1) as f64;
        let val_loss = mean_validation_loss(&encoder, &projector, &val_batches, plan)?;
        if !val_loss.is_finite() {
            return Err(ScrError::numeric("pretrain", "non-finite validation loss"));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(val_loss) {
            Verdict::Improved => best = (encoder.clone(), projector.clone()),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }

    let report = PhaseReport {
        phase: Phase::Pretrain,
        stopping_epoch: history.len(),
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        history,
    };
    Ok(Pretrained {
        encoder: best.0,
        projector: best.1,
        report,
        corruption_calls,
    })
}
