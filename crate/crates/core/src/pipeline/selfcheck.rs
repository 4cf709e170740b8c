//! Finite-difference checks of the two trained loss compositions.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::finetune::joint_mse_and_grads;
use super::plan::{Mode, TrainPlan};
use super::pretrain::{assemble_batch, contrastive_loss_and_grads};
use super::{build_encoder, build_projector, build_regressor};
use crate::augment::ColumnPool;
use crate::nncore::{grad_check, Mlp};
use crate::seed;
use crate::Result;

/// Maximum relative error allowed between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOutcome {
    pub composition: &'static str,
    pub max_rel_error: f64,
}

impl GradcheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }

    pub fn line(&self) -> String {
        format!(
            "{} max_rel_error={:.3e} {}",
            self.composition,
            self.max_rel_error,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Batch shape and width used by the self-check.
pub const CHECK_SAMPLES: usize = 8;
pub const CHECK_FEATURES: usize = 12;
const CHECK_HIDDEN: usize = 16;
const FD_STEP: f64 = 1e-6;

fn split_params(a: &Mlp, b: &Mlp, flat: &[f64]) -> Result<(Mlp, Mlp)> {
    let (fa, fb) = flat.split_at(a.param_count());
    let mut a = a.clone();
    let mut b = b.clone();
    a.set_flat_params(fa)?;
    b.set_flat_params(fb)?;
    Ok((a, b))
}

fn joined(a: &Mlp, b: &Mlp) -> Vec<f64> {
    let mut p = a.flat_params();
    p.extend(b.flat_params());
    p
}

/// Runs both checks. `perturb` is added to every analytic gradient entry,
/// which must make the checks fail; it exists as a negative control.
pub fn gradient_self_check(seed: u64, perturb: f64) -> Result<Vec<GradcheckOutcome>> {
    let mut plan = TrainPlan::default().with_seed(seed);
    plan.hidden_dim = CHECK_HIDDEN;
    let mut rng = seed::stream(seed, "gradcheck.data");
    let x = Array2::from_shape_simple_fn((CHECK_SAMPLES, CHECK_FEATURES), || rng.sample(StandardNormal));
    // Labels on a 0.2 grid so several pairs fall inside the 0.35 threshold.
    let y: Vec<f64> = (0..CHECK_SAMPLES).map(|i| 0.2 * i as f64 - 0.7).collect();

    let encoder = build_encoder(CHECK_FEATURES, &plan)?;
    let regressor = build_regressor(CHECK_HIDDEN, &plan)?;
    let projector = build_projector(&plan)?;

    let mse_err = grad_check(
        |p| {
            let (enc, reg) = split_params(&encoder, &regressor, p)?;
            let (loss, ge, gr) = joint_mse_and_grads(&enc, &reg, x.view(), &y)?;
            let mut g = ge.flatten();
            g.extend(gr.flatten());
            Ok((loss, g.into_iter().map(|v| v + perturb).collect()))
        },
        &joined(&encoder, &regressor),
        FD_STEP,
    )?;

    let pool = ColumnPool::from_matrix(x.clone())?;
    let mut corrupt_rng = seed::stream(seed, "gradcheck.corruption");
    let mut calls = 0;
    let batch = assemble_batch(x.view(), &y, Mode::Full, &pool, &plan, &mut corrupt_rng, &mut calls)?;
    let scr_err = grad_check(
        |p| {
            let (enc, proj) = split_params(&encoder, &projector, p)?;
            let (loss, ge, gp) = contrastive_loss_and_grads(&enc, &proj, &batch, &plan)?;
            let mut g = ge.flatten();
            g.extend(gp.flatten());
            Ok((loss, g.into_iter().map(|v| v + perturb).collect()))
        },
        &joined(&encoder, &projector),
        FD_STEP,
    )?;

    Ok(vec![
        GradcheckOutcome {
            composition: "mse_finetune",
            max_rel_error: mse_err,
        },
        GradcheckOutcome {
            composition: "scr_pretrain",
            max_rel_error: scr_err,
        },
    ])
}
