//! Evaluation metrics: Pearson's r and mean squared error.

use crate::{Result, ScrError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub pearson_r: f64,
    pub mse: f64,
    pub n: usize,
}

impl EvalResult {
    /// `pearson_r=…, mse=…, n=…` as printed by the CLI.
    pub fn line(&self) -> String {
        format!("pearson_r={}, mse={}, n={}", self.pearson_r, self.mse, self.n)
    }
}

pub fn evaluate(pred: &[f64], truth: &[f64]) -> Result<EvalResult> {
    Ok(EvalResult {
        pearson_r: pearson_r(pred, truth)?,
        mse: mse(pred, truth)?,
        n: pred.len(),
    })
}

fn check_pair(pred: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(ScrError::contract(format!(
            "length mismatch: {} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < min_len {
        return Err(ScrError::contract(format!(
            "need at least {min_len} values, got {}",
            pred.len()
        )));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(ScrError::numeric("metrics", "non-finite value"));
    }
    Ok(())
}

/// Sample Pearson correlation. Zero variance in either argument is an error.
pub fn pearson_r(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    for (name, v) in [("predictions", pred), ("targets", truth)] {
        if v.iter().all(|&x| x == v[0]) {
            return Err(ScrError::UndefinedCorrelation(format!("{name} have zero variance")));
        }
    }
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in pred.iter().zip(truth) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ScrError::UndefinedCorrelation("zero variance".into()));
    }
    // The 1/(n-1) factors cancel.
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 1)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}
