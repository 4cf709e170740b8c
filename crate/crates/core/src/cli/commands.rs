use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::data::{generate_synthetic, load_csv, split, write_csv, write_ground_truth, Dataset};
use crate::interpret::{run_importance, run_indexed};
use crate::metrics::{evaluate, EvalResult};
use crate::pipeline::{
    fit_and_evaluate, gradient_self_check, load_bundle, predict_raw, ensemble_predict, save_bundle, Phase,
};
use crate::{Result, ScrError};

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| ScrError::io("<stdout>", e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| ScrError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| ScrError::io(path, e))
}

fn report_file(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.report_dir.join(name)
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    write_text(&report_file(cfg, "config.txt"), &cfg.echo())
}

fn predictions_csv(pred: &[f64]) -> String {
    let mut s = String::from("prediction\n");
    for p in pred {
        let _ = writeln!(s, "{p:?}");
    }
    s
}

fn load_split(cfg: &RunConfig) -> Result<(Dataset, crate::data::SplitIndices)> {
    let dataset = load_csv(cfg.require_data()?)?;
    let indices = split(dataset.n_samples(), cfg.split_seed())?;
    Ok((dataset, indices))
}

/// Writes the synthetic dataset to `data` and its ground truth to `truth`.
pub fn cmd_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let spec = cfg.synth_spec()?;
    let data = cfg.require_data()?.clone();
    let truth_path = cfg.truth_path()?;
    let (dataset, truth) = generate_synthetic(&spec)?;
    if let Some(parent) = data.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| ScrError::io(parent, e))?;
    }
    write_csv(&dataset, &data)?;
    write_ground_truth(&truth, &truth_path)?;
    echo_config(cfg)?;
    emit(
        out,
        &format!(
            "wrote {} ({} rows, {} features) and {}",
            data.display(),
            dataset.n_samples(),
            dataset.n_features(),
            truth_path.display()
        ),
    )
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (dataset, indices) = load_split(cfg)?;
    let plan = cfg.train_plan();
    let run = fit_and_evaluate(&dataset, &indices, &plan)?;
    let ckpt = cfg.checkpoint_path();
    if let Some(parent) = ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| ScrError::io(parent, e))?;
    }
    save_bundle(&run.bundle, &ckpt)?;
    echo_config(cfg)?;
    write_text(&report_file(cfg, "train_report.csv"), &run.report.to_csv())?;
    write_text(
        &report_file(cfg, "metrics.csv"),
        &format!("pearson_r,mse,n\n{:?},{:?},{}\n", run.test.pearson_r, run.test.mse, run.test.n),
    )?;
    write_text(&report_file(cfg, "test_predictions.csv"), &predictions_csv(&run.test_predictions))?;

    let mut md = String::from("# Training summary\n\n| item | value |\n|---|---|\n");
    let _ = writeln!(md, "| mode | {} |", plan.mode.tag());
    let _ = writeln!(md, "| dataset | {} rows x {} features |", dataset.n_samples(), dataset.n_features());
    let _ = writeln!(
        md,
        "| split (train/val/test) | {}/{}/{} |",
        indices.train.len(),
        indices.val.len(),
        indices.test.len()
    );
    for phase in [Phase::Pretrain, Phase::Finetune, Phase::Baseline] {
        if let Some(p) = run.report.phase(phase) {
            let _ = writeln!(
                md,
                "| {} | stopped at epoch {}, best epoch {}, best val loss {:.6} |",
                phase.tag(),
                p.stopping_epoch,
                p.best_epoch,
                p.best_val_loss
            );
        }
    }
    let _ = writeln!(md, "| test pearson_r | {:.6} |", run.test.pearson_r);
    let _ = writeln!(md, "| test mse | {:.6} |", run.test.mse);
    let _ = writeln!(md, "| checkpoint | {} |", ckpt.display());
    write_text(&report_file(cfg, "summary.md"), &md)?;
    emit(out, &run.test.line())
}

pub fn cmd_evaluate(cfg: &RunConfig, predictions: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let bundle = load_bundle(cfg.checkpoint_path())?;
    let dataset = load_csv(cfg.require_data()?)?;
    let pred = predict_raw(&bundle, &dataset)?;
    let result = evaluate(&pred, dataset.labels())?;
    if let Some(path) = predictions {
        write_text(&path, &predictions_csv(&pred))?;
    }
    emit(out, &result.line())
}

pub fn cmd_ensemble(
    checkpoints: &[String],
    datasets: &[String],
    predictions: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let bundles = checkpoints.iter().map(load_bundle).collect::<Result<Vec<_>>>()?;
    let data = datasets.iter().map(load_csv).collect::<Result<Vec<_>>>()?;
    let pred = ensemble_predict(&bundles, &data)?;
    let labels = data
        .first()
        .ok_or_else(|| ScrError::Config("ensemble needs at least one dataset".into()))?
        .labels();
    let result = evaluate(&pred, labels)?;
    if let Some(path) = predictions {
        write_text(&path, &predictions_csv(&pred))?;
    }
    emit(out, &result.line())
}

pub fn cmd_importance(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (dataset, indices) = load_split(cfg)?;
    let icfg = cfg.importance_config(dataset.n_features());
    icfg.validate(dataset.n_features())?;
    let report = run_importance(&dataset, &indices, &cfg.train_plan(), &icfg)?;
    echo_config(cfg)?;
    let csv_path = report_file(cfg, "importance.csv");
    write_text(&csv_path, &report.to_csv())?;

    let mut md = String::from("# Feature importance\n\n");
    let _ = writeln!(
        md,
        "Baseline test r {:.6}; {} permutations completed, {} failed; groups of {}.\n",
        report.baseline_r, report.completed_permutations, report.failed_permutations, report.group_size
    );
    md.push_str("| rank | feature | mean delta r | inclusions |\n|---|---|---|---|\n");
    for (rank, f) in report.ranked().into_iter().take(20).enumerate() {
        let score = f.mean_delta_r.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.6}"));
        let _ = writeln!(md, "| {} | {} | {} | {} |", rank + 1, f.name, score, f.inclusion_count);
    }
    write_text(&report_file(cfg, "importance.md"), &md)?;
    emit(
        out,
        &format!(
            "baseline_r={:?}, completed={}, failed={}, report={}",
            report.baseline_r,
            report.completed_permutations,
            report.failed_permutations,
            csv_path.display()
        ),
    )
}

/// Canonical config key for a sweep name, or a usage error.
pub fn resolve_sweep_key(name: &str) -> Result<&'static str> {
    match name {
        "b" | "pretrain.batch_size" => Ok("pretrain.batch_size"),
        "c" | "pretrain.corruption_rate" => Ok("pretrain.corruption_rate"),
        "tau" | "τ" | "pretrain.temperature" => Ok("pretrain.temperature"),
        "theta" | "θ" | "pretrain.threshold" => Ok("pretrain.threshold"),
        "seed" => Ok("seed"),
        other => Err(ScrError::Config(format!(
            "usage: cannot sweep `{other}`; expected b, c, tau, theta or seed"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub key: &'static str,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Max minus min test r across rows.
    pub fn spread(&self) -> f64 {
        let rs = self.rows.iter().map(|r| r.result.pearson_r);
        let max = rs.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = rs.fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value,pearson_r,mse,n\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{}",
                self.key, r.value, r.result.pearson_r, r.result.mse, r.result.n
            );
        }
        s
    }
}

/// Trains once per value of `key` with everything else taken from `cfg`.
/// All values are validated before any training starts.
pub fn run_sweep(dataset: &Dataset, cfg: &RunConfig, key: &str, values: &[String]) -> Result<SweepTable> {
    let key = resolve_sweep_key(key)?;
    if values.is_empty() {
        return Err(ScrError::Config("usage: sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.set(key, v.trim())?;
            c.plan.seed = c.seed;
            c.plan.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = run_indexed(configs.len(), cfg.workers, |i| {
        let c = &configs[i];
        let indices = split(dataset.n_samples(), c.split_seed())?;
        fit_and_evaluate(dataset, &indices, &c.train_plan()).map(|run| run.test)
    })?;
    Ok(SweepTable {
        key,
        rows: values
            .iter()
            .zip(results)
            .map(|(v, result)| SweepRow {
                value: v.trim().to_owned(),
                result,
            })
            .collect(),
    })
}

pub fn cmd_sweep(cfg: &RunConfig, key: &str, values: &[String], out: &mut dyn Write) -> Result<()> {
    resolve_sweep_key(key)?;
    let dataset = load_csv(cfg.require_data()?)?;
    let table = run_sweep(&dataset, cfg, key, values)?;
    echo_config(cfg)?;
    write_text(&report_file(cfg, "sweep.csv"), &table.to_csv())?;
    let mut md = format!("# Sweep over {}\n\n| value | pearson_r | mse |\n|---|---|---|\n", table.key);
    for r in &table.rows {
        let _ = writeln!(md, "| {} | {:.6} | {:.6} |", r.value, r.result.pearson_r, r.result.mse);
    }
    let _ = writeln!(md, "\nmax - min pearson_r: {:.6}", table.spread());
    write_text(&report_file(cfg, "sweep.md"), &md)?;
    for r in &table.rows {
        emit(out, &format!("{}={}: {}", table.key, r.value, r.result.line()))?;
    }
    emit(out, &format!("spread={:?}", table.spread()))
}

/// Prints one line per composition; fails with a numeric error past tolerance.
pub fn cmd_gradcheck(seed: u64, perturb: f64, out: &mut dyn Write) -> Result<()> {
    let outcomes = gradient_self_check(seed, perturb)?;
    for o in &outcomes {
        emit(out, &o.line())?;
    }
    match outcomes.iter().find(|o| !o.passed()) {
        Some(o) => Err(ScrError::numeric(
            "gradcheck",
            format!("{} relative error {:e} exceeds tolerance", o.composition, o.max_rel_error),
        )),
        None => Ok(()),
    }
}
