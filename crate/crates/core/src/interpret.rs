//! Grouped permutation feature importance.
//!
//! Each permutation draws `g` distinct features, shuffles each of those columns
//! independently across the training rows, retrains and records the drop in
//! test Pearson's r against every member of the group. A feature's score is the
//! mean drop over the permutations that included it.
//!
//! Permutation `i` draws all of its randomness from `(master_seed, i)`, and
//! results are merged in permutation order, so the report does not depend on
//! how many workers ran it.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, SplitIndices};
use crate::metrics::pearson_r;
use crate::pipeline::{fit_and_evaluate, predict, prepare_split, train_prepared, TrainPlan};
use crate::seed;
use crate::{Result, ScrError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceConfig {
    pub group_size: usize,
    pub n_permutations: usize,
    /// Retrain on shuffled training data. When false, the baseline model is
    /// kept and the group is shuffled in the test rows instead.
    pub retrain: bool,
    pub master_seed: u64,
    pub workers: usize,
}

impl ImportanceConfig {
    /// Defaults for `n_features` columns: groups of 10% of the features,
    /// 2000 permutations, retraining on.
    pub fn for_features(n_features: usize) -> Self {
        Self {
            group_size: default_group_size(n_features),
            n_permutations: 2000,
            retrain: true,
            master_seed: 0,
            workers: 1,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.group_size == 0 || self.group_size > n_features {
            return Err(ScrError::Config(format!(
                "group size must lie in 1..={n_features}, got {}",
                self.group_size
            )));
        }
        if self.n_permutations == 0 {
            return Err(ScrError::Config("n_permutations must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn default_group_size(n_features: usize) -> usize {
    ((0.1 * n_features as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub index: usize,
    pub name: String,
    /// Mean Δr over permutations containing this feature; `None` if never sampled.
    pub mean_delta_r: Option<f64>,
    pub std_error: Option<f64>,
    pub inclusion_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    /// One entry per feature, in column order.
    pub features: Vec<FeatureImportance>,
    pub baseline_r: f64,
    pub group_size: usize,
    pub completed_permutations: usize,
    pub failed_permutations: usize,
}

impl ImportanceReport {
    /// Features sorted by mean Δr descending (ties by index); unsampled last.
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by(|a, b| match (a.mean_delta_r, b.mean_delta_r) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.index.cmp(&b.index)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.index.cmp(&b.index),
        });
        v
    }

    pub fn top_k(&self, k: usize) -> Vec<usize> {
        self.ranked().into_iter().take(k).map(|f| f.index).collect()
    }

    pub fn total_inclusions(&self) -> usize {
        self.features.iter().map(|f| f.inclusion_count).sum()
    }

    /// `feature_index,feature_name,mean_delta_r,inclusion_count`, ranked,
    /// preceded by a `#` line carrying the baseline r and permutation counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# baseline_r={:?},completed_permutations={},failed_permutations={},group_size={}",
            self.baseline_r, self.completed_permutations, self.failed_permutations, self.group_size
        );
        out.push_str("feature_index,feature_name,mean_delta_r,inclusion_count\n");
        for f in self.ranked() {
            let score = f
                .mean_delta_r
                .map_or_else(|| "undefined".to_owned(), |v| format!("{v:?}"));
            let _ = writeln!(out, "{},{},{},{}", f.index, f.name, score, f.inclusion_count);
        }
        out
    }
}

/// Shuffles each listed column independently over all rows.
pub fn permute_group<R: Rng + ?Sized>(dataset: &Dataset, features: &[usize], rng: &mut R) -> Result<Dataset> {
    let rows: Vec<usize> = (0..dataset.n_samples()).collect();
    permute_group_rows(dataset, features, &rows, rng)
}

/// Shuffles each listed column independently, only among `rows`.
pub fn permute_group_rows<R: Rng + ?Sized>(
    dataset: &Dataset,
    features: &[usize],
    rows: &[usize],
    rng: &mut R,
) -> Result<Dataset> {
    let d = dataset.n_features();
    let mut seen = vec![false; d];
    for &j in features {
        if j >= d {
            return Err(ScrError::contract(format!("feature index {j} out of range for {d} features")));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(ScrError::contract(format!("feature index {j} listed twice")));
        }
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= dataset.n_samples()) {
        return Err(ScrError::contract(format!("row index {bad} out of range")));
    }
    let mut out = dataset.clone();
    let x = out.features_mut();
    for &j in features {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[[r, j]]).collect();
        values.shuffle(rng);
        for (&r, v) in rows.iter().zip(values) {
            x[[r, j]] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Outcome {
    group: Vec<usize>,
    delta: Option<f64>,
}

fn is_run_failure(err: &ScrError) -> bool {
    matches!(
        err,
        ScrError::DegenerateBatch(_) | ScrError::UndefinedCorrelation(_) | ScrError::Numeric { .. }
    )
}

/// Runs `n` independent jobs on up to `workers` threads; results come back in index order.
pub(crate) fn run_indexed<T: Send, F>(n: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = job(i);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every index is processed"))
        .collect()
}

pub fn run_importance(
    dataset: &Dataset,
    split: &SplitIndices,
    plan: &TrainPlan,
    config: &ImportanceConfig,
) -> Result<ImportanceReport> {
    let d = dataset.n_features();
    config.validate(d)?;
    plan.validate()?;

    let prepared = prepare_split(dataset, split)?;
    let (baseline_bundle, _) = train_prepared(&prepared, dataset.modality_tag(), plan)?;
    let baseline_pred = predict(&baseline_bundle, &prepared.test)?;
    let baseline_r = pearson_r(&baseline_pred, prepared.test.labels())?;

    let outcomes = run_indexed(config.n_permutations, config.workers, |i| {
        let mut rng = seed::stream_indexed(config.master_seed, "importance", i as u64);
        let mut group = rand::seq::index::sample(&mut rng, d, config.group_size).into_vec();
        group.sort_unstable();
        let permuted_r = if config.retrain {
            let shuffled = permute_group_rows(dataset, &group, &split.train, &mut rng)?;
            fit_and_evaluate(&shuffled, split, plan).map(|run| run.test.pearson_r)
        } else {
            let shuffled = permute_group(&prepared.test, &group, &mut rng)?;
            predict(&baseline_bundle, &shuffled).and_then(|p| pearson_r(&p, shuffled.labels()))
        };
        match permuted_r {
            Ok(r) => Ok(Outcome {
                group,
                delta: Some(baseline_r - r),
            }),
            Err(e) if is_run_failure(&e) => Ok(Outcome { group, delta: None }),
            Err(e) => Err(e),
        }
    })?;

    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut count = vec![0usize; d];
    let mut failed = 0;
    for o in &outcomes {
        let Some(delta) = o.delta else {
            failed += 1;
            continue;
        };
        for &j in &o.group {
            sum[j] += delta;
            sum_sq[j] += delta * delta;
            count[j] += 1;
        }
    }
    let features = (0..d)
        .map(|j| {
            let n = count[j] as f64;
            let mean = (count[j] > 0).then(|| sum[j] / n);
            let std_error = (count[j] > 1).then(|| {
                let m = sum[j] / n;
                let var = ((sum_sq[j] - n * m * m) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            });
            FeatureImportance {
                index: j,
                name: dataset.feature_names()[j].clone(),
                mean_delta_r: mean,
                std_error,
                inclusion_count: count[j],
            }
        })
        .collect();
    Ok(ImportanceReport {
        features,
        baseline_r,
        group_size: config.group_size,
        completed_permutations: outcomes.len() - failed,
        failed_permutations: failed,
    })
}
