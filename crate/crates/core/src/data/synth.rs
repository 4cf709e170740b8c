use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::distributions::{Distribution, Uniform};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::seed;
use crate::{Result, ScrError};

/// Recipe for a synthetic regression task with known informative features.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub informative_indices: Vec<usize>,
    pub noise_std: f64,
    pub nonlinear: bool,
    pub seed: u64,
}

impl SynthSpec {
    /// Settings whose `n_informative` informative columns are drawn from the seed.
    pub fn with_random_informative(
        n_samples: usize,
        n_features: usize,
        n_informative: usize,
        noise_std: f64,
        nonlinear: bool,
        seed: u64,
    ) -> Result<Self> {
        if n_informative == 0 || n_informative > n_features {
            return Err(ScrError::contract(format!(
                "n_informative must lie in 1..={n_features}, got {n_informative}"
            )));
        }
        let mut rng = seed::stream(seed, "synth.informative");
        let mut informative = rand::seq::index::sample(&mut rng, n_features, n_informative).into_vec();
        informative.sort_unstable();
        Ok(Self {
            n_samples,
            n_features,
            informative_indices: informative,
            noise_std,
            nonlinear,
            seed,
        })
    }
}

/// Generator coefficients plus the affine map used to rescale labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub informative_indices: Vec<usize>,
    /// Linear coefficient per feature; zero for non-informative features.
    pub weights: Vec<f64>,
    /// `tanh` coefficient per feature; all zero for linear tasks.
    pub nonlinear_weights: Vec<f64>,
    pub label_offset: f64,
    pub label_scale: f64,
}

impl GroundTruth {
    pub fn is_informative(&self, feature: usize) -> bool {
        self.informative_indices.binary_search(&feature).is_ok()
    }

    fn raw_label(&self, row: ndarray::ArrayView1<f64>) -> f64 {
        self.informative_indices
            .iter()
            .map(|&j| self.weights[j] * row[j] + self.nonlinear_weights[j] * row[j].tanh())
            .sum()
    }

    /// Noise-free rescaled labels for `features`.
    pub fn regenerate_labels(&self, features: ArrayView2<f64>) -> Vec<f64> {
        features
            .rows()
            .into_iter()
            .map(|row| (self.raw_label(row) - self.label_offset) / self.label_scale)
            .collect()
    }
}

/// Standard-normal features; label = Σ wᵢxᵢ (+ Σ vᵢ tanh xᵢ) + noise over the
/// informative set, then z-scored so labels span roughly [-3, 3].
/// Coefficient magnitudes are uniform in [0.5, 1.5]. Each `wᵢ` has a random
/// sign and `vᵢ` shares it, so every informative term is monotone in `xᵢ`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    if spec.informative_indices.is_empty() {
        return Err(ScrError::contract("at least one informative feature is required"));
    }
    if let Some(&bad) = spec.informative_indices.iter().find(|&&j| j >= spec.n_features) {
        return Err(ScrError::contract(format!(
            "informative index {bad} out of range for {} features",
            spec.n_features
        )));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(ScrError::contract("noise_std must be finite and >= 0"));
    }
    let mut informative = spec.informative_indices.clone();
    informative.sort_unstable();
    informative.dedup();

    let mut feat_rng = seed::stream(spec.seed, "synth.features");
    let features = Array2::from_shape_fn((spec.n_samples, spec.n_features), |_| {
        feat_rng.sample::<f64, _>(StandardNormal)
    });

    let mut w_rng = seed::stream(spec.seed, "synth.weights");
    let magnitude = Uniform::new_inclusive(0.5_f64, 1.5);
    let draw = |rng: &mut seed::Rng| {
        let m = magnitude.sample(rng);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    };
    let mut weights = vec![0.0; spec.n_features];
    let mut nonlinear_weights = vec![0.0; spec.n_features];
    for &j in &informative {
        let w = draw(&mut w_rng);
        weights[j] = w;
        let v = magnitude.sample(&mut w_rng).copysign(w);
        if spec.nonlinear {
            nonlinear_weights[j] = v;
        }
    }

    let mut truth = GroundTruth {
        informative_indices: informative,
        weights,
        nonlinear_weights,
        label_offset: 0.0,
        label_scale: 1.0,
    };
    let mut noise_rng = seed::stream(spec.seed, "synth.noise");
    let raw: Vec<f64> = features
        .rows()
        .into_iter()
        .map(|row| {
            let noise = if spec.noise_std > 0.0 {
                spec.noise_std * noise_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            truth.raw_label(row) + noise
        })
        .collect();
    let n = raw.len().max(1) as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let std = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    truth.label_offset = mean;
    truth.label_scale = if std > 0.0 { std } else { 1.0 };
    let labels = raw
        .iter()
        .map(|v| (v - truth.label_offset) / truth.label_scale)
        .collect();
    let dataset = Dataset::from_parts(features, labels, "synthetic")?;
    Ok((dataset, truth))
}

/// Sidecar CSV `feature_index,weight,informative`.
pub fn write_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("feature_index,weight,informative\n");
    for (j, w) in truth.weights.iter().enumerate() {
        let _ = writeln!(out, "{j},{w:?},{}", u8::from(truth.is_informative(j)));
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| ScrError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson_r;

    fn spec(n: usize, d: usize, inf: Vec<usize>, noise: f64, nonlinear: bool, seed: u64) -> SynthSpec {
        SynthSpec {
            n_samples: n,
            n_features: d,
            informative_indices: inf,
            noise_std: noise,
            nonlinear,
            seed,
        }
    }

    #[test]
    fn noiseless_single_feature_is_perfectly_correlated() {
        let (ds, truth) = generate_synthetic(&spec(200, 5, vec![3], 0.0, false, 1)).unwrap();
        let col = ds.features().column(3).to_vec();
        let r = pearson_r(&col, ds.labels()).unwrap();
        assert!((r.abs() - 1.0).abs() < 1e-12);
        assert_eq!(r.signum(), truth.weights[3].signum());
    }

    #[test]
    fn deterministic() {
        let s = spec(50, 8, vec![0, 2], 0.3, true, 17);
        assert_eq!(generate_synthetic(&s).unwrap(), generate_synthetic(&s).unwrap());
    }

    #[test]
    fn labels_are_rescaled() {
        let (ds, _) = generate_synthetic(&spec(2000, 20, vec![1, 4, 9], 0.5, true, 2)).unwrap();
        let y = ds.labels();
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo > -5.0 && hi < 5.0 && lo < -2.0 && hi > 2.0);
    }

    #[test]
    fn labels_depend_only_on_informative_columns() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (ds, truth) = generate_synthetic(&spec(100, 10, vec![1, 7], 0.0, true, 3)).unwrap();
        assert_eq!(truth.regenerate_labels(ds.features()), ds.labels());
        let mut x = ds.features().to_owned();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for j in (0..10).filter(|j| !truth.is_informative(*j)) {
            let mut col: Vec<f64> = x.column(j).to_vec();
            col.shuffle(&mut rng);
            x.column_mut(j).assign(&ndarray::Array1::from(col));
        }
        assert_eq!(truth.regenerate_labels(x.view()), ds.labels());
    }

    #[test]
    fn random_informative_selection() {
        let s = SynthSpec::with_random_informative(10, 100, 10, 0.5, true, 8).unwrap();
        assert_eq!(s.informative_indices.len(), 10);
        assert!(s.informative_indices.windows(2).all(|w| w[0] < w[1]));
        assert!(SynthSpec::with_random_informative(10, 5, 6, 0.5, true, 8).is_err());
        assert!(generate_synthetic(&spec(10, 3, vec![], 0.0, false, 0)).is_err());
        assert!(generate_synthetic(&spec(10, 3, vec![3], 0.0, false, 0)).is_err());
    }
}
