use ndarray::Axis;

use super::Dataset;
use crate::{Result, ScrError};

/// Per-feature z-scoring fitted on training rows (population std).
/// Columns that are constant over the training rows map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(dataset: &Dataset, train_indices: &[usize]) -> Result<Self> {
        if train_indices.is_empty() {
            return Err(ScrError::contract("standardizer needs at least one training row"));
        }
        let train = dataset.features().select(Axis(0), train_indices);
        let n = train.nrows() as f64;
        let d = train.ncols();
        let mut mean = Vec::with_capacity(d);
        let mut std = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for col in train.columns() {
            let first = col[0];
            let is_const = col.iter().all(|&v| v == first);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(if is_const { 0.0 } else { var.sqrt() });
            constant.push(is_const || var == 0.0);
        }
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Standardized copy of `dataset`. Applying to an already standardized
    /// dataset is a contract error. Labels are untouched.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.is_standardized() {
            return Err(ScrError::contract("dataset is already standardized"));
        }
        if dataset.n_features() != self.n_features() {
            return Err(ScrError::contract(format!(
                "standardizer fitted on {} features, dataset has {}",
                self.n_features(),
                dataset.n_features()
            )));
        }
        let mut out = dataset.clone();
        for (j, mut col) in out.features_mut().columns_mut().into_iter().enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                let (m, s) = (self.mean[j], self.std[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out.mark_standardized())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn z_scores_with_population_std() {
        let ds = Dataset::from_parts(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], vec![0.0, 1.0, 2.0], "FA")
            .unwrap();
        let st = Standardizer::fit(&ds, &[0, 1, 2]).unwrap();
        let out = st.apply(&ds).unwrap();
        let z = 1.5f64.sqrt(); // 1 / sqrt(2/3)
        let col0 = out.features().column(0).to_vec();
        assert!((col0[0] + z).abs() < 1e-12 && col0[1].abs() < 1e-12 && (col0[2] - z).abs() < 1e-12);
        assert_eq!(out.features().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert!(st.constant[1] && !st.constant[0]);
        assert_eq!(out.labels(), ds.labels());
    }

    #[test]
    fn second_application_is_rejected() {
        let ds = Dataset::from_parts(array![[1.0], [4.0]], vec![0.0, 1.0], "FA").unwrap();
        let st = Standardizer::fit(&ds, &[0, 1]).unwrap();
        let once = st.apply(&ds).unwrap();
        assert!(matches!(st.apply(&once), Err(ScrError::Contract(_))));
    }

    #[test]
    fn training_moments_are_normalized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = ndarray::Array2::from_shape_fn((50, 4), |(_, j)| rng.gen_range(-3.0..3.0) * (j + 1) as f64 + 7.0);
        let ds = Dataset::from_parts(x, vec![0.0; 50], "MD").unwrap();
        let train: Vec<usize> = (0..35).collect();
        let st = Standardizer::fit(&ds, &train).unwrap();
        let out = st.apply(&ds).unwrap().subset(&train).unwrap();
        for col in out.features().columns() {
            let m = col.mean().unwrap();
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
        }
        assert!(Standardizer::fit(&ds, &[]).is_err());
    }
}
