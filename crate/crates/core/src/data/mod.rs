//! Tabular datasets: CSV ingestion, splitting, standardization and a synthetic
//! generator with known informative features.

mod csvio;
mod split;
mod standardize;
mod synth;

pub use csvio::{load_csv, read_csv, write_csv, write_csv_to};
pub use split::{split, SplitIndices};
pub use standardize::Standardizer;
pub use synth::{generate_synthetic, write_ground_truth, GroundTruth, SynthSpec};

use ndarray::{Array2, ArrayView2, Axis};

use crate::nncore::Matrix;
use crate::{Result, ScrError};

/// `N × D` feature matrix with one continuous label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<f64>,
    feature_names: Vec<String>,
    modality_tag: String,
    standardized: bool,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<f64>,
        feature_names: Vec<String>,
        modality_tag: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(ScrError::contract(format!(
                "dataset needs N >= 1 and D >= 1, got {n} x {d}"
            )));
        }
        if labels.len() != n {
            return Err(ScrError::contract(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if feature_names.len() != d {
            return Err(ScrError::contract(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(ScrError::numeric(
                "dataset",
                format!("non-finite feature at row {}, column {}", pos / d, pos % d),
            ));
        }
        if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
            return Err(ScrError::numeric("dataset", format!("non-finite label at row {i}")));
        }
        Ok(Self {
            features: features.as_standard_layout().to_owned(),
            labels,
            feature_names,
            modality_tag: modality_tag.into(),
            standardized: false,
        })
    }

    /// Dataset with generated names `f0, f1, …`.
    pub fn from_parts(features: Matrix, labels: Vec<f64>, modality_tag: impl Into<String>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(features, labels, names, modality_tag)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn modality_tag(&self) -> &str {
        &self.modality_tag
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn with_modality(mut self, tag: impl Into<String>) -> Self {
        self.modality_tag = tag.into();
        self
    }

    /// Copy with labels replaced.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.n_samples() {
            return Err(ScrError::contract("label count does not match rows"));
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(ScrError::numeric("dataset", "non-finite label"));
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// Rows `rows` in the given order; keeps the standardized flag.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_samples()) {
            return Err(ScrError::contract(format!(
                "row index {bad} out of range for {} rows",
                self.n_samples()
            )));
        }
        if rows.is_empty() {
            return Err(ScrError::contract("empty row subset"));
        }
        Ok(Self {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_names: self.feature_names.clone(),
            modality_tag: self.modality_tag.clone(),
            standardized: self.standardized,
        })
    }

    pub(crate) fn features_mut(&mut self) -> &mut Array2<f64> {
        &mut self.features
    }

    pub(crate) fn mark_standardized(mut self) -> Self {
        self.standardized = true;
        self
    }
}
