//! Random feature corruption.
//!
//! Each row of a batch gets `floor(c·D)` positions chosen uniformly without
//! replacement; every chosen entry is replaced by a uniform draw from the same
//! column of the training pool. Labels are carried over unchanged.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::data::Dataset;
use crate::nncore::Matrix;
use crate::{Result, ScrError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    pub rate: f64,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self { rate: 0.5, seed: 0 }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(ScrError::Config(format!(
                "corruption rate must lie in [0, 1], got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// Number of replaced entries per row for `n_features` columns.
    pub fn replacements(&self, n_features: usize) -> usize {
        (self.rate * n_features as f64).floor() as usize
    }
}

/// Training-split column values that replacements are drawn from.
#[derive(Debug, Clone)]
pub struct ColumnPool {
    values: Matrix,
}

impl ColumnPool {
    pub fn from_rows(dataset: &Dataset, train_indices: &[usize]) -> Result<Self> {
        if train_indices.is_empty() {
            return Err(ScrError::contract("column pool needs at least one training row"));
        }
        if train_indices.iter().any(|&i| i >= dataset.n_samples()) {
            return Err(ScrError::contract("pool row index out of range"));
        }
        Ok(Self {
            values: dataset.features().select(Axis(0), train_indices),
        })
    }

    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(ScrError::contract("empty column pool"));
        }
        Ok(Self { values })
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, j: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.column(j)
    }
}

#[derive(Debug, Clone)]
pub struct CorruptedBatch {
    pub features: Matrix,
    pub labels: Vec<f64>,
    /// `true` where an entry was replaced (even if the draw equals the original).
    pub mask: Array2<bool>,
}

pub fn corrupt_batch<R: Rng + ?Sized>(
    batch: ArrayView2<f64>,
    labels: &[f64],
    pool: &ColumnPool,
    rate: f64,
    rng: &mut R,
) -> Result<CorruptedBatch> {
    let (b, d) = batch.dim();
    if d != pool.n_features() {
        return Err(ScrError::contract(format!(
            "batch has {d} features, pool has {}",
            pool.n_features()
        )));
    }
    if labels.len() != b {
        return Err(ScrError::contract("label count does not match batch rows"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(ScrError::contract(format!("corruption rate {rate} outside [0, 1]")));
    }
    let k = (rate * d as f64).floor() as usize;
    let mut features = batch.to_owned();
    let mut mask = Array2::from_elem((b, d), false);
    if k > 0 {
        let n_pool = pool.n_rows();
        for (mut row, mut mrow) in features.rows_mut().into_iter().zip(mask.rows_mut()) {
            for j in rand::seq::index::sample(rng, d, k) {
                let src = rng.gen_range(0..n_pool);
                row[j] = pool.values[[src, j]];
                mrow[j] = true;
            }
        }
    }
    Ok(CorruptedBatch {
        features,
        labels: labels.to_vec(),
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool(rows: usize, d: usize, seed: u64) -> ColumnPool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ColumnPool::from_matrix(Array2::from_shape_fn((rows, d), |_| rng.gen_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn width_953_replaces_476_per_row() {
        let p = pool(30, 953, 1);
        let x = Array2::from_elem((4, 953), 9.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = corrupt_batch(x.view(), &[0.0; 4], &p, 0.5, &mut rng).unwrap();
        for row in out.mask.rows() {
            assert_eq!(row.iter().filter(|&&m| m).count(), 476);
        }
    }

    #[test]
    fn zero_rate_is_exact_copy() {
        let p = pool(10, 6, 3);
        let x = Array2::from_shape_fn((5, 6), |(i, j)| (i * 6 + j) as f64 * 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = corrupt_batch(x.view(), &[1.0; 5], &p, 0.0, &mut rng).unwrap();
        assert!(out.features.iter().zip(x.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(out.mask.iter().all(|m| !m));
    }

    #[test]
    fn replacements_come_from_their_column_pool() {
        let p = pool(10, 5, 5);
        let x = Array2::from_elem((10, 5), 100.0);
        let labels: Vec<f64> = (0..10).map(f64::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = corrupt_batch(x.view(), &labels, &p, 0.6, &mut rng).unwrap();
        assert_eq!(out.labels, labels);
        for ((i, j), &m) in out.mask.indexed_iter() {
            let v = out.features[[i, j]];
            if m {
                assert!(p.column(j).iter().any(|&q| q == v), "({i},{j}) = {v} not in pool");
            } else {
                assert_eq!(v.to_bits(), x[[i, j]].to_bits());
            }
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let p = pool(5, 4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(corrupt_batch(Array2::zeros((2, 3)).view(), &[0.0; 2], &p, 0.5, &mut rng).is_err());
        assert!(corrupt_batch(Array2::zeros((2, 4)).view(), &[0.0; 3], &p, 0.5, &mut rng).is_err());
    }

    #[test]
    fn replaced_column_follows_pool_distribution() {
        // Two-sample KS statistic between replacement draws and the pool column.
        let mut prng = ChaCha8Rng::seed_from_u64(9);
        let pool_col: Vec<f64> = (0..400).map(|_| prng.gen_range(0.0..1.0f64).powi(2)).collect();
        let values = Array2::from_shape_vec((400, 1), pool_col.clone()).unwrap();
        let p = ColumnPool::from_matrix(values).unwrap();
        let x = Array2::from_elem((100_000, 1), -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let out = corrupt_batch(x.view(), &vec![0.0; 100_000], &p, 1.0, &mut rng).unwrap();
        let mut drawn: Vec<f64> = out.features.iter().copied().collect();
        let mut reference = pool_col;
        drawn.sort_by(f64::total_cmp);
        reference.sort_by(f64::total_cmp);
        let ecdf = |s: &[f64], v: f64| s.partition_point(|&q| q <= v) as f64 / s.len() as f64;
        let ks = reference
            .iter()
            .chain(drawn.iter().step_by(97))
            .map(|&v| (ecdf(&drawn, v) - ecdf(&reference, v)).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS statistic {ks}");
    }
}
