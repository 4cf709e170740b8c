//! Label-threshold pair determination and the supervised contrastive loss.
//!
//! For anchor `r` with positives `P(r)` and all other samples `A(r)`:
//!
//! ```text
//! L_r = -1/|P(r)| Σ_{p∈P(r)} log( exp(z_r·z_p/τ) / Σ_{a∈A(r)} exp(z_r·z_a/τ) )
//! ```
//!
//! Anchors with an empty `P(r)` are skipped.

use ndarray::{Array2, ArrayView2, Axis};

use crate::nncore::Matrix;
use crate::{Result, ScrError};

/// How per-anchor losses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean over anchors that have at least one positive.
    #[default]
    Mean,
    /// Plain sum over contributing anchors.
    Sum,
}

impl Aggregation {
    pub fn tag(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Sum => "sum",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "mean" => Some(Aggregation::Mean),
            "sum" => Some(Aggregation::Sum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub threshold: f64,
    pub aggregation: Aggregation,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            threshold: 0.35,
            aggregation: Aggregation::Mean,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(ScrError::Config(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(ScrError::Config(format!(
                "label threshold must be finite and > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Symmetric positive-pair relation over a combined batch; the diagonal is false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMask {
    positive: Array2<bool>,
}

impl PairMask {
    pub fn size(&self) -> usize {
        self.positive.nrows()
    }

    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        self.positive[[i, j]]
    }

    pub fn matrix(&self) -> &Array2<bool> {
        &self.positive
    }

    pub fn positives_of(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        self.positive
            .row(r)
            .into_iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(j, _)| j)
    }

    pub fn positive_count(&self, r: usize) -> usize {
        self.positive.row(r).iter().filter(|&&p| p).count()
    }

    /// Number of anchors with at least one positive.
    pub fn anchor_count(&self) -> usize {
        (0..self.size()).filter(|&r| self.positive_count(r) > 0).count()
    }

    /// Mask over `[X; X̃]` (2·`batch` rows) where each sample is positive only
    /// with its own corrupted copy.
    pub fn copies_only(batch: usize) -> Self {
        let m = 2 * batch;
        let positive = Array2::from_shape_fn((m, m), |(i, j)| i != j && i % batch == j % batch);
        Self { positive }
    }

    /// Builds a mask from an explicit relation, enforcing symmetry and a false diagonal.
    pub fn from_matrix(positive: Array2<bool>) -> Result<Self> {
        let m = positive.nrows();
        if positive.ncols() != m {
            return Err(ScrError::contract("pair mask must be square"));
        }
        for i in 0..m {
            if positive[[i, i]] {
                return Err(ScrError::contract("pair mask diagonal must be false"));
            }
            for j in 0..i {
                if positive[[i, j]] != positive[[j, i]] {
                    return Err(ScrError::contract("pair mask must be symmetric"));
                }
            }
        }
        Ok(Self { positive })
    }
}

/// `positive(i, j) = i ≠ j ∧ |yᵢ − yⱼ| < θ`.
pub fn determine_pairs(labels: &[f64], threshold: f64) -> Result<PairMask> {
    if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
        return Err(ScrError::contract(format!("non-finite label at index {i}")));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(ScrError::contract(format!("threshold must be > 0, got {threshold}")));
    }
    let m = labels.len();
    let positive = Array2::from_shape_fn((m, m), |(i, j)| {
        i != j && (labels[i] - labels[j]).abs() < threshold
    });
    Ok(PairMask { positive })
}

/// Rows scaled to unit Euclidean norm, with the norms kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    z: Matrix,
    norms: Vec<f64>,
}

impl EmbeddingBatch {
    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    /// Builds a batch from rows that are already unit-norm (not re-normalized).
    pub fn from_unit_rows(z: Matrix) -> Result<Self> {
        for (i, row) in z.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if (n - 1.0).abs() > 1e-10 {
                return Err(ScrError::contract(format!("row {i} has norm {n}, expected 1")));
            }
        }
        let norms = vec![1.0; z.nrows()];
        Ok(Self { z, norms })
    }

    /// Gradient w.r.t. the raw rows given the gradient w.r.t. the normalized rows:
    /// `(g − z (z·g)) / ‖x‖`.
    pub fn backward(&self, grad_z: ArrayView2<f64>) -> Result<Matrix> {
        if grad_z.raw_dim() != self.z.raw_dim() {
            return Err(ScrError::contract("gradient shape does not match embeddings"));
        }
        let mut out = grad_z.to_owned();
        for ((mut g, z), &norm) in out.rows_mut().into_iter().zip(self.z.rows()).zip(&self.norms) {
            let proj = z.dot(&g);
            g.zip_mut_with(&z, |gi, &zi| *gi = (*gi - zi * proj) / norm);
        }
        Ok(out)
    }
}

pub fn l2_normalize(raw: ArrayView2<f64>) -> Result<EmbeddingBatch> {
    let mut z = raw.to_owned();
    let mut norms = Vec::with_capacity(z.nrows());
    for (i, mut row) in z.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !(n >= 1e-12) || !n.is_finite() {
            return Err(ScrError::numeric(
                "l2_normalize",
                format!("row {i} has norm {n:e}, cannot normalize"),
            ));
        }
        row.mapv_inplace(|v| v / n);
        norms.push(n);
    }
    Ok(EmbeddingBatch { z, norms })
}

#[derive(Debug, Clone)]
pub struct SupConOutput {
    pub loss: f64,
    /// dLoss/dz for the normalized embeddings.
    pub grad: Matrix,
    /// Anchors that contributed (non-empty positive set).
    pub anchors: usize,
}

/// Supervised contrastive loss over normalized embeddings with analytic gradient.
/// Denominators use max-subtracted log-sum-exp.
pub fn supcon_loss(
    z: &EmbeddingBatch,
    mask: &PairMask,
    temperature: f64,
    aggregation: Aggregation,
) -> Result<SupConOutput> {
    let m = z.rows();
    if m < 2 {
        return Err(ScrError::contract(format!("supcon needs M >= 2, got {m}")));
    }
    if mask.size() != m {
        return Err(ScrError::contract(format!(
            "pair mask covers {} samples, embeddings have {m}",
            mask.size()
        )));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(ScrError::contract(format!("temperature must be > 0, got {temperature}")));
    }
    let zm = z.z();
    let logits = zm.dot(&zm.t()) / temperature;

    // coef[r, a] = dL_r/dlogit[r, a] before aggregation scaling.
    let mut coef = Array2::<f64>::zeros((m, m));
    let mut total = 0.0;
    let mut anchors = 0usize;
    for r in 0..m {
        let n_pos = mask.positive_count(r);
        if n_pos == 0 {
            continue;
        }
        anchors += 1;
        let row = logits.row(r);
        let max = row
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != r)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (a, &v) in row.iter().enumerate() {
            if a != r {
                denom += (v - max).exp();
            }
        }
        let log_denom = max + denom.ln();
        let inv_pos = 1.0 / n_pos as f64;
        let mut pos_sum = 0.0;
        let mut crow = coef.row_mut(r);
        for (a, &v) in row.iter().enumerate() {
            if a == r {
                continue;
            }
            let q = (v - log_denom).exp();
            let is_pos = mask.is_positive(r, a);
            if is_pos {
                pos_sum += v;
            }
            crow[a] = q - if is_pos { inv_pos } else { 0.0 };
        }
        total += log_denom - pos_sum * inv_pos;
    }
    if anchors == 0 {
        return Err(ScrError::DegenerateBatch(
            "no anchor has a positive partner".into(),
        ));
    }
    let scale = match aggregation {
        Aggregation::Mean => 1.0 / anchors as f64,
        Aggregation::Sum => 1.0,
    };
    // logits = Z Zᵀ/τ, so dL/dZ = (C + Cᵀ) Z / τ.
    let sym = &coef + &coef.t();
    let grad = sym.dot(zm) * (scale / temperature);
    let loss = total * scale;
    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(ScrError::numeric("supcon_loss", "non-finite loss or gradient"));
    }
    Ok(SupConOutput {
        loss,
        grad,
        anchors,
    })
}

/// Stacks `[a; b]` row-wise.
pub fn stack_rows(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Matrix> {
    ndarray::concatenate(Axis(0), &[a.view(), b.view()])
        .map_err(|e| ScrError::contract(format!("cannot stack batches: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight double-loop evaluation of the loss, no stability tricks.
    fn direct_loss(z: &Matrix, mask: &PairMask, tau: f64, agg: Aggregation) -> f64 {
        let m = z.nrows();
        let mut total = 0.0;
        let mut anchors = 0;
        for r in 0..m {
            let pos: Vec<usize> = (0..m).filter(|&p| mask.is_positive(r, p)).collect();
            if pos.is_empty() {
                continue;
            }
            anchors += 1;
            let denom: f64 = (0..m)
                .filter(|&a| a != r)
                .map(|a| (z.row(r).dot(&z.row(a)) / tau).exp())
                .sum();
            let mut lr = 0.0;
            for &p in &pos {
                lr += ((z.row(r).dot(&z.row(p)) / tau).exp() / denom).ln();
            }
            total += -lr / pos.len() as f64;
        }
        match agg {
            Aggregation::Mean => total / anchors as f64,
            Aggregation::Sum => total,
        }
    }

    fn random_raw(rng: &mut ChaCha8Rng, m: usize, e: usize) -> Matrix {
        Array2::from_shape_fn((m, e), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn pair_rule_examples() {
        let mask = determine_pairs(&[0.0, 0.2, 1.0], 0.35).unwrap();
        let pos: Vec<(usize, usize)> = mask.matrix().indexed_iter().filter(|(_, &p)| p).map(|(ij, _)| ij).collect();
        assert_eq!(pos, vec![(0, 1), (1, 0)]);
        // Exactly θ apart is a negative pair.
        let mask = determine_pairs(&[0.0, 0.5], 0.5).unwrap();
        assert!(!mask.is_positive(0, 1));
        // A sample and its copy always pair up.
        let mask = determine_pairs(&[1.3, -2.0, 1.3, -2.0], 0.1).unwrap();
        assert!(mask.is_positive(0, 2) && mask.is_positive(1, 3));
        assert!(determine_pairs(&[0.0, f64::NAN], 0.35).is_err());
    }

    #[test]
    fn copies_only_mask_has_one_positive_each() {
        let mask = PairMask::copies_only(5);
        for r in 0..10 {
            assert_eq!(mask.positives_of(r).collect::<Vec<_>>(), vec![(r + 5) % 10]);
        }
        assert!(PairMask::from_matrix(mask.matrix().clone()).is_ok());
        assert!(PairMask::from_matrix(array![[true, false], [false, false]]).is_err());
        assert!(PairMask::from_matrix(array![[false, true], [false, false]]).is_err());
    }

    #[test]
    fn normalization_examples() {
        let z = l2_normalize(array![[3.0, 4.0]].view()).unwrap();
        assert!((z.z()[[0, 0]] - 0.6).abs() < 1e-15 && (z.z()[[0, 1]] - 0.8).abs() < 1e-15);
        let unit = array![[0.6, 0.8], [1.0, 0.0]];
        assert_eq!(l2_normalize(unit.view()).unwrap().z(), &unit);
        assert!(matches!(
            l2_normalize(array![[1.0, 0.0], [0.0, 0.0]].view()),
            Err(ScrError::Numeric { .. })
        ));
    }

    #[test]
    fn normalization_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = random_raw(&mut rng, 4, 3);
        let w = random_raw(&mut rng, 4, 3);
        let err = grad_check(
            |p: &[f64]| {
                let x = Array2::from_shape_vec((4, 3), p.to_vec()).unwrap();
                let z = l2_normalize(x.view())?;
                let loss = (z.z() * &w).sum();
                let g = z.backward(w.view())?;
                Ok((loss, g.into_raw_vec_and_offset().0))
            },
            raw.as_slice().unwrap(),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn identical_pair_has_zero_loss() {
        let z = EmbeddingBatch::from_unit_rows(array![[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let mask = determine_pairs(&[0.0, 0.0], 0.35).unwrap();
        let out = supcon_loss(&z, &mask, 1.0, Aggregation::Mean).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn three_sample_hand_value() {
        let z = EmbeddingBatch::from_unit_rows(array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mask = PairMask::from_matrix(array![
            [false, true, false],
            [true, false, false],
            [false, false, false]
        ])
        .unwrap();
        // Anchors 0 and 1 are symmetric, so the mean equals L_0 = log(1 + e^-1).
        let out = supcon_loss(&z, &mask, 1.0, Aggregation::Mean).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.loss - expected).abs() < 1e-15);
        assert!((expected - 0.31326).abs() < 1e-5);
        assert_eq!(out.anchors, 2);
        let sum = supcon_loss(&z, &mask, 1.0, Aggregation::Sum).unwrap();
        assert!((sum.loss - 2.0 * expected).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_summation_on_random_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = random_raw(&mut rng, 8, 5);
        let z = l2_normalize(raw.view()).unwrap();
        let labels: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mask = determine_pairs(&labels, 0.35).unwrap();
        for agg in [Aggregation::Mean, Aggregation::Sum] {
            let out = supcon_loss(&z, &mask, 0.7, agg).unwrap();
            assert!((out.loss - direct_loss(z.z(), &mask, 0.7, agg)).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_and_malformed_batches() {
        let z = EmbeddingBatch::from_unit_rows(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mask = determine_pairs(&[0.0, 5.0], 0.35).unwrap();
        assert!(matches!(
            supcon_loss(&z, &mask, 1.0, Aggregation::Mean),
            Err(ScrError::DegenerateBatch(_))
        ));
        let one = EmbeddingBatch::from_unit_rows(array![[1.0, 0.0]]).unwrap();
        assert!(supcon_loss(&one, &determine_pairs(&[0.0], 0.35).unwrap(), 1.0, Aggregation::Mean).is_err());
        assert!(supcon_loss(&z, &determine_pairs(&[0.0; 3], 0.35).unwrap(), 1.0, Aggregation::Mean).is_err());
    }

    #[test]
    fn loss_gradient_through_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = random_raw(&mut rng, 8, 4);
        let labels: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mask = determine_pairs(&labels, 0.5).unwrap();
        for tau in [0.5, 1.0, 5.0] {
            let err = grad_check(
                |p: &[f64]| {
                    let x = Array2::from_shape_vec((8, 4), p.to_vec()).unwrap();
                    let z = l2_normalize(x.view())?;
                    let out = supcon_loss(&z, &mask, tau, Aggregation::Mean)?;
                    let g = z.backward(out.grad.view())?;
                    Ok((out.loss, g.into_raw_vec_and_offset().0))
                },
                raw.as_slice().unwrap(),
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-6, "tau {tau}: relative error {err}");
        }
    }

    #[test]
    fn skipped_anchors_get_no_gradient_of_their_own() {
        // Sample 2 has no positives and no one is positive with it: its row of
        // the gradient comes only from appearing in other anchors' denominators.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = l2_normalize(random_raw(&mut rng, 3, 3).view()).unwrap();
        let mask = determine_pairs(&[0.0, 0.1, 9.0], 0.35).unwrap();
        let out = supcon_loss(&z, &mask, 1.0, Aggregation::Mean).unwrap();
        assert_eq!(out.anchors, 2);
        let two = determine_pairs(&[0.0, 0.1], 0.35).unwrap();
        let z2 = EmbeddingBatch::from_unit_rows(z.z().slice(ndarray::s![0..2, ..]).to_owned()).unwrap();
        let pair_only = supcon_loss(&z2, &two, 1.0, Aggregation::Mean).unwrap();
        assert!(pair_only.loss < out.loss);
    }

    #[test]
    fn pulling_a_positive_closer_does_not_increase_anchor_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = random_raw(&mut rng, 5, 3);
        // Only anchor 0 and 1 are positive with each other.
        let mask = determine_pairs(&[0.0, 0.1, 3.0, 6.0, 9.0], 0.35).unwrap();
        let anchor0 = |x: &Matrix| {
            let z = l2_normalize(x.view()).unwrap();
            direct_loss(&z.z().select(Axis(0), &[0, 1, 2, 3, 4]), &mask, 1.0, Aggregation::Sum) / 2.0
        };
        let mut prev = anchor0(&raw);
        let target = raw.row(0).to_owned();
        let mut x = raw.clone();
        for step in 1..=10 {
            let t = step as f64 / 10.0;
            let row1 = &raw.row(1) * (1.0 - t) + &target * t;
            x.row_mut(1).assign(&row1);
            let cur = anchor0(&x);
            assert!(cur <= prev + 1e-12, "step {step}: {cur} > {prev}");
            prev = cur;
        }
    }

    proptest! {
        #[test]
        fn mask_matches_brute_force(labels in proptest::collection::vec(-3.0f64..3.0, 1..24), theta in 0.05f64..1.0) {
            let mask = determine_pairs(&labels, theta).unwrap();
            for i in 0..labels.len() {
                for j in 0..labels.len() {
                    let expected = i != j && (labels[i] - labels[j]).abs() < theta;
                    prop_assert_eq!(mask.is_positive(i, j), expected);
                    prop_assert_eq!(mask.is_positive(i, j), mask.is_positive(j, i));
                }
            }
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>(), m in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_raw(&mut rng, m, 4);
            let labels: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let mut perm: Vec<usize> = (0..m).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let z = l2_normalize(raw.view()).unwrap();
            let mask = determine_pairs(&labels, 0.35).unwrap();
            let Ok(base) = supcon_loss(&z, &mask, 1.0, Aggregation::Mean) else { return Ok(()); };
            let zp = l2_normalize(raw.select(Axis(0), &perm).view()).unwrap();
            let lp: Vec<f64> = perm.iter().map(|&i| labels[i]).collect();
            let permuted = supcon_loss(&zp, &determine_pairs(&lp, 0.35).unwrap(), 1.0, Aggregation::Mean).unwrap();
            prop_assert!((base.loss - permuted.loss).abs() < 1e-12);
        }
    }
}
