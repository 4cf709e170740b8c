use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::seed::Rng;
use crate::{Result, ScrError};

/// Disjoint train/validation/test row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// 70/10/20 split of `0..n` after a seeded shuffle; flooring remainders go to test.
pub fn split(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 10 {
        return Err(ScrError::Split(format!(
            "need at least 10 rows for a 70/10/20 split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut Rng::seed_from_u64(seed));
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(SplitIndices {
        train: order,
        val,
        test,
        seed,
    })
}
