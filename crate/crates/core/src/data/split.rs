use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Train/test partition of `0..n` by index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitPair {
    pub const RATIO: f64 = 0.8;
}

/// Seeded uniform permutation; the first `floor(0.8 n)` indices train, the
/// rest test. Not stratified.
pub fn split_80_20(n: usize, seed: u64) -> Result<SplitPair> {
    if n < 2 {
        return Err(Error::Config(format!("cannot split {n} examples into train and test")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let cut = n * 4 / 5;
    let test = order.split_off(cut);
    Ok(SplitPair {
        train: order,
        test,
        seed,
    })
}
