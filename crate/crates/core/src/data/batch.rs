use rand::seq::SliceRandom;

use crate::rng;

/// Seeded per-epoch shuffle of `0..n`, cut into batches of `batch_size`
/// with a final short batch.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let order = shuffled(n, seed, "batches", epoch);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// One domain invariance batch: equal numbers of source and target indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedBatch {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Per-epoch mixed batches of `batch_size / 2` source plus `batch_size / 2`
/// target indices, each side drawn without replacement from its own seeded
/// shuffle. The epoch ends when the smaller side runs out; the final batch
/// may be short but keeps both halves equal.
pub fn mixed_batches(n_source: usize, n_target: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<MixedBatch> {
    let half = (batch_size / 2).max(1);
    let src = shuffled(n_source, seed, "mixed-source", epoch);
    let tgt = shuffled(n_target, seed, "mixed-target", epoch);
    let usable = n_source.min(n_target);
    (0..usable)
        .step_by(half)
        .map(|start| {
            let end = (start + half).min(usable);
            MixedBatch {
                source: src[start..end].to_vec(),
                target: tgt[start..end].to_vec(),
            }
        })
        .collect()
}

fn shuffled(n: usize, seed: u64, stream: &str, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream_indexed(seed, stream, epoch);
    order.shuffle(&mut rng);
    order
}
