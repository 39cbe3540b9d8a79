//! Datasets, splitting, preprocessing and batching.

mod batch;
mod dataset;
mod pairing;
mod preprocess;
mod sets;
mod split;
mod synth;

pub use batch::{batch_indices, mixed_batches, MixedBatch};
pub use dataset::{Dataset, Example, GrayImage, ImageSource};
pub use pairing::{assign_domain_labels, PairedExample, PairedStream};
pub use preprocess::{preprocess, resize_bilinear, VARIANCE_FLOOR};
pub use sets::{gather, Batch, DomainLabel, LabeledSet, UnlabeledSet};
pub use split::{split_80_20, SplitPair};
pub use synth::{synth_two_domain, SynthConfig};

use crate::autodiff::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

/// Decodes and preprocesses `indices` of `ds` into a labeled tensor set.
/// `on_access` sees every index before its image is read.
pub fn prepare<T: Scalar>(
    ds: &Dataset,
    indices: &[usize],
    extent: usize,
    mut on_access: impl FnMut(usize),
) -> Result<LabeledSet<T>> {
    let mut data = Vec::with_capacity(indices.len() * extent * extent);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        on_access(i);
        let img = ds.image(i)?;
        data.extend(preprocess::<T>(&img, extent)?.into_data());
        labels.push(
            ds.label(i)
                .ok_or_else(|| crate::Error::Contract(format!("example {i} of {} has no class label", ds.name)))?,
        );
    }
    LabeledSet::new(Tensor::new(data, &[indices.len(), 1, extent, extent])?, labels)
}
