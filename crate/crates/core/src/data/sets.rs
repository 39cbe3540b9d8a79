use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which domain an example came from: 0 for source, 1 for target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainLabel {
    Source,
    Target,
}

impl DomainLabel {
    pub fn value(self) -> u8 {
        match self {
            DomainLabel::Source => 0,
            DomainLabel::Target => 1,
        }
    }
}

/// Preprocessed images `[n, 1, h, w]` with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet<T> {
    pub images: Tensor<T>,
    pub labels: Vec<u8>,
}

/// Preprocessed images with no class labels in reach.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSet<T> {
    pub images: Tensor<T>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(images: Tensor<T>, labels: Vec<u8>) -> Result<Self> {
        if images.shape().len() != 4 || images.shape()[0] != labels.len() {
            return Err(Error::shape("labeled set", images.shape(), &[labels.len()]));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Contract(format!("class label {bad} is not binary")));
        }
        Ok(LabeledSet { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Drops the labels; the unsupervised training view of a target set.
    pub fn without_labels(&self) -> UnlabeledSet<T> {
        UnlabeledSet {
            images: self.images.clone(),
        }
    }

    pub fn batch(&self, indices: &[usize], domain: DomainLabel) -> Batch<T> {
        Batch {
            images: gather(&self.images, indices),
            labels: Some(indices.iter().map(|&i| self.labels[i]).collect()),
            domains: vec![domain; indices.len()],
        }
    }
}

impl<T: Scalar> UnlabeledSet<T> {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training batch: images with optional class labels and per-example domain labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Option<Vec<u8>>,
    pub domains: Vec<DomainLabel>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// Source rows then target rows, class labels dropped.
    pub fn mixed(source: &Tensor<T>, source_idx: &[usize], target: &Tensor<T>, target_idx: &[usize]) -> Result<Self> {
        let s = gather(source, source_idx);
        let t = gather(target, target_idx);
        let images = Tensor::stack_rows(&[&s, &t])?;
        let mut domains = vec![DomainLabel::Source; source_idx.len()];
        domains.extend(std::iter::repeat_n(DomainLabel::Target, target_idx.len()));
        Ok(Batch {
            images,
            labels: None,
            domains,
        })
    }
}

/// Rows of `t` at `indices`, in that order.
pub fn gather<T: Scalar>(t: &Tensor<T>, indices: &[usize]) -> Tensor<T> {
    let rows = t.shape()[0];
    let stride = t.len() / rows;
    let mut data = Vec::with_capacity(indices.len() * stride);
    for &i in indices {
        data.extend_from_slice(&t.data()[i * stride..(i + 1) * stride]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = indices.len();
    Tensor::new(data, &shape).expect("gathered rows fill the shape")
}
