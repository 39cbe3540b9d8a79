//! Self-describing model checkpoints.
//!
//! JSON container holding the format version, scalar type, training seed and
//! every network's spec with its named tensors. Tensor elements are stored
//! as little-endian `f64` bit patterns (base64), so save/load is bit-exact.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec, Parameters, Role};
use crate::scalar::Scalar;
use crate::training::{ModelKind, TrainedModel};

pub const FORMAT: &str = "difl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    scalar: String,
    kind: ModelKind,
    seed: u64,
    networks: Vec<StoredNetwork>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredNetwork {
    spec: NetworkSpec,
    tensors: Vec<StoredTensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredTensor {
    name: String,
    shape: Vec<usize>,
    data: String,
}

/// The networks of a trained model, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub kind: ModelKind,
    pub seed: u64,
    pub generator: Network<T>,
    pub classifier: Network<T>,
    pub discriminator: Option<Network<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn of(model: &TrainedModel<T>) -> Self {
        Checkpoint {
            kind: model.kind,
            seed: model.config.seed,
            generator: model.generator.clone(),
            classifier: model.classifier.clone(),
            discriminator: model.discriminator.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let networks = std::iter::once(&self.generator)
            .chain(std::iter::once(&self.classifier))
            .chain(self.discriminator.iter())
            .map(|net| StoredNetwork {
                spec: net.spec.clone(),
                tensors: net
                    .params
                    .entries()
                    .iter()
                    .map(|(name, t)| StoredTensor {
                        name: name.clone(),
                        shape: t.shape().to_vec(),
                        data: encode(t.data()),
                    })
                    .collect(),
            })
            .collect();
        let c = Container {
            format: FORMAT.into(),
            version: VERSION,
            scalar: T::NAME.into(),
            kind: self.kind,
            seed: self.seed,
            networks,
        };
        serde_json::to_string_pretty(&c).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Container = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format `{}`)", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.scalar != T::NAME {
            return Err(Error::Checkpoint(format!(
                "stored as {} but loading as {}",
                c.scalar,
                T::NAME
            )));
        }
        let mut generator = None;
        let mut classifier = None;
        let mut discriminator = None;
        for stored in c.networks {
            let entries = stored
                .tensors
                .into_iter()
                .map(|st| {
                    let data = decode::<T>(&st.data)?;
                    Ok((st.name, Tensor::new(data, &st.shape)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let net = Network {
                spec: stored.spec,
                params: Parameters::from_entries(entries),
            };
            let reference = Network::<T>::build(&net.spec, 0)?;
            let layout_ok = reference.params.entries().len() == net.params.entries().len()
                && reference
                    .params
                    .entries()
                    .iter()
                    .zip(net.params.entries())
                    .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape());
            if !layout_ok {
                return Err(Error::Checkpoint(format!(
                    "{} tensors do not match its spec",
                    net.spec.role
                )));
            }
            let slot = match net.spec.role {
                Role::Generator => &mut generator,
                Role::Classifier => &mut classifier,
                Role::Discriminator => &mut discriminator,
            };
            if slot.replace(net).is_some() {
                return Err(Error::Checkpoint("duplicate network role".into()));
            }
        }
        Ok(Checkpoint {
            kind: c.kind,
            seed: c.seed,
            generator: generator.ok_or_else(|| Error::Checkpoint("missing generator".into()))?,
            classifier: classifier.ok_or_else(|| Error::Checkpoint("missing classifier".into()))?,
            discriminator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }
}

fn encode<T: Scalar>(data: &[T]) -> String {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode<T: Scalar>(text: &str) -> Result<Vec<T>> {
    let bytes = STANDARD.decode(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(
            "tensor payload is not a whole number of f64 values".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}
