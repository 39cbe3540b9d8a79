//! Feature generator, label classifier and domain discriminator networks.
//!
//! A network is a [`NetworkSpec`] (layer chain plus per-example input shape)
//! and its [`Parameters`]. Forward passes are recorded on a caller-owned
//! [`Graph`], so one generator pass can feed both heads.

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Classifier,
    Discriminator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Classifier => "classifier",
            Role::Discriminator => "discriminator",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    /// Valid cross-correlation without bias.
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Dense {
        width: usize,
    },
    Relu,
    Sigmoid,
    MaxPool2,
    Flatten,
}

fn one() -> usize {
    1
}

impl Layer {
    fn name(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::MaxPool2 => "max_pool2",
            Layer::Flatten => "flatten",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub role: Role,
    /// Shape of one example: `[channels, height, width]` or `[features]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// conv(8,3x3) relu pool conv(16,3x3) relu pool flatten dense(F) relu
    pub fn default_generator(extent: usize, feature_width: usize) -> Self {
        NetworkSpec {
            role: Role::Generator,
            input_shape: vec![1, extent, extent],
            layers: vec![
                Layer::Conv {
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Conv {
                    out_channels: 16,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense { width: feature_width },
                Layer::Relu,
            ],
        }
    }

    /// dense(hidden) relu dense(1) sigmoid
    pub fn default_head(role: Role, feature_width: usize, hidden: usize) -> Self {
        NetworkSpec {
            role,
            input_shape: vec![feature_width],
            layers: vec![
                Layer::Dense { width: hidden },
                Layer::Relu,
                Layer::Dense { width: 1 },
                Layer::Sigmoid,
            ],
        }
    }

    /// Per-example output shape, validating the whole chain.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Layer {
                layer: 0,
                kind: "input".into(),
                reason: format!("invalid input shape {shape:?}"),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |reason: String| Error::Layer {
                layer: i,
                kind: layer.name().into(),
                reason,
            };
            shape = match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let [_, h, w] = shape[..] else {
                        return Err(fail(format!("needs [c, h, w] input, got {shape:?}")));
                    };
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(fail("channels, kernel and stride must be positive".into()));
                    }
                    if kernel > h || kernel > w {
                        return Err(fail(format!("kernel {kernel} larger than input {h}x{w}")));
                    }
                    vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                Layer::MaxPool2 => {
                    let [c, h, w] = shape[..] else {
                        return Err(fail(format!("needs [c, h, w] input, got {shape:?}")));
                    };
                    if h < 2 || w < 2 {
                        return Err(fail(format!("input {h}x{w} too small to pool")));
                    }
                    vec![c, h / 2, w / 2]
                }
                Layer::Flatten => vec![shape.iter().product()],
                Layer::Dense { width } => {
                    if shape.len() != 1 {
                        return Err(fail(format!("needs flat input, got {shape:?}")));
                    }
                    if width == 0 {
                        return Err(fail("width must be positive".into()));
                    }
                    vec![width]
                }
                Layer::Relu | Layer::Sigmoid => shape,
            };
        }
        Ok(shape)
    }

    /// Output width; the feature width F for a generator.
    pub fn output_width(&self) -> Result<usize> {
        let shape = self.output_shape()?;
        match shape[..] {
            [w] => Ok(w),
            _ => Err(Error::Layer {
                layer: self.layers.len(),
                kind: "output".into(),
                reason: format!("network must end in a flat output, got {shape:?}"),
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        let width = self.output_width()?;
        if self.role != Role::Generator {
            let ends_in_sigmoid = matches!(self.layers.last(), Some(Layer::Sigmoid));
            if width != 1 || !ends_in_sigmoid {
                return Err(Error::Layer {
                    layer: self.layers.len().saturating_sub(1),
                    kind: self.layers.last().map_or("output", Layer::name).into(),
                    reason: format!("{} must end in a single sigmoid unit", self.role),
                });
            }
        }
        Ok(())
    }
}

/// Generator plus both heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub generator: NetworkSpec,
    pub classifier: NetworkSpec,
    pub discriminator: NetworkSpec,
}

impl Architecture {
    pub fn desk_scale(extent: usize) -> Self {
        Self::with_widths(extent, 64, 32)
    }

    pub fn with_widths(extent: usize, feature_width: usize, hidden: usize) -> Self {
        Architecture {
            generator: NetworkSpec::default_generator(extent, feature_width),
            classifier: NetworkSpec::default_head(Role::Classifier, feature_width, hidden),
            discriminator: NetworkSpec::default_head(Role::Discriminator, feature_width, hidden),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (spec, role) in [
            (&self.generator, Role::Generator),
            (&self.classifier, Role::Classifier),
            (&self.discriminator, Role::Discriminator),
        ] {
            if spec.role != role {
                return Err(Error::Config(format!("{role} slot holds a {} spec", spec.role)));
            }
            spec.validate()?;
        }
        let features = self.generator.output_width()?;
        for head in [&self.classifier, &self.discriminator] {
            if head.input_shape != [features] {
                return Err(Error::Layer {
                    layer: 0,
                    kind: head.role.to_string(),
                    reason: format!(
                        "expects input {:?} but the generator emits {features} features",
                        head.input_shape
                    ),
                });
            }
        }
        Ok(())
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::desk_scale(64)
    }
}

/// Ordered named tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Parameters<T> {
    pub fn from_entries(entries: Vec<(String, Tensor<T>)>) -> Self {
        Parameters { entries }
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    /// `p -= lr * grad` for every tensor that has a gradient.
    pub fn sgd_step(&mut self, grads: &[Option<&Tensor<T>>], lr: T) {
        assert_eq!(grads.len(), self.entries.len(), "one gradient slot per tensor");
        if lr == T::zero() {
            return;
        }
        for ((_, p), g) in self.entries.iter_mut().zip(grads) {
            if let Some(g) = g {
                for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                    *w -= lr * d;
                }
            }
        }
    }

    /// True when every tensor is bitwise identical to `other`'s.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }
}

/// A network's parameter nodes within one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    pub ids: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub spec: NetworkSpec,
    pub params: Parameters<T>,
}

impl<T: Scalar> Network<T> {
    /// Scaled-uniform weights `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`, zero biases.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, "init");
        let mut entries = Vec::new();
        let mut shape = spec.input_shape.clone();
        for (i, layer) in spec.layers.iter().enumerate() {
            match *layer {
                Layer::Conv {
                    out_channels, kernel, ..
                } => {
                    let fan_in = shape[0] * kernel * kernel;
                    let dims = [out_channels, shape[0], kernel, kernel];
                    entries.push((format!("conv{i}.kernel"), uniform(&dims, fan_in, &mut rng)));
                }
                Layer::Dense { width } => {
                    let dims = [shape[0], width];
                    entries.push((format!("dense{i}.weight"), uniform(&dims, shape[0], &mut rng)));
                    entries.push((format!("dense{i}.bias"), Tensor::zeros(&[width])));
                }
                _ => {}
            }
            let prefix = NetworkSpec {
                role: spec.role,
                input_shape: spec.input_shape.clone(),
                layers: spec.layers[..=i].to_vec(),
            };
            shape = prefix.output_shape()?;
        }
        Ok(Network {
            spec: spec.clone(),
            params: Parameters { entries },
        })
    }

    /// Registers the parameters on `graph`; frozen ones become constants.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Bound {
        let ids = self
            .params
            .tensors()
            .map(|t| {
                if trainable {
                    graph.parameter(t.clone())
                } else {
                    graph.constant(t.clone())
                }
            })
            .collect();
        Bound { ids }
    }

    /// Runs the layer chain on a batch node of shape `[B, input_shape..]`.
    pub fn forward(&self, graph: &mut Graph<T>, bound: &Bound, x: NodeId) -> Result<NodeId> {
        let got = graph.value(x).shape();
        if got.len() != self.spec.input_shape.len() + 1 || got[1..] != self.spec.input_shape[..] {
            let mut want = vec![got.first().copied().unwrap_or(0)];
            want.extend_from_slice(&self.spec.input_shape);
            return Err(Error::shape(role_op(self.spec.role), got, &want));
        }
        let mut params = bound.ids.iter().copied();
        let mut h = x;
        for layer in &self.spec.layers {
            h = match *layer {
                Layer::Conv { stride, .. } => {
                    let k = params.next().expect("kernel bound");
                    graph.conv2d(h, k, stride)?
                }
                Layer::Dense { .. } => {
                    let w = params.next().expect("weight bound");
                    let b = params.next().expect("bias bound");
                    graph.dense(h, w, b)?
                }
                Layer::Relu => graph.relu(h)?,
                Layer::Sigmoid => graph.sigmoid(h)?,
                Layer::MaxPool2 => graph.max_pool2(h)?,
                Layer::Flatten => graph.flatten(h)?,
            };
        }
        Ok(h)
    }

    /// Gradient slots for [`Parameters::sgd_step`] from a backward pass.
    pub fn gradients<'a>(&self, bound: &Bound, grads: &'a crate::autodiff::Gradients<T>) -> Vec<Option<&'a Tensor<T>>> {
        bound.ids.iter().map(|&id| grads.get(id)).collect()
    }
}

fn role_op(role: Role) -> &'static str {
    match role {
        Role::Generator => "generator input",
        Role::Classifier => "classifier input",
        Role::Discriminator => "discriminator input",
    }
}

fn uniform<T: Scalar>(dims: &[usize], fan_in: usize, rng: &mut rng::Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = dims.iter().product();
    let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::new(data, dims).expect("dims are positive")
}

/// Generator output `G(x)`, shape `[B, F]`.
pub fn generate_features<T: Scalar>(
    graph: &mut Graph<T>,
    generator: &Network<T>,
    bound: &Bound,
    x: NodeId,
) -> Result<NodeId> {
    generator.forward(graph, bound, x)
}

/// Applies a sigmoid head to features and flattens `[B, 1]` to `[B]`.
pub fn head_scores<T: Scalar>(
    graph: &mut Graph<T>,
    head: &Network<T>,
    bound: &Bound,
    features: NodeId,
) -> Result<NodeId> {
    let out = head.forward(graph, bound, features)?;
    let batch = graph.value(out).shape()[0];
    graph.reshape(out, &[batch])
}

/// `C(G(x))` evaluated without recording gradients.
pub fn predict_label<T: Scalar>(generator: &Network<T>, classifier: &Network<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    predict_with_head(generator, classifier, x)
}

/// `D(G(x))` evaluated without recording gradients.
pub fn predict_domain<T: Scalar>(
    generator: &Network<T>,
    discriminator: &Network<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    predict_with_head(generator, discriminator, x)
}

fn predict_with_head<T: Scalar>(generator: &Network<T>, head: &Network<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let gb = generator.bind(&mut g, false);
    let hb = head.bind(&mut g, false);
    let xin = g.constant(x.clone());
    let feats = generate_features(&mut g, generator, &gb, xin)?;
    let out = head_scores(&mut g, head, &hb, feats)?;
    Ok(g.value(out).clone())
}
