//! Layer graphs, the canonical VGG-style radar classifier, and its forward pass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Uniform};
use sha2::{Digest, Sha256};

use super::layers::{maxpool1d, relu, softmax, Conv1d, Dense, NonLocal};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    NonLocal {
        channels: usize,
    },
    MaxPool1d {
        size: usize,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Softmax,
}

impl LayerKind {
    fn describe(&self) -> String {
        match self {
            LayerKind::Conv1d {
                in_ch,
                out_ch,
                kernel,
                padding,
            } => format!("conv1d({in_ch},{out_ch},{kernel},{padding})"),
            LayerKind::Relu => "relu".into(),
            LayerKind::NonLocal { channels } => format!("nonlocal({channels})"),
            LayerKind::MaxPool1d { size } => format!("maxpool1d({size})"),
            LayerKind::Flatten => "flatten".into(),
            LayerKind::Dense {
                in_features,
                out_features,
            } => format!("dense({in_features},{out_features})"),
            LayerKind::Softmax => "softmax".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

/// Activation shape of one batch row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl Shape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Seq { len, channels } => vec![len, channels],
            Shape::Flat(n) => vec![n],
        }
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_len: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

fn layer(name: &str, kind: LayerKind) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        kind,
    }
}

impl Architecture {
    /// Four conv blocks of {32, 64, 128, 128} filters (kernel 3, same padding,
    /// pool 2), non-local blocks after the second conv of blocks 1 and 2, then
    /// Dense(128) and a 2-way softmax over a `[1024, 2]` input.
    pub fn canonical() -> Self {
        let mut layers = Vec::new();
        let widths = [(2, 32, true), (32, 64, true), (64, 128, false), (128, 128, false)];
        for (b, &(cin, cout, nlb)) in widths.iter().enumerate() {
            let p = format!("block{}", b + 1);
            layers.push(layer(
                &format!("{p}.conv1"),
                LayerKind::Conv1d {
                    in_ch: cin,
                    out_ch: cout,
                    kernel: 3,
                    padding: 1,
                },
            ));
            layers.push(layer(&format!("{p}.relu1"), LayerKind::Relu));
            layers.push(layer(
                &format!("{p}.conv2"),
                LayerKind::Conv1d {
                    in_ch: cout,
                    out_ch: cout,
                    kernel: 3,
                    padding: 1,
                },
            ));
            layers.push(layer(&format!("{p}.relu2"), LayerKind::Relu));
            if nlb {
                layers.push(layer(&format!("{p}.nlb"), LayerKind::NonLocal { channels: cout }));
            }
            layers.push(layer(&format!("{p}.pool"), LayerKind::MaxPool1d { size: 2 }));
        }
        layers.push(layer("head.flatten", LayerKind::Flatten));
        layers.push(layer(
            "head.dense1",
            LayerKind::Dense {
                in_features: 64 * 128,
                out_features: 128,
            },
        ));
        layers.push(layer("head.relu", LayerKind::Relu));
        layers.push(layer(
            "head.dense2",
            LayerKind::Dense {
                in_features: 128,
                out_features: 2,
            },
        ));
        layers.push(layer("head.softmax", LayerKind::Softmax));
        Self {
            input_len: 1024,
            input_channels: 2,
            layers,
        }
    }

    /// `input(L,C);name=kind(args);...`; its SHA-256 is the architecture hash.
    pub fn describe(&self) -> String {
        let mut s = format!("input({},{})", self.input_len, self.input_channels);
        for l in &self.layers {
            let _ = write!(s, ";{}={}", l.name, l.kind.describe());
        }
        s
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.describe().as_bytes()).into()
    }

    /// Output shape after every layer, or a shape error naming the first incompatible layer.
    pub fn shape_chain(&self) -> Result<Vec<Shape>> {
        let mut cur = Shape::Seq {
            len: self.input_len,
            channels: self.input_channels,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let bad = |msg: String| Error::Shape {
                layer: l.name.clone(),
                msg,
            };
            cur = match (&l.kind, cur) {
                (
                    LayerKind::Conv1d {
                        in_ch,
                        out_ch,
                        kernel,
                        padding,
                    },
                    Shape::Seq { len, channels },
                ) => {
                    if *in_ch != channels {
                        return Err(bad(format!("expects {in_ch} input channels, got {channels}")));
                    }
                    if len + 2 * padding < *kernel {
                        return Err(bad(format!("kernel {kernel} longer than padded input {len}")));
                    }
                    Shape::Seq {
                        len: len + 2 * padding + 1 - kernel,
                        channels: *out_ch,
                    }
                }
                (LayerKind::NonLocal { channels: c }, Shape::Seq { len, channels }) => {
                    if *c != channels {
                        return Err(bad(format!("expects {c} channels, got {channels}")));
                    }
                    if c % 2 != 0 {
                        return Err(Error::Config(format!(
                            "non-local layer `{}` needs an even channel count, got {c}",
                            l.name
                        )));
                    }
                    Shape::Seq { len, channels }
                }
                (LayerKind::MaxPool1d { size }, Shape::Seq { len, channels }) => {
                    if *size == 0 || len < *size {
                        return Err(bad(format!("pool {size} on length {len}")));
                    }
                    Shape::Seq {
                        len: len / size,
                        channels,
                    }
                }
                (LayerKind::Flatten, s) => Shape::Flat(s.numel()),
                (
                    LayerKind::Dense {
                        in_features,
                        out_features,
                    },
                    Shape::Flat(n),
                ) => {
                    if *in_features != n {
                        return Err(bad(format!("expects {in_features} inputs, got {n}")));
                    }
                    Shape::Flat(*out_features)
                }
                (LayerKind::Relu | LayerKind::Softmax, s) => s,
                (kind, s) => {
                    return Err(bad(format!("{} cannot follow shape {:?}", kind.describe(), s.dims())));
                }
            };
            out.push(cur);
        }
        Ok(out)
    }

    /// Parameter tensor names and dims in file order.
    pub fn parameter_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        for l in &self.layers {
            match &l.kind {
                LayerKind::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => {
                    specs.push((format!("{}.weight", l.name), vec![*out_ch, *in_ch, *kernel]));
                    specs.push((format!("{}.bias", l.name), vec![*out_ch]));
                }
                LayerKind::NonLocal { channels } => {
                    let inner = channels / 2;
                    for (part, i, o) in [
                        ("theta", *channels, inner),
                        ("phi", *channels, inner),
                        ("g", *channels, inner),
                        ("wz", inner, *channels),
                    ] {
                        specs.push((format!("{}.{part}.weight", l.name), vec![o, i, 1]));
                        specs.push((format!("{}.{part}.bias", l.name), vec![o]));
                    }
                }
                LayerKind::Dense {
                    in_features,
                    out_features,
                } => {
                    specs.push((format!("{}.weight", l.name), vec![*out_features, *in_features]));
                    specs.push((format!("{}.bias", l.name), vec![*out_features]));
                }
                _ => {}
            }
        }
        specs
    }
}

fn take_param(
    map: &mut BTreeMap<String, Tensor>,
    layer: &str,
    name: String,
    dims: Vec<usize>,
) -> Result<Vec<f32>> {
    let t = map.remove(&name).ok_or_else(|| Error::Shape {
        layer: layer.to_string(),
        msg: format!("missing tensor `{name}`"),
    })?;
    if t.dims != dims {
        return Err(Error::Shape {
            layer: layer.to_string(),
            msg: format!("tensor `{name}` has dims {:?}, expected {dims:?}", t.dims),
        });
    }
    Ok(t.data)
}

fn take_conv(
    map: &mut BTreeMap<String, Tensor>,
    layer: &str,
    prefix: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    padding: usize,
) -> Result<Conv1d> {
    let w = take_param(map, layer, format!("{prefix}.weight"), vec![out_ch, in_ch, kernel])?;
    let b = take_param(map, layer, format!("{prefix}.bias"), vec![out_ch])?;
    Conv1d::new(in_ch, out_ch, kernel, padding, w, b)
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv1d(Conv1d),
    Relu,
    NonLocal(NonLocal),
    MaxPool1d(usize),
    Flatten,
    Dense(Dense),
    Softmax,
}

/// A loaded network: architecture plus parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    arch: Architecture,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    /// Fail with [`Error::Numeric`] when an activation is NaN or infinite.
    pub check_finite: bool,
}

impl CnnModel {
    /// Builds a model from named tensors; every parameter of `arch` must be
    /// present with its exact dims, and nothing else.
    pub fn from_tensors(arch: Architecture, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let shapes = arch.shape_chain()?;
        let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, t) in tensors {
            if by_name.insert(name.clone(), t).is_some() {
                return Err(Error::Shape {
                    layer: name,
                    msg: "duplicate tensor".into(),
                });
            }
        }
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            let name = spec.name.as_str();
            layers.push(match spec.kind {
                LayerKind::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                    padding,
                } => Layer::Conv1d(take_conv(&mut by_name, name, name, in_ch, out_ch, kernel, padding)?),
                LayerKind::NonLocal { channels } => {
                    let inner = channels / 2;
                    let mut part = |p: &str, i, o| {
                        take_conv(&mut by_name, name, &format!("{name}.{p}"), i, o, 1, 0)
                    };
                    let theta = part("theta", channels, inner)?;
                    let phi = part("phi", channels, inner)?;
                    let g = part("g", channels, inner)?;
                    let wz = part("wz", inner, channels)?;
                    Layer::NonLocal(NonLocal::new(channels, theta, phi, g, wz)?)
                }
                LayerKind::Dense {
                    in_features,
                    out_features,
                } => {
                    let w = take_param(&mut by_name, name, format!("{name}.weight"), vec![out_features, in_features])?;
                    let b = take_param(&mut by_name, name, format!("{name}.bias"), vec![out_features])?;
                    Layer::Dense(Dense::new(in_features, out_features, w, b)?)
                }
                LayerKind::Relu => Layer::Relu,
                LayerKind::MaxPool1d { size } => Layer::MaxPool1d(size),
                LayerKind::Flatten => Layer::Flatten,
                LayerKind::Softmax => Layer::Softmax,
            });
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Shape {
                layer: extra.clone(),
                msg: "tensor not used by the architecture".into(),
            });
        }
        Ok(Self {
            arch,
            layers,
            shapes,
            check_finite: cfg!(debug_assertions),
        })
    }

    /// Every parameter set to `value`.
    pub fn constant(arch: Architecture, value: f32) -> Result<Self> {
        let tensors = arch
            .parameter_specs()
            .into_iter()
            .map(|(name, dims)| {
                let n = dims.iter().product();
                (name, Tensor { dims, data: vec![value; n] })
            })
            .collect();
        Self::from_tensors(arch, tensors)
    }

    /// He-uniform weights and zero biases from a seeded generator.
    pub fn random(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let tensors = arch
            .parameter_specs()
            .into_iter()
            .map(|(name, dims)| {
                let n: usize = dims.iter().product();
                let data = if name.ends_with(".bias") {
                    vec![0.0; n]
                } else {
                    let fan_in: usize = dims[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                };
                (name, Tensor { dims, data })
            })
            .collect();
        Self::from_tensors(arch, tensors)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Parameters in file order.
    pub fn tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        let push_conv = |out: &mut Vec<(String, Tensor)>, prefix: &str, c: &Conv1d| {
            out.push((
                format!("{prefix}.weight"),
                Tensor {
                    dims: vec![c.out_ch, c.in_ch, c.kernel],
                    data: c.weight.clone(),
                },
            ));
            out.push((
                format!("{prefix}.bias"),
                Tensor {
                    dims: vec![c.out_ch],
                    data: c.bias.clone(),
                },
            ));
        };
        for (spec, layer) in self.arch.layers.iter().zip(&self.layers) {
            match layer {
                Layer::Conv1d(c) => push_conv(&mut out, &spec.name, c),
                Layer::NonLocal(n) => {
                    for (part, c) in [("theta", &n.theta), ("phi", &n.phi), ("g", &n.g), ("wz", &n.wz)] {
                        push_conv(&mut out, &format!("{}.{part}", spec.name), c);
                    }
                }
                Layer::Dense(d) => {
                    out.push((
                        format!("{}.weight", spec.name),
                        Tensor {
                            dims: vec![d.out_features, d.in_features],
                            data: d.weight.clone(),
                        },
                    ));
                    out.push((
                        format!("{}.bias", spec.name),
                        Tensor {
                            dims: vec![d.out_features],
                            data: d.bias.clone(),
                        },
                    ));
                }
                _ => {}
            }
        }
        out
    }

    /// The non-local layer called `name`, if any.
    pub fn nonlocal(&self, name: &str) -> Option<&NonLocal> {
        self.arch
            .layers
            .iter()
            .zip(&self.layers)
            .find_map(|(s, l)| match l {
                Layer::NonLocal(n) if s.name == name => Some(n),
                _ => None,
            })
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let want = [self.arch.input_len, self.arch.input_channels];
        if batch.dims.len() != 3 || batch.dims[1..] != want || batch.dims[0] == 0 {
            return Err(Error::Shape {
                layer: "input".into(),
                msg: format!(
                    "batch dims {:?}, expected [b >= 1, {}, {}]",
                    batch.dims, want[0], want[1]
                ),
            });
        }
        Ok(batch.dims[0])
    }

    fn run_row(
        &self,
        row: &[f32],
        mut trace: Option<&mut Vec<Vec<f32>>>,
    ) -> Result<Vec<f32>> {
        let mut x = row.to_vec();
        let mut shape = Shape::Seq {
            len: self.arch.input_len,
            channels: self.arch.input_channels,
        };
        for ((spec, layer), next) in self.arch.layers.iter().zip(&self.layers).zip(&self.shapes) {
            x = match (layer, shape) {
                (Layer::Conv1d(c), Shape::Seq { len, .. }) => c.forward(&x, len),
                (Layer::NonLocal(n), Shape::Seq { len, .. }) => n.forward(&x, len),
                (Layer::MaxPool1d(size), Shape::Seq { len, channels }) => {
                    maxpool1d(&x, len, channels, *size)
                }
                (Layer::Dense(d), Shape::Flat(_)) => d.forward(&x),
                (Layer::Relu, _) => {
                    relu(&mut x);
                    x
                }
                (Layer::Softmax, _) => softmax(&x),
                (Layer::Flatten, _) => x,
                _ => unreachable!("shape chain validated at construction"),
            };
            shape = *next;
            if self.check_finite && x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: spec.name.clone(),
                });
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(x.clone());
            }
        }
        Ok(x)
    }

    /// `[b, L, C]` in, final activations `[b, ...]` out (for the canonical model, `[b, 2]`).
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        let out_shape = *self.shapes.last().expect("non-empty architecture");
        let mut data = Vec::with_capacity(b * out_shape.numel());
        for i in 0..b {
            data.extend(self.run_row(batch.row(i), None)?);
        }
        let mut dims = vec![b];
        dims.extend(out_shape.dims());
        Tensor::new(dims, data)
    }

    /// Activations after every layer, named after the layer, each `[b, ...]`.
    pub fn forward_traced(&self, batch: &Tensor) -> Result<Vec<(String, Tensor)>> {
        let b = self.check_batch(batch)?;
        let mut per_layer: Vec<Vec<f32>> = vec![Vec::new(); self.layers.len()];
        for i in 0..b {
            let mut trace = Vec::with_capacity(self.layers.len());
            self.run_row(batch.row(i), Some(&mut trace))?;
            for (acc, t) in per_layer.iter_mut().zip(trace) {
                acc.extend(t);
            }
        }
        self.arch
            .layers
            .iter()
            .zip(per_layer)
            .zip(&self.shapes)
            .map(|((spec, data), shape)| {
                let mut dims = vec![b];
                dims.extend(shape.dims());
                Ok((spec.name.clone(), Tensor::new(dims, data)?))
            })
            .collect()
    }
}

/// Runs `model` on a `[b, 1024, 2]` batch and returns `[b, 2]` class probabilities.
pub fn cnn_forward(model: &CnnModel, batch: &Tensor) -> Result<Tensor> {
    model.forward(batch)
}
