//! UNet and UNet++ networks built from circular convolution blocks, and
//! their checkpoints.
//!
//! Both networks share a four-level encoder (two conv blocks per level,
//! max pooling between levels) and a decoder that upsamples back to full
//! resolution with two conv blocks per level and a final 3 × 3 projection
//! to one channel. UNet++ adds nested skip nodes `x{i}{j}` between encoder
//! and decoder, each a single conv block over the dense concatenation of
//! the earlier nodes on its level and the upsampled node below.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::NormStats;
use crate::error::{Error, Result};
use crate::nn::{
    concat_channels, maxpool2, split_channels, upsample2, upsample2_backward, BatchNorm2d, Conv2d, ConvBlock,
    Layer, MaxPool2, NormMode, Padding, Param, Scalar, Tensor4, DEFAULT_EPSILON, DEFAULT_MOMENTUM,
};
use crate::stacking::{channel_count, TemporalCase};
use crate::training::TrainConfig;

/// Resolution levels; the encoder pools `LEVELS - 1` times.
pub const LEVELS: usize = 4;
/// Grid sides must be divisible by this.
pub const SPATIAL_MULTIPLE: usize = 1 << (LEVELS - 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Unet,
    Unetpp,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Unet => "unet",
            Arch::Unetpp => "unetpp",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unet" => Ok(Arch::Unet),
            "unetpp" | "unet++" => Ok(Arch::Unetpp),
            _ => Err(Error::Config(format!("unknown architecture '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub in_channels: usize,
    pub base_width: usize,
    pub elevation: bool,
    pub case_id: TemporalCase,
    pub padding_mode: Padding,
    pub norm_stats: NormStats,
}

impl ModelConfig {
    pub fn new(arch: Arch, case: TemporalCase, elevation: bool, base_width: usize, norm_stats: NormStats) -> Self {
        ModelConfig {
            arch,
            in_channels: channel_count(&case, elevation),
            base_width,
            elevation,
            case_id: case,
            padding_mode: Padding::CircularBoth,
            norm_stats,
        }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding_mode = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let expected = channel_count(&self.case_id, self.elevation);
        if self.in_channels != expected {
            return Err(Error::Config(format!(
                "case {} with elevation={} needs {expected} input channels, config has {}",
                self.case_id, self.elevation, self.in_channels
            )));
        }
        if self.base_width == 0 {
            return Err(Error::Config("base width must be positive".into()));
        }
        self.norm_stats.validate()
    }
}

/// Where a node sits in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Input,
    Encoder,
    Pool,
    Intermediate,
    NestedUpsample,
    Decoder,
    DecoderUpsample,
    Concat,
    Head,
}

enum Op<T> {
    Input,
    Block(Box<ConvBlock<T>>),
    Pool(MaxPool2),
    Upsample,
    Concat,
    Head(Conv2d<T>),
}

struct Node<T> {
    name: String,
    role: Role,
    op: Op<T>,
    inputs: Vec<usize>,
    channels: usize,
}

/// Layer counts by role, read off the built graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArchitectureSummary {
    pub encoder_convs: usize,
    pub decoder_convs: usize,
    pub intermediate_convs: usize,
    pub maxpools: usize,
    pub decoder_upsamples: usize,
    pub nested_upsamples: usize,
    pub parameters: usize,
}

struct GraphBuilder<'a, T> {
    nodes: Vec<Node<T>>,
    padding: Padding,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> GraphBuilder<'_, T> {
    fn push(&mut self, name: String, role: Role, op: Op<T>, inputs: Vec<usize>, channels: usize) -> usize {
        self.nodes.push(Node {
            name,
            role,
            op,
            inputs,
            channels,
        });
        self.nodes.len() - 1
    }

    fn block(&mut self, name: String, role: Role, input: usize, width: usize) -> usize {
        let c_in = self.nodes[input].channels;
        let conv = Conv2d::kaiming(width, c_in, self.padding, self.rng);
        let norm = BatchNorm2d::new(width)
            .with_running_stats(vec![T::zero(); width], vec![T::one(); width])
            .expect("fresh running stats");
        self.push(name, role, Op::Block(Box::new(ConvBlock::new(conv, norm))), vec![input], width)
    }

    fn pool(&mut self, name: String, input: usize) -> usize {
        let c = self.nodes[input].channels;
        self.push(name, Role::Pool, Op::Pool(MaxPool2::new()), vec![input], c)
    }

    fn upsample(&mut self, name: String, role: Role, input: usize) -> usize {
        let c = self.nodes[input].channels;
        self.push(name, role, Op::Upsample, vec![input], c)
    }

    fn concat(&mut self, name: String, inputs: Vec<usize>) -> usize {
        let c = inputs.iter().map(|&i| self.nodes[i].channels).sum();
        self.push(name, Role::Concat, Op::Concat, inputs, c)
    }

    fn head(&mut self, input: usize) -> usize {
        let c_in = self.nodes[input].channels;
        let conv = Conv2d::kaiming(1, c_in, self.padding, self.rng);
        self.push("head".into(), Role::Head, Op::Head(conv), vec![input], 1)
    }
}

/// A built network with its configuration.
pub struct Model<T> {
    config: ModelConfig,
    nodes: Vec<Node<T>>,
    activations: Vec<Option<Tensor4<T>>>,
}

/// Build a network with deterministic fan-in scaled initialization.
pub fn build_model<T: Scalar>(config: ModelConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder {
        nodes: Vec::new(),
        padding: config.padding_mode,
        rng: &mut rng,
    };
    let w0 = config.base_width;
    let width = |level: usize| w0 << level;

    let input = b.push("input".into(), Role::Input, Op::Input, vec![], config.in_channels);
    let mut encoder = Vec::with_capacity(LEVELS);
    let mut x = input;
    for level in 0..LEVELS {
        if level > 0 {
            x = b.pool(format!("pool{level}"), x);
        }
        x = b.block(format!("enc{level}.0"), Role::Encoder, x, width(level));
        x = b.block(format!("enc{level}.1"), Role::Encoder, x, width(level));
        encoder.push(x);
    }

    // skips[i] lists the nodes on level i that feed the decoder there
    let skips: Vec<Vec<usize>> = match config.arch {
        Arch::Unet => encoder.iter().map(|&e| vec![e]).collect(),
        Arch::Unetpp => {
            let mut grid: Vec<Vec<usize>> = encoder.iter().map(|&e| vec![e]).collect();
            for j in 1..LEVELS {
                for i in 0..LEVELS - j {
                    let below = grid[i + 1][j - 1];
                    let up = b.upsample(format!("x{i}{j}.up"), Role::NestedUpsample, below);
                    let mut srcs = grid[i].clone();
                    srcs.push(up);
                    let cat = b.concat(format!("x{i}{j}.cat"), srcs);
                    let node = b.block(format!("x{i}{j}"), Role::Intermediate, cat, width(i));
                    grid[i].push(node);
                }
            }
            grid
        }
    };

    let mut d = encoder[LEVELS - 1];
    for level in (0..LEVELS - 1).rev() {
        let up = b.upsample(format!("dec{level}.up"), Role::DecoderUpsample, d);
        let mut srcs = skips[level].clone();
        srcs.push(up);
        let cat = b.concat(format!("dec{level}.cat"), srcs);
        d = b.block(format!("dec{level}.0"), Role::Decoder, cat, width(level));
        d = b.block(format!("dec{level}.1"), Role::Decoder, d, width(level));
    }
    b.head(d);

    let nodes = b.nodes;
    let activations = (0..nodes.len()).map(|_| None).collect();
    Ok(Model {
        config,
        nodes,
        activations,
    })
}

impl<T: Scalar> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn summary(&self) -> ArchitectureSummary {
        let count = |f: &dyn Fn(&Node<T>) -> bool| self.nodes.iter().filter(|n| f(n)).count();
        let conv_in = |role: Role| {
            count(&|n: &Node<T>| n.role == role && matches!(n.op, Op::Block(_) | Op::Head(_)))
        };
        ArchitectureSummary {
            encoder_convs: conv_in(Role::Encoder),
            decoder_convs: conv_in(Role::Decoder) + conv_in(Role::Head),
            intermediate_convs: conv_in(Role::Intermediate),
            maxpools: count(&|n| matches!(n.op, Op::Pool(_))),
            decoder_upsamples: count(&|n| n.role == Role::DecoderUpsample),
            nested_upsamples: count(&|n| n.role == Role::NestedUpsample),
            parameters: self.param_count(),
        }
    }

    /// Trainable parameter count (conv weights and biases, norm scales and shifts).
    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match &n.op {
                Op::Block(b) => b.param_count(),
                Op::Head(c) => c.param_count(),
                _ => 0,
            })
            .sum()
    }

    /// Node names in execution order, with roles.
    pub fn layout(&self) -> Vec<(String, Role)> {
        self.nodes.iter().map(|n| (n.name.clone(), n.role)).collect()
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.dims();
        if c != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "model for case {} expects {} input channels, got {c}",
                self.config.case_id, self.config.in_channels
            )));
        }
        if h % SPATIAL_MULTIPLE != 0 || w % SPATIAL_MULTIPLE != 0 {
            return Err(Error::Dimension(format!(
                "grid {h}x{w} is not divisible by {SPATIAL_MULTIPLE}"
            )));
        }
        Ok(())
    }

    fn gather<'a>(values: &'a [Option<Tensor4<T>>], inputs: &[usize]) -> Result<Vec<&'a Tensor4<T>>> {
        inputs
            .iter()
            .map(|&i| {
                values[i]
                    .as_ref()
                    .ok_or_else(|| Error::State(format!("node {i} has no value")))
            })
            .collect()
    }

    /// Recorded forward pass. `mode` selects batch or running statistics.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: NormMode) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        self.activations.iter_mut().for_each(|a| *a = None);
        self.activations[0] = Some(x.clone());
        for k in 1..self.nodes.len() {
            let node = &mut self.nodes[k];
            let ins = Self::gather(&self.activations, &node.inputs)?;
            let y = match &mut node.op {
                Op::Input => unreachable!("input is node 0"),
                Op::Block(b) => {
                    b.set_mode(mode);
                    b.forward(ins[0])?
                }
                Op::Pool(p) => p.forward(ins[0])?,
                Op::Upsample => upsample2(ins[0]),
                Op::Concat => concat_channels(&ins)?,
                Op::Head(c) => c.forward(ins[0])?,
            };
            self.activations[k] = Some(y);
        }
        Ok(self.activations.last().cloned().flatten().expect("head output"))
    }

    /// Eval-mode forward that records nothing and mutates nothing.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut values: Vec<Option<Tensor4<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        // last consumer of each node, so activations can be dropped early
        let mut last_use = vec![0; self.nodes.len()];
        for (k, n) in self.nodes.iter().enumerate() {
            for &i in &n.inputs {
                last_use[i] = k;
            }
        }
        values[0] = Some(x.clone());
        for (k, node) in self.nodes.iter().enumerate().skip(1) {
            let ins = Self::gather(&values, &node.inputs)?;
            let y = match &node.op {
                Op::Input => unreachable!("input is node 0"),
                Op::Block(b) => b.infer(ins[0])?,
                Op::Pool(_) => maxpool2(ins[0])?,
                Op::Upsample => upsample2(ins[0]),
                Op::Concat => concat_channels(&ins)?,
                Op::Head(c) => c.infer(ins[0])?,
            };
            for &i in &node.inputs {
                if last_use[i] == k {
                    values[i] = None;
                }
            }
            values[k] = Some(y);
        }
        Ok(values.pop().flatten().expect("head output"))
    }

    /// Backpropagate `d_out` (gradient of the loss with respect to the
    /// output of the last [`Model::forward`]). Parameter gradients
    /// accumulate; the input gradient is returned.
    pub fn backward(&mut self, d_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let n = self.nodes.len();
        let out_dims = self.activations[n - 1]
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?
            .dims();
        if d_out.dims() != out_dims {
            return Err(Error::Dimension(format!(
                "output gradient {:?} vs output {:?}",
                d_out.dims(),
                out_dims
            )));
        }
        let mut grads: Vec<Option<Tensor4<T>>> = (0..n).map(|_| None).collect();
        grads[n - 1] = Some(d_out.clone());
        for k in (1..n).rev() {
            let Some(g) = grads[k].take() else { continue };
            let node = &mut self.nodes[k];
            let input_grads: Vec<Tensor4<T>> = match &mut node.op {
                Op::Input => unreachable!("input is node 0"),
                Op::Block(b) => vec![b.backward(&g)?],
                Op::Pool(p) => vec![Layer::<T>::backward(p, &g)?],
                Op::Upsample => vec![upsample2_backward(&g)?],
                Op::Concat => {
                    let counts: Vec<usize> = node.inputs.iter().map(|&i| self.activations[i].as_ref().map_or(0, |a| a.channels())).collect();
                    split_channels(&g, &counts)?
                }
                Op::Head(c) => vec![c.backward(&g)?],
            };
            for (&i, gi) in node.inputs.iter().zip(input_grads) {
                match &mut grads[i] {
                    Some(acc) => acc.add_assign(&gi)?,
                    slot => *slot = Some(gi),
                }
            }
        }
        grads[0]
            .take()
            .ok_or_else(|| Error::State("no gradient reached the input".into()))
    }

    /// Trainable parameters in a fixed order with dotted names.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            let prefix = node.name.clone();
            let ps = match &mut node.op {
                Op::Block(b) => b.params_mut(),
                Op::Head(c) => c.params_mut(),
                _ => continue,
            };
            out.extend(ps.into_iter().map(|(n, p)| (format!("{prefix}.{n}"), p)));
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Every stored tensor (parameters and running statistics) by name.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Block(b) => {
                    let p = &node.name;
                    out.push((format!("{p}.conv.weight"), b.conv.weight.shape.clone(), b.conv.weight.value.clone()));
                    out.push((format!("{p}.conv.bias"), b.conv.bias.shape.clone(), b.conv.bias.value.clone()));
                    out.push((format!("{p}.norm.gamma"), b.norm.gamma.shape.clone(), b.norm.gamma.value.clone()));
                    out.push((format!("{p}.norm.beta"), b.norm.beta.shape.clone(), b.norm.beta.value.clone()));
                    let c = b.norm.channels();
                    out.push((format!("{p}.norm.running_mean"), vec![c], b.norm.running_mean().to_vec()));
                    out.push((format!("{p}.norm.running_var"), vec![c], b.norm.running_var().to_vec()));
                }
                Op::Head(c) => {
                    out.push(("head.weight".into(), c.weight.shape.clone(), c.weight.value.clone()));
                    out.push(("head.bias".into(), c.bias.shape.clone(), c.bias.value.clone()));
                }
                _ => {}
            }
        }
        out
    }

    /// Overwrite tensors from `(name, values)` pairs; every stored tensor
    /// must be supplied exactly once with a matching length.
    pub fn load_tensors(&mut self, tensors: &[(String, Vec<T>)]) -> Result<()> {
        let expected = self.named_tensors();
        if tensors.len() != expected.len() {
            return Err(Error::Corruption {
                name: "<all>".into(),
                reason: format!("{} tensors supplied, model has {}", tensors.len(), expected.len()),
            });
        }
        let lookup = |name: &str, len: usize| -> Result<Vec<T>> {
            let (_, v) = tensors.iter().find(|(n, _)| n == name).ok_or_else(|| Error::Corruption {
                name: name.into(),
                reason: "missing".into(),
            })?;
            if v.len() != len {
                return Err(Error::Corruption {
                    name: name.into(),
                    reason: format!("{} values, expected {len}", v.len()),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Corruption {
                    name: name.into(),
                    reason: "non-finite value".into(),
                });
            }
            Ok(v.clone())
        };
        for node in &mut self.nodes {
            let p = node.name.clone();
            match &mut node.op {
                Op::Block(b) => {
                    b.conv.weight.value = lookup(&format!("{p}.conv.weight"), b.conv.weight.len())?;
                    b.conv.bias.value = lookup(&format!("{p}.conv.bias"), b.conv.bias.len())?;
                    b.norm.gamma.value = lookup(&format!("{p}.norm.gamma"), b.norm.gamma.len())?;
                    b.norm.beta.value = lookup(&format!("{p}.norm.beta"), b.norm.beta.len())?;
                    let c = b.norm.channels();
                    let mean = lookup(&format!("{p}.norm.running_mean"), c)?;
                    let var = lookup(&format!("{p}.norm.running_var"), c)?;
                    b.norm.set_running_stats(mean, var).map_err(|e| Error::Corruption {
                        name: format!("{p}.norm.running_var"),
                        reason: e.to_string(),
                    })?;
                }
                Op::Head(c) => {
                    c.weight.value = lookup("head.weight", c.weight.len())?;
                    c.bias.value = lookup("head.bias", c.bias.len())?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Snapshot of every stored tensor, restorable with [`Model::restore`].
    pub fn snapshot(&self) -> Vec<(String, Vec<T>)> {
        self.named_tensors().into_iter().map(|(n, _, v)| (n, v)).collect()
    }

    pub fn restore(&mut self, snapshot: &[(String, Vec<T>)]) -> Result<()> {
        self.load_tensors(snapshot)
    }
}

/// Written into every checkpoint so readers know the fixed choices the
/// network was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub levels: usize,
    pub kernel: String,
    pub activation: String,
    pub upsampling: String,
    pub initialization: String,
    pub batchnorm_momentum: f64,
    pub batchnorm_epsilon: f64,
    pub channel_order: String,
    pub nested_upsampling: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            levels: LEVELS,
            kernel: "3x3 stride 1, wrap-around padding".into(),
            activation: "relu after every conv+batchnorm; none after head".into(),
            upsampling: "nearest 2x".into(),
            initialization: "uniform ±sqrt(6/fan_in) weights, zero bias, gamma 1, beta 0".into(),
            batchnorm_momentum: DEFAULT_MOMENTUM,
            batchnorm_epsilon: DEFAULT_EPSILON,
            channel_order: "ascending month offset, elevation last".into(),
            nested_upsampling: "one parameter-free upsample per nested feed; three resolution transitions".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_ids: Vec<String>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: Option<f64>,
    /// Checkpoint this one was fine-tuned from.
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub training: Option<TrainConfig>,
    pub provenance: Provenance,
    pub conventions: Conventions,
    pub tensors: Vec<TensorEntry>,
}

/// Manifest plus named `f32` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<(String, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, training: Option<TrainConfig>, provenance: Provenance) -> Self {
        let named = model.named_tensors();
        let entries = named
            .iter()
            .map(|(n, shape, _)| TensorEntry {
                name: n.clone(),
                shape: shape.clone(),
                file: format!("{n}.f32"),
            })
            .collect();
        Checkpoint {
            manifest: Manifest {
                format_version: CHECKPOINT_FORMAT_VERSION,
                config: model.config().clone(),
                training,
                provenance,
                conventions: Conventions::default(),
                tensors: entries,
            },
            tensors: named.into_iter().map(|(n, _, v)| (n, v)).collect(),
        }
    }

    pub fn case(&self) -> TemporalCase {
        self.manifest.config.case_id
    }

    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = build_model::<f32>(self.manifest.config.clone(), 0)?;
        model.load_tensors(&self.tensors)?;
        Ok(model)
    }

    /// Write `manifest.json` and one raw little-endian `f32` blob per tensor
    /// into directory `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (entry, (_, values)) in self.manifest.tensors.iter().zip(&self.tensors) {
            let mut bytes = Vec::with_capacity(values.len() * 4);
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let path = dir.join(&entry.file);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Checkpoint> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Corruption {
                name: MANIFEST_FILE.into(),
                reason: format!("unsupported format version {}", manifest.format_version),
            });
        }
        manifest.config.validate()?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in &manifest.tensors {
            let blob = dir.join(&entry.file);
            let bytes = std::fs::read(&blob).map_err(|e| Error::Corruption {
                name: entry.name.clone(),
                reason: format!("{}: {e}", blob.display()),
            })?;
            let expected = entry.shape.iter().product::<usize>() * 4;
            if bytes.len() != expected {
                return Err(Error::Corruption {
                    name: entry.name.clone(),
                    reason: format!("blob has {} bytes, shape needs {expected}", bytes.len()),
                });
            }
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((entry.name.clone(), values));
        }
        let ckpt = Checkpoint { manifest, tensors };
        // shapes must agree with the architecture the manifest describes
        let reference = build_model::<f32>(ckpt.manifest.config.clone(), 0)?;
        for (name, shape, _) in reference.named_tensors() {
            match ckpt.manifest.tensors.iter().find(|e| e.name == name) {
                Some(e) if e.shape == shape => {}
                Some(e) => {
                    return Err(Error::Corruption {
                        name,
                        reason: format!("shape {:?}, architecture needs {shape:?}", e.shape),
                    })
                }
                None => {
                    return Err(Error::Corruption {
                        name,
                        reason: "missing from manifest".into(),
                    })
                }
            }
        }
        Ok(ckpt)
    }
}

pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::from_model(model, None, Provenance::default()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    Checkpoint::load(path)?.to_model()
}
