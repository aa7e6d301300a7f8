//! Graph builders for the three denoising networks.
//!
//! A [`ModelGraph`] is an ordered list of [`LayerSpec`]s (a DAG whose
//! edges point only backwards) plus a named parameter store. All models
//! take a single-channel `(N, 1, H, W)` image batch and return a tensor of
//! the same shape.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_arg, shape_err, Error, Result};
use crate::exec::{Eager, Exec};
use crate::ops::{self, BatchStats};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::Mode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Architecture {
    CnnDae,
    Cadtra,
    Dcmiednet,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::CnnDae, Architecture::Cadtra, Architecture::Dcmiednet];

    /// Stable identifier used in file names, configs and checkpoints.
    pub fn id(self) -> &'static str {
        match self {
            Architecture::CnnDae => "cnn_dae",
            Architecture::Cadtra => "cadtra",
            Architecture::Dcmiednet => "dcmiednet",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::CnnDae => "CNN-DAE",
            Architecture::Cadtra => "CADTra",
            Architecture::Dcmiednet => "DCMIEDNet",
        }
    }

    /// Reference total parameter count at full width.
    pub fn reference_param_count(self) -> usize {
        match self {
            Architecture::CnnDae => 74_497,
            Architecture::Cadtra => 196_293,
            Architecture::Dcmiednet => 1_493_024,
        }
    }

    /// Both spatial dimensions must be multiples of this.
    pub fn spatial_multiple(self) -> usize {
        match self {
            Architecture::CnnDae => 4,
            Architecture::Cadtra | Architecture::Dcmiednet => 1,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| s.eq_ignore_ascii_case(a.id()) || s.eq_ignore_ascii_case(a.display_name()))
            .ok_or_else(|| invalid_arg!("unknown architecture {:?} (expected cnn_dae, cadtra or dcmiednet)", s))
    }
}

/// Channel-width multiplier, a reduced fraction in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WidthScale {
    num: u32,
    den: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl WidthScale {
    pub const FULL: WidthScale = WidthScale { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(invalid_arg!("width scale must be in (0, 1], got {}/{}", num, den));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    /// Recovers the fraction from its `f64` value (denominators up to 1024).
    pub fn from_f64(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(invalid_arg!("width scale must be in (0, 1], got {}", value));
        }
        (1..=1024u32)
            .find_map(|den| {
                let num = libm::round(value * den as f64);
                (libm::fabs(num / den as f64 - value) < 1e-12).then_some((num as u32, den))
            })
            .map(|(num, den)| Self::new(num, den))
            .unwrap_or_else(|| Err(invalid_arg!("width scale {} is not a simple fraction", value)))
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    /// Scales a channel count; the result must be a positive integer.
    pub fn apply(self, channels: usize) -> Result<usize> {
        let scaled = channels * self.num as usize;
        if scaled % self.den as usize != 0 || scaled < self.den as usize {
            return Err(invalid_arg!("width scale {} does not map {} channels to a positive integer", self, channels));
        }
        Ok(scaled / self.den as usize)
    }
}

impl Default for WidthScale {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for WidthScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthScale {
    type Err = Error;

    /// Accepts `"1/4"` or `"0.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let parse = |p: &str| p.trim().parse::<u32>().map_err(|_| invalid_arg!("bad width scale {:?}", s));
            return Self::new(parse(n)?, parse(d)?);
        }
        let value: f64 = s.parse().map_err(|_| invalid_arg!("bad width scale {:?}", s))?;
        Self::from_f64(value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Input,
    Conv { filters: usize, kernel: usize, dilation: usize },
    ConvTranspose { filters: usize, kernel: usize },
    MaxPool,
    Upsample,
    BatchNorm,
    Relu,
    Sigmoid,
    Concat,
    Subtract,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Named parameters in creation order. Batch-norm running statistics are
/// stored here too, as non-trainable entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn find(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of stored scalars, trainable or not.
    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| self.params[i].trainable).collect()
    }

    /// Mutable data of the parameters at `indices`, in that order.
    pub fn data_mut(&mut self, indices: &[usize]) -> Vec<&mut [f32]> {
        let mut slots: Vec<Option<&mut [f32]>> = self.params.iter_mut().map(|p| Some(p.tensor.data_mut())).collect();
        indices.iter().map(|&i| slots[i].take().expect("duplicate parameter index")).collect()
    }

    /// Copies values from `other`, which must hold the same names and shapes.
    pub fn assign(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(shape_err!("parameter stores differ in size"));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.tensor.shape() != src.tensor.shape() {
                return Err(shape_err!("parameter {} does not match {}", dst.name, src.name));
            }
            dst.tensor = src.tensor.clone();
        }
        Ok(())
    }

    fn push(&mut self, name: String, tensor: Tensor, trainable: bool) -> usize {
        self.params.push(Param { name, tensor, trainable });
        self.params.len() - 1
    }
}

/// Resolved connectivity of one layer.
#[derive(Clone, Debug, PartialEq)]
struct Wiring {
    inputs: Vec<usize>,
    params: Vec<usize>,
    channels: usize,
}

/// Per-layer and total parameter counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub per_layer: Vec<(String, usize)>,
}

impl ParamCount {
    pub fn layer(&self, name: &str) -> Option<usize> {
        self.per_layer.iter().find(|(n, _)| n == name).map(|&(_, c)| c)
    }
}

/// Channel widths of DCMIEDNet before width scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DcmiednetWidths {
    pub subnet1: usize,
    pub subnet2: usize,
    pub compression: usize,
}

impl Default for DcmiednetWidths {
    fn default() -> Self {
        Self { subnet1: 64, subnet2: 48, compression: 32 }
    }
}

/// SubNet1 layers (1-based) that use dilation 2.
pub const DCMIEDNET_DILATED_LAYERS: [usize; 4] = [2, 5, 9, 12];
pub const DCMIEDNET_SUBNET_DEPTH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    architecture: Architecture,
    width_scale: WidthScale,
    layers: Vec<LayerSpec>,
    wiring: Vec<Wiring>,
    params: ParamStore,
}

/// Result of a forward pass through a model graph.
#[derive(Debug)]
pub struct Forward<V> {
    pub output: V,
    /// Parameter store index and recorded value for every parameter used.
    pub params: Vec<(usize, V)>,
    /// Batch statistics of every batch-norm layer run in train mode.
    pub batch_stats: Vec<(usize, BatchStats)>,
}

impl ModelGraph {
    pub fn build(architecture: Architecture, width_scale: WidthScale, seed: u64) -> Result<Self> {
        match architecture {
            Architecture::CnnDae => build_cnn_dae(width_scale, seed),
            Architecture::Cadtra => build_cadtra(width_scale, seed),
            Architecture::Dcmiednet => build_dcmiednet(width_scale, seed),
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn width_scale(&self) -> WidthScale {
        self.width_scale
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Output channel count of each layer, in layer order.
    pub fn channels(&self) -> Vec<usize> {
        self.wiring.iter().map(|w| w.channels).collect()
    }

    /// Counts every stored scalar, including batch-norm running statistics,
    /// so a batch-norm layer reports four values per channel.
    pub fn param_count(&self) -> ParamCount {
        let per_layer: Vec<(String, usize)> = self
            .layers
            .iter()
            .zip(&self.wiring)
            .map(|(l, w)| (l.name.clone(), w.params.iter().map(|&p| self.params.get(p).tensor.numel()).sum()))
            .collect();
        ParamCount { total: per_layer.iter().map(|(_, c)| c).sum(), per_layer }
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.numel()).sum()
    }

    pub fn check_input(&self, batch: &Tensor) -> Result<()> {
        let [_, c, h, w] = batch.dims4()?;
        if c != 1 {
            return Err(shape_err!("{} expects single-channel images, got {} channels", self.architecture.display_name(), c));
        }
        let m = self.architecture.spatial_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(shape_err!(
                "{} needs spatial dimensions divisible by {}, got {}x{}",
                self.architecture.display_name(),
                m,
                h,
                w
            ));
        }
        Ok(())
    }

    /// Runs the graph on `exec`, calling `visit` with each layer's output.
    pub fn forward_with<E: Exec>(
        &self,
        exec: &mut E,
        batch: Tensor,
        mode: Mode,
        mut visit: impl FnMut(&LayerSpec, &Tensor),
    ) -> Result<Forward<E::Value>> {
        self.check_input(&batch)?;
        let count = self.layers.len();
        let mut remaining = vec![0usize; count];
        for w in &self.wiring {
            for &i in &w.inputs {
                remaining[i] += 1;
            }
        }
        remaining[count - 1] += 1;

        let mut values: Vec<Option<E::Value>> = (0..count).map(|_| None).collect();
        let mut params = Vec::new();
        let mut batch_stats = Vec::new();
        let mut batch = Some(batch);

        for (i, (spec, wiring)) in self.layers.iter().zip(&self.wiring).enumerate() {
            let input = |k: usize| values[wiring.inputs[k]].as_ref().expect("layer input already released");
            let param = |exec: &mut E, k: usize| {
                let p = self.params.get(wiring.params[k]);
                exec.parameter(&p.tensor, p.trainable)
            };
            let out = match spec.kind {
                LayerKind::Input => exec.input(batch.take().expect("graph has a single input")),
                LayerKind::Conv { dilation, .. } => {
                    let (w, b) = (param(exec, 0), param(exec, 1));
                    let y = exec.conv2d(input(0), &w, &b, dilation)?;
                    params.extend([(wiring.params[0], w), (wiring.params[1], b)]);
                    y
                }
                LayerKind::ConvTranspose { .. } => {
                    let (w, b) = (param(exec, 0), param(exec, 1));
                    let y = exec.conv_transpose2d(input(0), &w, &b)?;
                    params.extend([(wiring.params[0], w), (wiring.params[1], b)]);
                    y
                }
                LayerKind::MaxPool => exec.maxpool2d(input(0))?,
                LayerKind::Upsample => exec.upsample2x(input(0))?,
                LayerKind::BatchNorm => {
                    let (g, b) = (param(exec, 0), param(exec, 1));
                    let mean = &self.params.get(wiring.params[2]).tensor;
                    let var = &self.params.get(wiring.params[3]).tensor;
                    let (y, stats) = exec.batchnorm2d(input(0), &g, &b, mean, var, mode)?;
                    if let Some(stats) = stats {
                        batch_stats.push((i, stats));
                    }
                    params.extend([(wiring.params[0], g), (wiring.params[1], b)]);
                    y
                }
                LayerKind::Relu => exec.relu(input(0)),
                LayerKind::Sigmoid => exec.sigmoid(input(0)),
                LayerKind::Concat => {
                    let xs: Vec<&E::Value> = (0..wiring.inputs.len()).map(input).collect();
                    exec.concat(&xs)?
                }
                LayerKind::Subtract => exec.sub(input(0), input(1))?,
            };
            visit(spec, exec.tensor(&out));
            values[i] = Some(out);
            for &j in &wiring.inputs {
                remaining[j] -= 1;
                if remaining[j] == 0 {
                    values[j] = None;
                }
            }
        }

        let output = values[count - 1].take().expect("graph output");
        Ok(Forward { output, params, batch_stats })
    }

    /// Train-mode forward pass recorded on `tape`. Batch-norm running
    /// statistics are updated from the batch.
    pub fn forward_train(&mut self, tape: &mut Tape, batch: Tensor) -> Result<Forward<Var>> {
        let fwd = self.forward_with(tape, batch, Mode::Train, |_, _| {})?;
        for (layer, stats) in &fwd.batch_stats {
            let p = &self.wiring[*layer].params;
            let (mean_idx, var_idx) = (p[2], p[3]);
            let mut mean = core::mem::replace(&mut self.params.params[mean_idx].tensor, Tensor::scalar(0.0));
            let result = ops::update_running_stats(&mut mean, &mut self.params.params[var_idx].tensor, stats);
            self.params.params[mean_idx].tensor = mean;
            result?;
        }
        Ok(fwd)
    }

    /// Eval-mode forward pass without recording. DCMIEDNet's residual
    /// output is clamped to `[0, 1]`.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut out = self.forward_with(&mut Eager, batch.clone(), Mode::Eval, |_, _| {})?.output;
        if self.architecture == Architecture::Dcmiednet {
            for v in out.data_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }

    /// Output shape of every layer for an input of the given size.
    pub fn layer_shapes(&self, batch: usize, height: usize, width: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        self.forward_with(&mut Eager, Tensor::zeros(&[batch, 1, height, width]), Mode::Eval, |l, t| {
            shapes.push((l.name.clone(), t.shape().to_vec()))
        })?;
        Ok(shapes)
    }
}

struct GraphBuilder {
    layers: Vec<LayerSpec>,
    wiring: Vec<Wiring>,
    names: BTreeMap<String, usize>,
    params: ParamStore,
    rng: ChaCha8Rng,
    scale: WidthScale,
}

impl GraphBuilder {
    fn new(scale: WidthScale, seed: u64) -> Self {
        let mut b = Self {
            layers: Vec::new(),
            wiring: Vec::new(),
            names: BTreeMap::new(),
            params: ParamStore::default(),
            rng: rng::seeded(seed),
            scale,
        };
        b.layers.push(LayerSpec { name: "input_layer".to_string(), kind: LayerKind::Input, inputs: Vec::new() });
        b.wiring.push(Wiring { inputs: Vec::new(), params: Vec::new(), channels: 1 });
        b.names.insert("input_layer".to_string(), 0);
        b
    }

    const INPUT: usize = 0;

    fn scaled(&self, channels: usize) -> Result<usize> {
        self.scale.apply(channels)
    }

    fn add(&mut self, name: &str, kind: LayerKind, inputs: &[usize], params: Vec<usize>, channels: usize) -> Result<usize> {
        if self.names.contains_key(name) {
            return Err(invalid_arg!("duplicate layer name {}", name));
        }
        let index = self.layers.len();
        self.layers.push(LayerSpec {
            name: name.to_string(),
            kind,
            inputs: inputs.iter().map(|&i| self.layers[i].name.clone()).collect(),
        });
        self.wiring.push(Wiring { inputs: inputs.to_vec(), params, channels });
        self.names.insert(name.to_string(), index);
        Ok(index)
    }

    /// Glorot-uniform weights and zero bias.
    fn kernel_params(&mut self, name: &str, shape: [usize; 4], fan_in: usize, fan_out: usize, bias: usize) -> Vec<usize> {
        let limit = libm::sqrtf(6.0 / (fan_in + fan_out) as f32);
        let count = shape.iter().product();
        let data = (0..count).map(|_| self.rng.random_range(-limit..limit)).collect();
        let weight = Tensor::new(&shape, data).expect("kernel shape");
        let w = self.params.push(format!("{}.weight", name), weight, true);
        let b = self.params.push(format!("{}.bias", name), Tensor::zeros(&[bias]), true);
        vec![w, b]
    }

    fn conv(&mut self, name: &str, from: usize, filters: usize, kernel: usize, dilation: usize) -> Result<usize> {
        let cin = self.wiring[from].channels;
        let kk = kernel * kernel;
        let params = self.kernel_params(name, [filters, cin, kernel, kernel], cin * kk, filters * kk, filters);
        self.add(name, LayerKind::Conv { filters, kernel, dilation }, &[from], params, filters)
    }

    fn conv_transpose(&mut self, name: &str, from: usize, filters: usize, kernel: usize) -> Result<usize> {
        let cin = self.wiring[from].channels;
        let kk = kernel * kernel;
        let params = self.kernel_params(name, [cin, filters, kernel, kernel], cin * kk, filters * kk, filters);
        self.add(name, LayerKind::ConvTranspose { filters, kernel }, &[from], params, filters)
    }

    fn batchnorm(&mut self, name: &str, from: usize) -> Result<usize> {
        let c = self.wiring[from].channels;
        let params = vec![
            self.params.push(format!("{}.gamma", name), Tensor::full(&[c], 1.0), true),
            self.params.push(format!("{}.beta", name), Tensor::zeros(&[c]), true),
            self.params.push(format!("{}.running_mean", name), Tensor::zeros(&[c]), false),
            self.params.push(format!("{}.running_var", name), Tensor::full(&[c], 1.0), false),
        ];
        self.add(name, LayerKind::BatchNorm, &[from], params, c)
    }

    fn unary(&mut self, name: &str, kind: LayerKind, from: usize) -> Result<usize> {
        let c = self.wiring[from].channels;
        self.add(name, kind, &[from], Vec::new(), c)
    }

    fn concat(&mut self, name: &str, from: &[usize]) -> Result<usize> {
        let c = from.iter().map(|&i| self.wiring[i].channels).sum();
        self.add(name, LayerKind::Concat, from, Vec::new(), c)
    }

    fn subtract(&mut self, name: &str, a: usize, b: usize) -> Result<usize> {
        let c = self.wiring[a].channels;
        if self.wiring[b].channels != c {
            return Err(shape_err!("subtract {} needs matching channels", name));
        }
        self.add(name, LayerKind::Subtract, &[a, b], Vec::new(), c)
    }

    fn conv_relu(&mut self, name: &str, from: usize, filters: usize) -> Result<usize> {
        let c = self.conv(name, from, filters, 3, 1)?;
        self.unary(&format!("{}_relu", name), LayerKind::Relu, c)
    }

    fn finish(self, architecture: Architecture) -> Result<ModelGraph> {
        let last = self.wiring.last().map(|w| w.channels);
        if last != Some(1) {
            return Err(shape_err!("model output must have one channel"));
        }
        Ok(ModelGraph {
            architecture,
            width_scale: self.scale,
            layers: self.layers,
            wiring: self.wiring,
            params: self.params,
        })
    }
}

/// Symmetric encoder-decoder: three conv+ReLU stages with two 2×2 max-pools,
/// mirrored by two nearest-neighbour upsamplings, ending in a sigmoid conv.
pub fn build_cnn_dae(width_scale: WidthScale, seed: u64) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new(width_scale, seed);
    let (c32, c64) = (b.scaled(32)?, b.scaled(64)?);
    let x = b.conv_relu("conv2d_1", GraphBuilder::INPUT, c32)?;
    let x = b.unary("max_pool_1", LayerKind::MaxPool, x)?;
    let x = b.conv_relu("conv2d_2", x, c64)?;
    let x = b.unary("max_pool_2", LayerKind::MaxPool, x)?;
    let x = b.conv_relu("conv2d_3", x, c64)?;
    let x = b.unary("up_sample_1", LayerKind::Upsample, x)?;
    let x = b.conv_relu("conv2d_4", x, c32)?;
    let x = b.unary("up_sample_2", LayerKind::Upsample, x)?;
    let x = b.conv("conv2d_5", x, 1, 3, 1)?;
    b.unary("conv2d_5_sigmoid", LayerKind::Sigmoid, x)?;
    b.finish(Architecture::CnnDae)
}

/// Input batch-norm, three conv+ReLU layers, three transposed conv+ReLU
/// layers and a sigmoid conv, all at full resolution.
pub fn build_cadtra(width_scale: WidthScale, seed: u64) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new(width_scale, seed);
    let (c32, c64, c128) = (b.scaled(32)?, b.scaled(64)?, b.scaled(128)?);
    let x = b.batchnorm("batch_norm_1", GraphBuilder::INPUT)?;
    let x = b.conv_relu("conv2d_1", x, c128)?;
    let x = b.conv_relu("conv2d_2", x, c64)?;
    let x = b.conv_relu("conv2d_3", x, c32)?;
    let mut x = x;
    for (name, filters) in [("conv2d_trans_1", c32), ("conv2d_trans_2", c64), ("conv2d_trans_3", c128)] {
        let t = b.conv_transpose(name, x, filters, 3)?;
        x = b.unary(&format!("{}_relu", name), LayerKind::Relu, t)?;
    }
    let x = b.conv("conv2d_output", x, 1, 3, 1)?;
    b.unary("conv2d_output_sigmoid", LayerKind::Sigmoid, x)?;
    b.finish(Architecture::Cadtra)
}

pub fn build_dcmiednet(width_scale: WidthScale, seed: u64) -> Result<ModelGraph> {
    build_dcmiednet_with(width_scale, DcmiednetWidths::default(), seed)
}

/// Dual-subnet residual denoiser.
///
/// SubNet1 stacks conv+BN+ReLU layers with dilation 2 at layers 2, 5, 9
/// and 12 and a linear 3×3 conv at layer 16. SubNet2 stacks 15 conv+ReLU
/// layers and a linear 1×1 compression conv. Their outputs are
/// concatenated and passed through enhancement blocks (parallel 3×3 convs
/// with dilation 1 and 2, concatenated, ReLU) each followed by a 1×1
/// compression conv. A final 3×3 conv estimates the noise, which is
/// subtracted from the input.
pub fn build_dcmiednet_with(width_scale: WidthScale, widths: DcmiednetWidths, seed: u64) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new(width_scale, seed);
    let s1 = b.scaled(widths.subnet1)?;
    let s2 = b.scaled(widths.subnet2)?;
    let cb = b.scaled(widths.compression)?;
    let depth = DCMIEDNET_SUBNET_DEPTH;

    let mut x = GraphBuilder::INPUT;
    for layer in 1..depth {
        let dilation = if DCMIEDNET_DILATED_LAYERS.contains(&layer) { 2 } else { 1 };
        let c = b.conv(&format!("subnet1_conv{}", layer), x, s1, 3, dilation)?;
        let n = b.batchnorm(&format!("subnet1_bn{}", layer), c)?;
        x = b.unary(&format!("subnet1_relu{}", layer), LayerKind::Relu, n)?;
    }
    let sub1 = b.conv(&format!("subnet1_conv{}", depth), x, cb, 3, 1)?;

    let mut x = GraphBuilder::INPUT;
    for layer in 1..depth {
        let c = b.conv(&format!("subnet2_conv{}", layer), x, s2, 3, 1)?;
        x = b.unary(&format!("subnet2_relu{}", layer), LayerKind::Relu, c)?;
    }
    let sub2 = b.conv(&format!("subnet2_conv{}", depth), x, cb, 1, 1)?;

    let mut x = b.concat("fusion_concat", &[sub1, sub2])?;
    for (eb, cbn) in [("eb1", "cb2"), ("eb2", "cb3")] {
        let d1 = b.conv(&format!("{}_conv_d1", eb), x, cb, 3, 1)?;
        let d2 = b.conv(&format!("{}_conv_d2", eb), x, cb, 3, 2)?;
        let cat = b.concat(&format!("{}_concat", eb), &[d1, d2])?;
        let act = b.unary(&format!("{}_relu", eb), LayerKind::Relu, cat)?;
        x = b.conv(&format!("{}_conv", cbn), act, cb, 1, 1)?;
    }
    let noise = b.conv("rb_conv", x, 1, 3, 1)?;
    b.subtract("residual_subtract", GraphBuilder::INPUT, noise)?;
    b.finish(Architecture::Dcmiednet)
}
