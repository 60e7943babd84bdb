//! Fully convolutional parameter regressor.
//!
//! Stages alternate between convolution blocks (`repeats` x [3x3 conv,
//! stride 1, no padding, ReLU]) and downsampling blocks (3x3 conv, stride 2,
//! padding 1, ReLU, instance normalization). A 1x1 convolution to `p + 4`
//! channels followed by global average pooling produces the parameter vector
//! `(w_1..w_p, s, theta, tx, ty)`.

mod layers;
mod scalar;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layers::{conv_extent, Conv2d, Dims, INSTANCE_NORM_EPS};
pub use scalar::Scalar;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pca_layer::ParamVector;
use layers::{
    global_avg_pool, global_avg_pool_backward, instance_norm_backward, instance_norm_forward, relu_backward,
    relu_forward,
};

/// Standard-deviation multiplier for the head's initial weights; keeps the
/// untrained output at the bias values.
pub const HEAD_INIT_GAIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// Repeated 3x3 stride-1 unpadded convolutions with ReLU.
    Block,
    /// 3x3 stride-2 convolution, padding 1, ReLU, instance normalization.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub kind: StageKind,
    pub out_channels: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    pub num_shape_params: usize,
    /// Replace each block convolution by a 3x1 then 1x3 pair.
    pub separable_convs: bool,
    /// Side length of the square input.
    pub input_size: usize,
    pub stages: Vec<Stage>,
    /// Fixed multipliers on the pooled `(s, theta, tx, ty)` outputs; shape
    /// weights use 1.
    #[serde(default = "default_transform_gain")]
    pub transform_gain: [f64; 4],
}

/// Scale and rotation need far finer steps than the shape weights or the
/// pixel translation, so their outputs are damped.
pub const DEFAULT_TRANSFORM_GAIN: [f64; 4] = [0.1, 0.1, 1.0, 1.0];

fn default_transform_gain() -> [f64; 4] {
    DEFAULT_TRANSFORM_GAIN
}

pub const FULL_CHANNELS: [usize; 9] = [64, 64, 128, 128, 256, 256, 512, 256, 128];
pub const FULL_REPEATS: [usize; 9] = [2, 1, 2, 1, 4, 1, 4, 1, 3];

/// Reduced-width plan for CPU-only training runs.
pub const COMPACT_CHANNELS: [usize; 9] = [16, 16, 32, 32, 64, 64, 96, 64, 64];
pub const COMPACT_REPEATS: [usize; 9] = [1, 1, 1, 1, 1, 1, 1, 1, 1];

impl NetConfig {
    /// Builds an alternating block/down plan from channel and repeat lists.
    pub fn with_plan(in_channels: usize, num_shape_params: usize, input_size: usize, channels: &[usize], repeats: &[usize]) -> Self {
        let stages = channels
            .iter()
            .zip(repeats)
            .enumerate()
            .map(|(i, (&out_channels, &repeats))| Stage {
                kind: if i % 2 == 0 { StageKind::Block } else { StageKind::Down },
                out_channels,
                repeats,
            })
            .collect();
        NetConfig {
            in_channels,
            num_shape_params,
            separable_convs: false,
            input_size,
            stages,
            transform_gain: DEFAULT_TRANSFORM_GAIN,
        }
    }

    /// Per-output multiplier applied after pooling.
    pub fn output_gain(&self) -> Vec<f64> {
        let mut g = vec![1.0; self.num_shape_params];
        g.extend(self.transform_gain);
        g
    }

    /// The default nine-stage plan at 224x224 input.
    pub fn full(in_channels: usize, num_shape_params: usize) -> Self {
        Self::with_plan(in_channels, num_shape_params, 224, &FULL_CHANNELS, &FULL_REPEATS)
    }

    pub fn compact(in_channels: usize, num_shape_params: usize, input_size: usize) -> Self {
        Self::with_plan(in_channels, num_shape_params, input_size, &COMPACT_CHANNELS, &COMPACT_REPEATS)
    }

    pub fn output_dim(&self) -> usize {
        self.num_shape_params + ParamVector::NUM_TRANSFORM
    }

    /// Spatial side length after each stage, starting with the input.
    pub fn spatial_trace(&self) -> Result<Vec<usize>> {
        let mut trace = vec![self.input_size];
        let mut size = self.input_size;
        for (i, stage) in self.stages.iter().enumerate() {
            let fail = |size: usize| Error::Architecture {
                stage: i + 1,
                message: format!("{:?} stage cannot process a {size}x{size} feature map", stage.kind),
            };
            match stage.kind {
                StageKind::Block => {
                    for _ in 0..stage.repeats {
                        size = conv_extent(size, 3, 1, 0).ok_or_else(|| fail(size))?;
                    }
                }
                StageKind::Down => {
                    size = conv_extent(size, 3, 2, 1).ok_or_else(|| fail(size))?;
                }
            }
            trace.push(size);
        }
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::Config("input channel count must be positive".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("network needs at least one stage".into()));
        }
        if self.transform_gain.iter().any(|g| !g.is_finite() || *g == 0.0) {
            return Err(Error::Config("transform gains must be finite and non-zero".into()));
        }
        if let Some(i) = self.stages.iter().position(|s| s.out_channels == 0 || s.repeats == 0) {
            return Err(Error::Architecture {
                stage: i + 1,
                message: "channel count and repeat count must be positive".into(),
            });
        }
        self.spatial_trace().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Conv(usize),
    Relu,
    Norm,
    Pool,
    Gain,
}

/// The regression network, generic over its element type.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetConfig,
    convs: Vec<Conv2d<T>>,
    conv_names: Vec<String>,
    ops: Vec<Op>,
    /// `dims[i]` is the input of `ops[i]`; the last entry is the output.
    dims: Vec<Dims>,
    gain: Vec<T>,
}

/// Per-sample activations recorded by [`Network::forward_trace`].
pub struct Trace<T> {
    acts: Vec<Vec<T>>,
    inv_std: Vec<Option<Vec<T>>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("non-empty trace")
    }
}

/// Gradients (or any per-parameter buffers) laid out like
/// [`Network::params`]: weight then bias for every convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBuffers<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> ParamBuffers<T> {
    pub fn add_assign(&mut self, other: &ParamBuffers<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        self.tensors.iter_mut().flatten().for_each(|v| *v *= k);
    }
}

impl<T: Scalar> Network<T> {
    /// Builds and initializes the network (He-normal convolutions, head bias
    /// set so the untrained output is the mean shape at the crop center).
    pub fn build(config: &NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::new();
        let mut conv_names = Vec::new();
        let mut ops = Vec::new();
        let mut dims = vec![Dims {
            c: config.in_channels,
            h: config.input_size,
            w: config.input_size,
        }];
        let mut push_conv = |conv: Conv2d<T>, name: String, ops: &mut Vec<Op>, dims: &mut Vec<Dims>| {
            let d = conv.output_dims(*dims.last().unwrap()).expect("validated trace");
            ops.push(Op::Conv(convs.len()));
            dims.push(d);
            convs.push(conv);
            conv_names.push(name);
        };
        let same = |ops: &mut Vec<Op>, dims: &mut Vec<Dims>, op: Op| {
            ops.push(op);
            let d = *dims.last().unwrap();
            dims.push(d);
        };

        let mut channels = config.in_channels;
        for (si, stage) in config.stages.iter().enumerate() {
            let s = si + 1;
            match stage.kind {
                StageKind::Block => {
                    for r in 0..stage.repeats {
                        let out = stage.out_channels;
                        if config.separable_convs {
                            let mid = channels.min(out);
                            push_conv(Conv2d::zeros(channels, mid, (3, 1), 1, (0, 0)), format!("stage{s}.conv{r}a"), &mut ops, &mut dims);
                            push_conv(Conv2d::zeros(mid, out, (1, 3), 1, (0, 0)), format!("stage{s}.conv{r}b"), &mut ops, &mut dims);
                        } else {
                            push_conv(Conv2d::zeros(channels, out, (3, 3), 1, (0, 0)), format!("stage{s}.conv{r}"), &mut ops, &mut dims);
                        }
                        same(&mut ops, &mut dims, Op::Relu);
                        channels = out;
                    }
                }
                StageKind::Down => {
                    push_conv(
                        Conv2d::zeros(channels, stage.out_channels, (3, 3), 2, (1, 1)),
                        format!("stage{s}.down"),
                        &mut ops,
                        &mut dims,
                    );
                    same(&mut ops, &mut dims, Op::Relu);
                    same(&mut ops, &mut dims, Op::Norm);
                    channels = stage.out_channels;
                }
            }
        }
        push_conv(Conv2d::zeros(channels, config.output_dim(), (1, 1), 1, (0, 0)), "head".into(), &mut ops, &mut dims);
        ops.push(Op::Pool);
        dims.push(Dims {
            c: config.output_dim(),
            h: 1,
            w: 1,
        });
        same(&mut ops, &mut dims, Op::Gain);

        let gain = config.output_gain().into_iter().map(T::from_f64).collect();
        let mut net = Network {
            gain,
            config: config.clone(),
            convs,
            conv_names,
            ops,
            dims,
        };
        net.initialize(seed);
        Ok(net)
    }

    fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.init_he(&mut rng, if i == last { HEAD_INIT_GAIN } else { 1.0 });
        }
        let p = self.config.num_shape_params;
        let center = self.config.input_size as f64 / 2.0;
        let g = self.config.transform_gain;
        let head = &mut self.convs[last];
        head.bias[p] = T::from_f64(1.0 / g[0]);
        head.bias[p + 2] = T::from_f64(center / g[2]);
        head.bias[p + 3] = T::from_f64(center / g[3]);
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn input_dims(&self) -> Dims {
        self.dims[0]
    }

    pub fn input_len(&self) -> usize {
        self.dims[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.convs.iter().map(Conv2d::num_parameters).sum()
    }

    pub fn convs(&self) -> &[Conv2d<T>] {
        &self.convs
    }

    /// `(name, values)` for every trainable tensor, weights before biases.
    pub fn named_params(&self) -> Vec<(String, &[T])> {
        self.conv_names
            .iter()
            .zip(&self.convs)
            .flat_map(|(n, c)| [(format!("{n}.weight"), c.weight.as_slice()), (format!("{n}.bias"), c.bias.as_slice())])
            .collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.convs.iter().flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.convs.iter_mut().flat_map(|c| [&mut c.weight, &mut c.bias]).collect()
    }

    pub fn zeros_like_params(&self) -> ParamBuffers<T> {
        ParamBuffers {
            tensors: self.params().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    /// Spatial size seen by each convolution, for reporting.
    pub fn layer_shapes(&self) -> Vec<(String, Dims, Dims)> {
        self.ops
            .iter()
            .enumerate()
            .filter_map(|(i, op)| match op {
                Op::Conv(j) => Some((self.conv_names[*j].clone(), self.dims[i], self.dims[i + 1])),
                _ => None,
            })
            .collect()
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_len() {
            let d = self.input_dims();
            return Err(Error::Shape(format!(
                "expected a {}x{}x{} input ({} values), got {} values",
                d.c,
                d.h,
                d.w,
                d.len(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Raw `p + 4` outputs for one image.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for (i, op) in self.ops.iter().enumerate() {
            x = match *op {
                Op::Conv(j) => self.convs[j].forward(&x, self.dims[i]).0,
                Op::Relu => {
                    relu_forward(&mut x);
                    x
                }
                Op::Norm => {
                    instance_norm_forward(&mut x, self.dims[i]);
                    x
                }
                Op::Pool => global_avg_pool(&x, self.dims[i]),
                Op::Gain => x.iter().zip(&self.gain).map(|(&v, &g)| v * g).collect(),
            };
        }
        Ok(x)
    }

    pub fn forward_batch(&self, inputs: &[&[T]], exec: Exec) -> Result<Vec<Vec<T>>> {
        for x in inputs {
            self.check_input(x)?;
        }
        exec.map(inputs.len(), |i| self.forward(inputs[i])).into_iter().collect()
    }

    /// Forward pass that keeps every intermediate activation.
    pub fn forward_trace(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.ops.len() + 1);
        let mut inv_std = Vec::with_capacity(self.ops.len());
        acts.push(input.to_vec());
        for (i, op) in self.ops.iter().enumerate() {
            let x = acts.last().unwrap();
            let (y, inv) = match *op {
                Op::Conv(j) => (self.convs[j].forward(x, self.dims[i]).0, None),
                Op::Relu => {
                    let mut y = x.clone();
                    relu_forward(&mut y);
                    (y, None)
                }
                Op::Norm => {
                    let mut y = x.clone();
                    let inv = instance_norm_forward(&mut y, self.dims[i]);
                    (y, Some(inv))
                }
                Op::Pool => (global_avg_pool(x, self.dims[i]), None),
                Op::Gain => (x.iter().zip(&self.gain).map(|(&v, &g)| v * g).collect(), None),
            };
            acts.push(y);
            inv_std.push(inv);
        }
        Ok(Trace { acts, inv_std })
    }

    /// Accumulates parameter gradients of `<grad_out, output>` into `grads`
    /// and returns the input gradient if requested.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], grads: &mut ParamBuffers<T>, want_input_grad: bool) -> Result<Option<Vec<T>>> {
        if grad_out.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "network output gradient",
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        let mut g = grad_out.to_vec();
        for (i, op) in self.ops.iter().enumerate().rev() {
            match *op {
                Op::Pool => g = global_avg_pool_backward(&g, self.dims[i]),
                Op::Gain => g.iter_mut().zip(&self.gain).for_each(|(v, &k)| *v *= k),
                Op::Norm => {
                    let inv = trace.inv_std[i].as_ref().expect("norm trace");
                    instance_norm_backward(&trace.acts[i + 1], inv, self.dims[i + 1], &mut g);
                }
                Op::Relu => relu_backward(&trace.acts[i + 1], &mut g),
                Op::Conv(j) => {
                    let (dw, db) = {
                        let (left, right) = grads.tensors.split_at_mut(2 * j + 1);
                        (&mut left[2 * j], &mut right[0])
                    };
                    let need = i > 0 || want_input_grad;
                    match self.convs[j].backward(&trace.acts[i], self.dims[i], &g, dw, db, need) {
                        Some(dx) => g = dx,
                        None => return Ok(None),
                    }
                }
            }
        }
        Ok(Some(g))
    }

    /// Same network with every parameter converted to another element type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |c: &Conv2d<T>| Conv2d {
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            stride: c.stride,
            padding: c.padding,
            weight: c.weight.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            bias: c.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        };
        Network {
            config: self.config.clone(),
            convs: self.convs.iter().map(conv).collect(),
            conv_names: self.conv_names.clone(),
            ops: self.ops.clone(),
            dims: self.dims.clone(),
            gain: self.gain.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Splits raw outputs into parameter vectors.
    pub fn to_params(&self, raw: &[T]) -> Result<ParamVector> {
        let v: Vec<f64> = raw.iter().map(|x| x.as_f64()).collect();
        ParamVector::from_raw(&v, self.config.num_shape_params)
    }
}

pub fn count_parameters<T: Scalar>(net: &Network<T>) -> usize {
    net.num_parameters()
}
