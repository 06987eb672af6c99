//! Networks as ordered layer stacks built from serializable descriptors.
//!
//! Architectures are data: a `Vec<LayerSpec>` fully determines a network, so
//! checkpoints can rebuild models and tests can swap in small stacks without
//! new code paths.

use super::conv::conv_output_dims;
use super::tape::{NodeId, Tape};
use super::{numel, Element, Padding, Parameter, TensorError, TensorResult};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    HeUniform,
    GlorotUniform,
}

/// Serializable description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        padding: Padding,
        init: Init,
    },
    /// Stride-s upsampling convolution; spatial dims multiply by the stride.
    ConvTranspose2d {
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        init: Init,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        init: Init,
    },
    Activation(Activation),
    BatchNorm {
        channels: usize,
    },
    Dropout {
        rate: f64,
    },
    MaxPool2d {
        size: (usize, usize),
    },
    /// Nearest-neighbour spatial upsampling.
    Upsample2d {
        factor: (usize, usize),
    },
    Flatten,
    /// Per-sample target shape `[h, w, c]`; the batch axis is preserved.
    Reshape(Vec<usize>),
}

#[derive(Debug, Clone)]
pub enum Layer<E: Element> {
    Conv2d {
        stride: (usize, usize),
        padding: Padding,
        kernel: Parameter<E>,
        bias: Parameter<E>,
    },
    ConvTranspose2d {
        stride: (usize, usize),
        /// Kernel stored as `[kh, kw, out_channels, in_channels]`, i.e. the
        /// forward-conv orientation of the adjoint.
        kernel: Parameter<E>,
        bias: Parameter<E>,
    },
    Dense {
        weight: Parameter<E>,
        bias: Parameter<E>,
    },
    Activation(Activation),
    BatchNorm {
        gamma: Parameter<E>,
        beta: Parameter<E>,
        running_mean: Vec<E>,
        running_var: Vec<E>,
        momentum: f64,
        eps: f64,
    },
    Dropout {
        rate: f64,
    },
    MaxPool2d {
        size: (usize, usize),
    },
    Upsample2d {
        factor: (usize, usize),
    },
    Flatten,
    Reshape(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Output node plus the parameter leaves bound during one forward pass, in
/// `Network::parameters()` order.
pub struct ForwardPass {
    pub output: NodeId,
    pub param_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Network<E: Element> {
    spec: Vec<LayerSpec>,
    pub layers: Vec<Layer<E>>,
}

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;

fn uniform_init<E: Element>(rng: &mut ChaCha8Rng, n: usize, limit: f64) -> Vec<E> {
    (0..n)
        .map(|_| E::of_f64((rng.gen::<f64>() * 2.0 - 1.0) * limit))
        .collect()
}

fn init_limit(init: Init, fan_in: usize, fan_out: usize) -> f64 {
    match init {
        Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
        Init::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

impl<E: Element> Network<E> {
    /// Initialize parameters for a layer stack. Deterministic in `rng`.
    pub fn build(spec: &[LayerSpec], rng: &mut ChaCha8Rng) -> TensorResult<Self> {
        let mut layers = Vec::with_capacity(spec.len());
        for (i, ls) in spec.iter().enumerate() {
            let layer = match ls {
                LayerSpec::Conv2d {
                    kernel: (kh, kw),
                    in_channels,
                    out_channels,
                    stride,
                    padding,
                    init,
                } => {
                    let shape = vec![*kh, *kw, *in_channels, *out_channels];
                    let fan_in = kh * kw * in_channels;
                    let fan_out = kh * kw * out_channels;
                    let limit = init_limit(*init, fan_in, fan_out);
                    Layer::Conv2d {
                        stride: *stride,
                        padding: *padding,
                        kernel: Parameter::new(
                            format!("layer{i}.kernel"),
                            shape.clone(),
                            uniform_init(rng, numel(&shape), limit),
                        ),
                        bias: Parameter::new(
                            format!("layer{i}.bias"),
                            vec![*out_channels],
                            vec![E::zero(); *out_channels],
                        ),
                    }
                }
                LayerSpec::ConvTranspose2d {
                    kernel: (kh, kw),
                    in_channels,
                    out_channels,
                    stride,
                    init,
                } => {
                    let shape = vec![*kh, *kw, *out_channels, *in_channels];
                    let fan_in = kh * kw * in_channels;
                    let fan_out = kh * kw * out_channels;
                    let limit = init_limit(*init, fan_in, fan_out);
                    Layer::ConvTranspose2d {
                        stride: *stride,
                        kernel: Parameter::new(
                            format!("layer{i}.kernel"),
                            shape.clone(),
                            uniform_init(rng, numel(&shape), limit),
                        ),
                        bias: Parameter::new(
                            format!("layer{i}.bias"),
                            vec![*out_channels],
                            vec![E::zero(); *out_channels],
                        ),
                    }
                }
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    init,
                } => {
                    let limit = init_limit(*init, *in_dim, *out_dim);
                    Layer::Dense {
                        weight: Parameter::new(
                            format!("layer{i}.weight"),
                            vec![*in_dim, *out_dim],
                            uniform_init(rng, in_dim * out_dim, limit),
                        ),
                        bias: Parameter::new(
                            format!("layer{i}.bias"),
                            vec![*out_dim],
                            vec![E::zero(); *out_dim],
                        ),
                    }
                }
                LayerSpec::Activation(a) => Layer::Activation(*a),
                LayerSpec::BatchNorm { channels } => Layer::BatchNorm {
                    gamma: Parameter::new(
                        format!("layer{i}.gamma"),
                        vec![*channels],
                        vec![E::one(); *channels],
                    ),
                    beta: Parameter::new(
                        format!("layer{i}.beta"),
                        vec![*channels],
                        vec![E::zero(); *channels],
                    ),
                    running_mean: vec![E::zero(); *channels],
                    running_var: vec![E::one(); *channels],
                    momentum: BATCH_NORM_MOMENTUM,
                    eps: BATCH_NORM_EPS,
                },
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(TensorError::InvalidArgument {
                            op: "dropout",
                            message: format!("rate must be in [0,1), got {rate}"),
                        });
                    }
                    Layer::Dropout { rate: *rate }
                }
                LayerSpec::MaxPool2d { size } => Layer::MaxPool2d { size: *size },
                LayerSpec::Upsample2d { factor } => Layer::Upsample2d { factor: *factor },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Reshape(s) => Layer::Reshape(s.clone()),
            };
            layers.push(layer);
        }
        Ok(Network {
            spec: spec.to_vec(),
            layers,
        })
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn parameters(&self) -> Vec<&Parameter<E>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d { kernel, bias, .. }
                | Layer::ConvTranspose2d { kernel, bias, .. } => {
                    out.push(kernel);
                    out.push(bias);
                }
                Layer::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<E>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d { kernel, bias, .. }
                | Layer::ConvTranspose2d { kernel, bias, .. } => {
                    out.push(kernel);
                    out.push(bias);
                }
                Layer::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Forward in eval mode: dropout is identity, batch norm uses running
    /// statistics. Read-only, safe for concurrent callers on one model.
    pub fn forward_eval(&self, tape: &mut Tape<E>, input: NodeId) -> TensorResult<ForwardPass> {
        self.forward_impl(tape, input, Mode::Eval, None, None)
    }

    /// Forward in train mode: dropout samples a fresh mask from `rng`, batch
    /// norm normalizes by batch statistics and updates its running buffers.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape<E>,
        input: NodeId,
        rng: &mut ChaCha8Rng,
    ) -> TensorResult<ForwardPass> {
        let mut updates: Vec<(usize, Vec<E>, Vec<E>)> = Vec::new();
        let pass = {
            let this: &Network<E> = self;
            this.forward_impl(tape, input, Mode::Train, Some(rng), Some(&mut updates))?
        };
        for (li, mean, var) in updates {
            if let Layer::BatchNorm {
                running_mean,
                running_var,
                momentum,
                ..
            } = &mut self.layers[li]
            {
                let m = E::of_f64(*momentum);
                let inv = E::one() - m;
                for (r, b) in running_mean.iter_mut().zip(&mean) {
                    *r = m * *r + inv * *b;
                }
                for (r, b) in running_var.iter_mut().zip(&var) {
                    *r = m * *r + inv * *b;
                }
            }
        }
        Ok(pass)
    }

    fn forward_impl(
        &self,
        tape: &mut Tape<E>,
        input: NodeId,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
        mut bn_updates: Option<&mut Vec<(usize, Vec<E>, Vec<E>)>>,
    ) -> TensorResult<ForwardPass> {
        let mut x = input;
        let mut param_nodes = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv2d {
                    stride,
                    padding,
                    kernel,
                    bias,
                } => {
                    let k = tape.leaf(kernel.shape.clone(), kernel.value.clone());
                    let b = tape.leaf(bias.shape.clone(), bias.value.clone());
                    param_nodes.push(k);
                    param_nodes.push(b);
                    let y = tape.conv2d(x, k, *stride, *padding)?;
                    x = tape.add_channel(y, b)?;
                }
                Layer::ConvTranspose2d {
                    stride,
                    kernel,
                    bias,
                } => {
                    let k = tape.leaf(kernel.shape.clone(), kernel.value.clone());
                    let b = tape.leaf(bias.shape.clone(), bias.value.clone());
                    param_nodes.push(k);
                    param_nodes.push(b);
                    let in_shape = tape.shape(x).to_vec();
                    if in_shape.len() != 4 || in_shape[3] != kernel.shape[3] {
                        return Err(TensorError::ShapeMismatch {
                            op: "conv2d_transpose",
                            lhs: in_shape,
                            rhs: kernel.shape.clone(),
                        });
                    }
                    let out_shape = vec![
                        in_shape[0],
                        in_shape[1] * stride.0,
                        in_shape[2] * stride.1,
                        kernel.shape[2],
                    ];
                    let y = tape.conv2d_dx(x, k, &out_shape, *stride, Padding::Same)?;
                    x = tape.add_channel(y, b)?;
                }
                Layer::Dense { weight, bias } => {
                    let w = tape.leaf(weight.shape.clone(), weight.value.clone());
                    let b = tape.leaf(bias.shape.clone(), bias.value.clone());
                    param_nodes.push(w);
                    param_nodes.push(b);
                    let y = tape.matmul(x, w)?;
                    x = tape.add_row(y, b)?;
                }
                Layer::Activation(a) => {
                    x = apply_activation(tape, x, *a)?;
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum: _,
                    eps,
                } => {
                    let shape = tape.shape(x).to_vec();
                    if shape.len() != 4 {
                        return Err(TensorError::ShapeMismatch {
                            op: "batch_norm",
                            lhs: shape,
                            rhs: gamma.shape.clone(),
                        });
                    }
                    let g = tape.leaf(gamma.shape.clone(), gamma.value.clone());
                    let b = tape.leaf(beta.shape.clone(), beta.value.clone());
                    param_nodes.push(g);
                    param_nodes.push(b);
                    let cnt = (shape[0] * shape[1] * shape[2]) as f64;
                    let xhat = match mode {
                        Mode::Train => {
                            if shape[0] < 2 {
                                return Err(TensorError::InvalidArgument {
                                    op: "batch_norm",
                                    message: format!(
                                        "train mode requires batch size >= 2, got {}",
                                        shape[0]
                                    ),
                                });
                            }
                            let sum = tape.reduce_channel_sum(x)?;
                            let mean = tape.affine(sum, 1.0 / cnt, 0.0);
                            let mean_b = tape.broadcast_channel(mean, &shape)?;
                            let centered = tape.sub(x, mean_b)?;
                            let sq = tape.mul(centered, centered)?;
                            let var_sum = tape.reduce_channel_sum(sq)?;
                            let var = tape.affine(var_sum, 1.0 / cnt, 0.0);
                            if let Some(updates) = bn_updates.as_deref_mut() {
                                updates.push((
                                    li,
                                    tape.data(mean).to_vec(),
                                    tape.data(var).to_vec(),
                                ));
                            }
                            let var_eps = tape.affine(var, 1.0, *eps);
                            let std = tape.sqrt(var_eps);
                            let std_b = tape.broadcast_channel(std, &shape)?;
                            tape.div(centered, std_b)?
                        }
                        Mode::Eval => {
                            let rm = tape.leaf(gamma.shape.clone(), running_mean.clone());
                            let rv = tape.leaf(gamma.shape.clone(), running_var.clone());
                            let rv_eps = tape.affine(rv, 1.0, *eps);
                            let std = tape.sqrt(rv_eps);
                            let rm_b = tape.broadcast_channel(rm, &shape)?;
                            let std_b = tape.broadcast_channel(std, &shape)?;
                            let centered = tape.sub(x, rm_b)?;
                            tape.div(centered, std_b)?
                        }
                    };
                    let g_b = tape.broadcast_channel(g, &shape)?;
                    let scaled = tape.mul(xhat, g_b)?;
                    x = tape.add_channel(scaled, b)?;
                }
                Layer::Dropout { rate } => {
                    if mode == Mode::Train && *rate > 0.0 {
                        let rng = rng.as_deref_mut().ok_or(TensorError::InvalidArgument {
                            op: "dropout",
                            message: "train-mode dropout needs an rng".into(),
                        })?;
                        let keep_scale = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..tape.data(x).len())
                            .map(|_| {
                                if rng.gen::<f64>() < *rate {
                                    0.0
                                } else {
                                    keep_scale
                                }
                            })
                            .collect();
                        x = tape.apply_mask(x, mask)?;
                    }
                }
                Layer::MaxPool2d { size } => {
                    x = tape.max_pool2d(x, *size)?;
                }
                Layer::Upsample2d { factor } => {
                    x = tape.upsample2d_nearest(x, *factor)?;
                }
                Layer::Flatten => {
                    let shape = tape.shape(x).to_vec();
                    let n = shape[0];
                    let rest = numel(&shape) / n;
                    x = tape.reshape(x, &[n, rest])?;
                }
                Layer::Reshape(per_sample) => {
                    let n = tape.shape(x)[0];
                    let mut full = vec![n];
                    full.extend_from_slice(per_sample);
                    x = tape.reshape(x, &full)?;
                }
            }
        }
        Ok(ForwardPass {
            output: x,
            param_nodes,
        })
    }

    /// Run `tape.backward` on `loss` and add each parameter's adjoint into
    /// its `grad` buffer. `passes` lists every forward pass of *this* network
    /// that feeds the loss (e.g. real and fake critic passes).
    pub fn accumulate_grads(
        &mut self,
        tape: &mut Tape<E>,
        passes: &[&ForwardPass],
        loss: NodeId,
    ) -> TensorResult<()> {
        let all_nodes: Vec<NodeId> = passes
            .iter()
            .flat_map(|p| p.param_nodes.iter().copied())
            .collect();
        let adjoints = tape.backward(loss, &all_nodes)?;
        self.add_adjoints(tape, passes, &adjoints);
        Ok(())
    }

    /// Add a tape adjoint into each parameter's grad buffer without running
    /// backward again; `adjoints` must align with `passes`' bound leaves.
    fn add_adjoints(
        &mut self,
        tape: &Tape<E>,
        passes: &[&ForwardPass],
        adjoints: &[Option<NodeId>],
    ) {
        let per_pass = self.parameters().len();
        let mut params = self.parameters_mut();
        for chunk in adjoints.chunks(per_pass) {
            for (param, adj) in params.iter_mut().zip(chunk) {
                if let Some(adj) = adj {
                    let data = tape.data(*adj);
                    for (g, &d) in param.grad.iter_mut().zip(data) {
                        *g = *g + d;
                    }
                }
            }
        }
        debug_assert_eq!(adjoints.len(), per_pass * passes.len());
    }

    /// Infer the output shape of one sample pushed through the stack.
    /// `input` is the per-sample shape `[h, w, c]` or `[d]`.
    pub fn output_shape(&self, input: &[usize]) -> TensorResult<Vec<usize>> {
        let mut s = input.to_vec();
        for layer in &self.spec {
            match layer {
                LayerSpec::Conv2d {
                    kernel,
                    out_channels,
                    stride,
                    padding,
                    in_channels,
                    ..
                } => {
                    if s.len() != 3 || s[2] != *in_channels {
                        return Err(TensorError::ShapeMismatch {
                            op: "output_shape",
                            lhs: s,
                            rhs: vec![*in_channels],
                        });
                    }
                    s = vec![
                        conv_output_dims(s[0], kernel.0, stride.0, *padding),
                        conv_output_dims(s[1], kernel.1, stride.1, *padding),
                        *out_channels,
                    ];
                }
                LayerSpec::ConvTranspose2d {
                    out_channels,
                    stride,
                    in_channels,
                    ..
                } => {
                    if s.len() != 3 || s[2] != *in_channels {
                        return Err(TensorError::ShapeMismatch {
                            op: "output_shape",
                            lhs: s,
                            rhs: vec![*in_channels],
                        });
                    }
                    s = vec![s[0] * stride.0, s[1] * stride.1, *out_channels];
                }
                LayerSpec::Dense { in_dim, out_dim, .. } => {
                    if s != [*in_dim] {
                        return Err(TensorError::ShapeMismatch {
                            op: "output_shape",
                            lhs: s,
                            rhs: vec![*in_dim],
                        });
                    }
                    s = vec![*out_dim];
                }
                LayerSpec::MaxPool2d { size } => {
                    s = vec![s[0] / size.0, s[1] / size.1, s[2]];
                }
                LayerSpec::Upsample2d { factor } => {
                    s = vec![s[0] * factor.0, s[1] * factor.1, s[2]];
                }
                LayerSpec::Flatten => {
                    s = vec![s.iter().product()];
                }
                LayerSpec::Reshape(t) => {
                    s = t.clone();
                }
                LayerSpec::Activation(_) | LayerSpec::BatchNorm { .. } | LayerSpec::Dropout { .. } => {}
            }
        }
        Ok(s)
    }
}

/// One backward sweep feeding gradients into several networks at once
/// (models with multiple sub-networks, e.g. an encoder and decoder).
pub fn accumulate_grads_multi<E: Element>(
    tape: &mut Tape<E>,
    items: &mut [(&mut Network<E>, &[&ForwardPass])],
    loss: NodeId,
) -> TensorResult<()> {
    let mut all_nodes = Vec::new();
    for (_, passes) in items.iter() {
        for pass in passes.iter() {
            all_nodes.extend(pass.param_nodes.iter().copied());
        }
    }
    let adjoints = tape.backward(loss, &all_nodes)?;
    let mut cursor = 0usize;
    for (net, passes) in items.iter_mut() {
        let count = net.parameters().len() * passes.len();
        net.add_adjoints(tape, passes, &adjoints[cursor..cursor + count]);
        cursor += count;
    }
    Ok(())
}

pub fn apply_activation<E: Element>(
    tape: &mut Tape<E>,
    x: NodeId,
    a: Activation,
) -> TensorResult<NodeId> {
    Ok(match a {
        Activation::Linear => x,
        Activation::Relu => tape.relu(x),
        Activation::LeakyRelu(alpha) => tape.leaky_relu(x, alpha)?,
        Activation::Tanh => tape.tanh(x),
        Activation::Sigmoid => tape.sigmoid(x),
    })
}

/// Per-sample L2 norm of the critic's gradient with respect to its input.
///
/// Runs the network on `input` with dropout bypassed, differentiates the
/// summed output back to `input`, and returns `[N]`-shaped norms that remain
/// differentiable with respect to the bound parameters (returned in the
/// `ForwardPass`). Only layers whose backward pass has well-defined
/// second-order structure are admitted.
pub fn input_gradient_norm<E: Element>(
    tape: &mut Tape<E>,
    network: &Network<E>,
    input: NodeId,
) -> TensorResult<(NodeId, ForwardPass)> {
    for layer in network.spec() {
        let ok = match layer {
            LayerSpec::Conv2d { .. }
            | LayerSpec::Dense { .. }
            | LayerSpec::Dropout { .. }
            | LayerSpec::Flatten
            | LayerSpec::Reshape(_) => true,
            LayerSpec::Activation(a) => matches!(
                a,
                Activation::Linear | Activation::Relu | Activation::LeakyRelu(_)
            ),
            _ => false,
        };
        if !ok {
            return Err(TensorError::UnsupportedLayer {
                layer: format!("{layer:?}"),
            });
        }
    }
    // Eval mode bypasses dropout; the admitted layers behave identically in
    // train and eval otherwise.
    let pass = network.forward_eval(tape, input)?;
    // Each sample's output depends only on that sample, so the gradient of
    // the summed output carries the per-sample gradients in its rows.
    let total = tape.sum_all(pass.output);
    let grads = tape.backward(total, &[input])?;
    let g = grads[0].ok_or(TensorError::InvalidArgument {
        op: "input_gradient_norm",
        message: "critic output does not depend on the input".into(),
    })?;
    let sq = tape.mul(g, g)?;
    let sums = tape.sum_per_sample(sq)?;
    let guarded = tape.affine(sums, 1.0, 1e-12);
    let norms = tape.sqrt(guarded);
    Ok((norms, pass))
}
