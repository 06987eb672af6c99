//! The reverse-mode tape.
//!
//! Every operation appends a node holding its materialized value and enough
//! metadata to differentiate it. `backward` walks the tape in reverse and
//! *emits the adjoint computation as new tape nodes*, so the returned
//! gradients are ordinary tape values: differentiating a gradient again is
//! just another `backward` call. Data-dependent selection masks (relu,
//! dropout, max-pool) enter the emitted graph as constants, matching their
//! almost-everywhere-zero second derivative.

use super::conv::{
    self, conv_adjoint_input, conv_adjoint_kernel, conv_forward, geometry, ConvGeometry, Padding,
};
use super::{numel, Element, TensorError, TensorResult};
use std::sync::Arc;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// a*x + b with constant coefficients; only `a` matters to the adjoint.
    AffineScalar(NodeId, f64, #[allow(dead_code)] f64),
    /// Elementwise multiply by a `[1]`-shaped tape scalar.
    MulScalarNode(NodeId, NodeId),
    /// Elementwise multiply by a constant mask (relu/dropout selection).
    MulMask(NodeId, Arc<Vec<f64>>),
    Matmul(NodeId, NodeId),
    MatmulAt(NodeId, NodeId),
    MatmulBt(NodeId, NodeId),
    Conv2d {
        x: NodeId,
        k: NodeId,
        geom: ConvGeometry,
    },
    /// dL/dx of a conv with this geometry; forward pass of a transposed conv.
    Conv2dDx {
        gy: NodeId,
        k: NodeId,
        geom: ConvGeometry,
    },
    Conv2dDk {
        x: NodeId,
        gy: NodeId,
        geom: ConvGeometry,
    },
    /// Gather by precomputed flat indices (max-pool forward).
    Gather(NodeId, Arc<Vec<u32>>),
    /// Scatter-add into a larger buffer by the same indices.
    Scatter(NodeId, Arc<Vec<u32>>),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    AddChannel(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    ReduceChannelSum(NodeId),
    BroadcastChannel(NodeId),
    ReduceColSum(NodeId),
    BroadcastRow(NodeId),
    SumAll(NodeId),
    SumPerSample(NodeId),
    BroadcastPerSample(NodeId),
    BroadcastScalar(NodeId),
    Reshape(NodeId),
    SoftmaxXent {
        logits: NodeId,
        labels: Arc<Vec<usize>>,
    },
    SigmoidBce {
        logits: NodeId,
        targets: Arc<Vec<f64>>,
    },
}

#[derive(Debug)]
struct Node<E: Element> {
    shape: Vec<usize>,
    data: Vec<E>,
    op: Op,
}

/// Growing record of a computation.
#[derive(Debug, Default)]
pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> TensorResult<()> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn data(&self, id: NodeId) -> &[E] {
        &self.nodes[id].data
    }

    pub fn scalar(&self, id: NodeId) -> E {
        debug_assert_eq!(numel(&self.nodes[id].shape), 1);
        self.nodes[id].data[0]
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<E>, op: Op) -> NodeId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { shape, data, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<E>) -> NodeId {
        assert_eq!(
            numel(&shape),
            data.len(),
            "leaf data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        self.push(shape, data, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, v: E) -> NodeId {
        self.push(vec![1], vec![v], Op::Leaf)
    }

    fn binary_elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(E, E) -> E,
        op: Op,
    ) -> TensorResult<NodeId> {
        same_shape(op_name, &self.nodes[a].shape, &self.nodes[b].shape)?;
        let data = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(self.nodes[a].shape.clone(), data, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.binary_elementwise("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// a*x + b.
    pub fn affine(&mut self, x: NodeId, a: f64, b: f64) -> NodeId {
        let (ae, be) = (E::of_f64(a), E::of_f64(b));
        let data = self.nodes[x].data.iter().map(|&v| ae * v + be).collect();
        self.push(self.nodes[x].shape.clone(), data, Op::AffineScalar(x, a, b))
    }

    pub fn mul_scalar_node(&mut self, x: NodeId, s: NodeId) -> TensorResult<NodeId> {
        if numel(&self.nodes[s].shape) != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "mul_scalar_node",
                lhs: self.nodes[x].shape.clone(),
                rhs: self.nodes[s].shape.clone(),
            });
        }
        let sv = self.nodes[s].data[0];
        let data = self.nodes[x].data.iter().map(|&v| v * sv).collect();
        Ok(self.push(self.nodes[x].shape.clone(), data, Op::MulScalarNode(x, s)))
    }

    fn mul_mask(&mut self, x: NodeId, mask: Arc<Vec<f64>>) -> NodeId {
        debug_assert_eq!(self.nodes[x].data.len(), mask.len());
        let data = self.nodes[x]
            .data
            .iter()
            .zip(mask.iter())
            .map(|(&v, &m)| v * E::of_f64(m))
            .collect();
        self.push(self.nodes[x].shape.clone(), data, Op::MulMask(x, mask))
    }

    /// Elementwise multiply by a caller-supplied constant mask (dropout).
    pub fn apply_mask(&mut self, x: NodeId, mask: Vec<f64>) -> TensorResult<NodeId> {
        if mask.len() != self.nodes[x].data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "apply_mask",
                lhs: self.nodes[x].shape.clone(),
                rhs: vec![mask.len()],
            });
        }
        Ok(self.mul_mask(x, Arc::new(mask)))
    }

    fn matmul_dims(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> TensorResult<(usize, usize, usize, usize)> {
        let (sa, sb) = (&self.nodes[a].shape, &self.nodes[b].shape);
        if sa.len() != 2 || sb.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        Ok((sa[0], sa[1], sb[0], sb[1]))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let (m, k, k2, n) = self.matmul_dims("matmul", a, b)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a].shape.clone(),
                rhs: self.nodes[b].shape.clone(),
            });
        }
        let data = conv::matmul(&self.nodes[a].data, &self.nodes[b].data, m, k, n);
        Ok(self.push(vec![m, n], data, Op::Matmul(a, b)))
    }

    /// a^T * b.
    pub fn matmul_at(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let (m, k, m2, n) = self.matmul_dims("matmul_at", a, b)?;
        if m != m2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_at",
                lhs: self.nodes[a].shape.clone(),
                rhs: self.nodes[b].shape.clone(),
            });
        }
        let data = conv::matmul_at(&self.nodes[a].data, &self.nodes[b].data, m, k, n);
        Ok(self.push(vec![k, n], data, Op::MatmulAt(a, b)))
    }

    /// a * b^T.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let (m, n, k, n2) = self.matmul_dims("matmul_bt", a, b)?;
        if n != n2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_bt",
                lhs: self.nodes[a].shape.clone(),
                rhs: self.nodes[b].shape.clone(),
            });
        }
        let data = conv::matmul_bt(&self.nodes[a].data, &self.nodes[b].data, m, n, k);
        Ok(self.push(vec![m, k], data, Op::MatmulBt(a, b)))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        stride: (usize, usize),
        padding: Padding,
    ) -> TensorResult<NodeId> {
        let geom = geometry(&self.nodes[x].shape, &self.nodes[k].shape, stride, padding)?;
        let data = conv_forward(&self.nodes[x].data, &self.nodes[k].data, &geom);
        Ok(self.push(
            vec![geom.n, geom.oh, geom.ow, geom.cout],
            data,
            Op::Conv2d { x, k, geom },
        ))
    }

    /// Adjoint-by-input of a convolution onto `x_shape`; doubles as the
    /// forward pass of a transposed convolution.
    pub fn conv2d_dx(
        &mut self,
        gy: NodeId,
        k: NodeId,
        x_shape: &[usize],
        stride: (usize, usize),
        padding: Padding,
    ) -> TensorResult<NodeId> {
        let geom = geometry(x_shape, &self.nodes[k].shape, stride, padding)?;
        same_shape(
            "conv2d_dx",
            &self.nodes[gy].shape,
            &[geom.n, geom.oh, geom.ow, geom.cout],
        )?;
        let data = conv_adjoint_input(&self.nodes[gy].data, &self.nodes[k].data, &geom);
        Ok(self.push(x_shape.to_vec(), data, Op::Conv2dDx { gy, k, geom }))
    }

    /// Adjoint-by-kernel of a convolution onto `k_shape`.
    pub fn conv2d_dk(
        &mut self,
        x: NodeId,
        gy: NodeId,
        k_shape: &[usize],
        stride: (usize, usize),
        padding: Padding,
    ) -> TensorResult<NodeId> {
        let geom = geometry(&self.nodes[x].shape, k_shape, stride, padding)?;
        same_shape(
            "conv2d_dk",
            &self.nodes[gy].shape,
            &[geom.n, geom.oh, geom.ow, geom.cout],
        )?;
        let data = conv_adjoint_kernel(&self.nodes[x].data, &self.nodes[gy].data, &geom);
        Ok(self.push(k_shape.to_vec(), data, Op::Conv2dDk { x, gy, geom }))
    }

    /// Non-overlapping max pooling over NHWC.
    pub fn max_pool2d(&mut self, x: NodeId, size: (usize, usize)) -> TensorResult<NodeId> {
        let s = self.nodes[x].shape.clone();
        if s.len() != 4 || s[1] % size.0 != 0 || s[2] % size.1 != 0 {
            return Err(TensorError::InvalidArgument {
                op: "max_pool2d",
                message: format!("pool {size:?} must divide spatial dims of {s:?}"),
            });
        }
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / size.0, w / size.1);
        let xd = &self.nodes[x].data;
        let mut idx = Vec::with_capacity(n * oh * ow * c);
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ci in 0..c {
                        let mut best = usize::MAX;
                        let mut best_v = E::neg_infinity();
                        for py in 0..size.0 {
                            for px in 0..size.1 {
                                let p = ((ni * h + oy * size.0 + py) * w + ox * size.1 + px) * c
                                    + ci;
                                if xd[p] > best_v {
                                    best_v = xd[p];
                                    best = p;
                                }
                            }
                        }
                        idx.push(best as u32);
                    }
                }
            }
        }
        let idx = Arc::new(idx);
        let data = idx.iter().map(|&p| xd[p as usize]).collect();
        Ok(self.push(vec![n, oh, ow, c], data, Op::Gather(x, idx)))
    }

    /// Nearest-neighbour upsampling of NHWC by integer factors.
    pub fn upsample2d_nearest(
        &mut self,
        x: NodeId,
        factor: (usize, usize),
    ) -> TensorResult<NodeId> {
        let s = self.nodes[x].shape.clone();
        if s.len() != 4 || factor.0 == 0 || factor.1 == 0 {
            return Err(TensorError::InvalidArgument {
                op: "upsample2d",
                message: format!("needs NHWC input and positive factors, got {s:?} x {factor:?}"),
            });
        }
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h * factor.0, w * factor.1);
        let mut idx = Vec::with_capacity(n * oh * ow * c);
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let iy = oy / factor.0;
                    let ix = ox / factor.1;
                    for ci in 0..c {
                        idx.push((((ni * h + iy) * w + ix) * c + ci) as u32);
                    }
                }
            }
        }
        let idx = Arc::new(idx);
        Ok(self.gather(x, idx, vec![n, oh, ow, c]))
    }

    fn scatter(&mut self, g: NodeId, idx: Arc<Vec<u32>>, out_shape: Vec<usize>) -> NodeId {
        let mut data = vec![E::zero(); numel(&out_shape)];
        for (&p, &v) in idx.iter().zip(&self.nodes[g].data) {
            data[p as usize] = data[p as usize] + v;
        }
        self.push(out_shape, data, Op::Scatter(g, idx))
    }

    fn gather(&mut self, x: NodeId, idx: Arc<Vec<u32>>, out_shape: Vec<usize>) -> NodeId {
        let data = idx.iter().map(|&p| self.nodes[x].data[p as usize]).collect();
        self.push(out_shape, data, Op::Gather(x, idx))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(E) -> E, op: Op) -> NodeId {
        let data = self.nodes[x].data.iter().map(|&v| f(v)).collect();
        self.push(self.nodes[x].shape.clone(), data, op)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| if v > E::zero() { v } else { E::zero() }, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: NodeId, alpha: f64) -> TensorResult<NodeId> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(TensorError::InvalidArgument {
                op: "leaky_relu",
                message: format!("alpha must be in (0,1), got {alpha}"),
            });
        }
        let a = E::of_f64(alpha);
        Ok(self.unary(
            x,
            |v| if v > E::zero() { v } else { a * v },
            Op::LeakyRelu(x, alpha),
        ))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(
            x,
            |v| E::one() / (E::one() + (-v).exp()),
            Op::Sigmoid(x),
        )
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.exp(), Op::Exp(x))
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.ln(), Op::Ln(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    fn channel_dims(&self, op: &'static str, x: NodeId) -> TensorResult<(usize, usize)> {
        let s = &self.nodes[x].shape;
        if s.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: s.clone(),
                rhs: vec![],
            });
        }
        Ok((s[0] * s[1] * s[2], s[3]))
    }

    /// NHWC + `[C]` broadcast add.
    pub fn add_channel(&mut self, x: NodeId, c: NodeId) -> TensorResult<NodeId> {
        let (rows, ch) = self.channel_dims("add_channel", x)?;
        same_shape("add_channel", &self.nodes[c].shape, &[ch])?;
        let mut data = Vec::with_capacity(rows * ch);
        for row in self.nodes[x].data.chunks(ch) {
            for (v, &b) in row.iter().zip(&self.nodes[c].data) {
                data.push(*v + b);
            }
        }
        Ok(self.push(self.nodes[x].shape.clone(), data, Op::AddChannel(x, c)))
    }

    /// `[N,D]` + `[D]` broadcast add.
    pub fn add_row(&mut self, x: NodeId, r: NodeId) -> TensorResult<NodeId> {
        let s = self.nodes[x].shape.clone();
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: s,
                rhs: self.nodes[r].shape.clone(),
            });
        }
        same_shape("add_row", &self.nodes[r].shape, &[s[1]])?;
        let mut data = Vec::with_capacity(s[0] * s[1]);
        for row in self.nodes[x].data.chunks(s[1]) {
            for (v, &b) in row.iter().zip(&self.nodes[r].data) {
                data.push(*v + b);
            }
        }
        Ok(self.push(s, data, Op::AddRow(x, r)))
    }

    /// NHWC -> `[C]` sum over batch and space.
    pub fn reduce_channel_sum(&mut self, x: NodeId) -> TensorResult<NodeId> {
        let (_, ch) = self.channel_dims("reduce_channel_sum", x)?;
        let mut data = vec![E::zero(); ch];
        for row in self.nodes[x].data.chunks(ch) {
            for (acc, &v) in data.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        Ok(self.push(vec![ch], data, Op::ReduceChannelSum(x)))
    }

    /// `[C]` -> NHWC.
    pub fn broadcast_channel(&mut self, c: NodeId, shape: &[usize]) -> TensorResult<NodeId> {
        if shape.len() != 4 || shape[3] != self.nodes[c].shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_channel",
                lhs: self.nodes[c].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let rows = shape[0] * shape[1] * shape[2];
        let mut data = Vec::with_capacity(rows * shape[3]);
        for _ in 0..rows {
            data.extend_from_slice(&self.nodes[c].data);
        }
        Ok(self.push(shape.to_vec(), data, Op::BroadcastChannel(c)))
    }

    /// `[N,D]` -> `[D]` sum over rows.
    pub fn reduce_col_sum(&mut self, x: NodeId) -> TensorResult<NodeId> {
        let s = &self.nodes[x].shape;
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "reduce_col_sum",
                lhs: s.clone(),
                rhs: vec![],
            });
        }
        let d = s[1];
        let mut data = vec![E::zero(); d];
        for row in self.nodes[x].data.chunks(d) {
            for (acc, &v) in data.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        Ok(self.push(vec![d], data, Op::ReduceColSum(x)))
    }

    /// `[D]` -> `[N,D]`.
    pub fn broadcast_row(&mut self, r: NodeId, shape: &[usize]) -> TensorResult<NodeId> {
        if shape.len() != 2 || shape[1] != self.nodes[r].shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_row",
                lhs: self.nodes[r].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let mut data = Vec::with_capacity(shape[0] * shape[1]);
        for _ in 0..shape[0] {
            data.extend_from_slice(&self.nodes[r].data);
        }
        Ok(self.push(shape.to_vec(), data, Op::BroadcastRow(r)))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let mut acc = E::zero();
        for &v in &self.nodes[x].data {
            acc = acc + v;
        }
        self.push(vec![1], vec![acc], Op::SumAll(x))
    }

    /// `[N, ...]` -> `[N]` sum over all trailing axes.
    pub fn sum_per_sample(&mut self, x: NodeId) -> TensorResult<NodeId> {
        let s = &self.nodes[x].shape;
        if s.len() < 2 {
            return Err(TensorError::ShapeMismatch {
                op: "sum_per_sample",
                lhs: s.clone(),
                rhs: vec![],
            });
        }
        let n = s[0];
        let per = numel(s) / n;
        let data = self.nodes[x]
            .data
            .chunks(per)
            .map(|row| {
                let mut acc = E::zero();
                for &v in row {
                    acc = acc + v;
                }
                acc
            })
            .collect();
        Ok(self.push(vec![n], data, Op::SumPerSample(x)))
    }

    /// `[N]` -> `[N, ...]`.
    pub fn broadcast_per_sample(&mut self, v: NodeId, shape: &[usize]) -> TensorResult<NodeId> {
        if shape.is_empty() || shape[0] != self.nodes[v].shape[0] || self.nodes[v].shape.len() != 1
        {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_per_sample",
                lhs: self.nodes[v].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let per = numel(shape) / shape[0];
        let mut data = Vec::with_capacity(numel(shape));
        for &s in &self.nodes[v].data {
            data.extend(std::iter::repeat(s).take(per));
        }
        Ok(self.push(shape.to_vec(), data, Op::BroadcastPerSample(v)))
    }

    /// `[1]` -> any shape.
    pub fn broadcast_scalar(&mut self, s: NodeId, shape: &[usize]) -> NodeId {
        let v = self.nodes[s].data[0];
        self.push(shape.to_vec(), vec![v; numel(shape)], Op::BroadcastScalar(s))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> TensorResult<NodeId> {
        if numel(shape) != self.nodes[x].data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.nodes[x].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.nodes[x].data.clone();
        Ok(self.push(shape.to_vec(), data, Op::Reshape(x)))
    }

    /// Mean cross-entropy of softmaxed logits `[N,C]` against class indices.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> TensorResult<NodeId> {
        let s = self.nodes[logits].shape.clone();
        if s.len() != 2 || s[1] < 2 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: s,
                rhs: vec![labels.len()],
            });
        }
        let (n, c) = (s[0], s[1]);
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: s,
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::LabelOutOfRange {
                label: bad,
                classes: c,
            });
        }
        let mut total = E::zero();
        for (row, &lbl) in self.nodes[logits].data.chunks(c).zip(labels) {
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let mut denom = E::zero();
            for &v in row {
                denom = denom + (v - max).exp();
            }
            total = total + (denom.ln() - (row[lbl] - max));
        }
        let mean = total / E::of_f64(n as f64);
        Ok(self.push(
            vec![1],
            vec![mean],
            Op::SoftmaxXent {
                logits,
                labels: Arc::new(labels.to_vec()),
            },
        ))
    }

    /// Row-softmax probabilities of logits `[N,C]` (no tape gradient).
    pub fn softmax_values(&self, logits: NodeId) -> Vec<E> {
        let c = *self.nodes[logits].shape.last().unwrap();
        let mut out = Vec::with_capacity(self.nodes[logits].data.len());
        for row in self.nodes[logits].data.chunks(c) {
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let exps: Vec<E> = row.iter().map(|&v| (v - max).exp()).collect();
            let mut denom = E::zero();
            for &v in &exps {
                denom = denom + v;
            }
            out.extend(exps.into_iter().map(|v| v / denom));
        }
        out
    }

    /// Binary cross-entropy between `sigmoid(logits)` and targets in `[0,1]`,
    /// summed over features, averaged over the leading batch axis.
    pub fn sigmoid_bce(&mut self, logits: NodeId, targets: &[f64]) -> TensorResult<NodeId> {
        let s = self.nodes[logits].shape.clone();
        if targets.len() != numel(&s) || s.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "sigmoid_bce",
                lhs: s,
                rhs: vec![targets.len()],
            });
        }
        if let Some(bad) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(TensorError::InvalidArgument {
                op: "sigmoid_bce",
                message: format!("target {bad} outside [0,1]"),
            });
        }
        let n = s[0];
        let mut total = 0.0;
        for (&l, &t) in self.nodes[logits].data.iter().zip(targets) {
            let lv = l.as_f64();
            // softplus(l) - t*l, stable for both signs
            let softplus = if lv > 0.0 {
                lv + (-lv).exp().ln_1p()
            } else {
                lv.exp().ln_1p()
            };
            total += softplus - t * lv;
        }
        let mean = E::of_f64(total / n as f64);
        Ok(self.push(
            vec![1],
            vec![mean],
            Op::SigmoidBce {
                logits,
                targets: Arc::new(targets.to_vec()),
            },
        ))
    }

    fn accumulate(
        &mut self,
        adjoints: &mut [Option<NodeId>],
        target: NodeId,
        contribution: NodeId,
    ) {
        adjoints[target] = Some(match adjoints[target] {
            None => contribution,
            Some(prev) => self.add(prev, contribution).expect("adjoint shapes agree"),
        });
    }

    /// Reverse-mode sweep from a scalar `output`. Returns one adjoint node per
    /// requested id (`None` when the output does not depend on it). The
    /// adjoints are tape nodes, so they can be differentiated again.
    pub fn backward(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
    ) -> TensorResult<Vec<Option<NodeId>>> {
        if numel(&self.nodes[output].shape) != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[output].shape.clone(),
            });
        }
        let mut adjoints: Vec<Option<NodeId>> = vec![None; output + 1];
        let seed_shape = self.nodes[output].shape.clone();
        adjoints[output] = Some(self.leaf(seed_shape, vec![E::one()]));

        for id in (0..=output).rev() {
            let Some(adj) = adjoints[id] else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoints, a, adj);
                    self.accumulate(&mut adjoints, b, adj);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoints, a, adj);
                    let neg = self.affine(adj, -1.0, 0.0);
                    self.accumulate(&mut adjoints, b, neg);
                }
                Op::Mul(a, b) => {
                    let da = self.mul(adj, b).expect("mul backward");
                    let db = self.mul(adj, a).expect("mul backward");
                    self.accumulate(&mut adjoints, a, da);
                    self.accumulate(&mut adjoints, b, db);
                }
                Op::Div(a, b) => {
                    let da = self.div(adj, b).expect("div backward");
                    self.accumulate(&mut adjoints, a, da);
                    // d/db (a/b) = -y/b with y = a/b already on tape
                    let y_over_b = self.div(id, b).expect("div backward");
                    let gb = self.mul(adj, y_over_b).expect("div backward");
                    let gb = self.affine(gb, -1.0, 0.0);
                    self.accumulate(&mut adjoints, b, gb);
                }
                Op::AffineScalar(x, a, _) => {
                    let dx = self.affine(adj, a, 0.0);
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::MulScalarNode(x, s) => {
                    let dx = self.mul_scalar_node(adj, s).expect("scalar backward");
                    self.accumulate(&mut adjoints, x, dx);
                    let prod = self.mul(adj, x).expect("scalar backward");
                    let ds = self.sum_all(prod);
                    self.accumulate(&mut adjoints, s, ds);
                }
                Op::MulMask(x, mask) => {
                    let dx = self.mul_mask(adj, mask);
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Matmul(a, b) => {
                    let da = self.matmul_bt(adj, b).expect("matmul backward");
                    let db = self.matmul_at(a, adj).expect("matmul backward");
                    self.accumulate(&mut adjoints, a, da);
                    self.accumulate(&mut adjoints, b, db);
                }
                Op::MatmulAt(a, b) => {
                    // y = a^T b ; da = b adj^T -> (adj^T b)^T is b*adj^T: [m,k]... use bt
                    let da = self.matmul_bt(b, adj).expect("matmul_at backward");
                    let db = self.matmul(a, adj).expect("matmul_at backward");
                    self.accumulate(&mut adjoints, a, da);
                    self.accumulate(&mut adjoints, b, db);
                }
                Op::MatmulBt(a, b) => {
                    let da = self.matmul(adj, b).expect("matmul_bt backward");
                    let db = self.matmul_at(adj, a).expect("matmul_bt backward");
                    self.accumulate(&mut adjoints, a, da);
                    self.accumulate(&mut adjoints, b, db);
                }
                Op::Conv2d { x, k, geom } => {
                    let stride = (geom.sh, geom.sw);
                    let pad = pad_of(&geom);
                    let x_shape = self.nodes[x].shape.clone();
                    let k_shape = self.nodes[k].shape.clone();
                    let dx = self
                        .conv2d_dx(adj, k, &x_shape, stride, pad)
                        .expect("conv backward");
                    let dk = self
                        .conv2d_dk(x, adj, &k_shape, stride, pad)
                        .expect("conv backward");
                    self.accumulate(&mut adjoints, x, dx);
                    self.accumulate(&mut adjoints, k, dk);
                }
                Op::Conv2dDx { gy, k, geom } => {
                    // z = dx(gy, k): d/dgy = conv(adj, k); d/dk = dk(adj, gy)
                    let stride = (geom.sh, geom.sw);
                    let pad = pad_of(&geom);
                    let k_shape = self.nodes[k].shape.clone();
                    let dgy = self.conv2d(adj, k, stride, pad).expect("conv_dx backward");
                    let dk = self
                        .conv2d_dk(adj, gy, &k_shape, stride, pad)
                        .expect("conv_dx backward");
                    self.accumulate(&mut adjoints, gy, dgy);
                    self.accumulate(&mut adjoints, k, dk);
                }
                Op::Conv2dDk { x, gy, geom } => {
                    // w = dk(x, gy): d/dx = dx(gy, adj); d/dgy = conv(x, adj)
                    let stride = (geom.sh, geom.sw);
                    let pad = pad_of(&geom);
                    let x_shape = self.nodes[x].shape.clone();
                    let dx = self
                        .conv2d_dx(gy, adj, &x_shape, stride, pad)
                        .expect("conv_dk backward");
                    let dgy = self.conv2d(x, adj, stride, pad).expect("conv_dk backward");
                    self.accumulate(&mut adjoints, x, dx);
                    self.accumulate(&mut adjoints, gy, dgy);
                }
                Op::Gather(x, idx) => {
                    let x_shape = self.nodes[x].shape.clone();
                    let dx = self.scatter(adj, idx, x_shape);
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Scatter(g, idx) => {
                    let g_shape = self.nodes[g].shape.clone();
                    let dg = self.gather(adj, idx, g_shape);
                    self.accumulate(&mut adjoints, g, dg);
                }
                Op::Relu(x) => {
                    let mask: Vec<f64> = self.nodes[x]
                        .data
                        .iter()
                        .map(|&v| if v > E::zero() { 1.0 } else { 0.0 })
                        .collect();
                    let dx = self.mul_mask(adj, Arc::new(mask));
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::LeakyRelu(x, alpha) => {
                    let mask: Vec<f64> = self.nodes[x]
                        .data
                        .iter()
                        .map(|&v| if v > E::zero() { 1.0 } else { alpha })
                        .collect();
                    let dx = self.mul_mask(adj, Arc::new(mask));
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Tanh(x) => {
                    // 1 - y^2, built from tape values so it stays differentiable
                    let y2 = self.mul(id, id).expect("tanh backward");
                    let f = self.affine(y2, -1.0, 1.0);
                    let dx = self.mul(adj, f).expect("tanh backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Sigmoid(x) => {
                    let one_minus = self.affine(id, -1.0, 1.0);
                    let f = self.mul(id, one_minus).expect("sigmoid backward");
                    let dx = self.mul(adj, f).expect("sigmoid backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Exp(x) => {
                    let dx = self.mul(adj, id).expect("exp backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Ln(x) => {
                    let dx = self.div(adj, x).expect("ln backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::Sqrt(x) => {
                    let two_y = self.affine(id, 2.0, 0.0);
                    let dx = self.div(adj, two_y).expect("sqrt backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::AddChannel(x, c) => {
                    self.accumulate(&mut adjoints, x, adj);
                    let dc = self.reduce_channel_sum(adj).expect("add_channel backward");
                    self.accumulate(&mut adjoints, c, dc);
                }
                Op::AddRow(x, r) => {
                    self.accumulate(&mut adjoints, x, adj);
                    let dr = self.reduce_col_sum(adj).expect("add_row backward");
                    self.accumulate(&mut adjoints, r, dr);
                }
                Op::ReduceChannelSum(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self
                        .broadcast_channel(adj, &shape)
                        .expect("reduce_channel backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::BroadcastChannel(c) => {
                    let dc = self.reduce_channel_sum(adj).expect("broadcast backward");
                    self.accumulate(&mut adjoints, c, dc);
                }
                Op::ReduceColSum(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.broadcast_row(adj, &shape).expect("reduce_col backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::BroadcastRow(r) => {
                    let dr = self.reduce_col_sum(adj).expect("broadcast_row backward");
                    self.accumulate(&mut adjoints, r, dr);
                }
                Op::SumAll(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.broadcast_scalar(adj, &shape);
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::SumPerSample(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self
                        .broadcast_per_sample(adj, &shape)
                        .expect("sum_per_sample backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::BroadcastPerSample(v) => {
                    let dv = self.sum_per_sample(adj).expect("broadcast backward");
                    self.accumulate(&mut adjoints, v, dv);
                }
                Op::BroadcastScalar(s) => {
                    let ds = self.sum_all(adj);
                    self.accumulate(&mut adjoints, s, ds);
                }
                Op::Reshape(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.reshape(adj, &shape).expect("reshape backward");
                    self.accumulate(&mut adjoints, x, dx);
                }
                Op::SoftmaxXent { logits, labels } => {
                    let c = self.nodes[logits].shape[1];
                    let n = self.nodes[logits].shape[0];
                    let scale = E::of_f64(n as f64);
                    let mut grad = self.softmax_values(logits);
                    for (i, &lbl) in labels.iter().enumerate() {
                        grad[i * c + lbl] = grad[i * c + lbl] - E::one();
                    }
                    for g in &mut grad {
                        *g = *g / scale;
                    }
                    let shape = self.nodes[logits].shape.clone();
                    let gleaf = self.leaf(shape, grad);
                    let dx = self.mul_scalar_node(gleaf, adj).expect("xent backward");
                    self.accumulate(&mut adjoints, logits, dx);
                }
                Op::SigmoidBce { logits, targets } => {
                    let n = self.nodes[logits].shape[0] as f64;
                    let grad: Vec<E> = self.nodes[logits]
                        .data
                        .iter()
                        .zip(targets.iter())
                        .map(|(&l, &t)| {
                            let s = 1.0 / (1.0 + (-l.as_f64()).exp());
                            E::of_f64((s - t) / n)
                        })
                        .collect();
                    let shape = self.nodes[logits].shape.clone();
                    let gleaf = self.leaf(shape, grad);
                    let dx = self.mul_scalar_node(gleaf, adj).expect("bce backward");
                    self.accumulate(&mut adjoints, logits, dx);
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|&id| if id <= output { adjoints[id] } else { None })
            .collect())
    }
}

fn pad_of(geom: &ConvGeometry) -> Padding {
    geom.padding
}
