//! Computation tape: forward op builders and the reverse sweep.

use super::params::{ParamId, ParamStore};
use super::{matmul, Scalar, Tensor};
use thiserror::Error;

/// Handle to a node on the tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Error, Debug, PartialEq, Eq)]
pub enum TensorError {
    #[error("backward already ran on this graph; build a fresh graph per step")]
    BackwardAlreadyRan,
    #[error("backward root must be a 1x1 scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

/// Backprop record: which op produced a node and from which parents.
enum Op<T> {
    Leaf,
    Param(ParamId),
    /// Constant already folded into the value at build time; gradient passes
    /// through to the single parent untouched. Used to inject drawn noise.
    AddConst(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    SelectRows(NodeId, Vec<usize>),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    /// Normalization stats computed from the input at forward time and cached
    /// for the backward sweep and for running-statistic updates.
    BatchNormTrain {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<T>,
        var: Vec<T>,
    },
    BatchNormEval {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<T>,
        var: Vec<T>,
    },
    Relu(NodeId),
    Silu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    SoftmaxRows(NodeId),
    MeanRows(NodeId),
    SumAll(NodeId),
    Log(NodeId),
    Pick(NodeId, usize),
    CrossEntropyLogits {
        x: NodeId,
        label: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op<T>,
}

/// Epsilon inside every variance-based normalization.
pub const NORM_EPS: f64 = 1e-5;

/// One forward pass recorded as a tape. Parents always precede children, so
/// a single reverse walk visits nodes in valid topological order.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    ran_backward: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            ran_backward: false,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        assert!(
            !self.ran_backward,
            "graph is frozen after backward; build a fresh graph"
        );
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, n: NodeId) -> &Tensor<T> {
        &self.nodes[n.0].value
    }

    /// Gradient of the last backward root w.r.t. node `n`; `None` if the node
    /// does not influence the root.
    pub fn grad(&self, n: NodeId) -> Option<&Tensor<T>> {
        self.nodes[n.0].grad.as_ref()
    }

    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(t, Op::Leaf)
    }

    /// Leaf bound to a stored parameter; the value is copied in so the store
    /// stays free to mutate between steps.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "add: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let mut out = va.clone();
        out.add_assign(vb);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "sub: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "mul: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|&x| x * s).collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(out, Op::Scale(a, s))
    }

    /// `a + c` where `c` is a constant that receives no gradient.
    pub fn add_const(&mut self, a: NodeId, c: &Tensor<T>) -> NodeId {
        let va = &self.nodes[a.0].value;
        assert_eq!(
            va.shape(),
            c.shape(),
            "add_const: shape mismatch {:?} vs {:?}",
            va.shape(),
            c.shape()
        );
        let mut out = va.clone();
        out.add_assign(c);
        self.push(out, Op::AddConst(a))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = matmul(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(out, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.t();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols: empty part list");
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts
            .iter()
            .map(|p| {
                let v = &self.nodes[p.0].value;
                assert_eq!(
                    v.rows(),
                    rows,
                    "concat_cols: row mismatch {:?} vs {:?}",
                    v.shape(),
                    self.nodes[parts[0].0].value.shape()
                );
                v.cols()
            })
            .sum();
        let mut out = Tensor::zeros(vec![rows, total]);
        let mut off = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            let c = v.cols();
            for r in 0..rows {
                let src = &v.data()[r * c..(r + 1) * c];
                out.data_mut()[r * total + off..r * total + off + c].copy_from_slice(src);
            }
            off += c;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, c0: usize, c1: usize) -> NodeId {
        let va = &self.nodes[a.0].value;
        let (rows, cols) = (va.rows(), va.cols());
        assert!(
            c0 < c1 && c1 <= cols,
            "slice_cols: range {}..{} out of bounds for shape {:?}",
            c0,
            c1,
            va.shape()
        );
        let w = c1 - c0;
        let mut out = Tensor::zeros(vec![rows, w]);
        for r in 0..rows {
            out.data_mut()[r * w..(r + 1) * w]
                .copy_from_slice(&va.data()[r * cols + c0..r * cols + c1]);
        }
        self.push(out, Op::SliceCols(a, c0, c1))
    }

    /// Gather rows by index; the complement receives zero gradient.
    pub fn select_rows(&mut self, a: NodeId, idx: &[usize]) -> NodeId {
        let va = &self.nodes[a.0].value;
        let (rows, cols) = (va.rows(), va.cols());
        assert!(!idx.is_empty(), "select_rows: empty index list");
        let mut out = Tensor::zeros(vec![idx.len(), cols]);
        for (r, &i) in idx.iter().enumerate() {
            assert!(
                i < rows,
                "select_rows: index {} out of bounds for shape {:?}",
                i,
                va.shape()
            );
            out.data_mut()[r * cols..(r + 1) * cols]
                .copy_from_slice(&va.data()[i * cols..(i + 1) * cols]);
        }
        self.push(out, Op::SelectRows(a, idx.to_vec()))
    }

    /// 1-D convolution along the row (sequence) axis with stride 1 and "same"
    /// zero padding. `x`: `[n, c_in]`, `w`: `[c_out, c_in, k]` (k odd),
    /// `b`: `[c_out]`; output `[n, c_out]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (vx, vw, vb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        let ws = vw.shape();
        assert_eq!(ws.len(), 3, "conv1d: weight must be rank 3, got {:?}", ws);
        let (c_out, c_in, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(k % 2, 1, "conv1d: kernel length {} must be odd", k);
        assert_eq!(
            vx.cols(),
            c_in,
            "conv1d: input shape {:?} vs weight shape {:?}",
            vx.shape(),
            ws
        );
        assert_eq!(
            vb.shape(),
            &[c_out],
            "conv1d: bias shape {:?} vs weight shape {:?}",
            vb.shape(),
            ws
        );
        let n = vx.rows();
        let pad = k / 2;
        let mut out = Tensor::zeros(vec![n, c_out]);
        let xd = vx.data();
        let wd = vw.data();
        let od = out.data_mut();
        for pos in 0..n {
            for o in 0..c_out {
                let mut acc = vb.data()[o];
                for t in 0..k {
                    let src = pos + t;
                    if src < pad || src - pad >= n {
                        continue;
                    }
                    let src = src - pad;
                    let xrow = &xd[src * c_in..(src + 1) * c_in];
                    let wrow = &wd[o * c_in * k + t..];
                    for ci in 0..c_in {
                        acc += wrow[ci * k] * xrow[ci];
                    }
                }
                od[pos * c_out + o] = acc;
            }
        }
        self.push(out, Op::Conv1d { x, w, b })
    }

    /// Batch normalization over the row axis per channel, statistics computed
    /// from this input (training mode). Returns the node plus the per-channel
    /// mean and biased variance for running-statistic updates.
    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> (NodeId, Vec<T>, Vec<T>) {
        let vx = &self.nodes[x.0].value;
        let (n, c) = (vx.rows(), vx.cols());
        self.check_norm_affine("batchnorm", c, gamma, beta);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let inv_n = T::one() / T::from_f64(n as f64);
        for r in 0..n {
            for j in 0..c {
                mean[j] += self.nodes[x.0].value.data()[r * c + j];
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_n;
        }
        for r in 0..n {
            for j in 0..c {
                let d = self.nodes[x.0].value.data()[r * c + j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v *= inv_n;
        }
        let out = self.bn_forward(x, gamma, beta, &mean, &var);
        let node = self.push(
            out,
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                var: var.clone(),
            },
        );
        (node, mean, var)
    }

    /// Batch normalization with frozen running statistics (eval mode).
    pub fn batchnorm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[T],
        running_var: &[T],
    ) -> NodeId {
        let c = self.nodes[x.0].value.cols();
        self.check_norm_affine("batchnorm", c, gamma, beta);
        assert_eq!(running_mean.len(), c, "batchnorm: running mean length");
        assert_eq!(running_var.len(), c, "batchnorm: running var length");
        let out = self.bn_forward(x, gamma, beta, running_mean, running_var);
        self.push(
            out,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean: running_mean.to_vec(),
                var: running_var.to_vec(),
            },
        )
    }

    fn bn_forward(
        &self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        var: &[T],
    ) -> Tensor<T> {
        let vx = &self.nodes[x.0].value;
        let (n, c) = (vx.rows(), vx.cols());
        let g = self.nodes[gamma.0].value.data();
        let b = self.nodes[beta.0].value.data();
        let eps = T::from_f64(NORM_EPS);
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut out = Tensor::zeros(vec![n, c]);
        for r in 0..n {
            for j in 0..c {
                let xhat = (vx.data()[r * c + j] - mean[j]) * inv[j];
                out.data_mut()[r * c + j] = g[j] * xhat + b[j];
            }
        }
        out
    }

    fn check_norm_affine(&self, what: &str, c: usize, gamma: NodeId, beta: NodeId) {
        let gs = self.nodes[gamma.0].value.shape().to_vec();
        let bs = self.nodes[beta.0].value.shape().to_vec();
        assert_eq!(gs, vec![c], "{}: gamma shape {:?} vs width {}", what, gs, c);
        assert_eq!(bs, vec![c], "{}: beta shape {:?} vs width {}", what, bs, c);
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va
            .data()
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(out, Op::Relu(a))
    }

    /// SiLU (swish): `x * sigmoid(x)`.
    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|&x| x * sigmoid(x)).collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(out, Op::Silu(a))
    }

    /// Layer normalization over the last (column) dimension with a learnable
    /// affine, one gamma/beta pair shared across rows.
    pub fn layernorm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let vx = &self.nodes[x.0].value;
        let (n, c) = (vx.rows(), vx.cols());
        self.check_norm_affine("layernorm", c, gamma, beta);
        let g = self.nodes[gamma.0].value.data();
        let b = self.nodes[beta.0].value.data();
        let eps = T::from_f64(NORM_EPS);
        let inv_c = T::one() / T::from_f64(c as f64);
        let mut out = Tensor::zeros(vec![n, c]);
        for r in 0..n {
            let row = &vx.data()[r * c..(r + 1) * c];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean *= inv_c;
            let mut var = T::zero();
            for &v in row {
                var += (v - mean) * (v - mean);
            }
            var *= inv_c;
            let inv = T::one() / (var + eps).sqrt();
            for j in 0..c {
                out.data_mut()[r * c + j] = g[j] * ((row[j] - mean) * inv) + b[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta })
    }

    /// Row-wise softmax with max subtraction, safe for extreme logits.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let (n, c) = (va.rows(), va.cols());
        let mut out = Tensor::zeros(vec![n, c]);
        for r in 0..n {
            let row = &va.data()[r * c..(r + 1) * c];
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            let orow = &mut out.data_mut()[r * c..(r + 1) * c];
            for j in 0..c {
                let e = (row[j] - max).exp();
                orow[j] = e;
                denom += e;
            }
            for v in orow.iter_mut() {
                *v = *v / denom;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Column means: `[n, c] -> [1, c]`. Global average pooling over rows.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let (n, c) = (va.rows(), va.cols());
        let inv_n = T::one() / T::from_f64(n as f64);
        let mut out = Tensor::zeros(vec![1, c]);
        for r in 0..n {
            for j in 0..c {
                out.data_mut()[j] += va.data()[r * c + j];
            }
        }
        for v in out.data_mut() {
            *v *= inv_n;
        }
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.data().iter().cloned().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Elementwise natural log; inputs must be positive.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|&x| x.ln()).collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(out, Op::Log(a))
    }

    /// Extract one element (flat index) as a 1x1 scalar node.
    pub fn pick(&mut self, a: NodeId, flat: usize) -> NodeId {
        let va = &self.nodes[a.0].value;
        assert!(
            flat < va.numel(),
            "pick: index {} out of bounds for shape {:?}",
            flat,
            va.shape()
        );
        let out = Tensor::scalar(va.data()[flat]);
        self.push(out, Op::Pick(a, flat))
    }

    /// Cross entropy of a `[1, m]` logit row against an integer label,
    /// computed through a stable log-sum-exp.
    pub fn cross_entropy_logits(&mut self, x: NodeId, label: usize) -> NodeId {
        let vx = &self.nodes[x.0].value;
        assert_eq!(
            vx.rows(),
            1,
            "cross_entropy: expected [1, m] logits, got {:?}",
            vx.shape()
        );
        let m = vx.cols();
        assert!(
            label < m,
            "cross_entropy: label {} out of range for {} classes",
            label,
            m
        );
        let row = vx.data();
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for &v in row {
            denom += (v - max).exp();
        }
        let loss = max + denom.ln() - row[label];
        self.push(Tensor::scalar(loss), Op::CrossEntropyLogits { x, label })
    }

    /// Reverse sweep from a scalar root. Gradients of every node reachable
    /// from the root become available through [`Graph::grad`].
    pub fn backward(&mut self, root: NodeId) -> Result<(), TensorError> {
        if self.ran_backward {
            return Err(TensorError::BackwardAlreadyRan);
        }
        let rv = &self.nodes[root.0].value;
        if rv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(rv.shape().to_vec()));
        }
        self.ran_backward = true;
        self.nodes[root.0].grad = Some(Tensor::scalar(T::one()));

        for i in (0..=root.0).rev() {
            let Some(dy) = self.nodes[i].grad.take() else {
                continue;
            };
            self.step_backward(i, &dy);
            self.nodes[i].grad = Some(dy);
        }
        Ok(())
    }

    fn add_grad(&mut self, n: NodeId, delta: &Tensor<T>) {
        let slot = &mut self.nodes[n.0].grad;
        match slot {
            Some(g) => g.add_assign(delta),
            None => *slot = Some(delta.clone()),
        }
    }

    fn grad_or_zeros(&mut self, n: NodeId) -> &mut Tensor<T> {
        let shape = self.nodes[n.0].value.shape().to_vec();
        self.nodes[n.0]
            .grad
            .get_or_insert_with(|| Tensor::zeros(shape))
    }

    fn step_backward(&mut self, i: usize, dy: &Tensor<T>) {
        // Ops are dispatched on a cloned lightweight view of the record to
        // keep the borrow checker out of the per-op arithmetic.
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::AddConst(a) => {
                let a = *a;
                self.add_grad(a, dy);
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, dy);
                self.add_grad(b, dy);
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, dy);
                let gb = self.grad_or_zeros(b);
                for (g, &d) in gb.data_mut().iter_mut().zip(dy.data()) {
                    *g -= d;
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let da: Vec<T> = self.nodes[b.0]
                    .value
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&vb, &d)| vb * d)
                    .collect();
                let db: Vec<T> = self.nodes[a.0]
                    .value
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&va, &d)| va * d)
                    .collect();
                let shape = dy.shape().to_vec();
                self.add_grad(a, &Tensor::new(shape.clone(), da));
                self.add_grad(b, &Tensor::new(shape, db));
            }
            Op::Scale(a, s) => {
                let (a, s) = (*a, *s);
                let data = dy.data().iter().map(|&d| d * s).collect();
                self.add_grad(a, &Tensor::new(dy.shape().to_vec(), data));
            }
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let da = matmul(dy, &self.nodes[b.0].value.t());
                let db = matmul(&self.nodes[a.0].value.t(), dy);
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::Transpose(a) => {
                let a = *a;
                self.add_grad(a, &dy.t());
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let rows = dy.rows();
                let total = dy.cols();
                let mut off = 0;
                for p in parts {
                    let c = self.nodes[p.0].value.cols();
                    let mut dp = Tensor::zeros(vec![rows, c]);
                    for r in 0..rows {
                        dp.data_mut()[r * c..(r + 1) * c]
                            .copy_from_slice(&dy.data()[r * total + off..r * total + off + c]);
                    }
                    self.add_grad(p, &dp);
                    off += c;
                }
            }
            Op::SliceCols(a, c0, _c1) => {
                let (a, c0) = (*a, *c0);
                let cols = self.nodes[a.0].value.cols();
                let w = dy.cols();
                let ga = self.grad_or_zeros(a);
                for r in 0..dy.rows() {
                    for j in 0..w {
                        ga.data_mut()[r * cols + c0 + j] += dy.data()[r * w + j];
                    }
                }
            }
            Op::SelectRows(a, idx) => {
                let a = *a;
                let idx = idx.clone();
                let cols = dy.cols();
                let ga = self.grad_or_zeros(a);
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..cols {
                        ga.data_mut()[i * cols + j] += dy.data()[r * cols + j];
                    }
                }
            }
            Op::Conv1d { x, w, b } => {
                let (x, w, b) = (*x, *w, *b);
                let ws = self.nodes[w.0].value.shape().to_vec();
                let (c_out, c_in, k) = (ws[0], ws[1], ws[2]);
                let pad = k / 2;
                let n = self.nodes[x.0].value.rows();

                let mut dx = Tensor::zeros(vec![n, c_in]);
                let mut dw = Tensor::zeros(ws);
                let mut db = Tensor::zeros(vec![c_out]);
                {
                    let xd = self.nodes[x.0].value.data();
                    let wd = self.nodes[w.0].value.data();
                    for pos in 0..n {
                        for o in 0..c_out {
                            let d = dy.data()[pos * c_out + o];
                            db.data_mut()[o] += d;
                            for t in 0..k {
                                let src = pos + t;
                                if src < pad || src - pad >= n {
                                    continue;
                                }
                                let src = src - pad;
                                for ci in 0..c_in {
                                    dw.data_mut()[o * c_in * k + ci * k + t] +=
                                        d * xd[src * c_in + ci];
                                    dx.data_mut()[src * c_in + ci] +=
                                        d * wd[o * c_in * k + ci * k + t];
                                }
                            }
                        }
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(w, &dw);
                self.add_grad(b, &db);
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                mean,
                var,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (mean, var) = (mean.clone(), var.clone());
                let vx = self.nodes[x.0].value.clone();
                let (n, c) = (vx.rows(), vx.cols());
                let g = self.nodes[gamma.0].value.data().to_vec();
                let eps = T::from_f64(NORM_EPS);
                let inv_n = T::one() / T::from_f64(n as f64);

                let mut dgamma = Tensor::zeros(vec![c]);
                let mut dbeta = Tensor::zeros(vec![c]);
                let mut dx = Tensor::zeros(vec![n, c]);
                for j in 0..c {
                    let inv = T::one() / (var[j] + eps).sqrt();
                    let mut sum_dy = T::zero();
                    let mut sum_dy_xhat = T::zero();
                    for r in 0..n {
                        let xhat = (vx.data()[r * c + j] - mean[j]) * inv;
                        let d = dy.data()[r * c + j];
                        sum_dy += d;
                        sum_dy_xhat += d * xhat;
                    }
                    dbeta.data_mut()[j] = sum_dy;
                    dgamma.data_mut()[j] = sum_dy_xhat;
                    for r in 0..n {
                        let xhat = (vx.data()[r * c + j] - mean[j]) * inv;
                        let d = dy.data()[r * c + j];
                        dx.data_mut()[r * c + j] = g[j]
                            * inv
                            * (d - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                var,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (mean, var) = (mean.clone(), var.clone());
                let vx = self.nodes[x.0].value.clone();
                let (n, c) = (vx.rows(), vx.cols());
                let g = self.nodes[gamma.0].value.data().to_vec();
                let eps = T::from_f64(NORM_EPS);

                let mut dgamma = Tensor::zeros(vec![c]);
                let mut dbeta = Tensor::zeros(vec![c]);
                let mut dx = Tensor::zeros(vec![n, c]);
                for j in 0..c {
                    let inv = T::one() / (var[j] + eps).sqrt();
                    for r in 0..n {
                        let d = dy.data()[r * c + j];
                        let xhat = (vx.data()[r * c + j] - mean[j]) * inv;
                        dbeta.data_mut()[j] += d;
                        dgamma.data_mut()[j] += d * xhat;
                        dx.data_mut()[r * c + j] = d * g[j] * inv;
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::Relu(a) => {
                let a = *a;
                let data: Vec<T> = self.nodes[a.0]
                    .value
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&x, &d)| if x > T::zero() { d } else { T::zero() })
                    .collect();
                self.add_grad(a, &Tensor::new(dy.shape().to_vec(), data));
            }
            Op::Silu(a) => {
                let a = *a;
                let data: Vec<T> = self.nodes[a.0]
                    .value
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&x, &d)| {
                        let s = sigmoid(x);
                        d * s * (T::one() + x * (T::one() - s))
                    })
                    .collect();
                self.add_grad(a, &Tensor::new(dy.shape().to_vec(), data));
            }
            Op::LayerNorm { x, gamma, beta } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let vx = self.nodes[x.0].value.clone();
                let (n, c) = (vx.rows(), vx.cols());
                let g = self.nodes[gamma.0].value.data().to_vec();
                let eps = T::from_f64(NORM_EPS);
                let inv_c = T::one() / T::from_f64(c as f64);

                let mut dgamma = Tensor::zeros(vec![c]);
                let mut dbeta = Tensor::zeros(vec![c]);
                let mut dx = Tensor::zeros(vec![n, c]);
                for r in 0..n {
                    let row = &vx.data()[r * c..(r + 1) * c];
                    let mut mean = T::zero();
                    for &v in row {
                        mean += v;
                    }
                    mean *= inv_c;
                    let mut var = T::zero();
                    for &v in row {
                        var += (v - mean) * (v - mean);
                    }
                    var *= inv_c;
                    let inv = T::one() / (var + eps).sqrt();

                    let mut sum_gd = T::zero();
                    let mut sum_gd_xhat = T::zero();
                    for j in 0..c {
                        let xhat = (row[j] - mean) * inv;
                        let d = dy.data()[r * c + j];
                        dbeta.data_mut()[j] += d;
                        dgamma.data_mut()[j] += d * xhat;
                        let gd = g[j] * d;
                        sum_gd += gd;
                        sum_gd_xhat += gd * xhat;
                    }
                    for j in 0..c {
                        let xhat = (row[j] - mean) * inv;
                        let gd = g[j] * dy.data()[r * c + j];
                        dx.data_mut()[r * c + j] =
                            inv * (gd - inv_c * sum_gd - xhat * inv_c * sum_gd_xhat);
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::SoftmaxRows(a) => {
                let a = *a;
                let y = self.nodes[i].value.clone();
                let (n, c) = (y.rows(), y.cols());
                let mut dx = Tensor::zeros(vec![n, c]);
                for r in 0..n {
                    let yrow = &y.data()[r * c..(r + 1) * c];
                    let drow = &dy.data()[r * c..(r + 1) * c];
                    let mut dot = T::zero();
                    for j in 0..c {
                        dot += yrow[j] * drow[j];
                    }
                    for j in 0..c {
                        dx.data_mut()[r * c + j] = yrow[j] * (drow[j] - dot);
                    }
                }
                self.add_grad(a, &dx);
            }
            Op::MeanRows(a) => {
                let a = *a;
                let n = self.nodes[a.0].value.rows();
                let c = self.nodes[a.0].value.cols();
                let inv_n = T::one() / T::from_f64(n as f64);
                let ga = self.grad_or_zeros(a);
                for r in 0..n {
                    for j in 0..c {
                        ga.data_mut()[r * c + j] += dy.data()[j] * inv_n;
                    }
                }
            }
            Op::SumAll(a) => {
                let a = *a;
                let d = dy.item();
                let ga = self.grad_or_zeros(a);
                for g in ga.data_mut() {
                    *g += d;
                }
            }
            Op::Log(a) => {
                let a = *a;
                let data: Vec<T> = self.nodes[a.0]
                    .value
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&x, &d)| d / x)
                    .collect();
                self.add_grad(a, &Tensor::new(dy.shape().to_vec(), data));
            }
            Op::Pick(a, flat) => {
                let (a, flat) = (*a, *flat);
                let d = dy.item();
                let ga = self.grad_or_zeros(a);
                ga.data_mut()[flat] += d;
            }
            Op::CrossEntropyLogits { x, label } => {
                let (x, label) = (*x, *label);
                let vx = self.nodes[x.0].value.clone();
                let m = vx.cols();
                let d = dy.item();
                let max = vx.data().iter().cloned().fold(T::neg_infinity(), T::max);
                let mut denom = T::zero();
                for &v in vx.data() {
                    denom += (v - max).exp();
                }
                let mut dx = Tensor::zeros(vec![1, m]);
                for j in 0..m {
                    let p = (vx.data()[j] - max).exp() / denom;
                    let onehot = if j == label { T::one() } else { T::zero() };
                    dx.data_mut()[j] = d * (p - onehot);
                }
                self.add_grad(x, &dx);
            }
        }
    }

    /// Fold gradients of every parameter leaf into the store, scaled by
    /// `scale` (use `1/batch` to average per-sample graphs).
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>, scale: T) {
        for node in &self.nodes {
            if let (Op::Param(pid), Some(g)) = (&node.op, &node.grad) {
                let dst = store.grad_mut(*pid);
                for (d, &s) in dst.data_mut().iter_mut().zip(g.data()) {
                    *d += s * scale;
                }
            }
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
