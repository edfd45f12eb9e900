use super::{gemm, Scalar, Tensor};

/// Handle to a node in a [`Graph`]. Cheap to copy; only meaningful for
/// the graph that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        trans_a: bool,
        trans_b: bool,
    },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Relu { x: usize },
    Sigmoid { x: usize },
    Tanh { x: usize },
    Exp { x: usize },
    Log { x: usize },
    Neg { x: usize },
    Softplus { x: usize },
    Scale { x: usize, k: f64 },
    SoftmaxCols { x: usize },
    LogSoftmaxCols { x: usize },
    Transpose { x: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, lo: usize, hi: usize },
    GatherRows { x: usize, ids: Vec<usize> },
    SumAll { x: usize },
    Detach,
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation graph. Ops append nodes to a tape;
/// [`Graph::backward`] sweeps the tape in reverse, so construction
/// order is already a valid topological order.
#[derive(Default)]
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: participates in backward.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the latest [`Graph::backward`]; `None`
    /// until backward has run over this node.
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op, requires_grad: bool) -> Var {
        assert_eq!(
            value.shape().len(),
            2,
            "graph tensors are rank-2, got shape {:?}",
            value.shape()
        );
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn val(&self, idx: usize) -> &Tensor<F> {
        &self.nodes[idx].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_ex(a, false, b, false)
    }

    /// Matrix product with optional in-place transposes of either operand.
    pub fn matmul_ex(&mut self, a: Var, trans_a: bool, b: Var, trans_b: bool) -> Var {
        let out = {
            let av = self.val(a.0);
            let bv = self.val(b.0);
            let m = if trans_a { av.cols() } else { av.rows() };
            let n = if trans_b { bv.rows() } else { bv.cols() };
            let mut out = Tensor::zeros(vec![m, n]);
            gemm(av, trans_a, bv, trans_b, F::zero(), &mut out);
            out
        };
        let rg = self.requires(a.0) || self.requires(b.0);
        self.push(
            out,
            Op::MatMul {
                a: a.0,
                b: b.0,
                trans_a,
                trans_b,
            },
            rg,
        )
    }

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(F, F) -> F,
        op: Op,
    ) -> Var {
        let out = {
            let av = self.val(a.0);
            let bv = self.val(b.0);
            assert_eq!(
                av.shape(),
                bv.shape(),
                "{name} shape mismatch: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            );
            let data = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::from_vec(av.shape().to_vec(), data)
        };
        let rg = self.requires(a.0) || self.requires(b.0);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    fn unary(&mut self, x: Var, f: impl Fn(F) -> F, op: Op) -> Var {
        let out = {
            let xv = self.val(x.0);
            let data = xv.data().iter().map(|&v| f(v)).collect();
            Tensor::from_vec(xv.shape().to_vec(), data)
        };
        let rg = self.requires(x.0);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(F::zero()), Op::Relu { x: x.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid_scalar, Op::Sigmoid { x: x.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh { x: x.0 })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), Op::Exp { x: x.0 })
    }

    pub fn log(&mut self, x: Var) -> Var {
        {
            let xv = self.val(x.0);
            for (i, &v) in xv.data().iter().enumerate() {
                assert!(
                    v > F::zero(),
                    "log of non-positive value {v} at flat index {i}"
                );
            }
        }
        self.unary(x, |v| v.ln(), Op::Log { x: x.0 })
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg { x: x.0 })
    }

    /// `ln(1 + e^x)`, evaluated as `max(x,0) + ln(1 + e^-|x|)` so large
    /// magnitudes never overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.max(F::zero()) + (-v.abs()).exp().ln_1p(),
            Op::Softplus { x: x.0 },
        )
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let kf = F::from_f64(k);
        self.unary(x, |v| v * kf, Op::Scale { x: x.0, k })
    }

    /// Each column normalized to a probability distribution, with
    /// max-subtraction for stability.
    pub fn softmax_columns(&mut self, x: Var) -> Var {
        let out = {
            let xv = self.val(x.0);
            let (r, c) = (xv.rows(), xv.cols());
            let mut out = Tensor::zeros(vec![r, c]);
            for j in 0..c {
                let mut mx = F::neg_infinity();
                for i in 0..r {
                    mx = mx.max(xv.at(i, j));
                }
                let mut sum = F::zero();
                for i in 0..r {
                    let e = (xv.at(i, j) - mx).exp();
                    out.data_mut()[i * c + j] = e;
                    sum += e;
                }
                for i in 0..r {
                    out.data_mut()[i * c + j] /= sum;
                }
            }
            out
        };
        let rg = self.requires(x.0);
        self.push(out, Op::SoftmaxCols { x: x.0 }, rg)
    }

    /// `x - logsumexp(column)`, the stable path to log-probabilities.
    pub fn log_softmax_columns(&mut self, x: Var) -> Var {
        let out = {
            let xv = self.val(x.0);
            let (r, c) = (xv.rows(), xv.cols());
            let mut out = Tensor::zeros(vec![r, c]);
            for j in 0..c {
                let mut mx = F::neg_infinity();
                for i in 0..r {
                    mx = mx.max(xv.at(i, j));
                }
                let mut sum = F::zero();
                for i in 0..r {
                    sum += (xv.at(i, j) - mx).exp();
                }
                let lse = mx + sum.ln();
                for i in 0..r {
                    out.data_mut()[i * c + j] = xv.at(i, j) - lse;
                }
            }
            out
        };
        let rg = self.requires(x.0);
        self.push(out, Op::LogSoftmaxCols { x: x.0 }, rg)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = {
            let xv = self.val(x.0);
            transpose_tensor(xv)
        };
        let rg = self.requires(x.0);
        self.push(out, Op::Transpose { x: x.0 }, rg)
    }

    /// Concatenate along `axis` (0 = stack rows, 1 = stack columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Var {
        assert!(!inputs.is_empty(), "concat needs at least one input");
        assert!(axis < 2, "concat axis must be 0 or 1, got {axis}");
        let out = {
            let tensors: Vec<&Tensor<F>> = inputs.iter().map(|v| self.val(v.0)).collect();
            let other = 1 - axis;
            let fixed = tensors[0].shape()[other];
            for t in &tensors {
                assert_eq!(
                    t.shape()[other],
                    fixed,
                    "concat axis {axis}: extent on axis {other} differs ({:?} vs {:?})",
                    t.shape(),
                    tensors[0].shape()
                );
            }
            let total: usize = tensors.iter().map(|t| t.shape()[axis]).sum();
            if axis == 0 {
                let mut data = Vec::with_capacity(total * fixed);
                for t in &tensors {
                    data.extend_from_slice(t.data());
                }
                Tensor::from_vec(vec![total, fixed], data)
            } else {
                let mut out = Tensor::zeros(vec![fixed, total]);
                let mut off = 0;
                for t in &tensors {
                    let c = t.cols();
                    for i in 0..fixed {
                        for j in 0..c {
                            out.data_mut()[i * total + off + j] = t.at(i, j);
                        }
                    }
                    off += c;
                }
                out
            }
        };
        let rg = inputs.iter().any(|v| self.requires(v.0));
        self.push(
            out,
            Op::Concat {
                inputs: inputs.iter().map(|v| v.0).collect(),
                axis,
            },
            rg,
        )
    }

    /// Contiguous window `[lo, hi)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, lo: usize, hi: usize) -> Var {
        assert!(axis < 2, "slice axis must be 0 or 1, got {axis}");
        let out = {
            let xv = self.val(x.0);
            let extent = xv.shape()[axis];
            assert!(
                lo < hi && hi <= extent,
                "slice range {lo}..{hi} out of bounds for axis {axis} of shape {:?}",
                xv.shape()
            );
            let (r, c) = (xv.rows(), xv.cols());
            if axis == 0 {
                Tensor::from_vec(vec![hi - lo, c], xv.data()[lo * c..hi * c].to_vec())
            } else {
                let mut out = Tensor::zeros(vec![r, hi - lo]);
                for i in 0..r {
                    for j in lo..hi {
                        out.data_mut()[i * (hi - lo) + (j - lo)] = xv.at(i, j);
                    }
                }
                out
            }
        };
        let rg = self.requires(x.0);
        self.push(out, Op::Slice { x: x.0, axis, lo, hi }, rg)
    }

    /// Row lookup; duplicate ids accumulate gradient into the same row.
    pub fn gather_rows(&mut self, x: Var, ids: &[usize]) -> Var {
        assert!(!ids.is_empty(), "gather_rows needs at least one id");
        let out = {
            let xv = self.val(x.0);
            let (r, c) = (xv.rows(), xv.cols());
            let mut data = Vec::with_capacity(ids.len() * c);
            for &id in ids {
                assert!(id < r, "gather_rows id {id} out of range for {r} rows");
                data.extend_from_slice(&xv.data()[id * c..(id + 1) * c]);
            }
            Tensor::from_vec(vec![ids.len(), c], data)
        };
        let rg = self.requires(x.0);
        self.push(
            out,
            Op::GatherRows {
                x: x.0,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = {
            let xv = self.val(x.0);
            let mut s = F::zero();
            for &v in xv.data() {
                s += v;
            }
            Tensor::scalar(s)
        };
        let rg = self.requires(x.0);
        self.push(out, Op::SumAll { x: x.0 }, rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.val(x.0).numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Copies the value and cuts the gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.val(x.0).clone();
        self.push(value, Op::Detach, false)
    }

    /// Reverse sweep from `loss` (a 1x1 tensor). After it returns, every
    /// trainable leaf holds a gradient; leaves the loss never touched
    /// hold zeros.
    pub fn backward(&mut self, loss: Var) {
        {
            let n = &self.nodes[loss.0];
            assert_eq!(
                n.value.shape(),
                &[1, 1],
                "backward target must be a scalar, got shape {:?}",
                n.value.shape()
            );
        }
        if self.nodes[loss.0].requires_grad {
            self.nodes[loss.0].grad = Some(Tensor::scalar(F::one()));
            for i in (0..=loss.0).rev() {
                if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                    continue;
                }
                let Some(gout) = self.nodes[i].grad.take() else {
                    continue;
                };
                self.apply_backward(i, &gout);
            }
        }
        for n in &mut self.nodes {
            if matches!(n.op, Op::Leaf) && n.requires_grad && n.grad.is_none() {
                n.grad = Some(Tensor::zeros(n.value.shape().to_vec()));
            }
        }
    }

    fn add_grad(&mut self, idx: usize, delta: &Tensor<F>) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        let shape = self.nodes[idx].value.shape().to_vec();
        debug_assert_eq!(delta.shape(), &shape[..]);
        let g = self.nodes[idx]
            .grad
            .get_or_insert_with(|| Tensor::zeros(shape));
        for (gi, &di) in g.data_mut().iter_mut().zip(delta.data()) {
            *gi += di;
        }
    }

    fn apply_backward(&mut self, out_idx: usize, gout: &Tensor<F>) {
        let op = self.nodes[out_idx].op.clone();
        match op {
            Op::Leaf | Op::Detach => unreachable!("leaf and detach nodes are skipped"),
            Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
            } => {
                if self.requires(a) {
                    let delta = {
                        let bv = self.val(b);
                        let mut d = Tensor::zeros(self.val(a).shape().to_vec());
                        if !trans_a {
                            gemm(gout, false, bv, !trans_b, F::zero(), &mut d);
                        } else {
                            gemm(bv, trans_b, gout, true, F::zero(), &mut d);
                        }
                        d
                    };
                    self.add_grad(a, &delta);
                }
                if self.requires(b) {
                    let delta = {
                        let av = self.val(a);
                        let mut d = Tensor::zeros(self.val(b).shape().to_vec());
                        if !trans_b {
                            gemm(av, !trans_a, gout, false, F::zero(), &mut d);
                        } else {
                            gemm(gout, true, av, trans_a, F::zero(), &mut d);
                        }
                        d
                    };
                    self.add_grad(b, &delta);
                }
            }
            Op::Add { a, b } => {
                self.add_grad(a, gout);
                self.add_grad(b, gout);
            }
            Op::Sub { a, b } => {
                self.add_grad(a, gout);
                let delta = map_tensor(gout, |g| -g);
                self.add_grad(b, &delta);
            }
            Op::Mul { a, b } => {
                if self.requires(a) {
                    let delta = zip_tensor(gout, self.val(b), |g, y| g * y);
                    self.add_grad(a, &delta);
                }
                if self.requires(b) {
                    let delta = zip_tensor(gout, self.val(a), |g, x| g * x);
                    self.add_grad(b, &delta);
                }
            }
            Op::Relu { x } => {
                let delta = zip_tensor(gout, self.val(x), |g, v| {
                    if v > F::zero() {
                        g
                    } else {
                        F::zero()
                    }
                });
                self.add_grad(x, &delta);
            }
            Op::Sigmoid { x } => {
                let delta = zip_tensor(gout, self.val(out_idx), |g, y| g * y * (F::one() - y));
                self.add_grad(x, &delta);
            }
            Op::Tanh { x } => {
                let delta = zip_tensor(gout, self.val(out_idx), |g, y| g * (F::one() - y * y));
                self.add_grad(x, &delta);
            }
            Op::Exp { x } => {
                let delta = zip_tensor(gout, self.val(out_idx), |g, y| g * y);
                self.add_grad(x, &delta);
            }
            Op::Log { x } => {
                let delta = zip_tensor(gout, self.val(x), |g, v| g / v);
                self.add_grad(x, &delta);
            }
            Op::Neg { x } => {
                let delta = map_tensor(gout, |g| -g);
                self.add_grad(x, &delta);
            }
            Op::Softplus { x } => {
                let delta = zip_tensor(gout, self.val(x), |g, v| g * sigmoid_scalar(v));
                self.add_grad(x, &delta);
            }
            Op::Scale { x, k } => {
                let kf = F::from_f64(k);
                let delta = map_tensor(gout, |g| g * kf);
                self.add_grad(x, &delta);
            }
            Op::SoftmaxCols { x } => {
                let delta = {
                    let y = self.val(out_idx);
                    let (r, c) = (y.rows(), y.cols());
                    let mut d = Tensor::zeros(vec![r, c]);
                    for j in 0..c {
                        let mut dot = F::zero();
                        for i in 0..r {
                            dot += gout.at(i, j) * y.at(i, j);
                        }
                        for i in 0..r {
                            d.data_mut()[i * c + j] = y.at(i, j) * (gout.at(i, j) - dot);
                        }
                    }
                    d
                };
                self.add_grad(x, &delta);
            }
            Op::LogSoftmaxCols { x } => {
                let delta = {
                    let y = self.val(out_idx);
                    let (r, c) = (y.rows(), y.cols());
                    let mut d = Tensor::zeros(vec![r, c]);
                    for j in 0..c {
                        let mut colsum = F::zero();
                        for i in 0..r {
                            colsum += gout.at(i, j);
                        }
                        for i in 0..r {
                            d.data_mut()[i * c + j] = gout.at(i, j) - y.at(i, j).exp() * colsum;
                        }
                    }
                    d
                };
                self.add_grad(x, &delta);
            }
            Op::Transpose { x } => {
                let delta = transpose_tensor(gout);
                self.add_grad(x, &delta);
            }
            Op::Concat { inputs, axis } => {
                let mut off = 0;
                for idx in inputs {
                    let extent = self.val(idx).shape()[axis];
                    if self.requires(idx) {
                        let delta = {
                            let (r, c) = (gout.rows(), gout.cols());
                            if axis == 0 {
                                Tensor::from_vec(
                                    vec![extent, c],
                                    gout.data()[off * c..(off + extent) * c].to_vec(),
                                )
                            } else {
                                let rows = r;
                                let mut d = Tensor::zeros(vec![rows, extent]);
                                for i in 0..rows {
                                    for j in 0..extent {
                                        d.data_mut()[i * extent + j] = gout.at(i, off + j);
                                    }
                                }
                                d
                            }
                        };
                        self.add_grad(idx, &delta);
                    }
                    off += extent;
                }
            }
            Op::Slice { x, axis, lo, hi } => {
                let delta = {
                    let xshape = self.val(x).shape().to_vec();
                    let mut d = Tensor::zeros(xshape.clone());
                    let c = xshape[1];
                    if axis == 0 {
                        d.data_mut()[lo * c..hi * c].copy_from_slice(gout.data());
                    } else {
                        for i in 0..xshape[0] {
                            for j in lo..hi {
                                d.data_mut()[i * c + j] = gout.at(i, j - lo);
                            }
                        }
                    }
                    d
                };
                self.add_grad(x, &delta);
            }
            Op::GatherRows { x, ids } => {
                let delta = {
                    let xshape = self.val(x).shape().to_vec();
                    let c = xshape[1];
                    let mut d = Tensor::zeros(xshape);
                    for (k, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            d.data_mut()[id * c + j] += gout.at(k, j);
                        }
                    }
                    d
                };
                self.add_grad(x, &delta);
            }
            Op::SumAll { x } => {
                let g = gout.data()[0];
                let delta = {
                    let shape = self.val(x).shape().to_vec();
                    let numel: usize = shape.iter().product();
                    Tensor::from_vec(shape, vec![g; numel])
                };
                self.add_grad(x, &delta);
            }
        }
    }
}

fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn map_tensor<F: Scalar>(t: &Tensor<F>, f: impl Fn(F) -> F) -> Tensor<F> {
    Tensor::from_vec(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

fn zip_tensor<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::from_vec(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

fn transpose_tensor<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    let (r, c) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(vec![c, r]);
    for i in 0..r {
        for j in 0..c {
            out.data_mut()[j * r + i] = t.at(i, j);
        }
    }
    out
}
