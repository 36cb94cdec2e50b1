use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use super::{gelu, gelu_derivative, sigmoid};
use crate::error::{Error, Result};

/// Variance guard inside [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-10;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    MaskedSoftmax(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    BceWithLogitsMean(Var, Tensor),
    MseMean(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed primitives. Replaying it backwards yields
/// gradients for every leaf registered with [`Tape::param`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let g = self.grads.get(var.0)?.as_ref()?;
        Some(Tensor::new(self.shapes[var.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient for `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.get(var)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn matrix(&self, var: Var, op: &'static str) -> Result<(usize, usize)> {
        self.nodes[var.0].value.expect_matrix(op)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul_nt")?;
        let (n, k2) = self.matrix(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::dim("matmul_nt", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        self.push("matmul_nt", value, Op::MatMulNt(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "add_row_bias")?;
        if self.value(bias).len() != n || self.value(bias).shape().len() != 1 {
            return Err(Error::dim("add_row_bias", self.value(a).shape(), self.value(bias).shape()));
        }
        let mut data = self.value(a).data().to_vec();
        let b = self.value(bias).data();
        for r in 0..m {
            for (x, &bv) in data[r * n..(r + 1) * n].iter_mut().zip(b) {
                *x += bv;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        self.push("add_row_bias", value, Op::AddRowBias(a, bias), &[a, bias])
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Element-wise product with a fixed tensor (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        if self.value(a).shape() != mask.shape() {
            return Err(Error::dim("mul_const", self.value(a).shape(), mask.shape()));
        }
        let data = zip_map(self.value(a).data(), mask.data(), |x, y| x * y);
        let value = Tensor::new(mask.shape().to_vec(), data)?;
        self.push("mul_const", value, Op::MulConst(a, mask), &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let src = self.value(a);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|x| x * factor).collect())?;
        self.push("scale", value, Op::Scale(a, factor), &[a])
    }

    /// Gaussian-error linear unit (exact erf form).
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&x| gelu(x)).collect())?;
        self.push("gelu", value, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&x| sigmoid(x)).collect())?;
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    /// Softmax over every full row, stabilized by max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "row_softmax")?;
        self.masked_softmax(a, vec![n; m])
    }

    /// Row softmax where row `r` only covers columns `[0, limits[r])`; the
    /// remaining entries are exactly zero. Every limit must be at least 1.
    pub fn masked_softmax(&mut self, a: Var, limits: Vec<usize>) -> Result<Var> {
        let (m, n) = self.matrix(a, "masked_softmax")?;
        if limits.len() != m || limits.iter().any(|&l| l == 0 || l > n) {
            return Err(Error::Contract("softmax row limits must lie in 1..=cols".into()));
        }
        let src = self.value(a).data();
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "masked_softmax input" });
        }
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &src[r * n..r * n + limits[r]];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * n..r * n + limits[r]];
            let mut total = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = libm::exp(x - max);
                total += *d;
            }
            for d in dst.iter_mut() {
                *d /= total;
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        self.push("masked_softmax", value, Op::MaskedSoftmax(a, limits), &[a])
    }

    /// Per-row standardization (population variance) followed by an affine
    /// gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix(x, "layer_norm")?;
        if n < 2 {
            return Err(Error::dim("layer_norm", self.value(x).shape(), &[2]));
        }
        if self.value(gain).shape() != [n] || self.value(bias).shape() != [n] {
            return Err(Error::dim("layer_norm", &[n], self.value(gain).shape()));
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let istd = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std[r] = istd;
            for c in 0..n {
                let xh = (row[c] - mean) * istd;
                normalized[r * n + c] = xh;
                out[r * n + c] = g[c] * xh + b[c];
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            normalized,
            inv_std,
        };
        self.push("layer_norm", value, op, &[x, gain, bias])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        self.push("slice_cols", value, Op::SliceCols(a, start, end), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_rows(start, end)?;
        self.push("slice_rows", value, Op::SliceRows(a, start), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let value = Tensor::concat_rows(&tensors)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Selects rows of `table` by index (repeats allowed).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, cols) = self.matrix(table, "gather_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::dim("gather_rows", &[rows, cols], &[bad]));
        }
        let src = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(src.row(i));
        }
        let value = Tensor::matrix(indices.len(), cols, data)?;
        self.push("gather_rows", value, Op::GatherRows(table, indices.to_vec()), &[table])
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    pub fn bce_with_logits_mean(&mut self, logits: Var, targets: Tensor) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(Error::dim("bce_with_logits_mean", z.shape(), targets.shape()));
        }
        let n = z.len().max(1) as f64;
        let total: f64 = z
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &y)| z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs())))
            .sum();
        self.push(
            "bce_with_logits_mean",
            Tensor::scalar(total / n),
            Op::BceWithLogitsMean(logits, targets),
            &[logits],
        )
    }

    /// Mean squared error against fixed targets.
    pub fn mse_mean(&mut self, pred: Var, targets: Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != targets.shape() {
            return Err(Error::dim("mse_mean", p.shape(), targets.shape()));
        }
        let n = p.len().max(1) as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(targets.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.push("mse_mean", Tensor::scalar(total / n), Op::MseMean(pred, targets), &[pred])
    }

    /// Replays the record in reverse from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(self.value(*a));
                let n = out.cols();
                if self.wants(*a) {
                    let g = self.slot(grads, *a);
                    gemm_nt(up, self.value(*b).data(), g, m, n, k);
                }
                if self.wants(*b) {
                    let g = self.slot(grads, *b);
                    gemm_tn(self.value(*a).data(), up, g, m, k, n);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = dims(self.value(*a));
                let n = out.cols();
                if self.wants(*a) {
                    let g = self.slot(grads, *a);
                    gemm_nn(up, self.value(*b).data(), g, m, n, k);
                }
                if self.wants(*b) {
                    let g = self.slot(grads, *b);
                    gemm_tn(up, self.value(*a).data(), g, m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        accumulate(self.slot(grads, v), up);
                    }
                }
            }
            Op::AddRowBias(a, bias) => {
                if self.wants(*a) {
                    accumulate(self.slot(grads, *a), up);
                }
                if self.wants(*bias) {
                    let n = out.cols();
                    let g = self.slot(grads, *bias);
                    for row in up.chunks(n) {
                        accumulate(g, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let g = self.slot(grads, *a);
                    for ((g, u), y) in g.iter_mut().zip(up).zip(vb) {
                        *g += u * y;
                    }
                }
                if self.wants(*b) {
                    let g = self.slot(grads, *b);
                    for ((g, u), x) in g.iter_mut().zip(up).zip(va) {
                        *g += u * x;
                    }
                }
            }
            Op::MulConst(a, mask) => {
                let g = self.slot(grads, *a);
                for ((g, u), m) in g.iter_mut().zip(up).zip(mask.data()) {
                    *g += u * m;
                }
            }
            Op::Scale(a, factor) => {
                let g = self.slot(grads, *a);
                for (g, u) in g.iter_mut().zip(up) {
                    *g += u * factor;
                }
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                let g = self.slot(grads, *a);
                for ((g, u), &x) in g.iter_mut().zip(up).zip(x) {
                    *g += u * gelu_derivative(x);
                }
            }
            Op::Sigmoid(a) => {
                let g = self.slot(grads, *a);
                for ((g, u), &y) in g.iter_mut().zip(up).zip(out.data()) {
                    *g += u * y * (1.0 - y);
                }
            }
            Op::MaskedSoftmax(a, limits) => {
                let n = out.cols();
                let y = out.data();
                let g = self.slot(grads, *a);
                for (r, &limit) in limits.iter().enumerate() {
                    let base = r * n;
                    let dot: f64 = (0..limit).map(|c| y[base + c] * up[base + c]).sum();
                    for c in 0..limit {
                        g[base + c] += y[base + c] * (up[base + c] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let n = out.cols();
                let gv = self.value(*gain).data().to_vec();
                if self.wants(*gain) {
                    let g = self.slot(grads, *gain);
                    for (row_up, row_xh) in up.chunks(n).zip(normalized.chunks(n)) {
                        for c in 0..n {
                            g[c] += row_up[c] * row_xh[c];
                        }
                    }
                }
                if self.wants(*bias) {
                    let g = self.slot(grads, *bias);
                    for row_up in up.chunks(n) {
                        accumulate(g, row_up);
                    }
                }
                if self.wants(*x) {
                    let g = self.slot(grads, *x);
                    let inv_n = 1.0 / n as f64;
                    for (r, (row_up, row_xh)) in up.chunks(n).zip(normalized.chunks(n)).enumerate() {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for c in 0..n {
                            let d = row_up[c] * gv[c];
                            mean_d += d;
                            mean_dx += d * row_xh[c];
                        }
                        mean_d *= inv_n;
                        mean_dx *= inv_n;
                        for c in 0..n {
                            let d = row_up[c] * gv[c];
                            g[r * n + c] += inv_std[r] * (d - mean_d - row_xh[c] * mean_dx);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let u = up[0];
                for g in self.slot(grads, *a).iter_mut() {
                    *g += u;
                }
            }
            Op::SliceCols(a, start, end) => {
                let n_in = self.value(*a).cols();
                let width = end - start;
                let g = self.slot(grads, *a);
                for (r, row_up) in up.chunks(width).enumerate() {
                    accumulate(&mut g[r * n_in + start..r * n_in + end], row_up);
                }
            }
            Op::ConcatCols(parts) => {
                let n = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.wants(p) {
                        let g = self.slot(grads, p);
                        for (r, row_up) in up.chunks(n).enumerate() {
                            accumulate(&mut g[r * w..(r + 1) * w], &row_up[offset..offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceRows(a, start) => {
                let n = out.cols();
                let g = self.slot(grads, *a);
                accumulate(&mut g[start * n..start * n + up.len()], up);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.wants(p) {
                        accumulate(self.slot(grads, p), &up[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::GatherRows(table, indices) => {
                let n = out.cols();
                let g = self.slot(grads, *table);
                for (row_up, &i) in up.chunks(n).zip(indices) {
                    accumulate(&mut g[i * n..(i + 1) * n], row_up);
                }
            }
            Op::BceWithLogitsMean(logits, targets) => {
                let z = self.value(*logits).data();
                let scale = up[0] / z.len().max(1) as f64;
                let g = self.slot(grads, *logits);
                for ((g, &z), &y) in g.iter_mut().zip(z).zip(targets.data()) {
                    *g += scale * (sigmoid(z) - y);
                }
            }
            Op::MseMean(pred, targets) => {
                let p = self.value(*pred).data();
                let scale = 2.0 * up[0] / p.len().max(1) as f64;
                let g = self.slot(grads, *pred);
                for ((g, &p), &y) in g.iter_mut().zip(p).zip(targets.data()) {
                    *g += scale * (p - y);
                }
            }
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let len = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
