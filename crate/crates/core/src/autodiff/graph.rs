//! Dynamic tape: forward ops record nodes, backward replays them in reverse.

use super::store::ParamStore;
use super::tensor::Tensor;
use super::DiffError;

/// Handle to a node in a [`Graph`]. Only valid for the graph that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Concat { axis: usize, inputs: Vec<usize> },
    Transpose(usize),
    Sigmoid(usize),
    SoftmaxLast(usize),
    Log(usize),
    Sum(usize),
    Mean(usize),
    BroadcastAdd(usize, usize),
    MaskedAdd { input: usize, mask: Tensor },
    GatherRows { input: usize, indices: Vec<usize> },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// A computation tape. Nodes are appended in execution order, so every
/// node's inputs precede it and a single reverse sweep computes all
/// gradients reachable from a loss node.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Data enters the graph as a constant leaf; no gradient is produced.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// A parameter leaf bound by name; backward accumulates into the store.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId, DiffError> {
        let value = store
            .value(name)
            .ok_or_else(|| DiffError::Contract(format!("unknown parameter '{name}'")))?
            .clone();
        Ok(self.push(Op::Param(name.to_string()), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.cols() != vb.rows() {
            return Err(DiffError::Shape {
                op: "matmul",
                detail: format!("{:?} x {:?}", va.shape(), vb.shape()),
            });
        }
        let value = matmul_raw(va, vb);
        Ok(self.push(Op::MatMul(a.0, b.0), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(DiffError::Shape {
                op: "add",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a.0, b.0), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(DiffError::Shape {
                op: "elementwise-mul",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Mul(a.0, b.0), value))
    }

    /// Multiply every entry by a constant (sugar over `mul` with a filled leaf).
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, DiffError> {
        let shape = self.nodes[a.0].value.shape().to_vec();
        let c = self.constant(Tensor::filled(shape, factor));
        self.mul(a, c)
    }

    pub fn concat(&mut self, axis: usize, inputs: &[NodeId]) -> Result<NodeId, DiffError> {
        if inputs.is_empty() || axis > 1 {
            return Err(DiffError::Shape {
                op: "concat",
                detail: format!("axis {axis}, {} inputs", inputs.len()),
            });
        }
        let first = &self.nodes[inputs[0].0].value;
        let (mut rows, mut cols) = (first.rows(), first.cols());
        for id in &inputs[1..] {
            let v = &self.nodes[id.0].value;
            if axis == 0 {
                if v.cols() != cols {
                    return Err(DiffError::Shape {
                        op: "concat",
                        detail: format!("axis 0 width mismatch: {} vs {}", cols, v.cols()),
                    });
                }
                rows += v.rows();
            } else {
                if v.rows() != rows {
                    return Err(DiffError::Shape {
                        op: "concat",
                        detail: format!("axis 1 height mismatch: {} vs {}", rows, v.rows()),
                    });
                }
                cols += v.cols();
            }
        }
        let mut data = vec![0.0; rows * cols];
        if axis == 0 {
            let mut offset = 0;
            for id in inputs {
                let v = &self.nodes[id.0].value;
                data[offset..offset + v.numel()].copy_from_slice(v.data());
                offset += v.numel();
            }
        } else {
            let mut col_offset = 0;
            for id in inputs {
                let v = &self.nodes[id.0].value;
                let w = v.cols();
                for r in 0..rows {
                    data[r * cols + col_offset..r * cols + col_offset + w]
                        .copy_from_slice(v.row_slice(r));
                }
                col_offset += w;
            }
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(
            Op::Concat {
                axis,
                inputs: inputs.iter().map(|i| i.0).collect(),
            },
            value,
        ))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        let va = &self.nodes[a.0].value;
        if va.shape().len() != 2 {
            return Err(DiffError::Shape {
                op: "transpose",
                detail: format!("{:?}", va.shape()),
            });
        }
        let value = va.transposed();
        Ok(self.push(Op::Transpose(a.0), value))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| sigmoid(x))
            .collect();
        let shape = self.nodes[a.0].value.shape().to_vec();
        self.push(Op::Sigmoid(a.0), Tensor::new(shape, data).unwrap())
    }

    /// Softmax over the last axis: each row sums to one.
    pub fn softmax_last(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value;
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &v.data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut sum = 0.0;
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        let shape = v.shape().to_vec();
        self.push(Op::SoftmaxLast(a.0), Tensor::new(shape, data).unwrap())
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        let v = &self.nodes[a.0].value;
        for &x in v.data() {
            if x <= 0.0 {
                return Err(DiffError::Domain {
                    op: "log",
                    detail: format!("non-positive input {x}"),
                });
            }
        }
        let data = v.data().iter().map(|&x| x.ln()).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(Op::Log(a.0), Tensor::new(shape, data).unwrap()))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Op::Sum(a.0), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value;
        let s: f64 = v.data().iter().sum();
        let n = v.numel() as f64;
        self.push(Op::Mean(a.0), Tensor::scalar(s / n))
    }

    /// Add a row vector (`[n]` or `1×n`) to every row of an `m×n` matrix.
    pub fn broadcast_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if vb.rows() != 1 || va.cols() != vb.cols() {
            return Err(DiffError::Shape {
                op: "broadcast-add",
                detail: format!("{:?} + {:?}", va.shape(), vb.shape()),
            });
        }
        let cols = va.cols();
        let mut data = va.data().to_vec();
        for r in 0..va.rows() {
            for (x, y) in data[r * cols..(r + 1) * cols].iter_mut().zip(vb.data()) {
                *x += y;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::BroadcastAdd(a.0, b.0), value))
    }

    /// Add a constant mask (no gradient to the mask). Implements additive
    /// masking of logits for already-selected items.
    pub fn masked_add(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId, DiffError> {
        let va = &self.nodes[a.0].value;
        if va.shape() != mask.shape() {
            return Err(DiffError::Shape {
                op: "masked-add",
                detail: format!("{:?} + mask {:?}", va.shape(), mask.shape()),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(mask.data())
            .map(|(x, m)| x + m)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::MaskedAdd { input: a.0, mask }, value))
    }

    /// Select rows by index (repeats allowed). Backward scatter-adds.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, DiffError> {
        let va = &self.nodes[a.0].value;
        if va.shape().len() != 2 || indices.is_empty() {
            return Err(DiffError::Shape {
                op: "gather-rows",
                detail: format!("{:?}, {} indices", va.shape(), indices.len()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= va.rows()) {
            return Err(DiffError::Shape {
                op: "gather-rows",
                detail: format!("row {bad} out of {}", va.rows()),
            });
        }
        let cols = va.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(va.row_slice(i));
        }
        let value = Tensor::new(vec![indices.len(), cols], data)?;
        Ok(self.push(
            Op::GatherRows {
                input: a.0,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    /// Backpropagate from a scalar loss node, accumulating parameter
    /// gradients into `store`. Parameters not reachable from the loss are
    /// left untouched (zero if the store was freshly cleared).
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<(), DiffError> {
        self.backward_scaled(loss, store, 1.0)
    }

    /// As [`Graph::backward`] with the seed gradient scaled; used to fold a
    /// `1/batch` factor into per-sample backward passes.
    pub fn backward_scaled(
        &self,
        loss: NodeId,
        store: &mut ParamStore,
        seed: f64,
    ) -> Result<(), DiffError> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(DiffError::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(seed));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(name) => store.accumulate_grad(name, &g)?,
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    accumulate(&mut grads[*a], matmul_nt(&g, vb));
                    accumulate(&mut grads[*b], matmul_tn(va, &g));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], g.clone());
                    accumulate(&mut grads[*b], g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    accumulate(&mut grads[*a], elementwise(&g, vb, |x, y| x * y));
                    accumulate(&mut grads[*b], elementwise(&g, va, |x, y| x * y));
                }
                Op::Concat { axis, inputs } => {
                    if *axis == 0 {
                        let mut offset = 0;
                        for &i in inputs {
                            let v = &self.nodes[i].value;
                            let part = Tensor::new(
                                v.shape().to_vec(),
                                g.data()[offset..offset + v.numel()].to_vec(),
                            )
                            .unwrap();
                            offset += v.numel();
                            accumulate(&mut grads[i], part);
                        }
                    } else {
                        let rows = g.rows();
                        let total = g.cols();
                        let mut col_offset = 0;
                        for &i in inputs {
                            let v = &self.nodes[i].value;
                            let w = v.cols();
                            let mut data = vec![0.0; rows * w];
                            for r in 0..rows {
                                data[r * w..(r + 1) * w].copy_from_slice(
                                    &g.data()[r * total + col_offset..r * total + col_offset + w],
                                );
                            }
                            col_offset += w;
                            accumulate(
                                &mut grads[i],
                                Tensor::new(v.shape().to_vec(), data).unwrap(),
                            );
                        }
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads[*a], reshape_like(
                    g.transposed(),
                    &self.nodes[*a].value,
                )),
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(go, yo)| go * yo * (1.0 - yo))
                        .collect();
                    accumulate(
                        &mut grads[*a],
                        Tensor::new(y.shape().to_vec(), data).unwrap(),
                    );
                }
                Op::SoftmaxLast(a) => {
                    let y = &self.nodes[idx].value;
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut data = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            data[r * cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(
                        &mut grads[*a],
                        Tensor::new(y.shape().to_vec(), data).unwrap(),
                    );
                }
                Op::Log(a) => {
                    let x = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(go, xo)| go / xo)
                        .collect();
                    accumulate(
                        &mut grads[*a],
                        Tensor::new(x.shape().to_vec(), data).unwrap(),
                    );
                }
                Op::Sum(a) => {
                    let shape = self.nodes[*a].value.shape().to_vec();
                    accumulate(&mut grads[*a], Tensor::filled(shape, g.scalar_value()));
                }
                Op::Mean(a) => {
                    let v = &self.nodes[*a].value;
                    let shape = v.shape().to_vec();
                    let scale = g.scalar_value() / v.numel() as f64;
                    accumulate(&mut grads[*a], Tensor::filled(shape, scale));
                }
                Op::BroadcastAdd(a, b) => {
                    let vb = &self.nodes[*b].value;
                    let cols = g.cols();
                    let mut col_sum = vec![0.0; cols];
                    for r in 0..g.rows() {
                        for (s, x) in col_sum.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                            *s += x;
                        }
                    }
                    accumulate(&mut grads[*a], g.clone());
                    accumulate(
                        &mut grads[*b],
                        Tensor::new(vb.shape().to_vec(), col_sum).unwrap(),
                    );
                }
                Op::MaskedAdd { input, .. } => accumulate(&mut grads[*input], g),
                Op::GatherRows { input, indices } => {
                    let v = &self.nodes[*input].value;
                    let cols = v.cols();
                    let mut data = vec![0.0; v.numel()];
                    for (k, &i) in indices.iter().enumerate() {
                        for (d, x) in data[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&g.data()[k * cols..(k + 1) * cols])
                        {
                            *d += x;
                        }
                    }
                    accumulate(
                        &mut grads[*input],
                        Tensor::new(v.shape().to_vec(), data).unwrap(),
                    );
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Tensor>, add: Tensor) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(add.data()) {
                *a += b;
            }
        }
        None => *slot = Some(add),
    }
}

/// Gradient of a rank-1 input may arrive as `n×1`; reshape it back.
fn reshape_like(g: Tensor, reference: &Tensor) -> Tensor {
    if g.shape() == reference.shape() {
        g
    } else {
        Tensor::new(reference.shape().to_vec(), g.data().to_vec()).unwrap()
    }
}

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row_slice(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    let _ = k;
    Tensor::new(vec![m, n], out).unwrap()
}

/// `g · bᵀ` without materializing the transpose.
fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n, k) = (g.rows(), g.cols(), b.rows());
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = g.row_slice(i);
        for p in 0..k {
            let brow = b.row_slice(p);
            let mut s = 0.0;
            for (x, y) in grow.iter().zip(brow) {
                s += x * y;
            }
            out[i * k + p] = s;
        }
    }
    let _ = n;
    Tensor::new(vec![m, k], out).unwrap()
}

/// `aᵀ · g` without materializing the transpose.
fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), g.cols());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = a.row_slice(i);
        let grow = g.row_slice(i);
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    let _ = m;
    Tensor::new(vec![k, n], out).unwrap()
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}
