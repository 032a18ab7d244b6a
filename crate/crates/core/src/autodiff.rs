//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape of immutable nodes; every builder appends one node
//! holding the forward value and enough structure to compute vector-Jacobian
//! products in reverse creation order. Non-finite intermediates abort the
//! forward pass with the offending op name.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// `[n, d] + [d]`, the second operand broadcast across rows.
    AddRowBroadcast(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `[n, d] * [d]`, the second operand broadcast across rows.
    MulRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    /// Row-wise softmax at temperature; masked-out entries get weight exactly 0.
    SoftmaxRows { input: NodeId, temp: f64 },
    /// Row-wise x / sqrt(mean(x^2) + eps).
    RmsNormRows { input: NodeId, eps: f64 },
    Sigmoid(NodeId),
    Log(NodeId),
    GatherRows { input: NodeId, indices: Vec<usize> },
    SliceCols {
        input: NodeId,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<NodeId>),
    SumAll(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::AddRowBroadcast(..) => "add_row_broadcast",
            Op::Mul(..) => "mul",
            Op::MulRowBroadcast(..) => "mul_row_broadcast",
            Op::Scale(..) => "scale",
            Op::Matmul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::SoftmaxRows { .. } => "softmax_t",
            Op::RmsNormRows { .. } => "rms_norm",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::GatherRows { .. } => "gather_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::SumAll(..) => "sum",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Named parameters with matching gradient accumulators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    #[serde(skip)]
    grads: BTreeMap<String, Tensor>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            grads: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.grads
            .insert(name.to_string(), Tensor::zeros(value.shape().to_vec()));
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.params[name]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.params.get_mut(name).expect("unknown parameter")
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        &self.grads[name]
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (name, p) in &self.params {
            self.grads
                .insert(name.clone(), Tensor::zeros(p.shape().to_vec()));
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) {
        let slot = self
            .grads
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(grad.shape().to_vec()));
        slot.axpy(1.0, grad);
    }

    /// Rebuild gradient slots after deserialization.
    pub fn ensure_grad_slots(&mut self) {
        if self.grads.len() != self.params.len() {
            self.zero_grads();
        }
    }
}

/// A single forward tape. Parameters from a [`ParamStore`] are bound as leaf
/// nodes up front; [`Graph::backward`] leaves per-node gradients ready for
/// [`Graph::extract_grads`] to push back into the store.
pub struct Graph {
    nodes: Vec<Node>,
    bindings: Vec<(String, NodeId)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::numeric(op.name(), "non-finite intermediate value"));
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Constant leaf; receives no gradient of its own but participates in VJPs.
    pub fn constant(&mut self, t: Tensor) -> Result<NodeId> {
        self.push(t, Op::Leaf)
    }

    /// Bind a named parameter as a leaf node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        let id = self.push(store.get(name).clone(), Op::Leaf)?;
        self.bindings.push((name.to_string(), id));
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::arg("add: shape mismatch"));
        }
        let mut out = ta.clone();
        out.axpy(1.0, tb);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let d = ta.cols();
        if tb.numel() != d {
            return Err(Error::arg("add_row_broadcast: bias length mismatch"));
        }
        let bias = tb.data();
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(d) {
            for (v, &bv) in chunk.iter_mut().zip(bias) {
                *v += bv;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::AddRowBroadcast(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::arg("mul: shape mismatch"));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::Mul(a, b))
    }

    pub fn mul_row_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let d = ta.cols();
        if tb.numel() != d {
            return Err(Error::arg("mul_row_broadcast: gain length mismatch"));
        }
        let gain = tb.data();
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(d) {
            for (v, &g) in chunk.iter_mut().zip(gain) {
                *v *= g;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::MulRowBroadcast(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let out = self.nodes[a.0].value.map(|v| v * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        self.push(out, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.nodes[a.0].value.transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Row-wise temperature softmax with an optional row-major boolean mask
    /// (`true` = attendable). Masked entries come out exactly 0.0.
    pub fn softmax_rows(
        &mut self,
        input: NodeId,
        temp: f64,
        mask: Option<Vec<bool>>,
    ) -> Result<NodeId> {
        if temp <= 0.0 || !temp.is_finite() {
            return Err(Error::arg("softmax_t: temperature must be positive"));
        }
        let t = &self.nodes[input.0].value;
        let (n, d) = (t.rows(), t.cols());
        if let Some(m) = &mask {
            if m.len() != n * d {
                return Err(Error::arg("softmax_t: mask size mismatch"));
            }
        }
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &t.data()[i * d..(i + 1) * d];
            let allowed = |j: usize| mask.as_ref().map_or(true, |m| m[i * d + j]);
            let mut max = f64::NEG_INFINITY;
            for (j, &z) in row.iter().enumerate() {
                if allowed(j) && z > max {
                    max = z;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(Error::arg(format!("softmax_t: row {i} fully masked")));
            }
            let mut sum = 0.0;
            for (j, &z) in row.iter().enumerate() {
                if allowed(j) {
                    let e = ((z - max) / temp).exp();
                    data[i * d + j] = e;
                    sum += e;
                }
            }
            for j in 0..d {
                if allowed(j) {
                    data[i * d + j] /= sum;
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(out, Op::SoftmaxRows { input, temp })
    }

    pub fn rms_norm_rows(&mut self, input: NodeId, eps: f64) -> Result<NodeId> {
        let t = &self.nodes[input.0].value;
        let (n, d) = (t.rows(), t.cols());
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &t.data()[i * d..(i + 1) * d];
            let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let inv = 1.0 / (ms + eps).sqrt();
            for j in 0..d {
                data[i * d + j] = row[j] * inv;
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(out, Op::RmsNormRows { input, eps })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.nodes[a.0].value.map(crate::stats::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.nodes[a.0].value.map(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn gather_rows(&mut self, input: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        let t = &self.nodes[input.0].value;
        let (n, d) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in &indices {
            if i >= n {
                return Err(Error::arg("gather_rows: index out of range"));
            }
            data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![indices.len(), d], data)?;
        self.push(out, Op::GatherRows { input, indices })
    }

    pub fn slice_cols(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = &self.nodes[input.0].value;
        let (n, d) = (t.rows(), t.cols());
        if start + len > d {
            return Err(Error::arg("slice_cols: range out of bounds"));
        }
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&t.data()[i * d + start..i * d + start + len]);
        }
        let out = Tensor::new(vec![n, len], data)?;
        self.push(out, Op::SliceCols { input, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::arg("concat_cols: no parts"));
        }
        let n = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for p in parts {
                let t = &self.nodes[p.0].value;
                if t.rows() != n {
                    return Err(Error::arg("concat_cols: row count mismatch"));
                }
                let d = t.cols();
                data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
            }
        }
        let out = Tensor::new(vec![n, total], data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.nodes[a.0].value.numel();
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Scaled dot-product attention restricted to an optional mask, with RMS
    /// normalization of query and key rows before the dot product. Attention
    /// weights over disallowed key positions are exactly zero.
    pub fn masked_attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        mask: Option<Vec<bool>>,
        eps: f64,
    ) -> Result<NodeId> {
        let dq = self.nodes[q.0].value.cols();
        let dk = self.nodes[k.0].value.cols();
        if dq != dk {
            return Err(Error::arg("masked_attention: q/k width mismatch"));
        }
        let nk = self.nodes[k.0].value.rows();
        if self.nodes[v.0].value.rows() != nk {
            return Err(Error::arg("masked_attention: k/v row mismatch"));
        }
        let qn = self.rms_norm_rows(q, eps)?;
        let kn = self.rms_norm_rows(k, eps)?;
        let kt = self.transpose(kn)?;
        let scores = self.matmul(qn, kt)?;
        let scaled = self.scale(scores, 1.0 / (dq as f64).sqrt())?;
        let weights = self.softmax_rows(scaled, 1.0, mask)?;
        self.matmul(weights, v)
    }

    /// Reverse-mode sweep from a scalar loss node. Returns per-node gradients;
    /// indexing matches node ids.
    fn backward_internal(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::arg("backward: loss must be scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::AddRowBroadcast(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    let d = self.nodes[b.0].value.numel();
                    let mut gb = vec![0.0; d];
                    for chunk in g.data().chunks(d) {
                        for (s, &gv) in gb.iter_mut().zip(chunk) {
                            *s += gv;
                        }
                    }
                    let gb = Tensor::new(self.nodes[b.0].value.shape().to_vec(), gb)?;
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Mul(a, b) => {
                    let ga = elementwise_prod(&g, &self.nodes[b.0].value);
                    let gb = elementwise_prod(&g, &self.nodes[a.0].value);
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::MulRowBroadcast(a, b) => {
                    let d = self.nodes[b.0].value.numel();
                    let gain = self.nodes[b.0].value.data();
                    let mut ga = g.data().to_vec();
                    for chunk in ga.chunks_mut(d) {
                        for (v, &gv) in chunk.iter_mut().zip(gain) {
                            *v *= gv;
                        }
                    }
                    let ga = Tensor::new(self.nodes[a.0].value.shape().to_vec(), ga)?;
                    let a_data = self.nodes[a.0].value.data();
                    let mut gb = vec![0.0; d];
                    for (gchunk, achunk) in g.data().chunks(d).zip(a_data.chunks(d)) {
                        for j in 0..d {
                            gb[j] += gchunk[j] * achunk[j];
                        }
                    }
                    let gb = Tensor::new(self.nodes[b.0].value.shape().to_vec(), gb)?;
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Scale(a, s) => {
                    let ga = g.map(|v| v * s);
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Matmul(a, b) => {
                    let bt = self.nodes[b.0].value.transpose();
                    let at = self.nodes[a.0].value.transpose();
                    let ga = g.matmul(&bt)?;
                    let gb = at.matmul(&g)?;
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, *a, &g.transpose());
                }
                Op::SoftmaxRows { input, temp } => {
                    let p = &node.value;
                    let (n, d) = (p.rows(), p.cols());
                    let mut gz = vec![0.0; n * d];
                    for i in 0..n {
                        let prow = &p.data()[i * d..(i + 1) * d];
                        let grow = &g.data()[i * d..(i + 1) * d];
                        let dot: f64 = prow.iter().zip(grow).map(|(&pv, &gv)| pv * gv).sum();
                        for j in 0..d {
                            gz[i * d + j] = prow[j] * (grow[j] - dot) / temp;
                        }
                    }
                    let gz = Tensor::new(p.shape().to_vec(), gz)?;
                    accumulate(&mut grads, *input, &gz);
                }
                Op::RmsNormRows { input, eps } => {
                    let x = &self.nodes[input.0].value;
                    let (n, d) = (x.rows(), x.cols());
                    let mut gx = vec![0.0; n * d];
                    for i in 0..n {
                        let xrow = &x.data()[i * d..(i + 1) * d];
                        let grow = &g.data()[i * d..(i + 1) * d];
                        let ms = xrow.iter().map(|v| v * v).sum::<f64>() / d as f64;
                        let r = (ms + eps).sqrt();
                        let dot: f64 = xrow.iter().zip(grow).map(|(&xv, &gv)| xv * gv).sum();
                        let c = dot / (d as f64 * r * r * r);
                        for j in 0..d {
                            gx[i * d + j] = grow[j] / r - xrow[j] * c;
                        }
                    }
                    let gx = Tensor::new(x.shape().to_vec(), gx)?;
                    accumulate(&mut grads, *input, &gx);
                }
                Op::Sigmoid(a) => {
                    let s = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(s.data())
                        .map(|(&gv, &sv)| gv * sv * (1.0 - sv))
                        .collect();
                    let ga = Tensor::new(s.shape().to_vec(), data)?;
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Log(a) => {
                    let x = &self.nodes[a.0].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&gv, &xv)| gv / xv)
                        .collect();
                    let ga = Tensor::new(x.shape().to_vec(), data)?;
                    accumulate(&mut grads, *a, &ga);
                }
                Op::GatherRows { input, indices } => {
                    let x = &self.nodes[input.0].value;
                    let d = x.cols();
                    let mut gx = vec![0.0; x.numel()];
                    for (pos, &i) in indices.iter().enumerate() {
                        let grow = &g.data()[pos * d..(pos + 1) * d];
                        for j in 0..d {
                            gx[i * d + j] += grow[j];
                        }
                    }
                    let gx = Tensor::new(x.shape().to_vec(), gx)?;
                    accumulate(&mut grads, *input, &gx);
                }
                Op::SliceCols { input, start, len } => {
                    let x = &self.nodes[input.0].value;
                    let (n, d) = (x.rows(), x.cols());
                    let mut gx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..*len {
                            gx[i * d + start + j] = g.data()[i * len + j];
                        }
                    }
                    let gx = Tensor::new(x.shape().to_vec(), gx)?;
                    accumulate(&mut grads, *input, &gx);
                }
                Op::ConcatCols(parts) => {
                    let n = node.value.rows();
                    let total = node.value.cols();
                    let mut start = 0;
                    for p in parts {
                        let d = self.nodes[p.0].value.cols();
                        let mut gp = Vec::with_capacity(n * d);
                        for i in 0..n {
                            gp.extend_from_slice(&g.data()[i * total + start..i * total + start + d]);
                        }
                        let gp = Tensor::new(vec![n, d], gp)?;
                        accumulate(&mut grads, *p, &gp);
                        start += d;
                    }
                }
                Op::SumAll(a) => {
                    let x = &self.nodes[a.0].value;
                    let gv = g.scalar_value();
                    let ga = Tensor::new(x.shape().to_vec(), vec![gv; x.numel()])?;
                    accumulate(&mut grads, *a, &ga);
                }
            }
        }
        Ok(grads)
    }

    /// Run backward and push gradients of bound parameters into the store.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward_internal(loss)?;
        for (name, id) in &self.bindings {
            if let Some(g) = &grads[id.0] {
                store.accumulate_grad(name, g);
            }
        }
        Ok(())
    }

    /// Run backward and collect gradients of bound parameters into a map,
    /// leaving the store untouched (parallel workers reduce these in a fixed
    /// order afterwards).
    pub fn backward_collect(&self, loss: NodeId) -> Result<BTreeMap<String, Tensor>> {
        let mut grads = self.backward_internal(loss)?;
        let mut out = BTreeMap::new();
        for (name, id) in &self.bindings {
            if let Some(g) = grads[id.0].take() {
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }

    /// Gradient of the loss w.r.t. an arbitrary node (test hook).
    pub fn grad_of(&self, loss: NodeId, node: NodeId) -> Result<Option<Tensor>> {
        let mut grads = self.backward_internal(loss)?;
        Ok(grads[node.0].take())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: &Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.axpy(1.0, g),
        slot => *slot = Some(g.clone()),
    }
}

fn elementwise_prod(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape checked at construction")
}

/// Evaluate a graph-producing computation, backpropagate, and accumulate
/// parameter gradients into the store. Returns the scalar loss.
pub fn forward_backward(
    store: &mut ParamStore,
    build: impl FnOnce(&mut Graph, &ParamStore) -> Result<NodeId>,
) -> Result<f64> {
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    let loss_value = graph.value(loss).scalar_value();
    graph.backward(loss, store)?;
    Ok(loss_value)
}

/// Like [`forward_backward`] but returns the gradients as a map instead of
/// mutating the store.
pub fn forward_grads(
    store: &ParamStore,
    build: impl FnOnce(&mut Graph, &ParamStore) -> Result<NodeId>,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    let loss_value = graph.value(loss).scalar_value();
    let grads = graph.backward_collect(loss)?;
    Ok((loss_value, grads))
}

/// Standalone temperature softmax on a plain vector (inference paths).
pub fn softmax_t(logits: &[f64], temp: f64) -> Result<Vec<f64>> {
    if temp <= 0.0 || !temp.is_finite() {
        return Err(Error::arg("softmax_t: temperature must be positive"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("softmax_t", "non-finite logit"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) / temp).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}
