//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! The tape is define-by-run and rebuilt every forward pass. Arrays are
//! two-dimensional (scalars are 1x1); buffers are shared via `Arc` so
//! parameter snapshots are cheap. Ops reference earlier node ids only, so a
//! single reverse sweep visits the DAG in reverse topological order.

pub mod checkpoint;
pub mod optim;
pub mod params;

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("backward already ran on this tape")]
    BackwardTwice,
}

/// Dense row-major 2-D array.
#[derive(Debug, Clone)]
pub struct Array {
    pub rows: usize,
    pub cols: usize,
    data: Arc<Vec<f64>>,
}

impl Array {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "array data length mismatch");
        Self { rows, cols, data: Arc::new(data) }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(1, 1, vec![v])
    }

    pub fn from_shared(rows: usize, cols: usize, data: Arc<Vec<f64>>) -> Self {
        assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn shared(&self) -> Arc<Vec<f64>> {
        self.data.clone()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        let v: &mut Vec<f64> = Arc::make_mut(&mut self.data);
        v.as_mut_slice()
    }

    pub fn numel(&self) -> usize {
        self.rows * self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast-add a 1xN row vector to every row.
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    /// Row gather (embedding lookup / row slicing).
    GatherRows(NodeId, Vec<usize>),
    SliceCols { x: NodeId, start: usize, width: usize },
    ConcatCols(Vec<NodeId>),
    Relu(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId },
    MaskedSoftmax { x: NodeId, mask: Arc<Vec<bool>> },
    MaskedLogSoftmax { x: NodeId, mask: Arc<Vec<bool>> },
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Select { x: NodeId, index: usize },
    SelectPerRow { x: NodeId, indices: Vec<usize> },
    /// bias[i][j] = qr[i][codes[i*dim+j]]; qr is L x NUM_RELATIONS.
    RelationBias { qr: NodeId, codes: Arc<Vec<u8>>, dim: usize },
}

struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
    /// Cached per-row (mean, inv_std) for layer norm.
    ln_cache: Option<Vec<(f64, f64)>>,
}

/// Numerical-stability epsilon inside the layer-norm variance.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    backward_done: bool,
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

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    /// Gradient of the loss w.r.t. this node; `None` before backward or for
    /// nodes outside the differentiable cone.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        if !self.backward_done {
            return None;
        }
        self.grads.get(id.0).map(|g| g.as_slice()).filter(|g| !g.is_empty())
    }

    fn push(&mut self, value: Array, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad, ln_cache: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.leaf(value, false)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols != bv.rows {
            return Err(AutodiffError::ShapeMismatch { op: "matmul", lhs: av.shape(), rhs: bv.shape() });
        }
        let out = Array::new(
            av.rows,
            bv.cols,
            matmul_kernel(av.data(), bv.data(), av.rows, av.cols, bv.cols),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Matmul(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(AutodiffError::ShapeMismatch { op: "add", lhs: av.shape(), rhs: bv.shape() });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Array::new(av.rows, av.cols, data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, rv) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        if rv.rows != 1 || rv.cols != av.cols {
            return Err(AutodiffError::ShapeMismatch { op: "add_row", lhs: av.shape(), rhs: rv.shape() });
        }
        let mut data = av.data().to_vec();
        for i in 0..av.rows {
            for j in 0..av.cols {
                data[i * av.cols + j] += rv.data()[j];
            }
        }
        let out = Array::new(av.rows, av.cols, data);
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(AutodiffError::ShapeMismatch { op: "mul", lhs: av.shape(), rhs: bv.shape() });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Array::new(av.rows, av.cols, data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let av = &self.nodes[a.0].value;
        let out = Array::new(av.rows, av.cols, av.data().iter().map(|x| x * s).collect());
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let (m, n) = av.shape();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = av.data()[i * n + j];
            }
        }
        let out = Array::new(n, m, data);
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn gather_rows(&mut self, table: NodeId, rows: Vec<usize>) -> NodeId {
        let tv = &self.nodes[table.0].value;
        let n = tv.cols;
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in &rows {
            data.extend_from_slice(&tv.data()[r * n..(r + 1) * n]);
        }
        let out = Array::new(rows.len(), n, data);
        let rg = self.rg(table);
        self.push(out, Op::GatherRows(table, rows), rg)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> NodeId {
        let xv = &self.nodes[x.0].value;
        assert!(start + width <= xv.cols, "column slice out of range");
        let mut data = Vec::with_capacity(xv.rows * width);
        for i in 0..xv.rows {
            data.extend_from_slice(&xv.data()[i * xv.cols + start..i * xv.cols + start + width]);
        }
        let out = Array::new(xv.rows, width, data);
        let rg = self.rg(x);
        self.push(out, Op::SliceCols { x, start, width }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.rows;
        let mut cols = 0;
        for &p in parts {
            let pv = &self.nodes[p.0].value;
            if pv.rows != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: (rows, 0),
                    rhs: pv.shape(),
                });
            }
            cols += pv.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let pv = &self.nodes[p.0].value;
                data.extend_from_slice(&pv.data()[i * pv.cols..(i + 1) * pv.cols]);
            }
        }
        let out = Array::new(rows, cols, data);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let out = Array::new(av.rows, av.cols, data);
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Per-row layer normalization with affine parameters (1xN each).
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        let xv = &self.nodes[x.0].value;
        let gv = &self.nodes[gamma.0].value;
        let bv = &self.nodes[beta.0].value;
        if gv.shape() != (1, xv.cols) || bv.shape() != (1, xv.cols) {
            return Err(AutodiffError::ShapeMismatch { op: "layer_norm", lhs: xv.shape(), rhs: gv.shape() });
        }
        let (m, n) = xv.shape();
        let mut data = vec![0.0; m * n];
        let mut cache = Vec::with_capacity(m);
        for i in 0..m {
            let row = &xv.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            cache.push((mean, inv));
            for j in 0..n {
                let y = (row[j] - mean) * inv;
                data[i * n + j] = y * gv.data()[j] + bv.data()[j];
            }
        }
        let out = Array::new(m, n, data);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let id = self.push(out, Op::LayerNorm { x, gamma, beta }, rg);
        self.nodes[id.0].ln_cache = Some(cache);
        Ok(id)
    }

    /// Row-wise softmax restricted to unmasked entries. Masked entries get
    /// probability exactly zero and receive zero gradient. Every row must
    /// have at least one unmasked entry.
    pub fn masked_softmax(&mut self, x: NodeId, mask: Arc<Vec<bool>>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        assert_eq!(mask.len(), xv.numel(), "mask length mismatch");
        let data = masked_softmax_kernel(xv.data(), &mask, xv.rows, xv.cols);
        let out = Array::new(xv.rows, xv.cols, data);
        let rg = self.rg(x);
        self.push(out, Op::MaskedSoftmax { x, mask }, rg)
    }

    /// Row-wise log-softmax over unmasked entries; masked outputs are 0 with
    /// zero gradient (pair with `masked_softmax` for entropies).
    pub fn masked_log_softmax(&mut self, x: NodeId, mask: Arc<Vec<bool>>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        assert_eq!(mask.len(), xv.numel(), "mask length mismatch");
        let (m, n) = xv.shape();
        let data = masked_log_softmax_kernel(xv.data(), &mask, m, n);
        let out = Array::new(m, n, data);
        let rg = self.rg(x);
        self.push(out, Op::MaskedLogSoftmax { x, mask }, rg)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let out = Array::new(av.rows, av.cols, av.data().iter().map(|x| x.ln()).collect());
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let out = Array::scalar(av.data().iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let out = Array::scalar(av.data().iter().sum::<f64>() / av.numel() as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    pub fn select(&mut self, a: NodeId, index: usize) -> NodeId {
        let av = &self.nodes[a.0].value;
        let out = Array::scalar(av.data()[index]);
        let rg = self.rg(a);
        self.push(out, Op::Select { x: a, index }, rg)
    }

    /// out[i] = a[i, indices[i]] as a column vector.
    pub fn select_per_row(&mut self, a: NodeId, indices: Vec<usize>) -> NodeId {
        let av = &self.nodes[a.0].value;
        assert_eq!(indices.len(), av.rows);
        let data = indices.iter().enumerate().map(|(i, &j)| av.at(i, j)).collect();
        let out = Array::new(av.rows, 1, data);
        let rg = self.rg(a);
        self.push(out, Op::SelectPerRow { x: a, indices }, rg)
    }

    /// bias[i][j] = qr[i][codes[i*dim + j]].
    pub fn relation_bias(&mut self, qr: NodeId, codes: Arc<Vec<u8>>, dim: usize) -> NodeId {
        let qv = &self.nodes[qr.0].value;
        assert_eq!(qv.rows, dim);
        assert_eq!(codes.len(), dim * dim);
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = qv.at(i, codes[i * dim + j] as usize);
            }
        }
        let out = Array::new(dim, dim, data);
        let rg = self.rg(qr);
        self.push(out, Op::RelationBias { qr, codes, dim }, rg)
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate per node;
    /// calling backward twice on one tape is an error.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AutodiffError> {
        if self.backward_done {
            return Err(AutodiffError::BackwardTwice);
        }
        let lv = &self.nodes[loss.0].value;
        if lv.shape() != (1, 1) {
            return Err(AutodiffError::NonScalarLoss { rows: lv.rows, cols: lv.cols });
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| if n.requires_grad { vec![0.0; n.value.numel()] } else { Vec::new() })
            .collect();
        if self.nodes[loss.0].requires_grad {
            self.grads[loss.0][0] = 1.0;
        }
        for id in (0..self.nodes.len()).rev() {
            if !self.nodes[id].requires_grad || self.grads[id].is_empty() {
                continue;
            }
            self.backprop_node(id);
        }
        self.backward_done = true;
        Ok(())
    }

    fn backprop_node(&mut self, id: usize) {
        let g = std::mem::take(&mut self.grads[id]);
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                let (m, k, n) = (av.rows, av.cols, bv.cols);
                if self.rg(a) {
                    // dA = dC . B^T
                    let da = matmul_nt_kernel(&g, bv.data(), m, n, k);
                    axpy(&mut self.grads[a.0], &da);
                }
                if self.rg(b) {
                    // dB = A^T . dC
                    let db = matmul_tn_kernel(av.data(), &g, m, k, n);
                    axpy(&mut self.grads[b.0], &db);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                if self.rg(a) {
                    axpy(&mut self.grads[a.0], &g);
                }
                if self.rg(b) {
                    axpy(&mut self.grads[b.0], &g);
                }
            }
            Op::AddRow(a, row) => {
                let (a, row) = (*a, *row);
                let cols = self.nodes[a.0].value.cols;
                if self.rg(a) {
                    axpy(&mut self.grads[a.0], &g);
                }
                if self.rg(row) {
                    let rows = self.nodes[a.0].value.rows;
                    for i in 0..rows {
                        for j in 0..cols {
                            self.grads[row.0][j] += g[i * cols + j];
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                if self.rg(a) {
                    for (ga, (gc, y)) in
                        self.grads[a.0].iter_mut().zip(g.iter().zip(bv.data()))
                    {
                        *ga += gc * y;
                    }
                }
                if self.rg(b) {
                    for (gb, (gc, x)) in
                        self.grads[b.0].iter_mut().zip(g.iter().zip(av.data()))
                    {
                        *gb += gc * x;
                    }
                }
            }
            Op::Scale(a, s) => {
                let (a, s) = (*a, *s);
                if self.rg(a) {
                    for (ga, gc) in self.grads[a.0].iter_mut().zip(&g) {
                        *ga += gc * s;
                    }
                }
            }
            Op::Transpose(a) => {
                let a = *a;
                let (m, n) = self.nodes[a.0].value.shape();
                if self.rg(a) {
                    for i in 0..m {
                        for j in 0..n {
                            self.grads[a.0][i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::GatherRows(table, rows) => {
                let table = *table;
                let rows = rows.clone();
                let n = self.nodes[table.0].value.cols;
                if self.rg(table) {
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..n {
                            self.grads[table.0][r * n + j] += g[i * n + j];
                        }
                    }
                }
            }
            Op::SliceCols { x, start, width } => {
                let (x, start, width) = (*x, *start, *width);
                let (m, n) = self.nodes[x.0].value.shape();
                if self.rg(x) {
                    for i in 0..m {
                        for j in 0..width {
                            self.grads[x.0][i * n + start + j] += g[i * width + j];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let rows = self.nodes[id].value.rows;
                let total = self.nodes[id].value.cols;
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols;
                    if self.rg(p) {
                        for i in 0..rows {
                            for j in 0..w {
                                self.grads[p.0][i * w + j] += g[i * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Relu(a) => {
                let a = *a;
                let av = self.nodes[a.0].value.clone();
                if self.rg(a) {
                    for (ga, (gc, x)) in
                        self.grads[a.0].iter_mut().zip(g.iter().zip(av.data()))
                    {
                        if *x > 0.0 {
                            *ga += gc;
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let xv = self.nodes[x.0].value.clone();
                let gv = self.nodes[gamma.0].value.clone();
                let cache = self.nodes[id].ln_cache.clone().expect("layer norm cache");
                let (m, n) = xv.shape();
                for i in 0..m {
                    let (mean, inv) = cache[i];
                    let row = &xv.data()[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    if self.rg(beta) {
                        for j in 0..n {
                            self.grads[beta.0][j] += gr[j];
                        }
                    }
                    if self.rg(gamma) {
                        for j in 0..n {
                            let y = (row[j] - mean) * inv;
                            self.grads[gamma.0][j] += gr[j] * y;
                        }
                    }
                    if self.rg(x) {
                        // dy = dout * gamma; dx = inv*(dy - mean(dy) - y*mean(dy*y))
                        let mut dy = vec![0.0; n];
                        let mut mean_dy = 0.0;
                        let mut mean_dyy = 0.0;
                        for j in 0..n {
                            dy[j] = gr[j] * gv.data()[j];
                            let y = (row[j] - mean) * inv;
                            mean_dy += dy[j];
                            mean_dyy += dy[j] * y;
                        }
                        mean_dy /= n as f64;
                        mean_dyy /= n as f64;
                        for j in 0..n {
                            let y = (row[j] - mean) * inv;
                            self.grads[x.0][i * n + j] += inv * (dy[j] - mean_dy - y * mean_dyy);
                        }
                    }
                }
            }
            Op::MaskedSoftmax { x, mask } => {
                let x = *x;
                let mask = mask.clone();
                let pv = self.nodes[id].value.clone();
                let (m, n) = pv.shape();
                if self.rg(x) {
                    for i in 0..m {
                        let p = &pv.data()[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let rmask = &mask[i * n..(i + 1) * n];
                        let dot: f64 = (0..n).filter(|&j| rmask[j]).map(|j| gr[j] * p[j]).sum();
                        for j in 0..n {
                            if rmask[j] {
                                self.grads[x.0][i * n + j] += p[j] * (gr[j] - dot);
                            }
                        }
                    }
                }
            }
            Op::MaskedLogSoftmax { x, mask } => {
                let x = *x;
                let mask = mask.clone();
                let lv = self.nodes[id].value.clone();
                let (m, n) = lv.shape();
                if self.rg(x) {
                    for i in 0..m {
                        let lp = &lv.data()[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let rmask = &mask[i * n..(i + 1) * n];
                        let gsum: f64 = (0..n).filter(|&j| rmask[j]).map(|j| gr[j]).sum();
                        for j in 0..n {
                            if rmask[j] {
                                self.grads[x.0][i * n + j] += gr[j] - lp[j].exp() * gsum;
                            }
                        }
                    }
                }
            }
            Op::Log(a) => {
                let a = *a;
                let av = self.nodes[a.0].value.clone();
                if self.rg(a) {
                    for (ga, (gc, x)) in
                        self.grads[a.0].iter_mut().zip(g.iter().zip(av.data()))
                    {
                        *ga += gc / x;
                    }
                }
            }
            Op::Sum(a) => {
                let a = *a;
                if self.rg(a) {
                    for ga in self.grads[a.0].iter_mut() {
                        *ga += g[0];
                    }
                }
            }
            Op::Mean(a) => {
                let a = *a;
                let numel = self.nodes[a.0].value.numel() as f64;
                if self.rg(a) {
                    for ga in self.grads[a.0].iter_mut() {
                        *ga += g[0] / numel;
                    }
                }
            }
            Op::Select { x, index } => {
                let (x, index) = (*x, *index);
                if self.rg(x) {
                    self.grads[x.0][index] += g[0];
                }
            }
            Op::SelectPerRow { x, indices } => {
                let x = *x;
                let indices = indices.clone();
                let n = self.nodes[x.0].value.cols;
                if self.rg(x) {
                    for (i, &j) in indices.iter().enumerate() {
                        self.grads[x.0][i * n + j] += g[i];
                    }
                }
            }
            Op::RelationBias { qr, codes, dim } => {
                let (qr, dim) = (*qr, *dim);
                let codes = codes.clone();
                let ncols = self.nodes[qr.0].value.cols;
                if self.rg(qr) {
                    for i in 0..dim {
                        for j in 0..dim {
                            let c = codes[i * dim + j] as usize;
                            self.grads[qr.0][i * ncols + c] += g[i * dim + j];
                        }
                    }
                }
            }
        }
        self.grads[id] = g;
    }
}

fn axpy(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// C = A (m x k) . B (k x n), ikj loop order.
pub fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// C = A (m x n) . B^T where B is (k x n) -> (m x k).
fn matmul_nt_kernel(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += arow[j] * brow[j];
            }
            c[i * k + p] = s;
        }
    }
    c
}

/// C = A^T . B where A is (m x k), B is (m x n) -> (k x n).
fn matmul_tn_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// Row-wise log-softmax over unmasked entries; masked outputs are exactly
/// zero. Shared by the tape op and the sampler.
pub fn masked_log_softmax_kernel(x: &[f64], mask: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &x[i * cols..(i + 1) * cols];
        let rmask = &mask[i * cols..(i + 1) * cols];
        let mx = row
            .iter()
            .zip(rmask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..cols {
            if rmask[j] {
                z += (row[j] - mx).exp();
            }
        }
        let log_z = z.ln() + mx;
        for j in 0..cols {
            if rmask[j] {
                out[i * cols + j] = row[j] - log_z;
            }
        }
    }
    out
}

/// Row-wise softmax over unmasked entries; masked outputs are exactly zero.
/// Shared by the tape op and the incremental decoder so both paths agree
/// bit for bit.
pub fn masked_softmax_kernel(x: &[f64], mask: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &x[i * cols..(i + 1) * cols];
        let rmask = &mask[i * cols..(i + 1) * cols];
        let mx = row
            .iter()
            .zip(rmask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        debug_assert!(mx > f64::NEG_INFINITY, "softmax row fully masked");
        let mut z = 0.0;
        for j in 0..cols {
            if rmask[j] {
                let e = (row[j] - mx).exp();
                out[i * cols + j] = e;
                z += e;
            }
        }
        for j in 0..cols {
            if rmask[j] {
                out[i * cols + j] /= z;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
