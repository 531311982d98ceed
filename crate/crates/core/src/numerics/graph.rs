//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles in
//! creation order, which is already a topological order. `backward` walks it
//! once in reverse. A graph built with [`Graph::inference`] records values
//! only and refuses `backward`.

use std::cell::{Ref, RefCell};
use std::sync::Arc;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    GatherRows(usize, Arc<Vec<usize>>),
    ScatterAddRows(usize, Arc<Vec<usize>>),
    Pick(usize, Arc<Vec<(usize, usize)>>),
    SumAll(usize),
    MeanAll(usize),
    RowSum(usize),
    ColSum(usize),
    ColMean(usize),
    GroupSum(usize, usize),
    GroupRepeat(usize, usize),
    Exp(usize),
    Log(usize),
    Relu(usize),
    Tanh(usize),
    Softmax(usize),
    LogSoftmax(usize, Option<Arc<Vec<bool>>>),
    SegmentSoftmax(usize, Arc<Vec<usize>>),
    LayerNorm(usize, Arc<Vec<f64>>),
    Rope(usize, Arc<RopeTable>),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
    Maximum(usize, usize),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
    param: Option<usize>,
}

/// Operation recorder. Cheap to create; drop it to free all intermediates.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    grad: bool,
}

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    g: &'g Graph,
    id: usize,
}

/// Precomputed rotation angles for rotary position encoding: row `r` is
/// split into heads of `head_dim` channels and channel pair `(2k, 2k+1)` of
/// every head is rotated by `positions[r] * base^(-2k / head_dim)`.
#[derive(Debug)]
pub struct RopeTable {
    head_dim: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(positions: &[usize], head_dim: usize, base: f64) -> Result<Self> {
        if head_dim == 0 || head_dim % 2 != 0 {
            return Err(Error::Config(format!("rotary encoding needs an even head dimension, got {head_dim}")));
        }
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(positions.len() * half);
        let mut sin = Vec::with_capacity(positions.len() * half);
        for &p in positions {
            for k in 0..half {
                let theta = base.powf(-2.0 * k as f64 / head_dim as f64);
                let (s, c) = (p as f64 * theta).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self { head_dim, cos, sin })
    }

    pub fn num_positions(&self) -> usize {
        self.cos.len() / (self.head_dim / 2)
    }

    /// Rotates `x` in place; `inverse` rotates by the negated angle.
    pub fn apply(&self, x: &mut Tensor, inverse: bool) {
        let half = self.head_dim / 2;
        let cols = x.cols();
        for r in 0..x.rows() {
            let row = x.row_mut(r);
            for h in 0..cols / self.head_dim {
                for k in 0..half {
                    let c = self.cos[r * half + k];
                    let s = if inverse { -self.sin[r * half + k] } else { self.sin[r * half + k] };
                    let i = h * self.head_dim + 2 * k;
                    let (a, b) = (row[i], row[i + 1]);
                    row[i] = a * c - b * s;
                    row[i + 1] = a * s + b * c;
                }
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if it lies on a path to the loss.
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads[v.id].as_ref()
    }

    /// Adds every parameter gradient into `acc`, indexed by parameter id.
    pub fn accumulate_params(&self, acc: &mut [Tensor]) {
        for &(node, pid) in &self.params {
            if let Some(g) = &self.grads[node] {
                acc[pid].add_assign(g);
            }
        }
    }

    /// Parameter gradients indexed by parameter id; zeros where unused.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut acc = store.zeros_like();
        self.accumulate_params(&mut acc);
        acc
    }
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!(
        "{what}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

fn softmax_rows(x: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    let cols = x.cols();
    for r in 0..x.rows() {
        let keep = |c: usize| mask.map_or(true, |m| m[r * cols + c]);
        let row = x.row(r);
        let max = (0..cols).filter(|&c| keep(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let o = out.row_mut(r);
        let mut z = 0.0;
        for c in 0..cols {
            if keep(c) {
                o[c] = (row[c] - max).exp();
                z += o[c];
            }
        }
        for v in o.iter_mut() {
            *v /= z;
        }
    }
    out
}

impl Graph {
    /// A graph that records backward information.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad: true,
        }
    }

    /// A graph that only evaluates.
    pub fn inference() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.grad
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        self.push_arc(Arc::new(value), op, None)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, param: Option<usize>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = self.grad
            && match &op {
                Op::Leaf => param.is_some(),
                _ => parents(&op).iter().any(|&p| nodes[p].needs_grad),
            };
        let op = if self.grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            needs_grad,
            param,
        });
        Var {
            g: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that receives a gradient.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        let v = self.push_arc(Arc::new(value), Op::Leaf, None);
        self.nodes.borrow_mut()[v.id].needs_grad = self.grad;
        v
    }

    /// Leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_arc(Arc::new(value), Op::Leaf, None)
    }

    /// Leaf bound to parameter `id` of `store`; shares its storage.
    pub fn param(&self, store: &ParamStore, id: usize) -> Var<'_> {
        self.push_arc(store.value_arc(id), Op::Leaf, Some(id))
    }

    pub fn value(&self, v: Var<'_>) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| n[v.id].value.as_ref())
    }

    fn val(&self, id: usize) -> Arc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Gradients of the scalar `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !self.grad {
            return Err(Error::Contract("backward on an inference graph".into()));
        }
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.id].value;
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "loss must be a scalar, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        Ok(Gradients { grads, params })
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn parents(op: &Op) -> Vec<usize> {
    use Op::*;
    match op {
        Leaf => vec![],
        Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | MulRow(a, b) | MulCol(a, b) | MatMul(a, b)
        | Minimum(a, b) | Maximum(a, b) => vec![*a, *b],
        ConcatCols(v) | ConcatRows(v) => v.clone(),
        Scale(a, _) | AddScalar(a) | Transpose(a) | SliceCols(a, _) | SliceRows(a, _) | GatherRows(a, _)
        | ScatterAddRows(a, _) | Pick(a, _) | SumAll(a) | MeanAll(a) | RowSum(a) | ColSum(a) | ColMean(a)
        | GroupSum(a, _) | GroupRepeat(a, _) | Exp(a) | Log(a) | Relu(a) | Tanh(a) | Softmax(a) | LogSoftmax(a, _)
        | SegmentSoftmax(a, _) | LayerNorm(a, _) | Rope(a, _) | Clamp(a, _, _) => vec![*a],
    }
}

fn acc(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].needs_grad {
        return;
    }
    match &mut grads[id] {
        Some(t) => t.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    use Op::*;
    let out = &nodes[id].value;
    let v = |i: usize| nodes[i].value.as_ref();
    let ng = |i: usize| nodes[i].needs_grad;
    match &nodes[id].op {
        Leaf => {}
        Add(a, b) => {
            acc(grads, nodes, *a, g.clone());
            acc(grads, nodes, *b, g.clone());
        }
        Sub(a, b) => {
            acc(grads, nodes, *a, g.clone());
            acc(grads, nodes, *b, g.map(|x| -x));
        }
        Mul(a, b) => {
            if ng(*a) {
                acc(grads, nodes, *a, g.zip_map(v(*b), |x, y| x * y));
            }
            if ng(*b) {
                acc(grads, nodes, *b, g.zip_map(v(*a), |x, y| x * y));
            }
        }
        AddRow(a, r) => {
            acc(grads, nodes, *a, g.clone());
            if ng(*r) {
                acc(grads, nodes, *r, col_sum(g));
            }
        }
        MulRow(a, r) => {
            let (av, rv) = (v(*a), v(*r));
            if ng(*a) {
                let mut ga = g.clone();
                for i in 0..ga.rows() {
                    for (x, w) in ga.row_mut(i).iter_mut().zip(rv.data()) {
                        *x *= w;
                    }
                }
                acc(grads, nodes, *a, ga);
            }
            if ng(*r) {
                acc(grads, nodes, *r, col_sum(&g.zip_map(av, |x, y| x * y)));
            }
        }
        MulCol(a, c) => {
            let (av, cv) = (v(*a), v(*c));
            if ng(*a) {
                let mut ga = g.clone();
                for i in 0..ga.rows() {
                    let w = cv.data()[i];
                    ga.row_mut(i).iter_mut().for_each(|x| *x *= w);
                }
                acc(grads, nodes, *a, ga);
            }
            if ng(*c) {
                acc(grads, nodes, *c, row_sum(&g.zip_map(av, |x, y| x * y)));
            }
        }
        Scale(a, s) => acc(grads, nodes, *a, g.map(|x| x * s)),
        AddScalar(a) => acc(grads, nodes, *a, g.clone()),
        MatMul(a, b) => {
            if ng(*a) {
                acc(grads, nodes, *a, g.matmul(&v(*b).transpose()).expect("shapes checked forward"));
            }
            if ng(*b) {
                acc(grads, nodes, *b, v(*a).transpose().matmul(g).expect("shapes checked forward"));
            }
        }
        Transpose(a) => acc(grads, nodes, *a, g.transpose()),
        ConcatCols(parts) => {
            let mut off = 0;
            for &p in parts {
                let w = v(p).cols();
                if ng(p) {
                    acc(grads, nodes, p, slice_cols(g, off, w));
                }
                off += w;
            }
        }
        ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let h = v(p).rows();
                if ng(p) {
                    acc(grads, nodes, p, slice_rows(g, off, h));
                }
                off += h;
            }
        }
        SliceCols(a, start) => {
            let av = v(*a);
            let mut ga = Tensor::zeros(av.rows(), av.cols());
            for r in 0..g.rows() {
                ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
            }
            acc(grads, nodes, *a, ga);
        }
        SliceRows(a, start) => {
            let av = v(*a);
            let mut ga = Tensor::zeros(av.rows(), av.cols());
            for r in 0..g.rows() {
                ga.row_mut(start + r).copy_from_slice(g.row(r));
            }
            acc(grads, nodes, *a, ga);
        }
        GatherRows(a, idx) => {
            let av = v(*a);
            acc(grads, nodes, *a, scatter_add(g, idx, av.rows()));
        }
        ScatterAddRows(a, idx) => acc(grads, nodes, *a, g.gather_rows(idx)),
        Pick(a, at) => {
            let av = v(*a);
            let mut ga = Tensor::zeros(av.rows(), av.cols());
            for (i, &(r, c)) in at.iter().enumerate() {
                ga.set(r, c, ga.get(r, c) + g.data()[i]);
            }
            acc(grads, nodes, *a, ga);
        }
        SumAll(a) => {
            let av = v(*a);
            acc(grads, nodes, *a, Tensor::filled(av.rows(), av.cols(), g.item()));
        }
        MeanAll(a) => {
            let av = v(*a);
            acc(grads, nodes, *a, Tensor::filled(av.rows(), av.cols(), g.item() / av.len() as f64));
        }
        RowSum(a) => {
            let av = v(*a);
            let mut ga = Tensor::zeros(av.rows(), av.cols());
            for r in 0..av.rows() {
                let x = g.data()[r];
                ga.row_mut(r).iter_mut().for_each(|y| *y = x);
            }
            acc(grads, nodes, *a, ga);
        }
        ColSum(a) | ColMean(a) => {
            let av = v(*a);
            let s = if matches!(nodes[id].op, ColMean(_)) { 1.0 / av.rows() as f64 } else { 1.0 };
            let mut ga = Tensor::zeros(av.rows(), av.cols());
            for r in 0..av.rows() {
                for (y, x) in ga.row_mut(r).iter_mut().zip(g.data()) {
                    *y = x * s;
                }
            }
            acc(grads, nodes, *a, ga);
        }
        GroupSum(a, k) => acc(grads, nodes, *a, group_repeat(g, *k)),
        GroupRepeat(a, k) => acc(grads, nodes, *a, group_sum(g, *k)),
        Exp(a) => acc(grads, nodes, *a, g.zip_map(out, |x, y| x * y)),
        Log(a) => acc(grads, nodes, *a, g.zip_map(v(*a), |x, y| x / y)),
        Relu(a) => acc(grads, nodes, *a, g.zip_map(v(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
        Tanh(a) => acc(grads, nodes, *a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
        Softmax(a) => {
            let mut ga = Tensor::zeros(g.rows(), g.cols());
            for r in 0..g.rows() {
                let (y, gr) = (out.row(r), g.row(r));
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                    *o = y[c] * (gr[c] - dot);
                }
            }
            acc(grads, nodes, *a, ga);
        }
        LogSoftmax(a, mask) => {
            let cols = g.cols();
            let keep = |r: usize, c: usize| mask.as_ref().map_or(true, |m| m[r * cols + c]);
            let mut ga = Tensor::zeros(g.rows(), cols);
            for r in 0..g.rows() {
                let gr = g.row(r);
                let total: f64 = (0..cols).filter(|&c| keep(r, c)).map(|c| gr[c]).sum();
                let y = out.row(r);
                for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                    if keep(r, c) {
                        *o = gr[c] - y[c].exp() * total;
                    }
                }
            }
            acc(grads, nodes, *a, ga);
        }
        SegmentSoftmax(a, seg) => {
            let cols = g.cols();
            let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
            let mut dot = vec![0.0; nseg * cols];
            for (r, &s) in seg.iter().enumerate() {
                for c in 0..cols {
                    dot[s * cols + c] += out.get(r, c) * g.get(r, c);
                }
            }
            let mut ga = Tensor::zeros(g.rows(), cols);
            for (r, &s) in seg.iter().enumerate() {
                for c in 0..cols {
                    ga.set(r, c, out.get(r, c) * (g.get(r, c) - dot[s * cols + c]));
                }
            }
            acc(grads, nodes, *a, ga);
        }
        LayerNorm(a, inv_std) => {
            let cols = g.cols() as f64;
            let mut ga = Tensor::zeros(g.rows(), g.cols());
            for r in 0..g.rows() {
                let (y, gr) = (out.row(r), g.row(r));
                let mean_g = gr.iter().sum::<f64>() / cols;
                let mean_gy = gr.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / cols;
                for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                    *o = inv_std[r] * (gr[c] - mean_g - y[c] * mean_gy);
                }
            }
            acc(grads, nodes, *a, ga);
        }
        Rope(a, table) => {
            let mut ga = g.clone();
            table.apply(&mut ga, true);
            acc(grads, nodes, *a, ga);
        }
        Clamp(a, lo, hi) => acc(
            grads,
            nodes,
            *a,
            g.zip_map(v(*a), |x, y| if y >= *lo && y <= *hi { x } else { 0.0 }),
        ),
        Minimum(a, b) | Maximum(a, b) => {
            let is_min = matches!(nodes[id].op, Minimum(..));
            let (av, bv) = (v(*a), v(*b));
            let pick_a = |x: f64, y: f64| if is_min { x <= y } else { x >= y };
            let mut ga = g.clone();
            let mut gb = g.clone();
            for i in 0..g.len() {
                if pick_a(av.data()[i], bv.data()[i]) {
                    gb.data_mut()[i] = 0.0;
                } else {
                    ga.data_mut()[i] = 0.0;
                }
            }
            acc(grads, nodes, *a, ga);
            acc(grads, nodes, *b, gb);
        }
    }
}

fn col_sum(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, x.cols());
    for r in 0..x.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    out
}

fn row_sum(x: &Tensor) -> Tensor {
    Tensor::column((0..x.rows()).map(|r| x.row(r).iter().sum()).collect())
}

fn slice_cols(x: &Tensor, start: usize, width: usize) -> Tensor {
    let mut data = Vec::with_capacity(x.rows() * width);
    for r in 0..x.rows() {
        data.extend_from_slice(&x.row(r)[start..start + width]);
    }
    Tensor::new(x.rows(), width, data).expect("sized")
}

fn slice_rows(x: &Tensor, start: usize, height: usize) -> Tensor {
    let c = x.cols();
    Tensor::new(height, c, x.data()[start * c..(start + height) * c].to_vec()).expect("sized")
}

fn scatter_add(x: &Tensor, idx: &[usize], rows: usize) -> Tensor {
    let mut out = Tensor::zeros(rows, x.cols());
    for (i, &t) in idx.iter().enumerate() {
        for (o, v) in out.row_mut(t).iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    out
}

fn group_sum(x: &Tensor, k: usize) -> Tensor {
    let groups = x.cols() / k;
    let mut out = Tensor::zeros(x.rows(), groups);
    for r in 0..x.rows() {
        let row = x.row(r);
        for (gi, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = row[gi * k..(gi + 1) * k].iter().sum();
        }
    }
    out
}

fn group_repeat(x: &Tensor, k: usize) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols() * k);
    for r in 0..x.rows() {
        let row = x.row(r).to_vec();
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = row[c / k];
        }
    }
    out
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        self.g.value(*self)
    }

    /// Copy of the current value.
    pub fn tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.value().shape()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn same_shape(self, o: Var<'g>, what: &str) -> Result<(Arc<Tensor>, Arc<Tensor>)> {
        let (a, b) = (self.g.val(self.id), self.g.val(o.id));
        if a.shape() != b.shape() {
            return Err(shape_err(what, &a, &b));
        }
        Ok((a, b))
    }

    pub fn add(self, o: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.same_shape(o, "add")?;
        Ok(self.g.push(a.zip_map(&b, |x, y| x + y), Op::Add(self.id, o.id)))
    }

    pub fn sub(self, o: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.same_shape(o, "sub")?;
        Ok(self.g.push(a.zip_map(&b, |x, y| x - y), Op::Sub(self.id, o.id)))
    }

    pub fn mul(self, o: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.same_shape(o, "mul")?;
        Ok(self.g.push(a.zip_map(&b, |x, y| x * y), Op::Mul(self.id, o.id)))
    }

    /// Adds the `1 x c` row `r` to every row.
    pub fn add_row(self, r: Var<'g>) -> Result<Var<'g>> {
        let (a, rv) = (self.g.val(self.id), self.g.val(r.id));
        if rv.rows() != 1 || rv.cols() != a.cols() {
            return Err(shape_err("add_row", &a, &rv));
        }
        let mut out = (*a).clone();
        for i in 0..out.rows() {
            for (x, y) in out.row_mut(i).iter_mut().zip(rv.data()) {
                *x += y;
            }
        }
        Ok(self.g.push(out, Op::AddRow(self.id, r.id)))
    }

    /// Multiplies every row elementwise by the `1 x c` row `r`.
    pub fn mul_row(self, r: Var<'g>) -> Result<Var<'g>> {
        let (a, rv) = (self.g.val(self.id), self.g.val(r.id));
        if rv.rows() != 1 || rv.cols() != a.cols() {
            return Err(shape_err("mul_row", &a, &rv));
        }
        let mut out = (*a).clone();
        for i in 0..out.rows() {
            for (x, y) in out.row_mut(i).iter_mut().zip(rv.data()) {
                *x *= y;
            }
        }
        Ok(self.g.push(out, Op::MulRow(self.id, r.id)))
    }

    /// Multiplies row `i` by entry `i` of the `r x 1` column `c`.
    pub fn mul_col(self, c: Var<'g>) -> Result<Var<'g>> {
        let (a, cv) = (self.g.val(self.id), self.g.val(c.id));
        if cv.cols() != 1 || cv.rows() != a.rows() {
            return Err(shape_err("mul_col", &a, &cv));
        }
        let mut out = (*a).clone();
        for i in 0..out.rows() {
            let w = cv.data()[i];
            out.row_mut(i).iter_mut().for_each(|x| *x *= w);
        }
        Ok(self.g.push(out, Op::MulCol(self.id, c.id)))
    }

    pub fn scale(self, s: f64) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(|x| x * s), Op::Scale(self.id, s))
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, s: f64) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(|x| x + s), Op::AddScalar(self.id))
    }

    pub fn matmul(self, o: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.g.val(self.id), self.g.val(o.id));
        let out = a.matmul(&b)?;
        Ok(self.g.push(out, Op::MatMul(self.id, o.id)))
    }

    pub fn transpose(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.transpose(), Op::Transpose(self.id))
    }

    pub fn concat_cols(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let g = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?.g;
        let vals: Vec<Arc<Tensor>> = parts.iter().map(|p| g.val(p.id)).collect();
        let rows = vals[0].rows();
        if let Some(bad) = vals.iter().find(|t| t.rows() != rows) {
            return Err(shape_err("concat_cols", &vals[0], bad));
        }
        let cols: usize = vals.iter().map(|t| t.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for t in &vals {
                data.extend_from_slice(t.row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(g.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect())))
    }

    pub fn concat_rows(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let g = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?.g;
        let vals: Vec<Arc<Tensor>> = parts.iter().map(|p| g.val(p.id)).collect();
        let cols = vals[0].cols();
        if let Some(bad) = vals.iter().find(|t| t.cols() != cols) {
            return Err(shape_err("concat_rows", &vals[0], bad));
        }
        let rows: usize = vals.iter().map(|t| t.rows()).sum();
        let data = vals.iter().flat_map(|t| t.data().iter().copied()).collect();
        let out = Tensor::new(rows, cols, data)?;
        Ok(g.push(out, Op::ConcatRows(parts.iter().map(|p| p.id).collect())))
    }

    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if start + width > a.cols() {
            return Err(Error::Shape(format!("columns {start}..{} of {}", start + width, a.cols())));
        }
        Ok(self.g.push(slice_cols(&a, start, width), Op::SliceCols(self.id, start)))
    }

    pub fn slice_rows(self, start: usize, height: usize) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if start + height > a.rows() {
            return Err(Error::Shape(format!("rows {start}..{} of {}", start + height, a.rows())));
        }
        Ok(self.g.push(slice_rows(&a, start, height), Op::SliceRows(self.id, start)))
    }

    pub fn gather_rows(self, idx: Arc<Vec<usize>>) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows()) {
            return Err(Error::Shape(format!("gather row {bad} of {}", a.rows())));
        }
        Ok(self.g.push(a.gather_rows(&idx), Op::GatherRows(self.id, idx)))
    }

    /// Output row `idx[i]` accumulates input row `i`; output has `rows` rows.
    pub fn scatter_add_rows(self, idx: Arc<Vec<usize>>, rows: usize) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if idx.len() != a.rows() || idx.iter().any(|&i| i >= rows) {
            return Err(Error::Shape(format!(
                "scatter of {} rows into {rows} with {} indices",
                a.rows(),
                idx.len()
            )));
        }
        Ok(self.g.push(scatter_add(&a, &idx, rows), Op::ScatterAddRows(self.id, idx)))
    }

    /// Entries at `(row, col)` positions as a column.
    pub fn pick(self, at: Arc<Vec<(usize, usize)>>) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if at.iter().any(|&(r, c)| r >= a.rows() || c >= a.cols()) {
            return Err(Error::Shape("pick index out of range".into()));
        }
        let out = Tensor::column(at.iter().map(|&(r, c)| a.get(r, c)).collect());
        Ok(self.g.push(out, Op::Pick(self.id, at)))
    }

    pub fn sum(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(Tensor::scalar(a.sum()), Op::SumAll(self.id))
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if a.is_empty() {
            return Err(Error::Shape("mean of an empty tensor".into()));
        }
        Ok(self.g.push(Tensor::scalar(a.sum() / a.len() as f64), Op::MeanAll(self.id)))
    }

    /// Sum of each row, as an `r x 1` column.
    pub fn row_sum(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(row_sum(&a), Op::RowSum(self.id))
    }

    /// Sum over rows, as a `1 x c` row.
    pub fn col_sum(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(col_sum(&a), Op::ColSum(self.id))
    }

    /// Mean over rows, as a `1 x c` row.
    pub fn col_mean(self) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if a.rows() == 0 {
            return Err(Error::Shape("mean over zero rows".into()));
        }
        let mut out = col_sum(&a);
        out.scale_assign(1.0 / a.rows() as f64);
        Ok(self.g.push(out, Op::ColMean(self.id)))
    }

    /// Sums consecutive groups of `k` columns: `r x (g k)` to `r x g`.
    pub fn group_sum(self, k: usize) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if k == 0 || a.cols() % k != 0 {
            return Err(Error::Shape(format!("{} columns in groups of {k}", a.cols())));
        }
        Ok(self.g.push(group_sum(&a, k), Op::GroupSum(self.id, k)))
    }

    /// Repeats every column `k` times: `r x g` to `r x (g k)`.
    pub fn group_repeat(self, k: usize) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(group_repeat(&a, k), Op::GroupRepeat(self.id, k))
    }

    pub fn exp(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(f64::ln), Op::Log(self.id))
    }

    pub fn relu(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(|x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn tanh(self) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(f64::tanh), Op::Tanh(self.id))
    }

    fn check_mask(a: &Tensor, mask: &Option<Arc<Vec<bool>>>) -> Result<()> {
        match mask {
            Some(m) if m.len() != a.len() => Err(Error::Shape(format!(
                "mask of {} entries for a {}x{} tensor",
                m.len(),
                a.rows(),
                a.cols()
            ))),
            _ => Ok(()),
        }
    }

    /// Row-wise softmax. Masked-out entries (`false`) get exactly 0 and the
    /// rest renormalise; a fully masked row is all zeros.
    pub fn softmax(self, mask: Option<Arc<Vec<bool>>>) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        Self::check_mask(&a, &mask)?;
        let out = softmax_rows(&a, mask.as_deref().map(Vec::as_slice));
        Ok(self.g.push(out, Op::Softmax(self.id)))
    }

    /// Row-wise log-softmax; masked-out entries hold 0 and pass no gradient.
    pub fn log_softmax(self, mask: Option<Arc<Vec<bool>>>) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        Self::check_mask(&a, &mask)?;
        let cols = a.cols();
        let mut out = Tensor::zeros(a.rows(), cols);
        for r in 0..a.rows() {
            let keep = |c: usize| mask.as_ref().map_or(true, |m| m[r * cols + c]);
            let row = a.row(r);
            let max = (0..cols).filter(|&c| keep(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let lse = max + (0..cols).filter(|&c| keep(c)).map(|c| (row[c] - max).exp()).sum::<f64>().ln();
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                if keep(c) {
                    *o = row[c] - lse;
                }
            }
        }
        Ok(self.g.push(out, Op::LogSoftmax(self.id, mask)))
    }

    /// Softmax of each column within groups of rows sharing a segment id.
    pub fn segment_softmax(self, seg: Arc<Vec<usize>>) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if seg.len() != a.rows() {
            return Err(Error::Shape(format!("{} segment ids for {} rows", seg.len(), a.rows())));
        }
        let cols = a.cols();
        let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; nseg * cols];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(a.get(r, c));
            }
        }
        let mut out = Tensor::zeros(a.rows(), cols);
        let mut z = vec![0.0; nseg * cols];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let e = (a.get(r, c) - max[s * cols + c]).exp();
                out.set(r, c, e);
                z[s * cols + c] += e;
            }
        }
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                out.set(r, c, out.get(r, c) / z[s * cols + c]);
            }
        }
        Ok(self.g.push(out, Op::SegmentSoftmax(self.id, seg)))
    }

    /// Normalises each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(self, eps: f64) -> Var<'g> {
        let a = self.g.val(self.id);
        let c = a.cols() as f64;
        let mut out = Tensor::zeros(a.rows(), a.cols());
        let mut inv = Vec::with_capacity(a.rows());
        for r in 0..a.rows() {
            let row = a.row(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c;
            let is = 1.0 / (var + eps).sqrt();
            for (o, x) in out.row_mut(r).iter_mut().zip(row) {
                *o = (x - mean) * is;
            }
            inv.push(is);
        }
        self.g.push(out, Op::LayerNorm(self.id, Arc::new(inv)))
    }

    /// Rotary position encoding of every row per `table`.
    pub fn rope(self, table: Arc<RopeTable>) -> Result<Var<'g>> {
        let a = self.g.val(self.id);
        if table.num_positions() != a.rows() || a.cols() % table.head_dim != 0 {
            return Err(Error::Shape(format!(
                "rotary table for {} rows of head dim {} applied to {}x{}",
                table.num_positions(),
                table.head_dim,
                a.rows(),
                a.cols()
            )));
        }
        let mut out = (*a).clone();
        table.apply(&mut out, false);
        Ok(self.g.push(out, Op::Rope(self.id, table)))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        let a = self.g.val(self.id);
        self.g.push(a.map(|x| x.clamp(lo, hi)), Op::Clamp(self.id, lo, hi))
    }

    pub fn minimum(self, o: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.same_shape(o, "minimum")?;
        Ok(self.g.push(a.zip_map(&b, |x, y| if x <= y { x } else { y }), Op::Minimum(self.id, o.id)))
    }

    pub fn maximum(self, o: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.same_shape(o, "maximum")?;
        Ok(self.g.push(a.zip_map(&b, |x, y| if x >= y { x } else { y }), Op::Maximum(self.id, o.id)))
    }
}
