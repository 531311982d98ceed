//! Dual-branch attention policy over operation–machine pairs.
//!
//! Operation branch: self-attention restricted to each operation and its
//! later job-mates, with rotary position encoding on intra-job indices.
//! Machine branch: cross-attention from each machine to its eligible
//! operations plus itself, with one shared duration embedding added to the
//! query, key and value of every pair. A pair-scoring MLP turns the final
//! embeddings into a distribution over feasible actions.

mod cache;
mod checkpoint;
mod config;

use std::sync::Arc;

use rand::Rng;

pub use cache::{CacheStats, KvCache};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use config::{Activation, PolicyConfig};

use crate::env::StateFeatures;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, RopeTable, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln1: Norm,
    ff1: Linear,
    ff2: Linear,
    ln2: Norm,
}

#[derive(Clone, Debug)]
struct Net {
    op_in: Linear,
    mach_in: Linear,
    edge_in: Linear,
    op_blocks: Vec<Block>,
    mach_blocks: Vec<Block>,
    head_edge: Linear,
    head: Vec<Linear>,
    critic: Vec<Linear>,
}

fn linear<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Linear {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Linear {
        w: store.add(format!("{name}.w"), Tensor::uniform(fan_in, fan_out, bound, rng)),
        b: store.add(format!("{name}.b"), Tensor::uniform(1, fan_out, bound, rng)),
    }
}

fn norm(store: &mut ParamStore, name: &str, d: usize) -> Norm {
    Norm {
        gain: store.add(format!("{name}.gain"), Tensor::filled(1, d, 1.0)),
        bias: store.add(format!("{name}.bias"), Tensor::zeros(1, d)),
    }
}

fn block<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, c: &PolicyConfig, rng: &mut R) -> Block {
    let d = c.d_model;
    Block {
        q: linear(store, &format!("{name}.q"), d, d, rng),
        k: linear(store, &format!("{name}.k"), d, d, rng),
        v: linear(store, &format!("{name}.v"), d, d, rng),
        o: linear(store, &format!("{name}.o"), d, d, rng),
        ln1: norm(store, &format!("{name}.ln1"), d),
        ff1: linear(store, &format!("{name}.ff1"), d, c.ffn_dim, rng),
        ff2: linear(store, &format!("{name}.ff2"), c.ffn_dim, d, rng),
        ln2: norm(store, &format!("{name}.ln2"), d),
    }
}

fn mlp<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, c: &PolicyConfig, rng: &mut R) -> Vec<Linear> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat(c.head_hidden).take(c.head_layers - 1));
    dims.push(1);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| linear(store, &format!("{name}.{i}"), w[0], w[1], rng))
        .collect()
}

impl Net {
    fn build<R: Rng + ?Sized>(c: &PolicyConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        let d = c.d_model;
        let op_in = linear(store, "op_in", 2, d, rng);
        let mach_in = linear(store, "mach_in", 1, d, rng);
        let edge_in = linear(store, "edge_in", 1, d, rng);
        let mut op_blocks = Vec::new();
        let mut mach_blocks = Vec::new();
        for l in 0..c.layers {
            op_blocks.push(block(store, &format!("op{l}"), c, rng));
            mach_blocks.push(block(store, &format!("mach{l}"), c, rng));
        }
        let head_edge = linear(store, "head_edge", 1, d, rng);
        let head = mlp(store, "head", 3 * d, c, rng);
        let critic = if c.critic_head {
            mlp(store, "critic", 2 * d, c, rng)
        } else {
            Vec::new()
        };
        Self {
            op_in,
            mach_in,
            edge_in,
            op_blocks,
            mach_blocks,
            head_edge,
            head,
            critic,
        }
    }
}

/// Index lists derived from one [`StateFeatures`].
pub(crate) struct Topology {
    /// Operation attention pairs `(query node, key node)`, grouped by query.
    pair_q: Arc<Vec<usize>>,
    pair_k: Arc<Vec<usize>>,
    edge_node: Arc<Vec<usize>>,
    edge_mach: Arc<Vec<usize>>,
    /// Segment of each machine-attention entry: `m` self entries, then edges.
    mach_seg: Arc<Vec<usize>>,
    act_node: Arc<Vec<usize>>,
    act_mach: Arc<Vec<usize>>,
    act_edge: Arc<Vec<usize>>,
}

impl Topology {
    pub(crate) fn new(f: &StateFeatures) -> Self {
        let (mut pair_q, mut pair_k) = (Vec::new(), Vec::new());
        for (q, k) in attention_pairs(f) {
            pair_q.push(q);
            pair_k.push(k);
        }
        let m = f.num_machines();
        let edge_node: Vec<usize> = f.edges.iter().map(|e| e.node).collect();
        let edge_mach: Vec<usize> = f.edges.iter().map(|e| e.machine).collect();
        let mach_seg = (0..m).chain(edge_mach.iter().copied()).collect();
        Self {
            pair_q: Arc::new(pair_q),
            pair_k: Arc::new(pair_k),
            act_node: Arc::new(f.actions.iter().map(|&e| edge_node[e]).collect()),
            act_mach: Arc::new(f.actions.iter().map(|&e| edge_mach[e]).collect()),
            act_edge: Arc::new(f.actions.clone()),
            edge_node: Arc::new(edge_node),
            edge_mach: Arc::new(edge_mach),
            mach_seg: Arc::new(mach_seg),
        }
    }
}

/// Every `(a, b)` with `a` attending to `b`, grouped by `a`, `b` ascending.
pub(crate) fn attention_pairs(f: &StateFeatures) -> Vec<(usize, usize)> {
    let n = f.num_nodes();
    let mut pairs = Vec::new();
    for a in 0..n {
        // nodes of one job are contiguous and in chain order
        let mut b = a;
        while b < n && f.op_job[b] == f.op_job[a] {
            pairs.push((a, b));
            b += 1;
        }
    }
    pairs
}

/// Probabilities over the feasible actions of one state, in
/// [`StateFeatures::actions`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: Option<f64>,
}

impl PolicyOutput {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.logits.iter().enumerate() {
            if p > self.logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left `u` above the cumulative sum; take the last positive entry
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().zip(&self.log_probs).map(|(p, l)| p * l).sum::<f64>()
    }

    /// Row-major `nodes x machines` probabilities; infeasible pairs are 0.
    pub fn dense_probs(&self, f: &StateFeatures) -> Vec<f64> {
        let m = f.num_machines();
        let mut out = vec![0.0; f.num_nodes() * m];
        for (i, &e) in f.actions.iter().enumerate() {
            let edge = f.edges[e];
            out[edge.node * m + edge.machine] = self.probs[i];
        }
        out
    }
}

/// Recorded forward pass.
pub struct Forward<'g> {
    /// Operation embeddings: input projection, then one entry per layer.
    pub op_embeddings: Vec<Var<'g>>,
    /// Machine embeddings: input projection, then one entry per layer.
    pub mach_embeddings: Vec<Var<'g>>,
    /// Per layer, weights of each attention pair, `pairs x heads`.
    pub op_attention: Vec<Var<'g>>,
    /// Per layer, `(machines + edges) x heads`; the first `machines` rows
    /// are the self weights.
    pub mach_attention: Vec<Var<'g>>,
    /// `1 x actions`.
    pub logits: Var<'g>,
    pub log_probs: Var<'g>,
    pub value: Option<Var<'g>>,
}

impl Forward<'_> {
    pub fn output(&self) -> PolicyOutput {
        let logits = self.logits.tensor().into_data();
        let log_probs = self.log_probs.tensor().into_data();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        PolicyOutput {
            logits,
            log_probs,
            probs,
            value: self.value.map(|v| v.item()),
        }
    }
}

/// Policy configuration plus its parameters.
#[derive(Clone, Debug)]
pub struct Policy {
    config: PolicyConfig,
    params: ParamStore,
    net: Net,
}

impl Policy {
    /// Fresh parameters: linear maps `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// norms at gain 1 and bias 0.
    pub fn new<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let net = Net::build(&config, &mut params, rng);
        Ok(Self { config, params, net })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Same architecture with `params` swapped in; names and shapes must match.
    pub fn with_params(&self, params: &ParamStore) -> Result<Policy> {
        let same = params.len() == self.params.len()
            && (0..params.len()).all(|i| {
                params.name(i) == self.params.name(i) && params.value(i).shape() == self.params.value(i).shape()
            });
        if !same {
            return Err(Error::Checkpoint("parameter set does not fit this architecture".into()));
        }
        Ok(Self {
            config: self.config.clone(),
            params: params.clone(),
            net: self.net.clone(),
        })
    }

    pub fn has_critic(&self) -> bool {
        !self.net.critic.is_empty()
    }

    fn lin<'g>(&self, g: &'g Graph, l: Linear, x: Var<'g>) -> Result<Var<'g>> {
        x.matmul(g.param(&self.params, l.w))?.add_row(g.param(&self.params, l.b))
    }

    fn norm<'g>(&self, g: &'g Graph, n: Norm, x: Var<'g>) -> Result<Var<'g>> {
        x.layer_norm(self.config.layer_norm_eps)
            .mul_row(g.param(&self.params, n.gain))?
            .add_row(g.param(&self.params, n.bias))
    }

    fn activate<'g>(&self, x: Var<'g>) -> Var<'g> {
        match self.config.activation {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Attention output, then residual + norm, feed-forward, residual + norm.
    fn post_attention<'g>(&self, g: &'g Graph, b: &Block, x: Var<'g>, attn: Var<'g>) -> Result<Var<'g>> {
        let h1 = self.norm(g, b.ln1, x.add(self.lin(g, b.o, attn)?)?)?;
        let ff = self.lin(g, b.ff2, self.activate(self.lin(g, b.ff1, h1)?))?;
        self.norm(g, b.ln2, h1.add(ff)?)
    }

    fn mlp<'g>(&self, g: &'g Graph, layers: &[Linear], mut x: Var<'g>) -> Result<Var<'g>> {
        for (i, &l) in layers.iter().enumerate() {
            x = self.lin(g, l, x)?;
            if i + 1 < layers.len() {
                x = x.relu();
            }
        }
        Ok(x)
    }

    pub(crate) fn rope_table(&self, positions: &[usize]) -> Result<Arc<RopeTable>> {
        Ok(Arc::new(RopeTable::new(positions, self.config.head_dim(), self.config.rope_base)?))
    }

    /// Rotated keys and plain values of operation rows `x` in layer `l`.
    pub(crate) fn op_kv<'g>(
        &self,
        g: &'g Graph,
        l: usize,
        x: Var<'g>,
        table: &Arc<RopeTable>,
    ) -> Result<(Var<'g>, Var<'g>)> {
        let b = &self.net.op_blocks[l];
        let k = self.lin(g, b.k, x)?.rope(table.clone())?;
        let v = self.lin(g, b.v, x)?;
        Ok((k, v))
    }

    /// Operation layer `l` for the query rows `x_q` (positions in `table`),
    /// attending through `pair_q` (local query row) and `pair_k` (row of
    /// `k_all`/`v_all`). Returns the new rows and the pair weights.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn op_layer<'g>(
        &self,
        g: &'g Graph,
        l: usize,
        x_q: Var<'g>,
        table: &Arc<RopeTable>,
        k_all: Var<'g>,
        v_all: Var<'g>,
        pair_q: &Arc<Vec<usize>>,
        pair_k: &Arc<Vec<usize>>,
    ) -> Result<(Var<'g>, Var<'g>)> {
        let b = &self.net.op_blocks[l];
        let dh = self.config.head_dim();
        let rows = x_q.shape()[0];
        let q = self.lin(g, b.q, x_q)?.rope(table.clone())?;
        let qa = q.gather_rows(pair_q.clone())?;
        let kb = k_all.gather_rows(pair_k.clone())?;
        let vb = v_all.gather_rows(pair_k.clone())?;
        let logits = qa.mul(kb)?.group_sum(dh)?.scale(1.0 / (dh as f64).sqrt());
        let alpha = logits.segment_softmax(pair_q.clone())?;
        let attn = alpha.group_repeat(dh).mul(vb)?.scatter_add_rows(pair_q.clone(), rows)?;
        Ok((self.post_attention(g, b, x_q, attn)?, alpha))
    }

    /// Machine layer `l`: machines attend to themselves (no edge term) and
    /// to every eligible remaining operation (edge embedding added to query,
    /// key and value).
    fn machine_layer<'g>(
        &self,
        g: &'g Graph,
        l: usize,
        h_m: Var<'g>,
        h_op: Var<'g>,
        edge: Var<'g>,
        topo: &Topology,
    ) -> Result<(Var<'g>, Var<'g>)> {
        let b = &self.net.mach_blocks[l];
        let dh = self.config.head_dim();
        let m = h_m.shape()[0];
        let scale = 1.0 / (dh as f64).sqrt();
        let qm = self.lin(g, b.q, h_m)?;
        let km = self.lin(g, b.k, h_m)?;
        let vm = self.lin(g, b.v, h_m)?;
        let ko = self.lin(g, b.k, h_op)?;
        let vo = self.lin(g, b.v, h_op)?;
        let qe = qm.gather_rows(topo.edge_mach.clone())?.add(edge)?;
        let ke = ko.gather_rows(topo.edge_node.clone())?.add(edge)?;
        let ve = vo.gather_rows(topo.edge_node.clone())?.add(edge)?;
        let self_logits = qm.mul(km)?.group_sum(dh)?.scale(scale);
        let edge_logits = qe.mul(ke)?.group_sum(dh)?.scale(scale);
        let alpha = Var::concat_rows(&[self_logits, edge_logits])?.segment_softmax(topo.mach_seg.clone())?;
        let values = Var::concat_rows(&[vm, ve])?;
        let attn = alpha.group_repeat(dh).mul(values)?.scatter_add_rows(topo.mach_seg.clone(), m)?;
        Ok((self.post_attention(g, b, h_m, attn)?, alpha))
    }

    pub(crate) fn op_input<'g>(&self, g: &'g Graph, f: &StateFeatures) -> Result<Var<'g>> {
        let x = Tensor::new(f.num_nodes(), 2, f.op_features.iter().flatten().copied().collect())?;
        self.lin(g, self.net.op_in, g.constant(x))
    }

    /// Operation embeddings only; the machine branch never feeds back.
    pub fn op_branch<'g>(&self, g: &'g Graph, f: &StateFeatures) -> Result<(Vec<Var<'g>>, Vec<Var<'g>>)> {
        let topo = Topology::new(f);
        let table = self.rope_table(&f.op_position)?;
        let mut outs = vec![self.op_input(g, f)?];
        let mut attn = Vec::new();
        for l in 0..self.config.layers {
            let x = *outs.last().expect("input present");
            let (k, v) = self.op_kv(g, l, x, &table)?;
            let (y, a) = self.op_layer(g, l, x, &table, k, v, &topo.pair_q, &topo.pair_k)?;
            outs.push(y);
            attn.push(a);
        }
        Ok((outs, attn))
    }

    /// Full forward pass recorded on `g`.
    pub fn forward_graph<'g>(&self, g: &'g Graph, f: &StateFeatures) -> Result<Forward<'g>> {
        let (op_embeddings, op_attention) = self.op_branch(g, f)?;
        self.finish(g, f, &Topology::new(f), op_embeddings, op_attention)
    }

    /// Machine branch, decision head and critic on top of given operation
    /// embeddings.
    pub(crate) fn finish<'g>(
        &self,
        g: &'g Graph,
        f: &StateFeatures,
        topo: &Topology,
        op_embeddings: Vec<Var<'g>>,
        op_attention: Vec<Var<'g>>,
    ) -> Result<Forward<'g>> {
        if f.actions.is_empty() {
            return Err(Error::Contract("no feasible action to score".into()));
        }
        let m = f.num_machines();
        let mach = g.constant(Tensor::new(m, 1, f.mach_features.clone())?);
        let durations = g.constant(Tensor::column(f.edges.iter().map(|e| e.duration).collect()));
        let edge = self.lin(g, self.net.edge_in, durations)?;
        let mut mach_embeddings = vec![self.lin(g, self.net.mach_in, mach)?];
        let mut mach_attention = Vec::new();
        for l in 0..self.config.layers {
            let h_m = *mach_embeddings.last().expect("input present");
            let (y, a) = self.machine_layer(g, l, h_m, op_embeddings[l + 1], edge, topo)?;
            mach_embeddings.push(y);
            mach_attention.push(a);
        }
        let h_op = *op_embeddings.last().expect("input present");
        let h_m = *mach_embeddings.last().expect("input present");
        let pair_edge = self.lin(g, self.net.head_edge, durations.gather_rows(topo.act_edge.clone())?)?;
        let x = Var::concat_cols(&[
            h_op.gather_rows(topo.act_node.clone())?,
            h_m.gather_rows(topo.act_mach.clone())?,
            pair_edge,
        ])?;
        let logits = self.mlp(g, &self.net.head, x)?.transpose();
        let log_probs = logits.log_softmax(None)?;
        let value = if self.has_critic() {
            let pooled = Var::concat_cols(&[h_m.col_mean()?, h_op.col_mean()?])?;
            Some(self.mlp(g, &self.net.critic, pooled)?)
        } else {
            None
        };
        Ok(Forward {
            op_embeddings,
            mach_embeddings,
            op_attention,
            mach_attention,
            logits,
            log_probs,
            value,
        })
    }

    /// Inference-only forward pass.
    pub fn forward(&self, f: &StateFeatures) -> Result<PolicyOutput> {
        let g = Graph::inference();
        Ok(self.forward_graph(&g, f)?.output())
    }
}
