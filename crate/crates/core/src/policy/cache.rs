//! Reuse of operation-branch keys, values and outputs across the steps of
//! an episode.
//!
//! An operation attends only to itself and its later job-mates, and the
//! machine branch never feeds back into operations. So a row of layer `l`
//! must be recomputed only if its own layer input changed or the input of
//! some operation it attends to changed. Everything else is copied from the
//! previous call.

use std::sync::Arc;

use super::{attention_pairs, Policy, PolicyOutput, Topology};
use crate::env::StateFeatures;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::numerics::{Graph, Tensor};

/// Row counts of the most recent cached call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub kv_computed: usize,
    pub kv_reused: usize,
    pub rows_computed: usize,
    pub rows_reused: usize,
}

#[derive(Clone, Debug, Default)]
struct LayerRows {
    k: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
    out: Vec<Option<Vec<f64>>>,
}

/// Per-episode cache, keyed by operation id. Owned by one rollout.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    instance: Option<Arc<Instance>>,
    input: Vec<Option<[u64; 2]>>,
    /// Operations that were nodes in the previous call.
    present: Vec<bool>,
    layers: Vec<LayerRows>,
    stats: CacheStats,
}

fn bits(x: [f64; 2]) -> [u64; 2] {
    [x[0].to_bits(), x[1].to_bits()]
}

fn stack(rows: &[Option<Vec<f64>>], ops: &[usize], width: usize) -> Tensor {
    let mut data = Vec::with_capacity(ops.len() * width);
    for &op in ops {
        data.extend_from_slice(rows[op].as_ref().expect("row cached or just computed"));
    }
    Tensor::new(ops.len(), width, data).expect("sized")
}

impl KvCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forgets everything, including the bound instance.
    pub fn clear(&mut self) {
        *self = Self::default();
    }

    /// Work counts of the most recent [`Policy::cached_forward`] call.
    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    fn bind(&mut self, instance: &Arc<Instance>, layers: usize) -> Result<()> {
        match &self.instance {
            Some(bound) if !Arc::ptr_eq(bound, instance) && **bound != **instance => {
                return Err(Error::Cache(format!(
                    "cache belongs to instance `{}`, called with `{}`",
                    bound.meta(),
                    instance.meta()
                )))
            }
            Some(_) => {}
            None => {
                let n = instance.num_operations();
                self.instance = Some(instance.clone());
                self.input = vec![None; n];
                self.present = vec![false; n];
                self.layers = (0..layers)
                    .map(|_| LayerRows {
                        k: vec![None; n],
                        v: vec![None; n],
                        out: vec![None; n],
                    })
                    .collect();
            }
        }
        Ok(())
    }
}

impl Policy {
    /// Same result as [`Policy::forward`], recomputing only the operation
    /// rows whose inputs or attended rows changed since the previous call on
    /// `cache`. `features` must describe a state of `instance`.
    pub fn cached_forward(
        &self,
        instance: &Arc<Instance>,
        features: &StateFeatures,
        cache: &mut KvCache,
    ) -> Result<PolicyOutput> {
        let f = features;
        cache.bind(instance, self.config.layers)?;
        if f.ops.iter().any(|&op| op >= cache.input.len()) {
            return Err(Error::Cache("features do not belong to the cached instance".into()));
        }
        let n = f.num_nodes();
        let d = self.config.d_model;
        let mut stats = CacheStats::default();
        let g = Graph::inference();

        let mut dirty: Vec<bool> = (0..n)
            .map(|i| {
                let op = f.ops[i];
                !cache.present[op] || cache.input[op] != Some(bits(f.op_features[i]))
            })
            .collect();
        cache.present.iter_mut().for_each(|p| *p = false);
        for (i, &op) in f.ops.iter().enumerate() {
            cache.present[op] = true;
            cache.input[op] = Some(bits(f.op_features[i]));
        }

        let pairs = attention_pairs(f);
        let mut x = self.op_input(&g, f)?.tensor();
        let mut outs = vec![g.constant(x.clone())];
        for l in 0..self.config.layers {
            let rows: Vec<usize> = (0..n).filter(|&i| dirty[i]).collect();
            if !rows.is_empty() {
                let positions: Vec<usize> = rows.iter().map(|&i| f.op_position[i]).collect();
                let table = self.rope_table(&positions)?;
                let (k, v) = self.op_kv(&g, l, g.constant(x.gather_rows(&rows)), &table)?;
                let (k, v) = (k.tensor(), v.tensor());
                let layer = &mut cache.layers[l];
                for (r, &i) in rows.iter().enumerate() {
                    layer.k[f.ops[i]] = Some(k.row(r).to_vec());
                    layer.v[f.ops[i]] = Some(v.row(r).to_vec());
                }
            }
            stats.kv_computed += rows.len();
            stats.kv_reused += n - rows.len();

            let mut next = vec![false; n];
            for &(a, b) in &pairs {
                next[a] |= dirty[b];
            }
            let q_rows: Vec<usize> = (0..n).filter(|&i| next[i]).collect();
            if !q_rows.is_empty() {
                let mut local = vec![usize::MAX; n];
                for (r, &i) in q_rows.iter().enumerate() {
                    local[i] = r;
                }
                let (pq, pk): (Vec<usize>, Vec<usize>) =
                    pairs.iter().filter(|&&(a, _)| next[a]).map(|&(a, b)| (local[a], b)).unzip();
                let positions: Vec<usize> = q_rows.iter().map(|&i| f.op_position[i]).collect();
                let table = self.rope_table(&positions)?;
                let layer = &cache.layers[l];
                let k_all = g.constant(stack(&layer.k, &f.ops, d));
                let v_all = g.constant(stack(&layer.v, &f.ops, d));
                let (y, _) = self.op_layer(
                    &g,
                    l,
                    g.constant(x.gather_rows(&q_rows)),
                    &table,
                    k_all,
                    v_all,
                    &Arc::new(pq),
                    &Arc::new(pk),
                )?;
                let y = y.tensor();
                let layer = &mut cache.layers[l];
                for (r, &i) in q_rows.iter().enumerate() {
                    layer.out[f.ops[i]] = Some(y.row(r).to_vec());
                }
            }
            stats.rows_computed += q_rows.len();
            stats.rows_reused += n - q_rows.len();

            x = stack(&cache.layers[l].out, &f.ops, d);
            outs.push(g.constant(x.clone()));
            dirty = next;
        }
        cache.stats = stats;
        Ok(self.finish(&g, f, &Topology::new(f), outs, Vec::new())?.output())
    }
}
