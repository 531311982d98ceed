//! Central-difference checks of every graph primitive on random shapes.

use std::sync::Arc;

use fjsp_rl::numerics::{finite_diff_check, GradCheckReport, ParamStore, RopeTable, Tensor, Var};
use fjsp_rl::Result;
use rand::Rng;

use super::rng;

pub const PRIMITIVES: &[&str] = &[
    "add", "sub", "mul", "add_row", "mul_row", "mul_col", "scale", "add_scalar", "matmul", "transpose",
    "concat_cols", "concat_rows", "slice_cols", "slice_rows", "gather_rows", "scatter_add_rows", "pick", "sum",
    "mean", "row_sum", "col_sum", "col_mean", "group_sum", "group_repeat", "exp", "ln", "relu", "tanh", "softmax",
    "log_softmax", "segment_softmax", "layer_norm", "rope", "clamp", "minimum", "maximum",
];

/// Checks `sum(op(x, y) * w)` for a fixed random `w`; `x` and `y` are the parameters.
pub fn check_primitive(name: &str, seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let rows = r.gen_range(1..5);
    let heads = r.gen_range(1..3);
    let head_dim = 2 * r.gen_range(1..3);
    let cols = heads * head_dim;
    let positive = matches!(name, "ln");
    let x0 = if positive {
        Tensor::uniform(rows, cols, 1.0, &mut r).map(|v| v + 1.5)
    } else {
        Tensor::uniform(rows, cols, 1.5, &mut r)
    };
    let y_rows = if name == "matmul" { cols } else { rows };
    let y_cols = match name {
        "matmul" => r.gen_range(1..4),
        "add_row" | "mul_row" => cols,
        "mul_col" => 1,
        _ => cols,
    };
    let y_rows = if matches!(name, "add_row" | "mul_row") { 1 } else { y_rows };
    let y0 = Tensor::uniform(y_rows, y_cols, 1.5, &mut r);
    let mut store = ParamStore::new();
    let x = store.add("x", x0);
    let y = store.add("y", y0);

    let idx: Arc<Vec<usize>> = Arc::new((0..rows + 2).map(|_| r.gen_range(0..rows)).collect());
    let scatter_to = r.gen_range(1..4);
    let scatter_idx: Arc<Vec<usize>> = Arc::new((0..rows).map(|_| r.gen_range(0..scatter_to)).collect());
    let picks: Arc<Vec<(usize, usize)>> =
        Arc::new((0..3).map(|_| (r.gen_range(0..rows), r.gen_range(0..cols))).collect());
    let mask: Arc<Vec<bool>> = Arc::new((0..rows * cols).map(|i| i % cols == 0 || r.gen_bool(0.7)).collect());
    let segs = r.gen_range(1..=rows);
    let seg: Arc<Vec<usize>> = Arc::new((0..rows).map(|i| i % segs).collect());
    let positions: Vec<usize> = (0..rows).map(|_| r.gen_range(0..6)).collect();
    let table = Arc::new(RopeTable::new(&positions, head_dim, 10_000.0)?);
    let slice_w = r.gen_range(1..=cols);
    let slice_h = r.gen_range(1..=rows);
    let w_seed: u64 = r.gen();
    let name = name.to_string();

    finite_diff_check(
        &store,
        move |g, s| {
        let (a, b) = (g.param(s, x), g.param(s, y));
        let out = match name.as_str() {
            "add" => a.add(b)?,
            "sub" => a.sub(b)?,
            "mul" => a.mul(b)?,
            "add_row" => a.add_row(b)?,
            "mul_row" => a.mul_row(b)?,
            "mul_col" => a.mul_col(b)?,
            "scale" => a.scale(-1.7),
            "add_scalar" => a.add_scalar(0.3).mul(a)?,
            "matmul" => a.matmul(b)?,
            "transpose" => a.transpose().matmul(b)?,
            "concat_cols" => Var::concat_cols(&[a, b.tanh()])?,
            "concat_rows" => Var::concat_rows(&[a, b.exp()])?,
            "slice_cols" => a.mul(b)?.slice_cols(cols - slice_w, slice_w)?,
            "slice_rows" => a.mul(b)?.slice_rows(rows - slice_h, slice_h)?,
            "gather_rows" => a.mul(b)?.gather_rows(idx.clone())?,
            "scatter_add_rows" => a.mul(b)?.scatter_add_rows(scatter_idx.clone(), scatter_to)?,
            "pick" => a.mul(b)?.pick(picks.clone())?,
            "sum" => a.mul(b)?.sum(),
            "mean" => a.mul(b)?.mean()?,
            "row_sum" => a.mul(b)?.row_sum(),
            "col_sum" => a.mul(b)?.col_sum(),
            "col_mean" => a.mul(b)?.col_mean()?,
            "group_sum" => a.mul(b)?.group_sum(head_dim)?,
            "group_repeat" => a.group_sum(head_dim)?.group_repeat(head_dim),
            "exp" => a.exp(),
            "ln" => a.ln(),
            "relu" => a.relu(),
            "tanh" => a.tanh(),
            "softmax" => a.softmax(Some(mask.clone()))?,
            "log_softmax" => a.log_softmax(Some(mask.clone()))?,
            "segment_softmax" => a.slice_cols(0, 1)?.segment_softmax(seg.clone())?,
            "layer_norm" => a.layer_norm(1e-5),
            "rope" => a.rope(table.clone())?,
            "clamp" => a.clamp(-0.7, 0.9),
            "minimum" => a.minimum(b)?,
            "maximum" => a.maximum(b)?,
            other => panic!("unknown primitive {other}"),
        };
        let [h, w] = out.shape();
        let weights = Tensor::uniform(h, w, 1.0, &mut rng(w_seed));
        Ok(out.mul(g.constant(weights))?.sum())
        },
        1e-5,
        64,
    )
}

/// End-to-end check of the REINFORCE and PPO objectives on a random small
/// architecture; returns the two reports.
pub fn check_policy_objectives(seed: u64) -> Result<(GradCheckReport, GradCheckReport)> {
    use fjsp_rl::env::RewardMode;
    use fjsp_rl::instance::{generate, GeneratorConfig, Variant};
    use fjsp_rl::policy::{Activation, Policy, PolicyConfig};
    use fjsp_rl::train::{build_buffer, collect_rollouts_seeded, ppo_loss, reinforce_loss, PpoConfig};

    let mut r = rng(1000 + seed);
    let heads = r.gen_range(1..3);
    let cfg = PolicyConfig {
        layers: r.gen_range(1..3),
        heads,
        d_model: heads * 2 * r.gen_range(1..3),
        ffn_dim: r.gen_range(4..12),
        head_hidden: r.gen_range(3..8),
        activation: if r.gen_bool(0.5) { Activation::Relu } else { Activation::Tanh },
        critic_head: true,
        ..PolicyConfig::default()
    };
    let policy = Policy::new(cfg, &mut r)?;
    let variant = [Variant::Sd1, Variant::Sd2][r.gen_range(0..2)];
    let inst = Arc::new(generate(&GeneratorConfig::new(variant, r.gen_range(2..4), r.gen_range(2..4), r.gen()))?);
    let trajs = collect_rollouts_seeded(&[inst], &policy, RewardMode::LowerBound, r.gen())?;
    let steps = trajs[0].steps.clone();
    let adv: Vec<f64> = (0..steps.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let reinforce = finite_diff_check(
        policy.params(),
        |g, s| reinforce_loss(g, &policy.with_params(s)?, &steps, &adv, 1.0),
        1e-5,
        8,
    )?;

    let ppo = PpoConfig::default();
    // returns of order one keep difference noise on structurally zero
    // gradients under the relative floor
    let mut buffer = build_buffer(&trajs, &ppo, 0.05)?;
    for t in &mut buffer {
        t.old_log_prob += r.gen_range(-0.1..0.1);
        t.old_value += r.gen_range(-0.1..0.1);
    }
    let batch: Vec<_> = buffer.iter().collect();
    let ppo_report = finite_diff_check(
        policy.params(),
        |g, s| ppo_loss(g, &policy.with_params(s)?, &batch, &ppo),
        1e-5,
        8,
    )?;
    Ok((reinforce, ppo_report))
}
