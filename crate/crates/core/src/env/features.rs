use super::{Action, SchedulingState};
use crate::instance::OpId;

/// An eligibility edge between a remaining operation node and a machine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    /// Index into the operation node list of the owning [`StateFeatures`].
    pub node: usize,
    pub machine: usize,
    /// Duration divided by the time scale.
    pub duration: f64,
}

/// Network input for one state.
///
/// Only unscheduled operations appear as nodes. Four scalar feature kinds
/// exist: operation relative available time, operation minimum duration,
/// machine relative available time and edge duration. All of them are
/// divided by `time_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFeatures {
    /// Flat operation id of each node.
    pub ops: Vec<OpId>,
    pub op_job: Vec<usize>,
    /// Intra-job index of each node (rotary position).
    pub op_position: Vec<usize>,
    /// `[relative available time, minimum duration]` per node.
    pub op_features: Vec<[f64; 2]>,
    /// Relative available time per machine.
    pub mach_features: Vec<f64>,
    /// All remaining eligibility edges, grouped by node.
    pub edges: Vec<Edge>,
    /// Edges whose node is ready; these are the selectable actions.
    pub actions: Vec<usize>,
    pub time_scale: f64,
}

/// Feature extraction with the default time scale (largest duration in the instance).
pub fn extract_features(state: &SchedulingState) -> StateFeatures {
    extract_features_with_scale(state, state.instance().max_duration() as f64)
}

pub fn extract_features_with_scale(state: &SchedulingState, time_scale: f64) -> StateFeatures {
    assert!(time_scale > 0.0, "time scale must be positive");
    let inst = state.instance();
    let origin = state
        .unscheduled_ops()
        .map(|op| state.op_avail()[op])
        .chain(state.mach_avail().iter().copied())
        .min()
        .unwrap_or(0);
    let rel = |t: u64| (t - origin) as f64 / time_scale;

    let mut f = StateFeatures {
        ops: Vec::new(),
        op_job: Vec::new(),
        op_position: Vec::new(),
        op_features: Vec::new(),
        mach_features: state.mach_avail().iter().map(|&t| rel(t)).collect(),
        edges: Vec::new(),
        actions: Vec::new(),
        time_scale,
    };
    for op in state.unscheduled_ops() {
        let node = f.ops.len();
        let spec = inst.operation(op);
        let job = inst.job_of(op);
        let ready = state.frontier(job) == inst.index_in_job(op);
        f.ops.push(op);
        f.op_job.push(job);
        f.op_position.push(inst.index_in_job(op));
        f.op_features
            .push([rel(state.op_avail()[op]), spec.min_duration() as f64 / time_scale]);
        for alt in &spec.alternatives {
            if ready {
                f.actions.push(f.edges.len());
            }
            f.edges.push(Edge {
                node,
                machine: alt.machine,
                duration: alt.duration as f64 / time_scale,
            });
        }
    }
    f
}

impl StateFeatures {
    pub fn num_nodes(&self) -> usize {
        self.ops.len()
    }

    pub fn num_machines(&self) -> usize {
        self.mach_features.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, index: usize) -> Action {
        let e = self.edges[self.actions[index]];
        Action::new(self.ops[e.node], e.machine)
    }

    pub fn action_index(&self, action: Action) -> Option<usize> {
        (0..self.actions.len()).find(|&i| self.action(i) == action)
    }

    /// Whether node `a` attends to node `b` in the operation branch:
    /// itself and every later operation of the same job.
    pub fn o2o_attends(&self, a: usize, b: usize) -> bool {
        self.op_job[a] == self.op_job[b] && self.op_position[b] >= self.op_position[a]
    }

    /// Row-major `nodes x nodes` operation attention mask.
    pub fn o2o_mask(&self) -> Vec<bool> {
        let n = self.num_nodes();
        (0..n * n).map(|i| self.o2o_attends(i / n, i % n)).collect()
    }

    /// Row-major `nodes x machines` eligibility mask.
    pub fn o2m_mask(&self) -> Vec<bool> {
        let m = self.num_machines();
        let mut mask = vec![false; self.num_nodes() * m];
        for e in &self.edges {
            mask[e.node * m + e.machine] = true;
        }
        mask
    }

    /// Row-major `nodes x machines` mask of selectable pairs.
    pub fn feasible_action_mask(&self) -> Vec<bool> {
        let m = self.num_machines();
        let mut mask = vec![false; self.num_nodes() * m];
        for &a in &self.actions {
            let e = self.edges[a];
            mask[e.node * m + e.machine] = true;
        }
        mask
    }
}
