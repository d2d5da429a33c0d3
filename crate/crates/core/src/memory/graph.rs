use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default op-count ceiling for exact schedule search.
pub const DEFAULT_EXACT_LIMIT: usize = 16;
const MAX_EXACT_LIMIT: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TensorNode {
    pub name: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpNode {
    pub name: String,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    /// Scratch memory the op needs while it runs.
    pub workspace: u64,
}

/// Tensors are nodes, ops are hyper-edges from input tensors to output
/// tensors.
///
/// A tensor is live from the step that produces it (or from the start, for
/// graph inputs) through the last step that reads it. Tensors nobody reads
/// are graph outputs and stay live to the end.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComputeGraph {
    tensors: Vec<TensorNode>,
    ops: Vec<OpNode>,
    producer: Vec<Option<usize>>,
    consumers: Vec<Vec<usize>>,
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tensor(&mut self, name: impl Into<String>, bytes: u64) -> usize {
        self.tensors.push(TensorNode {
            name: name.into(),
            bytes,
        });
        self.producer.push(None);
        self.consumers.push(Vec::new());
        self.tensors.len() - 1
    }

    pub fn add_op(
        &mut self,
        name: impl Into<String>,
        inputs: &[usize],
        outputs: &[usize],
        workspace: u64,
    ) -> Result<usize> {
        let name = name.into();
        let id = self.ops.len();
        let mut ins = inputs.to_vec();
        ins.sort_unstable();
        ins.dedup();
        let mut outs = outputs.to_vec();
        outs.sort_unstable();
        outs.dedup();
        for &t in ins.iter().chain(&outs) {
            if t >= self.tensors.len() {
                return Err(Error::InvalidGraph(format!(
                    "op `{name}` references unknown tensor {t}"
                )));
            }
        }
        for &t in &outs {
            if let Some(p) = self.producer[t] {
                return Err(Error::InvalidGraph(format!(
                    "tensor `{}` is produced by both `{}` and `{name}`",
                    self.tensors[t].name, self.ops[p].name
                )));
            }
            if ins.contains(&t) {
                return Err(Error::InvalidGraph(format!(
                    "op `{name}` reads its own output"
                )));
            }
        }
        for &t in &outs {
            self.producer[t] = Some(id);
        }
        for &t in &ins {
            self.consumers[t].push(id);
        }
        self.ops.push(OpNode {
            name,
            inputs: ins,
            outputs: outs,
            workspace,
        });
        Ok(id)
    }

    pub fn tensors(&self) -> &[TensorNode] {
        &self.tensors
    }

    pub fn ops(&self) -> &[OpNode] {
        &self.ops
    }

    pub fn producer(&self, tensor: usize) -> Option<usize> {
        self.producer[tensor]
    }

    pub fn consumers(&self, tensor: usize) -> &[usize] {
        &self.consumers[tensor]
    }

    /// Ops that must run before `op`.
    pub fn predecessors(&self, op: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.ops[op]
            .inputs
            .iter()
            .filter_map(|&t| self.producer[t])
            .collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Ops that read an output of `op`.
    pub fn successors(&self, op: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.ops[op]
            .outputs
            .iter()
            .flat_map(|&t| self.consumers[t].iter().copied())
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Errors if the ops contain a cycle.
    pub fn validate(&self) -> Result<()> {
        let mut indeg: Vec<usize> = (0..self.ops.len())
            .map(|o| self.predecessors(o).len())
            .collect();
        let mut ready: Vec<usize> = (0..self.ops.len()).filter(|&o| indeg[o] == 0).collect();
        let mut seen = 0;
        while let Some(o) = ready.pop() {
            seen += 1;
            for c in self.successors(o) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if seen != self.ops.len() {
            return Err(Error::InvalidGraph("ops form a cycle".into()));
        }
        Ok(())
    }

    /// Writes one JSON object per line: every tensor, then every op.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Line<'a> {
            Tensor {
                id: usize,
                #[serde(flatten)]
                node: &'a TensorNode,
            },
            Op {
                id: usize,
                #[serde(flatten)]
                node: &'a OpNode,
            },
        }
        let lines = self
            .tensors
            .iter()
            .enumerate()
            .map(|(id, node)| Line::Tensor { id, node })
            .chain(
                self.ops
                    .iter()
                    .enumerate()
                    .map(|(id, node)| Line::Op { id, node }),
            );
        for line in lines {
            serde_json::to_writer(&mut w, &line).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn is_output(&self, t: usize) -> bool {
        self.consumers[t].is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepMemory {
    pub op: usize,
    pub name: String,
    pub live_bytes: u64,
}

/// Memory profile of one execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleMemory {
    pub order: Vec<usize>,
    pub steps: Vec<StepMemory>,
    pub peak_bytes: u64,
}

/// Live-byte bookkeeping shared by evaluation and search.
struct Liveness<'g> {
    g: &'g ComputeGraph,
    remaining_uses: Vec<usize>,
    live: u64,
}

impl<'g> Liveness<'g> {
    fn new(g: &'g ComputeGraph) -> Self {
        let live = (0..g.tensors.len())
            .filter(|&t| g.producer[t].is_none())
            .map(|t| g.tensors[t].bytes)
            .sum();
        Self {
            g,
            remaining_uses: g.consumers.iter().map(Vec::len).collect(),
            live,
        }
    }

    /// Bytes in use while `op` runs.
    fn step_cost(&self, op: usize) -> u64 {
        let o = &self.g.ops[op];
        self.live
            + o.outputs
                .iter()
                .map(|&t| self.g.tensors[t].bytes)
                .sum::<u64>()
            + o.workspace
    }

    fn apply(&mut self, op: usize) {
        let o = &self.g.ops[op];
        self.live += o
            .outputs
            .iter()
            .map(|&t| self.g.tensors[t].bytes)
            .sum::<u64>();
        for &t in &o.inputs {
            self.remaining_uses[t] -= 1;
            if self.remaining_uses[t] == 0 {
                self.live -= self.g.tensors[t].bytes;
            }
        }
    }

    fn undo(&mut self, op: usize) {
        let o = &self.g.ops[op];
        for &t in &o.inputs {
            if self.remaining_uses[t] == 0 {
                self.live += self.g.tensors[t].bytes;
            }
            self.remaining_uses[t] += 1;
        }
        self.live -= o
            .outputs
            .iter()
            .map(|&t| self.g.tensors[t].bytes)
            .sum::<u64>();
    }
}

/// Per-step live bytes of a fixed order: every live tensor plus the
/// running op's workspace.
pub fn schedule_memory(g: &ComputeGraph, order: &[usize]) -> Result<ScheduleMemory> {
    g.validate()?;
    check_topological(g, order)?;
    let mut live = Liveness::new(g);
    let mut steps = Vec::with_capacity(order.len());
    for &op in order {
        steps.push(StepMemory {
            op,
            name: g.ops[op].name.clone(),
            live_bytes: live.step_cost(op),
        });
        live.apply(op);
    }
    let peak_bytes = steps
        .iter()
        .map(|s| s.live_bytes)
        .max()
        .unwrap_or(live.live);
    Ok(ScheduleMemory {
        order: order.to_vec(),
        steps,
        peak_bytes,
    })
}

pub fn check_topological(g: &ComputeGraph, order: &[usize]) -> Result<()> {
    let n = g.ops.len();
    if order.len() != n {
        return Err(Error::NotTopological(format!(
            "order has {} ops, graph has {n}",
            order.len()
        )));
    }
    let mut position = vec![usize::MAX; n];
    for (i, &op) in order.iter().enumerate() {
        if op >= n || position[op] != usize::MAX {
            return Err(Error::NotTopological(format!(
                "op {op} is unknown or repeated"
            )));
        }
        position[op] = i;
    }
    for (op, &pos) in position.iter().enumerate() {
        for pred in g.predecessors(op) {
            if position[pred] > pos {
                return Err(Error::NotTopological(format!(
                    "`{}` runs before its input producer `{}`",
                    g.ops[op].name, g.ops[pred].name
                )));
            }
        }
    }
    Ok(())
}

/// Exact minimum-peak order by depth-first branch and bound over
/// topological orders. Ready ops are tried in index order and only strict
/// improvements replace the incumbent, so among optimal orders the
/// lexicographically smallest is returned.
pub fn min_memory_schedule(g: &ComputeGraph) -> Result<ScheduleMemory> {
    min_memory_schedule_with_limit(g, DEFAULT_EXACT_LIMIT)
}

pub fn min_memory_schedule_with_limit(g: &ComputeGraph, limit: usize) -> Result<ScheduleMemory> {
    g.validate()?;
    let n = g.ops.len();
    let limit = limit.min(MAX_EXACT_LIMIT);
    if n > limit {
        return Err(Error::GraphTooLarge { ops: n, limit });
    }
    let preds: Vec<u64> = (0..n)
        .map(|o| g.predecessors(o).iter().fold(0u64, |m, &p| m | 1 << p))
        .collect();

    struct Search<'a, 'g> {
        preds: &'a [u64],
        live: Liveness<'g>,
        order: Vec<usize>,
        best: Option<(u64, Vec<usize>)>,
        // lowest prefix peak with which each scheduled set has been reached
        seen: HashMap<u64, u64>,
    }

    impl Search<'_, '_> {
        fn go(&mut self, done: u64, peak: u64) {
            let n = self.preds.len();
            if let Some((best, _)) = &self.best {
                if peak >= *best {
                    return;
                }
            }
            if self.order.len() == n {
                self.best = Some((peak, self.order.clone()));
                return;
            }
            match self.seen.get(&done) {
                Some(&p) if p <= peak => return,
                _ => {
                    self.seen.insert(done, peak);
                }
            }
            for op in 0..n {
                let bit = 1u64 << op;
                if done & bit != 0 || self.preds[op] & !done != 0 {
                    continue;
                }
                let cost = self.live.step_cost(op);
                self.live.apply(op);
                self.order.push(op);
                self.go(done | bit, peak.max(cost));
                self.order.pop();
                self.live.undo(op);
            }
        }
    }

    let mut s = Search {
        preds: &preds,
        live: Liveness::new(g),
        order: Vec::with_capacity(n),
        best: None,
        seen: HashMap::new(),
    };
    s.go(0, 0);
    let (_, order) = s.best.expect("an acyclic graph has a topological order");
    schedule_memory(g, &order)
}

/// Order that always runs the ready op with the cheapest step next. No
/// optimality guarantee.
pub fn greedy_schedule(g: &ComputeGraph) -> Result<ScheduleMemory> {
    g.validate()?;
    let n = g.ops.len();
    let mut pending: Vec<usize> = (0..n).map(|o| g.predecessors(o).len()).collect();
    let mut done = vec![false; n];
    let mut live = Liveness::new(g);
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let op = (0..n)
            .filter(|&o| !done[o] && pending[o] == 0)
            .min_by_key(|&o| (live.step_cost(o), o))
            .expect("an acyclic graph always has a ready op");
        live.apply(op);
        done[op] = true;
        order.push(op);
        for o in g.successors(op) {
            pending[o] -= 1;
        }
    }
    schedule_memory(g, &order)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannedSchedule {
    #[serde(flatten)]
    pub memory: ScheduleMemory,
    /// False when the graph exceeded the exact-search limit and the greedy
    /// order was used instead.
    pub optimal: bool,
}

/// Exact search when the graph is small enough, greedy otherwise.
pub fn plan_schedule(g: &ComputeGraph, limit: usize) -> Result<PlannedSchedule> {
    match min_memory_schedule_with_limit(g, limit) {
        Ok(memory) => Ok(PlannedSchedule {
            memory,
            optimal: true,
        }),
        Err(Error::GraphTooLarge { .. }) => Ok(PlannedSchedule {
            memory: greedy_schedule(g)?,
            optimal: false,
        }),
        Err(e) => Err(e),
    }
}

/// Closed-form peak for graphs whose ops must run in a single fixed order
/// and where every live tensor is an input or output of the running op:
/// the largest `inputs + outputs + workspace` over all ops.
///
/// Graphs with a choice of order, or with a tensor that stays live across
/// an op that does not touch it (an unfused skip connection), are rejected.
pub fn linear_bound_memory(g: &ComputeGraph) -> Result<u64> {
    g.validate()?;
    let n = g.ops.len();
    let mut pending: Vec<usize> = (0..n).map(|o| g.predecessors(o).len()).collect();
    let mut done = vec![false; n];
    let mut remaining: Vec<usize> = g.consumers.iter().map(Vec::len).collect();
    let mut live: Vec<bool> = (0..g.tensors.len())
        .map(|t| g.producer[t].is_none())
        .collect();
    let mut bound = 0u64;
    for _ in 0..n {
        let ready: Vec<usize> = (0..n).filter(|&o| !done[o] && pending[o] == 0).collect();
        if ready.len() > 1 {
            return Err(Error::NonTrivialParallelism(format!(
                "`{}` and `{}` can run in either order",
                g.ops[ready[0]].name, g.ops[ready[1]].name
            )));
        }
        let op = ready[0];
        let o = &g.ops[op];
        if let Some(t) = (0..g.tensors.len()).find(|&t| live[t] && !o.inputs.contains(&t)) {
            return Err(Error::NonTrivialParallelism(format!(
                "tensor `{}` stays live across `{}`",
                g.tensors[t].name, o.name
            )));
        }
        let bytes = |ts: &[usize]| ts.iter().map(|&t| g.tensors[t].bytes).sum::<u64>();
        bound = bound.max(bytes(&o.inputs) + bytes(&o.outputs) + o.workspace);
        for &t in &o.outputs {
            live[t] = true;
        }
        for &t in &o.inputs {
            remaining[t] -= 1;
            if remaining[t] == 0 {
                live[t] = false;
            }
        }
        done[op] = true;
        for c in g.successors(op) {
            pending[c] -= 1;
        }
    }
    if let Some(t) = (0..g.tensors.len()).find(|&t| live[t] && !g.is_output(t)) {
        return Err(Error::InvalidGraph(format!(
            "tensor `{}` is never released",
            g.tensors[t].name
        )));
    }
    Ok(bound)
}
