//! Peak-memory analysis of compute graphs, exact schedule search, and the
//! channel-split cascade that runs a bottleneck block with a single small
//! slice of its expanded tensor alive.

mod cascade;
mod graph;
mod table;

pub(crate) use cascade::cascade_execute_with;
pub use cascade::{
    cascade_execute, cascade_execute_counted, cascade_peak_elements, slice_channels, CascadePlan,
};
pub use graph::{
    check_topological, greedy_schedule, linear_bound_memory, min_memory_schedule,
    min_memory_schedule_with_limit, plan_schedule, schedule_memory, ComputeGraph, OpNode,
    PlannedSchedule, ScheduleMemory, StepMemory, TensorNode, DEFAULT_EXACT_LIMIT,
};
pub use table::{
    memory_table, model_graph, BlockMemory, MemoryOptions, MemoryReport, ResolutionRow,
};
