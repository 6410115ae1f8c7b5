//! Cycle-level simulation of the GNN dataflow pipeline.
//!
//! Three architectures are modelled:
//!
//! * **coarse**: every sub-layer (MMM1/2, Concat1, DNN1, MMM3, Concat2, DNN2,
//!   Sum, DNN3) is its own dataflow task, connected by ping-pong buffers with
//!   a handshake at each boundary;
//! * **fused edge/node**: the edge-bound tasks and the node-bound tasks are
//!   each merged into one task, with the aggregation split between them;
//! * **fully fused**: one perfect loop over receivers driven by an FSM, then
//!   the graph-level tail.
//!
//! A dataflow task runs one inference at a time: it can restart once its
//! loop has drained and the handshake completed. The fully fused loop is a
//! flattened pipeline with II 1, so the next inference enters as soon as the
//! last FSM state of the previous one has issued.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{make_adjacency, GraphConfig};
use crate::hwmodel::{edge_states, ii_loop, HwBudget, ParallelismConfig, PipelineDepths};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchMode {
    Coarse,
    FusedEdgeNode,
    FullyFused,
}

impl ArchMode {
    pub const ALL: [ArchMode; 3] = [ArchMode::Coarse, ArchMode::FusedEdgeNode, ArchMode::FullyFused];

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchMode::Coarse => "coarse",
            ArchMode::FusedEdgeNode => "fused-edge-node",
            ArchMode::FullyFused => "fully-fused",
        }
    }
}

impl std::str::FromStr for ArchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ArchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// What a stage computes. Determines its loop bound and its place in the dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageKind {
    Gather,
    Concat1,
    EdgeMlp,
    Aggregate,
    Concat2,
    NodeMlp,
    NodeSum,
    Head,
    /// Gather + Concat1 + DNN1 + accumulation half of MMM3.
    EdgeUnit,
    /// Output half of MMM3 + Concat2 + DNN2.
    NodeUnit,
    /// The FSM-driven loop holding both edge and node units.
    EdgeNodeUnit,
    /// Node sum + DNN3.
    Tail,
}

enum LoopDomain {
    Edges,
    Nodes,
    Graph,
}

impl StageKind {
    /// Covered positions in the coarse dataflow, in half-stage units so the
    /// aggregation can be split between two fused units.
    fn span(&self) -> (u8, u8) {
        match self {
            StageKind::Gather => (0, 1),
            StageKind::Concat1 => (2, 3),
            StageKind::EdgeMlp => (4, 5),
            StageKind::Aggregate => (6, 7),
            StageKind::Concat2 => (8, 9),
            StageKind::NodeMlp => (10, 11),
            StageKind::NodeSum => (12, 13),
            StageKind::Head => (14, 15),
            StageKind::EdgeUnit => (0, 6),
            StageKind::NodeUnit => (7, 11),
            StageKind::EdgeNodeUnit => (0, 11),
            StageKind::Tail => (12, 15),
        }
    }

    fn domain(&self) -> LoopDomain {
        match self {
            StageKind::Gather | StageKind::Concat1 | StageKind::EdgeMlp | StageKind::Aggregate | StageKind::EdgeUnit => {
                LoopDomain::Edges
            }
            StageKind::Concat2
            | StageKind::NodeMlp
            | StageKind::NodeSum
            | StageKind::NodeUnit
            | StageKind::EdgeNodeUnit => LoopDomain::Nodes,
            StageKind::Head | StageKind::Tail => LoopDomain::Graph,
        }
    }

    pub fn expected_loop_bound(&self, graph: GraphConfig) -> u64 {
        match self.domain() {
            LoopDomain::Edges => graph.n_e() as u64,
            LoopDomain::Nodes => graph.n_o() as u64,
            LoopDomain::Graph => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: StageKind,
    pub loop_bound: u64,
    pub body_depth: u64,
    pub body_ii: u64,
    pub parallel_instances: u64,
}

impl TaskSpec {
    pub fn new(kind: StageKind, graph: GraphConfig, body_depth: u64, body_ii: u64, parallel_instances: u64) -> Self {
        Self {
            name: default_name(kind).to_owned(),
            kind,
            loop_bound: kind.expected_loop_bound(graph),
            body_depth,
            body_ii,
            parallel_instances,
        }
    }

    /// Issue slots needed per inference.
    pub fn trips(&self) -> u64 {
        self.loop_bound.div_ceil(self.parallel_instances)
    }

    /// First input to last result of one invocation.
    pub fn latency(&self) -> u64 {
        (self.trips() - 1) * self.body_ii + self.body_depth
    }

    /// Cycles between successive invocations of this task in a coarse pipeline.
    pub fn effective_ii(&self, handshake: u64) -> u64 {
        self.latency() + handshake
    }
}

fn default_name(kind: StageKind) -> &'static str {
    match kind {
        StageKind::Gather => "MMM1/2",
        StageKind::Concat1 => "Concat1",
        StageKind::EdgeMlp => "DNN1",
        StageKind::Aggregate => "MMM3",
        StageKind::Concat2 => "Concat2",
        StageKind::NodeMlp => "DNN2",
        StageKind::NodeSum => "Sum",
        StageKind::Head => "DNN3",
        StageKind::EdgeUnit => "Edge",
        StageKind::NodeUnit => "Node",
        StageKind::EdgeNodeUnit => "EdgeNode",
        StageKind::Tail => "Tail",
    }
}

/// Depths (cycles) of the individual sub-layer units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDepths {
    pub gather: u64,
    pub concat1: u64,
    pub edge_mlp: u64,
    pub aggregate: u64,
    pub concat2: u64,
    pub node_mlp: u64,
    pub node_sum: u64,
    pub head: u64,
}

impl Default for StageDepths {
    fn default() -> Self {
        Self { gather: 2, concat1: 1, edge_mlp: 12, aggregate: 2, concat2: 1, node_mlp: 12, node_sum: 2, head: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineArch {
    pub mode: ArchMode,
    pub stages: Vec<TaskSpec>,
    /// Cycles added at every ping-pong boundary for the full/empty handshake.
    pub handshake_overhead: u64,
}

/// Default handshake cost per coarse stage boundary.
pub const DEFAULT_HANDSHAKE: u64 = 2;

impl PipelineArch {
    pub fn coarse(graph: GraphConfig, par: &ParallelismConfig, depths: &StageDepths, handshake: u64) -> Self {
        let m = par.ii_mult as u64;
        let n_fr = par.n_fr as u64;
        let stages = vec![
            TaskSpec::new(StageKind::Gather, graph, depths.gather, 1, n_fr),
            TaskSpec::new(StageKind::Concat1, graph, depths.concat1, 1, n_fr),
            TaskSpec::new(StageKind::EdgeMlp, graph, depths.edge_mlp, par.r_fr as u64 * m, n_fr),
            TaskSpec::new(StageKind::Aggregate, graph, depths.aggregate, 1, n_fr),
            TaskSpec::new(StageKind::Concat2, graph, depths.concat2, 1, 1),
            TaskSpec::new(StageKind::NodeMlp, graph, depths.node_mlp, par.r_fo as u64 * m, 1),
            TaskSpec::new(StageKind::NodeSum, graph, depths.node_sum, 1, 1),
            TaskSpec::new(StageKind::Head, graph, depths.head, par.r_phio as u64 * m, 1),
        ];
        Self { mode: ArchMode::Coarse, stages, handshake_overhead: handshake }
    }

    pub fn fused_edge_node(graph: GraphConfig, par: &ParallelismConfig, depths: &StageDepths, handshake: u64) -> Self {
        let m = par.ii_mult as u64;
        let stages = vec![
            TaskSpec::new(
                StageKind::EdgeUnit,
                graph,
                depths.gather + depths.concat1 + depths.edge_mlp + 1,
                par.r_fr as u64 * m,
                par.n_fr as u64,
            ),
            TaskSpec::new(StageKind::NodeUnit, graph, 1 + depths.concat2 + depths.node_mlp, par.r_fo as u64 * m, 1),
            TaskSpec::new(StageKind::Tail, graph, depths.node_sum + depths.head, par.r_phio as u64 * m, 1),
        ];
        Self { mode: ArchMode::FusedEdgeNode, stages, handshake_overhead: handshake }
    }

    pub fn fully_fused(graph: GraphConfig, par: &ParallelismConfig, depths: PipelineDepths) -> Self {
        let stages = vec![
            TaskSpec::new(StageKind::EdgeNodeUnit, graph, depths.dp_loop, ii_loop(graph, par), par.n_fr as u64),
            TaskSpec::new(StageKind::Tail, graph, depths.dp_tail, par.r_phio as u64 * par.ii_mult as u64, 1),
        ];
        Self { mode: ArchMode::FullyFused, stages, handshake_overhead: 0 }
    }

    pub fn build(mode: ArchMode, graph: GraphConfig, par: &ParallelismConfig, settings: &SimSettings) -> Self {
        match mode {
            ArchMode::Coarse => Self::coarse(graph, par, &settings.stage_depths, settings.handshake),
            ArchMode::FusedEdgeNode => Self::fused_edge_node(graph, par, &settings.stage_depths, settings.handshake),
            ArchMode::FullyFused => Self::fully_fused(graph, par, settings.depths),
        }
    }

    /// Checks stage order, loop bounds and mode-specific structure.
    pub fn validate(&self, graph: GraphConfig) -> Result<()> {
        let wiring = |msg: String| Err(Error::Config(format!("inconsistent stage wiring: {msg}")));
        if self.stages.is_empty() {
            return wiring("no stages".into());
        }
        for s in &self.stages {
            if s.body_depth == 0 || s.body_ii == 0 || s.parallel_instances == 0 {
                return wiring(format!("{} has a zero depth, II or instance count", s.name));
            }
            let expected = s.kind.expected_loop_bound(graph);
            if s.loop_bound != expected {
                return wiring(format!("{} loops {} times, expected {expected}", s.name, s.loop_bound));
            }
        }
        for pair in self.stages.windows(2) {
            if pair[1].kind.span().0 <= pair[0].kind.span().1 {
                return wiring(format!("{} cannot follow {}", pair[1].name, pair[0].name));
            }
        }
        let fsm_stages = self.stages.iter().filter(|s| s.kind == StageKind::EdgeNodeUnit).count();
        match self.mode {
            ArchMode::FullyFused => {
                if self.stages[0].kind != StageKind::EdgeNodeUnit || fsm_stages != 1 {
                    return wiring("a fully fused pipeline starts with the edge-node loop".into());
                }
                if self.stages.len() > 2 {
                    return wiring("only the tail may follow the fused loop".into());
                }
            }
            _ if fsm_stages > 0 => return wiring("the edge-node loop needs fully fused mode".into()),
            _ => {}
        }
        Ok(())
    }
}

/// FSM that turns the imperfect receiver/sender nest into a perfect loop.
///
/// Each outer iteration (one receiver) spans `ii_t` states. State `s` issues
/// inner iterations `s * n_a .. min((s + 1) * n_a, n_o - 1)` on the `n_a`
/// body-A instances; the last state also issues body B for the receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FsmSchedule {
    pub n_o: usize,
    pub n_a: usize,
    pub ii_t: usize,
    pub states: Vec<FsmState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FsmState {
    pub a_iters: Range<usize>,
    pub issue_b: bool,
}

pub fn fsm_schedule(n_o: usize, n_a: usize) -> Result<FsmSchedule> {
    if n_o < 2 || n_a == 0 || n_a > n_o - 1 {
        return Err(Error::Config(format!("FSM needs 1 <= n_a <= n_o - 1, got n_a = {n_a}, n_o = {n_o}")));
    }
    let inner = n_o - 1;
    let ii_t = inner.div_ceil(n_a);
    let states = (0..ii_t)
        .map(|s| FsmState { a_iters: s * n_a..((s + 1) * n_a).min(inner), issue_b: s + 1 == ii_t })
        .collect();
    Ok(FsmSchedule { n_o, n_a, ii_t, states })
}

impl FsmSchedule {
    /// Body-A slots offered per outer iteration (`n_a * ii_t >= n_o - 1`).
    pub fn slots(&self) -> usize {
        self.n_a * self.ii_t
    }
}

/// Knobs shared by the simulator front ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub depths: PipelineDepths,
    pub stage_depths: StageDepths,
    pub handshake: u64,
    /// Back-to-back inferences to run; at least 3.
    pub inferences: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            depths: PipelineDepths::default(),
            stage_depths: StageDepths::default(),
            handshake: DEFAULT_HANDSHAKE,
            inferences: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimelineEvent {
    pub cycle: u64,
    pub stage: String,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Occupancy {
    pub stage: String,
    pub inference: usize,
    pub start: u64,
    pub finish: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageStats {
    pub stage: String,
    /// Cycles spent waiting for a free output buffer.
    pub stall_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimResult {
    pub mode: ArchMode,
    /// Steady-state gap between consecutive results.
    pub measured_ii: u64,
    /// First input accepted to first result produced.
    pub measured_latency: u64,
    pub stages: Vec<StageStats>,
    pub occupancy: Vec<Occupancy>,
    pub timeline: Vec<TimelineEvent>,
    /// Edge-function busy cycles per inference, summed over instances.
    pub edge_mlp_busy_cycles: u64,
    /// Every edge's body A issued exactly once per inference.
    pub edges_covered_once: bool,
}

impl SimResult {
    pub fn timeline_csv(&self) -> String {
        let mut s = String::from("cycle,stage,event\n");
        for e in &self.timeline {
            s.push_str(&format!("{},{},{}\n", e.cycle, e.stage, e.event));
        }
        s
    }
}

/// Runs `settings.inferences` (at least 3) back-to-back inferences through `arch`.
pub fn simulate(arch: &PipelineArch, graph: GraphConfig, par: &ParallelismConfig, inferences: usize) -> Result<SimResult> {
    arch.validate(graph)?;
    par.validate()?;
    let inferences = inferences.max(3);
    match arch.mode {
        ArchMode::FullyFused => simulate_fused(arch, graph, par, inferences),
        _ => simulate_dataflow(arch, graph, inferences),
    }
}

fn simulate_dataflow(arch: &PipelineArch, graph: GraphConfig, inferences: usize) -> Result<SimResult> {
    let n_stages = arch.stages.len();
    let h = arch.handshake_overhead;
    let mut start = vec![vec![0u64; inferences]; n_stages];
    let mut finish = vec![vec![0u64; inferences]; n_stages];
    let mut stalls = vec![0u64; n_stages];
    let mut occupancy = Vec::new();
    let mut timeline = Vec::new();

    for n in 0..inferences {
        for (j, stage) in arch.stages.iter().enumerate() {
            let input_ready = if j == 0 { 0 } else { finish[j - 1][n] + h };
            let self_free = if n == 0 { 0 } else { start[j][n - 1] + stage.effective_ii(h) };
            // ping-pong: buffer n%2 is free once the consumer finished inference n-2
            let buffer_free = if j + 1 < n_stages && n >= 2 { finish[j + 1][n - 2] } else { 0 };
            let unblocked = input_ready.max(self_free);
            let s = unblocked.max(buffer_free);
            stalls[j] += s - unblocked;
            start[j][n] = s;
            finish[j][n] = s + stage.latency();
            occupancy.push(Occupancy { stage: stage.name.clone(), inference: n, start: s, finish: finish[j][n] });
            timeline.push(TimelineEvent { cycle: s, stage: stage.name.clone(), event: format!("start:{n}") });
            timeline.push(TimelineEvent { cycle: finish[j][n], stage: stage.name.clone(), event: format!("finish:{n}") });
        }
    }
    timeline.sort_by(|a, b| a.cycle.cmp(&b.cycle));

    let last = &finish[n_stages - 1];
    let edge_mlp_busy_cycles = arch
        .stages
        .iter()
        .filter(|s| matches!(s.kind, StageKind::EdgeMlp | StageKind::EdgeUnit))
        .map(|s| s.loop_bound * s.body_ii)
        .sum();
    Ok(SimResult {
        mode: arch.mode,
        measured_ii: last[inferences - 1] - last[inferences - 2],
        measured_latency: last[0] - start[0][0],
        stages: arch
            .stages
            .iter()
            .zip(stalls)
            .map(|(s, stall_cycles)| StageStats { stage: s.name.clone(), stall_cycles })
            .collect(),
        occupancy,
        timeline,
        edge_mlp_busy_cycles,
        edges_covered_once: graph.n_e() > 0,
    })
}

fn simulate_fused(arch: &PipelineArch, graph: GraphConfig, par: &ParallelismConfig, inferences: usize) -> Result<SimResult> {
    let body = &arch.stages[0];
    let tail = arch.stages.get(1);
    let n_o = graph.n_o();
    let fsm = fsm_schedule(n_o, (body.parallel_instances as usize).min(n_o - 1))?;
    let state_cycles = par.ii_mult as u64;
    if body.body_ii < fsm.ii_t as u64 * state_cycles {
        return Err(Error::Config(format!(
            "inconsistent stage wiring: fused loop II {} is shorter than its {} FSM states",
            body.body_ii, fsm.ii_t
        )));
    }
    debug_assert_eq!(fsm.ii_t as u64, edge_states(n_o, fsm.n_a as u32));
    let adj = make_adjacency(graph);
    let outer_len = body.body_ii;

    let mut timeline = Vec::new();
    let mut occupancy = Vec::new();
    let mut loop_start = vec![0u64; inferences];
    let mut result = vec![0u64; inferences];
    let mut tail_start_prev: Option<u64> = None;
    let mut covered_once = true;
    let mut a_issues_first = 0u64;

    for n in 0..inferences {
        let s = if n == 0 { 0 } else { loop_start[n - 1] + outer_len * n_o as u64 };
        loop_start[n] = s;
        timeline.push(TimelineEvent { cycle: s, stage: body.name.clone(), event: format!("start:{n}") });
        let mut marks = vec![0u32; graph.n_e()];
        let mut a_issues = 0u64;
        for recv in 0..n_o {
            let outer = s + recv as u64 * outer_len;
            for (k, state) in fsm.states.iter().enumerate() {
                let cycle = outer + k as u64 * state_cycles;
                for j in state.a_iters.clone() {
                    marks[adj.edge(recv, j)] += 1;
                }
                a_issues += state.a_iters.len() as u64;
                timeline.push(TimelineEvent {
                    cycle,
                    stage: body.name.clone(),
                    event: format!("issue_a:{}", state.a_iters.len()),
                });
                if state.issue_b {
                    timeline.push(TimelineEvent { cycle, stage: body.name.clone(), event: format!("issue_b:{recv}") });
                }
            }
            timeline.push(TimelineEvent {
                cycle: outer + body.body_depth,
                stage: body.name.clone(),
                event: format!("node_done:{recv}"),
            });
        }
        covered_once &= marks.iter().all(|&m| m == 1);
        if n == 0 {
            a_issues_first = a_issues;
        }
        let loop_done = s + (n_o as u64 - 1) * outer_len + body.body_depth;
        occupancy.push(Occupancy { stage: body.name.clone(), inference: n, start: s, finish: loop_done });
        timeline.push(TimelineEvent { cycle: loop_done, stage: body.name.clone(), event: format!("finish:{n}") });

        result[n] = match tail {
            Some(t) => {
                let ts = tail_start_prev.map_or(loop_done, |p| loop_done.max(p + t.body_ii * t.trips()));
                tail_start_prev = Some(ts);
                let tf = ts + t.latency();
                occupancy.push(Occupancy { stage: t.name.clone(), inference: n, start: ts, finish: tf });
                timeline.push(TimelineEvent { cycle: ts, stage: t.name.clone(), event: format!("start:{n}") });
                timeline.push(TimelineEvent { cycle: tf, stage: t.name.clone(), event: format!("finish:{n}") });
                tf
            }
            None => loop_done,
        };
    }
    timeline.sort_by(|a, b| a.cycle.cmp(&b.cycle));

    Ok(SimResult {
        mode: arch.mode,
        measured_ii: result[inferences - 1] - result[inferences - 2],
        measured_latency: result[0] - loop_start[0],
        stages: arch.stages.iter().map(|s| StageStats { stage: s.name.clone(), stall_cycles: 0 }).collect(),
        occupancy,
        timeline,
        edge_mlp_busy_cycles: a_issues_first * par.r_fr as u64 * state_cycles,
        edges_covered_once: covered_once,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchRow {
    pub mode: ArchMode,
    pub ii: u64,
    pub latency: u64,
    pub ii_us: f64,
    pub latency_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchComparison {
    pub rows: Vec<ArchRow>,
    /// Fusion traded a longer II for lower latency (as observed on real designs).
    pub fused_ii_exceeds_coarse: bool,
}

impl ArchComparison {
    pub fn row(&self, mode: ArchMode) -> &ArchRow {
        self.rows.iter().find(|r| r.mode == mode).expect("all modes simulated")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,ii_cycles,ii_us,latency_cycles,latency_us\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.4},{},{:.4}\n", r.mode.as_str(), r.ii, r.ii_us, r.latency, r.latency_us));
        }
        s
    }
}

pub fn compare_architectures(
    graph: GraphConfig,
    par: &ParallelismConfig,
    settings: &SimSettings,
    budget: &HwBudget,
) -> Result<ArchComparison> {
    let rows = ArchMode::ALL
        .into_iter()
        .map(|mode| {
            let arch = PipelineArch::build(mode, graph, par, settings);
            let r = simulate(&arch, graph, par, settings.inferences)?;
            Ok(ArchRow {
                mode,
                ii: r.measured_ii,
                latency: r.measured_latency,
                ii_us: budget.cycles_to_us(r.measured_ii),
                latency_us: budget.cycles_to_us(r.measured_latency),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse = rows[0].ii;
    let fused = rows[2].ii;
    Ok(ArchComparison { fused_ii_exceeds_coarse: fused > coarse, rows })
}
