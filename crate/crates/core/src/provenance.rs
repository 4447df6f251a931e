//! Provenance DAG over entities.
//!
//! Entities are nodes; every operation is one hyper-edge from its inputs
//! to its outputs. The graph is backed by an append-only record log, and
//! replaying that log from empty rebuilds the same graph. Nodes are never
//! removed: deleting an entity only flags its node.
//!
//! Move edges are annotations with `inputs == outputs == [id]`; they are
//! kept in the log and in pipeline views but do not take part in the
//! ancestry relation or in cycle checks.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::id::EntityId;
use crate::path::LogicalPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Upload,
    Create,
    Move,
    Copy,
    Convert,
    ToolRun,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Upload => "upload",
            EdgeKind::Create => "create",
            EdgeKind::Move => "move",
            EdgeKind::Copy => "copy",
            EdgeKind::Convert => "convert",
            EdgeKind::ToolRun => "tool_run",
        }
    }

    /// Kinds that bring a new entity into existence.
    pub fn is_creating(self) -> bool {
        self != EdgeKind::Move
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvNode {
    pub entity_id: EntityId,
    pub path_at_creation: LogicalPath,
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvEdge {
    pub edge_id: u64,
    pub kind: EdgeKind,
    pub inputs: Vec<EntityId>,
    pub outputs: Vec<EntityId>,
    pub actor: String,
    pub tool: Option<EntityId>,
    pub args: Option<String>,
    pub note: Option<String>,
    pub timestamp: u64,
}

impl ProvEdge {
    fn touches(&self, id: EntityId) -> bool {
        self.inputs.contains(&id) || self.outputs.contains(&id)
    }
}

/// One line of the append-only provenance log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ProvRecord {
    Node { entity_id: EntityId, path: LogicalPath },
    Edge(ProvEdge),
    Deleted { entity_id: EntityId, timestamp: u64 },
}

/// An operation to record; the graph assigns the edge id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub kind: EdgeKind,
    pub inputs: Vec<EntityId>,
    pub outputs: Vec<EntityId>,
    pub actor: String,
    pub tool: Option<EntityId>,
    pub args: Option<String>,
    pub note: Option<String>,
    pub timestamp: u64,
}

impl Operation {
    pub fn new(kind: EdgeKind, actor: &str, timestamp: u64) -> Self {
        Operation {
            kind,
            inputs: Vec::new(),
            outputs: Vec::new(),
            actor: actor.into(),
            tool: None,
            args: None,
            note: None,
            timestamp,
        }
    }

    pub fn inputs(mut self, ids: impl IntoIterator<Item = EntityId>) -> Self {
        self.inputs = ids.into_iter().collect();
        self
    }

    pub fn outputs(mut self, ids: impl IntoIterator<Item = EntityId>) -> Self {
        self.outputs = ids.into_iter().collect();
        self
    }

    pub fn tool(mut self, tool: EntityId) -> Self {
        self.tool = Some(tool);
        self
    }

    pub fn args(mut self, args: impl Into<String>) -> Self {
        self.args = Some(args.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineView {
    pub focus: EntityId,
    pub nodes: Vec<ProvNode>,
    pub edges: Vec<ProvEdge>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProvenanceError {
    #[error("entity {0} has no provenance node")]
    UnknownEntity(EntityId),
    #[error("entity {0} already has a provenance node")]
    DuplicateNode(EntityId),
    #[error("operation would introduce a cycle")]
    CycleDetected,
    #[error("malformed operation: {0}")]
    InvalidEdge(String),
}

#[derive(Debug, Clone)]
struct NodeSlot {
    node: ProvNode,
    seq: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ProvenanceGraph {
    nodes: BTreeMap<EntityId, NodeSlot>,
    edges: Vec<ProvEdge>,
    incident: BTreeMap<EntityId, Vec<usize>>,
    log: Vec<ProvRecord>,
    next_edge: u64,
}

impl ProvenanceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a graph from its log without validating it; use
    /// [`ProvenanceGraph::verify_dag`] to check the result.
    pub fn replay(records: impl IntoIterator<Item = ProvRecord>) -> Self {
        let mut g = ProvenanceGraph::new();
        for record in records {
            g.apply(record);
        }
        g
    }

    fn apply(&mut self, record: ProvRecord) {
        match &record {
            ProvRecord::Node { entity_id, path } => {
                let seq = self.nodes.len();
                self.nodes.entry(*entity_id).or_insert(NodeSlot {
                    node: ProvNode { entity_id: *entity_id, path_at_creation: path.clone(), deleted: false },
                    seq,
                });
            }
            ProvRecord::Edge(edge) => {
                let idx = self.edges.len();
                let mut touched: BTreeSet<EntityId> = BTreeSet::new();
                touched.extend(edge.inputs.iter().chain(&edge.outputs).copied());
                for id in touched {
                    self.incident.entry(id).or_default().push(idx);
                }
                self.next_edge = self.next_edge.max(edge.edge_id + 1);
                self.edges.push(edge.clone());
            }
            ProvRecord::Deleted { entity_id, .. } => {
                if let Some(slot) = self.nodes.get_mut(entity_id) {
                    slot.node.deleted = true;
                }
            }
        }
        self.log.push(record);
    }

    pub fn log(&self) -> &[ProvRecord] {
        &self.log
    }

    pub fn edges(&self) -> &[ProvEdge] {
        &self.edges
    }

    pub fn node(&self, id: EntityId) -> Option<&ProvNode> {
        self.nodes.get(&id).map(|s| &s.node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ProvNode> {
        self.nodes.values().map(|s| &s.node)
    }

    pub fn edge(&self, edge_id: u64) -> Option<&ProvEdge> {
        self.edges.iter().find(|e| e.edge_id == edge_id)
    }

    pub fn add_node(&mut self, id: EntityId, path: &LogicalPath) -> Result<(), ProvenanceError> {
        if self.nodes.contains_key(&id) {
            return Err(ProvenanceError::DuplicateNode(id));
        }
        self.apply(ProvRecord::Node { entity_id: id, path: path.clone() });
        Ok(())
    }

    /// Flags a node as deleted. Idempotent; adds no edge.
    pub fn mark_deleted(&mut self, id: EntityId, timestamp: u64) -> Result<(), ProvenanceError> {
        let slot = self.nodes.get(&id).ok_or(ProvenanceError::UnknownEntity(id))?;
        if !slot.node.deleted {
            self.apply(ProvRecord::Deleted { entity_id: id, timestamp });
        }
        Ok(())
    }

    fn check_shape(op: &Operation) -> Result<(), ProvenanceError> {
        let bad = |m: &str| Err(ProvenanceError::InvalidEdge(m.into()));
        // A tool run may declare no outputs; it still records the run.
        if op.outputs.is_empty() && op.kind != EdgeKind::ToolRun {
            return bad("operation has no outputs");
        }
        match op.kind {
            EdgeKind::Upload | EdgeKind::Create if !op.inputs.is_empty() => {
                bad("upload and create have no inputs")
            }
            EdgeKind::ToolRun if op.tool.is_none() => bad("tool_run requires a tool"),
            EdgeKind::Move if op.inputs.len() != 1 || op.inputs != op.outputs => {
                bad("move annotates exactly one entity")
            }
            _ => Ok(()),
        }
    }

    pub fn record_operation(&mut self, op: Operation) -> Result<u64, ProvenanceError> {
        Self::check_shape(&op)?;
        for id in op.inputs.iter().chain(&op.outputs).chain(op.tool.iter()) {
            if !self.nodes.contains_key(id) {
                return Err(ProvenanceError::UnknownEntity(*id));
            }
        }
        if op.kind != EdgeKind::Move {
            let inputs: BTreeSet<EntityId> = op.inputs.iter().copied().collect();
            if op.outputs.iter().any(|o| inputs.contains(o)) || self.reaches_any(&op.outputs, &inputs) {
                return Err(ProvenanceError::CycleDetected);
            }
        }
        let edge_id = self.next_edge;
        self.apply(ProvRecord::Edge(ProvEdge {
            edge_id,
            kind: op.kind,
            inputs: op.inputs,
            outputs: op.outputs,
            actor: op.actor,
            tool: op.tool,
            args: op.args,
            note: op.note,
            timestamp: op.timestamp,
        }));
        Ok(edge_id)
    }

    fn derivation_edges(&self, id: EntityId) -> impl Iterator<Item = &ProvEdge> {
        self.incident
            .get(&id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
            .filter(|e| e.kind != EdgeKind::Move)
    }

    fn reaches_any(&self, from: &[EntityId], targets: &BTreeSet<EntityId>) -> bool {
        let mut seen: BTreeSet<EntityId> = from.iter().copied().collect();
        let mut queue: VecDeque<EntityId> = from.iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            if targets.contains(&n) {
                return true;
            }
            for e in self.derivation_edges(n).filter(|e| e.inputs.contains(&n)) {
                for &o in &e.outputs {
                    if seen.insert(o) {
                        queue.push_back(o);
                    }
                }
            }
        }
        false
    }

    /// Number of edges that brought `id` into existence.
    pub fn creating_edge_count(&self, id: EntityId) -> usize {
        self.derivation_edges(id)
            .filter(|e| e.kind.is_creating() && e.outputs.contains(&id))
            .count()
    }

    /// Topological order of all nodes over derivation edges, ties by
    /// node registration order. `None` if the graph has a cycle.
    fn topo_order(&self) -> Option<Vec<EntityId>> {
        let mut indegree: BTreeMap<EntityId, usize> = self.nodes.keys().map(|k| (*k, 0)).collect();
        for e in self.edges.iter().filter(|e| e.kind != EdgeKind::Move) {
            for o in &e.outputs {
                *indegree.entry(*o).or_default() += e.inputs.len();
            }
        }
        let seq = |id: &EntityId| self.nodes.get(id).map_or(usize::MAX, |s| s.seq);
        let mut ready: BTreeSet<(usize, EntityId)> =
            indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| (seq(id), *id)).collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some((_, n)) = ready.pop_first() {
            order.push(n);
            for e in self.derivation_edges(n).filter(|e| e.inputs.contains(&n)) {
                // one decrement per occurrence of n among the inputs
                let times = e.inputs.iter().filter(|i| **i == n).count();
                for o in &e.outputs {
                    let d = indegree.get_mut(o)?;
                    *d = d.checked_sub(times)?;
                    if *d == 0 {
                        ready.insert((seq(o), *o));
                    }
                }
            }
        }
        (order.len() == indegree.len()).then_some(order)
    }

    fn closure(&self, id: EntityId, upward: bool) -> Result<Vec<EntityId>, ProvenanceError> {
        if !self.nodes.contains_key(&id) {
            return Err(ProvenanceError::UnknownEntity(id));
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([id]);
        while let Some(n) = queue.pop_front() {
            for e in self.derivation_edges(n) {
                let (from, to) = if upward { (&e.outputs, &e.inputs) } else { (&e.inputs, &e.outputs) };
                if from.contains(&n) {
                    for &m in to {
                        if m != id && seen.insert(m) {
                            queue.push_back(m);
                        }
                    }
                }
            }
        }
        let order = self.topo_order().unwrap_or_else(|| {
            let mut ids: Vec<_> = self.nodes.iter().map(|(id, s)| (s.seq, *id)).collect();
            ids.sort();
            ids.into_iter().map(|(_, id)| id).collect()
        });
        Ok(order.into_iter().filter(|n| seen.contains(n)).collect())
    }

    /// All ancestors, topologically ordered.
    pub fn upstream(&self, id: EntityId) -> Result<Vec<EntityId>, ProvenanceError> {
        self.closure(id, true)
    }

    /// All descendants, topologically ordered.
    pub fn downstream(&self, id: EntityId) -> Result<Vec<EntityId>, ProvenanceError> {
        self.closure(id, false)
    }

    /// Breadth-first closure around `id` in both directions, up to
    /// `max_depth` hops. An edge is included when it is incident to a node
    /// reached in fewer than `max_depth` hops; `truncated` reports whether
    /// any node on the depth frontier has an edge that was left out.
    pub fn pipeline_of(&self, id: EntityId, max_depth: usize) -> Result<PipelineView, ProvenanceError> {
        if !self.nodes.contains_key(&id) {
            return Err(ProvenanceError::UnknownEntity(id));
        }
        let mut level: BTreeMap<EntityId, usize> = BTreeMap::from([(id, 0)]);
        let mut included: BTreeSet<usize> = BTreeSet::new();
        let mut queue = VecDeque::from([id]);
        while let Some(n) = queue.pop_front() {
            let depth = level[&n];
            if depth >= max_depth {
                continue;
            }
            for &ei in self.incident.get(&n).into_iter().flatten() {
                included.insert(ei);
                let e = &self.edges[ei];
                for &m in e.inputs.iter().chain(&e.outputs) {
                    if self.nodes.contains_key(&m) && !level.contains_key(&m) {
                        level.insert(m, depth + 1);
                        queue.push_back(m);
                    }
                }
            }
        }
        let truncated = level.iter().any(|(n, d)| {
            *d == max_depth
                && self.incident.get(n).into_iter().flatten().any(|ei| !included.contains(ei))
        });
        let mut nodes: Vec<&NodeSlot> = level.keys().filter_map(|n| self.nodes.get(n)).collect();
        nodes.sort_by_key(|s| s.seq);
        let mut edges: Vec<ProvEdge> = included.into_iter().map(|i| self.edges[i].clone()).collect();
        edges.sort_by_key(|e| (e.timestamp, e.edge_id));
        Ok(PipelineView {
            focus: id,
            nodes: nodes.into_iter().map(|s| s.node.clone()).collect(),
            edges,
            truncated,
        })
    }

    /// True iff every edge references known nodes, annotation edges are
    /// well formed, and the derivation graph is acyclic.
    pub fn verify_dag(&self) -> bool {
        let known = |id: &EntityId| self.nodes.contains_key(id);
        for e in &self.edges {
            if !e.inputs.iter().chain(&e.outputs).chain(e.tool.iter()).all(known) {
                return false;
            }
            if Self::check_shape(&Operation {
                kind: e.kind,
                inputs: e.inputs.clone(),
                outputs: e.outputs.clone(),
                actor: String::new(),
                tool: e.tool,
                args: None,
                note: None,
                timestamp: 0,
            })
            .is_err()
            {
                return false;
            }
            if e.kind != EdgeKind::Move && e.outputs.iter().any(|o| e.inputs.contains(o)) {
                return false;
            }
        }
        self.topo_order().is_some()
    }

    /// Renders a pipeline view as a Graphviz digraph. Hyper-edges become
    /// one arrow per (input, output) pair labelled with the edge kind and
    /// id; origin edges without inputs annotate their output node.
    pub fn to_dot(&self, view: &PipelineView) -> String {
        let mut out = String::from("digraph pipeline {\n  rankdir=LR;\n");
        let mut origins: BTreeMap<EntityId, Vec<&ProvEdge>> = BTreeMap::new();
        for e in view.edges.iter().filter(|e| e.inputs.is_empty()) {
            for o in &e.outputs {
                origins.entry(*o).or_default().push(e);
            }
        }
        for n in &view.nodes {
            let mut label = String::from(n.path_at_creation.as_str());
            for e in origins.get(&n.entity_id).into_iter().flatten() {
                let from = match e.kind {
                    EdgeKind::Upload => "external",
                    EdgeKind::Create => "null",
                    _ => "-",
                };
                let _ = write!(label, "\\n{} from {}", e.kind.as_str(), from);
            }
            let style = if n.entity_id == view.focus {
                ", style=bold"
            } else if n.deleted {
                ", style=dashed"
            } else {
                ""
            };
            let _ = writeln!(out, "  \"{}\" [label=\"{}\", shape=box{}];", n.entity_id, escape(&label), style);
        }
        for e in &view.edges {
            let tool = e
                .tool
                .and_then(|t| self.node(t))
                .map(|n| alloc::format!(" {}", n.path_at_creation.file_name()))
                .unwrap_or_default();
            let label = alloc::format!("{} #{}{}", e.kind.as_str(), e.edge_id, tool);
            for i in &e.inputs {
                for o in &e.outputs {
                    let style = if e.kind == EdgeKind::Move { ", style=dotted" } else { "" };
                    let _ = writeln!(out, "  \"{i}\" -> \"{o}\" [label=\"{}\"{style}];", escape(&label));
                }
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn edges_touching(&self, id: EntityId) -> impl Iterator<Item = &ProvEdge> {
        self.edges.iter().filter(move |e| e.touches(id))
    }
}

fn escape(s: &str) -> String {
    s.replace('"', "\\\"")
}
