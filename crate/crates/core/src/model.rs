//! Network, demand, protocol and schedule value types.
//!
//! All durations inside the crate are integer slot counts. Milliseconds only
//! appear in node latencies, the slot size itself, and protocol descriptions
//! read from files, which are converted with [`slots_from_ms`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = String;
pub type Slot = u64;

/// Tolerance used when converting millisecond offsets to slot counts.
const ALIGN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitKind {
    Comm,
    Storage,
}

impl QubitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QubitKind::Comm => "comm",
            QubitKind::Storage => "storage",
        }
    }
}

/// A single qubit of a node; the set of all of them is the resource set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QubitRef {
    pub node: NodeId,
    pub kind: QubitKind,
    pub index: u32,
}

impl QubitRef {
    pub fn comm(node: &str, index: u32) -> Self {
        QubitRef {
            node: node.to_string(),
            kind: QubitKind::Comm,
            index,
        }
    }

    pub fn storage(node: &str, index: u32) -> Self {
        QubitRef {
            node: node.to_string(),
            kind: QubitKind::Storage,
            index,
        }
    }
}

impl fmt::Display for QubitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}{}", self.node, self.kind.as_str(), self.index)
    }
}

fn default_comm() -> u32 {
    1
}
fn default_storage() -> u32 {
    3
}
fn default_swap_ms() -> f64 {
    1.0
}
fn default_distill_ms() -> f64 {
    0.526
}
fn default_move_ms() -> f64 {
    0.961
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default = "default_comm")]
    pub num_comm: u32,
    #[serde(default = "default_storage")]
    pub num_storage: u32,
    #[serde(default = "default_swap_ms")]
    pub swap_latency_ms: f64,
    #[serde(default = "default_distill_ms")]
    pub distill_latency_ms: f64,
    #[serde(default = "default_move_ms")]
    pub move_latency_ms: f64,
    #[serde(default)]
    pub end_node: bool,
}

impl NodeSpec {
    /// A node with the default hardware parameters used in the simulations.
    pub fn new(id: &str, end_node: bool) -> Self {
        NodeSpec {
            id: id.to_string(),
            num_comm: default_comm(),
            num_storage: default_storage(),
            swap_latency_ms: default_swap_ms(),
            distill_latency_ms: default_distill_ms(),
            move_latency_ms: default_move_ms(),
            end_node,
        }
    }

    pub fn with_qubits(mut self, num_comm: u32, num_storage: u32) -> Self {
        self.num_comm = num_comm;
        self.num_storage = num_storage;
        self
    }

    pub fn qubit_count(&self, kind: QubitKind) -> u32 {
        match kind {
            QubitKind::Comm => self.num_comm,
            QubitKind::Storage => self.num_storage,
        }
    }

    pub fn qubits(&self) -> impl Iterator<Item = QubitRef> + '_ {
        let comm = (0..self.num_comm).map(move |i| QubitRef::comm(&self.id, i));
        let storage = (0..self.num_storage).map(move |i| QubitRef::storage(&self.id, i));
        comm.chain(storage)
    }
}

/// One operating point of an elementary link: fidelity and generation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Capability {
    pub fidelity: f64,
    pub rate_hz: f64,
}

impl From<(f64, f64)> for Capability {
    fn from((fidelity, rate_hz): (f64, f64)) -> Self {
        Capability { fidelity, rate_hz }
    }
}

impl From<Capability> for (f64, f64) {
    fn from(c: Capability) -> Self {
        (c.fidelity, c.rate_hz)
    }
}

/// The link capability menu of the small-network simulations.
pub const DEFAULT_LINK_CAPABILITIES: [(f64, f64); 8] = [
    (0.88, 14.16),
    (0.83, 20.84),
    (0.79, 27.83),
    (0.75, 33.98),
    (0.7, 39.18),
    (0.66, 45.6),
    (0.62, 51.26),
    (0.57, 57.73),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub length_km: f64,
    pub capabilities: Vec<Capability>,
}

impl LinkSpec {
    pub fn new(a: &str, b: &str, length_km: f64, capabilities: &[(f64, f64)]) -> Self {
        LinkSpec {
            a: a.to_string(),
            b: b.to_string(),
            length_km,
            capabilities: capabilities.iter().copied().map(Capability::from).collect(),
        }
    }

    pub fn connects(&self, u: &str, v: &str) -> bool {
        (self.a == u && self.b == v) || (self.a == v && self.b == u)
    }

    pub fn other(&self, u: &str) -> Option<&str> {
        if self.a == u {
            Some(&self.b)
        } else if self.b == u {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

impl Topology {
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Result<Self> {
        let t = Topology { nodes, links };
        t.check()?;
        Ok(t)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Topology = serde_json::from_str(s)?;
        t.check()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    /// Checks the structural invariants: unique ids, known and distinct link
    /// endpoints, at most one link per pair, sorted capability menus.
    pub fn check(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate node {}", n.id)));
            }
            if n.num_comm == 0 {
                return Err(Error::Invalid(format!("node {} has no communication qubit", n.id)));
            }
            for l in [n.swap_latency_ms, n.distill_latency_ms, n.move_latency_ms] {
                if !(l > 0.0) {
                    return Err(Error::Invalid(format!("node {} has non-positive latency", n.id)));
                }
            }
        }
        let mut pairs = BTreeSet::new();
        for l in &self.links {
            if l.a == l.b {
                return Err(Error::Invalid(format!("self-loop at {}", l.a)));
            }
            for e in [&l.a, &l.b] {
                if !ids.contains(e.as_str()) {
                    return Err(Error::UnknownNode(e.clone()));
                }
            }
            let key = if l.a < l.b {
                (l.a.as_str(), l.b.as_str())
            } else {
                (l.b.as_str(), l.a.as_str())
            };
            if !pairs.insert(key) {
                return Err(Error::Invalid(format!("duplicate link {}-{}", l.a, l.b)));
            }
            if l.capabilities.is_empty() {
                return Err(Error::Invalid(format!("link {}-{} has no capability", l.a, l.b)));
            }
            for c in &l.capabilities {
                if !(c.fidelity > 0.25 && c.fidelity <= 1.0 && c.rate_hz > 0.0) {
                    return Err(Error::Invalid(format!("bad capability on {}-{}", l.a, l.b)));
                }
            }
            for w in l.capabilities.windows(2) {
                if !(w[0].fidelity > w[1].fidelity && w[0].rate_hz < w[1].rate_hz) {
                    return Err(Error::Invalid(format!(
                        "capabilities of {}-{} must trade fidelity for rate in order",
                        l.a, l.b
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn link(&self, u: &str, v: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.connects(u, v))
    }

    pub fn neighbors<'a>(&'a self, u: &'a str) -> impl Iterator<Item = (&'a str, &'a LinkSpec)> + 'a {
        self.links.iter().filter_map(move |l| l.other(u).map(|v| (v, l)))
    }

    pub fn end_nodes(&self) -> Vec<&NodeSpec> {
        self.nodes.iter().filter(|n| n.end_node).collect()
    }

    /// The resource set: every qubit of every node.
    pub fn resources(&self) -> Vec<QubitRef> {
        self.nodes.iter().flat_map(|n| n.qubits()).collect()
    }

    pub fn owns(&self, q: &QubitRef) -> bool {
        self.node(&q.node).is_some_and(|n| q.index < n.qubit_count(q.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub f_min: f64,
    #[serde(rename = "r_min_ebit_s")]
    pub r_min: f64,
    #[serde(rename = "j_max_s2", default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<f64>,
}

impl Demand {
    pub fn new(id: &str, src: &str, dst: &str, f_min: f64, r_min: f64) -> Self {
        Demand {
            id: id.to_string(),
            src: src.to_string(),
            dst: dst.to_string(),
            f_min,
            r_min,
            j_max: None,
        }
    }

    pub fn with_jitter(mut self, j_max: f64) -> Self {
        self.j_max = Some(j_max);
        self
    }

    pub fn check(&self, t: &Topology) -> Result<()> {
        if self.src == self.dst {
            return Err(Error::Invalid(format!("demand {} has src = dst", self.id)));
        }
        for e in [&self.src, &self.dst] {
            match t.node(e) {
                None => return Err(Error::UnknownNode(e.clone())),
                Some(n) if !n.end_node => {
                    return Err(Error::Invalid(format!("{} is not an end node", e)))
                }
                _ => {}
            }
        }
        if !(self.f_min > 0.25 && self.f_min <= 1.0) {
            return Err(Error::Domain {
                value: self.f_min,
                domain: "(0.25, 1]",
            });
        }
        if !(self.r_min > 0.0) {
            return Err(Error::Domain {
                value: self.r_min,
                domain: "(0, inf)",
            });
        }
        if let Some(j) = self.j_max {
            if !(j >= 0.0) {
                return Err(Error::InvalidJitter(j));
            }
        }
        Ok(())
    }
}

pub fn load_demands(path: impl AsRef<Path>) -> Result<Vec<Demand>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Link,
    Swap,
    Distill,
}

/// One vertex of a repeater protocol with its timing and qubit maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOp {
    pub id: String,
    pub kind: OpKind,
    pub nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_fidelity: Option<f64>,
    /// Qubits needed to perform the operation.
    pub consumes: Vec<QubitRef>,
    /// Qubits holding the entanglement the operation outputs.
    pub produces: Vec<QubitRef>,
    pub start: Slot,
    pub end: Slot,
}

impl ProtocolOp {
    pub fn duration(&self) -> Slot {
        self.end - self.start
    }

    /// All qubits the operation touches.
    pub fn qubits(&self) -> BTreeSet<&QubitRef> {
        self.consumes.iter().chain(self.produces.iter()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeaterProtocol {
    pub src: NodeId,
    pub dst: NodeId,
    pub ops: Vec<ProtocolOp>,
    pub edges: Vec<(String, String)>,
    /// Slots from the first operation start to the last operation end.
    pub latency: Slot,
    pub worst_case_fidelity: f64,
    pub success_probability: f64,
}

impl RepeaterProtocol {
    pub fn op(&self, id: &str) -> Option<&ProtocolOp> {
        self.ops.iter().find(|o| o.id == id)
    }

    pub fn op_index(&self) -> HashMap<&str, usize> {
        self.ops.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect()
    }

    /// Union of all qubits any operation touches.
    pub fn qubits(&self) -> BTreeSet<QubitRef> {
        self.ops
            .iter()
            .flat_map(|o| o.consumes.iter().chain(o.produces.iter()).cloned())
            .collect()
    }

    pub fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(a, _)| a == id)
            .map(|(_, b)| b.as_str())
    }

    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(_, b)| b == id)
            .map(|(a, _)| a.as_str())
    }

    /// Whether `to` is reachable from `from` along one or more edges.
    pub fn reaches(&self, from: &str, to: &str) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            for y in self.successors(x) {
                if y == to {
                    return true;
                }
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        false
    }

    /// Operation indices in a topological order (Kahn, ties by position).
    /// `None` if the edges contain a cycle or reference unknown operations.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let idx = self.op_index();
        let n = self.ops.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for (a, b) in &self.edges {
            let (&ia, &ib) = (idx.get(a.as_str())?, idx.get(b.as_str())?);
            succ[ia].push(ib);
            indeg[ib] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Per-qubit intervals during which a qubit holds a link produced by one
    /// operation and waiting for the next operation to use it. The last
    /// holder of a qubit keeps it until the protocol latency.
    pub fn hold_intervals(&self) -> Vec<HoldInterval> {
        let mut per_qubit: BTreeMap<&QubitRef, Vec<usize>> = BTreeMap::new();
        for (i, op) in self.ops.iter().enumerate() {
            for q in op.qubits() {
                per_qubit.entry(q).or_default().push(i);
            }
        }
        let mut out = Vec::new();
        for (q, mut users) in per_qubit {
            users.sort_by_key(|&i| (self.ops[i].start, self.ops[i].end, i));
            for (k, &i) in users.iter().enumerate() {
                let op = &self.ops[i];
                if !op.produces.contains(q) {
                    continue;
                }
                let (until, next) = match users.get(k + 1) {
                    Some(&j) => (self.ops[j].start, Some(self.ops[j].id.clone())),
                    None => (self.latency, None),
                };
                if until > op.end {
                    out.push(HoldInterval {
                        qubit: q.clone(),
                        producer: op.id.clone(),
                        consumer: next,
                        start: op.end,
                        end: until,
                    });
                }
            }
        }
        out
    }
}

/// A qubit storing a link between two operations of one protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldInterval {
    pub qubit: QubitRef,
    pub producer: String,
    pub consumer: Option<String>,
    pub start: Slot,
    pub end: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolViolation {
    Empty,
    UnknownOp(String),
    DuplicateOp(String),
    Cycle,
    SourceNotLink(String),
    LinkWithInputs(String),
    EmptyInterval(String),
    EdgeBeforeOutput { from: String, to: String },
    Misaligned { op: String, ms: f64 },
    LinkEndpoints(String),
    MissingLinkFidelity(String),
    SwapProduces(String),
    UnknownQubit { op: String, qubit: QubitRef },
    ForeignQubit { op: String, qubit: QubitRef },
    QubitOverlap { a: String, b: String, qubit: QubitRef },
    HeldQubitUsed { holder: String, intruder: String, qubit: QubitRef },
    LatencyMismatch { stated: Slot, actual: Slot },
}

/// Converts a millisecond offset to whole slots.
pub fn slots_from_ms(ms: f64, t_slot_ms: f64) -> Option<Slot> {
    if !(ms >= 0.0) || !(t_slot_ms > 0.0) {
        return None;
    }
    let x = ms / t_slot_ms;
    let r = x.round();
    ((x - r).abs() <= ALIGN_EPS * x.max(1.0)).then_some(r as Slot)
}

/// Protocol operation as described in milliseconds, before slot alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOp {
    pub id: String,
    pub kind: OpKind,
    pub nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_fidelity: Option<f64>,
    pub consumes: Vec<QubitRef>,
    pub produces: Vec<QubitRef>,
    pub start_ms: f64,
    pub end_ms: f64,
}

/// Builds a protocol from millisecond offsets. Offsets that are not whole
/// multiples of the slot are reported as violations.
pub fn protocol_from_ms(
    src: &str,
    dst: &str,
    ops: Vec<TimedOp>,
    edges: Vec<(String, String)>,
    t_slot_ms: f64,
) -> std::result::Result<RepeaterProtocol, Vec<ProtocolViolation>> {
    let mut violations = Vec::new();
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        let start = slots_from_ms(op.start_ms, t_slot_ms);
        let end = slots_from_ms(op.end_ms, t_slot_ms);
        if start.is_none() {
            violations.push(ProtocolViolation::Misaligned {
                op: op.id.clone(),
                ms: op.start_ms,
            });
        }
        if end.is_none() {
            violations.push(ProtocolViolation::Misaligned {
                op: op.id.clone(),
                ms: op.end_ms,
            });
        }
        out.push(ProtocolOp {
            id: op.id,
            kind: op.kind,
            nodes: op.nodes,
            link_fidelity: op.link_fidelity,
            consumes: op.consumes,
            produces: op.produces,
            start: start.unwrap_or(0),
            end: end.unwrap_or(0),
        });
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    let latency = out.iter().map(|o| o.end).max().unwrap_or(0);
    Ok(RepeaterProtocol {
        src: src.to_string(),
        dst: dst.to_string(),
        ops: out,
        edges,
        latency,
        worst_case_fidelity: 0.0,
        success_probability: 1.0,
    })
}

/// Latency of a protocol: the maximum end offset over all operations.
pub fn protocol_latency(p: &RepeaterProtocol) -> Result<Slot> {
    p.ops.iter().map(|o| o.end).max().ok_or(Error::EmptyProtocol)
}

/// Checks every structural invariant of a protocol against a topology.
/// An empty result means the protocol is valid.
pub fn validate_protocol(p: &RepeaterProtocol, t: &Topology) -> Vec<ProtocolViolation> {
    use ProtocolViolation as V;
    let mut v = Vec::new();
    if p.ops.is_empty() {
        return vec![V::Empty];
    }
    let mut seen = BTreeSet::new();
    for op in &p.ops {
        if !seen.insert(op.id.as_str()) {
            v.push(V::DuplicateOp(op.id.clone()));
        }
    }
    let idx = p.op_index();
    for (a, b) in &p.edges {
        for x in [a, b] {
            if !idx.contains_key(x.as_str()) {
                v.push(V::UnknownOp(x.clone()));
            }
        }
    }
    if !v.is_empty() {
        return v;
    }
    if p.topological_order().is_none() {
        v.push(V::Cycle);
    }
    for op in &p.ops {
        let has_inputs = p.predecessors(&op.id).next().is_some();
        match (op.kind, has_inputs) {
            (OpKind::Link, true) => v.push(V::LinkWithInputs(op.id.clone())),
            (OpKind::Swap | OpKind::Distill, false) => v.push(V::SourceNotLink(op.id.clone())),
            _ => {}
        }
        if op.start >= op.end {
            v.push(V::EmptyInterval(op.id.clone()));
        }
        if op.kind == OpKind::Link {
            let adjacent = op.nodes.len() == 2 && t.link(&op.nodes[0], &op.nodes[1]).is_some();
            if !adjacent {
                v.push(V::LinkEndpoints(op.id.clone()));
            }
            if op.link_fidelity.is_none() {
                v.push(V::MissingLinkFidelity(op.id.clone()));
            }
        }
        if op.kind == OpKind::Swap && !op.produces.is_empty() {
            v.push(V::SwapProduces(op.id.clone()));
        }
        for q in op.qubits() {
            if !t.owns(q) {
                v.push(V::UnknownQubit {
                    op: op.id.clone(),
                    qubit: q.clone(),
                });
            } else if !op.nodes.contains(&q.node) {
                v.push(V::ForeignQubit {
                    op: op.id.clone(),
                    qubit: q.clone(),
                });
            }
        }
    }
    for (a, b) in &p.edges {
        let (oa, ob) = (&p.ops[idx[a.as_str()]], &p.ops[idx[b.as_str()]]);
        if oa.end > ob.start {
            v.push(V::EdgeBeforeOutput {
                from: a.clone(),
                to: b.clone(),
            });
        }
    }
    for (i, a) in p.ops.iter().enumerate() {
        for b in &p.ops[i + 1..] {
            if a.start < b.end && b.start < a.end {
                if let Some(q) = a.qubits().intersection(&b.qubits()).next() {
                    v.push(V::QubitOverlap {
                        a: a.id.clone(),
                        b: b.id.clone(),
                        qubit: (*q).clone(),
                    });
                }
            }
        }
    }
    // A held link may only be touched next by an operation downstream of
    // the one that produced it.
    for h in p.hold_intervals() {
        if let Some(c) = &h.consumer {
            if !p.reaches(&h.producer, c) {
                v.push(V::HeldQubitUsed {
                    holder: h.producer.clone(),
                    intruder: c.clone(),
                    qubit: h.qubit.clone(),
                });
            }
        }
    }
    let actual = p.ops.iter().map(|o| o.end).max().unwrap_or(0);
    if actual != p.latency {
        v.push(V::LatencyMismatch {
            stated: p.latency,
            actual,
        });
    }
    v
}

/// One placed protocol instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScheduledInstance {
    pub demand_id: String,
    pub instance: u32,
    pub start: Slot,
}

/// Absolute slots of one operation of one placed instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScheduledOp {
    pub demand_id: String,
    pub instance: u32,
    pub op_id: String,
    pub start: Slot,
    pub end: Slot,
}

/// A cyclic network-wide schedule of `length` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSchedule {
    pub t_slot_ms: f64,
    pub length: Slot,
    pub entries: Vec<ScheduledInstance>,
    pub ops: Vec<ScheduledOp>,
}

impl NetworkSchedule {
    /// Builds a schedule from instance start slots, deriving every
    /// operation's absolute slots from the protocol offsets.
    pub fn from_starts<'a>(
        t_slot_ms: f64,
        length: Slot,
        mut entries: Vec<ScheduledInstance>,
        protocols: impl Fn(&str) -> Option<&'a RepeaterProtocol>,
    ) -> Self {
        entries.sort();
        let mut ops = Vec::new();
        for e in &entries {
            if let Some(p) = protocols(&e.demand_id) {
                for op in &p.ops {
                    ops.push(ScheduledOp {
                        demand_id: e.demand_id.clone(),
                        instance: e.instance,
                        op_id: op.id.clone(),
                        start: e.start + op.start,
                        end: e.start + op.end,
                    });
                }
            }
        }
        NetworkSchedule {
            t_slot_ms,
            length,
            entries,
            ops,
        }
    }

    pub fn starts_of(&self, demand_id: &str) -> Vec<Slot> {
        let mut s: Vec<Slot> = self
            .entries
            .iter()
            .filter(|e| e.demand_id == demand_id)
            .map(|e| e.start)
            .collect();
        s.sort_unstable();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
