//! Routing and repeater-protocol synthesis.
//!
//! A demand is routed along a shortest path, the path is split recursively
//! at pivot nodes into swap trees whose leaves are elementary links (possibly
//! distilled), and the tree is mapped onto qubits and laid out in slots.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{
    self, end_to_end_worst_case, nested_pump_fidelity, pump_sequence, required_pre_swap_fidelity,
    DecayModel, NoDecay, FIDELITY_EPS,
};
use crate::model::{
    Capability, Demand, LinkSpec, NodeId, OpKind, ProtocolOp, QubitKind, QubitRef,
    RepeaterProtocol, Slot, Topology,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub demand_id: String,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotRule {
    /// Middle node of the sub-path, the lower one when there are two.
    Midpoint,
    /// First internal node.
    First,
    /// Last internal node.
    Last,
}

impl PivotRule {
    fn pick(self, hops: usize) -> usize {
        match self {
            PivotRule::Midpoint => hops / 2,
            PivotRule::First => 1,
            PivotRule::Last => hops - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub t_slot_ms: f64,
    pub pivot: PivotRule,
    pub nesting_cap: u32,
    pub max_pump_rounds: u32,
    /// Link windows last this many expected generation times.
    pub attempt_multiplier: f64,
    /// Try both input orders of every swap and keep the shortest layout.
    pub order_search: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            t_slot_ms: 10.0,
            pivot: PivotRule::Midpoint,
            nesting_cap: 4,
            max_pump_rounds: 16,
            attempt_multiplier: 1.0,
            order_search: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillationPlan {
    None,
    /// `rounds` links, each after the first distilled into the held one.
    Pump { rounds: u32 },
    /// A full binary tree of distillations of the given depth.
    Nested { depth: u32 },
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    dist: f64,
    path: Vec<NodeId>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path by link length. Among equal-length paths the one whose
/// node-id sequence is lexicographically smallest wins.
pub fn route(t: &Topology, d: &Demand) -> Result<Route> {
    for n in [&d.src, &d.dst] {
        if t.node(n).is_none() {
            return Err(Error::UnknownNode(n.clone()));
        }
    }
    let mut best: HashMap<&str, Label> = HashMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        dist: 0.0,
        path: vec![d.src.clone()],
    });
    while let Some(label) = heap.pop() {
        let here = label.path.last().expect("non-empty path").clone();
        if best.contains_key(here.as_str()) {
            continue;
        }
        if here == d.dst {
            return Ok(Route {
                demand_id: d.id.clone(),
                path: label.path,
            });
        }
        for (next, link) in t.neighbors(&here) {
            if best.contains_key(next) || label.path.iter().any(|p| p == next) {
                continue;
            }
            let mut path = label.path.clone();
            path.push(next.to_string());
            heap.push(Label {
                dist: label.dist + link.length_km,
                path,
            });
        }
        let key = t.node(&here).map(|n| n.id.as_str()).expect("known node");
        best.insert(key, label);
    }
    Err(Error::NoRoute {
        src: d.src.clone(),
        dst: d.dst.clone(),
    })
}

/// The fastest operating point of a link that still reaches `f_required`.
pub fn choose_link_capability(l: &LinkSpec, f_required: f64) -> Result<Capability> {
    l.capabilities
        .iter()
        .filter(|c| c.fidelity >= f_required - FIDELITY_EPS)
        .max_by(|a, b| a.rate_hz.total_cmp(&b.rate_hz))
        .copied()
        .ok_or_else(|| Error::InfeasibleLink {
            a: l.a.clone(),
            b: l.b.clone(),
            required: f_required,
        })
}

/// Decides how an elementary link reaches `f_target`: directly, by pumping,
/// or by nested pumping, in that order of preference.
pub fn plan_distillation(
    f_target: f64,
    l: &LinkSpec,
    cfg: &SelectionConfig,
) -> Result<(DistillationPlan, Capability)> {
    if !(f_target > fidelity::SEPARABLE && f_target <= 1.0) {
        return Err(Error::Domain {
            value: f_target,
            domain: "(0.25, 1]",
        });
    }
    if let Ok(c) = choose_link_capability(l, f_target) {
        return Ok((DistillationPlan::None, c));
    }
    // Cost is the total link generation time the plan needs.
    let mut best: Option<(f64, u32, Capability)> = None;
    for c in &l.capabilities {
        let seq = pump_sequence(c.fidelity, cfg.max_pump_rounds)?;
        if let Some(k) = seq.iter().position(|&f| f >= f_target - FIDELITY_EPS) {
            let rounds = k as u32 + 1;
            let cost = rounds as f64 / c.rate_hz;
            let better = match best {
                None => true,
                Some((bc, br, _)) => cost < bc || (cost == bc && rounds < br),
            };
            if better {
                best = Some((cost, rounds, *c));
            }
        }
    }
    if let Some((_, rounds, c)) = best {
        return Ok((DistillationPlan::Pump { rounds }, c));
    }
    for depth in 1..=cfg.nesting_cap {
        let reaching = l
            .capabilities
            .iter()
            .filter(|c| {
                nested_pump_fidelity(c.fidelity, depth).is_ok_and(|f| f >= f_target - FIDELITY_EPS)
            })
            .max_by(|a, b| a.rate_hz.total_cmp(&b.rate_hz));
        if let Some(c) = reaching {
            return Ok((DistillationPlan::Nested { depth }, *c));
        }
    }
    Err(Error::DistillationInfeasible {
        a: l.a.clone(),
        b: l.b.clone(),
        target: f_target,
        cap: cfg.nesting_cap,
    })
}

/// One vertex of a protocol tree, stored in post-order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeOp {
    pub kind: OpKind,
    /// Link and distill: the two link ends. Swap: the swapping node.
    pub nodes: Vec<NodeId>,
    pub capability: Option<Capability>,
    /// Inputs, in the order they are consumed (kept link first).
    pub children: Vec<usize>,
}

/// A protocol before qubit mapping and layout. Children always precede
/// their parent and the last entry is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProtocolTree {
    pub src: NodeId,
    pub dst: NodeId,
    /// Nodes strictly inside the route.
    pub internal: BTreeSet<NodeId>,
    pub ops: Vec<TreeOp>,
}

impl ProtocolTree {
    fn push(&mut self, op: TreeOp) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    pub fn root(&self) -> usize {
        self.ops.len() - 1
    }

    fn parent_of(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.ops.len()];
        for (i, op) in self.ops.iter().enumerate() {
            for &c in &op.children {
                parent[c] = Some(i);
            }
        }
        parent
    }

    /// The same tree with the inputs of selected swaps exchanged, listed
    /// again in post-order. Bit k of `mask` selects the k-th swap.
    pub fn with_swapped_inputs(&self, mask: u64) -> ProtocolTree {
        let mut swap_rank = vec![None; self.ops.len()];
        let mut k = 0;
        for (i, op) in self.ops.iter().enumerate() {
            if op.kind == OpKind::Swap {
                swap_rank[i] = Some(k);
                k += 1;
            }
        }
        fn emit(src: &ProtocolTree, i: usize, mask: u64, rank: &[Option<u32>], out: &mut Vec<TreeOp>) -> usize {
            let mut children = src.ops[i].children.clone();
            if rank[i].is_some_and(|k| k < 64 && mask >> k & 1 == 1) {
                children.reverse();
            }
            let children = children.into_iter().map(|c| emit(src, c, mask, rank, out)).collect();
            out.push(TreeOp {
                children,
                ..src.ops[i].clone()
            });
            out.len() - 1
        }
        let mut ops = Vec::with_capacity(self.ops.len());
        if !self.ops.is_empty() {
            emit(self, self.root(), mask, &swap_rank, &mut ops);
        }
        ProtocolTree {
            ops,
            ..self.clone()
        }
    }

    /// Operation ids: L1.., S1.., D1.. numbered in post-order.
    pub fn op_ids(&self) -> Vec<String> {
        let mut counts = [0usize; 3];
        self.ops
            .iter()
            .map(|op| {
                let (k, p) = match op.kind {
                    OpKind::Link => (0, "L"),
                    OpKind::Swap => (1, "S"),
                    OpKind::Distill => (2, "D"),
                };
                counts[k] += 1;
                format!("{p}{}", counts[k])
            })
            .collect()
    }
}

fn add_segment(
    tree: &mut ProtocolTree,
    a: &str,
    b: &str,
    plan: DistillationPlan,
    cap: Capability,
) -> usize {
    let link = |tree: &mut ProtocolTree| {
        tree.push(TreeOp {
            kind: OpKind::Link,
            nodes: vec![a.to_string(), b.to_string()],
            capability: Some(cap),
            children: vec![],
        })
    };
    let distill = |tree: &mut ProtocolTree, kept: usize, sac: usize| {
        tree.push(TreeOp {
            kind: OpKind::Distill,
            nodes: vec![a.to_string(), b.to_string()],
            capability: None,
            children: vec![kept, sac],
        })
    };
    fn nested(
        tree: &mut ProtocolTree,
        depth: u32,
        link: &dyn Fn(&mut ProtocolTree) -> usize,
        distill: &dyn Fn(&mut ProtocolTree, usize, usize) -> usize,
    ) -> usize {
        if depth == 0 {
            return link(tree);
        }
        let kept = nested(tree, depth - 1, link, distill);
        let sac = nested(tree, depth - 1, link, distill);
        distill(tree, kept, sac)
    }
    match plan {
        DistillationPlan::None => link(tree),
        DistillationPlan::Pump { rounds } => {
            let mut acc = link(tree);
            for _ in 1..rounds {
                let fresh = link(tree);
                acc = distill(tree, acc, fresh);
            }
            acc
        }
        DistillationPlan::Nested { depth } => nested(tree, depth, &link, &distill),
    }
}

fn build_tree(
    tree: &mut ProtocolTree,
    path: &[NodeId],
    target: f64,
    t: &Topology,
    cfg: &SelectionConfig,
) -> Result<usize> {
    let hops = path.len() - 1;
    if hops == 1 {
        let l = t.link(&path[0], &path[1]).ok_or_else(|| Error::NoRoute {
            src: path[0].clone(),
            dst: path[1].clone(),
        })?;
        let (plan, cap) = plan_distillation(target, l, cfg)?;
        return Ok(add_segment(tree, &path[0], &path[1], plan, cap));
    }
    let pivot = cfg.pivot.pick(hops);
    let sub = required_pre_swap_fidelity(target)?;
    let left = build_tree(tree, &path[..=pivot], sub, t, cfg)?;
    let right = build_tree(tree, &path[pivot..], sub, t, cfg)?;
    Ok(tree.push(TreeOp {
        kind: OpKind::Swap,
        nodes: vec![path[pivot].clone()],
        capability: None,
        children: vec![left, right],
    }))
}

/// Recursive pivot decomposition of a route into a swap/distill tree whose
/// links meet the fidelity each level requires.
pub fn plan_tree(route: &Route, f_min: f64, t: &Topology, cfg: &SelectionConfig) -> Result<ProtocolTree> {
    if route.path.len() < 2 {
        return Err(Error::Invalid(format!("route for {} has no hop", route.demand_id)));
    }
    let mut tree = ProtocolTree {
        src: route.path[0].clone(),
        dst: route.path[route.path.len() - 1].clone(),
        internal: route.path[1..route.path.len() - 1].iter().cloned().collect(),
        ops: vec![],
    };
    build_tree(&mut tree, &route.path, f_min, t, cfg)?;
    Ok(tree)
}

/// Qubits an operation needs and qubits holding its output.
pub type QubitAssignment = (Vec<QubitRef>, Vec<QubitRef>);

/// Assigns qubits by a post-order walk of the tree. A new link takes a
/// vacant communication qubit at each end; at an end that is internal to the
/// route, or that must generate another link afterwards, it is moved into a
/// vacant storage qubit when one exists. Swaps free the qubits they consume,
/// distillation frees the sacrificed link's qubits.
pub fn map_qubits(tree: &ProtocolTree, t: &Topology) -> Result<Vec<QubitAssignment>> {
    let mut occupied: BTreeSet<QubitRef> = BTreeSet::new();
    // Remaining link operations per node, in post-order.
    let mut links_left: HashMap<&str, usize> = HashMap::new();
    for op in &tree.ops {
        if op.kind == OpKind::Link {
            for n in &op.nodes {
                *links_left.entry(n.as_str()).or_default() += 1;
            }
        }
    }
    let vacant = |occupied: &BTreeSet<QubitRef>, node: &str, kind: QubitKind| -> Result<Option<QubitRef>> {
        let spec = t.node(node).ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        Ok((0..spec.qubit_count(kind))
            .map(|i| QubitRef {
                node: node.to_string(),
                kind,
                index: i,
            })
            .find(|q| !occupied.contains(q)))
    };
    // Per op: which qubit holds its output at each end node.
    let mut holders: Vec<Vec<QubitRef>> = vec![vec![]; tree.ops.len()];
    let mut out = Vec::with_capacity(tree.ops.len());
    for (i, op) in tree.ops.iter().enumerate() {
        let (mut consumes, mut produces) = (Vec::new(), Vec::new());
        match op.kind {
            OpKind::Link => {
                for n in &op.nodes {
                    let left = links_left.get_mut(n.as_str()).expect("counted");
                    *left -= 1;
                    let comm = vacant(&occupied, n, QubitKind::Comm)?.ok_or_else(|| {
                        Error::QubitExhaustion {
                            node: n.clone(),
                            kind: "communication",
                        }
                    })?;
                    consumes.push(comm.clone());
                    let wants_storage = tree.internal.contains(n) || *left > 0;
                    let store = if wants_storage {
                        vacant(&occupied, n, QubitKind::Storage)?
                    } else {
                        None
                    };
                    let holder = match store {
                        Some(s) => {
                            consumes.push(s.clone());
                            s
                        }
                        None => comm,
                    };
                    occupied.insert(holder.clone());
                    produces.push(holder.clone());
                    holders[i].push(holder);
                }
            }
            OpKind::Swap => {
                let at = &op.nodes[0];
                let mut outer = Vec::new();
                for &c in &op.children {
                    for q in &holders[c] {
                        if &q.node == at {
                            consumes.push(q.clone());
                            occupied.remove(q);
                        } else {
                            outer.push(q.clone());
                        }
                    }
                }
                holders[i] = outer;
                if consumes.len() != 2 || holders[i].len() != 2 {
                    return Err(Error::MalformedProtocol(format!(
                        "swap at {at} does not join two links"
                    )));
                }
            }
            OpKind::Distill => {
                let (kept, sac) = (op.children[0], op.children[1]);
                for q in holders[kept].iter().chain(holders[sac].iter()) {
                    consumes.push(q.clone());
                }
                for q in &holders[sac] {
                    occupied.remove(q);
                }
                produces = holders[kept].clone();
                holders[i] = holders[kept].clone();
            }
        }
        consumes.sort();
        consumes.dedup();
        produces.sort();
        out.push((consumes, produces));
    }
    Ok(out)
}

/// Slot counts for every operation of a tree under a topology's latencies.
pub fn op_durations(
    tree: &ProtocolTree,
    q: &[QubitAssignment],
    t: &Topology,
    cfg: &SelectionConfig,
) -> Result<Vec<Slot>> {
    let slots = |ms: f64| ((ms / cfg.t_slot_ms) - 1e-9).ceil().max(1.0) as Slot;
    tree.ops
        .iter()
        .zip(q)
        .map(|(op, (consumes, _))| {
            let node = |n: &str| t.node(n).ok_or_else(|| Error::UnknownNode(n.to_string()));
            Ok(match op.kind {
                OpKind::Link => {
                    let cap = op.capability.expect("links carry a capability");
                    let mut ms = cfg.attempt_multiplier * 1000.0 / cap.rate_hz;
                    let mut moves: f64 = 0.0;
                    for qr in consumes.iter().filter(|x| x.kind == QubitKind::Storage) {
                        moves = moves.max(node(&qr.node)?.move_latency_ms);
                    }
                    ms += moves;
                    slots(ms)
                }
                OpKind::Swap => slots(node(&op.nodes[0])?.swap_latency_ms),
                OpKind::Distill => {
                    let a = node(&op.nodes[0])?.distill_latency_ms;
                    let b = node(&op.nodes[1])?.distill_latency_ms;
                    slots(a.max(b))
                }
            })
        })
        .collect()
}

#[derive(Debug, Default, Clone)]
struct QubitTimeline {
    busy: Vec<(Slot, Slot)>,
    /// Start of the current unbroken use while a link is held.
    held_from: Option<Slot>,
}

impl QubitTimeline {
    fn last_end(&self) -> Slot {
        self.busy.iter().map(|b| b.1).max().unwrap_or(0)
    }

    /// First start >= `from` such that [start, start+dur) avoids all busy
    /// intervals.
    fn fit(&self, from: Slot, dur: Slot) -> Slot {
        let mut s = from;
        loop {
            match self.busy.iter().find(|(b, e)| s < *e && *b < s + dur) {
                Some(&(_, e)) => s = e,
                None => return s,
            }
        }
    }
}

/// Two-pass layout. Operations are placed as soon as possible in post-order,
/// a link that will hold its output only after every earlier use of its
/// qubits. Links are then pushed as late as their consumers and the next use
/// of their qubits allow, which shortens storage without moving swaps or
/// distillations. Offsets are normalised to start at slot 0.
pub fn layout(tree: &ProtocolTree, q: &[QubitAssignment], durations: &[Slot]) -> Vec<(Slot, Slot)> {
    let n = tree.ops.len();
    let mut lines: HashMap<&QubitRef, QubitTimeline> = HashMap::new();
    let mut times = vec![(0, 0); n];
    for i in 0..n {
        let op = &tree.ops[i];
        let (consumes, produces) = &q[i];
        let inputs: BTreeSet<&QubitRef> = op
            .children
            .iter()
            .flat_map(|&c| q[c].1.iter())
            .collect();
        let ready = op.children.iter().map(|&c| times[c].1).max().unwrap_or(0);
        let dur = durations[i];
        let touched: BTreeSet<&QubitRef> = consumes.iter().chain(produces.iter()).collect();
        let mut start = ready;
        loop {
            let mut next = start;
            for qr in &touched {
                if inputs.contains(*qr) {
                    continue;
                }
                let line = lines.entry(*qr).or_default();
                let s = if produces.contains(*qr) {
                    start.max(line.last_end())
                } else {
                    line.fit(start, dur)
                };
                next = next.max(s);
            }
            if next == start {
                break;
            }
            start = next;
        }
        let end = start + dur;
        times[i] = (start, end);
        for qr in touched {
            let line = lines.entry(qr).or_default();
            let from = if inputs.contains(qr) {
                line.held_from.take().unwrap_or(start)
            } else {
                start
            };
            if produces.contains(qr) {
                line.held_from = Some(from);
            } else {
                line.busy.push((from, end));
            }
        }
    }
    alap_links(tree, q, &mut times);
    let shift = times.iter().map(|t| t.0).min().unwrap_or(0);
    times.iter().map(|&(s, e)| (s - shift, e - shift)).collect()
}

fn alap_links(tree: &ProtocolTree, q: &[QubitAssignment], times: &mut [(Slot, Slot)]) {
    let parent = tree.parent_of();
    loop {
        let mut moved = false;
        let mut links: Vec<usize> = (0..tree.ops.len())
            .filter(|&i| tree.ops[i].kind == OpKind::Link)
            .collect();
        links.sort_by_key(|&i| std::cmp::Reverse((times[i].0, i)));
        for i in links {
            let (s, e) = times[i];
            let mut latest = parent[i].map(|p| times[p].0).unwrap_or(e);
            let (consumes, produces) = &q[i];
            for qr in consumes.iter().chain(produces.iter()) {
                let next_use = (0..tree.ops.len())
                    .filter(|&j| j != i && times[j].0 >= e)
                    .filter(|&j| q[j].0.contains(qr) || q[j].1.contains(qr))
                    .map(|j| times[j].0)
                    .min();
                if let Some(u) = next_use {
                    latest = latest.min(u);
                }
            }
            if latest > e {
                let d = latest - e;
                times[i] = (s + d, e + d);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Assembles a protocol from a mapped and laid-out tree.
pub fn assemble(
    tree: &ProtocolTree,
    q: Vec<QubitAssignment>,
    times: &[(Slot, Slot)],
) -> RepeaterProtocol {
    let ids = tree.op_ids();
    let ops: Vec<ProtocolOp> = tree
        .ops
        .iter()
        .zip(q)
        .zip(times)
        .zip(&ids)
        .map(|(((op, (consumes, produces)), &(start, end)), id)| ProtocolOp {
            id: id.clone(),
            kind: op.kind,
            nodes: op.nodes.clone(),
            link_fidelity: op.capability.map(|c| c.fidelity),
            consumes,
            produces,
            start,
            end,
        })
        .collect();
    let edges = tree
        .ops
        .iter()
        .enumerate()
        .flat_map(|(i, op)| op.children.iter().map(move |&c| (c, i)))
        .map(|(c, i)| (ids[c].clone(), ids[i].clone()))
        .collect();
    let latency = ops.iter().map(|o| o.end).max().unwrap_or(0);
    RepeaterProtocol {
        src: tree.src.clone(),
        dst: tree.dst.clone(),
        ops,
        edges,
        latency,
        worst_case_fidelity: 0.0,
        success_probability: 1.0,
    }
}

/// Above this many swaps only the two uniform input orders are tried.
const MAX_ORDER_SEARCH_SWAPS: u32 = 10;

/// Full protocol synthesis for one route: pivot decomposition with
/// distillation planning, qubit mapping and layout. With `order_search`
/// every combination of swap input orders is laid out and the one with the
/// smallest latency kept (the first such in mask order on ties). The result is checked
/// against `f_min` under `decay`.
pub fn esss(
    route: &Route,
    f_min: f64,
    t: &Topology,
    cfg: &SelectionConfig,
    decay: &dyn DecayModel,
) -> Result<RepeaterProtocol> {
    let tree = plan_tree(route, f_min, t, cfg)?;
    let swaps = tree.ops.iter().filter(|o| o.kind == OpKind::Swap).count() as u32;
    let masks: Vec<u64> = match (cfg.order_search, swaps) {
        (false, _) | (_, 0) => vec![0],
        (true, s) if s <= MAX_ORDER_SEARCH_SWAPS => (0..1u64 << s).collect(),
        (true, s) => vec![0, (1u64 << s.min(63)) - 1],
    };
    let mut best: Option<RepeaterProtocol> = None;
    let mut first_err = None;
    for mask in masks {
        let variant = tree.with_swapped_inputs(mask);
        let laid_out = map_qubits(&variant, t).and_then(|q| {
            let durations = op_durations(&variant, &q, t, cfg)?;
            let times = layout(&variant, &q, &durations);
            Ok(assemble(&variant, q, &times))
        });
        match laid_out {
            Ok(p) if best.as_ref().is_none_or(|b| p.latency < b.latency) => best = Some(p),
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(mut p) = best else {
        return Err(first_err.expect("at least one order was tried"));
    };
    p.worst_case_fidelity = end_to_end_worst_case(&p, decay)?;
    p.success_probability = fidelity::success_probability(&p, &fidelity::DeterministicOps)?;
    if p.worst_case_fidelity < f_min - FIDELITY_EPS {
        return Err(Error::FidelityShortfall {
            achieved: p.worst_case_fidelity,
            required: f_min,
        });
    }
    Ok(p)
}

/// Routes a demand and synthesises its protocol with perfect memory.
pub fn select_protocol(t: &Topology, d: &Demand, cfg: &SelectionConfig) -> Result<RepeaterProtocol> {
    let r = route(t, d)?;
    esss(&r, d.f_min, t, cfg, &NoDecay)
}
