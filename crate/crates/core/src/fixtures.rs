//! Small reference networks and protocols: the three-node swap protocol,
//! the single-hop protocol sharing its last node, and the shipped
//! evaluation topologies.

use crate::model::{
    LinkSpec, NodeSpec, OpKind, ProtocolOp, QubitRef, RepeaterProtocol, TimedOp, Topology,
    DEFAULT_LINK_CAPABILITIES,
};

/// A chain of nodes with `comm`/`storage` qubits each, 5 km links with the
/// small-network capability menu. Only the chain ends are end nodes.
pub fn line_topology(names: &[&str], comm: u32, storage: u32) -> Topology {
    let last = names.len().saturating_sub(1);
    let nodes = names
        .iter()
        .enumerate()
        .map(|(i, n)| NodeSpec::new(n, i == 0 || i == last).with_qubits(comm, storage))
        .collect();
    let links = names
        .windows(2)
        .map(|w| LinkSpec::new(w[0], w[1], 5.0, &DEFAULT_LINK_CAPABILITIES))
        .collect();
    Topology { nodes, links }
}

/// Line A-B-C-D where every node is an end node, as in the two-demand example.
pub fn abcd_topology() -> Topology {
    let mut t = line_topology(&["A", "B", "C", "D"], 1, 1);
    for n in &mut t.nodes {
        n.end_node = true;
    }
    t
}

fn op(
    id: &str,
    kind: OpKind,
    nodes: &[&str],
    fid: Option<f64>,
    consumes: Vec<QubitRef>,
    produces: Vec<QubitRef>,
    start: u64,
    end: u64,
) -> ProtocolOp {
    ProtocolOp {
        id: id.into(),
        kind,
        nodes: nodes.iter().map(|s| s.to_string()).collect(),
        link_fidelity: fid,
        consumes,
        produces,
        start,
        end,
    }
}

/// Two 2-slot links A-B and B-C followed by a 1-slot swap at B.
pub fn swap_chain_protocol() -> RepeaterProtocol {
    let (ac, bc, bs, cc) = (
        QubitRef::comm("A", 0),
        QubitRef::comm("B", 0),
        QubitRef::storage("B", 0),
        QubitRef::comm("C", 0),
    );
    RepeaterProtocol {
        src: "A".into(),
        dst: "C".into(),
        ops: vec![
            op(
                "L1",
                OpKind::Link,
                &["A", "B"],
                Some(0.88),
                vec![ac.clone(), bc.clone(), bs.clone()],
                vec![ac.clone(), bs.clone()],
                0,
                2,
            ),
            op(
                "L2",
                OpKind::Link,
                &["B", "C"],
                Some(0.88),
                vec![bc.clone(), cc.clone()],
                vec![bc.clone(), cc.clone()],
                2,
                4,
            ),
            op("S1", OpKind::Swap, &["B"], None, vec![bc, bs], vec![], 4, 5),
        ],
        edges: vec![("L1".into(), "S1".into()), ("L2".into(), "S1".into())],
        latency: 5,
        worst_case_fidelity: 0.7792,
        success_probability: 1.0,
    }
}

/// The same protocol with millisecond offsets at 10 ms slots.
pub fn swap_chain_timed_ops() -> Vec<TimedOp> {
    swap_chain_protocol()
        .ops
        .into_iter()
        .map(|o| TimedOp {
            start_ms: o.start as f64 * 10.0,
            end_ms: o.end as f64 * 10.0,
            id: o.id,
            kind: o.kind,
            nodes: o.nodes,
            link_fidelity: o.link_fidelity,
            consumes: o.consumes,
            produces: o.produces,
        })
        .collect()
}

/// A single one-slot link between C and D.
pub fn cd_link_protocol() -> RepeaterProtocol {
    let (cc, dc) = (QubitRef::comm("C", 0), QubitRef::comm("D", 0));
    RepeaterProtocol {
        src: "C".into(),
        dst: "D".into(),
        ops: vec![op(
            "L1",
            OpKind::Link,
            &["C", "D"],
            Some(0.88),
            vec![cc.clone(), dc.clone()],
            vec![cc, dc],
            0,
            1,
        )],
        edges: vec![],
        latency: 1,
        worst_case_fidelity: 0.88,
        success_probability: 1.0,
    }
}

/// Four end nodes, each attached to one repeater of a four-repeater ring,
/// all links 5 km with the small-network capability menu.
///
/// This is one reading of the symmetric evaluation network: for every path
/// between two end nodes there is a node-disjoint path joining the other two.
pub fn symmetric_ring() -> Topology {
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for i in 1..=4 {
        nodes.push(NodeSpec::new(&format!("E{i}"), true));
    }
    for i in 1..=4 {
        nodes.push(NodeSpec::new(&format!("R{i}"), false));
    }
    for i in 1..=4 {
        links.push(LinkSpec::new(&format!("E{i}"), &format!("R{i}"), 5.0, &DEFAULT_LINK_CAPABILITIES));
    }
    for i in 1..=4 {
        let j = i % 4 + 1;
        links.push(LinkSpec::new(&format!("R{i}"), &format!("R{j}"), 5.0, &DEFAULT_LINK_CAPABILITIES));
    }
    Topology { nodes, links }
}

/// A three-node chain E1-R1-E2.
pub fn line3() -> Topology {
    line_topology(&["E1", "R1", "E2"], 1, 3)
}

/// Approximate stand-in for the national research backbone: fourteen
/// repeaters in a meshed ring, each with an end node 5 km away. Elementary
/// links offer a single (0.999, 1.4 kHz) operating point. Repeater
/// coordinates and fibre lengths are not published; the lengths here are
/// placeholders.
pub fn surfnet_placeholder() -> Topology {
    const CAP: [(f64, f64); 1] = [(0.999, 1400.0)];
    let names = [
        "Amsterdam", "Hilversum", "Utrecht", "Amersfoort", "Zwolle", "Groningen", "Enschede",
        "Arnhem", "Nijmegen", "Eindhoven", "Maastricht", "Breda", "Rotterdam", "Delft",
    ];
    let backbone: [(usize, usize, f64); 19] = [
        (0, 1, 30.0), (1, 3, 25.0), (0, 2, 40.0), (2, 3, 22.0), (3, 4, 70.0), (4, 5, 100.0),
        (4, 6, 75.0), (6, 7, 80.0), (7, 8, 18.0), (2, 7, 60.0), (8, 9, 60.0), (9, 10, 85.0),
        (9, 11, 55.0), (11, 12, 50.0), (12, 13, 12.0), (13, 0, 55.0), (2, 12, 55.0),
        (5, 0, 180.0), (10, 8, 120.0),
    ];
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for n in names {
        nodes.push(NodeSpec::new(&format!("R-{n}"), false));
        nodes.push(NodeSpec::new(&format!("E-{n}"), true));
        links.push(LinkSpec::new(&format!("E-{n}"), &format!("R-{n}"), 5.0, &CAP));
    }
    for (a, b, km) in backbone {
        links.push(LinkSpec::new(
            &format!("R-{}", names[a]),
            &format!("R-{}", names[b]),
            km,
            &CAP,
        ));
    }
    Topology { nodes, links }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_topologies_are_well_formed() {
        for t in [symmetric_ring(), line3(), surfnet_placeholder(), abcd_topology()] {
            t.check().unwrap();
        }
        assert_eq!(symmetric_ring().end_nodes().len(), 4);
    }
}
