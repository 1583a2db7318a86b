//! Werner-state fidelity arithmetic and worst-case protocol evaluation.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{NodeId, OpKind, ProtocolOp, RepeaterProtocol, Slot, Topology};

/// Fidelity of a Werner state with no entanglement left.
pub const SEPARABLE: f64 = 0.25;

/// Slack allowed when comparing a computed fidelity against a requirement.
pub const FIDELITY_EPS: f64 = 1e-12;

fn check_unit(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::Domain {
            value: f,
            domain: "[0, 1]",
        })
    }
}

/// Fidelity after swapping two Werner links.
pub fn swap_fidelity(f1: f64, f2: f64) -> Result<f64> {
    check_unit(f1)?;
    check_unit(f2)?;
    Ok(f1 * f2 + (1.0 - f1) * (1.0 - f2) / 3.0)
}

fn distill_terms(f1: f64, f2: f64) -> (f64, f64) {
    let (e1, e2) = ((1.0 - f1) / 3.0, (1.0 - f2) / 3.0);
    let num = f1 * f2 + e1 * e2;
    let den = f1 * f2 + f1 * e2 + f2 * e1 + 5.0 * e1 * e2;
    (num, den)
}

/// Fidelity after two-to-one distillation of two Werner links.
pub fn distill_fidelity(f1: f64, f2: f64) -> Result<f64> {
    check_unit(f1)?;
    check_unit(f2)?;
    let (num, den) = distill_terms(f1, f2);
    if den <= 0.0 {
        return Err(Error::Domain {
            value: den,
            domain: "distillation success probability > 0",
        });
    }
    Ok(num / den)
}

/// Probability that two-to-one distillation of two Werner links succeeds.
pub fn distill_success_probability(f1: f64, f2: f64) -> Result<f64> {
    check_unit(f1)?;
    check_unit(f2)?;
    Ok(distill_terms(f1, f2).1)
}

/// The fidelity two equal links must have so that swapping them yields
/// `target`.
pub fn required_pre_swap_fidelity(target: f64) -> Result<f64> {
    if !(target > SEPARABLE && target <= 1.0) {
        return Err(Error::Domain {
            value: target,
            domain: "(0.25, 1]",
        });
    }
    // 4x^2 - 2x + (1 - 3 target) = 0, positive root.
    let disc = 12.0 * target - 3.0;
    if disc > 1e-9 {
        return Ok(((1.0 + disc.sqrt()) / 4.0).min(1.0));
    }
    let (mut lo, mut hi) = (SEPARABLE, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid + (1.0 - mid) * (1.0 - mid) / 3.0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Entanglement pumping: each round distills the held link against a
/// fresh base link. The first entry is the base link itself.
pub fn pump_sequence(f_base: f64, rounds: u32) -> Result<Vec<f64>> {
    check_unit(f_base)?;
    let mut out = Vec::with_capacity(rounds as usize);
    let mut f = f_base;
    for k in 0..rounds {
        if k > 0 {
            f = distill_fidelity(f, f_base)?;
        }
        out.push(f);
    }
    Ok(out)
}

/// Limit of [`pump_sequence`] for an unbounded number of rounds.
pub fn pump_fixed_point(f_base: f64) -> Result<f64> {
    check_unit(f_base)?;
    let mut f = f_base;
    for _ in 0..100_000 {
        let next = distill_fidelity(f, f_base)?;
        if (next - f).abs() < 1e-15 {
            return Ok(next);
        }
        f = next;
    }
    Ok(f)
}

/// Nested pumping: `depth` levels of distilling two equal links together.
pub fn nested_pump_fidelity(f_base: f64, depth: u32) -> Result<f64> {
    check_unit(f_base)?;
    let mut g = f_base;
    for _ in 0..depth {
        g = distill_fidelity(g, g)?;
    }
    Ok(g)
}

/// Loss of fidelity while a link is stored.
pub trait DecayModel: Send + Sync {
    /// Fidelity of a link with endpoints `ends` after being held `slots` slots.
    fn decay(&self, fidelity: f64, slots: Slot, ends: (&str, &str)) -> f64;
}

/// Perfect memory.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDecay;

impl DecayModel for NoDecay {
    fn decay(&self, fidelity: f64, _slots: Slot, _ends: (&str, &str)) -> f64 {
        fidelity
    }
}

/// Exponential relaxation towards the separable state, with a per-node
/// rate in 1/ms; a link decays with the sum of its endpoints' rates.
#[derive(Debug, Clone, Default)]
pub struct ExponentialDecay {
    pub t_slot_ms: f64,
    pub default_rate_per_ms: f64,
    pub node_rates_per_ms: HashMap<NodeId, f64>,
}

impl ExponentialDecay {
    pub fn uniform(t_slot_ms: f64, rate_per_ms: f64) -> Self {
        ExponentialDecay {
            t_slot_ms,
            default_rate_per_ms: rate_per_ms,
            node_rates_per_ms: HashMap::new(),
        }
    }

    fn rate(&self, node: &str) -> f64 {
        self.node_rates_per_ms
            .get(node)
            .copied()
            .unwrap_or(self.default_rate_per_ms)
    }
}

impl DecayModel for ExponentialDecay {
    fn decay(&self, fidelity: f64, slots: Slot, ends: (&str, &str)) -> f64 {
        let t = slots as f64 * self.t_slot_ms;
        let k = self.rate(ends.0) + self.rate(ends.1);
        SEPARABLE + (fidelity - SEPARABLE) * (-k * t).exp()
    }
}

/// Per-operation success probabilities.
pub trait SuccessModel: Send + Sync {
    fn link(&self, op: &ProtocolOp) -> f64;
    fn swap(&self, op: &ProtocolOp) -> f64;
    fn distill(&self, op: &ProtocolOp, f1: f64, f2: f64) -> f64;
}

/// Every operation succeeds: deterministic swaps, unit-probability
/// distillation, and link slots sized to succeed.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicOps;

impl SuccessModel for DeterministicOps {
    fn link(&self, _op: &ProtocolOp) -> f64 {
        1.0
    }
    fn swap(&self, _op: &ProtocolOp) -> f64 {
        1.0
    }
    fn distill(&self, _op: &ProtocolOp, _f1: f64, _f2: f64) -> f64 {
        1.0
    }
}

/// Link generation as a Poisson process at the capability rate over the
/// allocated window, and distillation succeeding with its Werner-state
/// probability.
#[derive(Debug, Clone)]
pub struct ProbabilisticOps<'a> {
    pub topology: &'a Topology,
    pub t_slot_ms: f64,
    pub swap_success: f64,
}

impl SuccessModel for ProbabilisticOps<'_> {
    fn link(&self, op: &ProtocolOp) -> f64 {
        let rate = op
            .link_fidelity
            .zip(self.topology.link(&op.nodes[0], &op.nodes[1]))
            .and_then(|(f, l)| {
                l.capabilities
                    .iter()
                    .find(|c| (c.fidelity - f).abs() < 1e-12)
                    .map(|c| c.rate_hz)
            })
            .unwrap_or(0.0);
        let secs = op.duration() as f64 * self.t_slot_ms / 1000.0;
        1.0 - (-rate * secs).exp()
    }
    fn swap(&self, _op: &ProtocolOp) -> f64 {
        self.swap_success
    }
    fn distill(&self, _op: &ProtocolOp, f1: f64, f2: f64) -> f64 {
        distill_success_probability(f1, f2).unwrap_or(0.0)
    }
}

/// Worst-case fidelity of every operation's output link in a protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityTrace {
    /// (operation id, fidelity of the inputs as consumed, output fidelity)
    pub steps: Vec<(String, Vec<f64>, f64)>,
    pub sink: String,
    pub end_to_end: f64,
}

impl fmt::Display for FidelityTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (op, inputs, out) in &self.steps {
            let ins: Vec<String> = inputs.iter().map(|x| format!("{x:.6}")).collect();
            writeln!(f, "{op:>8}: [{}] -> {out:.6}", ins.join(", "))?;
        }
        write!(f, "end-to-end ({}) = {:.6}", self.sink, self.end_to_end)
    }
}

/// Walks the protocol in topological order. Every elementary link is taken
/// to exist from the start of its generation window, and every output decays
/// while it waits for the operation consuming it.
pub fn fidelity_trace(p: &RepeaterProtocol, decay: &dyn DecayModel) -> Result<FidelityTrace> {
    if p.ops.is_empty() {
        return Err(Error::EmptyProtocol);
    }
    let order = p
        .topological_order()
        .ok_or_else(|| Error::MalformedProtocol("cycle or dangling edge".into()))?;
    let idx = p.op_index();
    let sinks: Vec<usize> = (0..p.ops.len())
        .filter(|&i| p.successors(&p.ops[i].id).next().is_none())
        .collect();
    if sinks.len() != 1 {
        return Err(Error::MalformedProtocol(format!(
            "expected one end-to-end output, found {}",
            sinks.len()
        )));
    }
    let n = p.ops.len();
    let mut out = vec![0.0; n];
    let mut ends: Vec<(NodeId, NodeId)> = vec![(String::new(), String::new()); n];
    // Instant from which each output is stored.
    let mut ready: Vec<Slot> = vec![0; n];
    let mut steps = Vec::with_capacity(n);
    for &i in &order {
        let op = &p.ops[i];
        let preds: Vec<usize> = p.predecessors(&op.id).map(|x| idx[x]).collect();
        let inputs: Vec<f64> = preds
            .iter()
            .map(|&j| {
                let held = op.start.saturating_sub(ready[j]);
                decay.decay(out[j], held, (&ends[j].0, &ends[j].1))
            })
            .collect();
        let (f, e) = match op.kind {
            OpKind::Link => {
                let f = op.link_fidelity.ok_or_else(|| {
                    Error::MalformedProtocol(format!("link {} without fidelity", op.id))
                })?;
                if op.nodes.len() != 2 {
                    return Err(Error::MalformedProtocol(format!("link {} needs two nodes", op.id)));
                }
                ready[i] = op.start;
                (f, (op.nodes[0].clone(), op.nodes[1].clone()))
            }
            OpKind::Swap | OpKind::Distill => {
                if inputs.len() != 2 {
                    return Err(Error::MalformedProtocol(format!(
                        "{} combines {} links, expected 2",
                        op.id,
                        inputs.len()
                    )));
                }
                ready[i] = op.end;
                if op.kind == OpKind::Swap {
                    let (a, b) = (&ends[preds[0]], &ends[preds[1]]);
                    let mid = op.nodes.first().cloned().unwrap_or_default();
                    let outer: Vec<NodeId> = [&a.0, &a.1, &b.0, &b.1]
                        .into_iter()
                        .filter(|x| **x != mid)
                        .cloned()
                        .collect();
                    let e = (
                        outer.first().cloned().unwrap_or_default(),
                        outer.get(1).cloned().unwrap_or_default(),
                    );
                    (swap_fidelity(inputs[0], inputs[1])?, e)
                } else {
                    (
                        distill_fidelity(inputs[0], inputs[1])?,
                        ends[preds[0]].clone(),
                    )
                }
            }
        };
        out[i] = f;
        ends[i] = e;
        steps.push((op.id.clone(), inputs, f));
    }
    let sink = sinks[0];
    Ok(FidelityTrace {
        steps,
        sink: p.ops[sink].id.clone(),
        end_to_end: out[sink],
    })
}

/// Worst-case fidelity of the end-to-end link a protocol delivers.
pub fn end_to_end_worst_case(p: &RepeaterProtocol, decay: &dyn DecayModel) -> Result<f64> {
    fidelity_trace(p, decay).map(|t| t.end_to_end)
}

/// Product of the per-operation success probabilities.
pub fn success_probability(p: &RepeaterProtocol, m: &dyn SuccessModel) -> Result<f64> {
    let trace = fidelity_trace(p, &NoDecay)?;
    let inputs: HashMap<&str, &Vec<f64>> =
        trace.steps.iter().map(|(id, ins, _)| (id.as_str(), ins)).collect();
    Ok(p.ops
        .iter()
        .map(|op| match op.kind {
            OpKind::Link => m.link(op),
            OpKind::Swap => m.swap(op),
            OpKind::Distill => {
                let ins = inputs[op.id.as_str()];
                m.distill(op, ins[0], ins[1])
            }
        })
        .product())
}
