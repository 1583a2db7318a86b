//! Resource-constrained project scheduling over qubits.
//!
//! Every protocol becomes an activity-on-node fragment whose activities are
//! its operations plus occupation activities for qubits that hold links
//! between operations. The full network repeats each fragment once per
//! period inside the hyperperiod, with time lags that confine instance `l`
//! to `[l*T, (l+1)*T)`. Lags are end-to-start: `d <= start(to) - end(from) <= d_max`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Demand, QubitRef, RepeaterProtocol, ScheduledInstance, Slot};
use crate::pts::{hyperperiod_of, jitter_window, period_for_rate, DEFAULT_HYPERPERIOD_CAP};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Start,
    End,
    Op(String),
    /// Qubit holding the output of the named op until its next use.
    Occupation { qubit: QubitRef, after: String },
    /// A whole protocol reserved as one block.
    Reservation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub duration: Slot,
    pub resources: BTreeSet<QubitRef>,
    /// None for the global dummies.
    pub demand_id: Option<String>,
    pub instance: Option<u32>,
    pub origin: Origin,
}

impl Activity {
    fn dummy(origin: Origin) -> Self {
        Activity {
            duration: 0,
            resources: BTreeSet::new(),
            demand_id: None,
            instance: None,
            origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeLag {
    pub from: usize,
    pub to: usize,
    pub min_lag: i64,
    /// None is unbounded.
    pub max_lag: Option<i64>,
}

impl TimeLag {
    pub fn exact(from: usize, to: usize, lag: i64) -> Self {
        TimeLag {
            from,
            to,
            min_lag: lag,
            max_lag: Some(lag),
        }
    }

    pub fn rigid(&self) -> bool {
        self.max_lag == Some(self.min_lag)
    }
}

/// One repetition of a protocol fragment inside a full network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceBlock {
    pub demand_id: String,
    pub instance: u32,
    pub period: Slot,
    /// Dummy start and end activity ids.
    pub start: usize,
    pub end: usize,
    pub activities: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityNetwork {
    pub activities: Vec<Activity>,
    pub lags: Vec<TimeLag>,
    pub resources: BTreeSet<QubitRef>,
    pub horizon: Slot,
    pub blocks: Vec<InstanceBlock>,
}

impl ActivityNetwork {
    fn push(&mut self, a: Activity) -> usize {
        self.resources.extend(a.resources.iter().cloned());
        self.activities.push(a);
        self.activities.len() - 1
    }

    /// Global dummy start of a full network, or the fragment's own start.
    pub const START: usize = 0;
    pub const END: usize = 1;

    pub fn count_origin(&self, f: impl Fn(&Origin) -> bool) -> usize {
        self.activities.iter().filter(|a| f(&a.origin)).count()
    }
}

impl fmt::Display for ActivityNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "horizon {}", self.horizon)?;
        for (i, a) in self.activities.iter().enumerate() {
            let who = match (&a.demand_id, a.instance) {
                (Some(d), Some(l)) => format!("{d}#{l}"),
                (Some(d), None) => d.clone(),
                _ => "-".into(),
            };
            let what = match &a.origin {
                Origin::Start => "start".to_string(),
                Origin::End => "end".to_string(),
                Origin::Op(id) => id.clone(),
                Origin::Occupation { qubit, after } => format!("occ({qubit} after {after})"),
                Origin::Reservation => "reserve".to_string(),
            };
            let res: Vec<String> = a.resources.iter().map(|q| q.to_string()).collect();
            writeln!(f, "a{i} {who} {what} p={} [{}]", a.duration, res.join(","))?;
        }
        for l in &self.lags {
            let max = l.max_lag.map_or("inf".to_string(), |m| m.to_string());
            writeln!(f, "a{} -> a{} [{}, {}]", l.from, l.to, l.min_lag, max)?;
        }
        for q in &self.resources {
            let users: Vec<String> = self
                .activities
                .iter()
                .enumerate()
                .filter(|(_, a)| a.resources.contains(q))
                .map(|(i, _)| format!("a{i}"))
                .collect();
            writeln!(f, "{q}: {}", users.join(" "))?;
        }
        Ok(())
    }
}

/// Fragment for one protocol: dummies 0 and 1, one activity per op pinned
/// to its offset, and occupation activities for every stretch in which a
/// qubit holds a link between two uses (or until the protocol ends).
pub fn build_aon(p: &RepeaterProtocol, demand_id: &str) -> Result<ActivityNetwork> {
    if p.ops.is_empty() {
        return Err(Error::EmptyProtocol);
    }
    let mut net = ActivityNetwork {
        horizon: p.latency,
        ..Default::default()
    };
    let tag = |mut a: Activity| {
        a.demand_id = Some(demand_id.to_string());
        a
    };
    net.push(tag(Activity::dummy(Origin::Start)));
    net.push(tag(Activity::dummy(Origin::End)));
    let mut act_of: HashMap<&str, usize> = HashMap::new();
    for op in &p.ops {
        if op.end < op.start || op.end > p.latency {
            return Err(Error::MalformedProtocol(format!("op {} outside [0, L]", op.id)));
        }
        let id = net.push(tag(Activity {
            duration: op.duration(),
            resources: op.qubits().into_iter().cloned().collect(),
            demand_id: None,
            instance: None,
            origin: Origin::Op(op.id.clone()),
        }));
        act_of.insert(op.id.as_str(), id);
        net.lags.push(TimeLag::exact(0, id, op.start as i64));
        if op.end == p.latency {
            net.lags.push(TimeLag::exact(id, 1, 0));
        }
    }
    for h in p.hold_intervals() {
        if h.end == h.start {
            continue;
        }
        let o = net.push(tag(Activity {
            duration: h.end - h.start,
            resources: [h.qubit.clone()].into(),
            demand_id: None,
            instance: None,
            origin: Origin::Occupation {
                qubit: h.qubit.clone(),
                after: h.producer.clone(),
            },
        }));
        net.lags.push(TimeLag::exact(act_of[h.producer.as_str()], o, 0));
        let next = h.consumer.as_deref().map_or(1, |c| act_of[c]);
        net.lags.push(TimeLag::exact(o, next, 0));
    }
    Ok(net)
}

/// Replaces a fragment by one activity reserving every qubit it touches for
/// the whole protocol latency.
pub fn condense_fpr(fragment: &ActivityNetwork) -> ActivityNetwork {
    let demand = fragment.activities.first().and_then(|a| a.demand_id.clone());
    let mut net = ActivityNetwork {
        horizon: fragment.horizon,
        ..Default::default()
    };
    let tag = |mut a: Activity| {
        a.demand_id = demand.clone();
        a
    };
    net.push(tag(Activity::dummy(Origin::Start)));
    net.push(tag(Activity::dummy(Origin::End)));
    let all: BTreeSet<QubitRef> = fragment
        .activities
        .iter()
        .flat_map(|a| a.resources.iter().cloned())
        .collect();
    let a = net.push(tag(Activity {
        duration: fragment.horizon,
        resources: all,
        demand_id: None,
        instance: None,
        origin: Origin::Reservation,
    }));
    net.lags.push(TimeLag::exact(0, a, 0));
    net.lags.push(TimeLag::exact(a, 1, 0));
    net
}

/// Full network over one hyperperiod. Instance `l` of a demand with period
/// `T` and latency `C` gets start lag `[l*T, (l+1)*T - C]` from the global
/// start, so it runs inside its own period.
pub fn build_full_aon(
    pairs: &[(Demand, RepeaterProtocol)],
    t_slot_ms: f64,
    condense: bool,
) -> Result<ActivityNetwork> {
    build_full_aon_capped(pairs, t_slot_ms, condense, DEFAULT_HYPERPERIOD_CAP)
}

pub fn build_full_aon_capped(
    pairs: &[(Demand, RepeaterProtocol)],
    t_slot_ms: f64,
    condense: bool,
    cap: Slot,
) -> Result<ActivityNetwork> {
    let mut periods = Vec::with_capacity(pairs.len());
    for (d, p) in pairs {
        let t = period_for_rate(d.r_min, t_slot_ms)?;
        if p.latency > t {
            return Err(Error::LatencyExceedsPeriod {
                wcet: p.latency,
                period: t,
            });
        }
        periods.push(t);
    }
    let h = hyperperiod_of(periods.iter().copied(), cap)?;
    let mut net = ActivityNetwork {
        horizon: if pairs.is_empty() { 0 } else { h },
        ..Default::default()
    };
    net.push(Activity::dummy(Origin::Start));
    net.push(Activity::dummy(Origin::End));
    for ((d, p), &t) in pairs.iter().zip(&periods) {
        let mut frag = build_aon(p, &d.id)?;
        if condense {
            frag = condense_fpr(&frag);
        }
        let c = p.latency as i64;
        for l in 0..(h / t) {
            let base = net.activities.len();
            let mut ids = Vec::with_capacity(frag.activities.len());
            for a in &frag.activities {
                let mut a = a.clone();
                a.instance = Some(l as u32);
                ids.push(net.push(a));
            }
            for lag in &frag.lags {
                net.lags.push(TimeLag {
                    from: base + lag.from,
                    to: base + lag.to,
                    ..*lag
                });
            }
            let (ti, li) = (t as i64, l as i64);
            net.lags.push(TimeLag {
                from: ActivityNetwork::START,
                to: base,
                min_lag: li * ti,
                max_lag: Some((li + 1) * ti - c),
            });
            net.lags.push(TimeLag {
                from: base + 1,
                to: ActivityNetwork::END,
                min_lag: 0,
                max_lag: None,
            });
            net.blocks.push(InstanceBlock {
                demand_id: d.id.clone(),
                instance: l as u32,
                period: t,
                start: base,
                end: base + 1,
                activities: ids,
            });
        }
    }
    Ok(net)
}

/// Lags between consecutive instance starts of every demand carrying a
/// jitter bound: spacing within `T -/+ floor(sqrt(J)/t_slot)`. The last
/// instance is also tied to the first one of the next cycle, expressed as a
/// lag shifted back by the horizon.
pub fn add_jitter_lags(
    net: &mut ActivityNetwork,
    demands: &[Demand],
    t_slot_ms: f64,
) -> Result<()> {
    let h = net.horizon as i64;
    for d in demands {
        let Some(j) = d.j_max else { continue };
        let w = jitter_window(j, t_slot_ms)? as i64;
        let starts: Vec<(Slot, usize)> = net
            .blocks
            .iter()
            .filter(|b| b.demand_id == d.id)
            .map(|b| (b.period, b.start))
            .collect();
        if starts.len() < 2 {
            continue;
        }
        let t = starts[0].0 as i64;
        for k in 0..starts.len() {
            let (from, to) = (starts[k].1, starts[(k + 1) % starts.len()].1);
            let shift = if k + 1 == starts.len() { h } else { 0 };
            net.lags.push(TimeLag {
                from,
                to,
                min_lag: t - w - shift,
                max_lag: Some(t + w - shift),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AonSchedule {
    pub horizon: Slot,
    /// Start slot of every activity of every placed instance.
    pub starts: Vec<Option<Slot>>,
    pub entries: Vec<ScheduledInstance>,
    pub unscheduled: BTreeSet<(String, u32)>,
}

struct BlockPlan {
    offsets: Vec<(usize, Slot)>,
    earliest: Slot,
    latest: i64,
    deadline: i64,
    order: usize,
}

fn rigid_offsets(net: &ActivityNetwork, b: &InstanceBlock, lags: &[&TimeLag]) -> Result<Vec<(usize, Slot)>> {
    let mut off: HashMap<usize, i64> = HashMap::from([(b.start, 0)]);
    loop {
        let mut changed = false;
        for l in lags {
            let dur = net.activities[l.from].duration as i64;
            match (off.get(&l.from).copied(), off.get(&l.to).copied()) {
                (Some(f), None) => {
                    off.insert(l.to, f + dur + l.min_lag);
                    changed = true;
                }
                (None, Some(t)) => {
                    off.insert(l.from, t - l.min_lag - dur);
                    changed = true;
                }
                (Some(f), Some(t)) if t - f - dur != l.min_lag => {
                    return Err(Error::Network(format!(
                        "inconsistent offsets in {}#{}",
                        b.demand_id, b.instance
                    )));
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::with_capacity(b.activities.len());
    for &a in &b.activities {
        match off.get(&a) {
            Some(&o) if o >= 0 => out.push((a, o as Slot)),
            _ => {
                return Err(Error::Network(format!(
                    "activity a{a} of {}#{} is not pinned to its instance start",
                    b.demand_id, b.instance
                )))
            }
        }
    }
    Ok(out)
}

/// Serial slot-stepping schedule generation. At every slot the released,
/// pending instances are tried in order of deadline, then demand order,
/// then instance; an instance is placed as a whole when every activity's
/// qubits are free for its full duration. Instances whose start window
/// closes unplaced are withdrawn and reported.
pub fn schedule_aon(net: &ActivityNetwork) -> Result<AonSchedule> {
    let h = net.horizon;
    let mut out = AonSchedule {
        horizon: h,
        starts: vec![None; net.activities.len()],
        ..Default::default()
    };
    if net.blocks.is_empty() {
        return Ok(out);
    }
    let block_of: HashMap<usize, usize> = net
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| b.activities.iter().map(move |&a| (a, i)))
        .collect();
    let mut intra: Vec<Vec<&TimeLag>> = vec![Vec::new(); net.blocks.len()];
    // Lags between instance starts: (other block, lag, self is target).
    let mut inter: Vec<Vec<(usize, &TimeLag, bool)>> = vec![Vec::new(); net.blocks.len()];
    let mut window: Vec<(i64, i64)> = vec![(0, i64::MAX); net.blocks.len()];
    for l in &net.lags {
        match (block_of.get(&l.from), block_of.get(&l.to)) {
            (Some(&x), Some(&y)) if x == y => {
                if !l.rigid() {
                    return Err(Error::Network("non-rigid lag inside an instance".into()));
                }
                intra[x].push(l);
            }
            (Some(&x), Some(&y)) => {
                if l.from != net.blocks[x].start || l.to != net.blocks[y].start {
                    return Err(Error::Network("lags between instances must join their starts".into()));
                }
                inter[x].push((y, l, false));
                inter[y].push((x, l, true));
            }
            (None, Some(&y)) if l.from == ActivityNetwork::START && l.to == net.blocks[y].start => {
                let w = &mut window[y];
                w.0 = w.0.max(l.min_lag);
                if let Some(m) = l.max_lag {
                    w.1 = w.1.min(m);
                }
            }
            (Some(_), None) if l.to == ActivityNetwork::END && l.max_lag.is_none() => {}
            _ => return Err(Error::Network(format!("unsupported lag a{} -> a{}", l.from, l.to))),
        }
    }
    let mut plans = Vec::with_capacity(net.blocks.len());
    for (i, b) in net.blocks.iter().enumerate() {
        let offsets = rigid_offsets(net, b, &intra[i])?;
        let span = offsets
            .iter()
            .map(|&(a, o)| o + net.activities[a].duration)
            .max()
            .unwrap_or(0);
        let latest = window[i].1.min(h as i64 - span as i64);
        plans.push(BlockPlan {
            offsets,
            earliest: window[i].0.max(0) as Slot,
            latest,
            deadline: latest.saturating_add(span as i64),
            order: i,
        });
    }
    let demand_rank: HashMap<&str, usize> = net.blocks.iter().enumerate().fold(HashMap::new(), |mut m, (i, b)| {
        m.entry(b.demand_id.as_str()).or_insert(i);
        m
    });
    let mut queue: Vec<usize> = (0..net.blocks.len()).collect();
    queue.sort_by_key(|&i| {
        let b = &net.blocks[i];
        (plans[i].deadline, demand_rank[b.demand_id.as_str()], b.instance, plans[i].order)
    });

    let res_index: HashMap<&QubitRef, usize> = net.resources.iter().enumerate().map(|(i, q)| (q, i)).collect();
    let mut busy = vec![vec![false; h as usize]; net.resources.len()];
    let mut placed: Vec<Option<Slot>> = vec![None; net.blocks.len()];

    let fits = |busy: &Vec<Vec<bool>>, plan: &BlockPlan, x: Slot| {
        plan.offsets.iter().all(|&(a, o)| {
            let act = &net.activities[a];
            act.resources.iter().all(|q| {
                let row = &busy[res_index[q]];
                (x + o..x + o + act.duration).all(|s| !row[s as usize])
            })
        })
    };

    let mut x: Slot = 0;
    while !queue.is_empty() {
        let mut next_release = Slot::MAX;
        let mut k = 0;
        while k < queue.len() {
            let i = queue[k];
            let (lo, hi) = jitter_bounds(i, &inter, &placed);
            let earliest = (plans[i].earliest as i64).max(lo);
            let latest = plans[i].latest.min(hi);
            if (x as i64) > latest || earliest > latest {
                let b = &net.blocks[i];
                out.unscheduled.insert((b.demand_id.clone(), b.instance));
                queue.remove(k);
                continue;
            }
            if (x as i64) < earliest {
                next_release = next_release.min(earliest as Slot);
                k += 1;
                continue;
            }
            if fits(&busy, &plans[i], x) {
                for &(a, o) in &plans[i].offsets {
                    let act = &net.activities[a];
                    for q in &act.resources {
                        for s in x + o..x + o + act.duration {
                            busy[res_index[q]][s as usize] = true;
                        }
                    }
                    out.starts[a] = Some(x + o);
                }
                placed[i] = Some(x);
                queue.remove(k);
                continue;
            }
            next_release = next_release.min(x + 1);
            k += 1;
        }
        if next_release == Slot::MAX {
            break;
        }
        x = next_release.max(x + 1);
    }
    for (i, b) in net.blocks.iter().enumerate() {
        if let Some(s) = placed[i] {
            out.entries.push(ScheduledInstance {
                demand_id: b.demand_id.clone(),
                instance: b.instance,
                start: s,
            });
        }
    }
    out.entries.sort();
    Ok(out)
}

/// Start bounds implied by inter-instance lags, composed along chains of
/// unplaced instances up to the nearest placed one in each direction.
fn jitter_bounds(
    i: usize,
    inter: &[Vec<(usize, &TimeLag, bool)>],
    placed: &[Option<Slot>],
) -> (i64, i64) {
    let (mut lo, mut hi) = (i64::MIN, i64::MAX);
    for backward in [true, false] {
        let (mut cur, mut dmin, mut dmax) = (i, 0i64, Some(0i64));
        let mut seen = BTreeSet::from([i]);
        // Walk lags that point into `cur` (backward) or out of it (forward).
        while let Some(&(other, lag, _)) = inter[cur].iter().find(|(_, _, into)| *into == backward) {
            if !seen.insert(other) {
                break;
            }
            dmin += lag.min_lag;
            dmax = dmax.zip(lag.max_lag).map(|(a, b)| a + b);
            if let Some(s) = placed[other] {
                let s = s as i64;
                if backward {
                    lo = lo.max(s + dmin);
                    if let Some(m) = dmax {
                        hi = hi.min(s + m);
                    }
                } else {
                    hi = hi.min(s - dmin);
                    if let Some(m) = dmax {
                        lo = lo.max(s - m);
                    }
                }
                break;
            }
            cur = other;
        }
    }
    (lo, hi)
}

/// Network-level view of a schedule: placed instances per demand.
pub fn instance_starts(s: &AonSchedule) -> BTreeMap<String, Vec<(u32, Slot)>> {
    let mut m: BTreeMap<String, Vec<(u32, Slot)>> = BTreeMap::new();
    for e in &s.entries {
        m.entry(e.demand_id.clone()).or_default().push((e.instance, e.start));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cd_link_protocol, swap_chain_protocol};

    fn shared_node_pairs(rate: f64) -> Vec<(Demand, RepeaterProtocol)> {
        vec![
            (Demand::new("P1", "A", "C", 0.7, rate), swap_chain_protocol()),
            (Demand::new("P2", "C", "D", 0.7, rate), cd_link_protocol()),
        ]
    }

    #[test]
    fn swap_chain_fragment() {
        let net = build_aon(&swap_chain_protocol(), "P1").unwrap();
        assert_eq!(net.count_origin(|o| matches!(o, Origin::Op(_))), 3);
        let occ: Vec<(String, Slot)> = net
            .activities
            .iter()
            .filter_map(|a| match &a.origin {
                Origin::Occupation { qubit, .. } => Some((qubit.to_string(), a.duration)),
                _ => None,
            })
            .collect();
        assert_eq!(
            occ,
            [("A-comm0".to_string(), 3), ("B-storage0".to_string(), 2), ("C-comm0".to_string(), 1)]
        );
        // j_s pins every op to its offset.
        let pins: Vec<i64> = net
            .lags
            .iter()
            .filter(|l| l.from == 0)
            .map(|l| l.min_lag)
            .collect();
        assert_eq!(pins, [0, 2, 4]);
    }

    #[test]
    fn single_link_fragment() {
        let net = build_aon(&cd_link_protocol(), "P2").unwrap();
        assert_eq!(net.activities.len(), 3);
        assert_eq!(net.lags, [TimeLag::exact(0, 2, 0), TimeLag::exact(2, 1, 0)]);
    }

    #[test]
    fn immediate_consumer_has_no_occupation() {
        let mut p = swap_chain_protocol();
        // L1 now ends right when S1 starts.
        p.ops[0].start = 2;
        p.ops[0].end = 4;
        let net = build_aon(&p, "P1").unwrap();
        assert!(!net
            .activities
            .iter()
            .any(|a| matches!(&a.origin, Origin::Occupation { qubit, .. } if qubit.to_string() == "B-storage0")));
    }

    #[test]
    fn condensed_fragment() {
        let net = condense_fpr(&build_aon(&swap_chain_protocol(), "P1").unwrap());
        assert_eq!(net.activities.len(), 3);
        assert_eq!(net.activities[2].duration, 5);
        assert_eq!(net.activities[2].resources, swap_chain_protocol().qubits());
    }

    #[test]
    fn full_network_instances() {
        let pairs = vec![
            (Demand::new("a", "C", "D", 0.7, 12.5), cd_link_protocol()),
            (Demand::new("b", "C", "D", 0.7, 6.25), cd_link_protocol()),
        ];
        let net = build_full_aon(&pairs, 10.0, false).unwrap();
        assert_eq!(net.horizon, 16);
        let windows: Vec<(i64, Option<i64>)> = net
            .lags
            .iter()
            .filter(|l| l.from == ActivityNetwork::START)
            .map(|l| (l.min_lag, l.max_lag))
            .collect();
        assert_eq!(windows, [(0, Some(7)), (8, Some(15)), (0, Some(15))]);
        let empty = build_full_aon(&[], 10.0, false).unwrap();
        assert_eq!(empty.activities.len(), 2);
        assert_eq!(schedule_aon(&empty).unwrap().entries, vec![]);
        // Three activities per condensed instance plus the two globals.
        let fpr = build_full_aon(&pairs, 10.0, true).unwrap();
        assert_eq!(fpr.activities.len(), 2 + 3 * 3);
    }

    #[test]
    fn shared_node_operation_level_placement() {
        let net = build_full_aon(&shared_node_pairs(20.0), 10.0, false).unwrap();
        assert_eq!(net.horizon, 5);
        let s = schedule_aon(&net).unwrap();
        let m = instance_starts(&s);
        assert_eq!(m["P1"], [(0, 0)]);
        assert_eq!(m["P2"], [(0, 0)]);
        assert!(s.unscheduled.is_empty());
    }

    #[test]
    fn shared_node_reservation_serialises() {
        let net = build_full_aon(&shared_node_pairs(20.0), 10.0, true).unwrap();
        let s = schedule_aon(&net).unwrap();
        assert_eq!(instance_starts(&s)["P1"], [(0, 0)]);
        assert_eq!(s.unscheduled, [("P2".to_string(), 0)].into());
        let net = build_full_aon(&shared_node_pairs(16.0), 10.0, true).unwrap();
        let s = schedule_aon(&net).unwrap();
        assert_eq!(instance_starts(&s)["P2"], [(0, 5)]);
    }

    #[test]
    fn jitter_lags() {
        let d = Demand::new("a", "C", "D", 0.7, 25.0).with_jitter(0.0);
        // A slow companion stretches the hyperperiod to 16 slots.
        let slow = (Demand::new("z", "C", "D", 0.7, 6.25), cd_link_protocol());
        let pairs = vec![(d.clone(), cd_link_protocol()), slow.clone()];
        let mut net = build_full_aon(&pairs, 10.0, false).unwrap();
        add_jitter_lags(&mut net, &[d], 10.0).unwrap();
        let between: Vec<(i64, Option<i64>)> = net
            .lags
            .iter()
            .filter(|l| net.blocks.iter().any(|b| b.start == l.from) && net.blocks.iter().any(|b| b.start == l.to))
            .map(|l| (l.min_lag, l.max_lag))
            .collect();
        assert_eq!(between, [(4, Some(4)), (4, Some(4)), (4, Some(4)), (-12, Some(-12))]);

        let wide = Demand::new("a", "C", "D", 0.7, 25.0).with_jitter(0.0016);
        let mut net = build_full_aon(&[(wide.clone(), cd_link_protocol()), slow], 10.0, false).unwrap();
        add_jitter_lags(&mut net, &[wide], 10.0).unwrap();
        assert!(net.lags.iter().any(|l| l.min_lag == 0 && l.max_lag == Some(8)));
    }

    #[test]
    fn zero_jitter_withdraws_a_late_instance() {
        // a occupies C-comm0 over [1, 5), so b's second instance slides to
        // slot 5 unless its spacing is pinned to exactly 4.
        let a = Demand::new("a", "C", "D", 0.7, 12.5);
        let b = Demand::new("b", "C", "D", 0.7, 25.0).with_jitter(0.0);
        let mut pa = cd_link_protocol();
        pa.ops[0].end = 4;
        pa.latency = 4;
        let pairs = vec![(a.clone(), pa), (b.clone(), cd_link_protocol())];
        let plain = schedule_aon(&build_full_aon(&pairs, 10.0, false).unwrap()).unwrap();
        assert_eq!(instance_starts(&plain)["b"], [(0, 0), (1, 5)]);
        let mut net = build_full_aon(&pairs, 10.0, false).unwrap();
        add_jitter_lags(&mut net, &[a, b], 10.0).unwrap();
        let tight = schedule_aon(&net).unwrap();
        assert_eq!(instance_starts(&tight)["b"], [(0, 0)]);
        assert_eq!(tight.unscheduled, [("b".to_string(), 1)].into());
    }

    #[test]
    fn dump_lists_everything() {
        let net = build_aon(&swap_chain_protocol(), "P1").unwrap();
        let text = net.to_string();
        assert!(text.contains("occ(B-storage0 after L1) p=2"));
        assert!(text.contains("B-storage0: a2 a4 a6"));
    }
}
