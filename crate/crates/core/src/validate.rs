//! Independent schedule checking, QoS metrics and small exhaustive oracles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::FIDELITY_EPS;
use crate::model::{Demand, NetworkSchedule, QubitRef, RepeaterProtocol, Slot};
use crate::pts::{PeriodicTask, TaskSchedule};
use crate::rcpsp::ActivityNetwork;
use crate::schedule::ScheduleOutcome;

/// (demand, instance, operation).
pub type OpRef = (String, u32, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleViolation {
    UnknownDemand(String),
    /// Operations of an instance do not sit at the protocol's offsets.
    OffsetMismatch { demand: String, instance: u32, op: String },
    OutsideHorizon { op: OpRef, end: Slot },
    /// Two operations use one qubit at the same time.
    Overlap { a: OpRef, b: OpRef, qubit: QubitRef, from: Slot, to: Slot },
    /// A qubit holding a link for one operation is touched by another.
    HeldQubitUsed { holder: OpRef, intruder: OpRef, qubit: QubitRef, from: Slot, to: Slot },
}

#[derive(Clone)]
struct Use {
    from: Slot,
    to: Slot,
    owner: OpRef,
    hold: bool,
}

/// Checks a schedule against its protocols: operations at their relative
/// offsets, exclusive qubit use, and no use of a qubit while it holds a link
/// waiting for another operation.
pub fn check_schedule(s: &NetworkSchedule, pairs: &[(Demand, RepeaterProtocol)]) -> Vec<ScheduleViolation> {
    let mut out = Vec::new();
    let protos: HashMap<&str, &RepeaterProtocol> = pairs.iter().map(|(d, p)| (d.id.as_str(), p)).collect();
    let mut by_instance: BTreeMap<(&str, u32), Vec<&crate::model::ScheduledOp>> = BTreeMap::new();
    for op in &s.ops {
        by_instance.entry((op.demand_id.as_str(), op.instance)).or_default().push(op);
    }
    let mut uses: BTreeMap<QubitRef, Vec<Use>> = BTreeMap::new();
    let mut seen_instances = BTreeSet::new();
    for e in &s.entries {
        let Some(p) = protos.get(e.demand_id.as_str()) else {
            out.push(ScheduleViolation::UnknownDemand(e.demand_id.clone()));
            continue;
        };
        seen_instances.insert((e.demand_id.as_str(), e.instance));
        let placed = by_instance.get(&(e.demand_id.as_str(), e.instance)).cloned().unwrap_or_default();
        for op in &p.ops {
            let here = placed.iter().find(|o| o.op_id == op.id);
            let ok = here.is_some_and(|o| o.start == e.start + op.start && o.end == e.start + op.end);
            if !ok {
                out.push(ScheduleViolation::OffsetMismatch {
                    demand: e.demand_id.clone(),
                    instance: e.instance,
                    op: op.id.clone(),
                });
            }
        }
        for h in p.hold_intervals().into_iter().filter(|h| h.end > h.start) {
            uses.entry(h.qubit.clone()).or_default().push(Use {
                from: e.start + h.start,
                to: e.start + h.end,
                owner: (e.demand_id.clone(), e.instance, h.producer.clone()),
                hold: true,
            });
        }
    }
    for (key, ops) in &by_instance {
        if !seen_instances.contains(key) {
            for o in ops {
                out.push(ScheduleViolation::OffsetMismatch {
                    demand: o.demand_id.clone(),
                    instance: o.instance,
                    op: o.op_id.clone(),
                });
            }
        }
    }
    for op in &s.ops {
        let owner = (op.demand_id.clone(), op.instance, op.op_id.clone());
        if op.end > s.length {
            out.push(ScheduleViolation::OutsideHorizon {
                op: owner.clone(),
                end: op.end,
            });
        }
        let Some(p) = protos.get(op.demand_id.as_str()) else { continue };
        let Some(def) = p.op(&op.op_id) else { continue };
        for q in def.qubits() {
            uses.entry(q.clone()).or_default().push(Use {
                from: op.start,
                to: op.end,
                owner: owner.clone(),
                hold: false,
            });
        }
    }
    for (q, list) in uses.iter_mut() {
        list.sort_by(|a, b| (a.from, a.to, &a.owner).cmp(&(b.from, b.to, &b.owner)));
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                let (a, b) = (&list[i], &list[j]);
                if b.from >= a.to {
                    break;
                }
                if a.to <= b.from || b.to <= a.from || a.from == a.to || b.from == b.to {
                    continue;
                }
                let (from, to) = (a.from.max(b.from), a.to.min(b.to));
                let qubit = q.clone();
                let v = match (a.hold, b.hold) {
                    (false, false) => ScheduleViolation::Overlap {
                        a: a.owner.clone(),
                        b: b.owner.clone(),
                        qubit,
                        from,
                        to,
                    },
                    (true, _) => ScheduleViolation::HeldQubitUsed {
                        holder: a.owner.clone(),
                        intruder: b.owner.clone(),
                        qubit,
                        from,
                        to,
                    },
                    (false, true) => ScheduleViolation::HeldQubitUsed {
                        holder: b.owner.clone(),
                        intruder: a.owner.clone(),
                        qubit,
                        from,
                        to,
                    },
                };
                out.push(v);
            }
        }
    }
    out
}

/// Delivered end-to-end links per second over the cyclic schedule.
pub fn throughput(s: &NetworkSchedule, demand_id: &str) -> f64 {
    if s.length == 0 {
        return 0.0;
    }
    let n = s.entries.iter().filter(|e| e.demand_id == demand_id).count();
    n as f64 / (s.length as f64 * s.t_slot_ms / 1000.0)
}

/// Population variance (s^2) of the gaps between consecutive deliveries,
/// the last gap wrapping into the next cycle. A delivery happens one
/// protocol latency after the instance starts. None without deliveries.
pub fn jitter(s: &NetworkSchedule, demand_id: &str, latency: Slot) -> Option<f64> {
    let starts = s.starts_of(demand_id);
    if starts.is_empty() || s.length == 0 {
        return None;
    }
    let deliveries: Vec<i64> = starts.iter().map(|&x| (x + latency) as i64).collect();
    let n = deliveries.len();
    let gaps: Vec<i64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                deliveries[i + 1] - deliveries[i]
            } else {
                deliveries[0] + s.length as i64 - deliveries[i]
            }
        })
        .collect();
    let mean = gaps.iter().sum::<i64>() as f64 / n as f64;
    let var = gaps.iter().map(|&g| (g as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    let t = s.t_slot_ms / 1000.0;
    Some(var * t * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandReport {
    pub r_min: f64,
    pub achieved_rate: f64,
    pub jitter: Option<f64>,
    pub fidelity_ok: bool,
    pub satisfied: bool,
    pub instances_scheduled: u64,
    pub instances_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub per_demand: BTreeMap<String, DemandReport>,
    pub network_throughput: f64,
    pub violations: Vec<ScheduleViolation>,
}

impl ScheduleReport {
    /// One row per demand followed by a `total` row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record([
            "demand_id",
            "r_min",
            "achieved_rate",
            "jitter",
            "fidelity_ok",
            "satisfied",
            "instances_scheduled",
            "instances_dropped",
        ])
        .map_err(io)?;
        for (id, r) in &self.per_demand {
            out.write_record([
                id.clone(),
                r.r_min.to_string(),
                r.achieved_rate.to_string(),
                r.jitter.map(|j| j.to_string()).unwrap_or_default(),
                r.fidelity_ok.to_string(),
                r.satisfied.to_string(),
                r.instances_scheduled.to_string(),
                r.instances_dropped.to_string(),
            ])
            .map_err(io)?;
        }
        let sat = self.per_demand.values().filter(|r| r.satisfied).count();
        out.write_record([
            "total".to_string(),
            self.per_demand.values().map(|r| r.r_min).sum::<f64>().to_string(),
            self.network_throughput.to_string(),
            String::new(),
            String::new(),
            format!("{sat}/{}", self.per_demand.len()),
            self.per_demand.values().map(|r| r.instances_scheduled).sum::<u64>().to_string(),
            self.per_demand.values().map(|r| r.instances_dropped).sum::<u64>().to_string(),
        ])
        .map_err(io)?;
        out.flush()?;
        Ok(())
    }
}

/// Metrics for every demand of a scheduling run. Demands rejected before
/// scheduling appear with zero rate. Rates are scaled by each protocol's
/// success probability (1 for deterministic operations).
pub fn report(outcome: &ScheduleOutcome, pairs: &[(Demand, RepeaterProtocol)]) -> ScheduleReport {
    let s = &outcome.schedule;
    let mut per_demand = BTreeMap::new();
    for (d, p) in pairs {
        let scheduled = s.entries.iter().filter(|e| e.demand_id == d.id).count() as u64;
        let dropped = outcome.unscheduled.iter().filter(|(id, _)| *id == d.id).count() as u64;
        let achieved = throughput(s, &d.id) * p.success_probability;
        let jit = jitter(s, &d.id, p.latency);
        let fidelity_ok = p.worst_case_fidelity >= d.f_min - FIDELITY_EPS;
        let jitter_ok = match (d.j_max, jit) {
            (None, _) => true,
            (Some(jm), Some(j)) => j <= jm + 1e-15,
            (Some(_), None) => false,
        };
        let satisfied = achieved >= d.r_min * (1.0 - 1e-12) && fidelity_ok && jitter_ok;
        per_demand.insert(
            d.id.clone(),
            DemandReport {
                r_min: d.r_min,
                achieved_rate: achieved,
                jitter: jit,
                fidelity_ok,
                satisfied,
                instances_scheduled: scheduled,
                instances_dropped: dropped,
            },
        );
    }
    ScheduleReport {
        network_throughput: per_demand.values().map(|r| r.achieved_rate).sum(),
        per_demand,
        violations: check_schedule(s, pairs),
    }
}

const MAX_TASKS: usize = 3;
const MAX_HORIZON: Slot = 24;
const MAX_ACTIVITIES: usize = 12;

fn instances(tasks: &[PeriodicTask], h: Slot) -> Vec<(usize, u32, Slot, Slot)> {
    let mut v = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        for l in 0..h / t.period {
            v.push((i, l as u32, t.phase + l * t.period, t.phase + (l + 1) * t.period));
        }
    }
    v
}

fn witness(tasks: &[PeriodicTask], h: Slot, jobs: &[(usize, u32, Slot, Slot)], starts: &[Slot]) -> TaskSchedule {
    let mut ts = TaskSchedule {
        hyperperiod: h,
        ..Default::default()
    };
    for t in tasks {
        ts.starts.insert(t.task_id.clone(), vec![]);
    }
    for (k, &(i, l, _, _)) in jobs.iter().enumerate() {
        ts.starts.get_mut(&tasks[i].task_id).unwrap().push((l, starts[k]));
    }
    ts
}

fn check_size(tasks: &[PeriodicTask], h: Slot) -> Result<()> {
    if tasks.len() > MAX_TASKS || h > MAX_HORIZON {
        return Err(Error::OracleTooLarge(format!("{} tasks over {h} slots", tasks.len())));
    }
    Ok(())
}

/// Exhaustive search for a single-processor non-preemptive schedule in which
/// every instance runs inside its period. Any start slot is allowed.
pub fn brute_force_tasks(tasks: &[PeriodicTask], h: Slot) -> Result<Option<TaskSchedule>> {
    check_size(tasks, h)?;
    let jobs = instances(tasks, h);
    let mut starts = vec![0; jobs.len()];
    fn go(k: usize, jobs: &[(usize, u32, Slot, Slot)], tasks: &[PeriodicTask], starts: &mut Vec<Slot>) -> bool {
        if k == jobs.len() {
            return true;
        }
        let (i, _, rel, dl) = jobs[k];
        let c = tasks[i].wcet;
        if rel + c > dl {
            return false;
        }
        for s in rel..=dl - c {
            let clash = (0..k).any(|m| {
                let cm = tasks[jobs[m].0].wcet;
                s < starts[m] + cm && starts[m] < s + c
            });
            if !clash {
                starts[k] = s;
                if go(k + 1, jobs, tasks, starts) {
                    return true;
                }
            }
        }
        false
    }
    Ok(go(0, &jobs, tasks, &mut starts).then(|| witness(tasks, h, &jobs, &starts)))
}

/// Exhaustive search over work-conserving non-preemptive dispatch orders:
/// whenever the processor is free and some instance is released, one of the
/// released instances must start. Feasible when some order meets every
/// deadline.
pub fn brute_force_work_conserving(tasks: &[PeriodicTask], h: Slot) -> Result<Option<TaskSchedule>> {
    check_size(tasks, h)?;
    let jobs = instances(tasks, h);
    let mut starts = vec![0; jobs.len()];
    let mut done = vec![false; jobs.len()];
    fn go(
        now: Slot,
        left: usize,
        jobs: &[(usize, u32, Slot, Slot)],
        tasks: &[PeriodicTask],
        done: &mut Vec<bool>,
        starts: &mut Vec<Slot>,
    ) -> bool {
        if left == 0 {
            return true;
        }
        let released: Vec<usize> = (0..jobs.len()).filter(|&k| !done[k] && jobs[k].2 <= now).collect();
        if released.is_empty() {
            let next = (0..jobs.len()).filter(|&k| !done[k]).map(|k| jobs[k].2).min().unwrap();
            return go(next, left, jobs, tasks, done, starts);
        }
        for k in released {
            let c = tasks[jobs[k].0].wcet;
            if now + c > jobs[k].3 {
                continue;
            }
            done[k] = true;
            starts[k] = now;
            if go(now + c, left - 1, jobs, tasks, done, starts) {
                return true;
            }
            done[k] = false;
        }
        false
    }
    let n = jobs.len();
    Ok(go(0, n, &jobs, tasks, &mut done, &mut starts).then(|| witness(tasks, h, &jobs, &starts)))
}

/// Exhaustive search over activity start slots of a small network: every
/// activity inside the horizon, all time lags met, no qubit used twice at
/// once. Returns one start per activity.
pub fn brute_force_aon(net: &ActivityNetwork) -> Result<Option<Vec<Slot>>> {
    if net.activities.len() > MAX_ACTIVITIES + 2 || net.horizon > MAX_HORIZON {
        return Err(Error::OracleTooLarge(format!(
            "{} activities over {} slots",
            net.activities.len(),
            net.horizon
        )));
    }
    let mut starts: Vec<Slot> = vec![0; net.activities.len()];
    fn ok_so_far(net: &ActivityNetwork, k: usize, starts: &[Slot]) -> bool {
        let a = &net.activities[k];
        for l in &net.lags {
            if l.from > k || l.to > k || (l.from != k && l.to != k) {
                continue;
            }
            let gap = starts[l.to] as i64 - (starts[l.from] + net.activities[l.from].duration) as i64;
            if gap < l.min_lag || l.max_lag.is_some_and(|m| gap > m) {
                return false;
            }
        }
        (0..k).all(|m| {
            let b = &net.activities[m];
            a.resources.is_disjoint(&b.resources)
                || a.duration == 0
                || b.duration == 0
                || starts[k] + a.duration <= starts[m]
                || starts[m] + b.duration <= starts[k]
        })
    }
    fn go(net: &ActivityNetwork, k: usize, starts: &mut Vec<Slot>) -> bool {
        if k == net.activities.len() {
            return true;
        }
        let d = net.activities[k].duration;
        if d > net.horizon {
            return false;
        }
        for s in 0..=net.horizon - d {
            starts[k] = s;
            if ok_so_far(net, k, starts) && go(net, k + 1, starts) {
                return true;
            }
        }
        false
    }
    Ok(go(net, 0, &mut starts).then_some(starts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cd_link_protocol, swap_chain_protocol};
    use crate::model::ScheduledInstance;
    use approx::assert_abs_diff_eq;

    fn shared_node_pairs() -> Vec<(Demand, RepeaterProtocol)> {
        vec![
            (Demand::new("P1", "A", "C", 0.7, 20.0), swap_chain_protocol()),
            (Demand::new("P2", "C", "D", 0.7, 20.0), cd_link_protocol()),
        ]
    }

    fn sched(pairs: &[(Demand, RepeaterProtocol)], len: Slot, starts: &[(&str, u32, Slot)]) -> NetworkSchedule {
        let entries = starts
            .iter()
            .map(|&(d, instance, start)| ScheduledInstance {
                demand_id: d.into(),
                instance,
                start,
            })
            .collect();
        NetworkSchedule::from_starts(10.0, len, entries, |id| {
            pairs.iter().find(|(d, _)| d.id == id).map(|(_, p)| p)
        })
    }

    #[test]
    fn shared_node_valid_placement() {
        let pairs = shared_node_pairs();
        let s = sched(&pairs, 5, &[("P1", 0, 0), ("P2", 0, 0)]);
        assert_eq!(check_schedule(&s, &pairs), vec![]);
        assert_abs_diff_eq!(throughput(&s, "P1"), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(throughput(&s, "P2"), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn overlapping_link_is_caught() {
        let pairs = shared_node_pairs();
        let s = sched(&pairs, 6, &[("P1", 0, 0), ("P2", 0, 2)]);
        let v = check_schedule(&s, &pairs);
        assert!(v.iter().any(|x| matches!(x,
            ScheduleViolation::Overlap { qubit, from: 2, to: 3, .. } if qubit.to_string() == "C-comm0")));
    }

    #[test]
    fn intrusion_on_a_held_link_is_caught() {
        // A foreign single-slot op on B-storage0 at slot 3, while it holds
        // L1's link for S1.
        let mut foreign = cd_link_protocol();
        foreign.ops[0].consumes = vec![QubitRef::storage("B", 0)];
        foreign.ops[0].produces = vec![];
        let mut pairs = shared_node_pairs();
        pairs[1].1 = foreign;
        let s = sched(&pairs, 6, &[("P1", 0, 0), ("P2", 0, 3)]);
        let v = check_schedule(&s, &pairs);
        assert!(v.iter().any(|x| matches!(x,
            ScheduleViolation::HeldQubitUsed { holder, qubit, from: 3, to: 4, .. }
                if holder.2 == "L1" && qubit.to_string() == "B-storage0")));
        assert!(!v.iter().any(|x| matches!(x, ScheduleViolation::Overlap { .. })));
    }

    #[test]
    fn moved_op_breaks_offsets() {
        let pairs = shared_node_pairs();
        let mut s = sched(&pairs, 5, &[("P1", 0, 0), ("P2", 0, 0)]);
        s.ops[1].start += 1;
        s.ops[1].end += 1;
        assert!(check_schedule(&s, &pairs)
            .iter()
            .any(|x| matches!(x, ScheduleViolation::OffsetMismatch { op, .. } if op == "L2")));
    }

    #[test]
    fn rates() {
        let pairs = shared_node_pairs();
        let s = sched(&pairs, 6, &[("P1", 0, 0), ("P2", 0, 5)]);
        assert_eq!(check_schedule(&s, &pairs), vec![]);
        assert_abs_diff_eq!(throughput(&s, "P2"), 100.0 / 6.0, epsilon = 1e-12);
        assert_eq!(throughput(&s, "nobody"), 0.0);
    }

    #[test]
    fn jitter_values() {
        let pairs = vec![(Demand::new("P2", "C", "D", 0.7, 10.0), cd_link_protocol())];
        let even = sched(&pairs, 20, &[("P2", 0, 0), ("P2", 1, 5), ("P2", 2, 10), ("P2", 3, 15)]);
        assert_eq!(jitter(&even, "P2", 1), Some(0.0));
        // Gaps of 4 and 6 slots (40 ms, 60 ms).
        let uneven = sched(&pairs, 20, &[("P2", 0, 0), ("P2", 1, 4), ("P2", 2, 10), ("P2", 3, 14)]);
        assert_abs_diff_eq!(jitter(&uneven, "P2", 1).unwrap(), 1e-4, epsilon = 1e-15);
        let none = sched(&pairs, 20, &[]);
        assert_eq!(jitter(&none, "P2", 1), None);
    }

    #[test]
    fn task_oracles() {
        let two_tasks = [PeriodicTask::new("P1", 5, 6), PeriodicTask::new("P2", 1, 6)];
        let w = brute_force_tasks(&two_tasks, 6).unwrap().unwrap();
        let p1 = w.start_slots("P1");
        let p2 = w.start_slots("P2");
        assert!((p1 == [0] && p2 == [5]) || (p1 == [1] && p2 == [0]));
        assert!(brute_force_work_conserving(&two_tasks, 6).unwrap().is_some());

        let heavy = [PeriodicTask::new("a", 4, 6), PeriodicTask::new("b", 4, 6)];
        assert_eq!(brute_force_tasks(&heavy, 6).unwrap(), None);
        assert_eq!(brute_force_work_conserving(&heavy, 6).unwrap(), None);

        assert!(brute_force_tasks(&[], 1).unwrap().is_some());
        let many = vec![PeriodicTask::new("x", 1, 4); 4];
        assert!(matches!(brute_force_tasks(&many, 4), Err(Error::OracleTooLarge(_))));
    }

    #[test]
    fn aon_oracle_on_shared_node() {
        use crate::rcpsp::build_full_aon;
        let net = build_full_aon(&shared_node_pairs(), 10.0, false).unwrap();
        let w = brute_force_aon(&net).unwrap().expect("shared_node fits in 5 slots");
        assert_eq!(w.len(), net.activities.len());
        let fpr = build_full_aon(&shared_node_pairs(), 10.0, true).unwrap();
        assert_eq!(brute_force_aon(&fpr).unwrap(), None);
    }
}
