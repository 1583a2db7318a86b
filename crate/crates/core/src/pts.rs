//! Periodic task scheduling: demands become non-preemptive periodic tasks
//! on one processor per group of protocols that share qubits.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Demand, QubitRef, RepeaterProtocol, Slot};

/// Longest hyperperiod accepted unless configured otherwise.
pub const DEFAULT_HYPERPERIOD_CAP: Slot = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicTask {
    pub task_id: String,
    pub phase: Slot,
    pub wcet: Slot,
    pub period: Slot,
    /// How much earlier than one period after its predecessor an instance may start.
    pub lambda: Option<Slot>,
    /// How much later than one period after its predecessor an instance may start.
    pub eta: Option<Slot>,
}

impl PeriodicTask {
    pub fn new(task_id: &str, wcet: Slot, period: Slot) -> Self {
        PeriodicTask {
            task_id: task_id.to_string(),
            phase: 0,
            wcet,
            period,
            lambda: None,
            eta: None,
        }
    }

    pub fn with_jitter_window(mut self, w: Slot) -> Self {
        self.lambda = Some(w);
        self.eta = Some(w);
        self
    }
}

/// Period in slots for a rate requirement: floor(1 / (t_slot * rate)).
pub fn period_for_rate(rate: f64, t_slot_ms: f64) -> Result<Slot> {
    let per_slot = rate * t_slot_ms / 1000.0;
    if !(rate > 0.0) || !rate.is_finite() || per_slot >= 1.0 - 1e-12 {
        return Err(Error::RateUnsupportable { rate, t_slot_ms });
    }
    Ok((1.0 / per_slot + 1e-9).floor() as Slot)
}

/// Slack around the period allowed by a jitter bound in s^2:
/// floor(sqrt(j_max) / t_slot).
pub fn jitter_window(j_max: f64, t_slot_ms: f64) -> Result<Slot> {
    if !j_max.is_finite() || j_max < 0.0 {
        return Err(Error::InvalidJitter(j_max));
    }
    Ok((j_max.sqrt() * 1000.0 / t_slot_ms + 1e-9).floor() as Slot)
}

pub fn to_task(d: &Demand, p: &RepeaterProtocol, t_slot_ms: f64) -> Result<PeriodicTask> {
    let period = period_for_rate(d.r_min, t_slot_ms)?;
    let wcet = p.latency;
    if wcet > period {
        return Err(Error::LatencyExceedsPeriod { wcet, period });
    }
    let mut task = PeriodicTask::new(&d.id, wcet, period);
    if let Some(j) = d.j_max {
        task = task.with_jitter_window(jitter_window(j, t_slot_ms)?);
    }
    Ok(task)
}

pub fn hyperperiod_of(periods: impl IntoIterator<Item = Slot>, cap: Slot) -> Result<Slot> {
    let mut h: Slot = 1;
    for p in periods {
        if p == 0 {
            return Err(Error::Invalid("zero period".into()));
        }
        h = h.lcm(&p);
        if h > cap {
            return Err(Error::HyperperiodTooLong { cap });
        }
    }
    Ok(h)
}

pub fn hyperperiod(tasks: &[PeriodicTask]) -> Result<Slot> {
    hyperperiod_of(tasks.iter().map(|t| t.period), DEFAULT_HYPERPERIOD_CAP)
}

/// Groups protocols that share qubits, transitively. Components are listed
/// by their smallest member index, members ascending.
pub fn decompose_disjoint(protocols: &[&RepeaterProtocol]) -> Vec<Vec<usize>> {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..protocols.len()).collect();
    let mut owner: HashMap<QubitRef, usize> = HashMap::new();
    for (i, p) in protocols.iter().enumerate() {
        for q in p.qubits() {
            match owner.get(&q) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    owner.insert(q, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..protocols.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub hyperperiod: Slot,
    /// (instance index, start slot), ordered by instance.
    pub starts: BTreeMap<String, Vec<(u32, Slot)>>,
    pub unscheduled: BTreeSet<(String, u32)>,
}

impl TaskSchedule {
    pub fn start_slots(&self, task: &str) -> Vec<Slot> {
        self.starts
            .get(task)
            .map(|v| v.iter().map(|s| s.1).collect())
            .unwrap_or_default()
    }

    /// Combines schedules of disjoint task sets over the same hyperperiod.
    pub fn merge(parts: impl IntoIterator<Item = TaskSchedule>) -> TaskSchedule {
        let mut out = TaskSchedule::default();
        for p in parts {
            out.hyperperiod = out.hyperperiod.max(p.hyperperiod);
            out.starts.extend(p.starts);
            out.unscheduled.extend(p.unscheduled);
        }
        out
    }
}

struct Pending {
    task: usize,
    instance: u32,
    release: Slot,
    deadline: Slot,
}

/// Earliest and latest start allowed by the jitter windows, given what is
/// already placed for the task. Signed, since a window can close before 0.
fn jitter_bounds(task: &PeriodicTask, instance: u32, h: Slot, placed: &[(u32, Slot)]) -> (i64, i64) {
    let (Some(lambda), Some(eta)) = (task.lambda, task.eta) else {
        return (0, i64::MAX);
    };
    let t = task.period as i64;
    let (mut lo, mut hi) = (0i64, i64::MAX);
    if let Some(&(jp, sp)) = placed.last() {
        let base = sp as i64 + (instance - jp) as i64 * t;
        lo = lo.max(base - lambda as i64);
        hi = hi.min(base + eta as i64);
    }
    let count = (h / task.period) as u32;
    if instance + 1 == count {
        if let Some(&(j0, s0)) = placed.first() {
            // The first placed instance recurs one hyperperiod later.
            let base = s0 as i64 + h as i64 - (j0 + count - instance) as i64 * t;
            lo = lo.max(base - eta as i64);
            hi = hi.min(base + lambda as i64);
        }
    }
    (lo, hi)
}

/// Non-preemptive EDF over one hyperperiod on a single processor. Ties on
/// the deadline go to the task listed first, then the earlier instance. An
/// instance that can no longer finish inside its window is dropped.
/// Jitter windows, when a task carries them, further restrict each start
/// relative to the task's previously placed instance.
pub fn np_edf(tasks: &[PeriodicTask], h: Slot) -> TaskSchedule {
    let mut pending: Vec<Pending> = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        for l in 0..(h / t.period) {
            pending.push(Pending {
                task: i,
                instance: l as u32,
                release: t.phase + l * t.period,
                deadline: t.phase + (l + 1) * t.period,
            });
        }
    }
    pending.sort_by_key(|p| (p.deadline, p.task, p.instance));
    let mut placed: Vec<Vec<(u32, Slot)>> = vec![Vec::new(); tasks.len()];
    let mut out = TaskSchedule {
        hyperperiod: h,
        ..Default::default()
    };
    let mut now: Slot = 0;
    while !pending.is_empty() {
        let mut chosen = None;
        let mut next_event = Slot::MAX;
        for (k, p) in pending.iter().enumerate() {
            let (lo, _) = jitter_bounds(&tasks[p.task], p.instance, h, &placed[p.task]);
            let ready = p.release.max(lo.max(0) as Slot);
            if ready <= now {
                chosen = Some(k);
                break;
            }
            next_event = next_event.min(ready);
        }
        let Some(k) = chosen else {
            if next_event == Slot::MAX {
                break;
            }
            now = next_event;
            continue;
        };
        let p = pending.remove(k);
        let task = &tasks[p.task];
        let (_, hi) = jitter_bounds(task, p.instance, h, &placed[p.task]);
        if now + task.wcet > p.deadline || now as i64 > hi {
            out.unscheduled.insert((task.task_id.clone(), p.instance));
            continue;
        }
        placed[p.task].push((p.instance, now));
        now += task.wcet;
    }
    for (i, t) in tasks.iter().enumerate() {
        let mut v = std::mem::take(&mut placed[i]);
        v.sort_unstable();
        out.starts.insert(t.task_id.clone(), v);
    }
    out
}

/// np_edf with every task's jitter window in force; tasks without one are
/// scheduled as in plain np_edf.
pub fn np_edf_jitter(tasks: &[PeriodicTask], h: Slot) -> TaskSchedule {
    np_edf(tasks, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cd_link_protocol, swap_chain_protocol};

    fn starts(s: &TaskSchedule, id: &str) -> Vec<Slot> {
        s.start_slots(id)
    }

    #[test]
    fn task_transformation() {
        let p1 = swap_chain_protocol();
        let d1 = Demand::new("P1", "A", "C", 0.7, 16.0);
        assert_eq!(to_task(&d1, &p1, 10.0).unwrap(), PeriodicTask::new("P1", 5, 6));
        let d2 = Demand::new("P2", "C", "D", 0.7, 16.0);
        assert_eq!(
            to_task(&d2, &cd_link_protocol(), 10.0).unwrap(),
            PeriodicTask::new("P2", 1, 6)
        );
        assert_eq!(period_for_rate(12.5, 10.0).unwrap(), 8);
        assert_eq!(period_for_rate(20.0, 10.0).unwrap(), 5);
        assert_eq!(period_for_rate(0.1953125, 10.0).unwrap(), 512);
        assert!(matches!(
            period_for_rate(100.0, 10.0),
            Err(Error::RateUnsupportable { .. })
        ));
        let fast = Demand::new("P1", "A", "C", 0.7, 25.0);
        assert_eq!(
            to_task(&fast, &p1, 10.0),
            Err(Error::LatencyExceedsPeriod { wcet: 5, period: 4 })
        );
    }

    #[test]
    fn jitter_windows() {
        assert_eq!(jitter_window(0.0, 10.0).unwrap(), 0);
        assert_eq!(jitter_window(0.01f64.powi(2), 10.0).unwrap(), 1);
        assert_eq!(jitter_window((8.0f64 * 0.01).powi(2), 10.0).unwrap(), 8);
        assert!(jitter_window(-1.0, 10.0).is_err());
        assert!(jitter_window(f64::NAN, 10.0).is_err());
        let d = Demand::new("P1", "A", "C", 0.7, 12.5).with_jitter(1.0 / 12.5f64.powi(2));
        let mut p = swap_chain_protocol();
        p.latency = 5;
        let t = to_task(&d, &p, 10.0).unwrap();
        assert_eq!((t.lambda, t.eta), (Some(8), Some(8)));
    }

    #[test]
    fn hyperperiods() {
        assert_eq!(hyperperiod_of([6, 6], DEFAULT_HYPERPERIOD_CAP).unwrap(), 6);
        assert_eq!(hyperperiod_of([8, 512], DEFAULT_HYPERPERIOD_CAP).unwrap(), 512);
        assert_eq!(hyperperiod_of([6, 8], DEFAULT_HYPERPERIOD_CAP).unwrap(), 24);
        assert_eq!(
            hyperperiod_of([1009, 1013, 1019], DEFAULT_HYPERPERIOD_CAP),
            Err(Error::HyperperiodTooLong { cap: 1 << 20 })
        );
    }

    #[test]
    fn decomposition() {
        let p1 = swap_chain_protocol();
        let p2 = cd_link_protocol();
        assert_eq!(decompose_disjoint(&[&p1, &p2]), vec![vec![0, 1]]);

        let mk = |a: &str, b: &str| {
            let mut p = cd_link_protocol();
            p.ops[0].consumes = vec![QubitRef::comm(a, 0), QubitRef::comm(b, 0)];
            p.ops[0].produces = p.ops[0].consumes.clone();
            p
        };
        let (ab, bc, de) = (mk("A", "B"), mk("B", "C"), mk("D", "E"));
        assert_eq!(decompose_disjoint(&[&ab, &de]), vec![vec![0], vec![1]]);
        assert_eq!(decompose_disjoint(&[&ab, &de, &bc]), vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn two_task_edf_schedule() {
        let tasks = [PeriodicTask::new("P1", 5, 6), PeriodicTask::new("P2", 1, 6)];
        let s = np_edf(&tasks, 6);
        assert_eq!(starts(&s, "P1"), [0]);
        assert_eq!(starts(&s, "P2"), [5]);
        assert!(s.unscheduled.is_empty());
    }

    #[test]
    fn overload_drops_an_instance() {
        let tasks = [PeriodicTask::new("a", 4, 6), PeriodicTask::new("b", 4, 6)];
        let s = np_edf(&tasks, 6);
        assert_eq!(starts(&s, "a"), [0]);
        assert_eq!(s.unscheduled, [("b".to_string(), 0)].into());
    }

    #[test]
    fn multiple_instances_respect_windows() {
        let tasks = [PeriodicTask::new("a", 3, 4), PeriodicTask::new("b", 1, 8)];
        let s = np_edf(&tasks, 8);
        assert_eq!(starts(&s, "a"), [0, 4]);
        assert_eq!(starts(&s, "b"), [3]);
    }

    #[test]
    fn zero_jitter_is_exactly_periodic() {
        let tasks = [
            PeriodicTask::new("a", 1, 6).with_jitter_window(0),
            PeriodicTask::new("b", 2, 3).with_jitter_window(0),
        ];
        let s = np_edf_jitter(&tasks, 12);
        let a = starts(&s, "a");
        let b = starts(&s, "b");
        assert!(s.unscheduled.is_empty());
        assert!(a.windows(2).all(|w| w[1] - w[0] == 6));
        assert!(b.windows(2).all(|w| w[1] - w[0] == 3));
        assert_eq!(a[0] + 12 - a[a.len() - 1], 6);
    }

    #[test]
    fn zero_jitter_can_force_drops() {
        // Plain EDF slides b's second instance to slot 4; with a zero window
        // it must start exactly at 3 while a still runs.
        let plain = [PeriodicTask::new("a", 3, 6), PeriodicTask::new("b", 1, 3)];
        let s = np_edf(&plain, 6);
        assert_eq!(starts(&s, "b"), [0, 4]);
        let tight = [
            PeriodicTask::new("a", 3, 6),
            PeriodicTask::new("b", 1, 3).with_jitter_window(0),
        ];
        let s = np_edf_jitter(&tight, 6);
        assert_eq!(starts(&s, "a"), [1]);
        assert_eq!(starts(&s, "b"), [0]);
        assert_eq!(s.unscheduled, [("b".to_string(), 1)].into());
    }

    #[test]
    fn full_window_matches_plain_edf() {
        let plain = [PeriodicTask::new("a", 2, 4), PeriodicTask::new("b", 3, 8)];
        let wide = [
            PeriodicTask::new("a", 2, 4).with_jitter_window(4),
            PeriodicTask::new("b", 3, 8).with_jitter_window(8),
        ];
        assert_eq!(np_edf(&plain, 8), np_edf_jitter(&wide, 8));
    }
}
