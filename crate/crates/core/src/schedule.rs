//! One entry point for the three scheduling heuristics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Demand, NetworkSchedule, RepeaterProtocol, ScheduledInstance, Slot};
use crate::pts::{decompose_disjoint, hyperperiod_of, np_edf, to_task, TaskSchedule, DEFAULT_HYPERPERIOD_CAP};
use crate::rcpsp::{add_jitter_lags, build_full_aon_capped, schedule_aon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheduler {
    #[serde(rename = "pts-np-edf")]
    PtsNpEdf,
    #[serde(rename = "rcpsp-np-edf")]
    RcpspNpEdf,
    #[serde(rename = "rcpsp-np-fpr")]
    RcpspNpFpr,
}

impl Scheduler {
    pub const ALL: [Scheduler; 3] = [Scheduler::PtsNpEdf, Scheduler::RcpspNpEdf, Scheduler::RcpspNpFpr];

    pub fn name(self) -> &'static str {
        match self {
            Scheduler::PtsNpEdf => "pts-np-edf",
            Scheduler::RcpspNpEdf => "rcpsp-np-edf",
            Scheduler::RcpspNpFpr => "rcpsp-np-fpr",
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheduler::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown scheduler {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub schedule: NetworkSchedule,
    /// Period in slots of every demand that became a task.
    pub periods: BTreeMap<String, Slot>,
    /// Instances that could not be placed.
    pub unscheduled: BTreeSet<(String, u32)>,
    /// Demands refused before scheduling, with the reason.
    pub rejected: Vec<(String, String)>,
}

impl ScheduleOutcome {
    pub fn instances_of(&self, demand_id: &str) -> u64 {
        self.periods
            .get(demand_id)
            .map_or(0, |t| self.schedule.length / t)
    }
}

/// Turns demands into periodic work and schedules one hyperperiod. Demands
/// whose rate cannot be met by any periodic placement of their protocol are
/// rejected up front and reported.
pub fn run_scheduler(
    pairs: &[(Demand, RepeaterProtocol)],
    scheduler: Scheduler,
    t_slot_ms: f64,
) -> Result<ScheduleOutcome> {
    let mut accepted = Vec::new();
    let mut tasks = Vec::new();
    let mut rejected = Vec::new();
    for (d, p) in pairs {
        match to_task(d, p, t_slot_ms) {
            Ok(t) => {
                tasks.push(t);
                accepted.push((d.clone(), p.clone()));
            }
            Err(e) => rejected.push((d.id.clone(), e.to_string())),
        }
    }
    let h = if tasks.is_empty() {
        0
    } else {
        hyperperiod_of(tasks.iter().map(|t| t.period), DEFAULT_HYPERPERIOD_CAP)?
    };
    let periods = tasks.iter().map(|t| (t.task_id.clone(), t.period)).collect();
    let (entries, unscheduled) = match scheduler {
        Scheduler::PtsNpEdf => {
            let protos: Vec<&RepeaterProtocol> = accepted.iter().map(|(_, p)| p).collect();
            let parts = decompose_disjoint(&protos).into_iter().map(|members| {
                let group: Vec<_> = members.iter().map(|&i| tasks[i].clone()).collect();
                np_edf(&group, h)
            });
            let merged = TaskSchedule::merge(parts);
            let entries = merged
                .starts
                .iter()
                .flat_map(|(id, v)| {
                    v.iter().map(move |&(instance, start)| ScheduledInstance {
                        demand_id: id.clone(),
                        instance,
                        start,
                    })
                })
                .collect();
            (entries, merged.unscheduled)
        }
        Scheduler::RcpspNpEdf | Scheduler::RcpspNpFpr => {
            let condense = scheduler == Scheduler::RcpspNpFpr;
            let mut net = build_full_aon_capped(&accepted, t_slot_ms, condense, DEFAULT_HYPERPERIOD_CAP)?;
            let demands: Vec<Demand> = accepted.iter().map(|(d, _)| d.clone()).collect();
            add_jitter_lags(&mut net, &demands, t_slot_ms)?;
            let s = schedule_aon(&net)?;
            (s.entries, s.unscheduled)
        }
    };
    let lookup = |id: &str| accepted.iter().find(|(d, _)| d.id == id).map(|(_, p)| p);
    Ok(ScheduleOutcome {
        schedule: NetworkSchedule::from_starts(t_slot_ms, h, entries, lookup),
        periods,
        unscheduled,
        rejected,
    })
}
