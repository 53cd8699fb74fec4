//! Schedules and solutions shared by both engines, the verifier and the
//! file formats.

use std::collections::BTreeMap;

use crate::model::{AppId, CopyId, LinkId, NodeId, StreamId, SystemModel, TaskId};
use crate::routing::{overlap_count, route_length, RouteAssignment};

/// Offsets of one stream copy within its period.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CopySchedule {
    /// MAC generation on the sender end-system (secure streams only).
    pub sender_mac: Option<u64>,
    pub links: BTreeMap<LinkId, u64>,
    /// MAC validation per receiving end-system (secure streams only).
    pub receiver_mac: BTreeMap<NodeId, u64>,
}

/// Task and frame offsets; `None` marks entries left unscheduled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub tasks: Vec<Option<u64>>,
    pub copies: Vec<Option<CopySchedule>>,
}

impl Schedule {
    pub fn empty(model: &SystemModel) -> Self {
        Self {
            tasks: vec![None; model.tasks().len()],
            copies: vec![None; model.copies().len()],
        }
    }

    pub fn task(&self, t: TaskId) -> Option<u64> {
        self.tasks[t.0]
    }

    pub fn copy(&self, c: CopyId) -> Option<&CopySchedule> {
        self.copies[c.0].as_ref()
    }

    /// Whether every task and copy of the application has offsets.
    pub fn app_complete(&self, model: &SystemModel, app: AppId) -> bool {
        let a = model.app(app);
        a.tasks.iter().all(|t| self.tasks[t.0].is_some())
            && a.streams
                .iter()
                .all(|&s| model.stream(s).copies.iter().all(|c| self.copies[c.0].is_some()))
    }

    /// Applications with unscheduled entries, ascending.
    pub fn incomplete_apps(&self, model: &SystemModel) -> Vec<AppId> {
        model.app_ids().filter(|&a| !self.app_complete(model, a)).collect()
    }

    /// Distance between the first task start and the last task end.
    pub fn app_latency(&self, model: &SystemModel, app: AppId) -> Option<u64> {
        let mut lo = u64::MAX;
        let mut hi = 0;
        for &t in &model.app(app).tasks {
            let o = self.tasks[t.0]?;
            lo = lo.min(o);
            hi = hi.max(o + model.task(t).wcet);
        }
        (lo != u64::MAX).then(|| hi - lo)
    }
}

/// Duration of a stream copy on a link.
pub fn link_duration(model: &SystemModel, stream: StreamId, link: LinkId) -> u64 {
    model.network.transmission_time(link, model.on_wire_size(stream))
}

/// Duration of MAC generation or validation on an end-system.
pub fn mac_duration(model: &SystemModel, node: NodeId) -> u64 {
    model.network.hash_time(node).unwrap_or(0)
}

/// Routes, key interval and schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub routes: RouteAssignment,
    pub key_interval: u64,
    pub schedule: Schedule,
}

/// Components of the solution cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostBreakdown {
    /// Links shared by copies of one stream, counted per stream and link.
    pub overlaps: u64,
    /// Total number of route links over all copies.
    pub length: u64,
    /// Applications (normal or key distribution) that are not fully scheduled.
    pub infeasible: u64,
    /// Sum of normal application latencies; an incomplete one counts its period.
    pub latency: u64,
}

impl CostBreakdown {
    /// `a * overlaps + length + b * infeasible + latency`.
    pub fn total(&self, a: u64, b: u64) -> u64 {
        a * self.overlaps + self.length + b * self.infeasible + self.latency
    }

    pub fn feasible(&self) -> bool {
        self.overlaps == 0 && self.infeasible == 0
    }
}

/// Cost components of a solution. `model` must have its key interval bound.
pub fn evaluate(model: &SystemModel, solution: &Solution) -> CostBreakdown {
    evaluate_parts(model, &solution.routes, &solution.schedule)
}

/// [`evaluate`] on routes and schedule held separately.
pub fn evaluate_parts(model: &SystemModel, routes: &RouteAssignment, sched: &Schedule) -> CostBreakdown {
    let infeasible = sched.incomplete_apps(model).len() as u64;
    let latency = model
        .normal_apps()
        .map(|a| match sched.app_complete(model, a) {
            true => sched.app_latency(model, a).unwrap_or(0),
            false => model.app_period(a),
        })
        .sum();
    CostBreakdown {
        overlaps: overlap_count(model, routes),
        length: route_length(routes),
        infeasible,
        latency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cost_arithmetic() {
        let c = CostBreakdown {
            overlaps: 1,
            length: 10,
            infeasible: 1,
            latency: 500,
        };
        let base = CostBreakdown {
            overlaps: 0,
            infeasible: 0,
            ..c
        };
        assert_eq!(c.total(50_000, 10_000) - base.total(50_000, 10_000), 60_000);
        assert_eq!(base.total(50_000, 10_000), 510);
        assert!(base.feasible());
        assert!(!c.feasible());
    }

    #[test]
    fn latency_spans_all_tasks() {
        let m = fixtures::motivational_example();
        let mut s = Schedule::empty(&m);
        let app = m.app_by_name("app1").unwrap();
        assert_eq!(s.app_latency(&m, app), None);
        for (i, t) in s.tasks.iter_mut().enumerate() {
            *t = Some(100 * i as u64 + 50);
        }
        // first start 50, last end 350 + 100
        assert_eq!(s.app_latency(&m, app), Some(400));
        assert!(!s.app_complete(&m, app));
    }

    #[test]
    fn durations() {
        let m = fixtures::motivational_example();
        let s1 = m.stream_by_name("s1").unwrap();
        let l = m.network.link_ids().next().unwrap();
        assert_eq!(link_duration(&m, s1, l), 53);
        assert_eq!(mac_duration(&m, m.sender_es(s1)), 10);
    }
}
