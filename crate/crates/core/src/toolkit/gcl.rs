//! Gate control lists for the scheduled traffic class.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{LinkId, SystemModel};
use crate::schedule::{link_duration, Solution};
use crate::verify::{verify_solution, VerifyOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateEntry {
    /// Microseconds from the start of the hyperperiod.
    pub time: u64,
    pub open: bool,
}

/// Gate schedule of one egress port over one hyperperiod.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateControlList {
    pub link: LinkId,
    pub port: String,
    pub cycle: u64,
    pub entries: Vec<GateEntry>,
}

impl fmt::Display for GateControlList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "port {} cycle {}", self.port, self.cycle)?;
        for e in &self.entries {
            writeln!(f, "  {:>10} {}", e.time, if e.open { "open" } else { "close" })?;
        }
        Ok(())
    }
}

/// Every frame transmission of the hyperperiod per link, with back-to-back
/// frames merged into one window.
pub fn link_windows(model: &SystemModel, sol: &Solution) -> Result<BTreeMap<LinkId, Vec<(u64, u64)>>> {
    let h = model.hyperperiod()?;
    let mut raw: BTreeMap<LinkId, Vec<(u64, u64)>> = model.network.link_ids().map(|l| (l, Vec::new())).collect();
    for c in model.copy_ids() {
        let Some(cs) = sol.schedule.copy(c) else { continue };
        let stream = model.copy(c).stream;
        let period = model.copy_period(c);
        for (&l, &o) in &cs.links {
            let len = link_duration(model, stream, l);
            for k in 0..h / period {
                raw.get_mut(&l).expect("known link").push((o + k * period, o + k * period + len));
            }
        }
    }
    for w in raw.values_mut() {
        w.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(w.len());
        for &(s, e) in w.iter() {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        *w = merged;
    }
    Ok(raw)
}

/// Gate control lists for every egress link. Refuses solutions that do not
/// verify cleanly.
pub fn export_gcl(model: &SystemModel, sol: &Solution) -> Result<Vec<GateControlList>> {
    let report = verify_solution(model, sol, VerifyOptions::default());
    if !report.is_ok() {
        return Err(Error::Export(format!(
            "solution has {} violations and {} unscheduled applications",
            report.violations.len(),
            report.unscheduled.len()
        )));
    }
    let cycle = model.hyperperiod()?;
    Ok(link_windows(model, sol)?
        .into_iter()
        .map(|(link, windows)| GateControlList {
            link,
            port: model.network.link_name(link),
            cycle,
            entries: windows
                .iter()
                .flat_map(|&(s, e)| [GateEntry { time: s, open: true }, GateEntry { time: e, open: false }])
                .collect(),
        })
        .collect())
}

/// Open windows encoded by a gate control list.
pub fn frames(gcl: &GateControlList) -> Vec<(u64, u64)> {
    gcl.entries
        .chunks(2)
        .filter_map(|p| match p {
            [a, b] if a.open && !b.open => Some((a.time, b.time)),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{speed_from_mbps, GlobalConstants, Network};
    use crate::routing::{RouteAssignment, RouteTree};
    use crate::schedule::{CopySchedule, Schedule};

    /// One link ES0 -> ES1 at 1 byte/us carrying the given frames
    /// (offset, bytes, period).
    fn one_link(frames: &[(u64, u64, u64)]) -> (SystemModel, Solution) {
        let mut net = Network::new();
        let a = net.add_end_system("ES0", 10);
        let b = net.add_end_system("ES1", 10);
        net.connect(a, b, speed_from_mbps(8));
        let mut m = SystemModel::new(net, GlobalConstants::default());
        let mut trees = Vec::new();
        let mut sched_copies = Vec::new();
        let mut tasks = Vec::new();
        for (i, &(o, size, period)) in frames.iter().enumerate() {
            let app = m.add_application(&format!("a{i}"), period);
            let x = m.add_task(app, &format!("x{i}"), a, 1);
            let y = m.add_task(app, &format!("y{i}"), b, 1);
            m.add_stream(app, &format!("s{i}"), x, &[y], size, 1, false);
            let mut t = RouteTree::new(a);
            t.add_path(&[a, b]);
            trees.push(t);
            let l = m.network.link_between(a, b).unwrap();
            sched_copies.push(Some(CopySchedule {
                sender_mac: None,
                links: [(l, o)].into(),
                receiver_mac: Default::default(),
            }));
            tasks.push(Some(o - 1));
            tasks.push(Some(o + size));
        }
        let h = m.hyperperiod().unwrap();
        let m = m.with_key_interval(h);
        let sol = Solution {
            routes: RouteAssignment::new(trees),
            key_interval: m.hyperperiod().unwrap(),
            schedule: Schedule { tasks, copies: sched_copies },
        };
        (m, sol)
    }

    fn gcl_of(m: &SystemModel, sol: &Solution, port: &str) -> GateControlList {
        export_gcl(m, sol).unwrap().into_iter().find(|g| g.port == port).unwrap()
    }

    #[test]
    fn repetitions_over_the_hyperperiod() {
        let (m, sol) = one_link(&[(100, 50, 500), (800, 10, 1000)]);
        let g = gcl_of(&m, &sol, "ES0->ES1");
        let opens: Vec<u64> = g.entries.iter().filter(|e| e.open).map(|e| e.time).collect();
        assert_eq!(opens, [100, 600, 800]);
        assert_eq!(frames(&g), [(100, 150), (600, 650), (800, 810)]);
        assert!(g.entries.windows(2).all(|w| w[0].time < w[1].time && w[0].open != w[1].open));
    }

    #[test]
    fn empty_link_has_no_entries() {
        let (m, sol) = one_link(&[(100, 50, 500)]);
        assert!(gcl_of(&m, &sol, "ES1->ES0").entries.is_empty());
    }

    #[test]
    fn adjacent_frames_merge() {
        let (m, sol) = one_link(&[(10, 10, 1000), (20, 10, 1000)]);
        let g = gcl_of(&m, &sol, "ES0->ES1");
        assert_eq!(frames(&g), [(10, 30)]);
    }

    #[test]
    fn infeasible_solution_refused() {
        let (m, sol) = one_link(&[(10, 10, 1000), (15, 10, 1000)]);
        assert!(matches!(export_gcl(&m, &sol), Err(Error::Export(_))));
    }
}
