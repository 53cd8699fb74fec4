use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::{topological_tasks, Period, SystemModel, TaskId};

/// One violated well-formedness rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

/// Checks every model invariant and returns all violations found.
pub fn validate_model(model: &SystemModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |code: &'static str, message: String| out.push(Diagnostic { code, message });
    let net = &model.network;

    let mut names = HashSet::new();
    for n in net.nodes() {
        if !names.insert(n.name.as_str()) {
            push("duplicate-node", format!("node name {} used twice", n.name));
        }
    }
    for es in net.end_systems() {
        if net.hash_time(es) == Some(0) {
            push("hash-time", format!("end-system {} has zero hash time", net.node_name(es)));
        }
    }
    for l in net.link_ids() {
        let link = net.link(l);
        if link.src.0 >= net.nodes().len() || link.dst.0 >= net.nodes().len() {
            push("link-endpoint", format!("link {} references a missing node", l.0));
            continue;
        }
        if link.src == link.dst {
            push("self-link", format!("self-link on {}", net.node_name(link.src)));
        }
        if *link.speed.numer() == 0 {
            push("link-speed", format!("link {} has zero speed", net.link_name(l)));
        }
        match net.link_between(link.dst, link.src) {
            Some(back) if net.link(back).speed == link.speed => {}
            Some(_) => push(
                "duplex",
                format!("link {} and its reverse differ in speed", net.link_name(l)),
            ),
            None => push("duplex", format!("link {} has no reverse link", net.link_name(l))),
        }
    }

    let c = &model.constants;
    if model.streams().iter().any(|s| s.secure) && (c.key_size == 0 || c.mac_size == 0) {
        push("constants", "key and MAC sizes must be positive with secure streams".into());
    }

    for a in model.app_ids() {
        let app = model.app(a);
        let period = match app.period {
            Period::Fixed(t) => Some(t),
            Period::KeyInterval => model.key_interval(),
        };
        if period == Some(0) {
            push("period", format!("application {} has zero period", app.name));
        }
        for &t in &app.tasks {
            let task = model.task(t);
            if task.es.0 >= net.nodes().len() || !net.is_end_system(task.es) {
                push("task-es", format!("task {} is not mapped to an end-system", task.name));
            }
            if task.wcet == 0 || period.is_some_and(|p| task.wcet > p) {
                push("wcet", format!("task {} violates 0 < wcet <= period", task.name));
            }
        }
        let in_app = |t: TaskId| model.task(t).app == a;
        for &s in &app.streams {
            let st = model.stream(s);
            if st.size > c.mtu {
                push("mtu", format!("stream {} is larger than the MTU", st.name));
            }
            if st.rl == 0 {
                push("redundancy", format!("stream {} has redundancy level 0", st.name));
            }
            if st.receivers.is_empty() {
                push("receivers", format!("stream {} has no receivers", st.name));
            }
            if !in_app(st.sender) || !st.receivers.iter().all(|&r| in_app(r)) {
                push("stream-app", format!("stream {} crosses application boundaries", st.name));
            }
            let src = model.task(st.sender).es;
            if st.receivers.iter().any(|&r| model.task(r).es == src) {
                push("stream-local", format!("stream {} ends on its sender end-system", st.name));
            }
        }
        let mut succ: BTreeMap<TaskId, Vec<(TaskId, u32)>> = BTreeMap::new();
        for &(x, y) in &app.dependencies {
            if !in_app(x) || !in_app(y) {
                push("dependency-app", format!("dependency in {} crosses applications", app.name));
                continue;
            }
            if model.task(x).es != model.task(y).es {
                push(
                    "dependency-es",
                    format!(
                        "dependency {} -> {} spans end-systems without a stream",
                        model.task(x).name,
                        model.task(y).name
                    ),
                );
            }
            succ.entry(x).or_default().push((y, 0));
        }
        for &s in &app.streams {
            let st = model.stream(s);
            for &r in &st.receivers {
                succ.entry(st.sender).or_default().push((r, 0));
            }
        }
        if topological_tasks(&app.tasks, &succ).is_none() {
            push("cycle", format!("application {} contains a cycle", app.name));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn example_is_well_formed() {
        assert_eq!(validate_model(&fixtures::motivational_example()), vec![]);
    }

    #[test]
    fn oversized_stream() {
        let mut m = fixtures::motivational_example();
        m.constants.mtu = 40;
        let d = validate_model(&m);
        // s1 and s2 are both 50 B
        assert_eq!(d.iter().filter(|d| d.code == "mtu").count(), 2);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn cycle_is_reported_once() {
        let mut m = fixtures::motivational_example();
        let app = m.app_by_name("app1").unwrap();
        let t1 = m.task_by_name("t1").unwrap();
        let t3 = m.task_by_name("t3").unwrap();
        m.add_stream(app, "back", t3, &[t1], 10, 1, false);
        let d = validate_model(&m);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].code, "cycle");
    }

    #[test]
    fn missing_reverse_link() {
        let mut m = fixtures::motivational_example();
        let a = m.network.node_by_name("ES1").unwrap();
        let b = m.network.node_by_name("SW2").unwrap();
        m.network.add_directed_link(a, b, super::super::speed_from_mbps(10));
        let d = validate_model(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "duplex");
    }
}
