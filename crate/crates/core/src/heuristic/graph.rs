//! Per-application precedence graphs with stream copies as nodes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::model::{AppId, CopyId, SystemModel, TaskId};

/// A node of the precedence graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entry {
    Task(TaskId),
    Copy(CopyId),
}

#[derive(Clone, Debug, Default)]
pub struct AppGraph {
    pub nodes: Vec<Entry>,
    pub edges: Vec<(Entry, Entry)>,
    /// A topological order; tasks before copies whenever both are ready.
    pub order: Vec<Entry>,
}

impl AppGraph {
    pub fn predecessors(&self, e: Entry) -> impl Iterator<Item = Entry> + '_ {
        self.edges.iter().filter(move |(_, y)| *y == e).map(|&(x, _)| x)
    }

    pub fn successors(&self, e: Entry) -> impl Iterator<Item = Entry> + '_ {
        self.edges.iter().filter(move |(x, _)| *x == e).map(|&(_, y)| y)
    }
}

#[derive(Clone, Debug, Default)]
pub struct PrecedenceGraph {
    pub apps: Vec<AppGraph>,
}

impl PrecedenceGraph {
    pub fn app(&self, a: AppId) -> &AppGraph {
        &self.apps[a.0]
    }

    /// Security applications first, then normal ones, each by id.
    pub fn initial_order(model: &SystemModel) -> Vec<AppId> {
        model.security_apps().chain(model.normal_apps()).collect()
    }
}

/// Builds one DAG per application. Cyclic applications get an empty order.
pub fn build_precedence_graph(model: &SystemModel) -> PrecedenceGraph {
    let apps = model.app_ids().map(|a| app_graph(model, a)).collect();
    PrecedenceGraph { apps }
}

fn app_graph(model: &SystemModel, a: AppId) -> AppGraph {
    let app = model.app(a);
    let mut nodes: Vec<Entry> = app.tasks.iter().map(|&t| Entry::Task(t)).collect();
    let mut edges = Vec::new();
    for &(x, y) in &app.dependencies {
        edges.push((Entry::Task(x), Entry::Task(y)));
    }
    for &s in &app.streams {
        let st = model.stream(s);
        for &c in &st.copies {
            nodes.push(Entry::Copy(c));
            edges.push((Entry::Task(st.sender), Entry::Copy(c)));
            for &r in &st.receivers {
                edges.push((Entry::Copy(c), Entry::Task(r)));
            }
        }
    }
    let order = topological(&nodes, &edges);
    AppGraph {
        nodes,
        edges,
        order,
    }
}

fn key(e: Entry) -> (bool, usize) {
    match e {
        Entry::Task(t) => (false, t.0),
        Entry::Copy(c) => (true, c.0),
    }
}

fn topological(nodes: &[Entry], edges: &[(Entry, Entry)]) -> Vec<Entry> {
    let mut indeg: BTreeMap<Entry, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut succ: BTreeMap<Entry, Vec<Entry>> = BTreeMap::new();
    for &(x, y) in edges {
        *indeg.get_mut(&y).expect("edge inside app") += 1;
        succ.entry(x).or_default().push(y);
    }
    let mut ready: BinaryHeap<Reverse<((bool, usize), Entry)>> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| Reverse((key(n), n)))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse((_, n))) = ready.pop() {
        order.push(n);
        for &m in succ.get(&n).into_iter().flatten() {
            let d = indeg.get_mut(&m).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse((key(m), m)));
            }
        }
    }
    if order.len() != nodes.len() {
        return Vec::new();
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::expand_security_model;

    #[test]
    fn example_graph_nodes() {
        let m = fixtures::motivational_example();
        let g = build_precedence_graph(&m);
        let names: Vec<String> = g.apps[0]
            .order
            .iter()
            .map(|&e| match e {
                Entry::Task(t) => m.task(t).name.clone(),
                Entry::Copy(c) => m.copy_name(c),
            })
            .collect();
        assert_eq!(names, ["t1", "t2", "s1#0", "s2#0", "s2#1", "t3", "t4"]);
        // sender edge plus one edge per receiver for every copy
        assert_eq!(g.apps[0].edges.len(), 2 + 3 + 3);
    }

    #[test]
    fn single_task_app() {
        let mut m = fixtures::motivational_example();
        let a = m.add_application("solo", 500);
        let es = m.network.node_by_name("ES1").unwrap();
        let t = m.add_task(a, "x", es, 10);
        let g = build_precedence_graph(&m);
        assert_eq!(g.app(a).order, vec![Entry::Task(t)]);
        assert!(g.app(a).edges.is_empty());
    }

    #[test]
    fn security_apps_lead_and_orders_are_topological() {
        let m = expand_security_model(&fixtures::motivational_example()).unwrap();
        let apps = PrecedenceGraph::initial_order(&m);
        assert!(m.app(apps[0]).is_security());
        assert!(!m.app(*apps.last().unwrap()).is_security());
        let g = build_precedence_graph(&m);
        for ag in &g.apps {
            assert_eq!(ag.order.len(), ag.nodes.len());
            let pos = |e| ag.order.iter().position(|&x| x == e).unwrap();
            for &(x, y) in &ag.edges {
                assert!(pos(x) < pos(y));
            }
        }
    }
}
