//! Branch-and-bound over candidate paths for every (copy, receiver) pair.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::paths::{all_simple_paths, disjoint_paths, k_shortest_paths, path_links, Path};
use super::{stream_rate, RouteAssignment, RouteTree, RoutingMode, RELAXED_OVERLAP_WEIGHT};
use crate::error::{Error, Result};
use crate::model::{LinkId, NodeId, StreamId, SystemModel};

#[derive(Clone, Debug)]
pub struct ExactRoutingOptions {
    pub mode: RoutingMode,
    /// Candidate paths per (copy, receiver); `None` enumerates every path.
    pub k: Option<usize>,
    pub node_limit: u64,
    pub time_limit: Duration,
}

impl Default for ExactRoutingOptions {
    fn default() -> Self {
        Self {
            mode: RoutingMode::Strict,
            k: Some(8),
            node_limit: 5_000_000,
            time_limit: Duration::from_secs(30),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoutingOutcome {
    pub routes: RouteAssignment,
    pub cost: u64,
    /// True when the search finished, i.e. the result is optimal over the
    /// candidate paths.
    pub optimal: bool,
}

struct StreamData {
    id: StreamId,
    sender: NodeId,
    copies: usize,
    /// candidates[r] for the r-th receiver end-system
    candidates: Vec<Vec<(Path, Vec<LinkId>)>>,
    rate: Option<f64>,
    /// lower bound on the links of one copy
    copy_lb: u64,
}

struct Search<'a> {
    model: &'a SystemModel,
    mode: RoutingMode,
    streams: Vec<&'a StreamData>,
    check_bw: bool,
    rest_lb: Vec<u64>,
    trees: Vec<Vec<RouteTree>>,
    first_choice: Vec<Vec<usize>>,
    link_use: Vec<HashMap<LinkId, u32>>,
    load: HashMap<LinkId, f64>,
    cost: u64,
    best: Option<(u64, Vec<Vec<RouteTree>>)>,
    nodes: u64,
    node_limit: u64,
    deadline: Instant,
    aborted: bool,
}

impl<'a> Search<'a> {
    fn new(
        model: &'a SystemModel,
        mode: RoutingMode,
        streams: Vec<&'a StreamData>,
        check_bw: bool,
        rest_lb: Vec<u64>,
        node_limit: u64,
        deadline: Instant,
    ) -> Self {
        let trees = streams
            .iter()
            .map(|s| vec![RouteTree::new(s.sender); s.copies])
            .collect();
        let first_choice = streams.iter().map(|s| vec![0; s.copies]).collect();
        let link_use = streams.iter().map(|_| HashMap::new()).collect();
        Self {
            model,
            mode,
            streams,
            check_bw,
            rest_lb,
            trees,
            first_choice,
            link_use,
            load: HashMap::new(),
            cost: 0,
            best: None,
            nodes: 0,
            node_limit,
            deadline,
            aborted: false,
        }
    }

    fn bound(&self, si: usize, ci: usize) -> u64 {
        let s = self.streams[si];
        let later = (s.copies - ci - 1) as u64 * s.copy_lb;
        self.cost + later + self.rest_lb[si + 1]
    }

    fn run(&mut self) {
        self.dfs(0, 0, 0);
    }

    fn dfs(&mut self, si: usize, ci: usize, ri: usize) {
        if si == self.streams.len() {
            if self.best.as_ref().is_none_or(|(c, _)| self.cost < *c) {
                self.best = Some((self.cost, self.trees.clone()));
            }
            return;
        }
        let s = self.streams[si];
        if ci == s.copies {
            return self.dfs(si + 1, 0, 0);
        }
        if ri == s.candidates.len() {
            return self.dfs(si, ci + 1, 0);
        }
        self.nodes += 1;
        if self.nodes > self.node_limit || (self.nodes.is_multiple_of(1024) && Instant::now() > self.deadline) {
            self.aborted = true;
        }
        if self.aborted {
            return;
        }
        let lo = if ri == 0 && ci > 0 {
            let prev = self.first_choice[si][ci - 1];
            match self.mode {
                RoutingMode::Strict => prev + 1,
                RoutingMode::Relaxed => prev,
            }
        } else {
            0
        };
        for idx in lo..s.candidates[ri].len() {
            if self.aborted {
                return;
            }
            let Some(undo) = self.apply(si, ci, ri, idx) else {
                continue;
            };
            if ri == 0 {
                self.first_choice[si][ci] = idx;
            }
            if self.best.as_ref().is_none_or(|(b, _)| self.bound(si, ci) < *b) {
                self.dfs(si, ci, ri + 1);
            }
            self.revert(si, ci, undo);
        }
    }

    /// Adds a candidate path; returns what to undo, or `None` if the path is
    /// incompatible or breaks R5/R6.
    fn apply(&mut self, si: usize, ci: usize, ri: usize, idx: usize) -> Option<Undo> {
        let s = self.streams[si];
        let (path, links) = &s.candidates[ri][idx];
        let tree = &self.trees[si][ci];
        if !tree.compatible(path) {
            return None;
        }
        let mut undo = Undo::default();
        let mut delta = 0;
        for (i, &l) in links.iter().enumerate() {
            if tree.contains(path[i + 1]) {
                continue;
            }
            let used = self.link_use[si].get(&l).copied().unwrap_or(0);
            if used > 0 {
                match self.mode {
                    RoutingMode::Strict => return None,
                    RoutingMode::Relaxed => delta += RELAXED_OVERLAP_WEIGHT,
                }
            } else if let (true, Some(rate)) = (self.check_bw, s.rate) {
                let link = self.model.network.link(l);
                let speed = *link.speed.numer() as f64 / *link.speed.denom() as f64;
                if self.load.get(&l).copied().unwrap_or(0.0) + rate > speed * (1.0 + 1e-12) {
                    return None;
                }
                undo.load.push((l, rate));
            }
            delta += 1;
            undo.nodes.push(path[i + 1]);
            undo.links.push(l);
        }
        for &(l, r) in &undo.load {
            *self.load.entry(l).or_insert(0.0) += r;
        }
        for &l in &undo.links {
            *self.link_use[si].entry(l).or_insert(0) += 1;
        }
        let ok = self.trees[si][ci].add_path(path);
        debug_assert!(ok);
        self.cost += delta;
        undo.delta = delta;
        Some(undo)
    }

    fn revert(&mut self, si: usize, ci: usize, undo: Undo) {
        for &(l, r) in &undo.load {
            *self.load.get_mut(&l).expect("applied") -= r;
        }
        for &l in &undo.links {
            *self.link_use[si].get_mut(&l).expect("applied") -= 1;
        }
        let tree = &self.trees[si][ci];
        let mut pred = tree.entries().clone();
        for n in &undo.nodes {
            pred.remove(n);
        }
        self.trees[si][ci] = RouteTree::from_successors(tree.sender(), pred);
        self.cost -= undo.delta;
    }
}

#[derive(Default)]
struct Undo {
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
    load: Vec<(LinkId, f64)>,
    delta: u64,
}

/// Minimum-cost routes satisfying R1 to R5 (and R6 in strict mode).
///
/// Each stream is first optimised on its own; the streams only interact
/// through link bandwidth, so a joint search is needed only when the
/// independent optima overload a link.
pub fn optimize_routes_exact(model: &SystemModel, opts: &ExactRoutingOptions) -> Result<RoutingOutcome> {
    let deadline = Instant::now() + opts.time_limit;
    let net = &model.network;
    let mut data = Vec::new();
    for s in model.stream_ids() {
        let st = model.stream(s);
        let sender = model.sender_es(s);
        let mut candidates = Vec::new();
        let mut copy_lb = 0;
        for r in model.receiver_es(s) {
            let paths = match opts.k {
                Some(k) => {
                    let mut p = k_shortest_paths(net, sender, r, k, |_| 1)?;
                    // make sure a disjoint set is available to every copy
                    for d in disjoint_paths(net, sender, r, st.copies.len(), |_| 1)? {
                        if !p.contains(&d) {
                            p.push(d);
                        }
                    }
                    p
                }
                None => all_simple_paths(net, sender, r)?,
            };
            if paths.is_empty() {
                return Err(Error::infeasible(
                    "routing",
                    format!("stream {}: no path to {}", st.name, net.node_name(r)),
                ));
            }
            copy_lb = copy_lb.max(paths[0].len() as u64 - 1);
            candidates.push(paths.into_iter().map(|p| {
                let l = path_links(net, &p);
                (p, l)
            }).collect());
        }
        data.push(StreamData {
            id: s,
            sender,
            copies: st.copies.len(),
            candidates,
            rate: stream_rate(model, s),
            copy_lb,
        });
    }

    let mut optimal = true;
    let mut per_stream: Vec<(u64, Vec<RouteTree>)> = Vec::new();
    for d in &data {
        let mut search = Search::new(model, opts.mode, vec![d], false, vec![0, 0], opts.node_limit, deadline);
        search.run();
        optimal &= !search.aborted;
        match search.best {
            Some((c, mut t)) => per_stream.push((c, t.pop().expect("one stream"))),
            None if search.aborted => {
                return Err(Error::infeasible(
                    "routing",
                    format!("budget exhausted before routing stream {}", model.stream(d.id).name),
                ))
            }
            None => {
                return Err(Error::infeasible(
                    "routing",
                    format!(
                        "stream {} cannot be routed over {} disjoint copies",
                        model.stream(d.id).name,
                        d.copies
                    ),
                ))
            }
        }
    }
    let mut trees: Vec<RouteTree> = Vec::with_capacity(model.copies().len());
    for (_, t) in &per_stream {
        trees.extend(t.iter().cloned());
    }
    let mut routes = RouteAssignment::new(trees);
    let mut cost: u64 = per_stream.iter().map(|(c, _)| c).sum();

    let overloaded = super::check_routing_constraints(model, &routes, opts.mode)
        .iter()
        .any(|v| v.constraint == "R5");
    if overloaded {
        let mut rest_lb = vec![0; data.len() + 1];
        for i in (0..data.len()).rev() {
            rest_lb[i] = rest_lb[i + 1] + per_stream[i].0;
        }
        let mut search = Search::new(model, opts.mode, data.iter().collect(), true, rest_lb, opts.node_limit, deadline);
        search.run();
        optimal &= !search.aborted;
        let Some((c, t)) = search.best else {
            return Err(Error::infeasible("routing", "link bandwidth cannot accommodate all streams"));
        };
        cost = c;
        routes = RouteAssignment::new(t.into_iter().flatten().collect());
    }
    Ok(RoutingOutcome { routes, cost, optimal })
}
