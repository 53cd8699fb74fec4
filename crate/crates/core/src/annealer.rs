//! Simulated annealing over route choices and application order.
//!
//! A solution fixes one candidate path per (copy, receiver) and an order of
//! applications; its schedule is produced by the list scheduler. Moves
//! either swap a path for another candidate or swap two normal
//! applications in the order.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::{
    asap_schedule, build_precedence_graph, compact_schedule, optimize_latency, HeuristicOptions, PrecedenceGraph,
};
use crate::model::{AppId, LinkId, NodeId, StreamId, SystemModel};
use crate::routing::{disjoint_paths, k_shortest_paths, xsum, Path, RouteAssignment, RouteTree};
use crate::schedule::{evaluate_parts, CostBreakdown, Schedule, Solution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SAParams {
    pub t_start: f64,
    /// Temperature factor applied every iteration.
    pub alpha: f64,
    /// Candidate paths per (copy, receiver).
    pub k: usize,
    /// Probability of a routing move.
    pub p_rmv: f64,
    /// Weight of one overlap between copies of a stream.
    pub a: u64,
    /// Weight of one unscheduled application.
    pub b: u64,
    /// Link weight for links already used by earlier copies when seeding.
    pub w: u64,
    pub seed: u64,
    pub max_iterations: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Stop once a feasible solution at or below this cost is found.
    pub target_cost: Option<u64>,
    /// Stop after this many iterations without improving the best cost.
    pub stagnation: Option<u64>,
    pub min_temperature: f64,
    /// Record a trace line every this many iterations (0 disables).
    pub trace_every: u64,
    pub backtrack_cap: usize,
    /// Compact applications after the latency optimisation.
    pub compact: bool,
}

impl Default for SAParams {
    fn default() -> Self {
        Self {
            t_start: 1000.0,
            alpha: 0.999,
            k: 8,
            p_rmv: 0.3,
            a: 50_000,
            b: 10_000,
            w: 10_000,
            seed: 0,
            max_iterations: Some(20_000),
            time_limit: Some(Duration::from_secs(60)),
            target_cost: None,
            stagnation: None,
            min_temperature: 1e-9,
            trace_every: 0,
            backtrack_cap: 256,
            compact: true,
        }
    }
}

impl SAParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.into()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.p_rmv) {
            return bad("p_rmv must lie in [0, 1]");
        }
        if self.t_start <= 0.0 || self.min_temperature <= 0.0 {
            return bad("temperatures must be positive");
        }
        if self.a == 0 || self.b == 0 || self.w == 0 || self.k == 0 {
            return bad("a, b, w and k must be positive");
        }
        Ok(())
    }
}

/// Candidate paths: `[copy][receiver][candidate]`, receivers in
/// end-system order.
pub type Candidates = Vec<Vec<Vec<Path>>>;

#[derive(Clone, Debug)]
pub struct SaSolution {
    pub candidates: Arc<Candidates>,
    /// Chosen candidate per copy and receiver.
    pub choice: Vec<Vec<usize>>,
    pub routes: RouteAssignment,
    pub order: Vec<AppId>,
    pub schedule: Schedule,
    pub infeasible: BTreeSet<AppId>,
    pub breakdown: CostBreakdown,
    pub cost: u64,
}

impl SaSolution {
    pub fn feasible(&self) -> bool {
        self.breakdown.feasible()
    }

    pub fn to_solution(&self, key_interval: u64) -> Solution {
        Solution {
            routes: self.routes.clone(),
            key_interval,
            schedule: self.schedule.clone(),
        }
    }
}

/// `a * overlaps + length + b * infeasible + latency`.
pub fn cost(breakdown: &CostBreakdown, params: &SAParams) -> u64 {
    breakdown.total(params.a, params.b)
}

/// Probability of accepting a change of `delta` at temperature `t`.
pub fn accept_probability(delta: f64, t: f64) -> f64 {
    if delta < 0.0 {
        1.0
    } else {
        (-delta / t).exp()
    }
}

/// Shared, read-only search data.
pub struct SaContext<'a> {
    pub model: &'a SystemModel,
    pub graph: PrecedenceGraph,
    pub params: SAParams,
}

impl<'a> SaContext<'a> {
    pub fn new(model: &'a SystemModel, params: SAParams) -> Result<Self> {
        params.validate()?;
        if model.key_interval().is_none() {
            return Err(Error::Argument("key interval must be bound before annealing".into()));
        }
        Ok(Self {
            model,
            graph: build_precedence_graph(model),
            params,
        })
    }

    fn schedule(&self, routes: RouteAssignment, order: Vec<AppId>, optimize: bool, sol: &mut SaSolution) {
        let opts = HeuristicOptions {
            backtrack_cap: self.params.backtrack_cap,
            compact: self.params.compact,
        };
        let mut st = asap_schedule(self.model, &routes, &self.graph, &order, &opts);
        if optimize {
            optimize_latency(self.model, &routes, &self.graph, &mut st);
            if opts.compact {
                compact_schedule(self.model, &routes, &self.graph, &mut st);
            }
        }
        sol.breakdown = evaluate_parts(self.model, &routes, &st.schedule);
        sol.cost = cost(&sol.breakdown, &self.params);
        sol.schedule = st.schedule;
        sol.infeasible = st.infeasible;
        sol.routes = routes;
        sol.order = order;
    }
}

/// Cheapest path from the tree to `dst` that only enters nodes outside the
/// tree, prefixed by the tree path to where it leaves.
fn graft_path(model: &SystemModel, tree: &RouteTree, dst: NodeId, weight: impl Fn(LinkId) -> u64) -> Option<Path> {
    let net = &model.network;
    let mut dist: HashMap<NodeId, u64> = HashMap::new();
    let mut pred: HashMap<NodeId, NodeId> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for s in std::iter::once(tree.sender()).chain(tree.entries().keys().copied()) {
        if s == tree.sender() || net.is_switch(s) {
            dist.insert(s, 0);
            heap.push(Reverse((0, s)));
        }
    }
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[&u] {
            continue;
        }
        if u == dst {
            let mut tail = vec![u];
            let mut v = u;
            while let Some(&p) = pred.get(&v) {
                tail.push(p);
                v = p;
            }
            tail.reverse();
            let mut path = tree.path_to(tail[0])?;
            path.extend_from_slice(&tail[1..]);
            return Some(path);
        }
        for &l in net.out_links(u) {
            let v = net.link(l).dst;
            if tree.contains(v) || v == tree.sender() || (net.is_end_system(v) && v != dst) {
                continue;
            }
            let nd = d + weight(l);
            if dist.get(&v).is_none_or(|&old| nd < old) {
                dist.insert(v, nd);
                pred.insert(v, u);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    None
}

/// Rebuilds the trees of one stream's copies in turn, each avoiding links
/// held by its siblings and, increasingly, links that were contested in
/// earlier rounds. Returns the trees with the fewest shared links seen.
fn negotiate_trees(ctx: &SaContext, receivers: &[NodeId], mut trees: Vec<RouteTree>) -> Vec<RouteTree> {
    const ROUNDS: usize = 30;
    let net = &ctx.model.network;
    let mut history: HashMap<LinkId, u64> = HashMap::new();
    let mut best = (copy_overlap(net, trees.iter()), trees.clone());
    for _ in 0..ROUNDS {
        if best.0 == 0 {
            break;
        }
        for i in 0..trees.len() {
            let mut held: HashMap<LinkId, u64> = HashMap::new();
            for (j, t) in trees.iter().enumerate() {
                if j != i {
                    for l in t.links(net) {
                        *held.entry(l).or_default() += 1;
                    }
                }
            }
            let weight = |l: LinkId| 1 + history.get(&l).copied().unwrap_or(0) + ctx.params.w * held.get(&l).copied().unwrap_or(0);
            let mut tree = RouteTree::new(trees[i].sender());
            for &r in receivers {
                if tree.contains(r) {
                    continue;
                }
                match graft_path(ctx.model, &tree, r, weight) {
                    Some(p) => {
                        tree.add_path(&p);
                    }
                    None => return best.1,
                }
            }
            trees[i] = tree;
        }
        let mut count: HashMap<LinkId, u64> = HashMap::new();
        for t in &trees {
            for l in t.links(net) {
                *count.entry(l).or_default() += 1;
            }
        }
        for (l, n) in count {
            if n > 1 {
                *history.entry(l).or_default() += 10 * (n - 1);
            }
        }
        let o = copy_overlap(net, trees.iter());
        if o < best.0 {
            best = (o, trees.clone());
        }
    }
    best.1
}

/// K shortest paths per copy and receiver, earlier copies' links weighted
/// `w`; the chosen path is the first one compatible with the tree so far.
///
/// Every candidate list also holds a minimum-weight set of link-disjoint
/// paths. When the greedy choice leaves copies of a stream overlapping,
/// copy `i` takes the `i`-th disjoint path instead wherever that lowers the
/// overlap.
pub fn initial_solution(ctx: &SaContext) -> Result<SaSolution> {
    let m = ctx.model;
    let net = &m.network;
    let mut candidates: Candidates = vec![Vec::new(); m.copies().len()];
    let mut choice = vec![Vec::new(); m.copies().len()];
    let mut trees: Vec<RouteTree> = m.copy_ids().map(|c| RouteTree::new(m.sender_es(m.copy(c).stream))).collect();
    for s in m.stream_ids() {
        let sender = m.sender_es(s);
        let copies = &m.stream(s).copies;
        let receivers = m.receiver_es(s);
        let disjoint = receivers
            .iter()
            .map(|&r| disjoint_paths(net, sender, r, copies.len(), |_| 1))
            .collect::<Result<Vec<_>>>()?;
        let mut used = BTreeSet::new();
        for &c in copies {
            let mut tree = RouteTree::new(sender);
            for (ri, &r) in receivers.iter().enumerate() {
                let weight = |l| if used.contains(&l) { ctx.params.w } else { 1 };
                let mut k = k_shortest_paths(net, sender, r, ctx.params.k, weight)?;
                for d in &disjoint[ri] {
                    if !k.contains(d) {
                        k.push(d.clone());
                    }
                }
                let pick = match k.iter().position(|p| tree.compatible(p)) {
                    Some(i) => i,
                    None => {
                        let p = graft_path(m, &tree, r, |_| 1).ok_or_else(|| {
                            Error::infeasible("routing", format!("no route from {} to {}", net.node_name(sender), net.node_name(r)))
                        })?;
                        k.push(p);
                        k.len() - 1
                    }
                };
                tree.add_path(&k[pick]);
                choice[c.0].push(pick);
                candidates[c.0].push(k);
            }
            used.extend(tree.links(net));
            trees[c.0] = tree;
        }
        if copies.len() > 1 && copy_overlap(net, copies.iter().map(|c| &trees[c.0])) > 0 {
            let mut alt_trees = Vec::new();
            let mut alt_choice = Vec::new();
            for (i, &c) in copies.iter().enumerate() {
                let mut tree = RouteTree::new(sender);
                let mut picks = Vec::new();
                for (ri, list) in candidates[c.0].iter().enumerate() {
                    let preferred = disjoint[ri].get(i).and_then(|d| list.iter().position(|p| p == d));
                    let pick = preferred
                        .filter(|&j| tree.compatible(&list[j]))
                        .unwrap_or(choice[c.0][ri]);
                    if !tree.add_path(&list[pick]) {
                        break;
                    }
                    picks.push(pick);
                }
                if picks.len() < candidates[c.0].len() {
                    alt_trees.clear();
                    break;
                }
                alt_trees.push(tree);
                alt_choice.push(picks);
            }
            if !alt_trees.is_empty()
                && copy_overlap(net, alt_trees.iter()) < copy_overlap(net, copies.iter().map(|c| &trees[c.0]))
            {
                for ((&c, t), ch) in copies.iter().zip(alt_trees).zip(alt_choice) {
                    trees[c.0] = t;
                    choice[c.0] = ch;
                }
            }
        }
        let current: Vec<RouteTree> = copies.iter().map(|c| trees[c.0].clone()).collect();
        if copies.len() > 1 && copy_overlap(net, current.iter()) > 0 {
            let fixed = negotiate_trees(ctx, &receivers, current.clone());
            if copy_overlap(net, fixed.iter()) < copy_overlap(net, current.iter()) {
                for (&c, t) in copies.iter().zip(fixed) {
                    for (ri, &r) in receivers.iter().enumerate() {
                        let p = t.path_to(r).expect("tree reaches every receiver");
                        let list = &mut candidates[c.0][ri];
                        choice[c.0][ri] = match list.iter().position(|q| *q == p) {
                            Some(j) => j,
                            None => {
                                list.push(p);
                                list.len() - 1
                            }
                        };
                    }
                    trees[c.0] = t;
                }
            }
        }
    }
    let mut sol = SaSolution {
        candidates: Arc::new(candidates),
        choice,
        routes: RouteAssignment::default(),
        order: Vec::new(),
        schedule: Schedule::empty(m),
        infeasible: BTreeSet::new(),
        breakdown: CostBreakdown::default(),
        cost: 0,
    };
    ctx.schedule(RouteAssignment::new(trees), PrecedenceGraph::initial_order(m), true, &mut sol);
    Ok(sol)
}

/// Directed links used by more than one of the given trees, counted once
/// per extra use.
fn copy_overlap<'t>(net: &crate::model::Network, trees: impl Iterator<Item = &'t RouteTree>) -> usize {
    let mut seen = BTreeSet::new();
    let mut extra = 0;
    for t in trees {
        for l in t.links(net) {
            if !seen.insert(l) {
                extra += 1;
            }
        }
    }
    extra
}

/// One routing move (probability `p_rmv`) or one order swap. Moves that
/// would break a route tree, and swaps with fewer than two normal
/// applications, leave the solution unchanged.
pub fn random_neighbour(ctx: &SaContext, cur: &SaSolution, rng: &mut impl Rng) -> SaSolution {
    let m = ctx.model;
    let routing = rng.gen::<f64>() < ctx.params.p_rmv;
    if routing {
        if cur.choice.is_empty() {
            return cur.clone();
        }
        let c = rng.gen_range(0..cur.choice.len());
        let r = rng.gen_range(0..cur.choice[c].len());
        let j = rng.gen_range(0..cur.candidates[c][r].len());
        if j == cur.choice[c][r] {
            return cur.clone();
        }
        let mut choice = cur.choice[c].clone();
        choice[r] = j;
        let paths: Vec<Path> = choice.iter().enumerate().map(|(i, &k)| cur.candidates[c][i][k].clone()).collect();
        let sender = m.sender_es(m.copy(crate::model::CopyId(c)).stream);
        let Some(tree) = RouteTree::from_paths(sender, &paths) else {
            return cur.clone();
        };
        let mut next = cur.clone();
        next.choice[c] = choice;
        let mut routes = cur.routes.clone();
        routes.set_tree(crate::model::CopyId(c), tree);
        ctx.schedule(routes, cur.order.clone(), false, &mut next);
        next
    } else {
        let normal: Vec<usize> = (0..cur.order.len()).filter(|&i| !m.app(cur.order[i]).is_security()).collect();
        if normal.len() < 2 {
            return cur.clone();
        }
        let i = rng.gen_range(0..normal.len());
        let mut j = rng.gen_range(0..normal.len() - 1);
        if j >= i {
            j += 1;
        }
        let mut order = cur.order.clone();
        order.swap(normal[i], normal[j]);
        let mut next = cur.clone();
        ctx.schedule(cur.routes.clone(), order, true, &mut next);
        next
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub temperature: f64,
    pub cost: u64,
    pub best: u64,
}

#[derive(Clone, Debug)]
pub struct SaOutcome {
    pub best: SaSolution,
    pub iterations: u64,
    pub accepted: u64,
    pub elapsed: Duration,
    pub time_to_first_feasible: Option<Duration>,
    pub trace: Vec<TraceRecord>,
    /// Applications the best solution leaves unscheduled.
    pub infeasible_apps: Vec<String>,
    /// Streams whose copies still share a link in the best solution.
    pub overlapping_streams: Vec<String>,
}

fn better(x: &SaSolution, y: &SaSolution) -> bool {
    (!x.feasible(), x.cost) < (!y.feasible(), y.cost)
}

/// Runs the annealing loop on a security-expanded model with bound key
/// interval.
pub fn anneal(model: &SystemModel, params: &SAParams) -> Result<SaOutcome> {
    let ctx = SaContext::new(model, params.clone())?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cur = initial_solution(&ctx)?;
    let mut best = cur.clone();
    let mut first_feasible = best.feasible().then(|| started.elapsed());
    let mut t = params.t_start;
    let mut it = 0;
    let mut accepted = 0;
    let mut last_improve = 0;
    let mut trace = Vec::new();
    loop {
        if params.max_iterations.is_some_and(|n| it >= n)
            || params.time_limit.is_some_and(|d| started.elapsed() >= d)
            || params.target_cost.is_some_and(|c| best.feasible() && best.cost <= c)
            || params.stagnation.is_some_and(|s| it - last_improve >= s)
        {
            break;
        }
        it += 1;
        let next = random_neighbour(&ctx, &cur, &mut rng);
        let delta = next.cost as f64 - cur.cost as f64;
        if delta < 0.0 || rng.gen::<f64>() < accept_probability(delta, t) {
            cur = next;
            accepted += 1;
        }
        if better(&cur, &best) {
            best = cur.clone();
            last_improve = it;
            if first_feasible.is_none() && best.feasible() {
                first_feasible = Some(started.elapsed());
            }
        }
        if params.trace_every > 0 && it % params.trace_every == 0 {
            trace.push(TraceRecord {
                iteration: it,
                temperature: t,
                cost: cur.cost,
                best: best.cost,
            });
        }
        t = (t * params.alpha).max(params.min_temperature);
    }
    let infeasible_apps = best.infeasible.iter().map(|&a| model.app(a).name.clone()).collect();
    let overlapping_streams = overlapping(model, &best.routes).into_iter().map(|s| model.stream(s).name.clone()).collect();
    Ok(SaOutcome {
        best,
        iterations: it,
        accepted,
        elapsed: started.elapsed(),
        time_to_first_feasible: first_feasible,
        trace,
        infeasible_apps,
        overlapping_streams,
    })
}

fn overlapping(model: &SystemModel, routes: &RouteAssignment) -> Vec<StreamId> {
    model
        .stream_ids()
        .filter(|&s| model.network.link_ids().any(|l| xsum(model, routes, s, l) >= 2))
        .collect()
}

/// Independent runs with consecutive seeds on separate threads; the best
/// outcome wins, ties going to the lower seed.
pub fn anneal_restarts(model: &SystemModel, params: &SAParams, runs: usize) -> Result<SaOutcome> {
    let results: Vec<Result<SaOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..runs.max(1) as u64)
            .map(|i| {
                let p = SAParams {
                    seed: params.seed.wrapping_add(i),
                    ..params.clone()
                };
                s.spawn(move || anneal(model, &p))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("annealing thread")).collect()
    });
    let mut best: Option<SaOutcome> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| better(&r.best, &b.best)) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one run"))
}
