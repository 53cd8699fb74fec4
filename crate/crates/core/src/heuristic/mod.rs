//! List scheduling over block timelines with backtracking, followed by
//! latency optimisation of secure streams.
//!
//! Every task is one block on its end-system. A stream copy becomes a
//! chain of blocks: MAC generation on the sender (secure streams), one
//! block per link of its route tree in breadth-first order, and MAC
//! validation on every receiving end-system (secure streams).
//!
//! A link block whose predecessor is also a link holds its queue from the
//! predecessor's offset until its own end, so two streams never interleave
//! in one egress queue.

mod graph;
mod timeline;

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{AppId, CopyId, LinkId, NodeId, SystemModel, TaskId};
use crate::routing::RouteAssignment;
use crate::schedule::{link_duration, mac_duration, CopySchedule, Schedule, Solution};
use crate::tesla::{auth_interval, earliest_auth_time};

pub use graph::{build_precedence_graph, AppGraph, Entry, PrecedenceGraph};
pub use timeline::{Owner, Resource, Timelines};

const NEG_INF: i64 = i64::MIN / 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeuristicOptions {
    /// Backtracking steps allowed per stream copy.
    pub backtrack_cap: usize,
    /// Run [`compact_schedule`] after the latency optimisation.
    pub compact: bool,
}

impl Default for HeuristicOptions {
    fn default() -> Self {
        Self { backtrack_cap: 256, compact: true }
    }
}

/// One placement unit of a stream copy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub resource: Resource,
    pub len: u64,
    pub offset: Option<u64>,
    pub lb: u64,
    pub ub: i64,
    pub prev: Option<usize>,
    pub next: Vec<usize>,
}

impl Block {
    pub fn on_link(&self) -> bool {
        matches!(self.resource, Resource::Link(_))
    }

    fn end(&self) -> u64 {
        self.offset.expect("placed block") + self.len
    }
}

/// Blocks of a stream copy in scheduling order, unplaced.
pub fn copy_blocks(model: &SystemModel, routes: &RouteAssignment, copy: CopyId) -> Vec<Block> {
    let net = &model.network;
    let sid = model.copy(copy).stream;
    let st = model.stream(sid);
    let period = model.copy_period(copy) as i64;
    let tree = routes.tree(copy);
    let sender = tree.sender();
    let mut blocks = Vec::new();
    let mk = |resource, len: u64, prev| Block {
        resource,
        len,
        offset: None,
        lb: 0,
        ub: period - len as i64,
        prev,
        next: Vec::new(),
    };
    let mac = st.secure.then(|| {
        blocks.push(mk(Resource::Es(sender), mac_duration(model, sender), None));
        0
    });
    let mut into = std::collections::HashMap::new();
    for l in tree.links(net) {
        let link = net.link(l);
        let prev = if link.src == sender { mac } else { into.get(&link.src).copied() };
        into.insert(link.dst, blocks.len());
        blocks.push(mk(Resource::Link(l), link_duration(model, sid, l), prev));
    }
    if st.secure {
        for r in model.receiver_es(sid) {
            let prev = into.get(&r).copied();
            blocks.push(mk(Resource::Es(r), mac_duration(model, r), prev));
        }
    }
    for i in 0..blocks.len() {
        if let Some(p) = blocks[i].prev {
            blocks[p].next.push(i);
        }
    }
    blocks
}

/// Fills block offsets from a scheduled copy.
fn placed_blocks(
    model: &SystemModel,
    routes: &RouteAssignment,
    copy: CopyId,
    cs: &CopySchedule,
) -> Vec<Block> {
    let mut blocks = copy_blocks(model, routes, copy);
    for b in &mut blocks {
        b.offset = match b.resource {
            Resource::Link(l) => cs.links.get(&l).copied(),
            Resource::Es(_) if b.prev.is_none() => cs.sender_mac,
            Resource::Es(n) => cs.receiver_mac.get(&n).copied(),
        };
    }
    blocks
}

fn to_copy_schedule(blocks: &[Block]) -> CopySchedule {
    let mut cs = CopySchedule::default();
    for b in blocks {
        let o = b.offset.expect("placed block");
        match b.resource {
            Resource::Link(l) => {
                cs.links.insert(l, o);
            }
            Resource::Es(_) if b.prev.is_none() => cs.sender_mac = Some(o),
            Resource::Es(n) => {
                cs.receiver_mac.insert(n, o);
            }
        }
    }
    cs
}

/// Start of the interval a block holds on its resource.
fn window_start(blocks: &[Block], i: usize) -> u64 {
    let b = &blocks[i];
    match b.prev {
        Some(p) if b.on_link() && blocks[p].on_link() => blocks[p].offset.expect("placed"),
        _ => b.offset.expect("placed"),
    }
}

fn commit_copy(tl: &mut Timelines, copy: CopyId, blocks: &[Block], period: u64) {
    for (i, b) in blocks.iter().enumerate() {
        tl.commit(b.resource, Owner::Copy(copy), window_start(blocks, i), b.end(), period);
    }
}

/// Offsets `[start, end]` (inclusive) at which a block may begin.
pub type Region = Vec<(u64, u64)>;

/// Free gaps on the block's resource shortened by its length, further cut
/// where a following link is held by another stream's queue window.
pub fn feasible_region(tl: &Timelines, blocks: &[Block], i: usize, period: u64) -> Region {
    let b = &blocks[i];
    let mut region: Region = tl
        .free_gaps(b.resource, period)
        .into_iter()
        .filter(|&(s, e)| e >= s + b.len)
        .map(|(s, e)| (s, e - b.len))
        .collect();
    if b.on_link() {
        for &n in &b.next {
            if blocks[n].on_link() {
                let free: Region = tl
                    .free_gaps(blocks[n].resource, period)
                    .into_iter()
                    .map(|(s, e)| (s, e - 1))
                    .collect();
                region = intersect(&region, &free);
            }
        }
    }
    region
}

fn intersect(a: &[(u64, u64)], b: &[(u64, u64)]) -> Region {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Smallest offset in `region` not below `lb`.
pub fn earliest_offset(region: &[(u64, u64)], lb: u64) -> Option<u64> {
    region.iter().find(|&&(_, e)| e >= lb).map(|&(s, _)| s.max(lb))
}

/// Largest `x` in `[lo, hi]` with `[x, x + len)` free on `r`.
fn latest_free(tl: &Timelines, r: Resource, class: u64, len: u64, lo: u64, hi: u64) -> Option<u64> {
    for (s, e) in tl.free_gaps(r, class).into_iter().rev() {
        if e < s + len || s > hi {
            continue;
        }
        let x = hi.min(e - len);
        if x >= s.max(lo) {
            return Some(x);
        }
        if e <= lo {
            break;
        }
    }
    None
}

/// Time at which a copy's data is available on end-system `es`.
fn arrival(model: &SystemModel, routes: &RouteAssignment, copy: CopyId, cs: &CopySchedule, es: NodeId) -> Option<u64> {
    let sid = model.copy(copy).stream;
    if model.stream(sid).secure {
        return cs.receiver_mac.get(&es).map(|o| o + mac_duration(model, es));
    }
    let l = routes.tree(copy).link_into(&model.network, es)?;
    cs.links.get(&l).map(|o| o + link_duration(model, sid, l))
}

/// Lower bound of a task: the latest end of its dependencies and the
/// latest arrival of any copy it receives.
pub fn task_lower_bound(
    model: &SystemModel,
    routes: &RouteAssignment,
    schedule: &Schedule,
    task: TaskId,
) -> Result<u64, String> {
    let t = model.task(task);
    let mut lb = 0;
    for &(x, y) in &model.app(t.app).dependencies {
        if y == task {
            let o = schedule.task(x).ok_or_else(|| format!("dependency {} unscheduled", model.task(x).name))?;
            lb = lb.max(o + model.task(x).wcet);
        }
    }
    for s in model.incoming_streams(task) {
        for &c in &model.stream(s).copies {
            let a = schedule
                .copy(c)
                .and_then(|cs| arrival(model, routes, c, cs, t.es))
                .ok_or_else(|| format!("copy {} unscheduled", model.copy_name(c)))?;
            lb = lb.max(a);
        }
    }
    Ok(lb)
}

/// Lower bound of block `i` of a copy: the sender's end for first blocks,
/// the previous block's end inside the route, and for MAC validation the
/// end of the matching key verification in the authentication interval.
pub fn block_lower_bound(
    model: &SystemModel,
    schedule: &Schedule,
    copy: CopyId,
    blocks: &[Block],
    i: usize,
) -> Result<u64, String> {
    let b = &blocks[i];
    let st = model.copy_stream(copy);
    let base = match b.prev {
        None => {
            let o = schedule
                .task(st.sender)
                .ok_or_else(|| format!("sender {} unscheduled", model.task(st.sender).name))?;
            o + model.task(st.sender).wcet
        }
        Some(p) => blocks[p].end(),
    };
    let lb = match (b.resource, b.prev) {
        (Resource::Es(es), Some(_)) => {
            let p_int = model.key_interval().ok_or("key interval unbound")?;
            let last = last_link_end(blocks);
            let src = model.sender_es(model.copy(copy).stream);
            let kv = model
                .key_verifier(src, es)
                .ok_or_else(|| format!("no key verification on {}", model.network.node_name(es)))?;
            let kv_o = schedule
                .task(kv)
                .ok_or_else(|| format!("key verification {} unscheduled", model.task(kv).name))?;
            let phi = auth_interval(last, p_int);
            base.max(earliest_auth_time(phi, p_int, kv_o + model.task(kv).wcet))
        }
        _ => base,
    };
    Ok(lb.max(b.lb))
}

/// Latest end among links entering receivers. Requires them placed.
fn last_link_end(blocks: &[Block]) -> u64 {
    blocks
        .iter()
        .filter(|b| !b.on_link() && b.prev.is_some())
        .map(|b| blocks[b.prev.unwrap()].end())
        .max()
        .unwrap_or(0)
}

/// Schedule under construction together with its timelines.
#[derive(Clone, Debug)]
pub struct ScheduleState {
    pub schedule: Schedule,
    pub timelines: Timelines,
    pub infeasible: BTreeSet<AppId>,
    /// First failure reason per infeasible application.
    pub failures: Vec<(AppId, String)>,
}

impl ScheduleState {
    pub fn new(model: &SystemModel) -> Self {
        Self {
            schedule: Schedule::empty(model),
            timelines: Timelines::new(),
            infeasible: BTreeSet::new(),
            failures: Vec::new(),
        }
    }

    pub fn into_solution(self, routes: RouteAssignment, key_interval: u64) -> Solution {
        Solution {
            routes,
            key_interval,
            schedule: self.schedule,
        }
    }
}

/// Places applications in `order` as early as possible. An application
/// with an unplaceable entry is removed again and recorded as infeasible.
pub fn asap_schedule(
    model: &SystemModel,
    routes: &RouteAssignment,
    graph: &PrecedenceGraph,
    order: &[AppId],
    opts: &HeuristicOptions,
) -> ScheduleState {
    let mut st = ScheduleState::new(model);
    for &a in order {
        if let Err(msg) = schedule_app(model, routes, graph.app(a), &mut st, opts) {
            log::debug!("application {} unschedulable: {msg}", model.app(a).name);
            drop_app(model, &mut st, a);
            st.infeasible.insert(a);
            st.failures.push((a, msg));
        }
    }
    st
}

fn drop_app(model: &SystemModel, st: &mut ScheduleState, a: AppId) {
    let app = model.app(a);
    for &t in &app.tasks {
        st.timelines.uncommit(Owner::Task(t));
        st.schedule.tasks[t.0] = None;
    }
    for &s in &app.streams {
        for &c in &model.stream(s).copies {
            st.timelines.uncommit(Owner::Copy(c));
            st.schedule.copies[c.0] = None;
        }
    }
}

fn schedule_app(
    model: &SystemModel,
    routes: &RouteAssignment,
    g: &AppGraph,
    st: &mut ScheduleState,
    opts: &HeuristicOptions,
) -> Result<(), String> {
    if g.order.len() != g.nodes.len() {
        return Err("cyclic precedence graph".into());
    }
    for &e in &g.order {
        match e {
            Entry::Task(t) => schedule_task(model, routes, st, t)?,
            Entry::Copy(c) => schedule_copy(model, routes, st, c, opts)?,
        }
    }
    Ok(())
}

fn schedule_task(model: &SystemModel, routes: &RouteAssignment, st: &mut ScheduleState, t: TaskId) -> Result<(), String> {
    let task = model.task(t);
    let period = model.task_period(t);
    let lb = task_lower_bound(model, routes, &st.schedule, t)?;
    let r = Resource::Es(task.es);
    let region: Region = st
        .timelines
        .free_gaps(r, period)
        .into_iter()
        .filter(|&(s, e)| e >= s + task.wcet)
        .map(|(s, e)| (s, e - task.wcet))
        .collect();
    let o = earliest_offset(&region, lb).ok_or_else(|| format!("no room for task {}", task.name))?;
    st.timelines.commit(r, Owner::Task(t), o, o + task.wcet, period);
    st.schedule.tasks[t.0] = Some(o);
    Ok(())
}

fn schedule_copy(
    model: &SystemModel,
    routes: &RouteAssignment,
    st: &mut ScheduleState,
    c: CopyId,
    opts: &HeuristicOptions,
) -> Result<(), String> {
    let period = model.copy_period(c);
    let mut blocks = copy_blocks(model, routes, c);
    let fail = |what: &str| format!("copy {}: {what}", model.copy_name(c));
    let mut i = 0;
    let mut backtracks = 0;
    while i < blocks.len() {
        let lb = block_lower_bound(model, &st.schedule, c, &blocks, i)?;
        blocks[i].lb = lb;
        let region = feasible_region(&st.timelines, &blocks, i, period);
        let o = earliest_offset(&region, lb).ok_or_else(|| fail("no feasible offset"))?;
        if o as i64 <= blocks[i].ub {
            blocks[i].offset = Some(o);
            if blocks[i].on_link() {
                for n in blocks[i].next.clone() {
                    if blocks[n].on_link() {
                        blocks[n].ub = latest_queue_available(&st.timelines, &blocks[n], o, period);
                    }
                }
            }
            i += 1;
            continue;
        }
        match blocks[i].prev {
            Some(p) if blocks[i].on_link() && blocks[p].on_link() => {
                backtracks += 1;
                if backtracks > opts.backtrack_cap {
                    return Err(fail("backtrack limit reached"));
                }
                let eq = earliest_queue_available(&st.timelines, &blocks[i], o, period)
                    .ok_or_else(|| fail("queue never available"))?;
                blocks[p].lb = blocks[p].lb.max(eq);
                i = p;
            }
            _ => return Err(fail("offset beyond upper bound")),
        }
    }
    commit_copy(&mut st.timelines, c, &blocks, period);
    st.schedule.copies[c.0] = Some(to_copy_schedule(&blocks));
    Ok(())
}

/// Latest offset of `g` keeping its resource free since `o`.
fn latest_queue_available(tl: &Timelines, g: &Block, o: u64, period: u64) -> i64 {
    match tl.gap_containing(g.resource, period, o) {
        Some((_, e)) => e as i64 - g.len as i64,
        None => NEG_INF,
    }
}

/// Start of the free interval on `b`'s resource that covers `[o, o + len)`.
fn earliest_queue_available(tl: &Timelines, b: &Block, o: u64, period: u64) -> Option<u64> {
    tl.gap_containing(b.resource, period, o)
        .filter(|&(_, e)| o + b.len <= e)
        .map(|(s, _)| s)
}

/// Shifts every secure stream towards the end of its authentication
/// interval and its sender towards the stream. Redundant copies move first;
/// the sender moves together with copy zero.
pub fn optimize_latency(
    model: &SystemModel,
    routes: &RouteAssignment,
    graph: &PrecedenceGraph,
    st: &mut ScheduleState,
) {
    for a in model.app_ids() {
        if st.infeasible.contains(&a) {
            continue;
        }
        for &e in &graph.app(a).order {
            let Entry::Copy(c) = e else { continue };
            let sub = model.copy(c);
            let stream = model.stream(sub.stream);
            if sub.index != 0 || !stream.secure {
                continue;
            }
            for &other in &stream.copies[1..] {
                optimize_latency_for_stream(model, routes, st, other, false);
            }
            optimize_latency_for_stream(model, routes, st, c, true);
        }
    }
}

/// Compacts every scheduled normal application, see [`compact_app`].
pub fn compact_schedule(model: &SystemModel, routes: &RouteAssignment, graph: &PrecedenceGraph, st: &mut ScheduleState) {
    for a in model.normal_apps() {
        if !st.infeasible.contains(&a) {
            compact_app(model, routes, graph, st, a);
        }
    }
}

/// Walks the application backwards and moves every task and copy as late
/// as its successors allow. Tasks without successors may move up to the
/// end of the application, so its latency never grows. Unlike
/// [`optimize_latency`] this covers plain streams and lets a hop move to a
/// later gap when the previous hop can follow.
pub fn compact_app(model: &SystemModel, routes: &RouteAssignment, graph: &PrecedenceGraph, st: &mut ScheduleState, a: AppId) {
    let app = model.app(a);
    let Some(end) = app.tasks.iter().map(|&t| st.schedule.task(t).map(|o| o + model.task(t).wcet)).collect::<Option<Vec<_>>>() else {
        return;
    };
    let end = end.into_iter().max().unwrap_or(0);
    for &e in graph.app(a).order.iter().rev() {
        match e {
            Entry::Task(t) => delay_task(model, st, t, end),
            Entry::Copy(c) => shift_copy(model, routes, st, c, false, true),
        }
    }
}

/// Moves the blocks of one copy as late as the authentication interval
/// (secure copies) or the receiving tasks (plain copies) and their
/// successors allow, walking backwards from the last links.
pub fn optimize_latency_for_stream(
    model: &SystemModel,
    routes: &RouteAssignment,
    st: &mut ScheduleState,
    c: CopyId,
    move_task: bool,
) {
    if model.copy_stream(c).secure {
        shift_copy(model, routes, st, c, move_task, false);
    }
}

fn shift_copy(model: &SystemModel, routes: &RouteAssignment, st: &mut ScheduleState, c: CopyId, move_task: bool, eager: bool) {
    let Some(cs) = st.schedule.copy(c).cloned() else { return };
    let Some(p_int) = model.key_interval() else { return };
    let period = model.copy_period(c);
    let mut blocks = placed_blocks(model, routes, c, &cs);
    if blocks.iter().any(|b| b.offset.is_none()) {
        return;
    }
    let secure = model.copy_stream(c).secure;
    let mut deadline = BTreeMap::new();
    if !secure {
        // a plain copy may arrive right before its receivers start
        let net = &model.network;
        for b in blocks.iter().filter(|b| b.next.is_empty()) {
            let Resource::Link(l) = b.resource else { continue };
            let es = net.link(l).dst;
            let starts: Option<Vec<u64>> = model
                .copy_stream(c)
                .receivers
                .iter()
                .filter(|&&r| model.task(r).es == es)
                .map(|&r| st.schedule.task(r))
                .collect();
            match starts.and_then(|v| v.into_iter().min()) {
                Some(t) => deadline.insert(l, t),
                None => return,
            };
        }
    }
    st.timelines.uncommit(Owner::Copy(c));
    let limit = auth_interval(last_link_end(&blocks), p_int) * p_int;
    blocks = eager
        .then(|| shift_back(&st.timelines, &blocks, &deadline, limit, period, true))
        .flatten()
        .unwrap_or_else(|| shift_back(&st.timelines, &blocks, &deadline, limit, period, false).expect("conservative shift"));
    commit_copy(&mut st.timelines, c, &blocks, period);
    st.schedule.copies[c.0] = Some(to_copy_schedule(&blocks));
    if move_task {
        let t = model.copy_stream(c).sender;
        delay_task(model, st, t, model.task_period(t));
    }
}

/// One backward pass over a copy's blocks. A chained link holds its queue
/// from the previous hop's start, so it stays in the gap holding that start
/// unless `eager` is set; then it may take a later gap and the previous hop
/// has to follow into it. `None` when a previous hop cannot follow.
fn shift_back(
    tl: &Timelines,
    orig: &[Block],
    deadline: &BTreeMap<LinkId, u64>,
    limit: u64,
    period: u64,
    eager: bool,
) -> Option<Vec<Block>> {
    let mut blocks = orig.to_vec();
    let mut need = vec![0; blocks.len()];
    for i in (0..blocks.len()).rev() {
        let b = &blocks[i];
        if !b.on_link() && b.prev.is_some() {
            continue;
        }
        let cur = b.offset.unwrap();
        let mut ub = period - b.len;
        if let Resource::Link(l) = b.resource {
            if let Some(&d) = deadline.get(&l) {
                ub = ub.min(d.saturating_sub(b.len));
            }
        }
        for &n in &b.next {
            let child = &blocks[n];
            if child.on_link() {
                ub = ub.min(child.offset.unwrap() - b.len);
            } else {
                ub = ub.min(limit - 1 - b.len);
            }
        }
        let lo = cur.max(need[i]);
        if ub < lo {
            if need[i] > cur {
                return None;
            }
            continue;
        }
        let new = match b.prev {
            Some(p) if b.on_link() && blocks[p].on_link() && eager => {
                match latest_free(tl, b.resource, period, b.len, lo, ub) {
                    Some(o) => {
                        let (gs, _) = tl.gap_containing(b.resource, period, o).expect("free offset");
                        if gs > blocks[p].offset.unwrap() {
                            need[p] = need[p].max(gs);
                        }
                        o
                    }
                    None if need[i] > cur => return None,
                    None => cur,
                }
            }
            Some(p) if b.on_link() && blocks[p].on_link() => {
                let start = blocks[p].offset.unwrap();
                match tl.gap_containing(b.resource, period, start) {
                    Some((_, e)) => ub.min(e - b.len).max(cur),
                    None => cur,
                }
            }
            _ => match latest_free(tl, b.resource, period, b.len, lo, ub) {
                Some(o) => o,
                None if need[i] > cur => return None,
                None => cur,
            },
        };
        blocks[i].offset = Some(new);
    }
    Some(blocks)
}

/// Moves a task as late as its successors allow, ending by `limit` at the
/// latest.
fn delay_task(model: &SystemModel, st: &mut ScheduleState, t: TaskId, limit: u64) {
    let Some(cur) = st.schedule.task(t) else { return };
    let task = model.task(t);
    let period = model.task_period(t);
    let mut ub = limit.min(period);
    for s in model.outgoing_streams(t) {
        for &c in &model.stream(s).copies {
            let Some(cs) = st.schedule.copy(c) else { return };
            let first = cs
                .sender_mac
                .into_iter()
                .chain(model.network.out_links(task.es).iter().filter_map(|l| cs.links.get(l).copied()))
                .min();
            if let Some(f) = first {
                ub = ub.min(f);
            }
        }
    }
    for &(x, y) in &model.app(task.app).dependencies {
        if x == t {
            let Some(o) = st.schedule.task(y) else { return };
            ub = ub.min(o);
        }
    }
    let Some(ub) = ub.checked_sub(task.wcet) else { return };
    if ub <= cur {
        return;
    }
    let r = Resource::Es(task.es);
    st.timelines.uncommit(Owner::Task(t));
    let new = latest_free(&st.timelines, r, period, task.wcet, cur, ub).unwrap_or(cur);
    st.timelines.commit(r, Owner::Task(t), new, new + task.wcet, period);
    st.schedule.tasks[t.0] = Some(new);
}

/// Routes to schedule in one step: precedence graph, ASAP placement in
/// the initial application order, then latency optimisation and, if
/// enabled, compaction.
pub fn schedule_heuristic(
    model: &SystemModel,
    routes: &RouteAssignment,
    opts: &HeuristicOptions,
) -> ScheduleState {
    let graph = build_precedence_graph(model);
    let order = PrecedenceGraph::initial_order(model);
    let mut st = asap_schedule(model, routes, &graph, &order, opts);
    optimize_latency(model, routes, &graph, &mut st);
    if opts.compact {
        compact_schedule(model, routes, &graph, &mut st);
    }
    st
}
