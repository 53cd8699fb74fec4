//! Independent solution checker.
//!
//! Every task and frame instance of the hyperperiod is expanded into
//! absolute time and compared pairwise after sorting; none of the
//! scheduling engines' interval code is reused here.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::model::{AppId, CopyId, LinkId, NodeId, Period, StreamId, SystemModel, TaskRole};
use crate::routing::{RouteAssignment, RoutingMode};
use crate::schedule::{CopySchedule, Solution};

/// Which queue-isolation rule to check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Isolation windows from the previous hop's offset to the offset on the
    /// shared link may not overlap (touching allowed).
    Printed,
    /// A frame holds its egress queue from the previous hop's offset until
    /// its own transmission ends; queue holdings may not overlap.
    #[default]
    Queue,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    pub strictness: Strictness,
    pub routing: RoutingMode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Constraint family, e.g. `S8` or `R6`.
    pub constraint: &'static str,
    pub entities: Vec<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.constraint, self.entities.join(", "), self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub violations: Vec<Violation>,
    /// Applications with at least one unscheduled task or copy.
    pub unscheduled: Vec<String>,
}

impl VerifyReport {
    /// No violations and nothing left unscheduled.
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty() && self.unscheduled.is_empty()
    }

    pub fn count(&self, constraint: &str) -> usize {
        self.violations.iter().filter(|v| v.constraint == constraint).count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "violations: {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        writeln!(f, "unscheduled applications: {}", self.unscheduled.len())?;
        for a in &self.unscheduled {
            writeln!(f, "  {a}")?;
        }
        Ok(())
    }
}

struct Ctx<'a> {
    m: &'a SystemModel,
    sol: &'a Solution,
    out: RefCell<Vec<Violation>>,
}

impl Ctx<'_> {
    fn period(&self, app: AppId) -> u64 {
        match self.m.app(app).period {
            Period::Fixed(t) => t,
            Period::KeyInterval => self.sol.key_interval,
        }
    }

    fn copy_period(&self, c: CopyId) -> u64 {
        self.period(self.m.copy_stream(c).app)
    }

    fn push(&self, constraint: &'static str, entities: Vec<String>, detail: String) {
        self.out.borrow_mut().push(Violation {
            constraint,
            entities,
            detail,
        });
    }

    fn cname(&self, c: CopyId) -> String {
        let sub = self.m.copy(c);
        format!("{}#{}", self.m.stream(sub.stream).name, sub.index)
    }

    fn tname(&self, t: crate::model::TaskId) -> String {
        self.m.task(t).name.clone()
    }

    fn lname(&self, l: LinkId) -> String {
        let link = self.m.network.link(l);
        format!("{}->{}", self.m.network.node(link.src).name, self.m.network.node(link.dst).name)
    }

    fn link_len(&self, s: StreamId, l: LinkId) -> u64 {
        let st = self.m.stream(s);
        let bytes = st.size + self.m.constants.overhead + if st.secure { self.m.constants.mac_size } else { 0 };
        let speed = self.m.network.link(l).speed;
        (bytes as u128 * *speed.denom() as u128).div_ceil(*speed.numer() as u128) as u64
    }

    fn hash(&self, n: NodeId) -> u64 {
        self.m.network.hash_time(n).unwrap_or(0)
    }
}

/// Tree as parent pointers: walk from `node` towards the sender.
fn tree_path(routes: &RouteAssignment, c: CopyId, node: NodeId) -> Option<Vec<NodeId>> {
    let tree = routes.tree(c);
    let entries = tree.entries();
    let mut path = vec![node];
    let mut cur = node;
    while cur != tree.sender() {
        cur = *entries.get(&cur)?;
        if path.contains(&cur) {
            return None;
        }
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Links of a copy's tree as (link, parent link).
fn tree_links(m: &SystemModel, routes: &RouteAssignment, c: CopyId) -> Vec<(LinkId, Option<LinkId>)> {
    let tree = routes.tree(c);
    let mut out = Vec::new();
    for (&n, &pred) in tree.entries() {
        if n == tree.sender() {
            continue;
        }
        let Some(l) = m.network.link_between(pred, n) else { continue };
        let parent = if pred == tree.sender() {
            None
        } else {
            tree.entries().get(&pred).and_then(|&pp| m.network.link_between(pp, pred))
        };
        out.push((l, parent));
    }
    out
}

/// Checks routes, schedule structure, precedence, security timing and
/// resource exclusivity of `sol` on the security-expanded `model`.
pub fn verify_solution(model: &SystemModel, sol: &Solution, opts: VerifyOptions) -> VerifyReport {
    let cx = Ctx {
        m: model,
        sol,
        out: RefCell::new(Vec::new()),
    };
    check_routes(&cx, opts.routing);
    let unscheduled = check_structure(&cx);
    check_precedence(&cx);
    check_security(&cx);
    check_latency(&cx);
    check_exclusive(&cx, opts.strictness);
    VerifyReport {
        violations: cx.out.into_inner(),
        unscheduled,
    }
}

fn check_routes(cx: &Ctx, mode: RoutingMode) {
    let m = cx.m;
    let routes = &cx.sol.routes;
    if routes.len() != m.copies().len() {
        cx.push("R3", vec![], format!("{} route trees for {} copies", routes.len(), m.copies().len()));
        return;
    }
    let mut load: BTreeMap<LinkId, (u128, u128)> = BTreeMap::new();
    for s in m.stream_ids() {
        let st = m.stream(s);
        let sender = m.task(st.sender).es;
        let receivers: BTreeSet<NodeId> = st.receivers.iter().map(|&r| m.task(r).es).collect();
        let mut used: BTreeMap<LinkId, Vec<CopyId>> = BTreeMap::new();
        for &c in &st.copies {
            let tree = routes.tree(c);
            if tree.sender() != sender {
                cx.push("R3", vec![cx.cname(c)], "tree rooted away from the sender".into());
                continue;
            }
            for (&n, &pred) in tree.entries() {
                if n == sender {
                    continue;
                }
                if m.network.link_between(pred, n).is_none() {
                    cx.push("R1", vec![cx.cname(c)], format!("no link {} -> {}", m.network.node(pred).name, m.network.node(n).name));
                }
                match tree_path(routes, c, n) {
                    None => cx.push("R1", vec![cx.cname(c)], format!("{} not connected to the sender", m.network.node(n).name)),
                    Some(p) => {
                        for &x in &p[1..p.len() - 1] {
                            if m.network.is_end_system(x) {
                                cx.push("R1", vec![cx.cname(c)], format!("forwarded by end-system {}", m.network.node(x).name));
                            }
                        }
                    }
                }
                // every node must lead to a receiver
                let leaf = !tree.entries().iter().any(|(&k, &v)| v == n && k != n);
                if leaf && !receivers.contains(&n) {
                    cx.push("R2", vec![cx.cname(c)], format!("route ends at {}", m.network.node(n).name));
                }
            }
            for &r in &receivers {
                if !tree.contains(r) {
                    cx.push("R3", vec![cx.cname(c)], format!("receiver {} not reached", m.network.node(r).name));
                }
            }
            for (l, _) in tree_links(m, routes, c) {
                used.entry(l).or_default().push(c);
            }
        }
        let period = cx.period(st.app);
        let bytes = st.size as u128
            + m.constants.overhead as u128
            + if st.secure { m.constants.mac_size as u128 } else { 0 };
        for (l, cs) in used {
            if cs.len() > 1 && mode == RoutingMode::Strict {
                let names = cs.iter().map(|&c| cx.cname(c)).collect();
                cx.push("R6", names, format!("share {}", cx.lname(l)));
            }
            // rate as a fraction bytes / period, accumulated over a common denominator
            let e = load.entry(l).or_insert((0, 1));
            let den = e.1.lcm(&(period as u128));
            e.0 = e.0 * (den / e.1) + bytes * (den / period as u128);
            e.1 = den;
        }
    }
    for (l, (num, den)) in load {
        let speed = m.network.link(l).speed;
        if num * *speed.denom() as u128 > *speed.numer() as u128 * den {
            cx.push("R5", vec![cx.lname(l)], format!("load {num}/{den} B/us above capacity"));
        }
    }
}

fn check_structure(cx: &Ctx) -> Vec<String> {
    let m = cx.m;
    let sched = &cx.sol.schedule;
    let mut incomplete = BTreeSet::new();
    if sched.tasks.len() != m.tasks().len() || sched.copies.len() != m.copies().len() {
        cx.push("S3", vec![], "schedule does not match the model".into());
        return m.apps().iter().map(|a| a.name.clone()).collect();
    }
    for t in m.task_ids() {
        let task = m.task(t);
        let period = cx.period(task.app);
        match sched.task(t) {
            None => {
                incomplete.insert(task.app);
            }
            Some(o) if o + task.wcet > period => {
                cx.push("S1", vec![cx.tname(t)], format!("runs until {} beyond period {period}", o + task.wcet));
            }
            _ => {}
        }
    }
    for c in m.copy_ids() {
        let st = m.copy_stream(c);
        let Some(cs) = sched.copy(c) else {
            incomplete.insert(st.app);
            continue;
        };
        if cx.sol.routes.len() != m.copies().len() {
            continue;
        }
        let period = cx.copy_period(c);
        let links: BTreeSet<LinkId> = tree_links(m, &cx.sol.routes, c).into_iter().map(|(l, _)| l).collect();
        let have: BTreeSet<LinkId> = cs.links.keys().copied().collect();
        if links != have {
            cx.push("S3", vec![cx.cname(c)], "link offsets differ from the route".into());
        }
        for (&l, &o) in &cs.links {
            let end = o + cx.link_len(model_stream(m, c), l);
            if end > period {
                cx.push("S1", vec![cx.cname(c), cx.lname(l)], format!("ends at {end} beyond period {period}"));
            }
        }
        let receivers: BTreeSet<NodeId> = st.receivers.iter().map(|&r| m.task(r).es).collect();
        if st.secure {
            if cs.sender_mac.is_none() {
                cx.push("S4", vec![cx.cname(c)], "missing MAC generation".into());
            }
            let macs: BTreeSet<NodeId> = cs.receiver_mac.keys().copied().collect();
            if macs != receivers {
                cx.push("S4", vec![cx.cname(c)], "MAC validations differ from receivers".into());
            }
            let sender = m.task(st.sender).es;
            for (n, o) in cs.sender_mac.map(|o| (sender, o)).into_iter().chain(cs.receiver_mac.iter().map(|(&n, &o)| (n, o))) {
                if o + cx.hash(n) > period {
                    cx.push("S1", vec![cx.cname(c), m.network.node(n).name.clone()], "MAC block beyond period".into());
                }
            }
        } else if cs.sender_mac.is_some() || !cs.receiver_mac.is_empty() {
            cx.push("S2", vec![cx.cname(c)], "MAC blocks on a plain stream".into());
        }
    }
    incomplete.into_iter().map(|a| m.app(a).name.clone()).collect()
}

fn model_stream(m: &SystemModel, c: CopyId) -> StreamId {
    m.copy(c).stream
}

/// Arrival of a copy on end-system `es`: end of MAC validation for secure
/// streams, end of the link into `es` otherwise.
fn arrival(cx: &Ctx, c: CopyId, cs: &CopySchedule, es: NodeId) -> Option<u64> {
    let m = cx.m;
    let s = model_stream(m, c);
    if m.stream(s).secure {
        return cs.receiver_mac.get(&es).map(|o| o + cx.hash(es));
    }
    let pred = *cx.sol.routes.tree(c).entries().get(&es)?;
    let l = m.network.link_between(pred, es)?;
    cs.links.get(&l).map(|o| o + cx.link_len(s, l))
}

fn check_precedence(cx: &Ctx) {
    let m = cx.m;
    let sched = &cx.sol.schedule;
    if cx.sol.routes.len() != m.copies().len() || sched.copies.len() != m.copies().len() {
        return;
    }
    for a in m.app_ids() {
        for &(x, y) in &m.app(a).dependencies {
            if let (Some(ox), Some(oy)) = (sched.task(x), sched.task(y)) {
                if ox + m.task(x).wcet > oy {
                    cx.push("T3", vec![cx.tname(x), cx.tname(y)], format!("consumer starts at {oy} before {}", ox + m.task(x).wcet));
                }
            }
        }
    }
    for c in m.copy_ids() {
        let s = model_stream(m, c);
        let st = m.stream(s);
        let Some(cs) = sched.copy(c) else { continue };
        let sender = m.task(st.sender).es;
        let links = tree_links(m, &cx.sol.routes, c);
        let len = |l| cx.link_len(s, l);
        if let Some(o) = sched.task(st.sender) {
            let end = o + m.task(st.sender).wcet;
            let first = match cs.sender_mac {
                Some(mac) if st.secure => Some(mac),
                _ => links
                    .iter()
                    .filter(|(_, p)| p.is_none())
                    .filter_map(|(l, _)| cs.links.get(l).copied())
                    .min(),
            };
            if let Some(f) = first {
                if f < end {
                    cx.push("T2", vec![cx.tname(st.sender), cx.cname(c)], format!("stream starts at {f} before sender ends at {end}"));
                }
            }
        }
        for &(l, parent) in &links {
            let Some(&o) = cs.links.get(&l) else { continue };
            let ready = match parent {
                Some(p) => cs.links.get(&p).map(|&po| po + len(p)),
                None if st.secure => cs.sender_mac.map(|mo| mo + cx.hash(sender)),
                None => None,
            };
            if let Some(r) = ready {
                if o < r {
                    cx.push("S7", vec![cx.cname(c), cx.lname(l)], format!("sent at {o} before {r}"));
                }
            }
        }
        if st.secure {
            for (&n, &o) in &cs.receiver_mac {
                let Some(&(l, _)) = links.iter().find(|(l, _)| m.network.link(*l).dst == n) else { continue };
                if let Some(&lo) = cs.links.get(&l) {
                    if o < lo + len(l) {
                        cx.push("S7", vec![cx.cname(c), m.network.node(n).name.clone()], format!("validated at {o} before arrival {}", lo + len(l)));
                    }
                }
            }
        }
        for &r in &st.receivers {
            let es = m.task(r).es;
            let (Some(or), Some(a)) = (sched.task(r), arrival(cx, c, cs, es)) else { continue };
            if or < a {
                cx.push("T3", vec![cx.cname(c), cx.tname(r)], format!("task starts at {or} before arrival {a}"));
            }
        }
    }
}

fn check_security(cx: &Ctx) {
    let m = cx.m;
    let sched = &cx.sol.schedule;
    let p = cx.sol.key_interval;
    if p == 0 || cx.sol.routes.len() != m.copies().len() || sched.copies.len() != m.copies().len() {
        return;
    }
    for c in m.copy_ids() {
        let s = model_stream(m, c);
        let st = m.stream(s);
        if !st.secure {
            continue;
        }
        let Some(cs) = sched.copy(c) else { continue };
        let src = m.task(st.sender).es;
        // latest arrival over all receivers' last hops
        let mut last = 0;
        for (l, _) in tree_links(m, &cx.sol.routes, c) {
            if m.network.is_end_system(m.network.link(l).dst) {
                if let Some(&o) = cs.links.get(&l) {
                    last = last.max(o + cx.link_len(s, l));
                }
            }
        }
        let phi = last / p + 1;
        for (&n, &o) in &cs.receiver_mac {
            let kv = m.task_ids().find(|&t| {
                let task = m.task(t);
                task.es == n && task.role == TaskRole::KeyVerify { src }
            });
            let Some(kv) = kv else {
                cx.push("S6", vec![cx.cname(c)], format!("no key verification on {}", m.network.node(n).name));
                continue;
            };
            let Some(ko) = sched.task(kv) else { continue };
            let need = phi * p + ko + m.task(kv).wcet;
            if o < need {
                cx.push("S6", vec![cx.cname(c), cx.tname(kv)], format!("validated at {o}, key usable from {need}"));
            }
        }
    }
}

fn check_latency(cx: &Ctx) {
    let m = cx.m;
    for a in m.app_ids() {
        let mut lo = u64::MAX;
        let mut hi = 0;
        for &t in &m.app(a).tasks {
            let Some(o) = cx.sol.schedule.tasks.get(t.0).copied().flatten() else { continue };
            lo = lo.min(o);
            hi = hi.max(o + m.task(t).wcet);
        }
        let period = cx.period(a);
        if lo != u64::MAX && hi - lo > period {
            cx.push("S1", vec![m.app(a).name.clone()], format!("latency {} above period {period}", hi - lo));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Res {
    Es(NodeId),
    Link(LinkId),
}

/// One absolute-time occupation: `[start, end)` and a label.
type Occ = (u64, u64, usize);

fn check_exclusive(cx: &Ctx, strict: Strictness) {
    let m = cx.m;
    let sched = &cx.sol.schedule;
    if cx.sol.routes.len() != m.copies().len() || sched.copies.len() != m.copies().len() {
        return;
    }
    let mut periods: Vec<u64> = m.app_ids().map(|a| cx.period(a)).collect();
    periods.sort_unstable();
    periods.dedup();
    let h = periods.iter().fold(1u64, |acc, &p| acc.lcm(&p));
    let mut labels: Vec<String> = Vec::new();
    let mut occ: BTreeMap<Res, Vec<Occ>> = BTreeMap::new();
    // isolation windows per link: [prev, o] when printed, queue holding otherwise
    let mut iso: BTreeMap<LinkId, Vec<Occ>> = BTreeMap::new();
    let add = |map: &mut BTreeMap<Res, Vec<Occ>>, r: Res, s: u64, e: u64, period: u64, label: usize| {
        for k in 0..h / period {
            map.entry(r).or_default().push((s + k * period, e + k * period, label));
        }
    };
    for t in m.task_ids() {
        let Some(o) = sched.task(t) else { continue };
        let task = m.task(t);
        labels.push(task.name.clone());
        add(&mut occ, Res::Es(task.es), o, o + task.wcet, cx.period(task.app), labels.len() - 1);
    }
    for c in m.copy_ids() {
        let Some(cs) = sched.copy(c) else { continue };
        let s = model_stream(m, c);
        let st = m.stream(s);
        let period = cx.copy_period(c);
        let name = cx.cname(c);
        if let Some(o) = cs.sender_mac {
            let es = m.task(st.sender).es;
            labels.push(format!("{name}@mac"));
            add(&mut occ, Res::Es(es), o, o + cx.hash(es), period, labels.len() - 1);
        }
        for (&n, &o) in &cs.receiver_mac {
            labels.push(format!("{name}@mac"));
            add(&mut occ, Res::Es(n), o, o + cx.hash(n), period, labels.len() - 1);
        }
        labels.push(name);
        let label = labels.len() - 1;
        for (l, parent) in tree_links(m, &cx.sol.routes, c) {
            let Some(&o) = cs.links.get(&l) else { continue };
            let end = o + cx.link_len(s, l);
            let prev = parent.and_then(|p| cs.links.get(&p).copied());
            add(&mut occ, Res::Link(l), o, end, period, label);
            if let Some(po) = prev {
                for k in 0..h / period {
                    let shift = k * period;
                    match strict {
                        Strictness::Printed => iso.entry(l).or_default().push((po + shift, o + shift, label)),
                        Strictness::Queue => iso.entry(l).or_default().push((po + shift, end + shift, label)),
                    }
                }
            } else if strict == Strictness::Queue {
                for k in 0..h / period {
                    iso.entry(l).or_default().push((o + k * period, end + k * period, label));
                }
            }
        }
    }
    let mut direct: BTreeMap<LinkId, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for (r, mut list) in occ {
        let what = match r {
            Res::Es(n) => m.network.node(n).name.clone(),
            Res::Link(l) => cx.lname(l),
        };
        let found = overlaps(&mut list);
        for &(a, b) in &found {
            cx.push("S8", vec![labels[a].clone(), labels[b].clone(), what.clone()], "occupations overlap".into());
        }
        if let Res::Link(l) = r {
            direct.insert(l, found);
        }
    }
    for (l, mut list) in iso {
        let seen = direct.remove(&l).unwrap_or_default();
        for (a, b) in overlaps(&mut list) {
            if !seen.contains(&(a, b)) {
                cx.push("S9", vec![labels[a].clone(), labels[b].clone(), cx.lname(l)], "queue isolation violated".into());
            }
        }
    }
}

/// Distinct label pairs whose intervals intersect in more than an end point.
fn overlaps(list: &mut [Occ]) -> BTreeSet<(usize, usize)> {
    list.sort_unstable();
    let mut found = BTreeSet::new();
    for i in 0..list.len() {
        let (_, e, a) = list[i];
        for &(s2, _, b) in &list[i + 1..] {
            if s2 >= e {
                break;
            }
            if a != b {
                found.insert((a.min(b), a.max(b)));
            }
        }
    }
    found
}

/// Per stream: whether some copy still reaches every receiver when all
/// `failed` links are down.
pub fn fault_tolerance_check(model: &SystemModel, routes: &RouteAssignment, failed: &BTreeSet<LinkId>) -> Vec<bool> {
    model
        .stream_ids()
        .map(|s| {
            let st = model.stream(s);
            let receivers: Vec<NodeId> = st.receivers.iter().map(|&r| model.task(r).es).collect();
            st.copies.iter().any(|&c| {
                receivers.iter().all(|&r| match tree_path(routes, c, r) {
                    Some(p) => p.windows(2).all(|w| match model.network.link_between(w[0], w[1]) {
                        Some(l) => !failed.contains(&l),
                        None => false,
                    }),
                    None => false,
                })
            })
        })
        .collect()
}

/// Streams that lose delivery under some set of `rl - 1` failed links.
/// Only links used by the stream are enumerated.
pub fn fault_tolerance_exhaustive(model: &SystemModel, routes: &RouteAssignment) -> Vec<StreamId> {
    let mut bad = Vec::new();
    for s in model.stream_ids() {
        let st = model.stream(s);
        let k = st.rl as usize - 1;
        let used: Vec<LinkId> = st
            .copies
            .iter()
            .flat_map(|&c| tree_links(model, routes, c).into_iter().map(|(l, _)| l))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut ok = true;
        for_each_subset(&used, k.min(used.len()), &mut |set| {
            if ok {
                let failed: BTreeSet<LinkId> = set.iter().copied().collect();
                ok = fault_tolerance_check(model, routes, &failed)[s.0];
            }
        });
        if !ok {
            bad.push(s);
        }
    }
    bad
}

fn for_each_subset(items: &[LinkId], k: usize, f: &mut impl FnMut(&[LinkId])) {
    fn rec(items: &[LinkId], k: usize, start: usize, cur: &mut Vec<LinkId>, f: &mut impl FnMut(&[LinkId])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::new(), f);
}
