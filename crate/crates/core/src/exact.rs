//! Exact schedule synthesis and the routes → key interval → schedule
//! pipeline.
//!
//! Precedence, deadline and authentication constraints between offsets are
//! all of the form `x - y >= c`, so every linear relaxation has integral
//! vertices. Exclusive use of end-systems and queues is a disjunction per
//! pair of occupations; those are branched on lazily, only when the current
//! relaxation violates one. The authentication interval of a secure copy
//! is branched on as a range split.

use std::rc::Rc;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution as LpSolution, SolveOutcome, Variable};
use num_integer::Integer;

use crate::error::{Error, Result};
use crate::heuristic::{copy_blocks, schedule_heuristic, HeuristicOptions, Resource};
use crate::model::{expand_security_model, AppId, SystemModel, TaskId};
use crate::routing::{optimize_routes_exact, routing_cost, ExactRoutingOptions, RouteAssignment};
use crate::schedule::{CopySchedule, Schedule, Solution};
use crate::tesla::model_p_int;

#[derive(Clone, Debug)]
pub struct ExactScheduleOptions {
    pub node_limit: u64,
    pub time_limit: Duration,
    /// Seed the search with the list scheduler's result when it is complete.
    pub heuristic_incumbent: bool,
}

impl Default for ExactScheduleOptions {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
            time_limit: Duration::from_secs(30),
            heuristic_incumbent: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExactSchedule {
    pub schedule: Schedule,
    /// Sum of normal application latencies.
    pub objective: u64,
    /// Bound from the root relaxation.
    pub lower_bound: u64,
    pub optimal: bool,
    pub nodes: u64,
}

/// `x[a] - x[b] >= c`, or `x[a] >= c` when `b` is `None`, or `x[a] <= c`
/// when `upper` is set.
#[derive(Clone, Copy, Debug)]
struct Lin {
    a: usize,
    b: Option<usize>,
    c: i64,
    upper: bool,
}

impl Lin {
    fn ge(a: usize, b: usize, c: i64) -> Self {
        Self { a, b: Some(b), c, upper: false }
    }

    fn le(a: usize, c: i64) -> Self {
        Self { a, b: None, c, upper: true }
    }

    fn holds(&self, x: &[i64]) -> bool {
        match (self.b, self.upper) {
            (Some(b), _) => x[self.a] - x[b] >= self.c,
            (None, true) => x[self.a] <= self.c,
            (None, false) => x[self.a] >= self.c,
        }
    }
}

/// A time window `[x[start], x[end] + len)` held on a resource.
#[derive(Clone, Copy, Debug)]
struct Occupation {
    res: Resource,
    start: usize,
    end: usize,
    len: i64,
    period: i64,
}

/// Authentication data of one secure copy.
#[derive(Clone, Debug)]
struct Auth {
    /// (variable, length) of every link entering a receiver
    last: Vec<(usize, i64)>,
    /// (MAC validation variable, key verification variable, its wcet)
    recv: Vec<(usize, usize, i64)>,
    max_phi: i64,
}

struct Formulation {
    /// (lower, upper) bound of every variable
    bounds: Vec<(i64, i64)>,
    /// owning application of every variable
    owner: Vec<AppId>,
    objective: Vec<f64>,
    cons: Vec<Lin>,
    occ: Vec<Occupation>,
    auth: Vec<Auth>,
    task_var: Vec<usize>,
    /// per copy: block variables in `copy_blocks` order
    copy_vars: Vec<Vec<usize>>,
    p_int: i64,
}

fn formulate(model: &SystemModel, routes: &RouteAssignment) -> Formulation {
    let mut f = Formulation {
        bounds: Vec::new(),
        owner: Vec::new(),
        objective: Vec::new(),
        cons: Vec::new(),
        occ: Vec::new(),
        auth: Vec::new(),
        task_var: Vec::new(),
        copy_vars: Vec::new(),
        p_int: model.key_interval().expect("key interval bound") as i64,
    };
    let var = |f: &mut Formulation, lo: i64, hi: i64, app: AppId, obj: f64| {
        f.bounds.push((lo, hi));
        f.owner.push(app);
        f.objective.push(obj);
        f.bounds.len() - 1
    };
    for t in model.task_ids() {
        let task = model.task(t);
        let period = model.task_period(t) as i64;
        let v = var(&mut f, 0, period - task.wcet as i64, task.app, 0.0);
        f.task_var.push(v);
        f.occ.push(Occupation {
            res: Resource::Es(task.es),
            start: v,
            end: v,
            len: task.wcet as i64,
            period,
        });
    }
    for a in model.app_ids() {
        let app = model.app(a);
        let period = model.app_period(a) as i64;
        let w = if app.is_security() { 0.0 } else { 1.0 };
        let s = var(&mut f, 0, period, a, -w);
        let e = var(&mut f, 0, period, a, w);
        f.cons.push(Lin::ge(s, e, -period));
        for &t in &app.tasks {
            f.cons.push(Lin::ge(f.task_var[t.0], s, 0));
            f.cons.push(Lin::ge(e, f.task_var[t.0], model.task(t).wcet as i64));
        }
        for &(x, y) in &app.dependencies {
            f.cons.push(Lin::ge(f.task_var[y.0], f.task_var[x.0], model.task(x).wcet as i64));
        }
    }
    for c in model.copy_ids() {
        let st = model.copy_stream(c);
        let app = st.app;
        let period = model.copy_period(c) as i64;
        let blocks = copy_blocks(model, routes, c);
        let vars: Vec<usize> = blocks
            .iter()
            .map(|b| var(&mut f, 0, period - b.len as i64, app, 0.0))
            .collect();
        let sender_end = model.task(st.sender).wcet as i64;
        let mut auth = Auth {
            last: Vec::new(),
            recv: Vec::new(),
            max_phi: Integer::div_ceil(&period, &f.p_int),
        };
        for (i, b) in blocks.iter().enumerate() {
            let len = b.len as i64;
            match b.prev {
                None => f.cons.push(Lin::ge(vars[i], f.task_var[st.sender.0], sender_end)),
                Some(p) => f.cons.push(Lin::ge(vars[i], vars[p], blocks[p].len as i64)),
            }
            let start = match b.prev {
                Some(p) if b.on_link() && blocks[p].on_link() => vars[p],
                _ => vars[i],
            };
            f.occ.push(Occupation {
                res: b.resource,
                start,
                end: vars[i],
                len,
                period,
            });
            if let (Resource::Es(es), Some(p)) = (b.resource, b.prev) {
                auth.last.push((vars[p], blocks[p].len as i64));
                let src = model.sender_es(model.copy(c).stream);
                if let Some(kv) = model.key_verifier(src, es) {
                    auth.recv.push((vars[i], f.task_var[kv.0], model.task(kv).wcet as i64));
                }
            }
        }
        // receivers wait for the copy at their end-system
        for &r in &st.receivers {
            let es = model.task(r).es;
            let arrival = blocks.iter().enumerate().find(|(_, b)| match (b.resource, st.secure) {
                (Resource::Es(n), true) => n == es && b.prev.is_some(),
                (Resource::Link(l), false) => model.network.link(l).dst == es,
                _ => false,
            });
            if let Some((i, b)) = arrival {
                f.cons.push(Lin::ge(f.task_var[r.0], vars[i], b.len as i64));
            }
        }
        if st.secure {
            // interval 1 at the earliest; arrival no later than the last interval
            for &(v, len) in &auth.last {
                f.cons.push(Lin::le(v, auth.max_phi * f.p_int - 1 - len));
            }
            for &(r, kv, w) in &auth.recv {
                f.cons.push(Lin::ge(r, kv, w + f.p_int));
            }
            f.auth.push(auth);
        }
        f.copy_vars.push(vars);
    }
    f
}

/// Resources whose occupations exceed their capacity. With `links` false
/// only end-systems are checked.
fn overloaded(model: &SystemModel, f: &Formulation, links: bool) -> Option<String> {
    let mut load: std::collections::BTreeMap<Resource, (u128, u128)> = Default::default();
    for o in f.occ.iter().filter(|o| links || matches!(o.res, Resource::Es(_))) {
        let e = load.entry(o.res).or_insert((0, 1));
        let den = e.1.lcm(&(o.period as u128));
        // a queue holding only needs the own transmission time
        e.0 = e.0 * (den / e.1) + o.len as u128 * (den / o.period as u128);
        e.1 = den;
    }
    for (r, (num, den)) in load {
        if num > den {
            let name = match r {
                Resource::Es(n) => model.network.node_name(n).to_string(),
                Resource::Link(l) => model.network.link_name(l),
            };
            let kind = match r {
                Resource::Es(_) => "T4/T5",
                Resource::Link(_) => "S8",
            };
            return Some(format!("{name} over capacity ({kind}): utilisation {num}/{den}"));
        }
    }
    misfit(model, f)
}

/// An end-system block that cannot fit between the blocks whose period
/// divides some class `c`: folded onto a circle of length `c` those leave
/// no free arc as long as the block.
fn misfit(model: &SystemModel, f: &Formulation) -> Option<String> {
    let mut per_es: std::collections::BTreeMap<crate::model::NodeId, Vec<(usize, i64, i64)>> = Default::default();
    for (i, o) in f.occ.iter().enumerate() {
        if let Resource::Es(n) = o.res {
            per_es.entry(n).or_default().push((i, o.len, o.period));
        }
    }
    for (n, occ) in per_es {
        let mut classes: Vec<i64> = occ.iter().map(|o| o.2).collect();
        classes.sort_unstable();
        classes.dedup();
        for c in classes {
            let busy: i64 = occ.iter().filter(|o| c % o.2 == 0).map(|o| o.1 * (c / o.2)).sum();
            for &(i, len, period) in &occ {
                let own = if c % period == 0 { len * (c / period) } else { 0 };
                if len > c - (busy - own) {
                    return Some(format!(
                        "{} cannot fit a block of {len} between its period-{c} blocks (T4/T5), occupation {i}",
                        model.network.node_name(n)
                    ));
                }
            }
        }
    }
    None
}

/// A quick proof that no schedule exists for these routes: some resource
/// is over capacity, or a non-preemptive block has no gap long enough.
pub fn infeasibility_certificate(model: &SystemModel, routes: &RouteAssignment) -> Option<String> {
    model.key_interval()?;
    overloaded(model, &formulate(model, routes), true)
}

/// The end-system part of [`infeasibility_certificate`]. End-system blocks
/// do not depend on the routes, so a finding rules out every routing.
pub fn end_system_certificate(model: &SystemModel, routes: &RouteAssignment) -> Option<String> {
    model.key_interval()?;
    overloaded(model, &formulate(model, routes), false)
}

fn expr(l: &Lin, v: &[Variable]) -> (Vec<(Variable, f64)>, ComparisonOp, f64) {
    match (l.b, l.upper) {
        (Some(b), _) => (vec![(v[l.a], 1.0), (v[b], -1.0)], ComparisonOp::Ge, l.c as f64),
        (None, true) => (vec![(v[l.a], 1.0)], ComparisonOp::Le, l.c as f64),
        (None, false) => (vec![(v[l.a], 1.0)], ComparisonOp::Ge, l.c as f64),
    }
}

fn build_lp(f: &Formulation, keep: impl Fn(&Lin) -> bool) -> (Problem, Vec<Variable>) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = f
        .bounds
        .iter()
        .zip(&f.objective)
        .map(|(&(lo, hi), &o)| p.add_var(o, (lo as f64, hi as f64)))
        .collect();
    for l in f.cons.iter().filter(|l| keep(l)) {
        let (e, op, rhs) = expr(l, &vars);
        p.add_constraint(e, op, rhs);
    }
    (p, vars)
}

fn values(sol: &LpSolution, vars: &[Variable]) -> Vec<i64> {
    vars.iter().map(|&v| sol.var_value(v).round() as i64).collect()
}

/// First application whose own constraints already conflict.
fn blame(model: &SystemModel, f: &Formulation) -> String {
    for a in model.app_ids() {
        let own = |l: &Lin| f.owner[l.a] == a && l.b.is_none_or(|b| f.owner[b] == a);
        let (p, _) = build_lp(f, own);
        if matches!(p.solve(), Err(microlp::Error::Infeasible)) {
            return format!("application {} cannot meet its period", model.app(a).name);
        }
    }
    "precedence and authentication constraints conflict across applications".into()
}

/// A violated exclusion between occupations `i` and `j`, earliest first.
fn violated_pair(f: &Formulation, x: &[i64]) -> Option<(usize, usize)> {
    let mut best: Option<(i64, usize, usize)> = None;
    for i in 0..f.occ.len() {
        for j in i + 1..f.occ.len() {
            let (p, q) = (&f.occ[i], &f.occ[j]);
            if p.res != q.res {
                continue;
            }
            if !disjoint(p, q, x) {
                let t = x[p.start].min(x[q.start]);
                if best.is_none_or(|b| t < b.0) {
                    best = Some((t, i, j));
                }
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

fn disjoint(p: &Occupation, q: &Occupation, x: &[i64]) -> bool {
    let g = p.period.gcd(&q.period);
    let (sp, ep) = (x[p.start], x[p.end] + p.len);
    let (sq, eq) = (x[q.start], x[q.end] + q.len);
    let k = Integer::div_floor(&(sq - ep), &g);
    eq - sp <= (k + 1) * g
}

/// Constraints placing `q` in the k-th gap after `p`.
fn separation(p: &Occupation, q: &Occupation, k: i64) -> [Lin; 2] {
    let g = p.period.gcd(&q.period);
    [
        Lin::ge(q.start, p.end, p.len + k * g),
        Lin::ge(p.start, q.end, q.len - (k + 1) * g),
    ]
}

/// Authentication interval actually reached and whether validation waits
/// for it. Returns the index of a copy whose interval is not yet enforced.
fn violated_auth(f: &Formulation, x: &[i64], ranges: &[(i64, i64)]) -> Option<(usize, i64)> {
    for (i, a) in f.auth.iter().enumerate() {
        let last = a.last.iter().map(|&(v, len)| x[v] + len).max().unwrap_or(0);
        let phi = last / f.p_int + 1;
        if phi <= ranges[i].0 {
            continue;
        }
        if a.recv.iter().any(|&(r, kv, w)| x[r] < x[kv] + w + phi * f.p_int) {
            return Some((i, phi));
        }
    }
    None
}

struct Node {
    parent: Rc<LpSolution>,
    add: Vec<Lin>,
    ranges: Rc<Vec<(i64, i64)>>,
}

/// Minimum-latency schedule for fixed routes and key interval.
pub fn solve_schedule_exact(
    model: &SystemModel,
    routes: &RouteAssignment,
    p_int: u64,
    opts: &ExactScheduleOptions,
) -> Result<ExactSchedule> {
    if p_int == 0 {
        return Err(Error::Argument("key interval must be positive".into()));
    }
    let model = &model.clone().with_key_interval(p_int);
    let started = Instant::now();
    let f = formulate(model, routes);
    if let Some(why) = overloaded(model, &f, true) {
        return Err(Error::infeasible("schedule", why));
    }
    let (problem, vars) = build_lp(&f, |_| true);
    let root = match problem.solve() {
        Ok(SolveOutcome::Solution(s)) => s,
        Ok(SolveOutcome::Interrupted(_)) => return Err(Error::infeasible("schedule", "relaxation interrupted")),
        Err(microlp::Error::Infeasible) => return Err(Error::infeasible("schedule", blame(model, &f))),
        Err(e) => return Err(Error::infeasible("schedule", format!("solver failure: {e:?}"))),
    };
    let lower_bound = root.objective().round().max(0.0) as u64;

    let mut best: Option<(i64, Vec<i64>)> = None;
    if opts.heuristic_incumbent {
        let st = schedule_heuristic(model, routes, &HeuristicOptions::default());
        if st.infeasible.is_empty() {
            let x = heuristic_values(model, routes, &f, &st.schedule);
            best = Some((objective(&f, &x), x));
        }
    }

    let mut stack = vec![Node {
        parent: Rc::new(root),
        add: Vec::new(),
        ranges: Rc::new(f.auth.iter().map(|a| (1, a.max_phi)).collect()),
    }];
    let mut nodes = 0;
    let mut complete = true;
    while let Some(node) = stack.pop() {
        if let Some((b, _)) = &best {
            if node.parent.objective() >= *b as f64 - 0.5 {
                continue;
            }
        }
        if nodes >= opts.node_limit || started.elapsed() >= opts.time_limit {
            complete = false;
            break;
        }
        nodes += 1;
        let mut sol = Some((*node.parent).clone());
        for l in &node.add {
            let (e, op, rhs) = expr(l, &vars);
            sol = match sol.take().map(|s| s.add_constraint(e, op, rhs)) {
                Some(Ok(SolveOutcome::Solution(s))) => Some(s),
                _ => break,
            };
        }
        let Some(sol) = sol else { continue };
        let obj = sol.objective();
        if best.as_ref().is_some_and(|(b, _)| obj >= *b as f64 - 0.5) {
            continue;
        }
        let x = values(&sol, &vars);
        let sol = Rc::new(sol);
        if let Some((i, phi)) = violated_auth(&f, &x, &node.ranges) {
            let (lo, hi) = node.ranges[i];
            let a = &f.auth[i];
            let mut left = (*node.ranges).clone();
            left[i] = (lo, phi - 1);
            let mut right = (*node.ranges).clone();
            right[i] = (phi, hi);
            let earlier = a.last.iter().map(|&(v, len)| Lin::le(v, (phi - 1) * f.p_int - 1 - len)).collect();
            let later = a.recv.iter().map(|&(r, kv, w)| Lin::ge(r, kv, w + phi * f.p_int)).collect();
            stack.push(Node { parent: Rc::clone(&sol), add: earlier, ranges: Rc::new(left) });
            stack.push(Node { parent: sol, add: later, ranges: Rc::new(right) });
            continue;
        }
        if let Some((i, j)) = violated_pair(&f, &x) {
            let (p, q) = (f.occ[i], f.occ[j]);
            let g = p.period.gcd(&q.period);
            let d = x[q.start] - x[p.start];
            let mut ks: Vec<(i64, i64)> = (-(p.period / g) - 1..=q.period / g)
                .filter(|&k| separation_possible(&f, &p, &q, k))
                .map(|k| {
                    // relative placements admitted by gap k
                    let lo = x[p.end] + p.len - x[p.start] + k * g;
                    let hi = (k + 1) * g - (x[q.end] + q.len - x[q.start]);
                    let dist = if d < lo { lo - d } else if d > hi { d - hi } else { 0 };
                    (dist, k)
                })
                .collect();
            ks.sort_unstable();
            for &(_, k) in ks.iter().rev() {
                stack.push(Node {
                    parent: Rc::clone(&sol),
                    add: separation(&p, &q, k).to_vec(),
                    ranges: Rc::clone(&node.ranges),
                });
            }
            continue;
        }
        debug_assert!(f.cons.iter().all(|l| l.holds(&x)));
        best = Some((obj.round() as i64, x));
    }
    let Some((obj, x)) = best else {
        let why = if complete {
            "no exclusive placement of tasks and frames exists".to_string()
        } else {
            format!("search budget exhausted after {nodes} nodes without a schedule")
        };
        return Err(Error::infeasible("schedule", why));
    };
    Ok(ExactSchedule {
        schedule: extract(model, routes, &f, &x),
        objective: obj.max(0) as u64,
        lower_bound,
        optimal: complete,
        nodes,
    })
}

fn separation_possible(f: &Formulation, p: &Occupation, q: &Occupation, k: i64) -> bool {
    separation(p, q, k).iter().all(|l| {
        let b = l.b.expect("difference");
        f.bounds[l.a].1 - f.bounds[b].0 >= l.c
    })
}

fn objective(f: &Formulation, x: &[i64]) -> i64 {
    let mut total = 0.0;
    for (i, &c) in f.objective.iter().enumerate() {
        total += c * x[i] as f64;
    }
    total.round() as i64
}

fn heuristic_values(model: &SystemModel, routes: &RouteAssignment, f: &Formulation, s: &Schedule) -> Vec<i64> {
    let mut x = vec![0i64; f.bounds.len()];
    for t in model.task_ids() {
        x[f.task_var[t.0]] = s.task(t).expect("complete") as i64;
    }
    for c in model.copy_ids() {
        let cs = s.copy(c).expect("complete");
        for (b, &v) in copy_blocks(model, routes, c).iter().zip(&f.copy_vars[c.0]) {
            x[v] = match b.resource {
                Resource::Link(l) => cs.links[&l],
                Resource::Es(_) if b.prev.is_none() => cs.sender_mac.expect("secure"),
                Resource::Es(n) => cs.receiver_mac[&n],
            } as i64;
        }
    }
    // span variables follow the task variables
    let mut k = f.task_var.len();
    for a in model.app_ids() {
        let tasks: &[TaskId] = &model.app(a).tasks;
        let lo = tasks.iter().map(|t| x[f.task_var[t.0]]).min().unwrap_or(0);
        let hi = tasks.iter().map(|t| x[f.task_var[t.0]] + model.task(*t).wcet as i64).max().unwrap_or(0);
        x[k] = lo;
        x[k + 1] = hi;
        k += 2;
    }
    x
}

fn extract(model: &SystemModel, routes: &RouteAssignment, f: &Formulation, x: &[i64]) -> Schedule {
    let mut s = Schedule::empty(model);
    for t in model.task_ids() {
        s.tasks[t.0] = Some(x[f.task_var[t.0]] as u64);
    }
    for c in model.copy_ids() {
        let mut cs = CopySchedule::default();
        for (b, &v) in copy_blocks(model, routes, c).iter().zip(&f.copy_vars[c.0]) {
            let o = x[v] as u64;
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
        s.copies[c.0] = Some(cs);
    }
    s
}

#[derive(Clone, Debug, Default)]
pub struct ExactPipelineOptions {
    pub routing: ExactRoutingOptions,
    pub schedule: ExactScheduleOptions,
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    /// Security-expanded model with the key interval bound.
    pub model: SystemModel,
    pub solution: Solution,
    pub routing_cost: u64,
    pub schedule_cost: u64,
    pub routes_optimal: bool,
    pub schedule_optimal: bool,
}

/// Routes, then the key interval, then the schedule.
pub fn solve_pipeline_exact(model: &SystemModel, opts: &ExactPipelineOptions) -> Result<PipelineResult> {
    let expanded = if model.is_expanded() { model.clone() } else { expand_security_model(model)? };
    let routed = optimize_routes_exact(&expanded, &opts.routing)?;
    let p_int = model_p_int(&expanded)?;
    let bound = expanded.with_key_interval(p_int);
    let sched = solve_schedule_exact(&bound, &routed.routes, p_int, &opts.schedule)?;
    Ok(PipelineResult {
        routing_cost: routing_cost(&bound, &routed.routes, opts.routing.mode),
        schedule_cost: sched.objective,
        routes_optimal: routed.optimal,
        schedule_optimal: sched.optimal,
        solution: Solution {
            routes: routed.routes,
            key_interval: p_int,
            schedule: sched.schedule,
        },
        model: bound,
    })
}

#[cfg(test)]
mod tests;
