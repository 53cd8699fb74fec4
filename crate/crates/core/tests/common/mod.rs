//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use tsn_synth::annealer::{anneal, SAParams};
use tsn_synth::exact::{solve_pipeline_exact, ExactPipelineOptions};
use tsn_synth::model::{expand_security_model, LinkId, NodeId, SystemModel};
use tsn_synth::schedule::{link_duration, mac_duration, Solution};
use tsn_synth::tesla::model_p_int;
use tsn_synth::toolkit::{generate_test_case, TestCaseSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Res {
    Es(NodeId),
    Link(LinkId),
}

/// Every busy interval of one hyperperiod, per resource, from the raw
/// offsets of `sol`.
pub fn expand(model: &SystemModel, sol: &Solution) -> BTreeMap<Res, Vec<(u64, u64, String)>> {
    let h = model.hyperperiod().unwrap();
    let mut out: BTreeMap<Res, Vec<(u64, u64, String)>> = BTreeMap::new();
    let mut push = |r: Res, o: u64, len: u64, period: u64, name: String| {
        for k in 0..h / period {
            out.entry(r).or_default().push((o + k * period, o + k * period + len, name.clone()));
        }
    };
    for t in model.task_ids() {
        if let Some(o) = sol.schedule.task(t) {
            let task = model.task(t);
            push(Res::Es(task.es), o, task.wcet, model.task_period(t), task.name.clone());
        }
    }
    for c in model.copy_ids() {
        let Some(cs) = sol.schedule.copy(c) else { continue };
        let s = model.copy(c).stream;
        let period = model.copy_period(c);
        let name = model.copy_name(c);
        if let Some(o) = cs.sender_mac {
            let src = model.sender_es(s);
            push(Res::Es(src), o, mac_duration(model, src), period, name.clone());
        }
        for (&l, &o) in &cs.links {
            push(Res::Link(l), o, link_duration(model, s, l), period, name.clone());
        }
        for (&n, &o) in &cs.receiver_mac {
            push(Res::Es(n), o, mac_duration(model, n), period, name.clone());
        }
    }
    for v in out.values_mut() {
        v.sort();
    }
    out
}

/// First pair of intervals that share a resource at the same instant.
pub fn first_collision(model: &SystemModel, sol: &Solution) -> Option<String> {
    for (r, v) in expand(model, sol) {
        for w in v.windows(2) {
            if w[1].0 < w[0].1 {
                return Some(format!("{r:?}: {} [{}, {}) and {} [{}, {})", w[0].2, w[0].0, w[0].1, w[1].2, w[1].0, w[1].1));
            }
        }
    }
    None
}

/// Link windows with touching intervals merged.
pub fn merged_link_windows(model: &SystemModel, sol: &Solution) -> BTreeMap<LinkId, Vec<(u64, u64)>> {
    let mut out = BTreeMap::new();
    for (r, v) in expand(model, sol) {
        let Res::Link(l) = r else { continue };
        let mut merged: Vec<(u64, u64)> = Vec::new();
        for (s, e, _) in v {
            match merged.last_mut() {
                Some(m) if s <= m.1 => m.1 = m.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        out.insert(l, merged);
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Largest key interval by a scan over every candidate below `h`.
pub fn p_int_oracle(apps: &[(u64, u32)], h: u64) -> Option<u64> {
    let g = apps.iter().fold(0, |acc, &(t, _)| gcd(acc, t));
    (1..=h).rev().find(|&p| {
        h.is_multiple_of(p) && (p % g == 0 || g % p == 0) && apps.iter().all(|&(t, c)| p * (c as u64 + 1) <= t)
    })
}

/// Security-expanded model with the optimal key interval bound.
pub fn bind(model: &SystemModel) -> (SystemModel, u64) {
    let x = expand_security_model(model).unwrap();
    let p = model_p_int(&x).unwrap();
    (x.with_key_interval(p), p)
}

pub fn tiny_spec(seed: u64) -> TestCaseSpec {
    TestCaseSpec {
        label: "tiny".into(),
        n_es: 3 + (seed % 2) as usize,
        n_sw: 1 + seed.is_multiple_of(3) as usize,
        n_tasks: 4,
        dag_size: (2, 4),
        periods: vec![1000, 2000],
        seed,
        ..Default::default()
    }
}

/// Seeded tiny instances with at most three applications.
pub fn tiny_instances(n: usize) -> Vec<SystemModel> {
    (0..)
        .map(|s| generate_test_case(&tiny_spec(s)).unwrap())
        .filter(|m| m.apps().len() <= 3)
        .take(n)
        .collect()
}

pub fn small_spec(seed: u64) -> TestCaseSpec {
    TestCaseSpec {
        label: "small".into(),
        n_es: 4 + (seed % 5) as usize,
        n_sw: 2 + (seed % 3) as usize,
        n_tasks: 5 + (seed % 6) as usize,
        seed,
        ..Default::default()
    }
}

pub fn exact_opts(secs: u64) -> ExactPipelineOptions {
    let mut o = ExactPipelineOptions::default();
    o.routing.time_limit = std::time::Duration::from_secs(secs);
    o.schedule.time_limit = std::time::Duration::from_secs(secs);
    o
}

pub fn exact(model: &SystemModel, secs: u64) -> Option<(SystemModel, Solution)> {
    solve_pipeline_exact(model, &exact_opts(secs)).ok().map(|r| (r.model, r.solution))
}

/// Annealing with an iteration budget only, so the result is reproducible.
pub fn sa(model: &SystemModel, seed: u64, iterations: u64, target: Option<u64>) -> (SystemModel, Solution, bool) {
    let (bound, p) = bind(model);
    let params = SAParams { seed, max_iterations: Some(iterations), time_limit: None, target_cost: target, ..Default::default() };
    let o = anneal(&bound, &params).unwrap();
    let feasible = o.best.feasible();
    let sol = o.best.to_solution(p);
    (bound, sol, feasible)
}

/// End-systems attached to one or two switches of a partially meshed switch
/// core. `mesh` selects switch pairs, `attach` the switches of every
/// end-system (a second switch when the pair differs).
pub fn mesh_network(n_sw: usize, mesh: &[bool], attach: &[(usize, usize)]) -> tsn_synth::model::Network {
    use tsn_synth::model::{speed_from_mbps, Network};
    let mut net = Network::new();
    let sw: Vec<NodeId> = (0..n_sw).map(|i| net.add_switch(&format!("SW{i}"))).collect();
    let speed = speed_from_mbps(100);
    let mut bit = mesh.iter().cycle();
    for i in 0..n_sw {
        for j in i + 1..n_sw {
            // keep the core connected through a chain
            if j == i + 1 || *bit.next().unwrap() {
                net.connect(sw[i], sw[j], speed);
            }
        }
    }
    for (k, &(a, b)) in attach.iter().enumerate() {
        let e = net.add_end_system(&format!("ES{k}"), 10);
        net.connect(e, sw[a % n_sw], speed);
        if b % n_sw != a % n_sw {
            net.connect(e, sw[b % n_sw], speed);
        }
    }
    net
}
