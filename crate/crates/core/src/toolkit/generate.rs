//! Synthetic topologies and application sets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{speed_from_mbps, GlobalConstants, Network, NodeId, SystemModel, TaskId};
use crate::routing::disjoint_paths;

const SWITCH_DEGREE: usize = 4;
const ES_LINKS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestCaseSpec {
    pub label: String,
    pub n_es: usize,
    pub n_sw: usize,
    pub n_tasks: usize,
    /// Inclusive stream payload range in bytes.
    pub stream_size: (u64, u64),
    /// WCET upper bound as a fraction of the period.
    pub wcet_cap: f64,
    pub secure_prob: f64,
    /// Inclusive redundancy level range.
    pub rl: (u32, u32),
    /// Candidate periods in microseconds.
    pub periods: Vec<u64>,
    pub p_edge: f64,
    /// Layers per DAG.
    pub depth: usize,
    /// Inclusive number of tasks drawn into one DAG before it is split
    /// into connected applications.
    pub dag_size: (usize, usize),
    pub link_mbps: u64,
    pub hash_time: u64,
    pub seed: u64,
}

impl Default for TestCaseSpec {
    fn default() -> Self {
        Self {
            label: "default".into(),
            n_es: 16,
            n_sw: 8,
            n_tasks: 24,
            stream_size: (1, 1500),
            wcet_cap: 0.06,
            secure_prob: 0.3,
            rl: (1, 3),
            periods: vec![10_000, 15_000, 20_000, 50_000],
            p_edge: 0.5,
            depth: 3,
            dag_size: (3, 6),
            link_mbps: 1000,
            hash_time: 10,
            seed: 0,
        }
    }
}

impl TestCaseSpec {
    /// One of the four impact batches: large (1000-1500 B) or small
    /// (1-250 B) streams, large (10 %) or small (2 %) tasks.
    pub fn impact_batch(large_streams: bool, large_tasks: bool, seed: u64) -> Self {
        let label = format!(
            "{} streams, {} tasks",
            if large_streams { "large" } else { "small" },
            if large_tasks { "large" } else { "small" }
        );
        Self {
            label,
            stream_size: if large_streams { (1000, 1500) } else { (1, 250) },
            wcet_cap: if large_tasks { 0.10 } else { 0.02 },
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.into()));
        if self.n_es == 0 || self.n_sw == 0 || self.n_tasks == 0 {
            return bad("counts must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.secure_prob) || !(0.0..=1.0).contains(&self.p_edge) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.wcet_cap > 0.0 && self.wcet_cap <= 1.0) {
            return bad("wcet_cap must lie in (0, 1]");
        }
        if self.stream_size.0 == 0 || self.stream_size.0 > self.stream_size.1 {
            return bad("stream_size must be a non-empty positive range");
        }
        if self.rl.0 == 0 || self.rl.0 > self.rl.1 {
            return bad("rl must be a non-empty positive range");
        }
        if self.periods.is_empty() || self.periods.contains(&0) {
            return bad("periods must be non-empty and positive");
        }
        if self.depth == 0 || self.dag_size.0 == 0 || self.dag_size.0 > self.dag_size.1 {
            return bad("depth and dag_size must be positive");
        }
        if self.link_mbps == 0 || self.hash_time == 0 {
            return bad("link speed and hash time must be positive");
        }
        Ok(())
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Indices of `points` ordered by distance to `p`, ties by index.
fn by_distance(points: &[(f64, f64)], p: (f64, f64)) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| dist2(points[a], p).total_cmp(&dist2(points[b], p)).then(a.cmp(&b)));
    idx
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut x = x;
    while parent[x] != r {
        let next = parent[x];
        parent[x] = r;
        x = next;
    }
    r
}

/// Random geometric topology with 1 Gbit/s links and 10 us hashing.
pub fn generate_topology(n_sw: usize, n_es: usize, seed: u64) -> Network {
    build_topology(n_sw, n_es, 1000, 10, seed)
}

fn build_topology(n_sw: usize, n_es: usize, mbps: u64, hash: u64, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = || (rng.gen::<f64>(), rng.gen::<f64>());
    let sw_pts: Vec<_> = (0..n_sw).map(|_| point()).collect();
    let es_pts: Vec<_> = (0..n_es).map(|_| point()).collect();

    let speed = speed_from_mbps(mbps);
    let mut net = Network::new();
    let sws: Vec<NodeId> = (0..n_sw).map(|i| net.add_switch(&format!("SW{i}"))).collect();
    let cap = SWITCH_DEGREE.min(n_sw.saturating_sub(1));
    let mut adj = vec![vec![false; n_sw]; n_sw];
    let mut degree = vec![0usize; n_sw];
    let mut parent: Vec<usize> = (0..n_sw).collect();
    let link = |net: &mut Network, adj: &mut Vec<Vec<bool>>, degree: &mut Vec<usize>, parent: &mut Vec<usize>, i: usize, j: usize| {
        net.connect(sws[i], sws[j], speed);
        adj[i][j] = true;
        adj[j][i] = true;
        degree[i] += 1;
        degree[j] += 1;
        let (a, b) = (find(parent, i), find(parent, j));
        parent[a] = b;
    };
    for i in 0..n_sw {
        for j in by_distance(&sw_pts, sw_pts[i]) {
            if degree[i] >= cap {
                break;
            }
            if j != i && !adj[i][j] && degree[j] < cap {
                link(&mut net, &mut adj, &mut degree, &mut parent, i, j);
            }
        }
    }
    // join components through their closest switch pair
    loop {
        let root = find(&mut parent, 0);
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n_sw {
            if find(&mut parent, i) != root {
                continue;
            }
            for j in 0..n_sw {
                if find(&mut parent, j) == root {
                    continue;
                }
                let d = dist2(sw_pts[i], sw_pts[j]);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        link(&mut net, &mut adj, &mut degree, &mut parent, i, j);
    }

    for (k, &p) in es_pts.iter().enumerate() {
        let es = net.add_end_system(&format!("ES{k}"), hash);
        for j in by_distance(&sw_pts, p).into_iter().take(ES_LINKS.min(n_sw)) {
            net.connect(es, sws[j], speed);
        }
    }
    net
}

/// Random application DAGs on the end-systems of `network`.
///
/// Tasks are drawn in groups of `dag_size`; each group becomes a layered
/// DAG whose connected components are separate applications. A task's
/// edges to other end-systems form one multicast stream, edges within an
/// end-system become dependencies. Redundancy levels are capped at the
/// number of link-disjoint paths to every receiver.
pub fn generate_applications(spec: &TestCaseSpec, network: Network, seed: u64) -> Result<SystemModel> {
    spec.validate()?;
    let ess: Vec<NodeId> = network.end_systems().collect();
    if ess.is_empty() {
        return Err(Error::Argument("network has no end-systems".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SystemModel::new(network, GlobalConstants::default());

    let mut placement: Vec<NodeId> = Vec::new();
    let mut next_es = |rng: &mut ChaCha8Rng| {
        if placement.is_empty() {
            placement = ess.clone();
            placement.shuffle(rng);
        }
        placement.pop().expect("refilled")
    };

    let (mut n_apps, mut n_tasks, mut n_streams) = (0, 0, 0);
    let mut remaining = spec.n_tasks;
    while remaining > 0 {
        let size = rng.gen_range(spec.dag_size.0..=spec.dag_size.1).min(remaining);
        remaining -= size;
        let layer: Vec<usize> = (0..size).map(|_| rng.gen_range(0..spec.depth)).collect();
        let mut edges = Vec::new();
        for u in 0..size {
            for v in 0..size {
                if layer[u] < layer[v] && rng.gen_bool(spec.p_edge) {
                    edges.push((u, v));
                }
            }
        }
        let mut parent: Vec<usize> = (0..size).collect();
        for &(u, v) in &edges {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            parent[a] = b;
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for u in 0..size {
            comps.entry(find(&mut parent, u)).or_default().push(u);
        }
        let mut comps: Vec<Vec<usize>> = comps.into_values().collect();
        comps.sort();

        for comp in comps {
            let period = *spec.periods.choose(&mut rng).expect("non-empty periods");
            let app = model.add_application(&format!("app{n_apps}"), period);
            n_apps += 1;
            let max_wcet = ((spec.wcet_cap * period as f64).floor() as u64).max(1);
            let mut ids: BTreeMap<usize, TaskId> = BTreeMap::new();
            for &u in &comp {
                let es = next_es(&mut rng);
                let wcet = rng.gen_range(1..=max_wcet);
                ids.insert(u, model.add_task(app, &format!("t{n_tasks}"), es, wcet));
                n_tasks += 1;
            }
            for &u in &comp {
                let tu = ids[&u];
                let src = model.task(tu).es;
                let mut receivers = Vec::new();
                for &(_, v) in edges.iter().filter(|e| e.0 == u) {
                    let tv = ids[&v];
                    if model.task(tv).es == src {
                        model.add_dependency(app, tu, tv);
                    } else {
                        receivers.push(tv);
                    }
                }
                if receivers.is_empty() {
                    continue;
                }
                let size = rng.gen_range(spec.stream_size.0..=spec.stream_size.1);
                let mut rl = rng.gen_range(spec.rl.0..=spec.rl.1);
                // never ask for more copies than there are disjoint paths
                for &r in &receivers {
                    let dst = model.task(r).es;
                    let n = disjoint_paths(&model.network, src, dst, rl as usize, |_| 1)?.len() as u32;
                    rl = rl.min(n.max(1));
                }
                let secure = rng.gen_bool(spec.secure_prob);
                model.add_stream(app, &format!("s{n_streams}"), tu, &receivers, size, rl, secure);
                n_streams += 1;
            }
        }
    }
    // the key stream of a sender carries the largest RL of its secure
    // streams to every one of their receivers
    let mut cap: BTreeMap<NodeId, u32> = BTreeMap::new();
    for st in model.streams().iter().filter(|s| s.secure) {
        let src = model.task(st.sender).es;
        for &r in &st.receivers {
            let dst = model.task(r).es;
            let n = disjoint_paths(&model.network, src, dst, spec.rl.1 as usize, |_| 1)?.len() as u32;
            let c = cap.entry(src).or_insert(u32::MAX);
            *c = (*c).min(n.max(1));
        }
    }
    model.rebuild(|s| match s.secure {
        true => (s.rl.min(cap[&model.task(s.sender).es]), true),
        false => (s.rl, false),
    })
}

/// Topology and applications from one spec and its seed.
pub fn generate_test_case(spec: &TestCaseSpec) -> Result<SystemModel> {
    spec.validate()?;
    let net = build_topology(spec.n_sw, spec.n_es, spec.link_mbps, spec.hash_time, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    generate_applications(spec, net, rng.gen())
}
