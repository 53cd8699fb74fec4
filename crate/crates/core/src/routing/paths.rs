//! Loop-free paths between end-systems that never pass through another
//! end-system. Ties between equal-weight paths are broken by comparing the
//! node-id sequences lexicographically, so results are reproducible.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use crate::error::{Error, Result};
use crate::model::{LinkId, Network, NodeId};

pub type Path = Vec<NodeId>;

/// Sum of link weights along a path.
pub fn path_weight(net: &Network, path: &[NodeId], weight: &impl Fn(LinkId) -> u64) -> u64 {
    path.windows(2)
        .map(|w| weight(net.link_between(w[0], w[1]).expect("path uses existing links")))
        .sum()
}

/// Links traversed by a path, in order.
pub fn path_links(net: &Network, path: &[NodeId]) -> Vec<LinkId> {
    path.windows(2)
        .map(|w| net.link_between(w[0], w[1]).expect("path uses existing links"))
        .collect()
}

fn check_endpoints(net: &Network, src: NodeId, dst: NodeId) -> Result<()> {
    if src == dst {
        return Err(Error::Argument("source and destination coincide".into()));
    }
    if !net.is_end_system(src) || !net.is_end_system(dst) {
        return Err(Error::Argument("paths connect end-systems only".into()));
    }
    Ok(())
}

/// Up to `k` shortest loop-free paths from `src` to `dst` (Yen), ordered by
/// weight and then by node sequence.
pub fn k_shortest_paths(
    net: &Network,
    src: NodeId,
    dst: NodeId,
    k: usize,
    weight: impl Fn(LinkId) -> u64,
) -> Result<Vec<Path>> {
    check_endpoints(net, src, dst)?;
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let no_nodes = HashSet::new();
    let no_links = HashSet::new();
    let Some(first) = lexmin_shortest(net, src, dst, &weight, &no_nodes, &no_links) else {
        return Ok(Vec::new());
    };
    let mut found: Vec<Path> = vec![first];
    let mut candidates: BTreeSet<(u64, Path)> = BTreeSet::new();
    while found.len() < k {
        let last = found.last().expect("non-empty").clone();
        for i in 0..last.len() - 1 {
            let spur = last[i];
            let root = &last[..=i];
            let mut banned_links = HashSet::new();
            for p in &found {
                if p.len() > i && p[..=i] == *root {
                    banned_links.insert(net.link_between(p[i], p[i + 1]).expect("link"));
                }
            }
            let banned_nodes: HashSet<NodeId> = root[..i].iter().copied().collect();
            if let Some(tail) = lexmin_shortest(net, spur, dst, &weight, &banned_nodes, &banned_links) {
                let mut full = root[..i].to_vec();
                full.extend(tail);
                if !found.contains(&full) {
                    candidates.insert((path_weight(net, &full, &weight), full));
                }
            }
        }
        match candidates.pop_first() {
            Some((_, p)) => found.push(p),
            None => break,
        }
    }
    Ok(found)
}

/// Shortest path from `src` to `dst` avoiding the banned nodes and links;
/// among equal-weight paths the lexicographically smallest node sequence.
fn lexmin_shortest(
    net: &Network,
    src: NodeId,
    dst: NodeId,
    weight: &impl Fn(LinkId) -> u64,
    banned_nodes: &HashSet<NodeId>,
    banned_links: &HashSet<LinkId>,
) -> Option<Path> {
    let usable = |n: NodeId| !banned_nodes.contains(&n) && (n == src || n == dst || net.is_switch(n));
    // distance to dst, computed backwards
    let mut dist = vec![u64::MAX; net.nodes().len()];
    dist[dst.0] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, dst)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v.0] {
            continue;
        }
        if v != dst && !net.is_switch(v) {
            // src reached; end-systems are never expanded further
            continue;
        }
        for &l in net.in_links(v) {
            if banned_links.contains(&l) {
                continue;
            }
            let u = net.link(l).src;
            if !usable(u) || u == dst {
                continue;
            }
            let nd = d + weight(l);
            if nd < dist[u.0] {
                dist[u.0] = nd;
                heap.push(Reverse((nd, u)));
            }
        }
    }
    if dist[src.0] == u64::MAX {
        return None;
    }
    let mut path = vec![src];
    let mut v = src;
    while v != dst {
        let next = net
            .out_links(v)
            .iter()
            .filter(|l| !banned_links.contains(l))
            .map(|&l| (net.link(l).dst, l))
            .filter(|&(u, l)| {
                usable(u) && dist[u.0] != u64::MAX && dist[u.0] + weight(l) == dist[v.0]
            })
            .map(|(u, _)| u)
            .min()?;
        path.push(next);
        v = next;
    }
    Some(path)
}

/// Every loop-free path from `src` to `dst` without intermediate
/// end-systems, sorted by hop count and then node sequence. Exponential;
/// meant for small topologies.
pub fn all_simple_paths(net: &Network, src: NodeId, dst: NodeId) -> Result<Vec<Path>> {
    check_endpoints(net, src, dst)?;
    let mut out = Vec::new();
    let mut path = vec![src];
    let mut on_path = vec![false; net.nodes().len()];
    on_path[src.0] = true;
    simple_paths_rec(net, dst, &mut path, &mut on_path, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

fn simple_paths_rec(
    net: &Network,
    dst: NodeId,
    path: &mut Vec<NodeId>,
    on_path: &mut Vec<bool>,
    out: &mut Vec<Path>,
) {
    let v = *path.last().expect("non-empty");
    for &l in net.out_links(v) {
        let u = net.link(l).dst;
        if on_path[u.0] {
            continue;
        }
        if u == dst {
            let mut p = path.clone();
            p.push(u);
            out.push(p);
        } else if net.is_switch(u) {
            on_path[u.0] = true;
            path.push(u);
            simple_paths_rec(net, dst, path, on_path, out);
            path.pop();
            on_path[u.0] = false;
        }
    }
}

/// Up to `n` pairwise link-disjoint paths from `src` to `dst` of minimum
/// total weight, found by successive shortest paths on the residual graph.
/// Weights must be positive. Paths are returned sorted by weight, then
/// node sequence.
pub fn disjoint_paths(
    net: &Network,
    src: NodeId,
    dst: NodeId,
    n: usize,
    weight: impl Fn(LinkId) -> u64,
) -> Result<Vec<Path>> {
    check_endpoints(net, src, dst)?;
    let usable = |v: NodeId| v == src || v == dst || net.is_switch(v);
    let mut flow = vec![false; net.links().len()];
    for _ in 0..n {
        // Bellman-Ford over forward arcs of free links and backward arcs of used ones
        let mut dist = vec![i64::MAX; net.nodes().len()];
        let mut via: Vec<Option<LinkId>> = vec![None; net.nodes().len()];
        dist[src.0] = 0;
        for _ in 0..net.nodes().len() {
            let mut changed = false;
            for l in net.link_ids() {
                let link = net.link(l);
                if !usable(link.src) || !usable(link.dst) || link.dst == src || link.src == dst {
                    continue;
                }
                let (from, to, w) = if flow[l.0] {
                    (link.dst, link.src, -(weight(l) as i64))
                } else {
                    (link.src, link.dst, weight(l) as i64)
                };
                if dist[from.0] != i64::MAX && dist[from.0] + w < dist[to.0] {
                    dist[to.0] = dist[from.0] + w;
                    via[to.0] = Some(l);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if dist[dst.0] == i64::MAX {
            break;
        }
        let mut v = dst;
        while v != src {
            let l = via[v.0].expect("reached nodes have a predecessor arc");
            flow[l.0] = !flow[l.0];
            let link = net.link(l);
            v = if flow[l.0] { link.src } else { link.dst };
        }
    }
    // the support of a minimum-cost flow with positive weights is acyclic
    let mut out = Vec::new();
    while let Some(&first) = net.out_links(src).iter().find(|l| flow[l.0]) {
        flow[first.0] = false;
        let mut path = vec![src, net.link(first).dst];
        while *path.last().expect("non-empty") != dst {
            let v = *path.last().expect("non-empty");
            let l = *net.out_links(v).iter().find(|l| flow[l.0]).expect("flow is conserved");
            flow[l.0] = false;
            path.push(net.link(l).dst);
        }
        out.push(path);
    }
    out.sort_by_key(|p| (path_weight(net, p, &weight), p.clone()));
    Ok(out)
}
