//! Routes as per-copy successor maps, routing costs and constraint checks,
//! candidate paths and an exact route optimiser.

mod exact;
pub mod paths;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CopyId, LinkId, Network, NodeId, StreamId, SystemModel};

pub use exact::{optimize_routes_exact, ExactRoutingOptions, RoutingOutcome};
pub use paths::{all_simple_paths, disjoint_paths, k_shortest_paths, Path};

/// Overlap penalty of the relaxed formulation.
pub const RELAXED_OVERLAP_WEIGHT: u64 = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    /// Copies of a stream may not share a directed link.
    #[default]
    Strict,
    /// Shared links are allowed and penalised in the cost.
    Relaxed,
}

/// Route of one stream copy, stored as the successor of every node on the
/// route towards the sender (`x(s, n)`). The sender is implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteTree {
    sender: NodeId,
    pred: BTreeMap<NodeId, NodeId>,
}

impl RouteTree {
    pub fn new(sender: NodeId) -> Self {
        Self {
            sender,
            pred: BTreeMap::new(),
        }
    }

    /// Builds the union of sender-rooted paths. Fails if two paths reach
    /// the same node from different predecessors.
    pub fn from_paths(sender: NodeId, paths: &[Path]) -> Option<Self> {
        let mut t = Self::new(sender);
        paths.iter().all(|p| t.add_path(p)).then_some(t)
    }

    /// Builds a tree from raw successor entries; no validation.
    pub fn from_successors(sender: NodeId, pred: BTreeMap<NodeId, NodeId>) -> Self {
        Self { sender, pred }
    }

    /// Whether `path` can be merged without giving a node two predecessors.
    pub fn compatible(&self, path: &[NodeId]) -> bool {
        path.first() == Some(&self.sender)
            && path.windows(2).all(|w| {
                w[1] != self.sender && self.pred.get(&w[1]).is_none_or(|&p| p == w[0])
            })
    }

    /// Merges a path; returns false and leaves the tree unchanged on conflict.
    pub fn add_path(&mut self, path: &[NodeId]) -> bool {
        if !self.compatible(path) {
            return false;
        }
        for w in path.windows(2) {
            self.pred.insert(w[1], w[0]);
        }
        true
    }

    pub fn sender(&self) -> NodeId {
        self.sender
    }

    /// `x(s, n)`: the sender maps to itself, off-route nodes to `None`.
    pub fn successor(&self, node: NodeId) -> Option<NodeId> {
        if node == self.sender {
            Some(node)
        } else {
            self.pred.get(&node).copied()
        }
    }

    pub fn entries(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.pred
    }

    /// Number of links, equal to the non-nil non-sender entries.
    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node == self.sender || self.pred.contains_key(&node)
    }

    pub fn children(&self, node: NodeId) -> Vec<NodeId> {
        self.pred
            .iter()
            .filter(|&(_, &p)| p == node)
            .map(|(&n, _)| n)
            .collect()
    }

    /// Link entering `node` on this route.
    pub fn link_into(&self, net: &Network, node: NodeId) -> Option<LinkId> {
        self.pred.get(&node).and_then(|&p| net.link_between(p, node))
    }

    /// Route links in breadth-first order from the sender, siblings by id.
    pub fn links(&self, net: &Network) -> Vec<LinkId> {
        let mut kids: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&n, &p) in &self.pred {
            kids.entry(p).or_default().push(n);
        }
        let mut out = Vec::with_capacity(self.pred.len());
        let mut queue = VecDeque::from([self.sender]);
        let mut seen = BTreeSet::from([self.sender]);
        while let Some(v) = queue.pop_front() {
            for &c in kids.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(c) {
                    if let Some(l) = net.link_between(v, c) {
                        out.push(l);
                    }
                    queue.push_back(c);
                }
            }
        }
        out
    }

    /// Node sequence from the sender to `node`, if it is reachable.
    pub fn path_to(&self, node: NodeId) -> Option<Path> {
        let mut p = vec![node];
        let mut v = node;
        while v != self.sender {
            v = *self.pred.get(&v)?;
            if p.len() > self.pred.len() + 1 {
                return None;
            }
            p.push(v);
        }
        p.reverse();
        Some(p)
    }

    /// Hop distance from the sender (`y(s, n)`).
    pub fn depth(&self, node: NodeId) -> Option<usize> {
        self.path_to(node).map(|p| p.len() - 1)
    }
}

/// Routes of every stream copy, indexed by [`CopyId`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RouteAssignment {
    trees: Vec<RouteTree>,
}

impl RouteAssignment {
    pub fn new(trees: Vec<RouteTree>) -> Self {
        Self { trees }
    }

    pub fn tree(&self, copy: CopyId) -> &RouteTree {
        &self.trees[copy.0]
    }

    pub fn trees(&self) -> &[RouteTree] {
        &self.trees
    }

    pub fn set_tree(&mut self, copy: CopyId, tree: RouteTree) {
        self.trees[copy.0] = tree;
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Routes built from one path per receiver and copy.
    pub fn from_paths(model: &SystemModel, paths: &[Vec<Path>]) -> Option<Self> {
        let trees = model
            .copy_ids()
            .map(|c| RouteTree::from_paths(model.sender_es(model.copy(c).stream), &paths[c.0]))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { trees })
    }
}

/// Number of copies of `stream` routed over `link`.
pub fn xsum(model: &SystemModel, routes: &RouteAssignment, stream: StreamId, link: LinkId) -> usize {
    let l = model.network.link(link);
    model
        .stream(stream)
        .copies
        .iter()
        .filter(|&&c| routes.tree(c).successor(l.dst) == Some(l.src) && routes.tree(c).sender() != l.dst)
        .count()
}

fn copies_per_link(model: &SystemModel, routes: &RouteAssignment, stream: StreamId) -> BTreeMap<LinkId, usize> {
    let mut count = BTreeMap::new();
    for &c in &model.stream(stream).copies {
        for l in routes.tree(c).links(&model.network) {
            *count.entry(l).or_insert(0) += 1;
        }
    }
    count
}

/// Total route length: links summed over all copies.
pub fn route_length(routes: &RouteAssignment) -> u64 {
    routes.trees().iter().map(|t| t.len() as u64).sum()
}

/// Links shared by two or more copies of the same stream, counted once per
/// stream and link.
pub fn overlap_count(model: &SystemModel, routes: &RouteAssignment) -> u64 {
    model
        .stream_ids()
        .map(|s| copies_per_link(model, routes, s).values().filter(|&&n| n >= 2).count() as u64)
        .sum()
}

/// Routing cost: total length, plus the weighted surplus of copies sharing
/// a link in relaxed mode.
pub fn routing_cost(model: &SystemModel, routes: &RouteAssignment, mode: RoutingMode) -> u64 {
    let length = route_length(routes);
    match mode {
        RoutingMode::Strict => length,
        RoutingMode::Relaxed => {
            let surplus: u64 = model
                .stream_ids()
                .map(|s| {
                    copies_per_link(model, routes, s)
                        .values()
                        .map(|&n| n.saturating_sub(1) as u64)
                        .sum::<u64>()
                })
                .sum();
            length + RELAXED_OVERLAP_WEIGHT * surplus
        }
    }
}

/// Bandwidth fraction used on every link; copies of one stream sharing a
/// link count once. Key streams are ignored while the key interval is
/// unbound.
pub fn bandwidth_utilization(model: &SystemModel, routes: &RouteAssignment) -> BTreeMap<LinkId, f64> {
    let mut util: BTreeMap<LinkId, f64> = model.network.link_ids().map(|l| (l, 0.0)).collect();
    for s in model.stream_ids() {
        let Some(rate) = stream_rate(model, s) else {
            continue;
        };
        for l in copies_per_link(model, routes, s).keys() {
            let speed = model.network.link(*l).speed;
            *util.get_mut(l).expect("known link") += rate / ratio_f64(speed);
        }
    }
    util
}

fn ratio_f64(r: crate::model::Speed) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Bytes per microsecond of a stream, `None` if its period is unbound.
pub(crate) fn stream_rate(model: &SystemModel, s: StreamId) -> Option<f64> {
    let st = model.stream(s);
    if st.key && model.key_interval().is_none() {
        return None;
    }
    Some(model.on_wire_size(s) as f64 / model.stream_period(s) as f64)
}

/// One violated routing constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingViolation {
    pub constraint: &'static str,
    pub stream: Option<StreamId>,
    pub copy: Option<CopyId>,
    pub detail: String,
}

impl fmt::Display for RoutingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.constraint, self.detail)
    }
}

/// Checks R1 to R5, and R6 in strict mode.
pub fn check_routing_constraints(
    model: &SystemModel,
    routes: &RouteAssignment,
    mode: RoutingMode,
) -> Vec<RoutingViolation> {
    let net = &model.network;
    let mut out = Vec::new();
    if routes.len() != model.copies().len() {
        out.push(RoutingViolation {
            constraint: "R3.1",
            stream: None,
            copy: None,
            detail: format!("{} routes for {} copies", routes.len(), model.copies().len()),
        });
        return out;
    }
    for c in model.copy_ids() {
        let s = model.copy(c).stream;
        let tree = routes.tree(c);
        let name = model.copy_name(c);
        let mut v = |constraint, detail: String| {
            out.push(RoutingViolation {
                constraint,
                stream: Some(s),
                copy: Some(c),
                detail: format!("{name}: {detail}"),
            })
        };
        let sender = model.sender_es(s);
        if tree.sender() != sender {
            v("R3.2", "route is not rooted at the sender".into());
        }
        let receivers = model.receiver_es(s);
        for &r in &receivers {
            if tree.successor(r).is_none() {
                v("R3.1", format!("receiver {} not reached", net.node_name(r)));
            }
        }
        for (&n, &p) in tree.entries() {
            if net.link_between(p, n).is_none() {
                v("R1", format!("no link {} -> {}", net.node_name(p), net.node_name(n)));
            }
            if net.is_end_system(n) && !receivers.contains(&n) {
                v("R3.3", format!("non-receiver end-system {} on route", net.node_name(n)));
            }
            if p != tree.sender() && net.is_end_system(p) {
                v("R3.3", format!("end-system {} forwards traffic", net.node_name(p)));
            }
            if p != tree.sender() && !tree.entries().contains_key(&p) {
                v("R2", format!("{} has no successor", net.node_name(p)));
            }
        }
        // a node whose chain never reaches the sender lies on a cycle
        for &n in tree.entries().keys() {
            let mut seen = BTreeSet::new();
            let mut x = n;
            while x != tree.sender() {
                if !seen.insert(x) {
                    v("R1", format!("cycle through {}", net.node_name(n)));
                    break;
                }
                match tree.entries().get(&x) {
                    Some(&p) => x = p,
                    None => break,
                }
            }
        }
        let with_children: BTreeSet<NodeId> = tree.entries().values().copied().collect();
        for &n in tree.entries().keys() {
            if !with_children.contains(&n) && !receivers.contains(&n) {
                v("R2", format!("route ends at {}", net.node_name(n)));
            }
        }
    }

    let mut load: BTreeMap<LinkId, f64> = BTreeMap::new();
    for s in model.stream_ids() {
        let Some(rate) = stream_rate(model, s) else {
            continue;
        };
        let shared = copies_per_link(model, routes, s);
        for (&l, &n) in &shared {
            *load.entry(l).or_insert(0.0) += rate;
            if mode == RoutingMode::Strict && n > 1 {
                out.push(RoutingViolation {
                    constraint: "R6",
                    stream: Some(s),
                    copy: None,
                    detail: format!("{} copies of {} share {}", n, model.stream(s).name, net.link_name(l)),
                });
            }
        }
    }
    for (l, used) in load {
        if used > ratio_f64(net.link(l).speed) * (1.0 + 1e-12) {
            out.push(RoutingViolation {
                constraint: "R5",
                stream: None,
                copy: None,
                detail: format!("link {} overloaded", net.link_name(l)),
            });
        }
    }
    out
}
