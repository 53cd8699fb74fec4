//! Domain model: network graph, applications with tasks and streams, the
//! generated TESLA key-distribution applications and global constants.
//!
//! Times are integer microseconds throughout. Link speeds are exact rational
//! bytes per microsecond so that transmission durations never drift.

mod security;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;

use crate::error::{Error, Result};

pub use security::expand_security_model;
pub use validate::{validate_model, Diagnostic};

/// Link transmission rate in bytes per microsecond.
pub type Speed = Ratio<u64>;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

id_type!(
    /// Index of a node (end-system or switch) in [`Network::nodes`].
    NodeId
);
id_type!(
    /// Index of a directed link in [`Network::links`].
    LinkId
);
id_type!(AppId);
id_type!(TaskId);
id_type!(
    /// A distinct stream; its redundant copies are [`CopyId`]s.
    StreamId
);
id_type!(
    /// One redundant copy (sub-stream) of a stream.
    CopyId
);

/// Converts a link speed in Mbit/s into bytes per microsecond.
pub fn speed_from_mbps(mbps: u64) -> Speed {
    Ratio::new(mbps, 8)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    EndSystem { hash_time: u64 },
    Switch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectedLink {
    pub src: NodeId,
    pub dst: NodeId,
    pub speed: Speed,
}

/// Directed network graph. Full-duplex cables are two directed links.
#[derive(Clone, Debug, Default)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<DirectedLink>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
    by_endpoints: HashMap<(NodeId, NodeId), LinkId>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_node(&mut self, name: &str, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
        });
        self.out_links.push(Vec::new());
        self.in_links.push(Vec::new());
        id
    }

    pub fn add_end_system(&mut self, name: &str, hash_time: u64) -> NodeId {
        self.add_node(name, NodeKind::EndSystem { hash_time })
    }

    pub fn add_switch(&mut self, name: &str) -> NodeId {
        self.add_node(name, NodeKind::Switch)
    }

    /// Adds one directed link. Prefer [`Network::connect`] for cables.
    pub fn add_directed_link(&mut self, src: NodeId, dst: NodeId, speed: Speed) -> LinkId {
        let id = LinkId(self.links.len());
        self.links.push(DirectedLink { src, dst, speed });
        self.out_links[src.0].push(id);
        self.in_links[dst.0].push(id);
        self.by_endpoints.insert((src, dst), id);
        id
    }

    /// Adds a full-duplex cable between `a` and `b`.
    pub fn connect(&mut self, a: NodeId, b: NodeId, speed: Speed) -> (LinkId, LinkId) {
        let ab = self.add_directed_link(a, b, speed);
        let ba = self.add_directed_link(b, a, speed);
        (ab, ba)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn link(&self, id: LinkId) -> &DirectedLink {
        &self.links[id.0]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).map(LinkId)
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn link_between(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.by_endpoints.get(&(src, dst)).copied()
    }

    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.0]
    }

    pub fn in_links(&self, node: NodeId) -> &[LinkId] {
        &self.in_links[node.0]
    }

    pub fn is_end_system(&self, node: NodeId) -> bool {
        matches!(self.nodes[node.0].kind, NodeKind::EndSystem { .. })
    }

    pub fn is_switch(&self, node: NodeId) -> bool {
        matches!(self.nodes[node.0].kind, NodeKind::Switch)
    }

    pub fn hash_time(&self, node: NodeId) -> Option<u64> {
        match self.nodes[node.0].kind {
            NodeKind::EndSystem { hash_time } => Some(hash_time),
            NodeKind::Switch => None,
        }
    }

    /// Overrides the hash time of an end-system; no effect on switches.
    pub fn set_hash_time(&mut self, node: NodeId, hash: u64) {
        if let NodeKind::EndSystem { hash_time } = &mut self.nodes[node.0].kind {
            *hash_time = hash;
        }
    }

    pub fn end_systems(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| self.is_end_system(n))
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| self.is_switch(n))
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn link_name(&self, id: LinkId) -> String {
        let l = &self.links[id.0];
        format!("{}->{}", self.node_name(l.src), self.node_name(l.dst))
    }

    /// Transmission time `ceil(bytes / speed)` of a frame on a link.
    pub fn transmission_time(&self, link: LinkId, bytes: u64) -> u64 {
        let speed = self.links[link.0].speed;
        (bytes * speed.denom()).div_ceil(*speed.numer())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Period {
    Fixed(u64),
    /// Bound to the TESLA key-disclosure interval once it is known.
    KeyInterval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppKind {
    Normal,
    /// Key distribution for the secure streams sent by `sender`.
    Security { sender: NodeId },
}

#[derive(Clone, Debug)]
pub struct Application {
    pub name: String,
    pub kind: AppKind,
    pub period: Period,
    pub tasks: Vec<TaskId>,
    pub streams: Vec<StreamId>,
    /// End-system-internal data dependencies (producer, consumer).
    pub dependencies: Vec<(TaskId, TaskId)>,
}

impl Application {
    pub fn is_security(&self) -> bool {
        matches!(self.kind, AppKind::Security { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskRole {
    Normal,
    KeyRelease,
    KeyVerify { src: NodeId },
}

#[derive(Clone, Debug)]
pub struct Task {
    pub name: String,
    pub app: AppId,
    pub es: NodeId,
    pub wcet: u64,
    pub role: TaskRole,
}

#[derive(Clone, Debug)]
pub struct Stream {
    pub name: String,
    pub app: AppId,
    pub sender: TaskId,
    pub receivers: Vec<TaskId>,
    pub size: u64,
    pub rl: u32,
    pub secure: bool,
    /// Key-disclosure stream of a security application.
    pub key: bool,
    pub copies: Vec<CopyId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubStream {
    pub stream: StreamId,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalConstants {
    pub overhead: u64,
    pub mtu: u64,
    pub key_size: u64,
    pub mac_size: u64,
    /// Clock synchronisation precision; carried as metadata only.
    pub sync_precision: u64,
}

impl Default for GlobalConstants {
    fn default() -> Self {
        Self {
            overhead: 0,
            mtu: 1500,
            key_size: 16,
            mac_size: 16,
            sync_precision: 1,
        }
    }
}

/// Network, applications and constants.
///
/// Security applications are appended by [`expand_security_model`]; the key
/// interval is bound with [`SystemModel::bind_key_interval`] once chosen.
#[derive(Clone, Debug)]
pub struct SystemModel {
    pub network: Network,
    pub constants: GlobalConstants,
    apps: Vec<Application>,
    tasks: Vec<Task>,
    streams: Vec<Stream>,
    copies: Vec<SubStream>,
    key_interval: Option<u64>,
    key_verifiers: BTreeMap<(NodeId, NodeId), TaskId>,
}

impl SystemModel {
    pub fn new(network: Network, constants: GlobalConstants) -> Self {
        Self {
            network,
            constants,
            apps: Vec::new(),
            tasks: Vec::new(),
            streams: Vec::new(),
            copies: Vec::new(),
            key_interval: None,
            key_verifiers: BTreeMap::new(),
        }
    }

    pub fn add_application(&mut self, name: &str, period: u64) -> AppId {
        self.push_app(name, AppKind::Normal, Period::Fixed(period))
    }

    fn push_app(&mut self, name: &str, kind: AppKind, period: Period) -> AppId {
        let id = AppId(self.apps.len());
        self.apps.push(Application {
            name: name.to_string(),
            kind,
            period,
            tasks: Vec::new(),
            streams: Vec::new(),
            dependencies: Vec::new(),
        });
        id
    }

    pub fn add_task(&mut self, app: AppId, name: &str, es: NodeId, wcet: u64) -> TaskId {
        self.push_task(app, name, es, wcet, TaskRole::Normal)
    }

    fn push_task(&mut self, app: AppId, name: &str, es: NodeId, wcet: u64, role: TaskRole) -> TaskId {
        let id = TaskId(self.tasks.len());
        self.tasks.push(Task {
            name: name.to_string(),
            app,
            es,
            wcet,
            role,
        });
        self.apps[app.0].tasks.push(id);
        id
    }

    /// Adds a stream and materialises its `rl` redundant copies.
    #[allow(clippy::too_many_arguments)]
    pub fn add_stream(
        &mut self,
        app: AppId,
        name: &str,
        sender: TaskId,
        receivers: &[TaskId],
        size: u64,
        rl: u32,
        secure: bool,
    ) -> StreamId {
        self.push_stream(app, name, sender, receivers, size, rl, secure, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_stream(
        &mut self,
        app: AppId,
        name: &str,
        sender: TaskId,
        receivers: &[TaskId],
        size: u64,
        rl: u32,
        secure: bool,
        key: bool,
    ) -> StreamId {
        let id = StreamId(self.streams.len());
        let copies = (0..rl.max(1))
            .map(|index| {
                let c = CopyId(self.copies.len());
                self.copies.push(SubStream { stream: id, index });
                c
            })
            .collect();
        self.streams.push(Stream {
            name: name.to_string(),
            app,
            sender,
            receivers: receivers.to_vec(),
            size,
            rl,
            secure,
            key,
            copies,
        });
        self.apps[app.0].streams.push(id);
        id
    }

    pub fn add_dependency(&mut self, app: AppId, from: TaskId, to: TaskId) {
        self.apps[app.0].dependencies.push((from, to));
    }

    pub fn apps(&self) -> &[Application] {
        &self.apps
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    pub fn copies(&self) -> &[SubStream] {
        &self.copies
    }

    pub fn app(&self, id: AppId) -> &Application {
        &self.apps[id.0]
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.0]
    }

    pub fn stream(&self, id: StreamId) -> &Stream {
        &self.streams[id.0]
    }

    pub fn copy(&self, id: CopyId) -> &SubStream {
        &self.copies[id.0]
    }

    pub fn copy_stream(&self, id: CopyId) -> &Stream {
        &self.streams[self.copies[id.0].stream.0]
    }

    pub fn app_ids(&self) -> impl Iterator<Item = AppId> {
        (0..self.apps.len()).map(AppId)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = TaskId> {
        (0..self.tasks.len()).map(TaskId)
    }

    pub fn stream_ids(&self) -> impl Iterator<Item = StreamId> {
        (0..self.streams.len()).map(StreamId)
    }

    pub fn copy_ids(&self) -> impl Iterator<Item = CopyId> {
        (0..self.copies.len()).map(CopyId)
    }

    pub fn normal_apps(&self) -> impl Iterator<Item = AppId> + '_ {
        self.app_ids().filter(|&a| !self.apps[a.0].is_security())
    }

    pub fn security_apps(&self) -> impl Iterator<Item = AppId> + '_ {
        self.app_ids().filter(|&a| self.apps[a.0].is_security())
    }

    pub fn is_expanded(&self) -> bool {
        self.apps.iter().any(Application::is_security)
    }

    pub fn task_by_name(&self, name: &str) -> Option<TaskId> {
        self.tasks.iter().position(|t| t.name == name).map(TaskId)
    }

    pub fn stream_by_name(&self, name: &str) -> Option<StreamId> {
        self.streams.iter().position(|s| s.name == name).map(StreamId)
    }

    pub fn app_by_name(&self, name: &str) -> Option<AppId> {
        self.apps.iter().position(|a| a.name == name).map(AppId)
    }

    /// Human-readable copy name, `stream#index`.
    pub fn copy_name(&self, id: CopyId) -> String {
        let c = self.copies[id.0];
        format!("{}#{}", self.streams[c.stream.0].name, c.index)
    }

    pub fn key_interval(&self) -> Option<u64> {
        self.key_interval
    }

    /// Fixes the period of all security applications.
    pub fn bind_key_interval(&mut self, p_int: u64) {
        self.key_interval = Some(p_int);
    }

    pub fn with_key_interval(mut self, p_int: u64) -> Self {
        self.bind_key_interval(p_int);
        self
    }

    /// Period of an application. Panics for a security application whose key
    /// interval has not been bound yet.
    pub fn app_period(&self, app: AppId) -> u64 {
        match self.apps[app.0].period {
            Period::Fixed(t) => t,
            Period::KeyInterval => self
                .key_interval
                .expect("key interval must be bound before security periods are used"),
        }
    }

    pub fn task_period(&self, task: TaskId) -> u64 {
        self.app_period(self.tasks[task.0].app)
    }

    pub fn stream_period(&self, stream: StreamId) -> u64 {
        self.app_period(self.streams[stream.0].app)
    }

    pub fn copy_period(&self, copy: CopyId) -> u64 {
        self.stream_period(self.copies[copy.0].stream)
    }

    /// Hyperperiod over the fixed application periods (and the key interval,
    /// which divides it when chosen by the interval optimiser).
    pub fn hyperperiod(&self) -> Result<u64> {
        let mut periods: Vec<u64> = self
            .apps
            .iter()
            .filter_map(|a| match a.period {
                Period::Fixed(t) => Some(t),
                Period::KeyInterval => None,
            })
            .collect();
        if let (Some(p), true) = (self.key_interval, self.is_expanded()) {
            periods.push(p);
        }
        hyperperiod(&periods)
    }

    /// Distinct periods in use, ascending.
    pub fn period_classes(&self) -> Vec<u64> {
        let set: BTreeSet<u64> = self.app_ids().map(|a| self.app_period(a)).collect();
        set.into_iter().collect()
    }

    pub fn sender_es_of_task(&self, task: TaskId) -> NodeId {
        self.tasks[task.0].es
    }

    pub fn sender_es(&self, stream: StreamId) -> NodeId {
        self.tasks[self.streams[stream.0].sender.0].es
    }

    /// Receiving end-systems of a stream, ascending and de-duplicated.
    pub fn receiver_es(&self, stream: StreamId) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.streams[stream.0]
            .receivers
            .iter()
            .map(|t| self.tasks[t.0].es)
            .collect();
        set.into_iter().collect()
    }

    /// Frame size on the wire: payload, header overhead and MAC if secure.
    pub fn on_wire_size(&self, stream: StreamId) -> u64 {
        let s = &self.streams[stream.0];
        s.size + self.constants.overhead + if s.secure { self.constants.mac_size } else { 0 }
    }

    /// Key verification task on `on_es` checking keys released by `src`.
    pub fn key_verifier(&self, src: NodeId, on_es: NodeId) -> Option<TaskId> {
        self.key_verifiers.get(&(src, on_es)).copied()
    }

    /// Streams sent by a task.
    pub fn outgoing_streams(&self, task: TaskId) -> impl Iterator<Item = StreamId> + '_ {
        let app = self.tasks[task.0].app;
        self.apps[app.0]
            .streams
            .iter()
            .copied()
            .filter(move |&s| self.streams[s.0].sender == task)
    }

    /// Streams received by a task.
    pub fn incoming_streams(&self, task: TaskId) -> impl Iterator<Item = StreamId> + '_ {
        let app = self.tasks[task.0].app;
        self.apps[app.0]
            .streams
            .iter()
            .copied()
            .filter(move |&s| self.streams[s.0].receivers.contains(&task))
    }

    /// Returns a copy with every stream's security level cleared, before
    /// expansion. Used by the impact experiments.
    pub fn without_security(&self) -> Result<SystemModel> {
        self.rebuild(|s| (s.rl, false))
    }

    /// Returns a copy with every redundancy level set to one.
    pub fn without_redundancy(&self) -> Result<SystemModel> {
        self.rebuild(|s| (1, s.secure))
    }

    /// Copy of an unexpanded model with each stream's (RL, secure) replaced.
    pub(crate) fn rebuild(&self, f: impl Fn(&Stream) -> (u32, bool)) -> Result<SystemModel> {
        if self.is_expanded() {
            return Err(Error::Model(
                "toggles must be applied before security expansion".into(),
            ));
        }
        let mut m = SystemModel::new(self.network.clone(), self.constants.clone());
        for app in &self.apps {
            let period = match app.period {
                Period::Fixed(t) => t,
                Period::KeyInterval => unreachable!("unexpanded model has no key interval"),
            };
            let a = m.add_application(&app.name, period);
            let mut map = HashMap::new();
            for &t in &app.tasks {
                let task = &self.tasks[t.0];
                map.insert(t, m.add_task(a, &task.name, task.es, task.wcet));
            }
            for &s in &app.streams {
                let st = &self.streams[s.0];
                let (rl, secure) = f(st);
                let receivers: Vec<TaskId> = st.receivers.iter().map(|r| map[r]).collect();
                m.add_stream(a, &st.name, map[&st.sender], &receivers, st.size, rl, secure);
            }
            for &(x, y) in &app.dependencies {
                m.add_dependency(a, map[&x], map[&y]);
            }
        }
        Ok(m)
    }
}

/// Least common multiple of a set of periods.
pub fn hyperperiod(periods: &[u64]) -> Result<u64> {
    if periods.is_empty() {
        return Err(Error::Model("hyperperiod of an empty period set".into()));
    }
    if periods.contains(&0) {
        return Err(Error::Model("periods must be positive".into()));
    }
    Ok(periods.iter().fold(1u64, |acc, &p| acc.lcm(&p)))
}

/// Greatest common divisor of a set of periods (0 for an empty set).
pub fn period_gcd(periods: &[u64]) -> u64 {
    periods.iter().fold(0u64, |acc, &p| acc.gcd(&p))
}

/// Longest chain of secure streams in an application DAG.
///
/// Only edges bound to secure streams count; end-system-internal
/// dependencies and plain streams have length zero. Returns 0 for cyclic
/// graphs, which validation reports separately.
pub fn communication_depth(model: &SystemModel, app: AppId) -> u32 {
    let a = model.app(app);
    let mut succ: BTreeMap<TaskId, Vec<(TaskId, u32)>> = BTreeMap::new();
    for &(x, y) in &a.dependencies {
        succ.entry(x).or_default().push((y, 0));
    }
    for &s in &a.streams {
        let st = model.stream(s);
        let w = u32::from(st.secure);
        for &r in &st.receivers {
            succ.entry(st.sender).or_default().push((r, w));
        }
    }
    let Some(order) = topological_tasks(&a.tasks, &succ) else {
        return 0;
    };
    let mut depth: HashMap<TaskId, u32> = a.tasks.iter().map(|&t| (t, 0)).collect();
    for t in order {
        let d = depth[&t];
        if let Some(next) = succ.get(&t) {
            for &(n, w) in next {
                let e = depth.entry(n).or_insert(0);
                *e = (*e).max(d + w);
            }
        }
    }
    depth.values().copied().max().unwrap_or(0)
}

/// Kahn's algorithm with smallest-id-first tie breaking. `None` on a cycle.
pub(crate) fn topological_tasks(
    tasks: &[TaskId],
    succ: &BTreeMap<TaskId, Vec<(TaskId, u32)>>,
) -> Option<Vec<TaskId>> {
    let mut indeg: BTreeMap<TaskId, usize> = tasks.iter().map(|&t| (t, 0)).collect();
    for next in succ.values() {
        for &(n, _) in next {
            *indeg.entry(n).or_insert(0) += 1;
        }
    }
    let mut ready: BTreeSet<TaskId> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&t, _)| t)
        .collect();
    let mut order = Vec::with_capacity(indeg.len());
    while let Some(t) = ready.pop_first() {
        order.push(t);
        if let Some(next) = succ.get(&t) {
            for &(n, _) in next {
                let d = indeg.get_mut(&n).expect("successor registered");
                *d -= 1;
                if *d == 0 {
                    ready.insert(n);
                }
            }
        }
    }
    (order.len() == indeg.len()).then_some(order)
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::EndSystem { .. } => f.write_str("end-system"),
            NodeKind::Switch => f.write_str("switch"),
        }
    }
}
