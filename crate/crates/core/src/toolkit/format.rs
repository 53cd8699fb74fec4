//! TOML documents for test cases and solutions.
//!
//! A test case holds the constants, nodes, links and applications of an
//! unexpanded model; the security applications are re-derived on load.
//!
//! ```toml
//! [constants]
//! overhead = 0
//! mtu = 1500
//! key_size = 16
//! mac_size = 16
//! sync_precision = 1
//!
//! [[nodes]]
//! name = "ES1"
//! kind = "es"          # or "sw"
//! hash_time = 10       # end-systems only
//!
//! [[links]]            # full-duplex pair
//! a = "ES1"
//! b = "SW1"
//! mbps = 10
//!
//! [[applications]]
//! name = "app1"
//! period = 1000
//! dependencies = [["t1", "t2"]]
//! tasks = [{ name = "t1", es = "ES1", wcet = 100 }]
//! streams = [{ name = "s1", sender = "t1", receivers = ["t3"], size = 50, rl = 1, secure = true }]
//! ```
//!
//! A solution refers to the expanded model by task, copy, node and link
//! names. Each copy lists its route as `[node, predecessor]` pairs.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AppKind, GlobalConstants, LinkId, Network, NodeId, NodeKind, Period, SystemModel};
use crate::routing::{RouteAssignment, RouteTree};
use crate::schedule::{CopySchedule, Schedule, Solution};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsDoc {
    pub overhead: u64,
    pub mtu: u64,
    pub key_size: u64,
    pub mac_size: u64,
    pub sync_precision: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_time: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub a: String,
    pub b: String,
    pub mbps: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub name: String,
    pub es: String,
    pub wcet: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamDoc {
    pub name: String,
    pub sender: String,
    pub receivers: Vec<String>,
    pub size: u64,
    pub rl: u32,
    pub secure: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppDoc {
    pub name: String,
    pub period: u64,
    #[serde(default)]
    pub dependencies: Vec<(String, String)>,
    #[serde(default)]
    pub tasks: Vec<TaskDoc>,
    #[serde(default)]
    pub streams: Vec<StreamDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub constants: ConstantsDoc,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub applications: Vec<AppDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOffsetDoc {
    pub name: String,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopyDoc {
    pub name: String,
    pub route: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender_mac: Option<u64>,
    #[serde(default)]
    pub links: BTreeMap<String, u64>,
    #[serde(default)]
    pub receiver_mac: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub key_interval: u64,
    #[serde(default)]
    pub tasks: Vec<TaskOffsetDoc>,
    #[serde(default)]
    pub copies: Vec<CopyDoc>,
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

/// Serialises the user-level part of a model; security applications are
/// left out.
pub fn model_to_toml(model: &SystemModel) -> Result<String> {
    let net = &model.network;
    let c = &model.constants;
    let nodes = net
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| NodeDoc {
            name: n.name.clone(),
            kind: match n.kind {
                NodeKind::EndSystem { .. } => "es".into(),
                NodeKind::Switch => "sw".into(),
            },
            hash_time: net.hash_time(NodeId(i)),
        })
        .collect();
    let mut links = Vec::new();
    for l in net.link_ids() {
        let link = net.link(l);
        if link.src > link.dst && net.link_between(link.dst, link.src).is_some() {
            continue;
        }
        let bits = link.speed * Ratio::from_integer(8);
        if !bits.is_integer() {
            return Err(Error::Export(format!("speed of {} is not a whole Mbit/s", net.link_name(l))));
        }
        links.push(LinkDoc {
            a: net.node_name(link.src).into(),
            b: net.node_name(link.dst).into(),
            mbps: bits.to_integer(),
        });
    }
    let mut applications = Vec::new();
    for app in model.apps() {
        let (AppKind::Normal, Period::Fixed(period)) = (app.kind, app.period) else {
            continue;
        };
        let tname = |t| model.task(t).name.clone();
        applications.push(AppDoc {
            name: app.name.clone(),
            period,
            dependencies: app.dependencies.iter().map(|&(a, b)| (tname(a), tname(b))).collect(),
            tasks: app
                .tasks
                .iter()
                .map(|&t| TaskDoc {
                    name: tname(t),
                    es: net.node_name(model.task(t).es).into(),
                    wcet: model.task(t).wcet,
                })
                .collect(),
            streams: app
                .streams
                .iter()
                .map(|&s| {
                    let st = model.stream(s);
                    StreamDoc {
                        name: st.name.clone(),
                        sender: tname(st.sender),
                        receivers: st.receivers.iter().map(|&r| tname(r)).collect(),
                        size: st.size,
                        rl: st.rl,
                        secure: st.secure,
                    }
                })
                .collect(),
        });
    }
    let doc = ModelFile {
        constants: ConstantsDoc {
            overhead: c.overhead,
            mtu: c.mtu,
            key_size: c.key_size,
            mac_size: c.mac_size,
            sync_precision: c.sync_precision,
        },
        nodes,
        links,
        applications,
    };
    toml::to_string(&doc).map_err(parse_err)
}

/// Parses a test case into an unexpanded model.
pub fn model_from_toml(text: &str) -> Result<SystemModel> {
    let doc: ModelFile = toml::from_str(text).map_err(parse_err)?;
    let mut net = Network::new();
    let mut nodes = HashMap::new();
    for n in &doc.nodes {
        let id = match (n.kind.as_str(), n.hash_time) {
            ("es", Some(h)) => net.add_end_system(&n.name, h),
            ("es", None) => return Err(Error::Parse(format!("end-system {} needs hash_time", n.name))),
            ("sw", None) => net.add_switch(&n.name),
            ("sw", Some(_)) => return Err(Error::Parse(format!("switch {} has a hash_time", n.name))),
            (k, _) => return Err(Error::Parse(format!("unknown node kind {k:?}"))),
        };
        if nodes.insert(n.name.clone(), id).is_some() {
            return Err(Error::Parse(format!("duplicate node {}", n.name)));
        }
    }
    let node = |name: &str| nodes.get(name).copied().ok_or_else(|| Error::Parse(format!("unknown node {name}")));
    for l in &doc.links {
        net.connect(node(&l.a)?, node(&l.b)?, Ratio::new(l.mbps, 8));
    }
    let c = &doc.constants;
    let mut m = SystemModel::new(
        net,
        GlobalConstants {
            overhead: c.overhead,
            mtu: c.mtu,
            key_size: c.key_size,
            mac_size: c.mac_size,
            sync_precision: c.sync_precision,
        },
    );
    for a in &doc.applications {
        let app = m.add_application(&a.name, a.period);
        let mut tasks = HashMap::new();
        for t in &a.tasks {
            let id = m.add_task(app, &t.name, node(&t.es)?, t.wcet);
            tasks.insert(t.name.clone(), id);
        }
        let task = |name: &str| {
            tasks
                .get(name)
                .copied()
                .ok_or_else(|| Error::Parse(format!("unknown task {name} in {}", a.name)))
        };
        for s in &a.streams {
            let receivers = s.receivers.iter().map(|r| task(r)).collect::<Result<Vec<_>>>()?;
            m.add_stream(app, &s.name, task(&s.sender)?, &receivers, s.size, s.rl, s.secure);
        }
        for (x, y) in &a.dependencies {
            m.add_dependency(app, task(x)?, task(y)?);
        }
    }
    Ok(m)
}

fn link_by_name(model: &SystemModel) -> HashMap<String, LinkId> {
    model.network.link_ids().map(|l| (model.network.link_name(l), l)).collect()
}

pub fn solution_to_toml(model: &SystemModel, sol: &Solution) -> Result<String> {
    let net = &model.network;
    let tasks = model
        .task_ids()
        .filter_map(|t| {
            sol.schedule.task(t).map(|offset| TaskOffsetDoc {
                name: model.task(t).name.clone(),
                offset,
            })
        })
        .collect();
    let copies = model
        .copy_ids()
        .map(|c| {
            let tree = sol.routes.tree(c);
            let cs = sol.schedule.copy(c);
            CopyDoc {
                name: model.copy_name(c),
                route: tree
                    .entries()
                    .iter()
                    .map(|(&n, &p)| (net.node_name(n).into(), net.node_name(p).into()))
                    .collect(),
                sender_mac: cs.and_then(|x| x.sender_mac),
                links: cs
                    .map(|x| x.links.iter().map(|(&l, &o)| (net.link_name(l), o)).collect())
                    .unwrap_or_default(),
                receiver_mac: cs
                    .map(|x| x.receiver_mac.iter().map(|(&n, &o)| (net.node_name(n).into(), o)).collect())
                    .unwrap_or_default(),
            }
        })
        .collect();
    let doc = SolutionFile {
        key_interval: sol.key_interval,
        tasks,
        copies,
    };
    toml::to_string(&doc).map_err(parse_err)
}

/// Parses a solution for `model`, which must be the security-expanded
/// model the solution was computed on.
pub fn solution_from_toml(model: &SystemModel, text: &str) -> Result<Solution> {
    let doc: SolutionFile = toml::from_str(text).map_err(parse_err)?;
    let net = &model.network;
    let node = |name: &str| net.node_by_name(name).ok_or_else(|| Error::Parse(format!("unknown node {name}")));
    let links = link_by_name(model);
    let mut schedule = Schedule::empty(model);
    for t in &doc.tasks {
        let id = model
            .task_by_name(&t.name)
            .ok_or_else(|| Error::Parse(format!("unknown task {}", t.name)))?;
        schedule.tasks[id.0] = Some(t.offset);
    }
    let copy_ids: HashMap<String, _> = model.copy_ids().map(|c| (model.copy_name(c), c)).collect();
    let mut trees: Vec<Option<RouteTree>> = vec![None; model.copies().len()];
    for c in &doc.copies {
        let id = *copy_ids
            .get(&c.name)
            .ok_or_else(|| Error::Parse(format!("unknown copy {}", c.name)))?;
        let pred = c
            .route
            .iter()
            .map(|(n, p)| Ok((node(n)?, node(p)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let sender = model.sender_es(model.copy(id).stream);
        trees[id.0] = Some(RouteTree::from_successors(sender, pred));
        let has_schedule = c.sender_mac.is_some() || !c.links.is_empty() || !c.receiver_mac.is_empty();
        if has_schedule {
            schedule.copies[id.0] = Some(CopySchedule {
                sender_mac: c.sender_mac,
                links: c
                    .links
                    .iter()
                    .map(|(l, &o)| {
                        links
                            .get(l)
                            .map(|&id| (id, o))
                            .ok_or_else(|| Error::Parse(format!("unknown link {l}")))
                    })
                    .collect::<Result<_>>()?,
                receiver_mac: c
                    .receiver_mac
                    .iter()
                    .map(|(n, &o)| Ok((node(n)?, o)))
                    .collect::<Result<_>>()?,
            });
        }
    }
    let trees = trees
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| Error::Parse(format!("no route for copy {}", model.copy_name(crate::model::CopyId(i))))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Solution {
        routes: RouteAssignment::new(trees),
        key_interval: doc.key_interval,
        schedule,
    })
}
