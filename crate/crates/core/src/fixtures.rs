//! Small hand-built models used by tests, examples and the CLI.

use crate::model::{speed_from_mbps, GlobalConstants, Network, NodeId, SystemModel};

/// Four end-systems and two switches with one four-task application.
///
/// Link speed is 10 Mbit/s, streams are 50 B, keys and MACs 16 B and every
/// hash takes 10 us. `t1 -> t3` (s1, RL 1) and `t2 -> {t3, t4}` (s2, RL 2)
/// are both secure. Task WCETs are 100 us.
pub fn motivational_example() -> SystemModel {
    let mut net = Network::new();
    let es: Vec<NodeId> = (1..=4).map(|i| net.add_end_system(&format!("ES{i}"), 10)).collect();
    let sw1 = net.add_switch("SW1");
    let sw2 = net.add_switch("SW2");
    let speed = speed_from_mbps(10);
    net.connect(es[0], sw1, speed);
    for &e in &es[1..] {
        net.connect(e, sw1, speed);
        net.connect(e, sw2, speed);
    }
    net.connect(sw1, sw2, speed);

    let mut m = SystemModel::new(net, GlobalConstants::default());
    let app = m.add_application("app1", 1000);
    let t: Vec<_> = (0..4)
        .map(|i| m.add_task(app, &format!("t{}", i + 1), es[i], 100))
        .collect();
    m.add_stream(app, "s1", t[0], &[t[2]], 50, 1, true);
    m.add_stream(app, "s2", t[1], &[t[2], t[3]], 50, 2, true);
    m
}

/// `n` end-systems `ES0..` around a single switch `SW0`, 1 Gbit/s links and
/// no applications.
pub fn star_model(n: usize) -> SystemModel {
    let mut net = Network::new();
    let sw = net.add_switch("SW0");
    for i in 0..n {
        let e = net.add_end_system(&format!("ES{i}"), 10);
        net.connect(e, sw, speed_from_mbps(1000));
    }
    SystemModel::new(net, GlobalConstants::default())
}
