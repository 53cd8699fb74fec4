use std::collections::{BTreeMap, BTreeSet};

use super::{AppKind, NodeId, Period, StreamId, SystemModel, TaskRole};
use crate::error::{Error, Result};

/// Appends one key-distribution application per end-system that sends at
/// least one secure stream.
///
/// The key release task runs on the sender for half a hash time (rounded up),
/// each receiving end-system gets a verification task lasting one hash time,
/// and the key stream multicasts `key_size` bytes to all of them. Expanding an
/// already expanded model returns it unchanged.
pub fn expand_security_model(model: &SystemModel) -> Result<SystemModel> {
    let mut m = model.clone();
    if m.is_expanded() {
        return Ok(m);
    }
    let mut senders: BTreeMap<NodeId, (BTreeSet<NodeId>, u32)> = BTreeMap::new();
    for s in m.stream_ids().collect::<Vec<StreamId>>() {
        let st = m.stream(s);
        if !st.secure {
            continue;
        }
        let src = m.sender_es(s);
        let hash_ok = |n: NodeId| m.network.hash_time(n).is_some_and(|h| h > 0);
        if !hash_ok(src) {
            return Err(Error::Model(format!(
                "secure stream {} sent from {} without a hash time",
                st.name,
                m.network.node_name(src)
            )));
        }
        let rl = st.rl;
        let recv = m.receiver_es(s);
        if let Some(&r) = recv.iter().find(|&&r| !hash_ok(r)) {
            return Err(Error::Model(format!(
                "secure stream {} received on {} without a hash time",
                st.name,
                m.network.node_name(r)
            )));
        }
        let entry = senders.entry(src).or_insert_with(|| (BTreeSet::new(), 0));
        entry.0.extend(recv);
        entry.1 = entry.1.max(rl);
    }
    for (src, (receivers, rl)) in senders {
        let es_name = m.network.node_name(src).to_string();
        let hash = m.network.hash_time(src).unwrap_or(0);
        let app = m.push_app(
            &format!("sec_{es_name}"),
            AppKind::Security { sender: src },
            Period::KeyInterval,
        );
        let release = m.push_task(app, &format!("kr_{es_name}"), src, hash.div_ceil(2), TaskRole::KeyRelease);
        let mut verifiers = Vec::new();
        for r in receivers {
            let name = format!("kv_{es_name}_{}", m.network.node_name(r));
            let wcet = m.network.hash_time(r).unwrap_or(0);
            let v = m.push_task(app, &name, r, wcet, TaskRole::KeyVerify { src });
            m.key_verifiers.insert((src, r), v);
            verifiers.push(v);
        }
        let key_size = m.constants.key_size;
        m.push_stream(app, &format!("k_{es_name}"), release, &verifiers, key_size, rl, false, true);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn motivational_example_gets_two_security_apps() {
        let m = expand_security_model(&fixtures::motivational_example()).unwrap();
        let sec: Vec<_> = m.security_apps().collect();
        assert_eq!(sec.len(), 2);
        assert_eq!(m.tasks().len(), 9);
        let copies = m.copies().iter().filter(|c| !m.stream(c.stream).key).count();
        assert_eq!(copies, 3);
        let es2 = m.network.node_by_name("ES2").unwrap();
        let key = m
            .streams()
            .iter()
            .find(|s| s.key && m.sender_es_of_task(s.sender) == es2)
            .unwrap();
        assert_eq!(key.rl, 2);
        assert_eq!(key.receivers.len(), 2);
        assert_eq!(key.size, 16);
    }

    #[test]
    fn key_task_durations() {
        let m = expand_security_model(&fixtures::motivational_example()).unwrap();
        let kr = m.task(m.task_by_name("kr_ES1").unwrap());
        assert_eq!(kr.wcet, 5);
        assert_eq!(kr.role, TaskRole::KeyRelease);
        let kv = m.task(m.task_by_name("kv_ES2_ES4").unwrap());
        assert_eq!(kv.wcet, 10);
        let es2 = m.network.node_by_name("ES2").unwrap();
        let es4 = m.network.node_by_name("ES4").unwrap();
        assert_eq!(kv.role, TaskRole::KeyVerify { src: es2 });
        assert_eq!(m.key_verifier(es2, es4), m.task_by_name("kv_ES2_ES4"));
    }

    #[test]
    fn expansion_is_idempotent() {
        let once = expand_security_model(&fixtures::motivational_example()).unwrap();
        let twice = expand_security_model(&once).unwrap();
        assert_eq!(once.apps().len(), twice.apps().len());
        assert_eq!(once.tasks().len(), twice.tasks().len());
        assert_eq!(once.copies().len(), twice.copies().len());
    }

    #[test]
    fn insecure_model_is_unchanged() {
        let base = fixtures::motivational_example().without_security().unwrap();
        let m = expand_security_model(&base).unwrap();
        assert_eq!(m.apps().len(), base.apps().len());
        assert_eq!(m.security_apps().count(), 0);
    }

    #[test]
    fn missing_hash_time_is_an_error() {
        let mut m = fixtures::motivational_example();
        let es1 = m.network.node_by_name("ES1").unwrap();
        m.network.set_hash_time(es1, 0);
        assert!(expand_security_model(&m).is_err());
    }
}
