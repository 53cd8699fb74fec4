//! Path search against exhaustive enumeration on random meshes.

mod common;

use std::collections::BTreeSet;

use common::mesh_network;
use proptest::prelude::*;
use tsn_synth::model::{LinkId, Network, NodeId};
use tsn_synth::routing::paths::{path_links, path_weight};
use tsn_synth::routing::{all_simple_paths, disjoint_paths, k_shortest_paths, Path};

fn net_strategy() -> impl Strategy<Value = Network> {
    (2usize..=4, prop::collection::vec(any::<bool>(), 6), prop::collection::vec((0usize..4, 0usize..4), 2..=4))
        .prop_map(|(n_sw, mesh, attach)| mesh_network(n_sw, &mesh, &attach))
}

fn end_systems(net: &Network) -> Vec<NodeId> {
    net.end_systems().collect()
}

fn weight_of(w: &[u64]) -> impl Fn(LinkId) -> u64 + '_ {
    move |l| w[l.0 % w.len()]
}

/// Largest link-disjoint subset of `paths` with at most `n` members, and the
/// least total weight among subsets of that size.
fn best_disjoint(net: &Network, paths: &[Path], n: usize, w: &impl Fn(LinkId) -> u64) -> (usize, u64) {
    let links: Vec<BTreeSet<LinkId>> = paths.iter().map(|p| path_links(net, p).into_iter().collect()).collect();
    let mut best = (0, 0);
    let mut stack = vec![(0usize, BTreeSet::new(), 0usize, 0u64)];
    while let Some((next, used, count, weight)) = stack.pop() {
        if count > best.0 || (count == best.0 && weight < best.1) {
            best = (count, weight);
        }
        if count == n {
            continue;
        }
        for i in next..paths.len() {
            if links[i].is_disjoint(&used) {
                let mut u = used.clone();
                u.extend(links[i].iter().copied());
                stack.push((i + 1, u, count + 1, weight + path_weight(net, &paths[i], w)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_weight_yen_is_a_prefix_of_all_paths(net in net_strategy(), k in 1usize..8, pick in any::<(usize, usize)>()) {
        let es = end_systems(&net);
        let (src, dst) = (es[pick.0 % es.len()], es[pick.1 % es.len()]);
        prop_assume!(src != dst);
        let all = all_simple_paths(&net, src, dst).unwrap();
        let got = k_shortest_paths(&net, src, dst, k, |_| 1).unwrap();
        prop_assert_eq!(&got[..], &all[..k.min(all.len())]);
    }

    #[test]
    fn weighted_yen_matches_sorted_enumeration(
        net in net_strategy(),
        k in 1usize..8,
        w in prop::collection::vec(1u64..20, 1..12),
        pick in any::<(usize, usize)>(),
    ) {
        let es = end_systems(&net);
        let (src, dst) = (es[pick.0 % es.len()], es[pick.1 % es.len()]);
        prop_assume!(src != dst);
        let weight = weight_of(&w);
        let mut all: Vec<(u64, Path)> = all_simple_paths(&net, src, dst)
            .unwrap()
            .into_iter()
            .map(|p| (path_weight(&net, &p, &weight), p))
            .collect();
        all.sort();
        let want: Vec<Path> = all.into_iter().take(k).map(|(_, p)| p).collect();
        prop_assert_eq!(k_shortest_paths(&net, src, dst, k, &weight).unwrap(), want);
    }

    #[test]
    fn disjoint_paths_are_maximal_and_cheapest(
        net in net_strategy(),
        n in 1usize..4,
        w in prop::collection::vec(1u64..20, 1..12),
        pick in any::<(usize, usize)>(),
    ) {
        let es = end_systems(&net);
        let (src, dst) = (es[pick.0 % es.len()], es[pick.1 % es.len()]);
        prop_assume!(src != dst);
        let weight = weight_of(&w);
        let got = disjoint_paths(&net, src, dst, n, &weight).unwrap();
        let mut seen = BTreeSet::new();
        for p in &got {
            prop_assert!(p.first() == Some(&src) && p.last() == Some(&dst));
            prop_assert!(p[1..p.len() - 1].iter().all(|&v| net.is_switch(v)));
            for l in path_links(&net, p) {
                prop_assert!(seen.insert(l), "link {l:?} used twice");
            }
        }
        let all = all_simple_paths(&net, src, dst).unwrap();
        let (count, total) = best_disjoint(&net, &all, n, &weight);
        prop_assert_eq!(got.len(), count);
        prop_assert_eq!(got.iter().map(|p| path_weight(&net, p, &weight)).sum::<u64>(), total);
    }
}

#[test]
fn no_path_between_islands() {
    let mut net = Network::new();
    let a = net.add_end_system("A", 1);
    let b = net.add_end_system("B", 1);
    let s = net.add_switch("S");
    net.connect(a, s, tsn_synth::model::speed_from_mbps(100));
    assert!(k_shortest_paths(&net, a, b, 3, |_| 1).unwrap().is_empty());
    assert!(disjoint_paths(&net, a, b, 2, |_| 1).unwrap().is_empty());
    assert!(k_shortest_paths(&net, a, s, 1, |_| 1).is_err());
}
