use super::*;
use crate::fixtures;
use crate::model::{speed_from_mbps, GlobalConstants, Network, NodeId};
use crate::verify::{verify_solution, Strictness, VerifyOptions};
use proptest::prelude::*;

fn no_incumbent() -> ExactScheduleOptions {
    ExactScheduleOptions {
        heuristic_incumbent: false,
        ..Default::default()
    }
}

#[test]
fn overloaded_es_is_infeasible() {
    let mut m = fixtures::star_model(1);
    let a = m.add_application("a", 1000);
    m.add_task(a, "x", NodeId(1), 300);
    m.add_task(a, "y", NodeId(1), 800);
    let err = solve_schedule_exact(&m, &RouteAssignment::default(), 1000, &no_incumbent()).unwrap_err();
    assert!(err.to_string().contains("T4"), "{err}");
}

#[test]
fn long_task_without_a_gap_is_infeasible() {
    let mut m = fixtures::star_model(1);
    let a = m.add_application("a", 1000);
    m.add_task(a, "x", NodeId(1), 600);
    let b = m.add_application("b", 2000);
    m.add_task(b, "y", NodeId(1), 500);
    let why = infeasibility_certificate(&m.clone().with_key_interval(2000), &RouteAssignment::default()).unwrap();
    assert!(why.contains("cannot fit a block of 500"), "{why}");
    assert!(solve_schedule_exact(&m, &RouteAssignment::default(), 2000, &no_incumbent()).is_err());

    let mut ok = fixtures::star_model(1);
    let a = ok.add_application("a", 1000);
    ok.add_task(a, "x", NodeId(1), 600);
    let b = ok.add_application("b", 2000);
    ok.add_task(b, "y", NodeId(1), 400);
    assert_eq!(infeasibility_certificate(&ok.clone().with_key_interval(2000), &RouteAssignment::default()), None);
    assert!(solve_schedule_exact(&ok, &RouteAssignment::default(), 2000, &no_incumbent()).is_ok());
}

#[test]
fn forced_chain_over_one_link() {
    let mut net = Network::new();
    let a = net.add_end_system("A", 10);
    let b = net.add_end_system("B", 10);
    net.connect(a, b, speed_from_mbps(1000));
    let mut m = SystemModel::new(net, GlobalConstants::default());
    let app = m.add_application("app", 1000);
    let t1 = m.add_task(app, "t1", a, 70);
    let t2 = m.add_task(app, "t2", b, 30);
    m.add_stream(app, "s", t1, &[t2], 125, 1, false);
    let routes = optimize_routes_exact(&m, &ExactRoutingOptions::default()).unwrap().routes;
    let r = solve_schedule_exact(&m, &routes, 1000, &no_incumbent()).unwrap();
    assert!(r.optimal);
    assert_eq!(r.objective, 70 + 1 + 30);
    let o1 = r.schedule.task(t1).unwrap();
    assert_eq!(r.schedule.task(t2), Some(o1 + 71));
}

#[test]
fn example_pipeline() {
    let res = solve_pipeline_exact(&fixtures::motivational_example(), &Default::default()).unwrap();
    assert_eq!(res.solution.key_interval, 500);
    assert_eq!(res.routing_cost, 16);
    assert!(res.schedule_optimal);
    let m = &res.model;
    for name in ["t3", "t4"] {
        let t = m.task_by_name(name).unwrap();
        assert!(res.solution.schedule.task(t).unwrap() >= 500);
    }
    let app = m.app_by_name("app1").unwrap();
    assert!(res.solution.schedule.app_latency(m, app).unwrap() <= 1000);
    for strictness in [Strictness::Printed, Strictness::Queue] {
        let rep = verify_solution(m, &res.solution, VerifyOptions { strictness, ..Default::default() });
        assert!(rep.is_ok(), "{rep}");
    }
    // the search alone reaches the same optimum
    let plain = solve_schedule_exact(m, &res.solution.routes, 500, &no_incumbent()).unwrap();
    assert!(plain.optimal);
    assert_eq!(plain.objective, res.schedule_cost);
    let rep = verify_solution(
        m,
        &Solution { schedule: plain.schedule, ..res.solution.clone() },
        VerifyOptions::default(),
    );
    assert!(rep.is_ok(), "{rep}");
}

#[test]
fn insecure_model_uses_hyperperiod() {
    let mut m = fixtures::star_model(3);
    let a = m.add_application("a", 1000);
    let b = m.add_application("b", 1500);
    let x = m.add_task(a, "x", NodeId(1), 10);
    let y = m.add_task(a, "y", NodeId(2), 10);
    m.add_task(b, "z", NodeId(3), 10);
    m.add_stream(a, "s", x, &[y], 100, 1, false);
    let res = solve_pipeline_exact(&m, &Default::default()).unwrap();
    assert_eq!(res.solution.key_interval, 3000);
    assert!(res.model.security_apps().next().is_none());
    assert!(verify_solution(&res.model, &res.solution, VerifyOptions::default()).is_ok());
}

/// Tasks `(es, period, wcet)` plus dependencies, all on end-systems of a
/// star; exhaustive search over every offset combination.
fn brute_latency(tasks: &[(usize, u64, u64)], deps: &[(usize, usize)]) -> Option<u64> {
    let h = tasks.iter().fold(1u64, |acc, t| acc.lcm(&t.1));
    let mut best = None;
    let mut cur = vec![0u64; tasks.len()];
    fn rec(i: usize, tasks: &[(usize, u64, u64)], deps: &[(usize, usize)], h: u64, cur: &mut Vec<u64>, best: &mut Option<u64>) {
        if i == tasks.len() {
            for &(x, y) in deps {
                if cur[x] + tasks[x].2 > cur[y] {
                    return;
                }
            }
            let mut busy: Vec<Vec<bool>> = vec![vec![false; h as usize]; 4];
            for (k, &(es, t, w)) in tasks.iter().enumerate() {
                for r in 0..h / t {
                    for u in 0..w {
                        let slot = &mut busy[es][(cur[k] + r * t + u) as usize];
                        if *slot {
                            return;
                        }
                        *slot = true;
                    }
                }
            }
            // one application per distinct period
            let mut periods: Vec<u64> = tasks.iter().map(|t| t.1).collect();
            periods.sort_unstable();
            periods.dedup();
            let mut cost = 0;
            for p in periods {
                let lo = tasks.iter().zip(cur.iter()).filter(|(t, _)| t.1 == p).map(|(_, &o)| o).min().unwrap();
                let hi = tasks.iter().zip(cur.iter()).filter(|(t, _)| t.1 == p).map(|(t, &o)| o + t.2).max().unwrap();
                cost += hi - lo;
            }
            if best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
            return;
        }
        for o in 0..=tasks[i].1 - tasks[i].2 {
            cur[i] = o;
            rec(i + 1, tasks, deps, h, cur, best);
        }
    }
    rec(0, tasks, deps, h, &mut cur, &mut best);
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn matches_exhaustive_search(
        raw in prop::collection::vec((0usize..2, prop::sample::select(vec![6u64, 9, 12]), 1u64..5), 2..5),
        dep in any::<bool>(),
    ) {
        let mut m = fixtures::star_model(2);
        let mut apps = std::collections::BTreeMap::new();
        let mut ids = Vec::new();
        for (i, &(es, p, w)) in raw.iter().enumerate() {
            let a = *apps.entry(p).or_insert_with(|| m.add_application(&format!("a{p}"), p));
            ids.push(m.add_task(a, &format!("t{i}"), NodeId(es + 1), w));
        }
        let mut deps = Vec::new();
        if dep && raw[0].1 == raw[1].1 && raw[0].0 == raw[1].0 {
            let a = m.task(ids[0]).app;
            m.add_dependency(a, ids[0], ids[1]);
            deps.push((0, 1));
        }
        let tasks: Vec<(usize, u64, u64)> = raw.iter().map(|&(es, p, w)| (es + 1, p, w)).collect();
        let expect = brute_latency(&tasks, &deps);
        let got = solve_schedule_exact(&m, &RouteAssignment::default(), 3, &no_incumbent());
        match expect {
            None => prop_assert!(got.is_err()),
            Some(c) => {
                let got = got.unwrap();
                prop_assert!(got.optimal);
                prop_assert_eq!(got.objective, c);
                let sol = Solution { routes: RouteAssignment::default(), key_interval: 3, schedule: got.schedule };
                let rep = verify_solution(&m, &sol, VerifyOptions::default());
                prop_assert!(rep.is_ok(), "{}", rep);
            }
        }
    }
}
