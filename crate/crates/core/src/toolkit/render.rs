//! Standalone SVG views of a solution: a Gantt chart of one hyperperiod
//! and the route trees drawn over the topology.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::model::{LinkId, NodeId, SystemModel};
use crate::schedule::{link_duration, mac_duration, Solution};
use crate::verify::{verify_solution, VerifyOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderTarget {
    Gantt,
    Routes,
}

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac",
    "#e15759", "#86bcb6", "#d4a6c8",
];

const ROW: f64 = 22.0;
const LABEL: f64 = 110.0;
const WIDTH: f64 = 1200.0;
const TOP: f64 = 30.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `sol` on the security-expanded `model`. Entities named in a
/// verification violation are outlined in red.
pub fn render(model: &SystemModel, sol: &Solution, target: RenderTarget) -> String {
    match target {
        RenderTarget::Gantt => gantt(model, sol),
        RenderTarget::Routes => routes(model, sol),
    }
}

fn gantt(model: &SystemModel, sol: &Solution) -> String {
    let net = &model.network;
    let h = model.hyperperiod().unwrap_or(1).max(1);
    let report = verify_solution(model, sol, VerifyOptions::default());
    let flagged: BTreeSet<&str> = report.violations.iter().flat_map(|v| v.entities.iter().map(String::as_str)).collect();

    let ess: Vec<NodeId> = net.end_systems().collect();
    let used: BTreeSet<LinkId> = sol.schedule.copies.iter().flatten().flat_map(|c| c.links.keys().copied()).collect();
    let links: Vec<LinkId> = used.into_iter().collect();
    let rows = ess.len() + links.len();
    let height = TOP + rows as f64 * ROW + 50.0;
    let scale = (WIDTH - LABEL - 20.0) / h as f64;
    let x = |t: u64| LABEL + t as f64 * scale;
    let es_row = |n: NodeId| ess.iter().position(|&e| e == n).expect("end-system row");
    let link_row = |l: LinkId| ess.len() + links.iter().position(|&x| x == l).expect("link row");
    let y = |r: usize| TOP + r as f64 * ROW;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" font-family="monospace" font-size="11">"#
    );
    for (r, label) in ess
        .iter()
        .map(|&e| net.node_name(e).to_string())
        .chain(links.iter().map(|&l| net.link_name(l)))
        .enumerate()
    {
        let _ = writeln!(out, r#"<text x="4" y="{:.2}">{}</text>"#, y(r) + 15.0, escape(&label));
        let _ = writeln!(
            out,
            r##"<line x1="{LABEL}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#ddd"/>"##,
            y(r) + ROW,
            x(h)
        );
    }
    let axis_y = y(rows) + 4.0;
    let _ = writeln!(out, r#"<line x1="{LABEL}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#, x(h));
    for i in 0..=10u64 {
        let t = h * i / 10;
        let _ = writeln!(
            out,
            r#"<line x1="{0:.2}" y1="{axis_y:.2}" x2="{0:.2}" y2="{1:.2}" stroke="black"/><text x="{0:.2}" y="{2:.2}" text-anchor="middle">{t}</text>"#,
            x(t),
            axis_y + 5.0,
            axis_y + 18.0
        );
    }

    let bar = |out: &mut String, row: usize, start: u64, len: u64, period: u64, color: &str, name: &str| {
        let stroke = if flagged.contains(name) { r#" stroke="red" stroke-width="2""# } else { "" };
        for k in 0..h / period.max(1) {
            let s = start + k * period;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"{stroke}><title>{}</title></rect>"#,
                x(s),
                y(row) + 3.0,
                (len as f64 * scale).max(0.5),
                ROW - 6.0,
                escape(name)
            );
        }
    };
    for t in model.task_ids() {
        let Some(o) = sol.schedule.task(t) else { continue };
        let task = model.task(t);
        let color = PALETTE[task.app.0 % PALETTE.len()];
        let period = if model.app(task.app).is_security() { sol.key_interval } else { model.task_period(t) };
        bar(&mut out, es_row(task.es), o, task.wcet, period, color, &task.name);
    }
    for c in model.copy_ids() {
        let Some(cs) = sol.schedule.copy(c) else { continue };
        let stream = model.copy(c).stream;
        let color = PALETTE[stream.0 % PALETTE.len()];
        let name = model.copy_name(c);
        let st = model.stream(stream);
        let period = if model.app(st.app).is_security() { sol.key_interval } else { model.stream_period(stream) };
        let src = model.sender_es(stream);
        if let Some(o) = cs.sender_mac {
            bar(&mut out, es_row(src), o, mac_duration(model, src), period, color, &name);
        }
        for (&l, &o) in &cs.links {
            bar(&mut out, link_row(l), o, link_duration(model, stream, l), period, color, &name);
        }
        for (&n, &o) in &cs.receiver_mac {
            bar(&mut out, es_row(n), o, mac_duration(model, n), period, color, &name);
        }
    }
    if model.security_apps().next().is_some() && sol.key_interval > 0 {
        let mut t = sol.key_interval;
        while t < h {
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{1:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
                x(t),
                y(rows)
            );
            t += sol.key_interval;
        }
    }
    if !report.unscheduled.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="4" y="{:.2}" fill="red">unscheduled: {}</text>"#,
            height - 6.0,
            escape(&report.unscheduled.join(", "))
        );
    }
    out.push_str("</svg>\n");
    out
}

fn routes(model: &SystemModel, sol: &Solution) -> String {
    let net = &model.network;
    let (cx, cy) = (400.0, 400.0);
    let place = |ids: &[NodeId], r: f64| -> Vec<(NodeId, (f64, f64))> {
        ids.iter()
            .enumerate()
            .map(|(i, &n)| {
                let a = 2.0 * PI * i as f64 / ids.len().max(1) as f64;
                (n, (cx + r * a.cos(), cy + r * a.sin()))
            })
            .collect()
    };
    let sws: Vec<NodeId> = net.switches().collect();
    let ess: Vec<NodeId> = net.end_systems().collect();
    let mut pos = vec![(0.0, 0.0); net.nodes().len()];
    let inner = if sws.len() == 1 { 0.0 } else { 160.0 };
    for (n, p) in place(&sws, inner).into_iter().chain(place(&ess, 330.0)) {
        pos[n.0] = p;
    }

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" font-family="monospace" font-size="11">"#);
    for l in net.link_ids() {
        let link = net.link(l);
        if link.src > link.dst {
            continue;
        }
        let (a, b) = (pos[link.src.0], pos[link.dst.0]);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#ccc" stroke-width="1"/>"##,
            a.0, a.1, b.0, b.1
        );
    }
    for c in model.copy_ids() {
        let stream = model.copy(c).stream;
        let color = PALETTE[stream.0 % PALETTE.len()];
        let shift = 3.0 * model.copy(c).index as f64 - 3.0;
        let name = escape(&model.copy_name(c));
        let _ = writeln!(out, r#"<g stroke="{color}" stroke-width="2" fill="none"><title>{name}</title>"#);
        for (&n, &p) in sol.routes.tree(c).entries() {
            let (a, b) = (pos[p.0], pos[n.0]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let norm = (dx * dx + dy * dy).sqrt().max(1e-9);
            let (ox, oy) = (-dy / norm * shift, dx / norm * shift);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                a.0 + ox,
                a.1 + oy,
                b.0 + ox,
                b.1 + oy
            );
        }
        out.push_str("</g>\n");
    }
    for n in net.node_ids() {
        let (px, py) = pos[n.0];
        let shape = if net.is_switch(n) {
            format!(r##"<rect x="{:.2}" y="{:.2}" width="16" height="16" fill="#333"/>"##, px - 8.0, py - 8.0)
        } else {
            format!(r##"<circle cx="{px:.2}" cy="{py:.2}" r="8" fill="#fff" stroke="#333"/>"##)
        };
        let _ = writeln!(out, r#"{shape}<text x="{:.2}" y="{:.2}">{}</text>"#, px + 10.0, py - 10.0, escape(net.node_name(n)));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{solve_pipeline_exact, ExactPipelineOptions};
    use crate::fixtures;
    use crate::routing::RouteAssignment;
    use crate::schedule::Schedule;

    #[test]
    fn example_gantt_marks_the_interval_boundary() {
        let r = solve_pipeline_exact(&fixtures::motivational_example(), &ExactPipelineOptions::default()).unwrap();
        let svg = render(&r.model, &r.solution, RenderTarget::Gantt);
        let dashed: Vec<&str> = svg.lines().filter(|l| l.contains("stroke-dasharray")).collect();
        assert_eq!(dashed.len(), 1);
        // 500 of 1000 us on a 1070 px axis starting at 110
        assert!(dashed[0].contains(r#"x1="645.00""#), "{}", dashed[0]);
        assert!(!svg.contains("stroke=\"red\""));
        assert!(svg.contains("<title>t3</title>"));
        assert_eq!(svg, render(&r.model, &r.solution, RenderTarget::Gantt));

        let routes = render(&r.model, &r.solution, RenderTarget::Routes);
        assert!(routes.contains("<title>s2#1</title>"));
        assert_eq!(routes, render(&r.model, &r.solution, RenderTarget::Routes));
    }

    #[test]
    fn empty_schedule_draws_axes_only() {
        let m = fixtures::star_model(2).with_key_interval(1);
        let sol = Solution {
            routes: RouteAssignment::new(Vec::new()),
            key_interval: 1,
            schedule: Schedule::empty(&m),
        };
        let svg = render(&m, &sol, RenderTarget::Gantt);
        assert!(!svg.contains("<rect"));
        assert!(!svg.contains("stroke-dasharray"));
        assert!(svg.contains(">ES0<"));
    }
}
