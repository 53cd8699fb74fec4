//! Rendered SVG of the example solution against checked-in files. Run with
//! `UPDATE_GOLDEN=1` to rewrite them after an intended change.

use std::path::PathBuf;

use tsn_synth::exact::{solve_pipeline_exact, ExactPipelineOptions};
use tsn_synth::fixtures::motivational_example;
use tsn_synth::toolkit::{render, RenderTarget};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{} differs; rerun with UPDATE_GOLDEN=1 if intended", path.display());
}

#[test]
fn example_svgs_match() {
    let r = solve_pipeline_exact(&motivational_example(), &ExactPipelineOptions::default()).unwrap();
    golden("example_gantt.svg", &render(&r.model, &r.solution, RenderTarget::Gantt));
    golden("example_routes.svg", &render(&r.model, &r.solution, RenderTarget::Routes));
}
