//! Test-case generation, file formats, gate control lists, SVG rendering
//! and the batch experiment driver.

mod experiment;
mod format;
mod gcl;
mod generate;
mod render;

pub use experiment::{
    run_experiment, utilization, Engine, ExperimentRow, ExperimentSpec, Toggle, Utilization,
};
pub use format::{
    model_from_toml, model_to_toml, solution_from_toml, solution_to_toml, ModelFile, SolutionFile,
};
pub use gcl::{export_gcl, frames, link_windows, GateControlList, GateEntry};
pub use generate::{generate_applications, generate_test_case, generate_topology, TestCaseSpec};
pub use render::{render, RenderTarget};
