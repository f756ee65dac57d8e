//! Benchmark generators and the experiment harness.

mod experiment;
mod obstacles;
mod synthetic;

pub use experiment::{
    normalize, run_experiment, write_experiment, ExperimentOutcome, ExperimentPlan, Method, MethodRun,
    MethodSummary,
};
pub use obstacles::{gen_obstacles, Cell, ObstaclesSpec};
pub use synthetic::{gen_synthetic, gen_synthetic_family, SyntheticSpec};
