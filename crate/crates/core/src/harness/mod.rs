//! Experiment orchestration and run artifacts.

mod config;
mod descent;
mod field;
mod limitcycle;
mod montecarlo;

pub use config::{
    read_stamped_records, spec_hash, DescentConfig, ExperimentConfig, ExperimentKind, FieldConfig,
    IntegratorOverrides, LimitCycleConfig, MonteCarloConfig, RunDir, SpecSource, Stamp,
    TOOL_VERSION,
};
pub use descent::run_descent_study;
pub use field::{
    clip_line_to_box, emit_field_grid, natural_field, FieldGrid, FieldReport, FieldSample,
};
pub use limitcycle::{analyze_orbit, run_limit_cycle_study, LimitCycleReport, ModeOrbitReport};
pub use montecarlo::{
    classify_sample, dimension_seed, replay_sample, run_monte_carlo, Counts, ModeRun,
    MonteCarloReport, Outcome, RejectedSpec, SampleRecord,
};
