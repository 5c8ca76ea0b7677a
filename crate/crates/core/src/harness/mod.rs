//! Experiment drivers and report writers used by the CLI and examples.

pub mod ablation;
pub mod aliasing;
pub mod bench;
pub mod report;
pub mod trace;

pub use ablation::{run_ablation, AblationCell, AblationGrid, AblationReport, Component};
pub use aliasing::{
    gen_aliasing_task, gen_aliasing_task_with_gap, random_episode, run_aliasing_experiment,
    run_stream, AliasingReport, AliasingTask,
};
pub use bench::{bench_efficiency, BenchOptions, BenchReport, BenchRow};
pub use trace::{run_trace, trace_rows, write_trace_csv, EpisodeTrace, TraceRow};
