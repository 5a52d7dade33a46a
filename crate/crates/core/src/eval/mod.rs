//! Evaluation harness: metrics, episode runner, load sweeps, throughput traces
//! and figures.

mod experiment;
mod metrics;
mod plot;
mod runner;

pub use experiment::{
    bucket_ranges, evaluate_method, format_utilization, load_controller, load_sweep, read_json, rescale, shared_trace,
    sweep_controller, throughput_series, throughput_trace, trace_seed, utilization_tables, write_json,
    ExperimentConfig, MeanStd, Method, RunResult, SweepCurve, SweepPoint, SweepResult, ThroughputResult,
    ThroughputSeries, TrafficSource, UtilizationTable,
};
pub use metrics::{mean_std, qos_satisfaction_rate, utilization_report, UtilizationRow};
pub use plot::{plot_sweep, plot_throughput, plot_training};
pub use runner::{evaluate, run_episode, EpisodeRecord};
