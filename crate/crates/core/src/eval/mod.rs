//! Metrics, baselines, the ablation harness and plot-data output.

mod ablation;
mod baselines;
mod metrics;
mod plot;

pub use ablation::{
    run_ablation, run_ablation_with, run_variant, AblationConfig, AblationFailure, AblationResult,
    AblationRun, Variant, VariantOutput, VariantSummary,
};
pub use baselines::{knn_baseline, mean_baseline, row_distance, DEFAULT_K};
pub use metrics::{evaluate, fingerprint, ImputationReport, Metrics, VariableMetrics, MAPE_FLOOR};
pub use plot::{
    cf_sample_times, emit_plot_data, load_plot_data, plot_rows, PlotKind, PlotRow, CF_DENSITY,
};
