//! Metrics, evaluation reports, the two-view orientation rule, and the
//! ablation and point-count experiments.

mod agreement;
mod experiment;
mod metrics;
mod plot;
mod report;

pub use agreement::{agreement_predict, predicted_label, AgreementSummary};
pub use experiment::{ablation_grid, ablation_run, fit, initial_state, point_sweep, run_experiment, ExperimentResult};
pub use metrics::{accuracy, average_precision, confusion, f1_macro, per_class, pr_curve, ClassScores};
pub use plot::{bar_chart_svg, pr_curve_svg};
pub use report::{evaluate, write_csv, EvalReport, InstancePrediction, CSV_COLUMNS};
