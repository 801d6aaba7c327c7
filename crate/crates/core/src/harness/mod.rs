//! Experiment orchestration: configuration, model files, the six pipeline
//! stages and their reports.

mod artifact;
mod config;
mod pipeline;
mod predictions;
mod reports;

pub use artifact::{MaskedFeature, ModelArtifact, FORMAT_VERSION};
pub use config::{CsvSource, DataSource, ExperimentConfig, NetworkConfig};
pub use pipeline::{
    evaluate_stage, generate_data, ood_report_stage, predict_file, predict_splits, run_experiment, score, train_models,
    verify_bounds_stage, ExperimentOutcome, Layout, Status, STAGES,
};
pub use predictions::{
    read_prediction_files, read_predictions, write_predictions, PredictionRow, SPLIT_OOD, SPLIT_TEST,
};
pub use reports::{
    BoundsFile, CoverageAuroc, EvaluationReport, ModelScores, OodReport, RiskCoverageSummary, TrainingRecord,
    METHOD_BNN, METHOD_DET,
};
