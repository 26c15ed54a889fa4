//! Evaluation: labeled corpus generation, metrics, detector comparison.

pub mod compare;
pub mod corpusgen;
pub mod metrics;

pub use compare::{compare_detectors, scripted_retune_log, ComparisonRow, ComparisonTable, DetectorRun, EvalError};
pub use corpusgen::{generate, generate_corpus, CorpusSpec, GenError, GeneratedCorpus, GroundTruth, Label};
pub use metrics::{compute_metrics, EvalMetrics, Metric};
