//! Desk-scale evaluation: synthetic speakers, pair scoring, error rates,
//! unlinkability and timing.

pub mod bench;
pub mod dataset;
pub mod metrics;
pub mod report;
pub mod scoring;
pub mod unlinkability;

pub use bench::{bench_template_generation, BenchReport};
pub use dataset::{generate_synthetic, Provenance, SpeakerDataset, SyntheticConfig};
pub use metrics::{compute_metrics, roc_curve, MetricsReport, RocPoint, TARGET_FMR};
pub use scoring::{score_pairs, EvalScheme, KeyPolicy, ScenarioLabel, ScoreSet};
pub use unlinkability::{unlinkability, UnlinkabilityReport};
