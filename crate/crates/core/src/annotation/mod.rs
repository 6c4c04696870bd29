//! Crowd-label curation: timing filter, plurality aggregation, binarization,
//! stratified split and dataset statistics.

mod aggregate;
mod split;
mod stats;

pub use aggregate::{aggregate_manifest, aggregate_votes, filter_votes_by_time, AggregationConfig, AggregationSummary};
pub use split::split_dataset;
pub use stats::{dataset_stats, write_stats, AgreementBreakdown, DatasetStats};
