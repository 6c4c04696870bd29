//! Domain types and their on-disk formats.

pub mod labels;
pub mod manifest;
pub mod raster;
pub mod rwt_io;
pub mod votes;

pub use labels::{
    binarize_label, AggregatedLabel, BinaryClass, FourClass, Label, LabelSource, ReviewState, Split,
};
pub use manifest::{append_record, read_manifest, write_manifest, DatasetManifest, ManifestRecord, CATEGORIES};
pub use raster::{ImageTensor, ScoreMap, MIN_PIPELINE_SIDE};
pub use rwt_io::{read_score_map, read_tensor, write_tensor, RawTensor};
pub use votes::{read_votes, write_votes, VoteRecord};
