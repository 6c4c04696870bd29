//! Raw annotator votes, kept in CSV next to the manifest and joined by image id.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::FourClass;
use crate::error::{Error, Result};

pub const VOTES_HEADER: [&str; 5] = ["worker_id", "image_id", "label", "vote_time_s", "batch"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub worker_id: String,
    pub image_id: String,
    pub label: FourClass,
    pub vote_time_s: f64,
    pub batch: u32,
}

impl VoteRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.vote_time_s > 0.0) || !self.vote_time_s.is_finite() {
            return Err(Error::InvalidValue(format!(
                "vote by {} on {} has non-positive time {}",
                self.worker_id, self.image_id, self.vote_time_s
            )));
        }
        Ok(())
    }
}

pub fn read_votes(path: &Path) -> Result<Vec<VoteRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != VOTES_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", VOTES_HEADER.join(",")),
        });
    }
    let mut votes = Vec::new();
    for (i, row) in reader.deserialize::<VoteRecord>().enumerate() {
        let line = i + 2;
        let vote = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        vote.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        votes.push(vote);
    }
    Ok(votes)
}

pub fn write_votes(path: &Path, votes: &[VoteRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    if votes.is_empty() {
        writer.write_record(VOTES_HEADER)?;
    }
    for v in votes {
        writer.serialize(v)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
