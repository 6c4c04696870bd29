//! Reviewer decisions over the manifest, with an append-only audit log.
//!
//! The manifest is a materialised view: replaying the log over the initial
//! manifest gives back the current one.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{binarize_label, AggregatedLabel, DatasetManifest, FourClass, Label, LabelSource, ManifestRecord, ReviewState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ReviewAction {
    Accept,
    Relabel { label: FourClass },
    RejectForReannotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub image_id: String,
    #[serde(flatten)]
    pub action: ReviewAction,
    pub reviewer: String,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp_ms: u64,
    pub prior_version: u64,
}

/// Queue filter over records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    /// No strict plurality among the votes.
    Ambiguous,
    /// Labelled but not yet signed off.
    Pending,
    /// Labelled and accepted by a reviewer.
    Resolved,
    /// Sent back for re-annotation.
    Rejected,
}

impl FromStr for ReviewStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ambiguous" => Ok(Self::Ambiguous),
            "pending" => Ok(Self::Pending),
            "resolved" => Ok(Self::Resolved),
            "rejected" => Ok(Self::Rejected),
            other => Err(Error::InvalidValue(format!("unknown status filter {other:?}"))),
        }
    }
}

pub fn status_of(record: &ManifestRecord) -> ReviewStatus {
    if record.review == ReviewState::NeedsReannotation {
        return ReviewStatus::Rejected;
    }
    if !record.is_resolved() {
        return ReviewStatus::Ambiguous;
    }
    match record.review {
        ReviewState::Accepted => ReviewStatus::Resolved,
        _ => ReviewStatus::Pending,
    }
}

/// The record after `decision`, or the reason it cannot apply. The input is
/// never modified.
pub fn apply_decision(record: &ManifestRecord, decision: &ReviewDecision) -> Result<ManifestRecord> {
    if decision.image_id != record.image_id {
        return Err(Error::InvalidDecision(format!(
            "decision for {:?} applied to {:?}",
            decision.image_id, record.image_id
        )));
    }
    if decision.reviewer.trim().is_empty() {
        return Err(Error::InvalidDecision("reviewer must be named".into()));
    }
    if decision.prior_version != record.version {
        return Err(Error::VersionConflict {
            image_id: record.image_id.clone(),
            submitted: decision.prior_version,
            current: record.version,
        });
    }
    let mut next = record.clone();
    match decision.action {
        ReviewAction::Accept => {
            if !record.is_resolved() {
                return Err(Error::InvalidDecision(format!(
                    "{} has no resolved label to accept; relabel it instead",
                    record.image_id
                )));
            }
            next.review = ReviewState::Accepted;
        }
        ReviewAction::Relabel { label } => {
            let (votes_for_winner, total_votes) = record
                .aggregated
                .as_ref()
                .map_or((0, 0), |a| (a.votes_for_winner, a.total_votes));
            next.aggregated = Some(AggregatedLabel {
                image_id: record.image_id.clone(),
                label: Label::Class(label),
                votes_for_winner,
                total_votes,
                ambiguous: false,
                source: LabelSource::ManualReview,
            });
            next.binary_class = Some(binarize_label(Label::Class(label))?);
            next.review = ReviewState::Accepted;
        }
        ReviewAction::RejectForReannotation => {
            next.review = ReviewState::NeedsReannotation;
        }
    }
    next.version += 1;
    next.validate()?;
    Ok(next)
}

/// Applies `decisions` in order to a copy of `initial`.
pub fn replay(initial: &DatasetManifest, decisions: &[ReviewDecision]) -> Result<DatasetManifest> {
    let mut m = initial.clone();
    for d in decisions {
        let rec = m.get(&d.image_id).ok_or_else(|| Error::UnknownImage(d.image_id.clone()))?;
        let next = apply_decision(rec, d)?;
        m.replace(next)?;
    }
    Ok(m)
}

pub fn read_audit_log(path: &Path) -> Result<Vec<ReviewDecision>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
    pub items: Vec<ManifestRecord>,
}

/// Manifest plus its decision log. Optional paths make every accepted
/// decision durable: the log line is appended before the in-memory record
/// changes, then the manifest view is rewritten.
#[derive(Debug)]
pub struct ReviewStore {
    manifest: DatasetManifest,
    log: Vec<ReviewDecision>,
    log_path: Option<PathBuf>,
    manifest_path: Option<PathBuf>,
}

impl ReviewStore {
    pub fn in_memory(manifest: DatasetManifest) -> Self {
        Self {
            manifest,
            log: Vec::new(),
            log_path: None,
            manifest_path: None,
        }
    }

    /// Opens `initial` and replays any decisions already in `log_path`.
    pub fn open(initial: DatasetManifest, log_path: impl Into<PathBuf>, manifest_path: Option<PathBuf>) -> Result<Self> {
        let log_path = log_path.into();
        let log = read_audit_log(&log_path)?;
        let manifest = replay(&initial, &log)?;
        Ok(Self {
            manifest,
            log,
            log_path: Some(log_path),
            manifest_path,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn log(&self) -> &[ReviewDecision] {
        &self.log
    }

    pub fn get(&self, image_id: &str) -> Result<&ManifestRecord> {
        self.manifest
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    /// 1-based pages ordered by image id.
    pub fn list(&self, status: Option<ReviewStatus>, page: usize, page_size: usize) -> Result<Page> {
        if page == 0 || page_size == 0 {
            return Err(Error::InvalidValue("page and page_size start at 1".into()));
        }
        let mut matches: Vec<&ManifestRecord> = self
            .manifest
            .iter()
            .filter(|r| status.is_none_or(|s| status_of(r) == s))
            .collect();
        matches.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let total = matches.len();
        let items = matches
            .into_iter()
            .skip((page - 1).saturating_mul(page_size))
            .take(page_size)
            .cloned()
            .collect();
        Ok(Page {
            total,
            page,
            page_size,
            pages: total.div_ceil(page_size),
            items,
        })
    }

    pub fn submit(&mut self, decision: ReviewDecision) -> Result<ManifestRecord> {
        let next = apply_decision(self.get(&decision.image_id)?, &decision)?;
        if let Some(path) = &self.log_path {
            let mut line = serde_json::to_string(&decision)?;
            line.push('\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            // One write call per line keeps appends whole.
            f.write_all(line.as_bytes()).and_then(|_| f.sync_data()).map_err(|e| Error::io(path, e))?;
        }
        self.manifest.replace(next.clone())?;
        self.log.push(decision);
        if let Some(path) = &self.manifest_path {
            let tmp = path.with_extension("jsonl.tmp");
            fs::write(&tmp, self.manifest.to_jsonl()?).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        }
        Ok(next)
    }
}
