//! The dataset manifest: one JSON object per line, one line per image.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::{binarize_label, AggregatedLabel, BinaryClass, ReviewState, Split};
use crate::error::{Error, Result};

/// Home and furniture product categories used for the per-category histogram.
pub const CATEGORIES: [&str; 25] = [
    "bathroom",
    "bedding",
    "bookcases",
    "cabinets",
    "candles",
    "chairs",
    "clocks",
    "curtains",
    "cushions",
    "desks",
    "dining_tables",
    "dressers",
    "kitchenware",
    "lamps",
    "mirrors",
    "nightstands",
    "outdoor_furniture",
    "plants",
    "rugs",
    "shelving",
    "sofas",
    "storage",
    "tv_stands",
    "vases",
    "wall_art",
];

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub image_path: String,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregated: Option<AggregatedLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_class: Option<BinaryClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_score: Option<f64>,
    #[serde(default)]
    pub n_text_regions: u32,
    #[serde(default)]
    pub review: ReviewState,
    /// Bumped by every accepted review decision.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub version: u64,
}

impl ManifestRecord {
    pub fn new(image_id: impl Into<String>, image_path: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            image_path: image_path.into(),
            category: category.into(),
            aggregated: None,
            binary_class: None,
            split: None,
            gate_score: None,
            n_text_regions: 0,
            review: ReviewState::Pending,
            version: 0,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.aggregated
            .as_ref()
            .is_some_and(|a| a.label.is_resolved())
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::InvalidValue("empty image_id".into()));
        }
        if let Some(agg) = &self.aggregated {
            agg.validate()?;
            if agg.image_id != self.image_id {
                return Err(Error::InvalidValue(format!(
                    "aggregated label belongs to {:?}, record is {:?}",
                    agg.image_id, self.image_id
                )));
            }
        }
        match (&self.aggregated, self.binary_class) {
            (Some(agg), Some(bc)) if agg.label.is_resolved() => {
                if binarize_label(agg.label)? != bc {
                    return Err(Error::InvalidValue(format!(
                        "{}: binary_class disagrees with label {}",
                        self.image_id, agg.label
                    )));
                }
            }
            (Some(agg), None) if agg.label.is_resolved() => {
                return Err(Error::InvalidValue(format!(
                    "{}: resolved label without binary_class",
                    self.image_id
                )))
            }
            (_, Some(_)) if !self.is_resolved() => {
                return Err(Error::InvalidValue(format!(
                    "{}: binary_class set on an unresolved record",
                    self.image_id
                )))
            }
            _ => {}
        }
        if let Some(g) = self.gate_score {
            if !(g >= 0.0) {
                return Err(Error::InvalidValue(format!("{}: gate_score {g}", self.image_id)));
            }
        }
        Ok(())
    }

    /// Sets the aggregated label and keeps `binary_class` in step with it.
    pub fn set_aggregated(&mut self, agg: AggregatedLabel) {
        self.binary_class = binarize_label(agg.label).ok();
        self.aggregated = Some(agg);
    }
}

/// Ordered, id-unique collection of manifest records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
    index: HashMap<String, usize>,
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut m = Self::new();
        for r in records {
            m.push(r)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, record: ManifestRecord) -> Result<()> {
        record.validate()?;
        if self.index.contains_key(&record.image_id) {
            return Err(Error::DuplicateImageId {
                image_id: record.image_id,
                line: self.records.len() + 1,
            });
        }
        self.index.insert(record.image_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ManifestRecord> {
        self.records.iter()
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    /// Replaces the record with the same id. The id itself cannot change.
    pub fn replace(&mut self, record: ManifestRecord) -> Result<()> {
        record.validate()?;
        let &i = self
            .index
            .get(&record.image_id)
            .ok_or_else(|| Error::UnknownImage(record.image_id.clone()))?;
        self.records[i] = record;
        Ok(())
    }

    /// Applies `f` to every record, revalidating afterwards.
    pub fn try_map(self, mut f: impl FnMut(ManifestRecord) -> Result<ManifestRecord>) -> Result<Self> {
        let records = self
            .records
            .into_iter()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(records)
    }

    pub fn filter(&self, mut keep: impl FnMut(&ManifestRecord) -> bool) -> Self {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::from_records(records).expect("subset of a valid manifest is valid")
    }

    pub fn into_records(self) -> Vec<ManifestRecord> {
        self.records
    }

    /// Serializes to JSON Lines; the output is deterministic for equal manifests.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut m = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
            record.validate().map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
            if m.index.contains_key(&record.image_id) {
                return Err(Error::DuplicateImageId {
                    image_id: record.image_id,
                    line: line_no,
                });
            }
            m.index.insert(record.image_id.clone(), m.records.len());
            m.records.push(record);
        }
        Ok(m)
    }
}

impl<'a> IntoIterator for &'a DatasetManifest {
    type Item = &'a ManifestRecord;
    type IntoIter = std::slice::Iter<'a, ManifestRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_jsonl(&text, path)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::write(path, manifest.to_jsonl()?).map_err(|e| Error::io(path, e))
}

/// Appends one record to a manifest file, refusing ids already present.
pub fn append_record(path: &Path, record: &ManifestRecord) -> Result<()> {
    record.validate()?;
    let mut lines = 0;
    if path.exists() {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            lines = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            #[derive(Deserialize)]
            struct IdOnly {
                image_id: String,
            }
            let id: IdOnly = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if id.image_id == record.image_id {
                return Err(Error::DuplicateImageId {
                    image_id: id.image_id,
                    line: i + 1,
                });
            }
        }
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    log::debug!("appended {} as line {}", record.image_id, lines + 1);
    Ok(())
}
