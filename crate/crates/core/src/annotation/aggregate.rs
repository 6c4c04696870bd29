use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    AggregatedLabel, DatasetManifest, FourClass, Label, LabelSource, ReviewState, VoteRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    /// Votes faster than this percentile of their batch's times are dropped.
    pub time_percentile_cut: f64,
    /// Optional absolute floor on vote time, applied after the percentile cut.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_vote_time_s: Option<f64>,
    pub min_votes: usize,
    pub expected_votes: usize,
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            time_percentile_cut: 5.0,
            min_vote_time_s: None,
            min_votes: 3,
            expected_votes: 5,
            split_ratio: 0.75,
            split_seed: 0,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..50.0).contains(&self.time_percentile_cut) {
            return Err(Error::Config(format!(
                "time_percentile_cut must lie in [0, 50), got {}",
                self.time_percentile_cut
            )));
        }
        if self.min_votes < 1 || self.min_votes > self.expected_votes {
            return Err(Error::Config(format!(
                "need 1 <= min_votes ({}) <= expected_votes ({})",
                self.min_votes, self.expected_votes
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        Ok(())
    }
}

/// Cut value for one batch: the sorted time at 0-based index
/// `floor(p * n / 100)`. Removing times strictly below it drops at most
/// `floor(p * n / 100)` votes and nothing when all times are equal.
fn percentile_cut(times: &mut [f64], percentile: f64) -> f64 {
    times.sort_by(f64::total_cmp);
    let k = ((percentile * times.len() as f64) / 100.0).floor() as usize;
    times[k.min(times.len() - 1)]
}

/// Drops the fastest votes of each annotation batch.
pub fn filter_votes_by_time(votes: &[VoteRecord], cfg: &AggregationConfig) -> Result<Vec<VoteRecord>> {
    if votes.is_empty() {
        return Err(Error::Empty("votes"));
    }
    cfg.validate()?;
    let mut by_batch: HashMap<u32, Vec<f64>> = HashMap::new();
    for v in votes {
        by_batch.entry(v.batch).or_default().push(v.vote_time_s);
    }
    let cuts: HashMap<u32, f64> = by_batch
        .into_iter()
        .map(|(b, mut t)| (b, percentile_cut(&mut t, cfg.time_percentile_cut)))
        .collect();
    let floor = cfg.min_vote_time_s.unwrap_or(f64::NEG_INFINITY);
    let kept: Vec<_> = votes
        .iter()
        .filter(|v| v.vote_time_s >= cuts[&v.batch] && v.vote_time_s >= floor)
        .cloned()
        .collect();
    log::info!("time filter kept {} of {} votes", kept.len(), votes.len());
    Ok(kept)
}

/// Plurality vote for one image. Without a strict winner the label is
/// `UNRESOLVED` and flagged ambiguous for manual review.
pub fn aggregate_votes(votes: &[VoteRecord], cfg: &AggregationConfig) -> Result<AggregatedLabel> {
    let first = votes.first().ok_or(Error::Empty("votes for image"))?;
    if let Some(other) = votes.iter().find(|v| v.image_id != first.image_id) {
        return Err(Error::MixedImageIds(first.image_id.clone(), other.image_id.clone()));
    }
    if votes.len() < cfg.min_votes {
        return Err(Error::TooFewVotes {
            image_id: first.image_id.clone(),
            count: votes.len(),
            min: cfg.min_votes,
        });
    }
    let mut counts = [0u32; 4];
    for v in votes {
        counts[v.label.index()] += 1;
    }
    let top = *counts.iter().max().expect("four classes");
    let winners: Vec<FourClass> = FourClass::ALL
        .into_iter()
        .filter(|c| counts[c.index()] == top)
        .collect();
    let ambiguous = winners.len() != 1;
    Ok(AggregatedLabel {
        image_id: first.image_id.clone(),
        label: if ambiguous { Label::Unresolved } else { Label::Class(winners[0]) },
        votes_for_winner: top,
        total_votes: votes.len() as u32,
        ambiguous,
        source: LabelSource::Vote,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AggregationSummary {
    pub votes_in: usize,
    pub votes_kept: usize,
    pub resolved: usize,
    pub ambiguous: usize,
    pub needs_reannotation: usize,
    pub without_votes: usize,
}

/// Filters, aggregates and binarizes votes for every manifest record.
///
/// Records with too few surviving votes are flagged `needs_reannotation`;
/// records without any votes are left untouched.
pub fn aggregate_manifest(
    manifest: &DatasetManifest,
    votes: &[VoteRecord],
    cfg: &AggregationConfig,
) -> Result<(DatasetManifest, AggregationSummary)> {
    let kept = if votes.is_empty() {
        Vec::new()
    } else {
        filter_votes_by_time(votes, cfg)?
    };
    let mut per_image: BTreeMap<&str, Vec<VoteRecord>> = BTreeMap::new();
    for v in &kept {
        per_image.entry(v.image_id.as_str()).or_default().push(v.clone());
    }
    let mut summary = AggregationSummary {
        votes_in: votes.len(),
        votes_kept: kept.len(),
        ..Default::default()
    };
    let voted: std::collections::HashSet<&str> = votes.iter().map(|v| v.image_id.as_str()).collect();
    let out = manifest.clone().try_map(|mut record| {
        if !voted.contains(record.image_id.as_str()) {
            summary.without_votes += 1;
            return Ok(record);
        }
        let image_votes = per_image.get(record.image_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if image_votes.len() > cfg.expected_votes {
            log::warn!(
                "{} has {} votes, expected {}",
                record.image_id,
                image_votes.len(),
                cfg.expected_votes
            );
        }
        match aggregate_votes(image_votes, cfg) {
            Ok(agg) => {
                if agg.ambiguous {
                    summary.ambiguous += 1;
                } else {
                    summary.resolved += 1;
                }
                record.set_aggregated(agg);
                record.review = ReviewState::Pending;
            }
            Err(Error::TooFewVotes { .. }) | Err(Error::Empty(_)) => {
                summary.needs_reannotation += 1;
                record.aggregated = None;
                record.binary_class = None;
                record.split = None;
                record.review = ReviewState::NeedsReannotation;
            }
            Err(e) => return Err(e),
        }
        Ok(record)
    })?;
    Ok((out, summary))
}
