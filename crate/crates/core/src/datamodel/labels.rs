use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The four annotation classes, in the order annotators were shown them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FourClass {
    Overlaying,
    Organic,
    Both,
    None,
}

impl FourClass {
    pub const ALL: [FourClass; 4] = [
        FourClass::Overlaying,
        FourClass::Organic,
        FourClass::Both,
        FourClass::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FourClass::Overlaying => "Overlaying",
            FourClass::Organic => "Organic",
            FourClass::Both => "Both",
            FourClass::None => "None",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn has_overlay(self) -> bool {
        matches!(self, FourClass::Overlaying | FourClass::Both)
    }

    pub fn has_scene_text(self) -> bool {
        matches!(self, FourClass::Organic | FourClass::Both)
    }
}

impl fmt::Display for FourClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FourClass {
    type Err = Error;

    /// Case-insensitive; `Scene` is accepted as an alias of `Organic`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "overlaying" => Ok(FourClass::Overlaying),
            "organic" | "scene" => Ok(FourClass::Organic),
            "both" => Ok(FourClass::Both),
            "none" => Ok(FourClass::None),
            other => Err(Error::InvalidValue(format!("unknown label {other:?}"))),
        }
    }
}

impl Serialize for FourClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for FourClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Outcome of aggregation: a resolved class, or `UNRESOLVED` when no strict
/// plurality exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Class(FourClass),
    Unresolved,
}

impl Label {
    pub const UNRESOLVED: &'static str = "UNRESOLVED";

    pub fn class(self) -> Option<FourClass> {
        match self {
            Label::Class(c) => Some(c),
            Label::Unresolved => None,
        }
    }

    pub fn is_resolved(self) -> bool {
        matches!(self, Label::Class(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Class(c) => c.fmt(f),
            Label::Unresolved => f.write_str(Self::UNRESOLVED),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == Self::UNRESOLVED {
            Ok(Label::Unresolved)
        } else {
            s.parse().map(Label::Class).map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Vote,
    ManualReview,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub image_id: String,
    pub label: Label,
    pub votes_for_winner: u32,
    pub total_votes: u32,
    pub ambiguous: bool,
    pub source: LabelSource,
}

impl AggregatedLabel {
    pub fn validate(&self) -> Result<()> {
        if self.votes_for_winner > self.total_votes {
            return Err(Error::InvalidValue(format!(
                "{}: {} winner votes out of {}",
                self.image_id, self.votes_for_winner, self.total_votes
            )));
        }
        if self.ambiguous && self.label.is_resolved() {
            return Err(Error::InvalidValue(format!(
                "{}: ambiguous label must be UNRESOLVED",
                self.image_id
            )));
        }
        if !self.ambiguous && !self.label.is_resolved() {
            return Err(Error::InvalidValue(format!(
                "{}: UNRESOLVED label must be flagged ambiguous",
                self.image_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryClass {
    Positive,
    Negative,
}

impl BinaryClass {
    pub fn as_target(self) -> f32 {
        match self {
            BinaryClass::Positive => 1.0,
            BinaryClass::Negative => 0.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryClass::Positive
    }
}

/// Maps the four annotation classes to the detection target: any overlaid
/// text is positive, scene-only or text-free images are negative.
pub fn binarize_label(label: Label) -> Result<BinaryClass> {
    match label {
        Label::Class(FourClass::Overlaying | FourClass::Both) => Ok(BinaryClass::Positive),
        Label::Class(FourClass::Organic | FourClass::None) => Ok(BinaryClass::Negative),
        Label::Unresolved => Err(Error::Unresolved("label".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// Where a record sits in the vetting workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    #[default]
    Pending,
    Accepted,
    NeedsReannotation,
}

impl ReviewState {
    pub fn is_pending(&self) -> bool {
        *self == ReviewState::Pending
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarization_follows_overlay_presence() {
        use FourClass::*;
        assert_eq!(binarize_label(Label::Class(Overlaying)).unwrap(), BinaryClass::Positive);
        assert_eq!(binarize_label(Label::Class(Both)).unwrap(), BinaryClass::Positive);
        assert_eq!(binarize_label(Label::Class(Organic)).unwrap(), BinaryClass::Negative);
        assert_eq!(binarize_label(Label::Class(None)).unwrap(), BinaryClass::Negative);
        assert!(binarize_label(Label::Unresolved).is_err());
    }

    #[test]
    fn scene_is_an_alias_of_organic() {
        assert_eq!("Scene".parse::<FourClass>().unwrap(), FourClass::Organic);
        assert_eq!("organic".parse::<FourClass>().unwrap(), FourClass::Organic);
        assert!("Logo".parse::<FourClass>().is_err());
        let l: Label = serde_json::from_str("\"Scene\"").unwrap();
        assert_eq!(l, Label::Class(FourClass::Organic));
        assert_eq!(serde_json::to_string(&l).unwrap(), "\"Organic\"");
    }

    #[test]
    fn unresolved_serializes_as_marker() {
        assert_eq!(serde_json::to_string(&Label::Unresolved).unwrap(), "\"UNRESOLVED\"");
        let back: Label = serde_json::from_str("\"UNRESOLVED\"").unwrap();
        assert_eq!(back, Label::Unresolved);
    }

    #[test]
    fn ambiguity_and_resolution_must_agree() {
        let mut agg = AggregatedLabel {
            image_id: "a".into(),
            label: Label::Class(FourClass::Both),
            votes_for_winner: 2,
            total_votes: 5,
            ambiguous: true,
            source: LabelSource::Vote,
        };
        assert!(agg.validate().is_err());
        agg.label = Label::Unresolved;
        assert!(agg.validate().is_ok());
        agg.ambiguous = false;
        assert!(agg.validate().is_err());
    }
}
