use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five clutter classes. Declaration order is the tie-breaking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterLabel {
    Deciduous,
    Coniferous,
    Residential,
    NonResidential,
    Other,
}

impl ClutterLabel {
    pub const ALL: [ClutterLabel; 5] = [
        ClutterLabel::Deciduous,
        ClutterLabel::Coniferous,
        ClutterLabel::Residential,
        ClutterLabel::NonResidential,
        ClutterLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn coarse(self) -> CoarseLabel {
        match self {
            ClutterLabel::Deciduous | ClutterLabel::Coniferous => CoarseLabel::Tree,
            ClutterLabel::Residential | ClutterLabel::NonResidential => CoarseLabel::Building,
            ClutterLabel::Other => CoarseLabel::Other,
        }
    }

    pub fn is_tree(self) -> bool {
        self.coarse() == CoarseLabel::Tree
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClutterLabel::Deciduous => "deciduous",
            ClutterLabel::Coniferous => "coniferous",
            ClutterLabel::Residential => "residential",
            ClutterLabel::NonResidential => "non_residential",
            ClutterLabel::Other => "other",
        }
    }

    /// Row label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ClutterLabel::Deciduous => "Deciduous",
            ClutterLabel::Coniferous => "Coniferous",
            ClutterLabel::Residential => "Residential",
            ClutterLabel::NonResidential => "Non-residential",
            ClutterLabel::Other => "Other",
        }
    }
}

impl fmt::Display for ClutterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown clutter label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for ClutterLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Stage-1 classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseLabel {
    Tree,
    Building,
    Other,
}

impl CoarseLabel {
    pub const ALL: [CoarseLabel; 3] = [CoarseLabel::Tree, CoarseLabel::Building, CoarseLabel::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseLabel::Tree => "tree",
            CoarseLabel::Building => "building",
            CoarseLabel::Other => "other",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            CoarseLabel::Tree => "Tree",
            CoarseLabel::Building => "Building",
            CoarseLabel::Other => "Other",
        }
    }

    /// Fine classes that map onto this coarse class, in label order.
    pub fn fine(self) -> &'static [ClutterLabel] {
        match self {
            CoarseLabel::Tree => &[ClutterLabel::Deciduous, ClutterLabel::Coniferous],
            CoarseLabel::Building => &[ClutterLabel::Residential, ClutterLabel::NonResidential],
            CoarseLabel::Other => &[ClutterLabel::Other],
        }
    }
}

impl fmt::Display for CoarseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_mapping_is_total() {
        let coarse: Vec<_> = ClutterLabel::ALL.iter().map(|l| l.coarse()).collect();
        assert_eq!(
            coarse,
            [
                CoarseLabel::Tree,
                CoarseLabel::Tree,
                CoarseLabel::Building,
                CoarseLabel::Building,
                CoarseLabel::Other
            ]
        );
        for c in CoarseLabel::ALL {
            assert!(c.fine().iter().all(|f| f.coarse() == c));
        }
    }

    #[test]
    fn parse_round_trip() {
        for l in ClutterLabel::ALL {
            assert_eq!(l.as_str().parse::<ClutterLabel>().unwrap(), l);
        }
        assert_eq!("Non-Residential".parse::<ClutterLabel>().unwrap(), ClutterLabel::NonResidential);
        assert!("shrub".parse::<ClutterLabel>().is_err());
    }

    #[test]
    fn argmax_ties_to_first() {
        assert_eq!(argmax_first(&[0.5, 0.5]), 0);
        assert_eq!(argmax_first(&[0.1, 0.4, 0.4, 0.1]), 1);
    }
}
