//! The twelve risk vectors and their fixed category/channel mapping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VectorId {
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
    V7,
    V8,
    V9,
    V10,
    V11,
    V12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Context poisoning.
    C1,
    /// Transactional edits.
    C2,
    /// Human-IDE interaction.
    C3,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::C1 => "context poisoning",
            Category::C2 => "transactional edits",
            Category::C3 => "human-IDE interaction",
        }
    }
}

/// Context channel a vector poisons (or the run style it needs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    ModelIntrinsic,
    Viewed,
    History,
    Undo,
    Structural,
    Crossfile,
    Transaction,
    Sequential,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown risk vector {0:?} (expected V1..V12)")]
pub struct BadVector(pub String);

impl VectorId {
    pub const ALL: [VectorId; 12] = [
        VectorId::V1,
        VectorId::V2,
        VectorId::V3,
        VectorId::V4,
        VectorId::V5,
        VectorId::V6,
        VectorId::V7,
        VectorId::V8,
        VectorId::V9,
        VectorId::V10,
        VectorId::V11,
        VectorId::V12,
    ];

    pub fn parse(text: &str) -> Result<Self, BadVector> {
        let norm = text.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| BadVector(text.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            VectorId::V1 => "V1",
            VectorId::V2 => "V2",
            VectorId::V3 => "V3",
            VectorId::V4 => "V4",
            VectorId::V5 => "V5",
            VectorId::V6 => "V6",
            VectorId::V7 => "V7",
            VectorId::V8 => "V8",
            VectorId::V9 => "V9",
            VectorId::V10 => "V10",
            VectorId::V11 => "V11",
            VectorId::V12 => "V12",
        }
    }

    /// V1–V6 are context poisoning, V7–V9 transactional, V10–V12 interaction.
    pub fn category(self) -> Category {
        match self {
            VectorId::V1 | VectorId::V2 | VectorId::V3 | VectorId::V4 | VectorId::V5
            | VectorId::V6 => Category::C1,
            VectorId::V7 | VectorId::V8 | VectorId::V9 => Category::C2,
            VectorId::V10 | VectorId::V11 | VectorId::V12 => Category::C3,
        }
    }

    pub fn channel(self) -> Channel {
        match self {
            VectorId::V1 => Channel::ModelIntrinsic,
            VectorId::V2 => Channel::Viewed,
            VectorId::V3 => Channel::History,
            VectorId::V4 => Channel::Undo,
            VectorId::V5 => Channel::Structural,
            VectorId::V6 => Channel::Crossfile,
            VectorId::V7 | VectorId::V8 | VectorId::V9 => Channel::Transaction,
            VectorId::V10 | VectorId::V11 | VectorId::V12 => Channel::Sequential,
        }
    }

    pub fn cwe(self) -> u32 {
        match self {
            VectorId::V1 => 327,
            VectorId::V2 => 312,
            VectorId::V3 => 89,
            VectorId::V4 => 798,
            VectorId::V5 => 502,
            VectorId::V6 => 22,
            VectorId::V7 => 532,
            VectorId::V8 => 668,
            VectorId::V9 => 611,
            VectorId::V10 | VectorId::V11 | VectorId::V12 => 89,
        }
    }
}

impl std::fmt::Display for VectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_mapping() {
        assert_eq!(VectorId::V6.category(), Category::C1);
        assert_eq!(VectorId::V7.category(), Category::C2);
        assert_eq!(VectorId::V10.category(), Category::C3);
    }

    #[test]
    fn parse_is_case_tolerant() {
        assert_eq!(VectorId::parse("v9").unwrap(), VectorId::V9);
        assert!(VectorId::parse("V13").is_err());
    }

    #[test]
    fn cwe_table() {
        let expected = [327, 312, 89, 798, 502, 22, 532, 668, 611, 89, 89, 89];
        for (v, cwe) in VectorId::ALL.into_iter().zip(expected) {
            assert_eq!(v.cwe(), cwe);
        }
    }
}
