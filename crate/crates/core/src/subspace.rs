//! Sub-space and database identifiers shared across modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the three conceptual sub-spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Problem,
    Method,
    Findings,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Problem, Dimension::Method, Dimension::Findings];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Problem => "problem",
            Dimension::Method => "method",
            Dimension::Findings => "findings",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn db_kind(self) -> DbKind {
        match self {
            Dimension::Problem => DbKind::Problem,
            Dimension::Method => DbKind::Method,
            Dimension::Findings => DbKind::Findings,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "problem" => Ok(Dimension::Problem),
            "method" => Ok(Dimension::Method),
            "findings" => Ok(Dimension::Findings),
            other => Err(format!("unknown sub-space `{other}` (expected problem, method or findings)")),
        }
    }
}

/// The five retrieval databases: three node spaces and two transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbKind {
    Problem,
    Method,
    Findings,
    P2m,
    M2k,
}

impl DbKind {
    pub const ALL: [DbKind; 5] = [DbKind::Problem, DbKind::Method, DbKind::Findings, DbKind::P2m, DbKind::M2k];

    pub fn as_str(self) -> &'static str {
        match self {
            DbKind::Problem => "problem",
            DbKind::Method => "method",
            DbKind::Findings => "findings",
            DbKind::P2m => "p2m",
            DbKind::M2k => "m2k",
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<DbKind> {
        DbKind::ALL.get(code as usize).copied()
    }

    pub fn is_transition(self) -> bool {
        matches!(self, DbKind::P2m | DbKind::M2k)
    }

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            DbKind::Problem => Some(Dimension::Problem),
            DbKind::Method => Some(Dimension::Method),
            DbKind::Findings => Some(Dimension::Findings),
            _ => None,
        }
    }
}

impl fmt::Display for DbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DbKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DbKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown database `{s}` (expected problem, method, findings, p2m or m2k)"))
    }
}
