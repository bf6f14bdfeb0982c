use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Answered,
    BudgetExceeded,
}

/// One private-query call, whether granted or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub op_name: String,
    pub source_id: u32,
    pub epsilon: f64,
    pub epsilon_exact: String,
    pub outcome: Outcome,
}

/// Answered query on one source; the answer itself is kept only as a
/// SHA-256 digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub op_name: String,
    pub epsilon: String,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub source_id: u32,
    pub parent_id: Option<u32>,
    pub kind: String,
    pub stability: f64,
    pub budget: f64,
    pub budget_exact: String,
}

/// Budget ledger dump: one row per source plus the transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub eps_total: f64,
    pub eps_total_exact: String,
    pub sources: Vec<LedgerRow>,
    pub transcript: Vec<TranscriptEntry>,
}
