use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A prompt about a different subject whose answer must survive the edit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodPrompt {
    pub prompt: String,
    pub subject: String,
    pub expected: String,
}

/// One editable fact `(s, r, o)` with its counterfactual target `o'`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRecord {
    pub case_id: String,
    pub subject: String,
    pub relation: String,
    pub target_true: String,
    pub target_new: String,
    pub edit_prompt: String,
    pub paraphrase_prompts: Vec<String>,
    pub neighborhood_prompts: Vec<NeighborhoodPrompt>,
    pub reference_texts: Vec<String>,
}

impl FactRecord {
    /// Checks the record-level invariants: `s` occurs in `p` and every `p*`, and `o ≠ o'`.
    pub fn check(&self) -> Result<(), String> {
        let s = self.subject.to_lowercase();
        for p in std::iter::once(&self.edit_prompt).chain(&self.paraphrase_prompts) {
            if !p.to_lowercase().contains(&s) {
                return Err(format!("{}: subject {:?} missing from {:?}", self.case_id, self.subject, p));
            }
        }
        if self.target_true == self.target_new {
            return Err(format!("{}: target_new equals target_true", self.case_id));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditBatch {
    pub records: Vec<FactRecord>,
    pub master_seed: u64,
}

/// Two records that ask for different objects on the same `(s, r)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub subject: String,
    pub relation: String,
    pub first: String,
    pub second: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicts: Vec<Conflict>,
}

impl ConflictReport {
    pub fn case_ids(&self) -> Vec<&str> {
        self.conflicts.iter().flat_map(|c| [c.first.as_str(), c.second.as_str()]).collect()
    }
}

impl fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .conflicts
            .iter()
            .map(|c| format!("{} vs {} on ({}, {})", c.first, c.second, c.subject, c.relation))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Reports every pair of records sharing `(s, r)` with different targets.
/// Equal targets on the same `(s, r)` are allowed.
pub fn validate_batch(batch: &EditBatch) -> Result<(), ConflictReport> {
    let mut by_key: BTreeMap<(&str, &str), Vec<&FactRecord>> = BTreeMap::new();
    for r in &batch.records {
        by_key.entry((r.subject.as_str(), r.relation.as_str())).or_default().push(r);
    }
    let mut report = ConflictReport::default();
    for ((s, rel), group) in by_key {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if a.target_new != b.target_new {
                    report.conflicts.push(Conflict {
                        subject: s.to_string(),
                        relation: rel.to_string(),
                        first: a.case_id.clone(),
                        second: b.case_id.clone(),
                    });
                }
            }
        }
    }
    if report.conflicts.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}
