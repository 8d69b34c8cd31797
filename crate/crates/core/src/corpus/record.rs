//! Normalized patent records as read from the corpus JSONL file.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::fmt;

/// An International Patent Classification code such as `H01M 10/052`.
///
/// Only the section letter is validated; class and subclass are read as the
/// first three and four characters of the code with whitespace removed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IpcCode(String);

impl IpcCode {
    pub fn new(code: impl Into<String>) -> Self {
        IpcCode(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn compact(&self) -> String {
        self.0.chars().filter(|c| !c.is_whitespace()).collect()
    }

    /// Section letter `A`..`H`, or `None` when the code is malformed.
    pub fn section(&self) -> Option<char> {
        let c = self.0.trim_start().chars().next()?.to_ascii_uppercase();
        ('A'..='H').contains(&c).then_some(c)
    }

    /// Index of the section in `A..=H`.
    pub fn section_index(&self) -> Option<usize> {
        self.section().map(|c| (c as u8 - b'A') as usize)
    }

    pub fn class(&self) -> String {
        self.compact().chars().take(3).collect::<String>().to_ascii_uppercase()
    }

    pub fn subclass(&self) -> String {
        self.compact().chars().take(4).collect::<String>().to_ascii_uppercase()
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let compact = self.compact().to_ascii_uppercase();
        let prefix: String = prefix.chars().filter(|c| !c.is_whitespace()).collect();
        compact.starts_with(&prefix.to_ascii_uppercase())
    }
}

impl fmt::Display for IpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An assignee or inventor. The name is optional; it is only used for the
/// prior-activity indicators, matched by exact string equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Party {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub country: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priority {
    pub country: String,
    pub date: NaiveDate,
}

/// A backward citation (prior art referenced by the patent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cited_id: Option<String>,
    pub country: String,
    pub filing_date: NaiveDate,
    #[serde(default)]
    pub ipc_codes: Vec<IpcCode>,
    /// Whether the cited patent belongs to the configured domain. When absent
    /// it is derived from the cited IPC codes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_domain: Option<bool>,
}

impl CitedRef {
    pub fn is_in_domain(&self, domain_prefix: &str) -> bool {
        self.in_domain
            .unwrap_or_else(|| self.ipc_codes.iter().any(|c| c.has_prefix(domain_prefix)))
    }
}

/// Value indicators observed after grant, used only for validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHoc {
    pub maintenance_years: f64,
    pub transfer_count: u32,
    pub family_size: u32,
}

/// Externally computed inventor/assignee history indicators. When present
/// these take precedence over corpus-derived values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedHistory {
    pub inventor_mean_prior: f64,
    pub assignee_mean_prior: f64,
    pub assignee_core_prior: f64,
    pub assignee_peripheral_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub id: String,
    pub filing_date: NaiveDate,
    pub grant_date: NaiveDate,
    #[serde(default)]
    pub ipc_codes: Vec<IpcCode>,
    #[serde(default)]
    pub independent_claim_word_counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independent_claims_text: Option<Vec<String>>,
    #[serde(default)]
    pub dependent_claim_count: u32,
    #[serde(default)]
    pub abstract_word_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub assignees: Vec<Party>,
    #[serde(default)]
    pub inventors: Vec<Party>,
    #[serde(default)]
    pub priorities: Vec<Priority>,
    #[serde(default)]
    pub backward_citations: Vec<CitedRef>,
    #[serde(default)]
    pub npl_citation_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_hoc: Option<PostHoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precomputed_history: Option<PrecomputedHistory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_label: Option<String>,
}

impl PatentRecord {
    pub fn grant_year(&self) -> i32 {
        self.grant_date.year()
    }

    /// Word counts of the independent claims. Raw claim text, when supplied,
    /// is whitespace-tokenized and overrides the stored counts.
    pub fn independent_claim_words(&self) -> Vec<u32> {
        match &self.independent_claims_text {
            Some(texts) if !texts.is_empty() => texts
                .iter()
                .map(|t| t.split_whitespace().count() as u32)
                .collect(),
            _ => self.independent_claim_word_counts.clone(),
        }
    }

    pub fn abstract_words(&self) -> u32 {
        match &self.abstract_text {
            Some(text) => text.split_whitespace().count() as u32,
            None => self.abstract_word_count,
        }
    }

    pub fn in_domain(&self, domain_prefix: &str) -> bool {
        self.ipc_codes.iter().any(|c| c.has_prefix(domain_prefix))
    }

    /// Checks the per-record invariants, returning a description of the
    /// first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.grant_date < self.filing_date {
            return Err(format!(
                "grant_date {} precedes filing_date {}",
                self.grant_date, self.filing_date
            ));
        }
        if let Some(bad) = self.ipc_codes.iter().find(|c| c.section().is_none()) {
            return Err(format!("IPC code {bad:?} has no valid section A-H"));
        }
        if self.independent_claim_words().is_empty() {
            return Err("no independent claims".into());
        }
        for cite in &self.backward_citations {
            if cite.country.trim().is_empty() {
                return Err("backward citation with empty country".into());
            }
            if let Some(bad) = cite.ipc_codes.iter().find(|c| c.section().is_none()) {
                return Err(format!("cited IPC code {bad:?} has no valid section A-H"));
            }
        }
        if let Some(ph) = &self.post_hoc {
            if !(ph.maintenance_years.is_finite() && ph.maintenance_years >= 0.0) {
                return Err("post_hoc.maintenance_years must be a non-negative number".into());
            }
            if ph.family_size == 0 {
                return Err("post_hoc.family_size must be positive".into());
            }
        }
        Ok(())
    }
}

/// `date` shifted by `years` calendar years; Feb 29 maps to Feb 28 when the
/// target year is not a leap year.
pub fn add_years(date: NaiveDate, years: u32) -> NaiveDate {
    let year = date.year() + years as i32;
    NaiveDate::from_ymd_opt(year, date.month(), date.day())
        .or_else(|| NaiveDate::from_ymd_opt(year, date.month(), 28))
        .expect("valid calendar date")
}

/// Difference `later - earlier` in fractional years of 365.25 days.
pub fn years_between(earlier: NaiveDate, later: NaiveDate) -> f64 {
    (later - earlier).num_days() as f64 / 365.25
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn ipc_decomposition() {
        let code = IpcCode::new("H01M 10/0525");
        assert_eq!(code.section(), Some('H'));
        assert_eq!(code.class(), "H01");
        assert_eq!(code.subclass(), "H01M");
        assert!(code.has_prefix("H01M"));
        assert!(!code.has_prefix("H01L"));
        assert_eq!(IpcCode::new("Z99Q").section(), None);
    }

    #[test]
    fn leap_day_maps_to_feb_28() {
        assert_eq!(add_years(d("2008-02-29"), 3), d("2011-02-28"));
        assert_eq!(add_years(d("2008-02-29"), 4), d("2012-02-29"));
        assert_eq!(add_years(d("2010-06-15"), 10), d("2020-06-15"));
    }

    #[test]
    fn text_overrides_counts() {
        let mut rec: PatentRecord = serde_json::from_str(
            r#"{"id":"X","filing_date":"2005-01-01","grant_date":"2007-01-01",
                "independent_claim_word_counts":[7],"abstract_word_count":3}"#,
        )
        .unwrap();
        assert_eq!(rec.independent_claim_words(), vec![7]);
        rec.independent_claims_text = Some(vec!["a  battery\tcell".into()]);
        rec.abstract_text = Some("one two".into());
        assert_eq!(rec.independent_claim_words(), vec![3]);
        assert_eq!(rec.abstract_words(), 2);
    }

    #[test]
    fn validation_rejects_inverted_dates() {
        let rec: PatentRecord = serde_json::from_str(
            r#"{"id":"X","filing_date":"2008-01-01","grant_date":"2007-01-01",
                "independent_claim_word_counts":[7]}"#,
        )
        .unwrap();
        assert!(rec.validate().unwrap_err().contains("precedes"));
    }
}
