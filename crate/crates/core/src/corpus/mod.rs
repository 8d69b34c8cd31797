//! Patent corpus: ingestion, the forward-citation index, impact labels and
//! synthetic corpora.

mod labels;
mod record;
mod synth;

pub use labels::{
    assign_impact_class, derive_thresholds, stanine_thresholds, trajectory_pattern,
    ClassThresholds, HorizonThresholds, ThresholdMode, TrajectoryPattern, BT_SHARE_MAX,
    BT_VT_SHARE_MAX,
};
pub use record::{
    add_years, years_between, CitedRef, IpcCode, Party, PatentRecord, PostHoc,
    PrecomputedHistory, Priority,
};
pub use synth::{generate_synthetic, SynthParams};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_DOMAIN_PREFIX: &str = "H01M";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("line {line}: invalid record {id:?}: {reason}")]
    InvalidRecord {
        line: usize,
        id: Option<String>,
        reason: String,
    },
    #[error("duplicate patent id {0:?}")]
    DuplicateId(String),
    #[error("unknown patent id {0:?}")]
    UnknownId(String),
    #[error("degenerate citation distribution for {horizon} horizon: {reason}")]
    DegenerateThresholds { horizon: Horizon, reason: String },
    #[error("no patent has a complete {0} citation window")]
    NoEligiblePatents(Horizon),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
}

/// Forward-citation window following grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Short,
    Mid,
    Long,
}

impl Horizon {
    pub const ALL: [Horizon; 3] = [Horizon::Short, Horizon::Mid, Horizon::Long];

    pub fn years(self) -> u32 {
        match self {
            Horizon::Short => 3,
            Horizon::Mid => 5,
            Horizon::Long => 10,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Horizon::Short => "short",
            Horizon::Mid => "mid",
            Horizon::Long => "long",
        }
    }

    pub fn parse(s: &str) -> Option<Horizon> {
        Horizon::ALL
            .into_iter()
            .find(|h| h.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Impact class, ordered moderate < valuable < breakthrough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ImpactClass {
    MT = 0,
    VT = 1,
    BT = 2,
}

impl ImpactClass {
    pub const ALL: [ImpactClass; 3] = [ImpactClass::MT, ImpactClass::VT, ImpactClass::BT];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ImpactClass> {
        ImpactClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ImpactClass::MT => "MT",
            ImpactClass::VT => "VT",
            ImpactClass::BT => "BT",
        }
    }

    pub fn parse(s: &str) -> Option<ImpactClass> {
        ImpactClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for ImpactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestMode {
    #[default]
    Strict,
    Lenient,
}

/// A record dropped during lenient ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

/// A citing patent in the forward index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardCite {
    pub citing_id: String,
    pub citing_grant: NaiveDate,
}

/// An immutable, indexed set of patent records.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: BTreeMap<String, PatentRecord>,
    forward_index: BTreeMap<String, Vec<ForwardCite>>,
    domain_ipc_prefix: String,
}

impl Corpus {
    /// Builds the corpus and its forward index. Records are validated;
    /// duplicate ids are rejected.
    pub fn from_records(
        records: impl IntoIterator<Item = PatentRecord>,
        domain_ipc_prefix: &str,
    ) -> Result<Corpus, CorpusError> {
        let mut map = BTreeMap::new();
        for (i, rec) in records.into_iter().enumerate() {
            rec.validate().map_err(|reason| CorpusError::InvalidRecord {
                line: i + 1,
                id: Some(rec.id.clone()),
                reason,
            })?;
            if map.contains_key(&rec.id) {
                return Err(CorpusError::DuplicateId(rec.id));
            }
            map.insert(rec.id.clone(), rec);
        }
        Ok(Self::index(map, domain_ipc_prefix))
    }

    fn index(records: BTreeMap<String, PatentRecord>, domain_ipc_prefix: &str) -> Corpus {
        let mut forward_index: BTreeMap<String, Vec<ForwardCite>> = BTreeMap::new();
        for rec in records.values() {
            let mut cited: Vec<&str> = rec
                .backward_citations
                .iter()
                .filter_map(|c| c.cited_id.as_deref())
                .filter(|id| *id != rec.id && records.contains_key(*id))
                .collect();
            cited.sort_unstable();
            cited.dedup();
            for id in cited {
                forward_index
                    .entry(id.to_string())
                    .or_default()
                    .push(ForwardCite {
                        citing_id: rec.id.clone(),
                        citing_grant: rec.grant_date,
                    });
            }
        }
        for cites in forward_index.values_mut() {
            cites.sort_by(|a, b| {
                (a.citing_grant, &a.citing_id).cmp(&(b.citing_grant, &b.citing_id))
            });
        }
        Corpus {
            records,
            forward_index,
            domain_ipc_prefix: domain_ipc_prefix.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn domain_ipc_prefix(&self) -> &str {
        &self.domain_ipc_prefix
    }

    pub fn get(&self, id: &str) -> Option<&PatentRecord> {
        self.records.get(id)
    }

    pub fn record(&self, id: &str) -> Result<&PatentRecord, CorpusError> {
        self.records
            .get(id)
            .ok_or_else(|| CorpusError::UnknownId(id.to_string()))
    }

    /// Records in id order.
    pub fn records(&self) -> impl Iterator<Item = &PatentRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    /// Patents citing `id`, ordered by grant date.
    pub fn citing(&self, id: &str) -> &[ForwardCite] {
        self.forward_index.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Latest grant date in the corpus; the end of the citation observation
    /// period.
    pub fn observation_end(&self) -> Option<NaiveDate> {
        self.records.values().map(|r| r.grant_date).max()
    }

    /// Whether the full `horizon` window after grant lies within the
    /// observation period ending at `observation_end`.
    pub fn window_complete(
        &self,
        id: &str,
        horizon: Horizon,
        observation_end: NaiveDate,
    ) -> Result<bool, CorpusError> {
        let rec = self.record(id)?;
        Ok(add_years(rec.grant_date, horizon.years()) <= observation_end)
    }

    /// Number of citing patents granted in `(grant, grant + horizon years]`.
    pub fn forward_citation_count(&self, id: &str, horizon: Horizon) -> Result<u32, CorpusError> {
        let rec = self.record(id)?;
        let end = add_years(rec.grant_date, horizon.years());
        Ok(self
            .citing(id)
            .iter()
            .filter(|c| c.citing_grant > rec.grant_date && c.citing_grant <= end)
            .count() as u32)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        for rec in self.records.values() {
            let line = serde_json::to_string(rec).expect("records serialize");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Result of reading a corpus file.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub skipped: Vec<SkippedRecord>,
}

/// Reads a JSONL corpus. Malformed JSON and duplicate ids are always fatal;
/// records that fail schema or invariant checks are fatal in strict mode and
/// skipped with a warning in lenient mode.
pub fn load_corpus(
    path: &Path,
    domain_ipc_prefix: &str,
    mode: IngestMode,
) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = BTreeMap::new();
    let mut skipped = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedJson {
                line: line_no,
                message: e.to_string(),
            })?;
        let id = value.get("id").and_then(|v| v.as_str()).map(str::to_string);
        let parsed = serde_json::from_value::<PatentRecord>(value)
            .map_err(|e| e.to_string())
            .and_then(|rec| rec.validate().map(|_| rec));
        match parsed {
            Ok(rec) => {
                if records.contains_key(&rec.id) {
                    return Err(CorpusError::DuplicateId(rec.id));
                }
                records.insert(rec.id.clone(), rec);
            }
            Err(reason) => match mode {
                IngestMode::Strict => {
                    return Err(CorpusError::InvalidRecord {
                        line: line_no,
                        id,
                        reason,
                    })
                }
                IngestMode::Lenient => {
                    log::warn!("line {line_no}: skipping record {id:?}: {reason}");
                    skipped.push(SkippedRecord {
                        line: line_no,
                        id,
                        reason,
                    });
                }
            },
        }
    }
    Ok(LoadedCorpus {
        corpus: Corpus::index(records, domain_ipc_prefix),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, grant: &str, cites: &[&str]) -> PatentRecord {
        let grant: NaiveDate = grant.parse().unwrap();
        PatentRecord {
            id: id.into(),
            filing_date: grant - chrono::Duration::days(700),
            grant_date: grant,
            ipc_codes: vec![IpcCode::new("H01M 4/00")],
            independent_claim_word_counts: vec![40],
            independent_claims_text: None,
            dependent_claim_count: 0,
            abstract_word_count: 100,
            abstract_text: None,
            assignees: vec![],
            inventors: vec![],
            priorities: vec![],
            backward_citations: cites
                .iter()
                .map(|c| CitedRef {
                    cited_id: Some(c.to_string()),
                    country: "US".into(),
                    filing_date: "2000-01-01".parse().unwrap(),
                    ipc_codes: vec![],
                    in_domain: None,
                })
                .collect(),
            npl_citation_count: 0,
            post_hoc: None,
            precomputed_history: None,
            topic_label: None,
        }
    }

    #[test]
    fn horizon_windows_count_from_grant() {
        let corpus = Corpus::from_records(
            vec![
                rec("A", "2010-03-01", &[]),
                rec("B", "2011-03-01", &["A"]),
                rec("C", "2012-03-01", &["A"]),
                rec("D", "2016-03-01", &["A"]),
                rec("E", "2010-03-01", &["A"]),
            ],
            "H01M",
        )
        .unwrap();
        // E is granted on the same day as A and falls outside the open left end.
        assert_eq!(corpus.forward_citation_count("A", Horizon::Short).unwrap(), 2);
        assert_eq!(corpus.forward_citation_count("A", Horizon::Mid).unwrap(), 2);
        assert_eq!(corpus.forward_citation_count("A", Horizon::Long).unwrap(), 3);
        assert_eq!(corpus.forward_citation_count("B", Horizon::Long).unwrap(), 0);
        assert!(matches!(
            corpus.forward_citation_count("Z", Horizon::Short),
            Err(CorpusError::UnknownId(_))
        ));
    }

    #[test]
    fn right_boundary_is_inclusive() {
        let corpus = Corpus::from_records(
            vec![
                rec("A", "2010-03-01", &[]),
                rec("B", "2013-03-01", &["A"]),
                rec("C", "2013-03-02", &["A"]),
            ],
            "H01M",
        )
        .unwrap();
        assert_eq!(corpus.forward_citation_count("A", Horizon::Short).unwrap(), 1);
        assert_eq!(corpus.forward_citation_count("A", Horizon::Mid).unwrap(), 2);
    }

    #[test]
    fn repeated_citation_indexed_once() {
        let corpus = Corpus::from_records(
            vec![rec("A", "2010-03-01", &[]), rec("B", "2011-03-01", &["A", "A", "X"])],
            "H01M",
        )
        .unwrap();
        assert_eq!(corpus.citing("A").len(), 1);
        assert!(corpus.citing("X").is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::from_records(
            vec![rec("A", "2010-03-01", &[]), rec("A", "2011-03-01", &[])],
            "H01M",
        )
        .unwrap_err();
        assert!(err.to_string().contains("\"A\""));
    }

    #[test]
    fn window_completeness() {
        let corpus = Corpus::from_records(
            vec![rec("A", "2010-03-01", &[]), rec("B", "2013-03-01", &["A"])],
            "H01M",
        )
        .unwrap();
        let end = corpus.observation_end().unwrap();
        assert!(corpus.window_complete("A", Horizon::Short, end).unwrap());
        assert!(!corpus.window_complete("A", Horizon::Mid, end).unwrap());
    }
}
