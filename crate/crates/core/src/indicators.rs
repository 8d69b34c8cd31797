//! The 44-dimensional patent indicator vector, corpus-level IPC statistics
//! and feature standardization.
//!
//! Layout (index: name):
//!
//! | range   | indicators                                   |
//! |---------|----------------------------------------------|
//! | 0..=4   | SC_1..SC_5 scope and coverage                |
//! | 5..=6   | PR_1..PR_2 priority                          |
//! | 7..=12  | DEC_1..DEC_6 development effort              |
//! | 13..=14 | CP_1..CP_2 completeness                      |
//! | 15..=17 | TE_1..TE_3 technology environment            |
//! | 18..=25 | TE_4_A..TE_4_H patent section frequencies    |
//! | 26      | TE_5 technology cycle time                   |
//! | 27      | PK_1 non-patent citations                    |
//! | 28      | PK_2 recombination ratio                     |
//! | 29..=36 | PK_3_A..PK_3_H cited section frequencies     |
//! | 37..=43 | PK_4..PK_10 prior knowledge                  |

use crate::corpus::{years_between, Corpus, CorpusError, PatentRecord};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use thiserror::Error;

pub const N_FEATURES: usize = 44;
/// Bumped whenever the order or meaning of any dimension changes.
pub const LAYOUT_VERSION: &str = "indicators-v1";
pub const DEFAULT_HOME_COUNTRY: &str = "US";

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "SC_1", "SC_2", "SC_3", "SC_4", "SC_5", "PR_1", "PR_2", "DEC_1", "DEC_2", "DEC_3", "DEC_4",
    "DEC_5", "DEC_6", "CP_1", "CP_2", "TE_1", "TE_2", "TE_3", "TE_4_A", "TE_4_B", "TE_4_C",
    "TE_4_D", "TE_4_E", "TE_4_F", "TE_4_G", "TE_4_H", "TE_5", "PK_1", "PK_2", "PK_3_A", "PK_3_B",
    "PK_3_C", "PK_3_D", "PK_3_E", "PK_3_F", "PK_3_G", "PK_3_H", "PK_4", "PK_5", "PK_6", "PK_7",
    "PK_8", "PK_9", "PK_10",
];

pub const SC_1: usize = 0;
pub const SC_2: usize = 1;
pub const SC_3: usize = 2;
pub const SC_4: usize = 3;
pub const SC_5: usize = 4;
pub const PR_1: usize = 5;
pub const PR_2: usize = 6;
pub const DEC_1: usize = 7;
pub const CP_1: usize = 13;
pub const CP_2: usize = 14;
pub const TE_1: usize = 15;
pub const TE_2: usize = 16;
pub const TE_3: usize = 17;
pub const TE_4_A: usize = 18;
pub const TE_5: usize = 26;
pub const PK_1: usize = 27;
pub const PK_2: usize = 28;
pub const PK_3_A: usize = 29;
pub const PK_4: usize = 37;
pub const PK_5: usize = 38;
pub const PK_6: usize = 39;
pub const PK_7: usize = 40;
pub const PK_8: usize = 41;
pub const PK_9: usize = 42;
pub const PK_10: usize = 43;

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("need at least 2 feature vectors to fit a standardizer, got {0}")]
    TooFewVectors(usize),
    #[error("feature vector has {0} entries, expected {N_FEATURES}")]
    WrongLength(usize),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(#[serde(with = "values_serde")] pub [f64; N_FEATURES]);

mod values_serde {
    use super::N_FEATURES;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; N_FEATURES], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; N_FEATURES], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let n = v.len();
        v.try_into()
            .map_err(|_| D::Error::custom(format!("expected {N_FEATURES} values, got {n}")))
    }
}

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; N_FEATURES])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, IndicatorError> {
        let arr: [f64; N_FEATURES] = values
            .try_into()
            .map_err(|_| IndicatorError::WrongLength(values.len()))?;
        Ok(FeatureVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Indicators for one patent.
#[derive(Debug, Clone, PartialEq)]
pub struct PatentFeatures {
    pub id: String,
    pub vector: FeatureVector,
    /// TE_5 was set to 0 because the patent has no backward citations.
    pub cycle_time_imputed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SubclassSeries {
    yearly: BTreeMap<i32, u32>,
    applicants: BTreeMap<i32, BTreeSet<String>>,
}

/// Grant-year issuance and applicant statistics per IPC subclass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IpcStats {
    first_year: i32,
    last_year: i32,
    series: BTreeMap<String, SubclassSeries>,
}

fn party_key(name: &Option<String>, country: &str) -> String {
    name.clone().unwrap_or_else(|| format!("<unnamed:{country}>"))
}

impl IpcStats {
    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.last_year
    }

    pub fn subclasses(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn yearly(&self, subclass: &str, year: i32) -> u32 {
        self.series
            .get(subclass)
            .and_then(|s| s.yearly.get(&year))
            .copied()
            .unwrap_or(0)
    }

    /// Patents issued in the subclass up to and including `year`.
    pub fn cumulative(&self, subclass: &str, year: i32) -> u32 {
        self.series
            .get(subclass)
            .map(|s| s.yearly.range(..=year).map(|(_, c)| c).sum())
            .unwrap_or(0)
    }

    /// Distinct applicants issuing patents in the subclass in `year`.
    pub fn applicants(&self, subclass: &str, year: i32) -> u32 {
        self.series
            .get(subclass)
            .and_then(|s| s.applicants.get(&year))
            .map(|a| a.len() as u32)
            .unwrap_or(0)
    }

    /// Mean of (yearly, cumulative, applicants) over the years from the start
    /// of the corpus through `through_year`.
    fn environment_means(&self, subclass: &str, through_year: i32) -> [f64; 3] {
        let years = self.first_year..=through_year.max(self.first_year);
        let n = years.clone().count() as f64;
        let mut acc = [0.0; 3];
        for y in years {
            acc[0] += self.yearly(subclass, y) as f64;
            acc[1] += self.cumulative(subclass, y) as f64;
            acc[2] += self.applicants(subclass, y) as f64;
        }
        acc.map(|v| v / n)
    }
}

pub fn corpus_ipc_stats(corpus: &Corpus) -> IpcStats {
    let mut stats = IpcStats {
        first_year: i32::MAX,
        last_year: i32::MIN,
        series: BTreeMap::new(),
    };
    for rec in corpus.records() {
        let year = rec.grant_year();
        stats.first_year = stats.first_year.min(year);
        stats.last_year = stats.last_year.max(year);
        let subclasses: BTreeSet<String> = rec.ipc_codes.iter().map(|c| c.subclass()).collect();
        for sub in subclasses {
            let s = stats.series.entry(sub).or_default();
            *s.yearly.entry(year).or_insert(0) += 1;
            let names = s.applicants.entry(year).or_default();
            for a in &rec.assignees {
                names.insert(party_key(&a.name, &a.country));
            }
        }
    }
    if stats.series.is_empty() && corpus.is_empty() {
        stats.first_year = 0;
        stats.last_year = 0;
    }
    stats
}

/// Per-name grant history used for the inventor and assignee indicators.
#[derive(Debug, Clone, Default)]
struct History {
    /// name -> sorted (grant date, in domain)
    inventors: BTreeMap<String, Vec<(NaiveDate, bool)>>,
    assignees: BTreeMap<String, Vec<(NaiveDate, bool)>>,
}

impl History {
    fn build(corpus: &Corpus) -> History {
        let mut h = History::default();
        let prefix = corpus.domain_ipc_prefix();
        for rec in corpus.records() {
            let entry = (rec.grant_date, rec.in_domain(prefix));
            let inv: BTreeSet<&str> = rec.inventors.iter().filter_map(|p| p.name.as_deref()).collect();
            for name in inv {
                h.inventors.entry(name.to_string()).or_default().push(entry);
            }
            let asg: BTreeSet<&str> = rec.assignees.iter().filter_map(|p| p.name.as_deref()).collect();
            for name in asg {
                h.assignees.entry(name.to_string()).or_default().push(entry);
            }
        }
        for v in h.inventors.values_mut().chain(h.assignees.values_mut()) {
            v.sort();
        }
        h
    }

    /// (total, in-domain) patents granted strictly before `date`.
    fn prior(list: Option<&Vec<(NaiveDate, bool)>>, date: NaiveDate) -> (u32, u32) {
        let Some(list) = list else { return (0, 0) };
        let end = list.partition_point(|(d, _)| *d < date);
        let core = list[..end].iter().filter(|(_, dom)| *dom).count() as u32;
        (end as u32, core)
    }
}

/// Everything needed to extract indicators from one corpus.
#[derive(Debug, Clone)]
pub struct IndicatorContext {
    pub stats: IpcStats,
    pub home_country: String,
    history: History,
}

impl IndicatorContext {
    pub fn new(corpus: &Corpus) -> Self {
        Self::with_home_country(corpus, DEFAULT_HOME_COUNTRY)
    }

    pub fn with_home_country(corpus: &Corpus, home_country: &str) -> Self {
        IndicatorContext {
            stats: corpus_ipc_stats(corpus),
            home_country: home_country.to_string(),
            history: History::build(corpus),
        }
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn distinct<'a>(it: impl Iterator<Item = &'a str>) -> usize {
    it.collect::<BTreeSet<_>>().len()
}

pub fn extract_features(
    corpus: &Corpus,
    id: &str,
    ctx: &IndicatorContext,
) -> Result<PatentFeatures, IndicatorError> {
    let rec = corpus.record(id)?;
    Ok(features_for_record(rec, corpus.domain_ipc_prefix(), ctx))
}

/// Extracts every patent in the corpus, in id order.
pub fn extract_all(corpus: &Corpus, ctx: &IndicatorContext) -> Vec<PatentFeatures> {
    corpus
        .records()
        .map(|r| features_for_record(r, corpus.domain_ipc_prefix(), ctx))
        .collect()
}

fn features_for_record(rec: &PatentRecord, domain_prefix: &str, ctx: &IndicatorContext) -> PatentFeatures {
    let mut v = [0.0; N_FEATURES];
    let cites = &rec.backward_citations;
    let home = ctx.home_country.as_str();

    // scope and coverage
    v[SC_1] = distinct(cites.iter().map(|c| c.country.as_str())) as f64;
    let claims = rec.independent_claim_words();
    v[SC_2] = claims.len() as f64;
    v[SC_3] = rec.dependent_claim_count as f64;
    v[SC_4] = if claims.is_empty() {
        0.0
    } else {
        claims.iter().map(|&c| c as f64).sum::<f64>() / claims.len() as f64
    };
    v[SC_5] = distinct(rec.ipc_codes.iter().map(|c| c.as_str())) as f64;

    // priority
    v[PR_1] = rec.priorities.len() as f64;
    v[PR_2] = distinct(rec.priorities.iter().map(|p| p.country.as_str())) as f64;

    // development effort: assignees then inventors
    for (offset, parties) in [(0, &rec.assignees), (3, &rec.inventors)] {
        v[DEC_1 + offset] = parties.len() as f64;
        v[DEC_1 + offset + 1] = parties.iter().filter(|p| p.country != home).count() as f64;
        v[DEC_1 + offset + 2] = distinct(parties.iter().map(|p| p.country.as_str())) as f64;
    }

    // completeness
    v[CP_1] = (rec.grant_date - rec.filing_date).num_days() as f64;
    v[CP_2] = rec.abstract_words() as f64;

    // technology environment
    let subclasses: BTreeSet<String> = rec.ipc_codes.iter().map(|c| c.subclass()).collect();
    if !subclasses.is_empty() {
        let year = rec.grant_date.year();
        let mut acc = [0.0; 3];
        for sub in &subclasses {
            let m = ctx.stats.environment_means(sub, year);
            for k in 0..3 {
                acc[k] += m[k];
            }
        }
        for k in 0..3 {
            v[TE_1 + k] = acc[k] / subclasses.len() as f64;
        }
    }
    for code in &rec.ipc_codes {
        if let Some(s) = code.section_index() {
            v[TE_4_A + s] += 1.0;
        }
    }
    let mut gaps: Vec<f64> = cites
        .iter()
        .map(|c| years_between(c.filing_date, rec.filing_date))
        .collect();
    let cycle = median(&mut gaps);
    v[TE_5] = cycle.unwrap_or(0.0);

    // prior knowledge
    v[PK_1] = rec.npl_citation_count as f64;
    let cited_subclasses: BTreeSet<String> = cites
        .iter()
        .flat_map(|c| c.ipc_codes.iter().map(|code| code.subclass()))
        .collect();
    if !subclasses.is_empty() && !cites.is_empty() {
        let shared = subclasses.intersection(&cited_subclasses).count();
        v[PK_2] = shared as f64 / subclasses.len() as f64;
    }
    for c in cites {
        for code in &c.ipc_codes {
            if let Some(s) = code.section_index() {
                v[PK_3_A + s] += 1.0;
            }
        }
    }
    v[PK_4] = cites
        .iter()
        .flat_map(|c| c.ipc_codes.iter().map(|code| code.class()))
        .collect::<BTreeSet<_>>()
        .len() as f64;
    v[PK_5] = cites.iter().filter(|c| c.is_in_domain(domain_prefix)).count() as f64;

    if let Some(pre) = &rec.precomputed_history {
        v[PK_6] = pre.inventor_mean_prior;
        v[PK_7] = pre.assignee_mean_prior;
        v[PK_8] = pre.assignee_core_prior;
        v[PK_9] = pre.assignee_peripheral_prior;
    } else {
        let names = |ps: &[crate::corpus::Party]| -> BTreeSet<String> {
            ps.iter().filter_map(|p| p.name.clone()).collect()
        };
        let inventors = names(&rec.inventors);
        if !inventors.is_empty() {
            let total: u32 = inventors
                .iter()
                .map(|n| History::prior(ctx.history.inventors.get(n), rec.grant_date).0)
                .sum();
            v[PK_6] = total as f64 / inventors.len() as f64;
        }
        let assignees = names(&rec.assignees);
        if !assignees.is_empty() {
            let (mut total, mut core) = (0u32, 0u32);
            for n in &assignees {
                let (t, c) = History::prior(ctx.history.assignees.get(n), rec.grant_date);
                total += t;
                core += c;
            }
            v[PK_7] = total as f64 / assignees.len() as f64;
            v[PK_8] = core as f64;
            v[PK_9] = (total - core) as f64;
        }
    }
    v[PK_10] = cites.len() as f64;

    PatentFeatures {
        id: rec.id.clone(),
        vector: FeatureVector(v),
        cycle_time_imputed: cycle.is_none(),
    }
}

/// Writes the feature matrix as CSV with a `patent_id` column followed by
/// the 44 indicator names.
pub fn write_features_csv<W: Write>(mut out: W, rows: &[PatentFeatures]) -> std::io::Result<()> {
    write!(out, "patent_id")?;
    for name in FEATURE_NAMES {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for row in rows {
        write!(out, "{}", row.id)?;
        for v in row.vector.0 {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parses a feature CSV written by [`write_features_csv`].
pub fn read_features_csv(text: &str) -> Result<Vec<(String, FeatureVector)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty feature file")?;
    let expected = std::iter::once("patent_id")
        .chain(FEATURE_NAMES)
        .collect::<Vec<_>>()
        .join(",");
    if header.trim() != expected {
        return Err("feature header does not match the indicator layout".into());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap().to_string();
        let values: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", i + 2))?;
        let v = FeatureVector::from_slice(&values).map_err(|e| format!("line {}: {e}", i + 2))?;
        rows.push((id, v));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerDim {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub degenerate: bool,
}

/// Per-dimension z-scoring fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Standardizer {
    pub dims: Vec<StandardizerDim>,
}

impl Standardizer {
    /// Fits means and population standard deviations over rows of equal
    /// length. Zero-variance dimensions get `std = 1` and are flagged.
    pub fn fit_rows(rows: &[&[f64]], names: &[&str]) -> Result<Standardizer, IndicatorError> {
        if rows.len() < 2 {
            return Err(IndicatorError::TooFewVectors(rows.len()));
        }
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let dims = (0..dim)
            .map(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                let degenerate = !(std > 1e-12);
                StandardizerDim {
                    name: names.get(j).map(|s| s.to_string()).unwrap_or_else(|| format!("x{j}")),
                    mean,
                    std: if degenerate { 1.0 } else { std },
                    degenerate,
                }
            })
            .collect();
        Ok(Standardizer { dims })
    }

    pub fn identity(dim: usize) -> Standardizer {
        Standardizer {
            dims: (0..dim)
                .map(|j| StandardizerDim { name: format!("x{j}"), mean: 0.0, std: 1.0, degenerate: false })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.dims).map(|(v, d)| (v - d.mean) / d.std).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.dims).map(|(v, d)| v * d.std + d.mean).collect()
    }
}

pub fn fit_standardizer(features: &[FeatureVector]) -> Result<Standardizer, IndicatorError> {
    let rows: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
    Standardizer::fit_rows(&rows, &FEATURE_NAMES)
}

pub fn standardize(v: &FeatureVector, s: &Standardizer) -> FeatureVector {
    let mut out = [0.0; N_FEATURES];
    out.copy_from_slice(&s.apply(&v.0));
    FeatureVector(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IpcCode, PatentRecord};
    use proptest::prelude::*;

    #[test]
    fn layout_has_44_unique_names() {
        let set: BTreeSet<_> = FEATURE_NAMES.iter().collect();
        assert_eq!(set.len(), N_FEATURES);
        assert_eq!(FEATURE_NAMES[TE_5], "TE_5");
        assert_eq!(FEATURE_NAMES[PK_2], "PK_2");
        assert_eq!(FEATURE_NAMES[PK_4], "PK_4");
        assert_eq!(FEATURE_NAMES[PK_10], "PK_10");
        assert_eq!(FEATURE_NAMES[TE_4_A + 7], "TE_4_H");
        assert_eq!(FEATURE_NAMES[PK_3_A + 7], "PK_3_H");
    }

    fn rec(id: &str, grant: &str, ipc: &[&str], assignee: &str) -> PatentRecord {
        serde_json::from_value(serde_json::json!({
            "id": id, "filing_date": "2004-01-01", "grant_date": grant,
            "ipc_codes": ipc, "independent_claim_word_counts": [10],
            "assignees": [{"name": assignee, "country": "US"}],
        }))
        .unwrap()
    }

    #[test]
    fn ipc_stats_counts_and_prefix_sums() {
        let corpus = Corpus::from_records(
            vec![
                rec("a", "2006-02-01", &["H01M 4/00"], "X"),
                rec("b", "2006-05-01", &["H01M 2/00", "C08J 5/00"], "Y"),
                rec("c", "2007-05-01", &["H01M 8/00"], "X"),
            ],
            "H01M",
        )
        .unwrap();
        let s = corpus_ipc_stats(&corpus);
        assert_eq!(s.yearly("H01M", 2006), 2);
        assert_eq!(s.yearly("H01M", 2007), 1);
        assert_eq!(s.cumulative("H01M", 2006), 2);
        assert_eq!(s.cumulative("H01M", 2007), 3);
        assert_eq!(s.yearly("C08J", 2006), 1);
        assert_eq!(s.applicants("H01M", 2006), 2);
        assert_eq!(s.yearly("B60L", 2006), 0);
        assert_eq!(s.cumulative("B60L", 2007), 0);
    }

    #[test]
    fn standardizer_basics() {
        let mut a = FeatureVector::zeros();
        let mut b = FeatureVector::zeros();
        a.0[0] = 1.0;
        b.0[0] = 3.0;
        a.0[1] = 5.0;
        b.0[1] = 5.0;
        let s = fit_standardizer(&[a, b]).unwrap();
        assert_eq!(s.dims[0].mean, 2.0);
        assert_eq!(s.dims[0].std, 1.0);
        assert!(!s.dims[0].degenerate);
        assert_eq!(s.dims[1].mean, 5.0);
        assert_eq!(s.dims[1].std, 1.0);
        assert!(s.dims[1].degenerate);
        assert!(matches!(fit_standardizer(&[a]), Err(IndicatorError::TooFewVectors(1))));

        let mean = FeatureVector::from_slice(&s.dims.iter().map(|d| d.mean).collect::<Vec<_>>()).unwrap();
        assert!(standardize(&mean, &s).0.iter().all(|&z| z == 0.0));
        let id = Standardizer::identity(N_FEATURES);
        assert_eq!(standardize(&a, &id), a);
    }

    #[test]
    fn standardizer_json_fields() {
        let s = Standardizer::identity(2);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"[{"name":"x0","mean":0.0,"std":1.0,"degenerate":false},{"name":"x1","mean":0.0,"std":1.0,"degenerate":false}]"#);
    }

    #[test]
    fn features_csv_round_trip() {
        let mut v = FeatureVector::zeros();
        v.0[3] = 0.1 + 0.2;
        v.0[43] = 7.0;
        let rows = vec![PatentFeatures { id: "P1".into(), vector: v, cycle_time_imputed: false }];
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("patent_id,SC_1,SC_2,SC_3,SC_4,SC_5,PR_1"));
        assert!(text.lines().next().unwrap().ends_with("PK_9,PK_10"));
        let back = read_features_csv(&text).unwrap();
        assert_eq!(back, vec![("P1".to_string(), v)]);
    }

    #[test]
    fn unknown_id_is_an_error() {
        let corpus = Corpus::from_records(vec![rec("a", "2006-02-01", &["H01M"], "X")], "H01M").unwrap();
        let ctx = IndicatorContext::new(&corpus);
        assert!(extract_features(&corpus, "zz", &ctx).is_err());
        let _ = IpcCode::new("H01M");
    }

    proptest! {
        #[test]
        fn standardize_then_invert(values in prop::collection::vec(-1e6f64..1e6, 3..20)) {
            let rows: Vec<Vec<f64>> = values.chunks(1).map(|c| vec![c[0], c[0] * 2.0 + 1.0]).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let s = Standardizer::fit_rows(&refs, &["a", "b"]).unwrap();
            let mut mean0 = 0.0;
            for r in &rows {
                let z = s.apply(r);
                mean0 += z[0];
                let back = s.invert(&z);
                for (x, y) in r.iter().zip(&back) {
                    prop_assert!((x - y).abs() <= 4e-12 * (x.abs() + s.dims.iter().map(|d| d.mean.abs()).fold(1.0, f64::max)));
                }
            }
            prop_assert!((mean0 / rows.len() as f64).abs() < 1e-9);
        }
    }
}
