//! Seeded synthetic corpora with preferential-attachment citation growth.
//!
//! Every patent carries a latent quality score. Quality raises the number of
//! non-patent citations, the IPC breadth and the international priority range,
//! and (scaled by `feature_signal_strength`) the propensity to be cited, so
//! the indicators carry learnable signal about future citations. Post-grant
//! value indicators follow the same latent quality.

use super::{Corpus, CorpusError, IpcCode, Party, PatentRecord, PostHoc, Priority, CitedRef};
use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_patents: usize,
    /// Inclusive range of grant years.
    pub year_range: (i32, i32),
    pub seed: u64,
    /// Exponent on `(in_degree + 1)` in the attachment weight; 0 disables
    /// preferential attachment.
    pub citation_attachment_exponent: f64,
    /// Strength of the latent-quality effect on citation propensity.
    pub feature_signal_strength: f64,
    /// Exponential decay of attachment weight per year of age.
    pub recency_decay: f64,
    /// Mean number of in-corpus backward citations per patent.
    pub mean_corpus_citations: f64,
    /// Mean number of out-of-corpus backward citations per patent.
    pub mean_external_citations: f64,
    pub domain_ipc_prefix: String,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_patents: 2000,
            year_range: (2006, 2022),
            seed: 7,
            citation_attachment_exponent: 0.5,
            feature_signal_strength: 1.0,
            recency_decay: 0.5,
            mean_corpus_citations: 5.0,
            mean_external_citations: 3.0,
            domain_ipc_prefix: super::DEFAULT_DOMAIN_PREFIX.to_string(),
        }
    }
}

impl SynthParams {
    fn check(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidParams(m.to_string()));
        if self.n_patents < 10 {
            return bad("n_patents must be at least 10");
        }
        if self.year_range.0 > self.year_range.1 {
            return bad("year_range start after end");
        }
        for (name, v) in [
            ("citation_attachment_exponent", self.citation_attachment_exponent),
            ("feature_signal_strength", self.feature_signal_strength),
            ("recency_decay", self.recency_decay),
            ("mean_corpus_citations", self.mean_corpus_citations),
            ("mean_external_citations", self.mean_external_citations),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if self.domain_ipc_prefix.is_empty() {
            return bad("empty domain prefix");
        }
        Ok(())
    }
}

const OTHER_SUBCLASSES: &[&str] = &[
    "H01G", "H01L", "H02J", "H01B", "B60L", "B32B", "C01B", "C01G", "C08J", "C08L", "C22C",
    "C25B", "G01R", "G06F", "F28F", "F16J", "A61N", "E04H", "D21H", "B82Y",
];
const FOREIGN: &[&str] = &["JP", "KR", "DE", "CN", "FR", "TW", "GB"];
const TOPICS: &[&str] = &[
    "lithium ion cathodes",
    "solid electrolytes",
    "anode materials",
    "fuel cell stacks",
    "separators",
    "battery management",
    "energy storage devices",
    "fuel cell catalysts",
];

fn country(rng: &mut ChaCha8Rng, p_home: f64) -> String {
    if rng.gen_bool(p_home) {
        "US".to_string()
    } else {
        FOREIGN.choose(rng).unwrap().to_string()
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as u32
}

fn domain_code(rng: &mut ChaCha8Rng, prefix: &str) -> IpcCode {
    IpcCode::new(format!("{prefix} {}/{:02}", rng.gen_range(2..16), rng.gen_range(0..60)))
}

struct Draft {
    grant: NaiveDate,
    filing: NaiveDate,
    quality: f64,
    ipc_codes: Vec<IpcCode>,
    domain: bool,
}

/// Generates a deterministic corpus for the given parameters.
pub fn generate_synthetic(params: &SynthParams) -> Result<Corpus, CorpusError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n_patents;
    let (y0, y1) = params.year_range;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let beta = params.feature_signal_strength;

    let mut grants: Vec<NaiveDate> = (0..n)
        .map(|_| {
            let year = rng.gen_range(y0..=y1);
            NaiveDate::from_ymd_opt(year, 1, 1).unwrap() + Duration::days(rng.gen_range(0..365))
        })
        .collect();
    grants.sort();

    let drafts: Vec<Draft> = grants
        .into_iter()
        .map(|grant| {
            let quality: f64 = std_normal.sample(&mut rng);
            let filing = grant - Duration::days(rng.gen_range(400..1500));
            let domain = rng.gen_bool(0.9);
            let mut ipc_codes = vec![if domain {
                domain_code(&mut rng, &params.domain_ipc_prefix)
            } else {
                IpcCode::new(format!("{} 1/00", OTHER_SUBCLASSES.choose(&mut rng).unwrap()))
            }];
            let extra = poisson(&mut rng, (0.6 * quality).exp() * 0.8);
            for _ in 0..extra.min(6) {
                let sub = OTHER_SUBCLASSES.choose(&mut rng).unwrap();
                ipc_codes.push(IpcCode::new(format!("{sub} {}/{:02}", rng.gen_range(1..9), rng.gen_range(0..40))));
            }
            ipc_codes.sort();
            ipc_codes.dedup();
            Draft { grant, filing, quality, ipc_codes, domain }
        })
        .collect();

    let assignee_pool: Vec<Party> = (0..80)
        .map(|i| Party { name: Some(format!("Assignee {i:03}")), country: country(&mut rng, 0.55) })
        .collect();
    let inventor_pool: Vec<Party> = (0..400)
        .map(|i| Party { name: Some(format!("Inventor {i:04}")), country: country(&mut rng, 0.5) })
        .collect();

    let alpha = params.citation_attachment_exponent;
    let mut in_degree = vec![0u32; n];
    let mut records = Vec::with_capacity(n);
    let width = n.to_string().len().max(6);
    let id_of = |i: usize| format!("SYN{i:0width$}");

    for i in 0..n {
        let d = &drafts[i];
        let q = d.quality;
        let candidates: Vec<usize> = (0..i).filter(|&j| drafts[j].grant < d.grant).collect();
        let mut weights: Vec<f64> = candidates
            .iter()
            .map(|&j| {
                let age = (d.grant - drafts[j].grant).num_days() as f64 / 365.25;
                (in_degree[j] as f64 + 1.0).powf(alpha)
                    * (beta * drafts[j].quality).exp()
                    * (-params.recency_decay * age).exp()
            })
            .collect();
        let m = (poisson(&mut rng, params.mean_corpus_citations) as usize).min(candidates.len());
        let mut cited = Vec::with_capacity(m);
        for _ in 0..m {
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut r = rng.gen::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = k;
                    break;
                }
                r -= w;
            }
            weights[pick] = 0.0;
            cited.push(candidates[pick]);
        }
        cited.sort_unstable();

        let mut backward: Vec<CitedRef> = cited
            .iter()
            .map(|&j| {
                in_degree[j] += 1;
                CitedRef {
                    cited_id: Some(id_of(j)),
                    country: "US".to_string(),
                    filing_date: drafts[j].filing,
                    ipc_codes: drafts[j].ipc_codes.clone(),
                    in_domain: Some(drafts[j].domain),
                }
            })
            .collect();
        for _ in 0..poisson(&mut rng, params.mean_external_citations) {
            let gap_years = rng.gen_range(1.0..8.0) + (0.8 * q).max(-0.5) * 2.0;
            let in_domain = rng.gen_bool(0.6);
            let mut codes = vec![if in_domain {
                domain_code(&mut rng, &params.domain_ipc_prefix)
            } else {
                IpcCode::new(format!("{} 1/00", OTHER_SUBCLASSES.choose(&mut rng).unwrap()))
            }];
            if rng.gen_bool((0.3 + 0.15 * q).clamp(0.05, 0.9)) {
                codes.push(IpcCode::new(format!("{} 3/00", OTHER_SUBCLASSES.choose(&mut rng).unwrap())));
            }
            backward.push(CitedRef {
                cited_id: None,
                country: country(&mut rng, 0.6),
                filing_date: d.filing - Duration::days((gap_years.max(0.2) * 365.25) as i64),
                ipc_codes: codes,
                in_domain: Some(in_domain),
            });
        }

        let n_indep = 1 + poisson(&mut rng, 1.5);
        let independent_claim_word_counts =
            (0..n_indep).map(|_| rng.gen_range(40..220)).collect();
        let n_assignees = 1 + usize::from(rng.gen_bool(0.15));
        let assignees = assignee_pool.choose_multiple(&mut rng, n_assignees).cloned().collect();
        let n_inventors = 1 + poisson(&mut rng, 2.0).min(8) as usize;
        let inventors = inventor_pool.choose_multiple(&mut rng, n_inventors).cloned().collect();
        let n_prio = poisson(&mut rng, (0.5 * q).exp() * 0.9).min(5);
        let priorities = (0..n_prio)
            .map(|_| Priority {
                country: country(&mut rng, 0.5),
                date: d.filing - Duration::days(rng.gen_range(0..365)),
            })
            .collect();

        let post_hoc = PostHoc {
            maintenance_years: (8.0 + 3.0 * q + 2.5 * std_normal.sample(&mut rng)).clamp(0.0, 20.0),
            transfer_count: poisson(&mut rng, (0.6 * q - 0.5).exp()),
            family_size: 1 + poisson(&mut rng, (0.5 * q + 0.7).exp()),
        };
        let topic = TOPICS[((q + 3.0).max(0.0) as usize + rng.gen_range(0..TOPICS.len())) % TOPICS.len()];

        records.push(PatentRecord {
            id: id_of(i),
            filing_date: d.filing,
            grant_date: d.grant,
            ipc_codes: d.ipc_codes.clone(),
            independent_claim_word_counts,
            independent_claims_text: None,
            dependent_claim_count: poisson(&mut rng, 12.0),
            abstract_word_count: rng.gen_range(60..220),
            abstract_text: None,
            assignees,
            inventors,
            priorities,
            backward_citations: backward,
            npl_citation_count: poisson(&mut rng, (0.3 + 0.8 * q).exp()),
            post_hoc: Some(post_hoc),
            precomputed_history: None,
            topic_label: Some(topic.to_string()),
        });
    }
    Corpus::from_records(records, &params.domain_ipc_prefix)
}
