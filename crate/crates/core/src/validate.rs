//! Post-hoc checks of predicted impact classes: the Jonckheere–Terpstra
//! ordered-alternative test over patent value indicators, and topic-year
//! impact scores.

use crate::corpus::{Corpus, Horizon, ImpactClass};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("null variance is zero (all observations tied); use the permutation method")]
    ZeroVariance,
    #[error("n_permutations must be at least 1")]
    NoPermutations,
    #[error("{indicator}: {class} group is empty after excluding {n_excluded} patents without post-hoc values")]
    EmptyClassGroup { indicator: &'static str, class: ImpactClass, n_excluded: usize },
    #[error("unknown patent id {0}")]
    UnknownId(String),
    #[error("no classified patents carry a topic label")]
    NoLabeledPatents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JtMethod {
    #[default]
    NormalApprox,
    Permutation,
}

impl JtMethod {
    pub fn name(self) -> &'static str {
        match self {
            JtMethod::NormalApprox => "normal_approx",
            JtMethod::Permutation => "permutation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JtResult {
    pub jt_statistic: f64,
    pub mean_h0: f64,
    pub variance_h0: f64,
    /// 0 when the null variance is zero.
    pub z: f64,
    pub p_value: f64,
    /// Always `increasing`: groups are expected to rise in order.
    pub alternative: String,
    pub method: JtMethod,
    pub n_permutations: Option<usize>,
}

/// Sum over ordered group pairs `i < j` of the Mann–Whitney counts of
/// `a < b` (`a` from group `i`, `b` from group `j`), ties counting 1/2.
pub fn jt_statistic(groups: &[Vec<f64>]) -> f64 {
    let sorted: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut s = g.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    let mut twice = 0u64;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            for &b in &groups[j] {
                let below = sorted[i].partition_point(|&a| a < b);
                let upto = sorted[i].partition_point(|&a| a <= b);
                twice += (2 * below + (upto - below)) as u64;
            }
        }
    }
    twice as f64 / 2.0
}

/// Null mean and tie-corrected null variance of the statistic.
pub fn jt_null_moments(groups: &[Vec<f64>]) -> (f64, f64) {
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let n: f64 = sizes.iter().sum();
    let mut pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let j = pooled[i..].iter().take_while(|&&v| v == pooled[i]).count();
        ties.push(j as f64);
        i += j;
    }
    let mean = (n * n - sizes.iter().map(|s| s * s).sum::<f64>()) / 4.0;
    let f = |x: f64| x * (x - 1.0) * (2.0 * x + 5.0);
    let s2 = |v: &[f64]| v.iter().map(|x| x * (x - 1.0)).sum::<f64>();
    let s3 = |v: &[f64]| v.iter().map(|x| x * (x - 1.0) * (x - 2.0)).sum::<f64>();
    let mut var = (f(n) - sizes.iter().map(|&s| f(s)).sum::<f64>() - ties.iter().map(|&t| f(t)).sum::<f64>()) / 72.0;
    if n > 2.0 {
        var += s3(&sizes) * s3(&ties) / (36.0 * n * (n - 1.0) * (n - 2.0));
    }
    if n > 1.0 {
        var += s2(&sizes) * s2(&ties) / (8.0 * n * (n - 1.0));
    }
    (mean, var)
}

/// One-sided test for increasing location across the ordered groups.
///
/// The permutation p-value is `(1 + #{JT_perm >= JT_obs}) / (1 + n)`;
/// replicate `r` shuffles with stream `r` of a generator seeded by `seed`,
/// so the result does not depend on the number of worker threads.
pub fn jonckheere_terpstra(
    groups: &[Vec<f64>],
    method: JtMethod,
    seed: u64,
    n_permutations: usize,
) -> Result<JtResult, ValidateError> {
    if groups.len() < 2 {
        return Err(ValidateError::TooFewGroups(groups.len()));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(ValidateError::EmptyGroup(i));
    }
    let jt = jt_statistic(groups);
    let (mean, var) = jt_null_moments(groups);
    let z = if var > 0.0 { (jt - mean) / var.sqrt() } else { 0.0 };
    let (p_value, n_perm) = match method {
        JtMethod::NormalApprox => {
            if var <= 0.0 {
                return Err(ValidateError::ZeroVariance);
            }
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (normal.sf(z), None)
        }
        JtMethod::Permutation => {
            if n_permutations == 0 {
                return Err(ValidateError::NoPermutations);
            }
            let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            let hits: usize = (0..n_permutations as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(r);
                    let mut v = pooled.clone();
                    v.shuffle(&mut rng);
                    let mut perm = Vec::with_capacity(sizes.len());
                    let mut start = 0;
                    for &s in &sizes {
                        perm.push(v[start..start + s].to_vec());
                        start += s;
                    }
                    usize::from(jt_statistic(&perm) >= jt)
                })
                .sum();
            ((1 + hits) as f64 / (1 + n_permutations) as f64, Some(n_permutations))
        }
    };
    Ok(JtResult {
        jt_statistic: jt,
        mean_h0: mean,
        variance_h0: var,
        z,
        p_value: p_value.clamp(0.0, 1.0),
        alternative: "increasing".into(),
        method,
        n_permutations: n_perm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueIndicator {
    MaintenanceYears,
    TransferCount,
    FamilySize,
}

impl ValueIndicator {
    pub const ALL: [ValueIndicator; 3] =
        [ValueIndicator::MaintenanceYears, ValueIndicator::TransferCount, ValueIndicator::FamilySize];

    pub fn name(self) -> &'static str {
        match self {
            ValueIndicator::MaintenanceYears => "maintenance_years",
            ValueIndicator::TransferCount => "transfer_count",
            ValueIndicator::FamilySize => "family_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTest {
    pub horizon: Horizon,
    pub indicator: ValueIndicator,
    pub result: JtResult,
    pub group_sizes: [usize; 3],
    /// Median per group, MT, VT, BT.
    pub group_medians: [f64; 3],
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JtSettings {
    pub method: JtMethod,
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for JtSettings {
    fn default() -> Self {
        JtSettings { method: JtMethod::NormalApprox, n_permutations: DEFAULT_PERMUTATIONS, seed: 0 }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// JT test of each value indicator across the classes given for `horizon`.
/// Patents without post-hoc values are left out and counted.
pub fn validate_value_indicators(
    corpus: &Corpus,
    classes: &BTreeMap<String, ImpactClass>,
    horizon: Horizon,
    settings: &JtSettings,
) -> Result<Vec<IndicatorTest>, ValidateError> {
    let mut out = Vec::new();
    for indicator in ValueIndicator::ALL {
        let mut groups: [Vec<f64>; 3] = Default::default();
        let mut excluded = 0;
        for (id, class) in classes {
            let rec = corpus.get(id).ok_or_else(|| ValidateError::UnknownId(id.clone()))?;
            let value = rec.post_hoc.as_ref().map(|p| match indicator {
                ValueIndicator::MaintenanceYears => p.maintenance_years,
                ValueIndicator::TransferCount => p.transfer_count as f64,
                ValueIndicator::FamilySize => p.family_size as f64,
            });
            match value {
                Some(v) if v.is_finite() => groups[class.index()].push(v),
                _ => excluded += 1,
            }
        }
        if let Some(c) = groups.iter().position(Vec::is_empty) {
            return Err(ValidateError::EmptyClassGroup {
                indicator: indicator.name(),
                class: ImpactClass::ALL[c],
                n_excluded: excluded,
            });
        }
        if excluded > 0 {
            log::info!("{}: excluded {excluded} patents without post-hoc values", indicator.name());
        }
        let result = jonckheere_terpstra(&groups, settings.method, settings.seed, settings.n_permutations)?;
        out.push(IndicatorTest {
            horizon,
            indicator,
            group_sizes: [groups[0].len(), groups[1].len(), groups[2].len()],
            group_medians: [median(&groups[0]), median(&groups[1]), median(&groups[2])],
            result,
            n_excluded: excluded,
        });
    }
    Ok(out)
}

pub fn write_validation_csv<W: Write>(mut out: W, tests: &[IndicatorTest]) -> std::io::Result<()> {
    writeln!(out, "horizon,indicator,jt_statistic,z,p_value,method,n_excluded")?;
    for t in tests {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.horizon.name(),
            t.indicator.name(),
            t.result.jt_statistic,
            t.result.z,
            t.result.p_value,
            t.result.method.name(),
            t.n_excluded
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub bt: f64,
    pub vt: f64,
    pub mt: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights { bt: 10.0, vt: 5.0, mt: 1.0 }
    }
}

impl ClassWeights {
    pub fn get(&self, c: ImpactClass) -> f64 {
        match c {
            ImpactClass::BT => self.bt,
            ImpactClass::VT => self.vt,
            ImpactClass::MT => self.mt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCell {
    pub topic: String,
    pub year: i32,
    pub n_patents: usize,
    pub score: f64,
}

/// Cells sorted by (topic, year); empty cells are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopicScoreTable {
    pub cells: Vec<TopicCell>,
}

impl TopicScoreTable {
    pub fn get(&self, topic: &str, year: i32) -> Option<&TopicCell> {
        self.cells.iter().find(|c| c.topic == topic && c.year == year)
    }

    /// `{topic: {year: score}}`.
    pub fn pivot_json(&self) -> serde_json::Value {
        let mut m: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
        for c in &self.cells {
            m.entry(&c.topic).or_default().insert(c.year.to_string(), c.score);
        }
        serde_json::to_value(m).expect("pivot serializes")
    }
}

/// Mean class weight of the patents of each topic granted in each year.
pub fn topic_impact_scores(
    corpus: &Corpus,
    classes: &BTreeMap<String, ImpactClass>,
    weights: &ClassWeights,
) -> Result<TopicScoreTable, ValidateError> {
    let mut acc: BTreeMap<(String, i32), (usize, f64)> = BTreeMap::new();
    for (id, class) in classes {
        let rec = corpus.get(id).ok_or_else(|| ValidateError::UnknownId(id.clone()))?;
        if let Some(topic) = &rec.topic_label {
            let e = acc.entry((topic.clone(), rec.grant_year())).or_default();
            e.0 += 1;
            e.1 += weights.get(*class);
        }
    }
    if acc.is_empty() {
        return Err(ValidateError::NoLabeledPatents);
    }
    let cells = acc
        .into_iter()
        .map(|((topic, year), (n, sum))| TopicCell { topic, year, n_patents: n, score: sum / n as f64 })
        .collect();
    Ok(TopicScoreTable { cells })
}

pub fn write_topic_csv<W: Write>(mut out: W, table: &TopicScoreTable) -> std::io::Result<()> {
    writeln!(out, "topic,year,n_patents,score")?;
    for c in &table.cells {
        let topic = if c.topic.contains([',', '"']) { format!("\"{}\"", c.topic.replace('"', "\"\"")) } else { c.topic.clone() };
        writeln!(out, "{},{},{},{}", topic, c.year, c.n_patents, c.score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pair_count(groups: &[Vec<f64>]) -> f64 {
        let mut s = 0.0;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                for a in &groups[i] {
                    for b in &groups[j] {
                        s += if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                    }
                }
            }
        }
        s
    }

    #[test]
    fn hand_case() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]];
        assert_eq!(jt_statistic(&g), 22.5);
        assert_eq!(jt_statistic(&g[..2]), 7.0);
        assert_eq!(jt_statistic(&[g[0].clone(), g[2].clone()]), 8.5);
    }

    #[test]
    fn all_ties_and_perfect_order() {
        let tied = vec![vec![2.0; 3], vec![2.0; 4], vec![2.0; 2]];
        assert_eq!(jt_statistic(&tied), (12 + 6 + 8) as f64 / 2.0);
        let r = jonckheere_terpstra(&tied, JtMethod::Permutation, 1, 200).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(matches!(jonckheere_terpstra(&tied, JtMethod::NormalApprox, 1, 0), Err(ValidateError::ZeroVariance)));

        let ordered = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(jt_statistic(&ordered), 12.0);
        let r = jonckheere_terpstra(&ordered, JtMethod::Permutation, 1, 999).unwrap();
        // 6!/(2!2!2!) = 90 equally likely splits, one of them maximal
        assert!(r.p_value < 0.03, "{r:?}");
    }

    #[test]
    fn errors() {
        assert!(matches!(jonckheere_terpstra(&[vec![1.0]], JtMethod::NormalApprox, 0, 0), Err(ValidateError::TooFewGroups(1))));
        assert!(matches!(
            jonckheere_terpstra(&[vec![1.0], vec![]], JtMethod::NormalApprox, 0, 0),
            Err(ValidateError::EmptyGroup(1))
        ));
    }

    #[test]
    fn untied_variance_matches_classic_formula() {
        let g = vec![vec![1.0, 5.0, 9.0], vec![2.0, 6.0], vec![3.0, 4.0, 7.0, 8.0]];
        let (mean, var) = jt_null_moments(&g);
        let (n, ns) = (9.0f64, [3.0f64, 2.0, 4.0]);
        assert!((mean - (n * n - ns.iter().map(|x| x * x).sum::<f64>()) / 4.0).abs() < 1e-12);
        let f = |x: f64| x * x * (2.0 * x + 3.0);
        assert!((var - (f(n) - ns.iter().map(|&x| f(x)).sum::<f64>()) / 72.0).abs() < 1e-9);
    }

    #[test]
    fn permutation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<Vec<f64>> = (0..3).map(|_| (0..10).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let a = jonckheere_terpstra(&g, JtMethod::Permutation, 5, 500).unwrap();
        let b = jonckheere_terpstra(&g, JtMethod::Permutation, 5, 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn topic_weights_are_bounded() {
        let w = ClassWeights::default();
        assert_eq!(w.get(ImpactClass::BT), 10.0);
        assert_eq!((w.get(ImpactClass::BT) + w.get(ImpactClass::MT)) / 2.0, 5.5);
    }

    proptest::proptest! {
        #[test]
        fn statistic_matches_pair_enumeration(
            groups in proptest::collection::vec(proptest::collection::vec(0u8..8, 1..20), 2..5)
        ) {
            let g: Vec<Vec<f64>> = groups.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
            proptest::prop_assert_eq!(jt_statistic(&g), pair_count(&g));
            let total: usize = (0..g.len()).flat_map(|i| (i + 1..g.len()).map(move |j| (i, j))).map(|(i, j)| g[i].len() * g[j].len()).sum();
            let rev: Vec<Vec<f64>> = g.iter().rev().cloned().collect();
            proptest::prop_assert_eq!(jt_statistic(&rev), total as f64 - jt_statistic(&g));
            let exp: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| (x * 0.7).exp()).collect()).collect();
            proptest::prop_assert_eq!(jt_statistic(&exp), jt_statistic(&g));
        }
    }
}
