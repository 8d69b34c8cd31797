//! Impact-class thresholds and trajectory patterns.

use super::{Corpus, CorpusError, Horizon, ImpactClass};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest admissible breakthrough share in stanine mode (grade 1).
pub const BT_SHARE_MAX: f64 = 0.045;
/// Largest admissible breakthrough-or-valuable share (grades 1-3).
pub const BT_VT_SHARE_MAX: f64 = 0.23;

/// Citation-count cut points for one horizon: BT if `count >= bt_min`, VT if
/// `vt_min <= count < bt_min`, MT otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonThresholds {
    pub bt_min: u32,
    pub vt_min: u32,
}

impl HorizonThresholds {
    pub fn new(bt_min: u32, vt_min: u32) -> Option<Self> {
        (0 < vt_min && vt_min < bt_min).then_some(HorizonThresholds { bt_min, vt_min })
    }

    pub fn classify(&self, count: u32) -> ImpactClass {
        if count >= self.bt_min {
            ImpactClass::BT
        } else if count >= self.vt_min {
            ImpactClass::VT
        } else {
            ImpactClass::MT
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub short: HorizonThresholds,
    pub mid: HorizonThresholds,
    pub long: HorizonThresholds,
}

impl ClassThresholds {
    /// The published cut points for the H01M case study.
    pub fn published() -> Self {
        ClassThresholds {
            short: HorizonThresholds { bt_min: 4, vt_min: 2 },
            mid: HorizonThresholds { bt_min: 9, vt_min: 3 },
            long: HorizonThresholds { bt_min: 24, vt_min: 6 },
        }
    }

    pub fn get(&self, horizon: Horizon) -> HorizonThresholds {
        match horizon {
            Horizon::Short => self.short,
            Horizon::Mid => self.mid,
            Horizon::Long => self.long,
        }
    }

    pub fn set(&mut self, horizon: Horizon, t: HorizonThresholds) {
        match horizon {
            Horizon::Short => self.short = t,
            Horizon::Mid => self.mid = t,
            Horizon::Long => self.long = t,
        }
    }
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self::published()
    }
}

pub fn assign_impact_class(
    count: u32,
    thresholds: &ClassThresholds,
    horizon: Horizon,
) -> ImpactClass {
    thresholds.get(horizon).classify(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Fixed,
    Stanine,
}

/// Stanine-style cut points from a sample of citation counts: the smallest
/// `bt_min` whose tail share is at most 4.5% and the smallest `vt_min` whose
/// tail share is at most 23%.
pub fn stanine_thresholds(
    horizon: Horizon,
    counts: &[u32],
) -> Result<HorizonThresholds, CorpusError> {
    if counts.is_empty() {
        return Err(CorpusError::NoEligiblePatents(horizon));
    }
    let n = counts.len() as f64;
    let max = *counts.iter().max().unwrap();
    let tail_share = |t: u32| counts.iter().filter(|&&c| c >= t).count() as f64 / n;
    let smallest = |limit: f64| (1..=max + 1).find(|&t| tail_share(t) <= limit).unwrap();
    let bt_min = smallest(BT_SHARE_MAX);
    let vt_min = smallest(BT_VT_SHARE_MAX);
    HorizonThresholds::new(bt_min, vt_min).ok_or_else(|| CorpusError::DegenerateThresholds {
        horizon,
        reason: format!(
            "no valuable band separates classes (bt_min={bt_min}, vt_min={vt_min}, max count={max})"
        ),
    })
}

/// Thresholds for one horizon. Stanine mode uses every patent whose full
/// citation window lies inside the corpus observation period.
pub fn derive_thresholds(
    corpus: &Corpus,
    horizon: Horizon,
    mode: ThresholdMode,
) -> Result<HorizonThresholds, CorpusError> {
    match mode {
        ThresholdMode::Fixed => Ok(ClassThresholds::published().get(horizon)),
        ThresholdMode::Stanine => {
            let end = corpus
                .observation_end()
                .ok_or(CorpusError::NoEligiblePatents(horizon))?;
            let mut counts = Vec::new();
            for id in corpus.ids() {
                if corpus.window_complete(id, horizon, end)? {
                    counts.push(corpus.forward_citation_count(id, horizon)?);
                }
            }
            stanine_thresholds(horizon, &counts)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryPattern {
    Sustained,
    PeakAndFade,
    LateBlooming,
    Other,
}

impl TrajectoryPattern {
    pub const ALL: [TrajectoryPattern; 4] = [
        TrajectoryPattern::Sustained,
        TrajectoryPattern::PeakAndFade,
        TrajectoryPattern::LateBlooming,
        TrajectoryPattern::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryPattern::Sustained => "sustained",
            TrajectoryPattern::PeakAndFade => "peak_and_fade",
            TrajectoryPattern::LateBlooming => "late_blooming",
            TrajectoryPattern::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s.trim())
    }
}

impl fmt::Display for TrajectoryPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Classifies a (short, mid, long) class triple.
pub fn trajectory_pattern(
    short: ImpactClass,
    mid: ImpactClass,
    long: ImpactClass,
) -> TrajectoryPattern {
    use ImpactClass::*;
    if short == BT && mid == BT && long == BT {
        TrajectoryPattern::Sustained
    } else if short > long && mid <= short {
        TrajectoryPattern::PeakAndFade
    } else if short < long && short == MT {
        TrajectoryPattern::LateBlooming
    } else {
        TrajectoryPattern::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ImpactClass::*;

    #[test]
    fn published_boundaries() {
        let t = ClassThresholds::published();
        assert_eq!(assign_impact_class(4, &t, Horizon::Short), BT);
        assert_eq!(assign_impact_class(3, &t, Horizon::Short), VT);
        assert_eq!(assign_impact_class(1, &t, Horizon::Short), MT);
        assert_eq!(assign_impact_class(8, &t, Horizon::Mid), VT);
        assert_eq!(assign_impact_class(9, &t, Horizon::Mid), BT);
        assert_eq!(assign_impact_class(24, &t, Horizon::Long), BT);
        assert_eq!(assign_impact_class(5, &t, Horizon::Long), MT);
        for h in Horizon::ALL {
            assert_eq!(assign_impact_class(0, &t, h), MT);
        }
    }

    #[test]
    fn thresholds_json_shape() {
        let json = serde_json::to_string(&ClassThresholds::published()).unwrap();
        assert_eq!(
            json,
            r#"{"short":{"bt_min":4,"vt_min":2},"mid":{"bt_min":9,"vt_min":3},"long":{"bt_min":24,"vt_min":6}}"#
        );
    }

    #[test]
    fn all_zero_counts_are_degenerate() {
        let err = stanine_thresholds(Horizon::Short, &[0; 50]).unwrap_err();
        assert!(matches!(err, CorpusError::DegenerateThresholds { .. }));
    }

    #[test]
    fn stanine_small_sample() {
        // 100 patents: 70 zeros, 15 ones, 10 twos, 3 fives, 2 tens.
        let mut counts = vec![0u32; 70];
        counts.extend([1; 15]);
        counts.extend([2; 10]);
        counts.extend([5; 3]);
        counts.extend([10; 2]);
        // tail(>=3)=5%, tail(>=6)=2% -> bt_min 6; tail(>=1)=30%, tail(>=2)=15% -> vt_min 2
        let t = stanine_thresholds(Horizon::Mid, &counts).unwrap();
        assert_eq!(t, HorizonThresholds { bt_min: 6, vt_min: 2 });
    }

    #[test]
    fn trajectory_examples() {
        assert_eq!(trajectory_pattern(BT, BT, BT), TrajectoryPattern::Sustained);
        assert_eq!(trajectory_pattern(BT, VT, MT), TrajectoryPattern::PeakAndFade);
        assert_eq!(trajectory_pattern(MT, MT, MT), TrajectoryPattern::Other);
        assert_eq!(trajectory_pattern(MT, VT, BT), TrajectoryPattern::LateBlooming);
        assert_eq!(trajectory_pattern(VT, VT, BT), TrajectoryPattern::Other);
    }

    #[test]
    fn trajectory_total_over_all_triples() {
        let mut tally = std::collections::HashMap::new();
        for s in ImpactClass::ALL {
            for m in ImpactClass::ALL {
                for l in ImpactClass::ALL {
                    let p = trajectory_pattern(s, m, l);
                    assert_eq!(p, trajectory_pattern(s, m, l));
                    *tally.entry(p).or_insert(0) += 1;
                }
            }
        }
        assert_eq!(tally.values().sum::<i32>(), 27);
        assert_eq!(tally[&TrajectoryPattern::Sustained], 1);
    }

    proptest! {
        #[test]
        fn class_is_monotone_in_count(a in 0u32..200, b in 0u32..200, h in 0usize..3) {
            let t = ClassThresholds::published();
            let h = Horizon::ALL[h];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(assign_impact_class(lo, &t, h) <= assign_impact_class(hi, &t, h));
        }

        #[test]
        fn stanine_shares_respect_bands(counts in prop::collection::vec(0u32..60, 20..400)) {
            if let Ok(t) = stanine_thresholds(Horizon::Long, &counts) {
                let n = counts.len() as f64;
                let bt = counts.iter().filter(|&&c| c >= t.bt_min).count() as f64 / n;
                let top = counts.iter().filter(|&&c| c >= t.vt_min).count() as f64 / n;
                prop_assert!(bt <= BT_SHARE_MAX);
                prop_assert!(top <= BT_VT_SHARE_MAX);
                prop_assert!(t.vt_min < t.bt_min);
            }
        }
    }
}
