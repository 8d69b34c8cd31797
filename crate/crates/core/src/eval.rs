//! Confusion matrices, one-vs-rest metrics, stratified folds and model
//! comparison tables.

use crate::corpus::{Horizon, ImpactClass};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no (actual, predicted) pairs given")]
    EmptyInput,
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("cannot build {k} folds from {n} instances")]
    TooFewForFolds { n: usize, k: usize },
    #[error("horizon sets differ: {0}")]
    MismatchedHorizons(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// `counts[actual][predicted]`, classes ordered MT, VT, BT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
}

/// One-vs-rest reduction of a confusion matrix for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneVsRest {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix3 {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix3 { counts }
    }

    pub fn add(&mut self, actual: ImpactClass, predicted: ImpactClass) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn one_vs_rest(&self, class: ImpactClass) -> OneVsRest {
        let i = class.index();
        let tp = self.counts[i][i];
        let fn_ = self.counts[i].iter().sum::<u64>() - tp;
        let fp = (0..3).map(|a| self.counts[a][i]).sum::<u64>() - tp;
        OneVsRest { tp, fp, fn_, tn: self.n() - tp - fp - fn_ }
    }

    pub fn transposed(&self) -> Self {
        let mut t = [[0; 3]; 3];
        for (a, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                t[p][a] = c;
            }
        }
        ConfusionMatrix3 { counts: t }
    }
}

pub fn confusion_matrix(pairs: &[(ImpactClass, ImpactClass)]) -> Result<ConfusionMatrix3, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix3::default();
    for &(a, p) in pairs {
        cm.add(a, p);
    }
    Ok(cm)
}

/// Diagnostic odds ratio with its degenerate cases kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Dor {
    Finite(f64),
    /// FP·FN = 0 while TP·TN > 0.
    Infinite,
    /// Both products are zero.
    Undefined,
}

impl Dor {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Dor::Finite(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Dor::Finite(v) => *v,
            Dor::Infinite => f64::INFINITY,
            Dor::Undefined => f64::NAN,
        }
    }
}

/// Which values fell back to a degenerate-denominator convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricFlags {
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub mcc_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    pub dor: Dor,
    pub flags: MetricFlags,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn diagnostic_odds_ratio(c: OneVsRest, haldane: bool) -> Dor {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    if haldane {
        return Dor::Finite(((tp + 0.5) * (tn + 0.5)) / ((fp + 0.5) * (fn_ + 0.5)));
    }
    let (num, den) = (tp * tn, fp * fn_);
    match (num > 0.0, den > 0.0) {
        (_, true) => Dor::Finite(num / den),
        (true, false) => Dor::Infinite,
        (false, false) => Dor::Undefined,
    }
}

pub fn metrics_from_counts(c: OneVsRest, haldane: bool) -> ClassMetrics {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let n = tp + fp + fn_ + tn;
    let (precision, p_undef) = ratio(tp, tp + fp);
    let (recall, r_undef) = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let (mcc, m_undef) = ratio(tp * tn - fp * fn_, den);
    ClassMetrics {
        accuracy: if n == 0.0 { 0.0 } else { (tp + tn) / n },
        precision,
        recall,
        f1,
        mcc,
        dor: diagnostic_odds_ratio(c, haldane),
        flags: MetricFlags { precision_undefined: p_undef, recall_undefined: r_undef, mcc_undefined: m_undef },
    }
}

pub fn class_metrics(cm: &ConfusionMatrix3, class: ImpactClass) -> ClassMetrics {
    metrics_from_counts(cm.one_vs_rest(class), false)
}

pub fn class_metrics_haldane(cm: &ConfusionMatrix3, class: ImpactClass) -> ClassMetrics {
    metrics_from_counts(cm.one_vs_rest(class), true)
}

/// Unweighted mean of per-class metrics. DOR is averaged over the finite
/// values only; if none is finite it is infinite when any class was.
pub fn macro_average(per_class: &[ClassMetrics]) -> ClassMetrics {
    let k = per_class.len().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let finite: Vec<f64> = per_class.iter().filter_map(|m| m.dor.finite()).collect();
    let dor = if !finite.is_empty() {
        Dor::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
    } else if per_class.iter().any(|m| m.dor == Dor::Infinite) {
        Dor::Infinite
    } else {
        Dor::Undefined
    };
    ClassMetrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        mcc: mean(|m| m.mcc),
        dor,
        flags: MetricFlags {
            precision_undefined: per_class.iter().any(|m| m.flags.precision_undefined),
            recall_undefined: per_class.iter().any(|m| m.flags.recall_undefined),
            mcc_undefined: per_class.iter().any(|m| m.flags.mcc_undefined),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub per_class: [ClassMetrics; 3],
    pub macro_avg: ClassMetrics,
    /// Classes whose DOR was infinite and so left out of the macro DOR.
    pub dor_infinite_classes: usize,
    pub micro_accuracy: f64,
    pub multiclass_mcc: f64,
}

/// Gorodkin's K-category correlation coefficient; 0 when undefined.
pub fn multiclass_mcc(cm: &ConfusionMatrix3) -> f64 {
    let n = cm.n() as f64;
    let t: Vec<f64> = (0..3).map(|k| cm.counts[k].iter().sum::<u64>() as f64).collect();
    let p: Vec<f64> = (0..3).map(|k| (0..3).map(|a| cm.counts[a][k]).sum::<u64>() as f64).collect();
    let tp: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
    let num = n * cm.trace() as f64 - tp;
    let den = ((n * n - p.iter().map(|v| v * v).sum::<f64>()) * (n * n - t.iter().map(|v| v * v).sum::<f64>())).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn overall_metrics(cm: &ConfusionMatrix3) -> OverallMetrics {
    let per_class = ImpactClass::ALL.map(|c| class_metrics(cm, c));
    let n = cm.n();
    OverallMetrics {
        macro_avg: macro_average(&per_class),
        dor_infinite_classes: per_class.iter().filter(|m| m.dor == Dor::Infinite).count(),
        per_class,
        micro_accuracy: if n == 0 { 0.0 } else { cm.trace() as f64 / n as f64 },
        multiclass_mcc: multiclass_mcc(cm),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold index per instance.
    pub folds: Vec<usize>,
    /// Stratum per instance.
    pub strata: Vec<usize>,
    /// Set when some stratum had fewer than `k` members.
    pub downgraded: bool,
}

impl FoldAssignment {
    /// (train, test) instance indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.folds.len()).partition(|&i| self.folds[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

/// Seeded per-stratum shuffle followed by a round-robin deal into folds. The
/// deal position carries over from one stratum to the next so fold sizes
/// differ by at most one overall, not just within each stratum.
pub fn stratified_kfold_by(strata: &[usize], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    if strata.len() < k {
        return Err(EvalError::TooFewForFolds { n: strata.len(), k });
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; strata.len()];
    let mut downgraded = false;
    let mut next = 0usize;
    for (s, members) in groups.iter_mut() {
        if members.len() < k {
            log::warn!("stratum {s} has {} members, fewer than k = {k}; some folds will lack it", members.len());
            downgraded = true;
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, folds, strata: strata.to_vec(), downgraded })
}

pub fn stratified_kfold(labels: &[ImpactClass], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    let strata: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    stratified_kfold_by(&strata, k, seed)
}

pub const METRIC_NAMES: [&str; 6] = ["accuracy", "precision", "recall", "f1", "mcc", "dor"];

fn metric_value(m: &ClassMetrics, name: &str) -> f64 {
    match name {
        "accuracy" => m.accuracy,
        "precision" => m.precision,
        "recall" => m.recall,
        "f1" => m.f1,
        "mcc" => m.mcc,
        "dor" => m.dor.as_f64(),
        _ => unreachable!("unknown metric {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub horizon: Horizon,
    /// `MT`, `VT`, `BT` or `overall`.
    pub class: String,
    pub metric: String,
    pub mtl: f64,
    pub stl: f64,
    /// `stl - mtl`.
    pub delta: f64,
}

fn row_label(i: usize) -> &'static str {
    ["MT", "VT", "BT", "overall"][i]
}

/// STL values next to their difference from MTL, per horizon, class and metric.
pub fn compare_models(
    mtl: &BTreeMap<Horizon, ConfusionMatrix3>,
    stl: &BTreeMap<Horizon, ConfusionMatrix3>,
) -> Result<Vec<ComparisonRow>, EvalError> {
    if mtl.keys().ne(stl.keys()) {
        return Err(EvalError::MismatchedHorizons(format!(
            "mtl {:?} vs stl {:?}",
            mtl.keys().collect::<Vec<_>>(),
            stl.keys().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (h, a) in mtl {
        let (oa, ob) = (overall_metrics(a), overall_metrics(&stl[h]));
        let la: Vec<ClassMetrics> = oa.per_class.iter().copied().chain([oa.macro_avg]).collect();
        let lb: Vec<ClassMetrics> = ob.per_class.iter().copied().chain([ob.macro_avg]).collect();
        for (i, (ma, mb)) in la.iter().zip(&lb).enumerate() {
            for name in METRIC_NAMES {
                let (x, y) = (metric_value(ma, name), metric_value(mb, name));
                rows.push(ComparisonRow {
                    horizon: *h,
                    class: row_label(i).to_string(),
                    metric: name.to_string(),
                    mtl: x,
                    stl: y,
                    delta: y - x,
                });
            }
        }
    }
    Ok(rows)
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("horizon  class    metric     STL (delta vs MTL)\n");
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:<8} {:<10} {:.4} ({:+.4})\n",
            r.horizon.name(),
            r.class,
            r.metric,
            r.stl,
            r.delta
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub horizon: Horizon,
    pub class: String,
    pub metric: String,
    pub value: f64,
}

/// Long-format metric table: per class, the macro average, micro accuracy
/// and the multiclass MCC for every horizon.
pub fn metric_rows(cms: &BTreeMap<Horizon, ConfusionMatrix3>) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for (h, cm) in cms {
        let o = overall_metrics(cm);
        let mut push = |class: &str, metric: &str, value: f64| {
            rows.push(MetricRow { horizon: *h, class: class.into(), metric: metric.into(), value })
        };
        for (i, m) in o.per_class.iter().enumerate() {
            for name in METRIC_NAMES {
                push(row_label(i), name, metric_value(m, name));
            }
        }
        for name in METRIC_NAMES {
            push("overall_macro", name, metric_value(&o.macro_avg, name));
        }
        push("overall_micro", "accuracy", o.micro_accuracy);
        push("overall_multiclass", "mcc", o.multiclass_mcc);
    }
    rows
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "undefined".into()
    } else if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.display().to_string(), source }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<(), EvalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    writeln!(f, "horizon,class,metric,value").map_err(io_err(path))?;
    for r in rows {
        writeln!(f, "{},{},{},{}", r.horizon.name(), r.class, r.metric, fmt_value(r.value)).map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

/// JSON mirror of the CSV; non-finite values become the same strings.
pub fn metrics_json(rows: &[MetricRow]) -> serde_json::Value {
    let items: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let value = if r.value.is_finite() {
                serde_json::json!(r.value)
            } else {
                serde_json::json!(fmt_value(r.value))
            };
            serde_json::json!({
                "horizon": r.horizon.name(),
                "class": r.class,
                "metric": r.metric,
                "value": value,
            })
        })
        .collect();
    serde_json::Value::Array(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ImpactClass::*;

    const MTL_SHORT: [[u64; 3]; 3] = [[2134, 7, 17], [129, 5, 2], [69, 4, 20]];

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn one_vs_rest_bookkeeping() {
        let cm = ConfusionMatrix3::from_counts(MTL_SHORT);
        let bt = cm.one_vs_rest(BT);
        assert_eq!((bt.tp, bt.fp, bt.fn_, bt.tn), (20, 19, 73, 2275));
        for c in ImpactClass::ALL {
            let o = cm.one_vs_rest(c);
            assert_eq!(o.tp + o.fp + o.fn_ + o.tn, cm.n());
        }
    }

    #[test]
    fn breakthrough_column_from_matrix() {
        let m = class_metrics(&ConfusionMatrix3::from_counts(MTL_SHORT), BT);
        assert!(close(m.precision, 20.0 / 39.0, 1e-12));
        assert!(close(m.recall, 20.0 / 93.0, 1e-12));
        assert!(close(m.dor.finite().unwrap(), 20.0 * 2275.0 / (19.0 * 73.0), 1e-9));
        let mcc = (20.0 * 2275.0 - 19.0 * 73.0) / (39.0f64 * 93.0 * 2294.0 * 2348.0).sqrt();
        assert!(close(m.mcc, mcc, 1e-12));
    }

    #[test]
    fn degenerate_conventions() {
        let perfect = ConfusionMatrix3::from_counts([[3, 0, 0], [0, 2, 0], [0, 0, 1]]);
        let o = overall_metrics(&perfect);
        for m in o.per_class {
            assert_eq!((m.precision, m.recall, m.f1, m.mcc, m.accuracy), (1.0, 1.0, 1.0, 1.0, 1.0));
            assert_eq!(m.dor, Dor::Infinite);
        }
        assert_eq!(o.macro_avg.dor, Dor::Infinite);
        assert_eq!(o.dor_infinite_classes, 3);
        assert_eq!(o.multiclass_mcc, 1.0);

        let majority = ConfusionMatrix3::from_counts([[5, 0, 0], [3, 0, 0], [2, 0, 0]]);
        let m = class_metrics(&majority, BT);
        assert_eq!(m.precision, 0.0);
        assert!(m.flags.precision_undefined && m.flags.mcc_undefined);
        assert_eq!(m.dor, Dor::Undefined);
        assert_eq!(multiclass_mcc(&majority), 0.0);
    }

    #[test]
    fn haldane_is_finite() {
        let cm = ConfusionMatrix3::from_counts([[3, 0, 0], [0, 2, 0], [0, 0, 1]]);
        let m = class_metrics_haldane(&cm, BT);
        assert!(close(m.dor.finite().unwrap(), 1.5 * 5.5 / 0.25, 1e-12));
    }

    #[test]
    fn mcc_symmetric_under_dichotomy_swap() {
        let c = OneVsRest { tp: 7, fp: 3, fn_: 11, tn: 40 };
        let s = OneVsRest { tp: 40, fp: 11, fn_: 3, tn: 7 };
        assert!(close(metrics_from_counts(c, false).mcc, metrics_from_counts(s, false).mcc, 1e-15));
    }

    #[test]
    fn kfold_counting_example() {
        let mut labels = vec![MT; 5];
        labels.extend([VT; 3]);
        labels.extend([BT; 2]);
        let fa = stratified_kfold(&labels, 2, 9).unwrap();
        assert_eq!(fa.fold_sizes(), vec![5, 5]);
        for (c, size) in [(MT, 5), (VT, 3), (BT, 2)] {
            let in0 = (0..10).filter(|&i| labels[i] == c && fa.folds[i] == 0).count();
            assert!(in0 == size / 2 || in0 == size - size / 2);
        }
        assert_eq!(fa, stratified_kfold(&labels, 2, 9).unwrap());
        assert!(!fa.downgraded);
        assert!(matches!(stratified_kfold(&labels, 1, 0), Err(EvalError::InvalidK(1))));
    }

    #[test]
    fn kfold_small_class_downgrades() {
        let labels = [MT, MT, MT, MT, BT];
        let fa = stratified_kfold(&labels, 3, 1).unwrap();
        assert!(fa.downgraded);
    }

    #[test]
    fn compare_identity_and_antisymmetry() {
        let a = BTreeMap::from([(Horizon::Mid, ConfusionMatrix3::from_counts(MTL_SHORT))]);
        let b = BTreeMap::from([(Horizon::Mid, ConfusionMatrix3::from_counts([[2000, 60, 98], [120, 10, 6], [50, 10, 33]]))]);
        assert!(compare_models(&a, &a).unwrap().iter().all(|r| r.delta == 0.0));
        let ab = compare_models(&a, &b).unwrap();
        let ba = compare_models(&b, &a).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert!(close(x.delta, -y.delta, 1e-12));
        }
        let c = BTreeMap::from([(Horizon::Long, ConfusionMatrix3::from_counts(MTL_SHORT))]);
        assert!(matches!(compare_models(&a, &c), Err(EvalError::MismatchedHorizons(_))));
    }

    #[test]
    fn metric_rows_layout() {
        let cms = BTreeMap::from([(Horizon::Short, ConfusionMatrix3::from_counts(MTL_SHORT))]);
        let rows = metric_rows(&cms);
        assert_eq!(rows.len(), 4 * METRIC_NAMES.len() + 2);
        assert!(rows.iter().any(|r| r.class == "overall_multiclass" && r.metric == "mcc"));
        assert_eq!(metrics_json(&rows).as_array().unwrap().len(), rows.len());
    }

    #[test]
    fn empty_pairs_rejected() {
        assert!(matches!(confusion_matrix(&[]), Err(EvalError::EmptyInput)));
    }

    proptest::proptest! {
        #[test]
        fn f1_is_harmonic_mean(tp in 1u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let m = metrics_from_counts(OneVsRest { tp, fp, fn_, tn }, false);
            let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
            proptest::prop_assert!((m.f1 - h).abs() < 1e-12);
            proptest::prop_assert!(m.mcc >= -1.0 - 1e-12 && m.mcc <= 1.0 + 1e-12);
        }

        #[test]
        fn matrix_is_order_invariant(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..60)) {
            let p: Vec<_> = pairs.iter().map(|&(a, b)| (ImpactClass::from_index(a).unwrap(), ImpactClass::from_index(b).unwrap())).collect();
            let mut r = p.clone();
            r.reverse();
            proptest::prop_assert_eq!(confusion_matrix(&p).unwrap(), confusion_matrix(&r).unwrap());
        }

        #[test]
        fn folds_partition_with_balanced_strata(labels in proptest::collection::vec(0usize..3, 10..200), k in 2usize..6, seed in 0u64..1000) {
            let fa = stratified_kfold_by(&labels, k, seed).unwrap();
            let sizes = fa.fold_sizes();
            proptest::prop_assert_eq!(sizes.iter().sum::<usize>(), labels.len());
            for c in 0..3 {
                let total = labels.iter().filter(|&&l| l == c).count();
                for f in 0..k {
                    let in_f = (0..labels.len()).filter(|&i| labels[i] == c && fa.folds[i] == f).count();
                    let expect = total as f64 / k as f64;
                    proptest::prop_assert!((in_f as f64 - expect).abs() < 1.0 + 1e-9);
                }
            }
        }
    }
}
