//! Interventional Shapley attributions of one task-class probability.
//!
//! The value of a coalition `S` of feature groups is the mean model output
//! over background rows `b` after overwriting the dims of `S` in `b` with the
//! instance's values. [`shapley_exact`] enumerates all coalitions;
//! [`shapley_sampled`] walks random permutations, pairing each with one
//! background row.

mod summary;

pub use summary::{
    beeswarm_svg, global_importance, group_summary, write_attributions_csv, write_summary_csv, InstanceMeta,
    SummaryDataset, SummaryFilter, SummaryPoint,
};

use crate::corpus::{Horizon, ImpactClass};
use crate::indicators::{FEATURE_NAMES, N_FEATURES, PK_3_A, TE_4_A};
use crate::mtl::{Mat, MtlError, MtlModel};
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact enumeration is refused above this many groups.
pub const MAX_EXACT_GROUPS: usize = 20;
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("{0} groups exceed the exact-enumeration limit of {MAX_EXACT_GROUPS}")]
    TooManyGroups(usize),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("n_permutations must be at least 1")]
    NoPermutations,
    #[error("no attribution rows")]
    EmptyRows,
    #[error("model has no {0} head")]
    MissingHead(Horizon),
    #[error(transparent)]
    Model(#[from] MtlError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A scalar function of one input vector.
pub trait ValueModel: Sync {
    fn input_dim(&self) -> usize;

    fn output(&self, x: &[f64]) -> f64;

    fn output_batch(&self, xs: &Mat) -> Vec<f64> {
        (0..xs.rows).map(|r| self.output(xs.row(r))).collect()
    }
}

/// Wraps a closure as a [`ValueModel`].
pub struct FnModel<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ValueModel for FnModel<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionTarget {
    pub horizon: Horizon,
    pub class: ImpactClass,
}

impl AttributionTarget {
    pub fn breakthrough(horizon: Horizon) -> Self {
        AttributionTarget { horizon, class: ImpactClass::BT }
    }
}

/// The softmax probability of one (horizon, class) pair on standardized input.
pub struct MtlTarget<'a> {
    pub model: &'a MtlModel,
    head: usize,
    class: usize,
}

impl<'a> MtlTarget<'a> {
    pub fn new(model: &'a MtlModel, target: AttributionTarget) -> Result<Self, ExplainError> {
        let head = model
            .tasks()
            .iter()
            .position(|h| *h == target.horizon)
            .ok_or(ExplainError::MissingHead(target.horizon))?;
        Ok(MtlTarget { model, head, class: target.class.index() })
    }
}

impl ValueModel for MtlTarget<'_> {
    fn input_dim(&self) -> usize {
        self.model.config.input_dim
    }

    fn output(&self, x: &[f64]) -> f64 {
        self.output_batch(&Mat::from_rows(&[x]))[0]
    }

    fn output_batch(&self, xs: &Mat) -> Vec<f64> {
        let outs = self.model.forward_many(xs).expect("finite standardized input");
        outs.iter().map(|o| o[self.head].probabilities[self.class]).collect()
    }
}

/// Partition of the input dims into named groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrouping {
    pub names: Vec<String>,
    pub members: Vec<Vec<usize>>,
    pub dim: usize,
}

impl FeatureGrouping {
    pub fn new(names: Vec<String>, members: Vec<Vec<usize>>, dim: usize) -> Result<Self, ExplainError> {
        if names.len() != members.len() || names.is_empty() {
            return Err(ExplainError::InvalidGrouping("names and member lists differ in length".into()));
        }
        let mut seen = vec![false; dim];
        for m in &members {
            if m.is_empty() {
                return Err(ExplainError::InvalidGrouping("empty group".into()));
            }
            for &d in m {
                if d >= dim || seen[d] {
                    return Err(ExplainError::InvalidGrouping(format!("dim {d} out of range or repeated")));
                }
                seen[d] = true;
            }
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            return Err(ExplainError::InvalidGrouping(format!("dim {d} is in no group")));
        }
        Ok(FeatureGrouping { names, members, dim })
    }

    pub fn singletons(names: &[&str]) -> Self {
        FeatureGrouping {
            names: names.iter().map(|s| s.to_string()).collect(),
            members: (0..names.len()).map(|i| vec![i]).collect(),
            dim: names.len(),
        }
    }

    /// Indicator layout with both 8-dim section-frequency blocks collapsed:
    /// 30 groups.
    pub fn indicators() -> Self {
        let mut names = Vec::new();
        let mut members = Vec::new();
        let mut d = 0;
        while d < N_FEATURES {
            if d == TE_4_A || d == PK_3_A {
                names.push(if d == TE_4_A { "TE_4" } else { "PK_3" }.to_string());
                members.push((d..d + 8).collect());
                d += 8;
            } else {
                names.push(FEATURE_NAMES[d].to_string());
                members.push(vec![d]);
                d += 1;
            }
        }
        FeatureGrouping { names, members, dim: N_FEATURES }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Mean of the instance's values over each group's dims.
    pub fn group_values(&self, x: &[f64]) -> Vec<f64> {
        self.members.iter().map(|m| m.iter().map(|&d| x[d]).sum::<f64>() / m.len() as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    pub rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ExplainError> {
        if rows.is_empty() {
            return Err(ExplainError::EmptyBackground);
        }
        let d = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(ExplainError::Dimension { expected: d, got: r.len() });
        }
        Ok(BackgroundSet { rows })
    }

    /// Seeded subsample of at most `size` rows, in original order.
    pub fn sample(rows: &[Vec<f64>], size: usize, seed: u64) -> Result<Self, ExplainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = if size >= rows.len() {
            (0..rows.len()).collect()
        } else {
            rand::seq::index::sample(&mut rng, rows.len(), size).into_vec()
        };
        idx.sort_unstable();
        Self::new(idx.into_iter().map(|i| rows[i].clone()).collect())
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub phi: Vec<f64>,
    /// Monte-Carlo standard error per group; absent in exact mode.
    pub std_err: Option<Vec<f64>>,
    pub base_value: f64,
    pub model_output: f64,
}

impl ShapleyValues {
    /// `model_output - base_value - sum(phi)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.model_output - self.base_value - self.phi.iter().sum::<f64>()
    }
}

fn check_dims(model: &dyn ValueModel, x: &[f64], bg: &BackgroundSet, g: &FeatureGrouping) -> Result<(), ExplainError> {
    let d = model.input_dim();
    for got in [x.len(), bg.dim(), g.dim] {
        if got != d {
            return Err(ExplainError::Dimension { expected: d, got });
        }
    }
    Ok(())
}

fn coalition_value(model: &dyn ValueModel, x: &[f64], bg: &BackgroundSet, g: &FeatureGrouping, mask: u32) -> f64 {
    let mut batch = Mat::from_rows(&bg.rows);
    for (gi, m) in g.members.iter().enumerate() {
        if mask & (1 << gi) != 0 {
            for r in 0..batch.rows {
                let row = batch.row_mut(r);
                for &d in m {
                    row[d] = x[d];
                }
            }
        }
    }
    let out = model.output_batch(&batch);
    out.iter().sum::<f64>() / out.len() as f64
}

/// Exact Shapley values by enumerating all `2^G` coalitions.
pub fn shapley_exact(
    model: &dyn ValueModel,
    x: &[f64],
    bg: &BackgroundSet,
    grouping: &FeatureGrouping,
) -> Result<ShapleyValues, ExplainError> {
    check_dims(model, x, bg, grouping)?;
    let n = grouping.len();
    if n > MAX_EXACT_GROUPS {
        return Err(ExplainError::TooManyGroups(n));
    }
    let v: Vec<f64> = (0..1u32 << n)
        .into_par_iter()
        .map(|mask| coalition_value(model, x, bg, grouping, mask))
        .collect();
    // weight of a coalition of size s not containing i: s!(n-s-1)!/n!
    let mut w = vec![0.0; n];
    for (s, ws) in w.iter_mut().enumerate() {
        let mut acc = 1.0 / n as f64;
        for j in 1..=s {
            acc *= j as f64 / (n - j) as f64;
        }
        *ws = acc;
    }
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        let mut acc = 0.0;
        for mask in 0..1u32 << n {
            if mask & bit == 0 {
                acc += w[mask.count_ones() as usize] * (v[(mask | bit) as usize] - v[mask as usize]);
            }
        }
        *p = acc;
    }
    Ok(ShapleyValues { phi, std_err: None, base_value: v[0], model_output: v[(1usize << n) - 1] })
}

/// Base value: mean model output over the background.
pub fn base_value(model: &dyn ValueModel, bg: &BackgroundSet) -> f64 {
    let out = model.output_batch(&Mat::from_rows(&bg.rows));
    out.iter().sum::<f64>() / out.len() as f64
}

/// Permutation-sampling estimator. Each sample pairs a random group order
/// with one background row; rows are visited in a shuffled cycle so that
/// when `n_permutations` is a multiple of the background size every row is
/// used equally often and the estimate is exactly efficient.
pub fn shapley_sampled(
    model: &dyn ValueModel,
    x: &[f64],
    bg: &BackgroundSet,
    grouping: &FeatureGrouping,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyValues, ExplainError> {
    check_dims(model, x, bg, grouping)?;
    if n_permutations == 0 {
        return Err(ExplainError::NoPermutations);
    }
    let n = grouping.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bg_order: Vec<usize> = (0..bg.rows.len()).collect();
    bg_order.shuffle(&mut rng);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    // One batch per sample: the background row, then the row after each
    // group joins.
    let mut batch = Mat::zeros(n + 1, x.len());
    for s in 0..n_permutations {
        perm.shuffle(&mut rng);
        let b = &bg.rows[bg_order[s % bg_order.len()]];
        let mut z = b.clone();
        batch.row_mut(0).copy_from_slice(&z);
        for (k, &gi) in perm.iter().enumerate() {
            for &d in &grouping.members[gi] {
                z[d] = x[d];
            }
            batch.row_mut(k + 1).copy_from_slice(&z);
        }
        let out = model.output_batch(&batch);
        for (k, &gi) in perm.iter().enumerate() {
            let c = out[k + 1] - out[k];
            sum[gi] += c;
            sum_sq[gi] += c * c;
        }
    }
    let m = n_permutations as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let std_err = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, sq)| {
            if n_permutations < 2 {
                return 0.0;
            }
            let mean = s / m;
            let var = ((sq - m * mean * mean) / (m - 1.0)).max(0.0);
            (var / m).sqrt()
        })
        .collect();
    Ok(ShapleyValues { phi, std_err: Some(std_err), base_value: base_value(model, bg), model_output: model.output(x) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ShapleyMode {
    Exact,
    Sampled { n_permutations: usize },
}

/// Attribution of one instance toward one target probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRow {
    pub instance_id: String,
    pub target: AttributionTarget,
    /// Per-group mean of the instance's (model-input) feature values.
    pub feature_values: Vec<f64>,
    pub phi: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
    pub base_value: f64,
    pub model_output: f64,
}

/// Attributions for many instances in parallel. Instance `id` uses the
/// stream `derive_seed(seed, id)`, so results do not depend on scheduling.
pub fn explain_instances(
    model: &dyn ValueModel,
    target: AttributionTarget,
    instances: &[(String, Vec<f64>)],
    bg: &BackgroundSet,
    grouping: &FeatureGrouping,
    mode: ShapleyMode,
    seed: u64,
) -> Result<Vec<AttributionRow>, ExplainError> {
    instances
        .par_iter()
        .map(|(id, x)| {
            let sv = match mode {
                ShapleyMode::Exact => shapley_exact(model, x, bg, grouping)?,
                ShapleyMode::Sampled { n_permutations } => {
                    shapley_sampled(model, x, bg, grouping, n_permutations, derive_seed(seed, id))?
                }
            };
            Ok(AttributionRow {
                instance_id: id.clone(),
                target,
                feature_values: grouping.group_values(x),
                phi: sv.phi,
                std_err: sv.std_err,
                base_value: sv.base_value,
                model_output: sv.model_output,
            })
        })
        .collect()
}
