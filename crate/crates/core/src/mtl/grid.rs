use super::{train, Dataset, MtlError, MtlModel, NetworkConfig, TrainConfig};
use crate::corpus::Horizon;
use crate::eval::{overall_metrics, stratified_kfold_by};
use crate::seed::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// Hyperparameter name to candidate values. Recognized names:
/// `learning_rate`, `batch_size`, `max_epochs`, `early_stop_patience`,
/// `validation_fraction`, `class_weighting`, `shared_dropout_rate`,
/// `shared_layer_widths`, `head_widths_short`, `head_widths_mid`,
/// `head_widths_long` and `task_weights` (`[s, m, l]` or an object).
pub type GridSpace = BTreeMap<String, Vec<Value>>;

const TRAIN_KEYS: [&str; 6] = [
    "learning_rate",
    "batch_size",
    "max_epochs",
    "early_stop_patience",
    "validation_fraction",
    "class_weighting",
];
const NET_KEYS: [&str; 2] = ["shared_dropout_rate", "shared_layer_widths"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: BTreeMap<String, Value>,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best_network: NetworkConfig,
    pub best_train: TrainConfig,
    pub cells: Vec<GridCell>,
}

/// All cells in odometer order: keys sorted, the last key varying fastest.
pub fn enumerate_cells(space: &GridSpace) -> Vec<BTreeMap<String, Value>> {
    let keys: Vec<&String> = space.keys().collect();
    let lens: Vec<usize> = space.values().map(Vec::len).collect();
    let total: usize = lens.iter().product();
    let mut cells = Vec::with_capacity(total);
    let mut digits = vec![0usize; keys.len()];
    for _ in 0..total {
        cells.push(keys.iter().zip(&digits).map(|(k, &d)| ((*k).clone(), space[*k][d].clone())).collect());
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < lens[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    cells
}

fn grid_err(m: impl std::fmt::Display) -> MtlError {
    MtlError::Grid(m.to_string())
}

/// Overrides the base configurations with one cell's values.
pub fn apply_cell(
    params: &BTreeMap<String, Value>,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(NetworkConfig, TrainConfig), MtlError> {
    let mut nv = serde_json::to_value(net).map_err(grid_err)?;
    let mut tv = serde_json::to_value(cfg).map_err(grid_err)?;
    for (key, value) in params {
        if TRAIN_KEYS.contains(&key.as_str()) {
            tv[key.as_str()] = value.clone();
        } else if NET_KEYS.contains(&key.as_str()) {
            nv[key.as_str()] = value.clone();
        } else if let Some(h) = key.strip_prefix("head_widths_") {
            let h = Horizon::parse(h).ok_or_else(|| grid_err(format!("unknown horizon in {key}")))?;
            if net.task_head_widths.contains_key(&h) {
                nv["task_head_widths"][h.name()] = value.clone();
            }
        } else if key == "task_weights" {
            tv["task_loss_weights"] = match value {
                Value::Array(a) if a.len() == 3 => {
                    serde_json::json!({"short": a[0], "mid": a[1], "long": a[2]})
                }
                Value::Object(_) => value.clone(),
                _ => return Err(grid_err(format!("task_weights must be [s, m, l] or an object, got {value}"))),
            };
        } else {
            return Err(grid_err(format!("unknown hyperparameter {key:?}")));
        }
    }
    let net: NetworkConfig = serde_json::from_value(nv).map_err(|e| grid_err(format!("network config: {e}")))?;
    let cfg: TrainConfig = serde_json::from_value(tv).map_err(|e| grid_err(format!("train config: {e}")))?;
    net.validate()?;
    cfg.validate()?;
    Ok((net, cfg))
}

/// Sum over tasks of the macro-averaged per-class MCC on held-out data.
pub fn sum_of_mcc(model: &MtlModel, data: &Dataset) -> Result<f64, MtlError> {
    let cms = model.confusion_matrices(data)?;
    Ok(cms.values().map(|cm| overall_metrics(cm).macro_avg.mcc).sum())
}

/// Exhaustive search with stratified k-fold cross-validation. Every cell
/// sees the same folds; ties keep the earlier cell.
pub fn grid_search(
    space: &GridSpace,
    data: &Dataset,
    net: &NetworkConfig,
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<GridResult, MtlError> {
    if space.is_empty() || space.values().any(Vec::is_empty) {
        return Err(grid_err("empty search space"));
    }
    let cells = enumerate_cells(space);
    let configs: Vec<(NetworkConfig, TrainConfig)> =
        cells.iter().map(|p| apply_cell(p, net, cfg)).collect::<Result<_, _>>()?;
    let strata: Vec<usize> = (0..data.len()).map(|i| data.strat_label(i).map_or(3, |c| c.index())).collect();
    let folds = stratified_kfold_by(&strata, k, derive_seed(seed, "folds"))?;
    let splits: Vec<(Dataset, Dataset)> = (0..k)
        .map(|f| {
            let (tr, te) = folds.split(f);
            (data.subset(&tr), data.subset(&te))
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (n, t) = &configs[c];
            let model = train(MtlModel::init(n.clone())?, &splits[f].0, t)?;
            sum_of_mcc(&model, &splits[f].1)
        })
        .collect::<Result<_, MtlError>>()?;

    let mut out = Vec::with_capacity(cells.len());
    let mut best_index = 0;
    for (c, params) in cells.into_iter().enumerate() {
        let fold_scores = scores[c * k..(c + 1) * k].to_vec();
        let mean_score = fold_scores.iter().sum::<f64>() / k as f64;
        log::info!("grid cell {c}: {params:?} -> {mean_score:.4}");
        if c > 0 && mean_score > out.get(best_index).map_or(f64::NEG_INFINITY, |b: &GridCell| b.mean_score) {
            best_index = c;
        }
        out.push(GridCell { params, fold_scores, mean_score });
    }
    let (best_network, best_train) = configs[best_index].clone();
    Ok(GridResult { best_index, best_network, best_train, cells: out })
}
