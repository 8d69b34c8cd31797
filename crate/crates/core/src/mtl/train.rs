use super::{BatchLoss, DenseGrad, Mat, MtlError, MtlModel, NetworkConfig, N_CLASSES};
use crate::corpus::{Horizon, ImpactClass};
use crate::indicators::{Standardizer, FEATURE_NAMES, N_FEATURES};
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub short: f64,
    pub mid: f64,
    pub long: f64,
}

impl TaskWeights {
    pub fn uniform() -> Self {
        TaskWeights { short: 1.0, mid: 1.0, long: 1.0 }
    }

    pub fn only(task: Horizon) -> Self {
        let mut w = TaskWeights { short: 0.0, mid: 0.0, long: 0.0 };
        w.set(task, 1.0);
        w
    }

    pub fn get(&self, h: Horizon) -> f64 {
        match h {
            Horizon::Short => self.short,
            Horizon::Mid => self.mid,
            Horizon::Long => self.long,
        }
    }

    pub fn set(&mut self, h: Horizon, w: f64) {
        match h {
            Horizon::Short => self.short = w,
            Horizon::Mid => self.mid = w,
            Horizon::Long => self.long = w,
        }
    }
}

impl Default for TaskWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub task_loss_weights: TaskWeights,
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
    /// Inverse-frequency class weighting of the cross-entropy terms.
    pub class_weighting: bool,
    /// Fit a standardizer on the training split and attach it to the model.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            early_stop_patience: 10,
            task_loss_weights: TaskWeights::uniform(),
            validation_fraction: 0.1,
            optimizer: Optimizer::default(),
            class_weighting: false,
            standardize: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MtlError> {
        let bad = |m: &str| Err(MtlError::InvalidTrainConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        let w = self.task_loss_weights;
        let ws = [w.short, w.mid, w.long];
        if ws.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || ws.iter().all(|v| *v == 0.0) {
            return bad("task weights must be non-negative with at least one positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Feature rows with per-horizon labels (`None` where a horizon is not
/// observable for the instance).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<[Option<ImpactClass>; 3]>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<[Option<ImpactClass>; 3]>) -> Dataset {
        assert_eq!(x.len(), y.len(), "feature and label counts differ");
        Dataset { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Label used to stratify splits: the longest observable horizon.
    pub fn strat_label(&self, i: usize) -> Option<ImpactClass> {
        let y = &self.y[i];
        y[Horizon::Long.index()].or(y[Horizon::Mid.index()]).or(y[Horizon::Short.index()])
    }
}

/// Per-epoch losses. Task entries are `None` for tasks the model lacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_total: f64,
    pub val_loss_total: f64,
    pub train_loss: [Option<f64>; 3],
    pub val_loss: [Option<f64>; 3],
}

/// Stratified hold-out split: within each stratum a seeded shuffle sends
/// `round(fraction * size)` members to validation. Returns (train, validation).
pub fn split_validation(data: &Dataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: [Vec<usize>; 4] = Default::default();
    for i in 0..data.len() {
        let s = data.strat_label(i).map(|c| c.index()).unwrap_or(3);
        strata[s].push(i);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for mut members in strata {
        members.shuffle(&mut rng);
        let k = (fraction * members.len() as f64).round() as usize;
        val.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    if val.is_empty() && train.len() > 1 {
        val.push(train.pop().unwrap());
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn class_weights(data: &Dataset, idx: &[usize]) -> [[f64; N_CLASSES]; 3] {
    let mut w = [[1.0; N_CLASSES]; 3];
    for t in 0..3 {
        let mut counts = [0usize; N_CLASSES];
        for &i in idx {
            if let Some(c) = data.y[i][t] {
                counts[c.index()] += 1;
            }
        }
        let n: usize = counts.iter().sum();
        for k in 0..N_CLASSES {
            if counts[k] > 0 {
                w[t][k] = n as f64 / (N_CLASSES as f64 * counts[k] as f64);
            }
        }
    }
    w
}

struct OptimizerState {
    step: i32,
    m: Vec<DenseGrad>,
    v: Vec<DenseGrad>,
}

impl OptimizerState {
    fn new(model: &MtlModel) -> Self {
        let zeros: Vec<DenseGrad> = model.layers().map(DenseGrad::zeros_like).collect();
        OptimizerState { step: 0, m: zeros.clone(), v: zeros }
    }

    fn apply(&mut self, model: &mut MtlModel, grads: &[DenseGrad], cfg: &TrainConfig) {
        self.step += 1;
        let lr = cfg.learning_rate;
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (layer, g) in model.layers_mut().zip(grads) {
                    for (p, d) in layer.weights.iter_mut().zip(&g.weights) {
                        *p -= lr * d;
                    }
                    for (p, d) in layer.bias.iter_mut().zip(&g.bias) {
                        *p -= lr * d;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let t = self.step;
                let lr_t = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= lr_t * m[i] / (v[i].sqrt() + epsilon);
                    }
                };
                for (((layer, g), m), v) in model
                    .layers_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
                    update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
                }
            }
        }
    }
}

fn batch_of(x: &[Vec<f64>], idx: &[usize]) -> Mat {
    let rows: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
    Mat::from_rows(&rows)
}

/// Mini-batch training with early stopping on the weighted validation loss.
///
/// Training stops after `max(patience, 1)` consecutive epochs without a strict
/// improvement, or at `max_epochs`; the parameters of the best validation
/// epoch are restored.
pub fn train(mut model: MtlModel, data: &Dataset, cfg: &TrainConfig) -> Result<MtlModel, MtlError> {
    cfg.validate()?;
    let need = 2 * cfg.batch_size;
    if data.len() < need {
        return Err(MtlError::TooFewInstances { got: data.len(), need });
    }
    let dim = model.config.input_dim;
    if let Some(row) = data.x.iter().find(|r| r.len() != dim) {
        return Err(MtlError::InputDim { expected: dim, got: row.len() });
    }
    for (i, row) in data.x.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            log::error!("instance {i} has a non-finite feature at {j}");
            return Err(MtlError::NonFiniteInput(j));
        }
    }
    let (train_idx, val_idx) = split_validation(data, cfg.validation_fraction, derive_seed(cfg.seed, "split"));

    let x: Vec<Vec<f64>> = if cfg.standardize {
        let rows: Vec<&[f64]> = train_idx.iter().map(|&i| data.x[i].as_slice()).collect();
        let names: Vec<&str> = if dim == N_FEATURES { FEATURE_NAMES.to_vec() } else { Vec::new() };
        let s = Standardizer::fit_rows(&rows, &names).map_err(|e| MtlError::InvalidTrainConfig(e.to_string()))?;
        let x = data.x.iter().map(|r| s.apply(r)).collect();
        model.standardizer = Some(s);
        x
    } else {
        data.x.clone()
    };
    let cw = cfg.class_weighting.then(|| class_weights(data, &train_idx));
    let val_x = batch_of(&x, &val_idx);
    let val_y: Vec<_> = val_idx.iter().map(|&i| data.y[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut opt = OptimizerState::new(&model);
    let mut best: Option<(f64, usize, MtlModel)> = None;
    let mut since_best = 0usize;
    let patience = cfg.early_stop_patience.max(1);
    let mut order = train_idx.clone();
    model.history.clear();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = BatchLoss::default();
        let mut task_n = [0usize; 3];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = batch_of(&x, chunk);
            let yb: Vec<_> = chunk.iter().map(|&i| data.y[i]).collect();
            let (loss, grads) =
                model.loss_and_grad(&xb, &yb, &cfg.task_loss_weights, cw.as_ref(), Some(&mut rng), true);
            if !loss.total.is_finite() {
                log::error!("non-finite loss at epoch {epoch}, batch {b}: {loss:?}");
                return Err(MtlError::NonFiniteLoss { epoch, batch: b });
            }
            sum.total += loss.total * chunk.len() as f64;
            for t in 0..3 {
                if let Some(l) = loss.per_task[t] {
                    let n = yb.iter().filter(|y| y[t].is_some()).count();
                    *sum.per_task[t].get_or_insert(0.0) += l * n as f64;
                    task_n[t] += n;
                }
            }
            opt.apply(&mut model, &grads, cfg);
        }
        let train_total = sum.total / order.len() as f64;
        let train_tasks: [Option<f64>; 3] =
            std::array::from_fn(|t| sum.per_task[t].map(|s| s / task_n[t].max(1) as f64));
        let (val, _) = model.loss_and_grad(&val_x, &val_y, &cfg.task_loss_weights, None, None, false);
        if !val.total.is_finite() {
            return Err(MtlError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        model.history.push(EpochRecord {
            epoch,
            train_loss_total: train_total,
            val_loss_total: val.total,
            train_loss: train_tasks,
            val_loss: val.per_task,
        });
        let improved = best.as_ref().map_or(true, |(b, _, _)| val.total < *b);
        if improved {
            let mut snapshot = model.clone();
            snapshot.history.clear();
            best = Some((val.total, epoch, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    let (_, best_epoch, snapshot) = best.expect("at least one epoch");
    model.trunk = snapshot.trunk;
    model.heads = snapshot.heads;
    model.best_epoch = Some(best_epoch);
    Ok(model)
}

/// Single-task model: the same trunk and the `task` head only, trained with
/// that task's weight fixed at 1.
pub fn train_stl(
    task: Horizon,
    data: &Dataset,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<MtlModel, MtlError> {
    let model = MtlModel::init(net.single_task(task))?;
    let cfg = TrainConfig { task_loss_weights: TaskWeights::only(task), ..cfg.clone() };
    train(model, data, &cfg)
}
