//! Multi-task impact classifier: a shared trunk of rectified dense layers
//! followed by one head per horizon, each ending in a 3-logit softmax.
//!
//! The objective is the weighted sum of per-task mean cross-entropies.
//! Single-task models are the same network with exactly one head.

mod dense;
mod gradcheck;
mod grid;
mod train;

pub use dense::{Dense, DenseGrad, Mat};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use grid::{grid_search, GridCell, GridResult, GridSpace};
pub use train::{
    split_validation, train, train_stl, Dataset, EpochRecord, Optimizer, TaskWeights, TrainConfig,
};

use crate::corpus::{Horizon, ImpactClass};
use crate::eval::ConfusionMatrix3;
use crate::indicators::{Standardizer, N_FEATURES};
use crate::seed::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const N_CLASSES: usize = 3;
pub const CHECKPOINT_SCHEMA: &str = "techimpact.mtl/1";

#[derive(Debug, Error)]
pub enum MtlError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("input has {got} features, model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("non-finite input value at index {0}")]
    NonFiniteInput(usize),
    #[error("too few instances: {got} (need at least {need})")]
    TooFewInstances { got: usize, need: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("missing label for {horizon} task at instance {index}")]
    MissingLabel { horizon: Horizon, index: usize },
    #[error("grid search: {0}")]
    Grid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub shared_layer_widths: Vec<usize>,
    /// Hidden widths per task head; the heads present define the tasks.
    pub task_head_widths: BTreeMap<Horizon, Vec<usize>>,
    pub classes_per_task: usize,
    pub shared_dropout_rate: f64,
    pub hidden_activation: Activation,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: N_FEATURES,
            shared_layer_widths: vec![128, 64],
            task_head_widths: BTreeMap::from([
                (Horizon::Short, vec![64, 32]),
                (Horizon::Mid, vec![64]),
                (Horizon::Long, vec![64, 32]),
            ]),
            classes_per_task: N_CLASSES,
            shared_dropout_rate: 0.5,
            hidden_activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), MtlError> {
        let bad = |m: String| Err(MtlError::InvalidConfig(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.classes_per_task != N_CLASSES {
            return bad(format!("classes_per_task must be {N_CLASSES}"));
        }
        if self.task_head_widths.is_empty() {
            return bad("at least one task head is required".into());
        }
        if self.shared_layer_widths.contains(&0) {
            return bad("shared layer with zero width".into());
        }
        for (h, widths) in &self.task_head_widths {
            if widths.contains(&0) {
                return bad(format!("{h} head has a zero-width layer"));
            }
        }
        if !(0.0..1.0).contains(&self.shared_dropout_rate) {
            return bad("shared_dropout_rate must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn tasks(&self) -> Vec<Horizon> {
        self.task_head_widths.keys().copied().collect()
    }

    /// The same network restricted to a single head.
    pub fn single_task(&self, task: Horizon) -> NetworkConfig {
        let widths = self.task_head_widths.get(&task).cloned().unwrap_or_default();
        NetworkConfig {
            task_head_widths: BTreeMap::from([(task, widths)]),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub horizon: Horizon,
    /// Hidden layers followed by the logit layer.
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlModel {
    pub schema: String,
    pub config: NetworkConfig,
    pub standardizer: Option<Standardizer>,
    pub trunk: Vec<Dense>,
    pub heads: Vec<TaskHead>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept by early stopping.
    pub best_epoch: Option<usize>,
}

/// Softmax output for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub horizon: Horizon,
    pub logits: [f64; N_CLASSES],
    pub probabilities: [f64; N_CLASSES],
    pub predicted: ImpactClass,
}

impl TaskOutput {
    pub fn from_logits(horizon: Horizon, logits: [f64; N_CLASSES]) -> TaskOutput {
        let probabilities = softmax(&logits);
        TaskOutput { horizon, logits, probabilities, predicted: argmax_class(&probabilities) }
    }
}

/// Numerically stable softmax (max-logit subtraction).
pub fn softmax(z: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// `log softmax(z)[k]` via log-sum-exp.
pub fn log_softmax_at(z: &[f64], k: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z[k] - m - lse
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_class(p: &[f64; N_CLASSES]) -> ImpactClass {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    ImpactClass::from_index(best).unwrap()
}

/// Weighted multi-task cross-entropy for one instance. Tasks without a label
/// or with zero weight contribute nothing.
pub fn multi_task_loss(
    outputs: &[TaskOutput],
    labels: &[Option<ImpactClass>; 3],
    weights: &TaskWeights,
) -> f64 {
    outputs
        .iter()
        .filter_map(|o| {
            let w = weights.get(o.horizon);
            let y = labels[o.horizon.index()]?;
            (w != 0.0).then(|| -w * log_softmax_at(&o.logits, y.index()))
        })
        .sum()
}

/// Mean of [`multi_task_loss`] over a batch.
pub fn batch_multi_task_loss(
    outputs: &[Vec<TaskOutput>],
    labels: &[[Option<ImpactClass>; 3]],
    weights: &TaskWeights,
) -> f64 {
    let n = outputs.len().max(1) as f64;
    outputs
        .iter()
        .zip(labels)
        .map(|(o, y)| multi_task_loss(o, y, weights))
        .sum::<f64>()
        / n
}

pub(crate) struct ForwardCache {
    /// Trunk layer inputs, starting with the network input.
    trunk_inputs: Vec<Mat>,
    /// Trunk pre-activations.
    trunk_pre: Vec<Mat>,
    /// Inverted-dropout masks (already scaled), one per trunk layer.
    masks: Vec<Option<Vec<f64>>>,
    trunk_out: Mat,
    heads: Vec<HeadCache>,
}

struct HeadCache {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
    logits: Mat,
}

impl MtlModel {
    /// Initializes parameters: He-uniform for rectified layers, Glorot-uniform
    /// for logit layers, zero biases. The trunk and each head draw from their
    /// own seeded streams so a head is initialized identically whether or not
    /// the other heads exist.
    pub fn init(config: NetworkConfig) -> Result<MtlModel, MtlError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "trunk"));
        let mut trunk = Vec::new();
        let mut fan_in = config.input_dim;
        for &w in &config.shared_layer_widths {
            trunk.push(Dense::uniform(fan_in, w, (6.0 / fan_in as f64).sqrt(), &mut rng));
            fan_in = w;
        }
        let trunk_dim = fan_in;
        let heads = config
            .task_head_widths
            .iter()
            .map(|(&horizon, widths)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, horizon.name()));
                let mut layers = Vec::new();
                let mut fan_in = trunk_dim;
                for &w in widths {
                    layers.push(Dense::uniform(fan_in, w, (6.0 / fan_in as f64).sqrt(), &mut rng));
                    fan_in = w;
                }
                let limit = (6.0 / (fan_in + N_CLASSES) as f64).sqrt();
                layers.push(Dense::uniform(fan_in, N_CLASSES, limit, &mut rng));
                TaskHead { horizon, layers }
            })
            .collect();
        Ok(MtlModel {
            schema: CHECKPOINT_SCHEMA.to_string(),
            config,
            standardizer: None,
            trunk,
            heads,
            history: Vec::new(),
            best_epoch: None,
        })
    }

    pub fn tasks(&self) -> Vec<Horizon> {
        self.heads.iter().map(|h| h.horizon).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(Dense::n_params).sum()
    }

    /// All layers in canonical order: trunk, then each head in horizon order.
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain(self.heads.iter().flat_map(|h| h.layers.iter()))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flat_map(|h| h.layers.iter_mut()))
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MtlError> {
        if x.len() != self.config.input_dim {
            return Err(MtlError::InputDim { expected: self.config.input_dim, got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(MtlError::NonFiniteInput(i));
        }
        Ok(())
    }

    /// Inference-mode forward pass on an already standardized input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<TaskOutput>, MtlError> {
        self.check_input(x)?;
        let cache = self.forward_batch(&Mat::from_rows(&[x]), None);
        Ok(self.outputs_from_cache(&cache, 0))
    }

    /// Forward pass with inverted dropout on the shared layers.
    pub fn forward_train(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<TaskOutput>, MtlError> {
        self.check_input(x)?;
        let cache = self.forward_batch(&Mat::from_rows(&[x]), Some(rng));
        Ok(self.outputs_from_cache(&cache, 0))
    }

    pub fn predict(&self, x: &[f64]) -> Result<BTreeMap<Horizon, ImpactClass>, MtlError> {
        Ok(self.forward(x)?.into_iter().map(|o| (o.horizon, o.predicted)).collect())
    }

    /// Applies the attached standardizer (if any) to a raw feature vector.
    pub fn prepare_input(&self, raw: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.apply(raw),
            None => raw.to_vec(),
        }
    }

    /// Batched inference on standardized inputs.
    pub fn forward_many(&self, xs: &Mat) -> Result<Vec<Vec<TaskOutput>>, MtlError> {
        if xs.cols != self.config.input_dim {
            return Err(MtlError::InputDim { expected: self.config.input_dim, got: xs.cols });
        }
        if let Some(i) = xs.data.iter().position(|v| !v.is_finite()) {
            return Err(MtlError::NonFiniteInput(i % xs.cols));
        }
        let cache = self.forward_batch(xs, None);
        Ok((0..xs.rows).map(|r| self.outputs_from_cache(&cache, r)).collect())
    }

    /// Probability of `class` under the `horizon` head, for attribution.
    pub fn target_probability(&self, x: &[f64], horizon: Horizon, class: ImpactClass) -> f64 {
        let head = self.heads.iter().position(|h| h.horizon == horizon).expect("task head");
        let cache = self.forward_batch(&Mat::from_rows(&[x]), None);
        let z: [f64; N_CLASSES] = cache.heads[head].logits.row(0).try_into().unwrap();
        softmax(&z)[class.index()]
    }

    fn outputs_from_cache(&self, cache: &ForwardCache, r: usize) -> Vec<TaskOutput> {
        self.heads
            .iter()
            .zip(&cache.heads)
            .map(|(h, c)| TaskOutput::from_logits(h.horizon, c.logits.row(r).try_into().unwrap()))
            .collect()
    }

    pub(crate) fn forward_batch(&self, x: &Mat, mut dropout_rng: Option<&mut ChaCha8Rng>) -> ForwardCache {
        use rand::Rng;
        let rate = self.config.shared_dropout_rate;
        let mut trunk_inputs = Vec::with_capacity(self.trunk.len() + 1);
        let mut trunk_pre = Vec::with_capacity(self.trunk.len());
        let mut masks = Vec::with_capacity(self.trunk.len());
        let mut a = x.clone();
        for layer in &self.trunk {
            let z = layer.forward(&a);
            let mut h = z.clone();
            dense::relu_inplace(&mut h);
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    let m: Vec<f64> = (0..h.data.len())
                        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                        .collect();
                    for (v, s) in h.data.iter_mut().zip(&m) {
                        *v *= s;
                    }
                    Some(m)
                }
                _ => None,
            };
            trunk_inputs.push(std::mem::replace(&mut a, h));
            trunk_pre.push(z);
            masks.push(mask);
        }
        let trunk_out = a;
        let heads = self
            .heads
            .iter()
            .map(|head| {
                let n = head.layers.len();
                let mut inputs = Vec::with_capacity(n);
                let mut pre = Vec::with_capacity(n - 1);
                let mut a = trunk_out.clone();
                for layer in &head.layers[..n - 1] {
                    let z = layer.forward(&a);
                    let mut h = z.clone();
                    dense::relu_inplace(&mut h);
                    inputs.push(std::mem::replace(&mut a, h));
                    pre.push(z);
                }
                let logits = head.layers[n - 1].forward(&a);
                inputs.push(a);
                HeadCache { inputs, pre, logits }
            })
            .collect();
        ForwardCache { trunk_inputs, trunk_pre, masks, trunk_out, heads }
    }

    /// Loss and gradients for a batch. Gradients are ordered like
    /// [`MtlModel::layers`]. The loss for each task is the mean over instances
    /// labelled for that task; `class_weights` scales each instance's term.
    pub(crate) fn loss_and_grad(
        &self,
        x: &Mat,
        labels: &[[Option<ImpactClass>; 3]],
        weights: &TaskWeights,
        class_weights: Option<&[[f64; N_CLASSES]; 3]>,
        dropout_rng: Option<&mut ChaCha8Rng>,
        want_grad: bool,
    ) -> (BatchLoss, Vec<DenseGrad>) {
        let cache = self.forward_batch(x, dropout_rng);
        let mut grads: Vec<DenseGrad> = if want_grad {
            self.layers().map(DenseGrad::zeros_like).collect()
        } else {
            Vec::new()
        };
        let mut loss = BatchLoss::default();
        let mut d_trunk_out = Mat::zeros(x.rows, cache.trunk_out.cols);
        let mut grad_offset = self.trunk.len();
        for (head, hc) in self.heads.iter().zip(&cache.heads) {
            let t = head.horizon.index();
            let w = weights.get(head.horizon);
            let labelled: Vec<usize> = (0..x.rows).filter(|&r| labels[r][t].is_some()).collect();
            let n_layers = head.layers.len();
            if labelled.is_empty() {
                grad_offset += n_layers;
                continue;
            }
            let n_t = labelled.len() as f64;
            let mut ce_sum = 0.0;
            let mut dz = Mat::zeros(x.rows, N_CLASSES);
            for &r in &labelled {
                let y = labels[r][t].unwrap().index();
                let cw = class_weights.map(|c| c[t][y]).unwrap_or(1.0);
                let z = hc.logits.row(r);
                ce_sum += -cw * log_softmax_at(z, y);
                if want_grad && w != 0.0 {
                    let p = softmax(&z.try_into().unwrap());
                    let scale = w * cw / n_t;
                    let dzr = dz.row_mut(r);
                    for k in 0..N_CLASSES {
                        dzr[k] = scale * (p[k] - if k == y { 1.0 } else { 0.0 });
                    }
                }
            }
            let task_loss = ce_sum / n_t;
            loss.per_task[t] = Some(task_loss);
            loss.total += w * task_loss;
            if !want_grad || w == 0.0 {
                grad_offset += n_layers;
                continue;
            }
            let mut delta = dz;
            for li in (0..n_layers).rev() {
                let dx = head.layers[li].backward(&hc.inputs[li], &delta, &mut grads[grad_offset + li], true)
                    .unwrap();
                delta = dx;
                if li > 0 {
                    relu_backward(&mut delta, &hc.pre[li - 1]);
                }
            }
            for (acc, v) in d_trunk_out.data.iter_mut().zip(&delta.data) {
                *acc += v;
            }
            grad_offset += n_layers;
        }
        if want_grad {
            let mut delta = d_trunk_out;
            for li in (0..self.trunk.len()).rev() {
                if let Some(mask) = &cache.masks[li] {
                    for (d, m) in delta.data.iter_mut().zip(mask) {
                        *d *= m;
                    }
                }
                relu_backward(&mut delta, &cache.trunk_pre[li]);
                let dx = self.trunk[li].backward(&cache.trunk_inputs[li], &delta, &mut grads[li], li > 0);
                if let Some(dx) = dx {
                    delta = dx;
                }
            }
        }
        (loss, grads)
    }

    /// Predicted classes for raw (unstandardized) rows, one entry per
    /// horizon slot; `None` for horizons without a head.
    pub fn predict_rows(&self, raw: &[Vec<f64>]) -> Result<Vec<[Option<ImpactClass>; 3]>, MtlError> {
        let rows: Vec<Vec<f64>> = raw.iter().map(|r| self.prepare_input(r)).collect();
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let outs = self.forward_many(&Mat::from_rows(&rows))?;
        Ok(outs
            .into_iter()
            .map(|o| {
                let mut p = [None; 3];
                for t in o {
                    p[t.horizon.index()] = Some(t.predicted);
                }
                p
            })
            .collect())
    }

    /// Confusion matrix per task head over the instances labelled for it.
    pub fn confusion_matrices(&self, data: &Dataset) -> Result<BTreeMap<Horizon, ConfusionMatrix3>, MtlError> {
        let pred = self.predict_rows(&data.x)?;
        let mut out = BTreeMap::new();
        for h in self.tasks() {
            let t = h.index();
            let pairs: Vec<_> = data
                .y
                .iter()
                .zip(&pred)
                .filter_map(|(y, p)| Some((y[t]?, p[t]?)))
                .collect();
            if !pairs.is_empty() {
                out.insert(h, crate::eval::confusion_matrix(&pairs)?);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<MtlModel, MtlError> {
        let model: MtlModel =
            serde_json::from_str(text).map_err(|e| MtlError::Checkpoint(e.to_string()))?;
        if model.schema != CHECKPOINT_SCHEMA {
            return Err(MtlError::Checkpoint(format!(
                "unsupported schema {:?}, expected {CHECKPOINT_SCHEMA:?}",
                model.schema
            )));
        }
        model.config.validate()?;
        Ok(model)
    }
}

fn relu_backward(delta: &mut Mat, pre: &Mat) {
    for (d, z) in delta.data.iter_mut().zip(&pre.data) {
        if *z <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Loss over a batch: per-task mean cross-entropy and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub per_task: [Option<f64>; 3],
}

pub fn init_network(config: NetworkConfig) -> Result<MtlModel, MtlError> {
    MtlModel::init(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), [1.0 / 3.0; 3]);
        let p = softmax(&[5.0, 0.0, 0.0]);
        let e5 = 5f64.exp();
        assert!((p[0] - e5 / (e5 + 2.0)).abs() < 1e-15);
        assert!((p[0] - 0.9867).abs() < 1e-4);
        assert_eq!(argmax_class(&p), ImpactClass::MT);
        let big = softmax(&[1000.0, 1000.0, 1000.0]);
        assert!((big[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax_class(&[0.2, 0.3, 0.5]), ImpactClass::BT);
        assert_eq!(argmax_class(&[0.5, 0.5, 0.0]), ImpactClass::MT);
        assert_eq!(argmax_class(&[0.1, 0.45, 0.45]), ImpactClass::VT);
    }

    fn uniform_outputs() -> Vec<TaskOutput> {
        Horizon::ALL.iter().map(|&h| TaskOutput::from_logits(h, [0.0; 3])).collect()
    }

    #[test]
    fn loss_examples() {
        let labels = [Some(ImpactClass::MT), Some(ImpactClass::VT), Some(ImpactClass::BT)];
        let l = multi_task_loss(&uniform_outputs(), &labels, &TaskWeights::uniform());
        assert!((l - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert!((l - 3.2958).abs() < 1e-4);
        let w = TaskWeights { short: 2.0, mid: 0.0, long: 0.0 };
        let l2 = multi_task_loss(&uniform_outputs(), &labels, &w);
        assert!((l2 - 2.0 * 3f64.ln()).abs() < 1e-12);

        let confident: Vec<TaskOutput> = Horizon::ALL
            .iter()
            .map(|&h| TaskOutput::from_logits(h, [800.0, 0.0, 0.0]))
            .collect();
        let l3 = multi_task_loss(&confident, &[Some(ImpactClass::MT); 3], &TaskWeights::uniform());
        assert_eq!(l3, 0.0);
        // far from the true class: finite, no log(0)
        let l4 = multi_task_loss(&confident, &[Some(ImpactClass::BT); 3], &TaskWeights::uniform());
        assert!((l4 - 2400.0).abs() < 1e-9);
    }

    #[test]
    fn published_architecture_parameter_count() {
        let model = MtlModel::init(NetworkConfig::default()).unwrap();
        // shape walk: trunk 44->128->64, heads 64->64->32->3, 64->64->3, 64->64->32->3
        let walk = |dims: &[usize]| -> usize { dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum() };
        let expected = walk(&[44, 128, 64]) + walk(&[64, 64, 32, 3]) + walk(&[64, 64, 3]) + walk(&[64, 64, 32, 3]);
        assert_eq!(expected, 31_049);
        assert_eq!(model.n_params(), expected);
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let cfg = NetworkConfig { seed: 9, ..NetworkConfig::default() };
        assert_eq!(MtlModel::init(cfg.clone()).unwrap(), MtlModel::init(cfg.clone()).unwrap());
        let mut bad = cfg.clone();
        bad.shared_layer_widths = vec![128, 0];
        assert!(matches!(MtlModel::init(bad), Err(MtlError::InvalidConfig(_))));
        let mut bad = cfg;
        bad.task_head_widths.insert(Horizon::Mid, vec![0]);
        assert!(MtlModel::init(bad).is_err());
    }

    #[test]
    fn single_head_matches_multi_head_init() {
        let cfg = NetworkConfig { seed: 5, ..NetworkConfig::default() };
        let full = MtlModel::init(cfg.clone()).unwrap();
        let single = MtlModel::init(cfg.single_task(Horizon::Mid)).unwrap();
        assert_eq!(full.trunk, single.trunk);
        assert_eq!(full.heads[1], single.heads[0]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let model = MtlModel::init(NetworkConfig::default()).unwrap();
        assert!(matches!(model.forward(&[0.0; 3]), Err(MtlError::InputDim { .. })));
        let mut x = vec![0.0; N_FEATURES];
        x[7] = f64::NAN;
        assert!(matches!(model.forward(&x), Err(MtlError::NonFiniteInput(7))));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = MtlModel::init(NetworkConfig { seed: 3, ..NetworkConfig::default() }).unwrap();
        let back = MtlModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
        let bad = model.to_json().replace(CHECKPOINT_SCHEMA, "other/9");
        assert!(MtlModel::from_json(&bad).is_err());
    }
}
