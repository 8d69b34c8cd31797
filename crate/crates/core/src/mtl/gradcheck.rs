use super::{Mat, MtlModel, TaskWeights};
use crate::corpus::ImpactClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
}

fn param_mut(model: &mut MtlModel, layer: usize, bias: bool, i: usize) -> &mut f64 {
    let l = model.layers_mut().nth(layer).expect("layer index");
    if bias {
        &mut l.bias[i]
    } else {
        &mut l.weights[i]
    }
}

/// Compares backpropagated gradients with central finite differences on a
/// seeded random subset of `n_coords` parameters (all of them if fewer),
/// with dropout disabled. The error for one coordinate is
/// `|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`.
///
/// Central differences are only meaningful away from ReLU kinks. A freshly
/// initialized model has zero biases, so a unit whose inputs are all zero
/// sits exactly on its kink; randomize the biases before checking.
pub fn gradient_check(
    model: &MtlModel,
    x: &Mat,
    labels: &[[Option<ImpactClass>; 3]],
    weights: &TaskWeights,
    n_coords: usize,
    seed: u64,
) -> GradCheckReport {
    let (_, grads) = model.loss_and_grad(x, labels, weights, None, None, true);
    let mut coords = Vec::new();
    for (li, layer) in model.layers().enumerate() {
        coords.extend((0..layer.weights.len()).map(|i| (li, false, i)));
        coords.extend((0..layer.bias.len()).map(|i| (li, true, i)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if n_coords >= coords.len() {
        (0..coords.len()).collect()
    } else {
        rand::seq::index::sample(&mut rng, coords.len(), n_coords).into_vec()
    };
    let loss_at = |m: &MtlModel| m.loss_and_grad(x, labels, weights, None, None, false).0.total;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &k in &picked {
        let (li, bias, i) = coords[k];
        let analytic = if bias { grads[li].bias[i] } else { grads[li].weights[i] };
        let orig = *param_mut(&mut probe, li, bias, i);
        *param_mut(&mut probe, li, bias, i) = orig + FD_STEP;
        let up = loss_at(&probe);
        *param_mut(&mut probe, li, bias, i) = orig - FD_STEP;
        let down = loss_at(&probe);
        *param_mut(&mut probe, li, bias, i) = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    GradCheckReport { max_relative_error: worst, coordinates_checked: picked.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Horizon;
    use crate::mtl::NetworkConfig;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn setup(seed: u64) -> (MtlModel, Mat, Vec<[Option<ImpactClass>; 3]>) {
        let net = NetworkConfig {
            input_dim: 6,
            shared_layer_widths: vec![8],
            task_head_widths: BTreeMap::from([
                (Horizon::Short, vec![4]),
                (Horizon::Mid, vec![4]),
                (Horizon::Long, vec![4]),
            ]),
            shared_dropout_rate: 0.5,
            seed,
            ..NetworkConfig::default()
        };
        let model = MtlModel::init(net).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let rows: Vec<Vec<f64>> = (0..16).map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let labels = (0..16)
            .map(|_| std::array::from_fn(|_| ImpactClass::from_index(rng.gen_range(0..3))))
            .collect();
        (model, Mat::from_rows(&rows), labels)
    }

    #[test]
    fn small_network_gradients_match() {
        let (model, x, y) = setup(1);
        let report = gradient_check(&model, &x, &y, &TaskWeights::uniform(), 200, 7);
        assert_eq!(report.coordinates_checked, 200);
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn gradients_match_with_missing_labels_and_uneven_heads() {
        let net = NetworkConfig {
            input_dim: 5,
            shared_layer_widths: vec![7, 5],
            task_head_widths: BTreeMap::from([(Horizon::Short, vec![4, 3]), (Horizon::Long, vec![])]),
            seed: 9,
            ..NetworkConfig::default()
        };
        let mut model = MtlModel::init(net).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for layer in model.layers_mut() {
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<[Option<ImpactClass>; 3]> = (0..12)
            .map(|i| std::array::from_fn(|t| if (i + t) % 4 == 0 { None } else { ImpactClass::from_index(rng.gen_range(0..3)) }))
            .collect();
        let w = TaskWeights { short: 0.7, mid: 1.0, long: 1.6 };
        let report = gradient_check(&model, &Mat::from_rows(&rows), &labels, &w, 300, 11);
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn zero_weight_task_has_zero_head_gradient() {
        let (model, x, y) = setup(2);
        let w = TaskWeights { short: 1.0, mid: 0.0, long: 1.0 };
        let (_, grads) = model.loss_and_grad(&x, &y, &w, None, None, true);
        // layer order: trunk(1), short(2), mid(2), long(2)
        for g in &grads[3..5] {
            assert!(g.weights.iter().chain(&g.bias).all(|v| *v == 0.0));
        }
        assert!(grads[1].weights.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn first_order_expansion_error_is_quadratic() {
        let (model, x, y) = setup(3);
        let w = TaskWeights::uniform();
        let (base, grads) = model.loss_and_grad(&x, &y, &w, None, None, true);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dirs: Vec<(Vec<f64>, Vec<f64>)> = model
            .layers()
            .map(|l| {
                (
                    (0..l.weights.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    (0..l.bias.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let residual = |eps: f64| {
            let mut m = model.clone();
            let mut lin = 0.0;
            for ((layer, (dw, db)), g) in m.layers_mut().zip(&dirs).zip(&grads) {
                for i in 0..dw.len() {
                    layer.weights[i] += eps * dw[i];
                    lin += eps * dw[i] * g.weights[i];
                }
                for i in 0..db.len() {
                    layer.bias[i] += eps * db[i];
                    lin += eps * db[i] * g.bias[i];
                }
            }
            let (l, _) = m.loss_and_grad(&x, &y, &w, None, None, false);
            (l.total - base.total - lin).abs()
        };
        let r1 = residual(1e-3);
        let r2 = residual(5e-4);
        // halving the step should cut the residual by about four
        assert!(r2 < r1 * 0.35, "r1={r1:e} r2={r2:e}");
    }
}
