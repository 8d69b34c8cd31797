use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use techimpact_core::corpus::{Horizon, ImpactClass};
use techimpact_core::mtl::{train, Dataset, MtlModel, NetworkConfig, TrainConfig};
use techimpact_core::validate::{jonckheere_terpstra, JtMethod};

#[test]
fn network_learns_threshold_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let class = |v: f64| ImpactClass::from_index(if v < -0.5 { 0 } else if v < 0.5 { 1 } else { 2 });
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..600 {
        let row: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        y.push([class(row[0]), class(row[1]), class(row[0] + row[2])]);
        x.push(row);
    }
    let net = NetworkConfig {
        input_dim: 4,
        shared_layer_widths: vec![32, 16],
        task_head_widths: Horizon::ALL.iter().map(|&h| (h, vec![16])).collect::<BTreeMap<_, _>>(),
        shared_dropout_rate: 0.1,
        seed: 3,
        ..NetworkConfig::default()
    };
    let cfg = TrainConfig { max_epochs: 150, learning_rate: 0.01, seed: 4, ..TrainConfig::default() };
    let data = Dataset::new(x.clone(), y.clone());
    let model = train(MtlModel::init(net).unwrap(), &data, &cfg).unwrap();
    let mut hits = [0usize; 3];
    for (row, labels) in x.iter().zip(&y) {
        let pred = model.predict(row).unwrap();
        for (t, h) in Horizon::ALL.iter().enumerate() {
            hits[t] += usize::from(Some(pred[h]) == labels[t]);
        }
    }
    for (t, h) in hits.iter().enumerate() {
        let acc = *h as f64 / x.len() as f64;
        assert!(acc > 0.85, "task {t} accuracy {acc}");
    }
}

#[test]
fn jt_null_rejection_rate_is_near_nominal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reps = 1000;
    let mut rejected = 0;
    for _ in 0..reps {
        let groups: Vec<Vec<f64>> = (0..3).map(|_| (0..15).map(|_| rng.gen::<f64>()).collect()).collect();
        if jonckheere_terpstra(&groups, JtMethod::NormalApprox, 0, 0).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / reps as f64;
    assert!((0.03..0.075).contains(&rate), "rejection rate {rate}");
}
