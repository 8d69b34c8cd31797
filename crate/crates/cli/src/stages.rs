//! One function per pipeline stage. Every stage reads its inputs from the
//! output directory and writes new files there; none rewrites another
//! stage's outputs.

use crate::config::{ClassSource, PipelineConfig};
use crate::error::PipelineError;
use crate::files::{self, require, LabelRow, PredictionRow, Split};
use rayon::prelude::*;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use techimpact_core::corpus::{
    derive_thresholds, generate_synthetic, load_corpus, trajectory_pattern, ClassThresholds, Corpus, Horizon,
    ImpactClass, IngestMode, TrajectoryPattern,
};
use techimpact_core::eval::{
    compare_models, confusion_matrix, metric_rows, metrics_json, overall_metrics, stratified_kfold_by,
    write_metrics_csv, ConfusionMatrix3,
};
use techimpact_core::explain::{
    beeswarm_svg, explain_instances, global_importance, group_summary, write_attributions_csv, write_summary_csv,
    AttributionTarget, BackgroundSet, FeatureGrouping, InstanceMeta, MtlTarget,
};
use techimpact_core::indicators::{extract_all, read_features_csv, write_features_csv, IndicatorContext};
use techimpact_core::mtl::{grid_search, train, train_stl, Dataset, GridResult, MtlModel, NetworkConfig, TrainConfig};
use techimpact_core::seed::derive_seed;
use techimpact_core::validate::{
    topic_impact_scores, validate_value_indicators, write_topic_csv, write_validation_csv, JtSettings, ValidateError,
};

/// Stage names in pipeline order. The first stage is `synth` or `ingest`
/// depending on the corpus source.
pub const STAGES: [&str; 11] = [
    "synth",
    "label",
    "features",
    "gridsearch",
    "train",
    "cv",
    "evaluate",
    "explain",
    "jt-test",
    "topic-score",
    "report",
];

pub enum StageStatus {
    Done(Vec<String>),
    Skipped(String),
}

pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: &'a Path,
}

impl Ctx<'_> {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.cfg.seed, stage)
    }
}

fn done(names: &[&str]) -> Result<StageStatus, PipelineError> {
    Ok(StageStatus::Done(names.iter().map(|s| s.to_string()).collect()))
}

pub fn synth(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "synth";
    let mut params = ctx.cfg.synth.clone().unwrap_or_default();
    params.seed = ctx.seed(S);
    params.domain_ipc_prefix = ctx.cfg.domain_ipc_prefix.clone();
    let corpus = generate_synthetic(&params).map_err(|e| PipelineError::data(S, e))?;
    corpus.write_jsonl(&ctx.path(files::CORPUS)).map_err(|e| PipelineError::stage(S, e))?;
    log::info!("synthesized {} patents", corpus.len());
    done(&[files::CORPUS])
}

pub fn ingest(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "ingest";
    let path = ctx.cfg.corpus_path.as_deref().ok_or_else(|| PipelineError::Config("ingest needs corpus_path".into()))?;
    let loaded = load_corpus(path, &ctx.cfg.domain_ipc_prefix, ctx.cfg.ingest_mode).map_err(|e| PipelineError::data(S, e))?;
    loaded.corpus.write_jsonl(&ctx.path(files::CORPUS)).map_err(|e| PipelineError::stage(S, e))?;
    let skipped: Vec<_> = loaded
        .skipped
        .iter()
        .map(|s| json!({"line": s.line, "id": s.id, "reason": s.reason}))
        .collect();
    files::write_json(S, &ctx.path(files::INGEST_REPORT), &json!({"n_records": loaded.corpus.len(), "skipped": skipped}))?;
    done(&[files::CORPUS, files::INGEST_REPORT])
}

fn load_snapshot(ctx: &Ctx, stage: &'static str) -> Result<Corpus, PipelineError> {
    require(stage, ctx.out, &[files::CORPUS])?;
    // the snapshot was validated on the way in, so strict mode is safe
    load_corpus(&ctx.path(files::CORPUS), &ctx.cfg.domain_ipc_prefix, IngestMode::Strict)
        .map(|l| l.corpus)
        .map_err(|e| PipelineError::data(stage, e))
}

pub fn label(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "label";
    let corpus = load_snapshot(ctx, S)?;
    let end = corpus.observation_end().ok_or_else(|| PipelineError::data(S, "empty corpus"))?;
    let mut thresholds = ClassThresholds::published();
    for h in Horizon::ALL {
        let t = derive_thresholds(&corpus, h, ctx.cfg.threshold_mode).map_err(|e| PipelineError::data(S, e))?;
        thresholds.set(h, t);
    }
    files::write_json(S, &ctx.path(files::THRESHOLDS), &thresholds)?;

    use chrono::Datelike;
    let first_year = corpus.records().map(|r| r.grant_year()).min().unwrap();
    let split = &ctx.cfg.split;
    let focal_first = split.focal_first_year.unwrap_or(first_year);
    let focal_last = split.focal_last_year.unwrap_or((end.year() - Horizon::Long.years() as i32).max(first_year));
    let test_year = split.test_year.unwrap_or(focal_last);
    if !(focal_first <= test_year && test_year <= focal_last) {
        return Err(PipelineError::Config(format!(
            "test year {test_year} outside focal years {focal_first}..={focal_last}"
        )));
    }

    let mut rows = Vec::with_capacity(corpus.len());
    for rec in corpus.records() {
        let mut counts = [0u32; 3];
        let mut classes = [None; 3];
        for h in Horizon::ALL {
            let c = corpus.forward_citation_count(&rec.id, h).map_err(|e| PipelineError::data(S, e))?;
            counts[h.index()] = c;
            if corpus.window_complete(&rec.id, h, end).map_err(|e| PipelineError::data(S, e))? {
                classes[h.index()] = Some(thresholds.get(h).classify(c));
            }
        }
        let year = rec.grant_year();
        let split = if year == test_year {
            Split::Test
        } else if (focal_first..test_year).contains(&year) {
            Split::Train
        } else {
            Split::None
        };
        let pattern = match classes {
            [Some(s), Some(m), Some(l)] => Some(trajectory_pattern(s, m, l)),
            _ => None,
        };
        rows.push(LabelRow {
            patent_id: rec.id.clone(),
            grant_year: year,
            split,
            count_short: counts[0],
            count_mid: counts[1],
            count_long: counts[2],
            class_short: classes[0],
            class_mid: classes[1],
            class_long: classes[2],
            pattern,
        });
    }
    files::write_csv(S, &ctx.path(files::LABELS), &rows)?;

    let focal: Vec<&LabelRow> = rows.iter().filter(|r| r.split != Split::None).collect();
    let mut per_horizon = serde_json::Map::new();
    for h in Horizon::ALL {
        let mut counts = [0usize; 3];
        let mut excluded = 0;
        for r in &focal {
            match r.classes()[h.index()] {
                Some(c) => counts[c.index()] += 1,
                None => excluded += 1,
            }
        }
        let n: usize = counts.iter().sum();
        if excluded > 0 {
            log::warn!("{h}: {excluded} focal patents lack a complete citation window and are excluded");
        }
        let share = |k: usize| if n == 0 { 0.0 } else { counts[k] as f64 / n as f64 };
        per_horizon.insert(
            h.name().into(),
            json!({
                "labelled": n,
                "excluded_incomplete_window": excluded,
                "counts": {"MT": counts[0], "VT": counts[1], "BT": counts[2]},
                "shares": {"MT": share(0), "VT": share(1), "BT": share(2)},
            }),
        );
    }
    let mut patterns = BTreeMap::new();
    for r in &focal {
        if let Some(p) = r.pattern {
            *patterns.entry(p.name()).or_insert(0usize) += 1;
        }
    }
    let summary = json!({
        "threshold_mode": ctx.cfg.threshold_mode,
        "observation_end": end.to_string(),
        "focal_years": [focal_first, focal_last],
        "test_year": test_year,
        "n_train": rows.iter().filter(|r| r.split == Split::Train).count(),
        "n_test": rows.iter().filter(|r| r.split == Split::Test).count(),
        "horizons": per_horizon,
        "patterns": patterns,
    });
    files::write_json(S, &ctx.path(files::LABEL_SUMMARY), &summary)?;
    done(&[files::THRESHOLDS, files::LABELS, files::LABEL_SUMMARY])
}

pub fn features(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "features";
    let corpus = load_snapshot(ctx, S)?;
    let ic = IndicatorContext::with_home_country(&corpus, &ctx.cfg.home_country);
    let rows = extract_all(&corpus, &ic);
    let imputed = rows.iter().filter(|r| r.cycle_time_imputed).count();
    if imputed > 0 {
        log::info!("{imputed} patents without backward citations get cycle time 0");
    }
    files::write_with(S, &ctx.path(files::FEATURES), |w| write_features_csv(w, &rows))?;
    done(&[files::FEATURES])
}

struct Labelled {
    ids: Vec<String>,
    splits: Vec<Split>,
    data: Dataset,
}

/// Focal patents with their raw features and labels, in id order.
fn load_labelled(ctx: &Ctx, stage: &'static str, keep: &[Split]) -> Result<Labelled, PipelineError> {
    require(stage, ctx.out, &[files::LABELS, files::FEATURES])?;
    let labels: Vec<LabelRow> = files::read_csv(stage, &ctx.path(files::LABELS))?;
    let text = std::fs::read_to_string(ctx.path(files::FEATURES)).map_err(|e| PipelineError::data(stage, e))?;
    let feats: BTreeMap<String, Vec<f64>> = read_features_csv(&text)
        .map_err(|e| PipelineError::data(stage, e))?
        .into_iter()
        .map(|(id, v)| (id, v.0.to_vec()))
        .collect();
    let (mut ids, mut splits, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in labels.into_iter().filter(|r| keep.contains(&r.split)) {
        let v = feats
            .get(&r.patent_id)
            .ok_or_else(|| PipelineError::data(stage, format!("no features for {}", r.patent_id)))?;
        x.push(v.clone());
        y.push(r.classes());
        splits.push(r.split);
        ids.push(r.patent_id);
    }
    Ok(Labelled { ids, splits, data: Dataset::new(x, y) })
}

/// Network and training configs with seeds from the `train` stage seed,
/// taking the grid-search winner when one is on disk.
fn model_configs(ctx: &Ctx, stage: &'static str) -> Result<(NetworkConfig, TrainConfig), PipelineError> {
    let (mut net, mut tc) = (ctx.cfg.network.clone(), ctx.cfg.train.clone());
    if ctx.cfg.grid.is_some() && ctx.path(files::GRIDSEARCH).is_file() {
        let g: GridResult = files::read_json(stage, &ctx.path(files::GRIDSEARCH))?;
        net = g.best_network;
        tc = g.best_train;
    }
    let s = ctx.seed("train");
    net.seed = derive_seed(s, "network");
    tc.seed = derive_seed(s, "optimizer");
    Ok((net, tc))
}

fn mtl_err(stage: &'static str, e: techimpact_core::mtl::MtlError) -> PipelineError {
    use techimpact_core::mtl::MtlError::*;
    match e {
        InvalidConfig(_) | InvalidTrainConfig(_) | Grid(_) => PipelineError::Config(e.to_string()),
        TooFewInstances { .. } | InputDim { .. } | NonFiniteInput(_) | MissingLabel { .. } => PipelineError::data(stage, e),
        _ => PipelineError::stage(stage, e),
    }
}

pub fn gridsearch(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "gridsearch";
    let Some(space) = &ctx.cfg.grid else {
        return Ok(StageStatus::Skipped("no grid configured".into()));
    };
    let l = load_labelled(ctx, S, &[Split::Train])?;
    let (mut net, mut tc) = (ctx.cfg.network.clone(), ctx.cfg.train.clone());
    let s = ctx.seed("train");
    net.seed = derive_seed(s, "network");
    tc.seed = derive_seed(s, "optimizer");
    let result = grid_search(space, &l.data, &net, &tc, ctx.cfg.grid_folds, ctx.seed(S)).map_err(|e| mtl_err(S, e))?;
    files::write_json(S, &ctx.path(files::GRIDSEARCH), &result)?;
    done(&[files::GRIDSEARCH])
}

fn save_model(stage: &'static str, path: &Path, m: &MtlModel) -> Result<(), PipelineError> {
    files::write_text(stage, path, &(m.to_json() + "\n"))
}

fn load_model(stage: &'static str, path: &Path) -> Result<MtlModel, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))?;
    MtlModel::from_json(&text).map_err(|e| PipelineError::data(stage, e))
}

pub fn train_models(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "train";
    let l = load_labelled(ctx, S, &[Split::Train])?;
    let (net, tc) = model_configs(ctx, S)?;
    // job 0 is the multi-task model, jobs 1..=3 the single-task ones
    let models: Vec<MtlModel> = (0..4usize)
        .into_par_iter()
        .map(|job| match job {
            0 => MtlModel::init(net.clone()).and_then(|m| train(m, &l.data, &tc)),
            j => train_stl(Horizon::ALL[j - 1], &l.data, &net, &tc),
        })
        .collect::<Result<_, _>>()
        .map_err(|e| mtl_err(S, e))?;
    save_model(S, &ctx.path(files::MODEL), &models[0])?;
    let mut outputs = vec![files::MODEL.to_string()];
    for (h, m) in Horizon::ALL.iter().zip(&models[1..]) {
        let name = files::stl_model(*h);
        save_model(S, &ctx.path(&name), m)?;
        outputs.push(name);
    }
    let log_rows: Vec<_> = models[0]
        .history
        .iter()
        .map(|e| {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            [
                e.epoch.to_string(),
                e.train_loss_total.to_string(),
                e.val_loss_total.to_string(),
                f(e.train_loss[0]),
                f(e.train_loss[1]),
                f(e.train_loss[2]),
                f(e.val_loss[0]),
                f(e.val_loss[1]),
                f(e.val_loss[2]),
            ]
        })
        .collect();
    files::write_with(S, &ctx.path(files::TRAINING_LOG), |w| {
        writeln!(w, "epoch,train_loss_total,val_loss_total,train_loss_short,train_loss_mid,train_loss_long,val_loss_short,val_loss_mid,val_loss_long")?;
        for r in &log_rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    })?;
    outputs.push(files::TRAINING_LOG.to_string());
    log::info!("multi-task model kept epoch {:?}", models[0].best_epoch);
    Ok(StageStatus::Done(outputs))
}


pub fn cv(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "cv";
    let k = ctx.cfg.cv_folds;
    if k == 0 {
        return Ok(StageStatus::Skipped("cv_folds = 0".into()));
    }
    let l = load_labelled(ctx, S, &[Split::Train])?;
    let (net, tc) = model_configs(ctx, S)?;
    let strata: Vec<usize> = (0..l.data.len()).map(|i| l.data.strat_label(i).map_or(3, |c| c.index())).collect();
    let folds = stratified_kfold_by(&strata, k, ctx.seed(S)).map_err(|e| PipelineError::data(S, e))?;
    let per_fold: Vec<BTreeMap<Horizon, ConfusionMatrix3>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (tr, te) = folds.split(f);
            let m = train(MtlModel::init(net.clone())?, &l.data.subset(&tr), &tc)?;
            m.confusion_matrices(&l.data.subset(&te))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| mtl_err(S, e))?;
    let mut rows = Vec::new();
    let mut sums = Vec::new();
    for (f, cms) in per_fold.iter().enumerate() {
        let mut sum = 0.0;
        for (h, cm) in cms {
            let o = overall_metrics(cm);
            sum += o.macro_avg.mcc;
            rows.push(json!({"fold": f, "horizon": h.name(), "n_test": cm.n(), "macro_mcc": o.macro_avg.mcc, "multiclass_mcc": o.multiclass_mcc}));
        }
        sums.push(sum);
    }
    files::write_with(S, &ctx.path(files::CV), |w| {
        writeln!(w, "fold,horizon,n_test,macro_mcc,multiclass_mcc")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r["fold"], r["horizon"].as_str().unwrap(), r["n_test"], r["macro_mcc"], r["multiclass_mcc"])?;
        }
        Ok(())
    })?;
    let mean = sums.iter().sum::<f64>() / k as f64;
    files::write_json(
        S,
        &ctx.path(files::CV_SUMMARY),
        &json!({"k": k, "downgraded": folds.downgraded, "fold_sum_macro_mcc": sums, "mean_sum_macro_mcc": mean}),
    )?;
    done(&[files::CV, files::CV_SUMMARY])
}

fn cms_from_predictions(
    rows: &[PredictionRow],
    pick: impl Fn(&PredictionRow, Horizon) -> Option<ImpactClass>,
) -> BTreeMap<Horizon, ConfusionMatrix3> {
    let mut out = BTreeMap::new();
    for h in Horizon::ALL {
        let pairs: Vec<_> = rows
            .iter()
            .filter(|r| r.split == Split::Test)
            .filter_map(|r| Some((r.actual(h)?, pick(r, h)?)))
            .collect();
        if let Ok(cm) = confusion_matrix(&pairs) {
            out.insert(h, cm);
        }
    }
    out
}

/// Writes `predictions.csv` from the trained models unless a predictions
/// file is supplied, then scores the test split.
pub fn evaluate(ctx: &Ctx, predictions: Option<&Path>) -> Result<StageStatus, PipelineError> {
    const S: &str = "evaluate";
    let mut outputs = Vec::new();
    let rows: Vec<PredictionRow> = match predictions {
        Some(p) => files::read_csv(S, p)?,
        None => {
            let mut needed = vec![files::MODEL.to_string()];
            needed.extend(Horizon::ALL.map(files::stl_model));
            require(S, ctx.out, &needed.iter().map(String::as_str).collect::<Vec<_>>())?;
            let l = load_labelled(ctx, S, &[Split::Train, Split::Test])?;
            let mtl = load_model(S, &ctx.path(files::MODEL))?.predict_rows(&l.data.x).map_err(|e| mtl_err(S, e))?;
            let mut stl = vec![[None; 3]; l.data.len()];
            for h in Horizon::ALL {
                let p = load_model(S, &ctx.path(&files::stl_model(h)))?.predict_rows(&l.data.x).map_err(|e| mtl_err(S, e))?;
                for (dst, src) in stl.iter_mut().zip(p) {
                    dst[h.index()] = src[h.index()];
                }
            }
            let rows: Vec<PredictionRow> = (0..l.data.len())
                .map(|i| {
                    let y = l.data.y[i];
                    PredictionRow {
                        patent_id: l.ids[i].clone(),
                        split: l.splits[i],
                        actual_short: y[0],
                        actual_mid: y[1],
                        actual_long: y[2],
                        mtl_short: mtl[i][0],
                        mtl_mid: mtl[i][1],
                        mtl_long: mtl[i][2],
                        stl_short: stl[i][0],
                        stl_mid: stl[i][1],
                        stl_long: stl[i][2],
                    }
                })
                .collect();
            files::write_csv(S, &ctx.path(files::PREDICTIONS), &rows)?;
            outputs.push(files::PREDICTIONS.to_string());
            rows
        }
    };
    let mtl = cms_from_predictions(&rows, |r, h| r.mtl(h));
    if mtl.is_empty() {
        return Err(PipelineError::data(S, "no labelled test predictions"));
    }
    let stl = cms_from_predictions(&rows, |r, h| r.stl(h));
    // always-majority baseline from the training split
    let majority: BTreeMap<Horizon, ImpactClass> = Horizon::ALL
        .iter()
        .map(|&h| {
            let mut c = [0usize; 3];
            for r in rows.iter().filter(|r| r.split == Split::Train) {
                if let Some(a) = r.actual(h) {
                    c[a.index()] += 1;
                }
            }
            let k = (0..3).max_by_key(|&k| (c[k], std::cmp::Reverse(k))).unwrap();
            (h, ImpactClass::ALL[k])
        })
        .collect();
    let base = cms_from_predictions(&rows, |_, h| Some(majority[&h]));

    let metric = metric_rows(&mtl);
    write_metrics_csv(&ctx.path(files::METRICS), &metric).map_err(|e| PipelineError::stage(S, e))?;
    let sum = |cms: &BTreeMap<Horizon, ConfusionMatrix3>, macro_: bool| -> f64 {
        cms.values()
            .map(|cm| {
                let o = overall_metrics(cm);
                if macro_ { o.macro_avg.mcc } else { o.multiclass_mcc }
            })
            .sum()
    };
    let confusion: BTreeMap<&str, _> = mtl.iter().map(|(h, cm)| (h.name(), cm.counts)).collect();
    let confusion_stl: BTreeMap<&str, _> = stl.iter().map(|(h, cm)| (h.name(), cm.counts)).collect();
    files::write_json(
        S,
        &ctx.path(files::METRICS_JSON),
        &json!({
            "rows": metrics_json(&metric),
            "confusion_mtl": confusion,
            "confusion_stl": confusion_stl,
            "sum_multiclass_mcc": sum(&mtl, false),
            "sum_macro_mcc": sum(&mtl, true),
            "stl_sum_multiclass_mcc": sum(&stl, false),
            "majority_baseline_sum_multiclass_mcc": sum(&base, false),
        }),
    )?;
    let comparison = compare_models(&mtl, &stl).map_err(|e| PipelineError::data(S, e))?;
    files::write_csv(S, &ctx.path(files::COMPARISON), &comparison)?;
    outputs.extend([files::METRICS, files::METRICS_JSON, files::COMPARISON].map(String::from));
    Ok(StageStatus::Done(outputs))
}

fn summary_stem(t: AttributionTarget, filter: &str) -> String {
    format!("summary_{}_{}_{}", t.horizon.name(), t.class.name().to_lowercase(), filter)
}

pub fn explain(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "explain";
    let settings = &ctx.cfg.explain;
    if !settings.enabled {
        return Ok(StageStatus::Skipped("explain disabled".into()));
    }
    require(S, ctx.out, &[files::MODEL, files::PREDICTIONS])?;
    let model = load_model(S, &ctx.path(files::MODEL))?;
    let l = load_labelled(ctx, S, &[Split::Train, Split::Test])?;
    let labels: Vec<LabelRow> = files::read_csv(S, &ctx.path(files::LABELS))?;
    let patterns: BTreeMap<&str, Option<TrajectoryPattern>> =
        labels.iter().map(|r| (r.patent_id.as_str(), r.pattern)).collect();
    let preds: Vec<PredictionRow> = files::read_csv(S, &ctx.path(files::PREDICTIONS))?;
    let preds: BTreeMap<&str, &PredictionRow> = preds.iter().map(|r| (r.patent_id.as_str(), r)).collect();

    let std_rows = |split: Split| -> Vec<(String, Vec<f64>)> {
        (0..l.data.len())
            .filter(|&i| l.splits[i] == split)
            .map(|i| (l.ids[i].clone(), model.prepare_input(&l.data.x[i])))
            .collect()
    };
    let train_rows: Vec<Vec<f64>> = std_rows(Split::Train).into_iter().map(|(_, x)| x).collect();
    let bg = BackgroundSet::sample(&train_rows, settings.background_size, derive_seed(ctx.seed(S), "background"))
        .map_err(|e| PipelineError::data(S, e))?;
    let test = std_rows(Split::Test);
    let instances: Vec<(String, Vec<f64>)> = if test.len() > settings.max_instances {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed(S), "instances"));
        let mut idx = rand::seq::index::sample(&mut rng, test.len(), settings.max_instances).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| test[i].clone()).collect()
    } else {
        test
    };
    let grouping = FeatureGrouping::indicators();
    let mut all_rows = Vec::new();
    let mut importance = Vec::new();
    let mut outputs = Vec::new();
    for &h in &settings.horizons {
        if !model.tasks().contains(&h) {
            continue;
        }
        let target = AttributionTarget { horizon: h, class: settings.class };
        let value = MtlTarget::new(&model, target).map_err(|e| PipelineError::stage(S, e))?;
        let rows = explain_instances(&value, target, &instances, &bg, &grouping, settings.mode, derive_seed(ctx.seed(S), h.name()))
            .map_err(|e| PipelineError::stage(S, e))?;
        if rows.is_empty() {
            continue;
        }
        let ranking = global_importance(&rows, &grouping).map_err(|e| PipelineError::stage(S, e))?;
        for (rank, (g, v)) in ranking.iter().enumerate() {
            importance.push(format!("{},{},{},{},{}", h.name(), target.class.name(), rank + 1, g, v));
        }
        let meta: BTreeMap<String, InstanceMeta> = rows
            .iter()
            .map(|r| {
                let id = r.instance_id.as_str();
                let pattern = patterns.get(id).copied().flatten().unwrap_or(TrajectoryPattern::Other);
                let predicted = preds.get(id).and_then(|p| p.mtl(h)).unwrap_or(ImpactClass::MT);
                (r.instance_id.clone(), InstanceMeta { pattern, predicted })
            })
            .collect();
        for filter in &settings.filters {
            let data = group_summary(&rows, &meta, *filter, &grouping, settings.top_k).map_err(|e| PipelineError::stage(S, e))?;
            let stem = summary_stem(target, &filter.label());
            files::write_with(S, &ctx.path(&format!("{stem}.csv")), |w| write_summary_csv(w, &data))?;
            let title = format!("{} horizon, {} probability, {} ({} patents)", h.name(), target.class.name(), filter.label(), data.n_instances);
            files::write_text(S, &ctx.path(&format!("{stem}.svg")), &beeswarm_svg(&data, &title))?;
            outputs.push(format!("{stem}.csv"));
            outputs.push(format!("{stem}.svg"));
        }
        all_rows.extend(rows);
    }
    files::write_with(S, &ctx.path(files::ATTRIBUTIONS), |w| write_attributions_csv(w, &all_rows, &grouping))?;
    files::write_with(S, &ctx.path(files::IMPORTANCE), |w| {
        writeln!(w, "horizon,class,rank,group,mean_abs_phi")?;
        for line in &importance {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    outputs.push(files::ATTRIBUTIONS.into());
    outputs.push(files::IMPORTANCE.into());
    Ok(StageStatus::Done(outputs))
}

fn classes_for(
    preds: &[PredictionRow],
    h: Horizon,
    source: ClassSource,
    splits: &[Split],
) -> BTreeMap<String, ImpactClass> {
    preds
        .iter()
        .filter(|r| splits.contains(&r.split))
        .filter_map(|r| {
            let c = match source {
                ClassSource::Predicted => r.mtl(h),
                ClassSource::Actual => r.actual(h),
            }?;
            Some((r.patent_id.clone(), c))
        })
        .collect()
}

pub fn jt_test(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "jt-test";
    let v = &ctx.cfg.validation;
    require(S, ctx.out, &[files::CORPUS, files::PREDICTIONS])?;
    let corpus = load_snapshot(ctx, S)?;
    let preds: Vec<PredictionRow> = files::read_csv(S, &ctx.path(files::PREDICTIONS))?;
    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    for &h in &v.horizons {
        let classes = classes_for(&preds, h, v.class_source, &[Split::Test]);
        let settings = JtSettings { method: v.method, n_permutations: v.n_permutations, seed: derive_seed(ctx.seed(S), h.name()) };
        match validate_value_indicators(&corpus, &classes, h, &settings) {
            Ok(t) => tests.extend(t),
            Err(e @ ValidateError::EmptyClassGroup { .. }) | Err(e @ ValidateError::ZeroVariance) => {
                log::warn!("{h}: trend test skipped: {e}");
                skipped.push(json!({"horizon": h.name(), "reason": e.to_string()}));
            }
            Err(e) => return Err(PipelineError::data(S, e)),
        }
    }
    files::write_with(S, &ctx.path(files::VALIDATION), |w| write_validation_csv(w, &tests))?;
    files::write_json(
        S,
        &ctx.path(files::VALIDATION_JSON),
        &json!({"class_source": v.class_source, "method": v.method, "tests": tests, "skipped": skipped}),
    )?;
    done(&[files::VALIDATION, files::VALIDATION_JSON])
}

pub fn topic_score(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    const S: &str = "topic-score";
    let t = &ctx.cfg.topic;
    require(S, ctx.out, &[files::CORPUS, files::PREDICTIONS])?;
    let corpus = load_snapshot(ctx, S)?;
    let preds: Vec<PredictionRow> = files::read_csv(S, &ctx.path(files::PREDICTIONS))?;
    let classes = classes_for(&preds, t.horizon, t.class_source, &[Split::Train, Split::Test]);
    let table = topic_impact_scores(&corpus, &classes, &t.weights).map_err(|e| PipelineError::data(S, e))?;
    files::write_with(S, &ctx.path(files::TOPIC_SCORES), |w| write_topic_csv(w, &table))?;
    files::write_json(
        S,
        &ctx.path(files::TOPIC_SCORES_JSON),
        &json!({"horizon": t.horizon, "class_source": t.class_source, "weights": t.weights, "scores": table.pivot_json(), "cells": table.cells}),
    )?;
    done(&[files::TOPIC_SCORES, files::TOPIC_SCORES_JSON])
}

pub fn report(ctx: &Ctx) -> Result<StageStatus, PipelineError> {
    crate::report::write_report(ctx)?;
    done(&[files::REPORT])
}
