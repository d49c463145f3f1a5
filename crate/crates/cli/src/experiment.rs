//! The multi-seed update experiment: old, target and new models, merges,
//! baselines, and their dev-selected operating points.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bcwi_core::checkpoint::{Checkpoint, Provenance};
use bcwi_core::data::{self, build_add_classes, build_add_data, LabeledDataset, ScenarioData, ScenarioKind, ScenarioManifest, ScenarioSplit};
use bcwi_core::eval::{self, accuracy_on_classes, alpha_grid, select_alpha, sweep_alpha, EvalReport, EvalSets, TradeoffCurve};
use bcwi_core::fisher::{compute_fisher, FisherDiagonal};
use bcwi_core::merge::{align_fisher, align_old_head, bcwi, output_ensemble, soup};
use bcwi_core::model::{argmax, forward_probs, init_params, predict_all};
use bcwi_core::rng::stream_seed;
use bcwi_core::train::{train, Role, TrainConfig};
use bcwi_core::{FeaturizerConfig, ModelSpec, ParamVector, Regularizer, Sample};
use serde::{Deserialize, Serialize};

use crate::config::{BaselineConfig, BaselineKind, CorpusSource, ExperimentConfig, FisherData};
use crate::report;

pub fn load_corpus(source: &CorpusSource) -> Result<LabeledDataset> {
    Ok(match source {
        CorpusSource::Synthetic {
            num_classes,
            per_class,
            vocab_per_class,
            noise_rate,
            seed,
        } => data::synth_generate(*num_classes, *per_class, *vocab_per_class, *noise_rate, *seed)?,
        CorpusSource::Jsonl {
            path,
            text_field,
            label_field,
        } => data::load_jsonl(path, text_field, label_field).with_context(|| format!("loading {}", path.display()))?,
    })
}

pub fn build_scenario(cfg: &ExperimentConfig, corpus: &LabeledDataset, seed: u64) -> Result<ScenarioSplit> {
    let s = &cfg.scenario;
    Ok(match s.kind {
        ScenarioKind::AddData => build_add_data(corpus, s.sizes, seed)?,
        ScenarioKind::AddClasses => {
            let new: Vec<String> = if s.new_classes.is_empty() {
                let labels = corpus.labels();
                labels[labels.len().saturating_sub(s.num_new_classes)..].to_vec()
            } else {
                s.new_classes.clone()
            };
            build_add_classes(corpus, &new, s.sizes, seed)?
        }
    })
}

/// Everything needed to rebuild a scenario's featurized splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub source: CorpusSource,
    pub featurizer: FeaturizerConfig,
    pub manifest: ScenarioManifest,
}

impl ScenarioFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(bcwi_core::Error::from).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load(&self) -> Result<(ScenarioSplit, ScenarioData)> {
        let corpus = load_corpus(&self.source)?;
        let split = ScenarioSplit::from_manifest(&corpus, self.manifest.clone())?;
        let data = split.featurize(&self.featurizer)?;
        Ok((split, data))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub nfr: f64,
    pub positive_flip_rate: f64,
}

impl From<&EvalReport> for Metrics {
    fn from(r: &EvalReport) -> Self {
        Metrics {
            accuracy: r.accuracy,
            nfr: r.nfr,
            positive_flip_rate: r.positive_flip_rate,
        }
    }
}

/// One method's dev and test metrics at its selected setting (α, β or a
/// regularizer strength).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub setting: Option<f64>,
    pub dev: Metrics,
    pub test: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub kind: ScenarioKind,
    /// Dev accuracy a method must keep to be selected.
    pub threshold: f64,
    /// old, target, new, then merges and baselines in a fixed order.
    pub methods: Vec<MethodResult>,
    pub curves: BTreeMap<String, TradeoffCurve>,
    /// Add_Classes only: test accuracy on new-class examples along the BCWI
    /// curve, one entry per curve point.
    pub bcwi_new_class_acc: Option<Vec<f64>>,
    /// Add_Classes only: the old model's accuracy on new-class test examples.
    pub old_new_class_acc: Option<f64>,
}

impl SeedResult {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Trained models of one seed, kept for callers that need the weights.
pub struct SeedModels {
    pub data: ScenarioData,
    pub split: ScenarioSplit,
    pub old: ParamVector,
    pub old_aligned: ParamVector,
    pub target: ParamVector,
    /// `news[0]` is the new model; the rest are extra soup members.
    pub news: Vec<ParamVector>,
    pub fisher: FisherDiagonal,
}

fn role_seed(seed: u64, tag: &str) -> u64 {
    stream_seed(seed, tag)
}

fn with_seed(cfg: &TrainConfig, seed: u64, tag: &str) -> TrainConfig {
    cfg.with_seed(role_seed(seed, tag))
}

pub fn train_models(cfg: &ExperimentConfig, corpus: &LabeledDataset, seed: u64) -> Result<SeedModels> {
    let split = build_scenario(cfg, corpus, seed)?;
    let data = split.featurize(&cfg.featurizer)?;
    let spec = ModelSpec::new(data.input_dim, cfg.model.hidden_dim, data.num_classes, cfg.model.activation)?;
    let old_spec = spec.with_classes(data.num_old_classes);

    let old = train(
        &init_params(old_spec, cfg.pretrain_seed),
        &data,
        Role::Old,
        &with_seed(&cfg.train.old, seed, "old"),
        &Regularizer::None,
    )?;
    let target = train(
        &init_params(spec, cfg.pretrain_seed),
        &data,
        Role::Target,
        &with_seed(&cfg.train.target, seed, "target"),
        &Regularizer::None,
    )?;
    let old_aligned = align_old_head(&old, spec)?;
    let members = cfg.soup_sizes.iter().copied().max().unwrap_or(1).max(1);
    let news = (0..members)
        .map(|j| {
            train(
                &old_aligned,
                &data,
                Role::New,
                &with_seed(&cfg.train.new, seed, &format!("new/{j}")),
                &Regularizer::None,
            )
        })
        .collect::<bcwi_core::Result<Vec<_>>>()?;

    let fisher_data: Vec<Sample> = match cfg.fisher.data {
        FisherData::Old => data.old_data(),
        FisherData::Updated => data
            .updated_train()
            .into_iter()
            .chain(data.updated_dev())
            .filter(|(_, y)| *y < data.num_old_classes)
            .collect(),
    };
    let fisher = compute_fisher(&old, &fisher_data, cfg.fisher.normalization, cfg.fisher.epsilon_floor)?;
    let fisher = align_fisher(&fisher, spec)?;

    Ok(SeedModels {
        data,
        split,
        old,
        old_aligned,
        target,
        news,
        fisher,
    })
}

fn method(name: &str, setting: Option<f64>, (dev, test): (EvalReport, EvalReport)) -> MethodResult {
    MethodResult {
        method: name.to_string(),
        setting,
        dev: (&dev).into(),
        test: (&test).into(),
    }
}

fn baseline_regularizer(b: &BaselineConfig, strength: f64, m: &SeedModels) -> Regularizer {
    match b.method {
        BaselineKind::PriorWd => Regularizer::PriorWd { lambda: strength },
        BaselineKind::Ewc => Regularizer::Ewc {
            lambda: strength,
            fisher: m.fisher.clone(),
            anchor: m.old_aligned.clone(),
        },
        BaselineKind::Mixout => Regularizer::Mixout { p: strength },
        BaselineKind::Distill => Regularizer::Distill {
            lambda: strength,
            focal_boost: b.focal_boost,
            teacher: m.old.clone(),
        },
        BaselineKind::BiasOnly => Regularizer::BiasOnly,
    }
}

/// Runs one seed end to end. When `out` is given, writes the seed's
/// artifacts there.
pub fn run_seed(cfg: &ExperimentConfig, corpus: &LabeledDataset, seed: u64, out: Option<&Path>) -> Result<SeedResult> {
    let m = train_models(cfg, corpus, seed)?;
    let data = &m.data;
    let retention = cfg.retention();
    let sets = EvalSets::new(&m.old, data.updated_dev(), data.test.clone())?;

    let old_r = method("old", None, sets.reports(&m.old)?);
    let target_r = method("target", None, sets.reports(&m.target)?);
    let new_r = method("new", None, sets.reports(&m.news[0])?);
    let (old_dev, new_dev) = (old_r.dev.accuracy, new_r.dev.accuracy);
    let threshold = eval::accuracy_threshold(old_dev, new_dev, retention);
    let mut methods = vec![old_r, target_r, new_r];
    let mut curves = BTreeMap::new();

    let mut merge_row = |name: String, curve: TradeoffCurve, merged_at: &dyn Fn(f64) -> Result<ParamVector>| -> Result<()> {
        let alpha = select_alpha(&curve, old_dev, new_dev, retention);
        methods.push(method(&name, Some(alpha), sets.reports(&merged_at(alpha)?)?));
        curves.insert(name, curve);
        Ok(())
    };

    let new = &m.news[0];
    let curve = sweep_alpha(&m.old_aligned, new, None, &sets, cfg.alpha_step)?;
    merge_row("bcwi".into(), curve, &|a| Ok(bcwi(a, &m.old_aligned, new)?))?;

    let curve = sweep_alpha(&m.old_aligned, new, Some(&m.fisher), &sets, cfg.alpha_step)?;
    merge_row("fisher_bcwi".into(), curve, &|a| {
        Ok(bcwi_core::merge::fisher_bcwi(a, &m.fisher, &m.old_aligned, new)?)
    })?;

    for &size in &cfg.soup_sizes {
        let souped = soup(&m.news[..size])?;
        let curve = sweep_alpha(&m.old_aligned, &souped, None, &sets, cfg.alpha_step)?;
        merge_row(format!("soup_bcwi_m{size}"), curve, &|a| Ok(bcwi(a, &m.old_aligned, &souped)?))?;
    }

    methods.push(output_ensemble_row(&m, &sets, cfg.alpha_step, threshold)?);

    for b in &cfg.baselines {
        methods.push(baseline_row(cfg, b, &m, &sets, seed, threshold)?);
    }

    let (bcwi_new_class_acc, old_new_class_acc) = if data.num_classes > data.num_old_classes {
        let new_classes: Vec<usize> = (data.num_old_classes..data.num_classes).collect();
        let gold = sets.test_gold();
        let on_new = |preds: &[usize]| accuracy_on_classes(preds, &gold, &new_classes).unwrap_or(0.0);
        let curve_acc = alpha_grid(cfg.alpha_step)?
            .into_iter()
            .map(|a| Ok(on_new(&predict_all(&bcwi(a, &m.old_aligned, new)?, &data.test)?)))
            .collect::<Result<Vec<_>>>()?;
        (Some(curve_acc), Some(on_new(&sets.old_test_preds)))
    } else {
        (None, None)
    };

    let result = SeedResult {
        seed,
        kind: m.split.kind,
        threshold,
        methods,
        curves,
        bcwi_new_class_acc,
        old_new_class_acc,
    };
    if let Some(dir) = out {
        write_seed(cfg, &m, &result, dir)?;
    }
    Ok(result)
}

fn output_ensemble_row(m: &SeedModels, sets: &EvalSets, step: f64, threshold: f64) -> Result<MethodResult> {
    let new = &m.news[0];
    let extra = new.spec().num_classes - m.old.spec().num_classes;
    let probs = |set: &[Sample]| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        set.iter()
            .map(|(x, _)| Ok((forward_probs(&m.old, x)?, forward_probs(new, x)?)))
            .collect()
    };
    let (dev_p, test_p) = (probs(&sets.dev)?, probs(&sets.test)?);
    let preds = |ps: &[(Vec<f64>, Vec<f64>)], beta: f64| -> Result<Vec<usize>> {
        ps.iter()
            .map(|(po, pn)| Ok(argmax(&output_ensemble(beta, po, pn, extra)?)))
            .collect()
    };
    let mut best = 0.0;
    for beta in alpha_grid(step)? {
        if sets.report_dev(&preds(&dev_p, beta)?)?.accuracy + 1e-12 >= threshold {
            best = beta;
        }
    }
    let dev = sets.report_dev(&preds(&dev_p, best)?)?;
    let test = sets.report_test(&preds(&test_p, best)?)?;
    Ok(method("output_ensemble", Some(best), (dev, test)))
}

fn baseline_row(cfg: &ExperimentConfig, b: &BaselineConfig, m: &SeedModels, sets: &EvalSets, seed: u64, threshold: f64) -> Result<MethodResult> {
    let strengths: Vec<Option<f64>> = if b.method == BaselineKind::BiasOnly {
        vec![None]
    } else {
        b.strengths.iter().copied().map(Some).collect()
    };
    // same shuffling stream as the vanilla new model
    let train_cfg = with_seed(&cfg.train.new, seed, "new/0");
    let mut runs = Vec::with_capacity(strengths.len());
    for s in &strengths {
        let reg = baseline_regularizer(b, s.unwrap_or(0.0), m);
        let model = train(&m.old_aligned, &m.data, Role::New, &train_cfg, &reg)?;
        runs.push(sets.reports(&model)?);
    }
    let dev_accs: Vec<f64> = runs.iter().map(|(d, _)| d.accuracy).collect();
    let pick = eval::select_strongest(&dev_accs, threshold).unwrap_or(0);
    let reports = runs.swap_remove(pick);
    Ok(method(b.method.name(), strengths[pick], reports))
}

fn provenance(cfg: &ExperimentConfig, role: &str, seed: u64) -> Provenance {
    Provenance {
        role: role.to_string(),
        seed,
        config_hash: cfg.hash(),
    }
}

pub fn scenario_file(cfg: &ExperimentConfig, split: &ScenarioSplit) -> ScenarioFile {
    ScenarioFile {
        source: cfg.scenario.source.clone(),
        featurizer: cfg.featurizer,
        manifest: split.manifest().clone(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("config.json"), cfg.to_json_pretty() + "\n").with_context(|| format!("writing config in {}", dir.display()))
}

fn write_seed(cfg: &ExperimentConfig, m: &SeedModels, result: &SeedResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let seed = result.seed;
    if cfg.save_checkpoints {
        Checkpoint::from_params(m.old.clone(), provenance(cfg, "old", seed)).write(&dir.join("old.bcwi"))?;
        Checkpoint::from_params(m.target.clone(), provenance(cfg, "target", seed)).write(&dir.join("target.bcwi"))?;
        Checkpoint::from_params(m.news[0].clone(), provenance(cfg, "new", seed)).write(&dir.join("new.bcwi"))?;
        Checkpoint::from_fisher(&m.fisher, provenance(cfg, "fisher", seed)).write(&dir.join("fisher.bcwi"))?;
    }
    write_json(&dir.join("scenario.json"), &scenario_file(cfg, &m.split))?;
    for (name, curve) in &result.curves {
        std::fs::write(dir.join(format!("curve_{name}.csv")), curve.to_csv())?;
    }
    write_json(&dir.join("result.json"), result)?;
    write_config(cfg, dir)
}

/// Runs every seed on a worker pool, then writes the cross-seed summary.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<SeedResult>> {
    use rayon::prelude::*;

    let corpus = load_corpus(&cfg.scenario.source)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building the worker pool")?;
    let seeds: Vec<u64> = cfg.seeds().collect();
    let seed_dir = |s: u64| -> Option<PathBuf> { out.map(|d| d.join(format!("seed_{s:03}"))) };
    let results = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_seed(cfg, &corpus, s, seed_dir(s).as_deref()).with_context(|| format!("seed {s}")))
            .collect::<Result<Vec<_>>>()
    })?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), report::summary_csv(&results)?)?;
        write_config(cfg, dir)?;
    }
    Ok(results)
}
