//! Browser demo. Trains a small old, new and target model on the synthetic
//! corpus, then exposes the α trade-off curve, the weight-plane landscape and
//! single merges as JSON strings.

use bcwi_core::data::{build_add_classes, build_add_data, synth_generate, SplitSizes};
use bcwi_core::eval::{self, plane_scan, sweep_alpha, EvalSets, PlaneData, PlaneMetric, PlaneScan, TradeoffCurve};
use bcwi_core::fisher::{compute_fisher, DEFAULT_EPSILON_FLOOR};
use bcwi_core::merge::{align_fisher, align_old_head, bcwi, fisher_bcwi};
use bcwi_core::model::{init_params, predict_all};
use bcwi_core::train::{train, Role, TrainConfig};
use bcwi_core::{Activation, FeaturizerConfig, FisherDiagonal, ModelSpec, Normalization, ParamVector, Regularizer, Result, ScenarioData};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const HIDDEN_DIM: usize = 16;
const HASH_BUCKETS: usize = 256;
const STEP: f64 = 0.05;

#[derive(Serialize)]
pub struct SweepView {
    pub curve: TradeoffCurve,
    pub selected_alpha: f64,
    pub threshold: f64,
}

#[derive(Serialize)]
pub struct MergeView {
    pub alpha: f64,
    pub dev_acc: f64,
    pub dev_nfr: f64,
    pub test_acc: f64,
    pub test_nfr: f64,
    pub negative_flips: usize,
    pub n: usize,
}

#[wasm_bindgen]
pub struct Demo {
    data: ScenarioData,
    old: ParamVector,
    new: ParamVector,
    target: ParamVector,
    fisher: FisherDiagonal,
    sets: EvalSets,
}

impl Demo {
    pub fn build(seed: u64, add_classes: bool, noise_rate: f64) -> Result<Demo> {
        let corpus = synth_generate(4, 250, 100, noise_rate, seed)?;
        let sizes = SplitSizes {
            old_train: 300,
            new_train: if add_classes { 100 } else { 200 },
            old_dev: 100,
            new_dev: 50,
            test: 300,
        };
        let split = if add_classes {
            build_add_classes(&corpus, &corpus.labels()[3..], sizes, seed)?
        } else {
            build_add_data(&corpus, sizes, seed)?
        };
        let featurizer = FeaturizerConfig {
            hash_buckets: HASH_BUCKETS,
            ..FeaturizerConfig::default()
        };
        let data = split.featurize(&featurizer)?;
        let spec = ModelSpec::new(data.input_dim, HIDDEN_DIM, data.num_classes, Activation::Tanh)?;
        let full = TrainConfig {
            epochs: 15,
            ..TrainConfig::full()
        }
        .with_seed(seed);
        let update = TrainConfig {
            epochs: 6,
            ..TrainConfig::update()
        }
        .with_seed(seed + 1);

        let old = train(&init_params(spec.with_classes(data.num_old_classes), 0), &data, Role::Old, &full, &Regularizer::None)?;
        let target = train(&init_params(spec, 0), &data, Role::Target, &full, &Regularizer::None)?;
        let old = align_old_head(&old, spec)?;
        let new = train(&old, &data, Role::New, &update, &Regularizer::None)?;
        let fisher = compute_fisher(&old, &data.old_data(), Normalization::MeanOne, DEFAULT_EPSILON_FLOOR)?;
        let fisher = align_fisher(&fisher, spec)?;
        let sets = EvalSets::new(&old, data.updated_dev(), data.test.clone())?;
        Ok(Demo {
            data,
            old,
            new,
            target,
            fisher,
            sets,
        })
    }

    fn fisher_for(&self, use_fisher: bool) -> Option<&FisherDiagonal> {
        use_fisher.then_some(&self.fisher)
    }

    pub fn sweep_view(&self, use_fisher: bool, retention: f64) -> Result<SweepView> {
        let curve = sweep_alpha(&self.old, &self.new, self.fisher_for(use_fisher), &self.sets, STEP)?;
        let (old_dev, _) = self.sets.reports(&self.old)?;
        let (new_dev, _) = self.sets.reports(&self.new)?;
        let threshold = eval::accuracy_threshold(old_dev.accuracy, new_dev.accuracy, retention);
        Ok(SweepView {
            selected_alpha: eval::select_alpha_at(&curve, threshold),
            curve,
            threshold,
        })
    }

    pub fn landscape_view(&self, grid_n: usize, metric: PlaneMetric) -> Result<PlaneScan> {
        let data = PlaneData {
            train: self.data.updated_train(),
            test: self.data.test.clone(),
            old_test_preds: predict_all(&self.old, &self.data.test)?,
        };
        plane_scan(&self.old, &self.new, &self.target, grid_n, metric, &data)
    }

    pub fn merge_view(&self, alpha: f64, use_fisher: bool) -> Result<MergeView> {
        let merged = match self.fisher_for(use_fisher) {
            Some(f) => fisher_bcwi(alpha, f, &self.old, &self.new)?,
            None => bcwi(alpha, &self.old, &self.new)?,
        };
        let (dev, test) = self.sets.reports(&merged)?;
        Ok(MergeView {
            alpha,
            dev_acc: dev.accuracy,
            dev_nfr: dev.nfr,
            test_acc: test.accuracy,
            test_nfr: test.nfr,
            negative_flips: test.negative_flips(),
            n: test.n,
        })
    }
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, add_classes: bool, noise_rate: f64) -> std::result::Result<Demo, JsError> {
        Demo::build(seed.into(), add_classes, noise_rate).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Trade-off curve over α plus the dev-selected α, as JSON.
    pub fn sweep(&self, use_fisher: bool, retention: f64) -> std::result::Result<String, JsError> {
        to_js(self.sweep_view(use_fisher, retention))
    }

    /// Metric grid on the old/new/target plane, as JSON. `metric` is one of
    /// `train_loss`, `test_acc`, `test_nfr`.
    pub fn landscape(&self, grid_n: u32, metric: &str) -> std::result::Result<String, JsError> {
        let metric: PlaneMetric = metric.parse().map_err(|e: bcwi_core::Error| JsError::new(&e.to_string()))?;
        to_js(self.landscape_view(grid_n as usize, metric))
    }

    /// Metrics of the model merged at `alpha`, as JSON.
    pub fn merge(&self, alpha: f64, use_fisher: bool) -> std::result::Result<String, JsError> {
        to_js(self.merge_view(alpha, use_fisher))
    }
}
