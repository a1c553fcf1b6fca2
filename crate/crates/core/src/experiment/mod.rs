//! End-to-end comparison runs: load or synthesize data, split once, fit the
//! normalization on the training rows, train every configured model on the
//! same split, and evaluate each on both splits in original units.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, NormalizationSpec, Provenance, SplitIndices};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport, OutputSeries, Stage};
use crate::network::{NetworkSpec, ParameterVector};
use crate::par::Execution;
use crate::pso::PsoConfig;
use crate::trainers::{self, BackpropConfig, Method, SavedModel, TrainObjective, TrainedModel};

mod config;
mod report;

pub use config::{load_config, parse_config, write_config};
pub use report::{emit_reports, load_result, write_repeat_summary};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const PRESET_ARCHITECTURE: [usize; 4] = [3, 6, 2, 3];

/// Swarm size and iteration budget of the three swarm-trained models in the
/// comparison, in table order.
pub const PRESET_SWARM_MODELS: [(usize, usize); 3] = [(100, 186), (200, 180), (300, 221)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSource {
    File(PathBuf),
    /// `seed = None` uses the run seed.
    Synthetic {
        seed: Option<u64>,
        noise_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelMethod {
    Ann(BackpropConfig),
    AnnPso(PsoConfig),
}

impl ModelMethod {
    pub fn tag(&self) -> Method {
        match self {
            ModelMethod::Ann(_) => Method::Ann,
            ModelMethod::AnnPso(_) => Method::AnnPso,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub label: String,
    pub method: ModelMethod,
    /// Training seed. `None` derives one from the run seed and the model's
    /// position; the seed inside `method` is ignored.
    pub seed: Option<u64>,
}

impl ModelConfig {
    pub fn ann(label: impl Into<String>, config: BackpropConfig) -> Self {
        ModelConfig {
            label: label.into(),
            method: ModelMethod::Ann(config),
            seed: None,
        }
    }

    pub fn ann_pso(label: impl Into<String>, config: PsoConfig) -> Self {
        ModelConfig {
            label: label.into(),
            method: ModelMethod::AnnPso(config),
            seed: None,
        }
    }

    /// Text for the "Structure" column: the architecture for backprop models,
    /// the swarm budget for swarm models.
    pub fn structure(&self, spec: &NetworkSpec) -> String {
        match &self.method {
            ModelMethod::Ann(_) => spec.to_string(),
            ModelMethod::AnnPso(c) => {
                format!("Max it.={} Swarm size={}", c.max_iterations, c.swarm_size)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub architecture: Vec<usize>,
    pub train_fraction: f64,
    pub seed: u64,
    /// `None` derives the split seed from `seed`.
    pub split_seed: Option<u64>,
    pub models: Vec<ModelConfig>,
    #[serde(skip)]
    pub execution: Execution,
}

/// SplitMix64 finalizer over `base` offset by `stream`; gives independent
/// seeds for the split and each model from one run seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SPLIT_STREAM: u64 = 0;

/// The four-model comparison: a backprop baseline and three swarm-trained
/// networks, all 3-6-2-3, on a 70/30 split of the default synthetic dataset.
pub fn paper_preset() -> ExperimentConfig {
    let mut models = vec![ModelConfig::ann("ANN", BackpropConfig::default())];
    for (swarm, iters) in PRESET_SWARM_MODELS {
        models.push(ModelConfig::ann_pso(
            format!("ANN-PSO-{swarm}"),
            PsoConfig::new(swarm, iters),
        ));
    }
    ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            seed: None,
            noise_scale: dataset::DEFAULT_NOISE_SCALE,
        },
        architecture: PRESET_ARCHITECTURE.to_vec(),
        train_fraction: DEFAULT_TRAIN_FRACTION,
        seed: DEFAULT_SEED,
        split_seed: None,
        models,
        execution: Execution::default(),
    }
}

impl ExperimentConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidConfig(
                "experiment needs at least one model".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        let spec = NetworkSpec::new(self.architecture.clone())?;
        if spec.input_size() != 3 || spec.output_size() != 3 {
            return Err(Error::InvalidSpec(format!(
                "architecture {spec} must have 3 inputs and 3 outputs"
            )));
        }
        for m in &self.models {
            match &m.method {
                ModelMethod::Ann(c) => c.validate(),
                ModelMethod::AnnPso(c) => c.validate(),
            }
            .map_err(|e| Error::ModelFailed {
                label: m.label.clone(),
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
            .unwrap_or_else(|| derive_seed(self.seed, SPLIT_STREAM))
    }

    pub fn model_seed(&self, index: usize) -> u64 {
        self.models[index]
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, 1 + index as u64))
    }

    /// Copy with every implicit seed made explicit, so that running it again
    /// under any run seed reproduces the same models and data.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.split_seed = Some(self.split_seed());
        if let DatasetSource::Synthetic { seed, .. } = &mut c.dataset {
            seed.get_or_insert(self.seed);
        }
        for i in 0..c.models.len() {
            let s = self.model_seed(i);
            let m = &mut c.models[i];
            m.seed = Some(s);
            match &mut m.method {
                ModelMethod::Ann(b) => b.seed = s,
                ModelMethod::AnnPso(p) => p.seed = s,
            }
        }
        c
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::File(path) => dataset::ingest(path),
            DatasetSource::Synthetic { seed, noise_scale } => {
                dataset::synthesize(seed.unwrap_or(self.seed), *noise_scale)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub label: String,
    pub method: Method,
    pub structure: String,
    pub seed: u64,
    pub fingerprint: String,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub training_curve: Vec<(usize, f64)>,
    pub train: MetricsReport,
    pub test: MetricsReport,
    /// Per output, in train-index order, original units.
    pub train_series: Vec<OutputSeries>,
    /// Per output, in test-index order, original units.
    pub test_series: Vec<OutputSeries>,
}

impl ModelResult {
    pub fn trained_model(&self) -> Result<TrainedModel> {
        let spec = NetworkSpec::new(self.layer_sizes.clone())?;
        Ok(TrainedModel {
            params: ParameterVector::new(spec.clone(), self.params.clone())?,
            spec,
            training_curve: self.training_curve.clone(),
            method: self.method,
            config_fingerprint: self.fingerprint.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Resolved configuration (all seeds explicit).
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub dataset_rows: usize,
    pub split: SplitIndices,
    pub normalization: NormalizationSpec,
    pub models: Vec<ModelResult>,
}

impl ExperimentResult {
    pub fn saved_model(&self, index: usize) -> Result<SavedModel> {
        Ok(SavedModel {
            model: self.models[index].trained_model()?,
            normalization: Some(self.normalization.clone()),
        })
    }
}

fn train_model(
    index: usize,
    config: &ExperimentConfig,
    objective: &TrainObjective,
) -> Result<TrainedModel> {
    let seed = config.model_seed(index);
    match &config.models[index].method {
        ModelMethod::Ann(b) => {
            trainers::train_backprop(objective, &BackpropConfig { seed, ..b.clone() })
        }
        ModelMethod::AnnPso(p) => {
            let mut p = p.clone().with_seed(seed);
            p.execution = config.execution;
            trainers::train_pso(objective, &p)
        }
    }
}

/// Runs every configured model on one shared split. The result depends only
/// on `config`, never on thread scheduling.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let data = config.load_dataset()?;
    run_on(config, &data)
}

/// [`run`] on an already loaded dataset.
pub fn run_on(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    config.validate()?;
    let spec = NetworkSpec::new(config.architecture.clone())?;
    let split = dataset::split(data.len(), config.train_fraction, config.split_seed())?;
    let norm = NormalizationSpec::fit_rows(data, &split.train)?;

    let train_rows = data.select(&split.train)?;
    let objective = TrainObjective::new(
        spec.clone(),
        train_rows
            .iter()
            .map(|s| norm.normalize_inputs(s))
            .collect(),
        train_rows
            .iter()
            .map(|s| norm.normalize_targets(s))
            .collect(),
    )?;

    let outcomes = config.execution.map(config.models.len(), |i| {
        let m = &config.models[i];
        let wrap = |e: Error| Error::ModelFailed {
            label: m.label.clone(),
            source: Box::new(e),
        };
        let model = train_model(i, config, &objective).map_err(wrap)?;
        let train =
            metrics::evaluate(&model, data, &split.train, &norm, Stage::Train).map_err(wrap)?;
        let test =
            metrics::evaluate(&model, data, &split.test, &norm, Stage::Test).map_err(wrap)?;
        Ok(ModelResult {
            label: m.label.clone(),
            method: model.method,
            structure: m.structure(&spec),
            seed: config.model_seed(i),
            fingerprint: model.config_fingerprint.clone(),
            layer_sizes: spec.layer_sizes().to_vec(),
            params: model.params.values().to_vec(),
            training_curve: model.training_curve,
            train: train.report,
            test: test.report,
            train_series: train.series,
            test_series: test.series,
        })
    });
    let models = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(ExperimentResult {
        config: config.resolved(),
        provenance: data.provenance.clone(),
        dataset_rows: data.len(),
        split,
        normalization: norm,
        models,
    })
}

/// Per-model test mean-RMSE across repeated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatSummary {
    pub seeds: Vec<u64>,
    pub labels: Vec<String>,
    /// `train_mean_rmse[run][model]`
    pub train_mean_rmse: Vec<Vec<f64>>,
    /// `test_mean_rmse[run][model]`
    pub test_mean_rmse: Vec<Vec<f64>>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl RepeatSummary {
    pub fn median_test_mean_rmse(&self, model: usize) -> f64 {
        median(
            &self
                .test_mean_rmse
                .iter()
                .map(|r| r[model])
                .collect::<Vec<_>>(),
        )
    }

    pub fn median_train_mean_rmse(&self, model: usize) -> f64 {
        median(
            &self
                .train_mean_rmse
                .iter()
                .map(|r| r[model])
                .collect::<Vec<_>>(),
        )
    }
}

/// Repeats the experiment with run seeds `config.seed + k`, `k < repeats`.
/// Single runs order stochastic trainers noisily; medians are steadier.
pub fn run_repeated(config: &ExperimentConfig, repeats: usize) -> Result<RepeatSummary> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..repeats as u64)
        .map(|k| config.seed.wrapping_add(k))
        .collect();
    let mut summary = RepeatSummary {
        seeds: seeds.clone(),
        labels: config.models.iter().map(|m| m.label.clone()).collect(),
        train_mean_rmse: Vec::new(),
        test_mean_rmse: Vec::new(),
    };
    for seed in seeds {
        let r = run(&config.clone().with_seed(seed))?;
        summary
            .train_mean_rmse
            .push(r.models.iter().map(|m| m.train.mean_rmse()).collect());
        summary
            .test_mean_rmse
            .push(r.models.iter().map(|m| m.test.mean_rmse()).collect());
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut c = paper_preset();
        c.models = vec![
            ModelConfig::ann(
                "ANN",
                BackpropConfig {
                    epochs: 200,
                    ..Default::default()
                },
            ),
            ModelConfig::ann_pso("PSO", PsoConfig::new(20, 15)),
        ];
        c
    }

    #[test]
    fn preset_matches_comparison_roster() {
        let p = paper_preset();
        assert_eq!(p.models.len(), 4);
        assert_eq!(p.architecture, vec![3, 6, 2, 3]);
        assert_eq!(
            NetworkSpec::new(p.architecture.clone())
                .unwrap()
                .parameter_count(),
            47
        );
        assert_eq!(p.train_fraction, 0.7);
        assert!(matches!(p.models[0].method, ModelMethod::Ann(_)));
        let budgets: Vec<(usize, usize)> = p.models[1..]
            .iter()
            .map(|m| match &m.method {
                ModelMethod::AnnPso(c) => (c.swarm_size, c.max_iterations),
                _ => panic!("expected swarm model"),
            })
            .collect();
        assert_eq!(budgets, vec![(100, 186), (200, 180), (300, 221)]);
        assert!(matches!(p.dataset, DatasetSource::Synthetic { .. }));
        let spec = NetworkSpec::new(p.architecture.clone()).unwrap();
        assert_eq!(p.models[0].structure(&spec), "3-6-2-3");
        assert_eq!(p.models[3].structure(&spec), "Max it.=221 Swarm size=300");
    }

    #[test]
    fn derived_seeds_differ() {
        let c = paper_preset();
        let seeds: std::collections::HashSet<u64> = (0..4)
            .map(|i| c.model_seed(i))
            .chain([c.split_seed()])
            .collect();
        assert_eq!(seeds.len(), 5);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn validation_errors() {
        let mut c = small_config();
        c.models.clear();
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.train_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.architecture = vec![3, 4, 2];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.models[1] = ModelConfig::ann_pso("bad", PsoConfig::new(1, 5));
        match c.validate() {
            Err(Error::ModelFailed { label, .. }) => assert_eq!(label, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn run_shares_split_and_is_deterministic() {
        let c = small_config();
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dataset_rows, 81);
        assert_eq!((a.split.train.len(), a.split.test.len()), (57, 24));
        for m in &a.models {
            assert_eq!(m.test_series.len(), 3);
            assert!(m.test_series.iter().all(|s| s.actual.len() == 24));
            assert!(m.train_series.iter().all(|s| s.actual.len() == 57));
        }
        let seq = run(&ExperimentConfig {
            execution: Execution::Sequential,
            ..c.clone()
        })
        .unwrap();
        assert_eq!(seq.models, a.models);
        assert_eq!(seq.split, a.split);
    }

    #[test]
    fn resolved_config_reproduces_under_other_run_seed() {
        let c = small_config().with_seed(7);
        let a = run(&c).unwrap();
        let resolved = a.config.clone();
        assert!(resolved.models.iter().all(|m| m.seed.is_some()));
        assert!(resolved.split_seed.is_some());
        let b = run(&resolved.clone().with_seed(8)).unwrap();
        assert_eq!(a.models, b.models);
        assert_eq!(a.split, b.split);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn failures_name_the_model() {
        let mut c = small_config();
        c.models[0] = ModelConfig::ann(
            "exploding",
            BackpropConfig {
                learning_rate: 1e308,
                epochs: 20,
                ..Default::default()
            },
        );
        match run(&c) {
            Err(Error::ModelFailed { label, .. }) => assert_eq!(label, "exploding"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn repeated_runs_collect_every_model() {
        let s = run_repeated(&small_config(), 2).unwrap();
        assert_eq!(s.seeds, vec![42, 43]);
        assert_eq!(s.test_mean_rmse.len(), 2);
        assert!(s.test_mean_rmse.iter().all(|r| r.len() == 2));
        assert!(s.median_test_mean_rmse(1).is_finite());
        assert!(run_repeated(&small_config(), 0).is_err());
    }
}
