//! TOML experiment files.
//!
//! ```toml
//! seed = 42
//! architecture = [3, 6, 2, 3]
//! train_fraction = 0.7
//!
//! [dataset]
//! source = "synthetic"      # or "file", with path = "data.csv"
//! noise_scale = 0.05
//!
//! [[model]]
//! method = "ANN"
//! learning_rate = 0.5
//! epochs = 5000
//!
//! [[model]]
//! method = "ANN-PSO"
//! swarm_size = 100
//! max_iterations = 186
//! ```
//!
//! Unknown keys and keys that do not apply to a model's method are rejected.
//! Relative dataset paths are resolved against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetSource, ExperimentConfig, ModelConfig, ModelMethod};
use crate::dataset::DEFAULT_NOISE_SCALE;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::pso::PsoConfig;
use crate::trainers::{BackpropConfig, Method};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    architecture: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset: Option<DatasetEntry>,
    #[serde(default, rename = "model")]
    models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SourceKind {
    Synthetic,
    File,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    source: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_scale: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init_scale: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    swarm_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inertia_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cognitive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    social: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    velocity_clamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost_threshold: Option<f64>,
}

impl ModelEntry {
    fn into_model(self, index: usize) -> Result<ModelConfig> {
        let who = || {
            format!(
                "model {} ({})",
                index + 1,
                self.label.as_deref().unwrap_or("unlabeled")
            )
        };
        let bad = |m: String| Error::InvalidConfig(format!("{}: {m}", who()));
        let method = self.method.ok_or_else(|| bad("missing `method`".into()))?;

        let ann_keys = [
            ("learning_rate", self.learning_rate.is_some()),
            ("epochs", self.epochs.is_some()),
            ("init_scale", self.init_scale.is_some()),
        ];
        let pso_keys = [
            ("swarm_size", self.swarm_size.is_some()),
            ("max_iterations", self.max_iterations.is_some()),
            ("inertia_weight", self.inertia_weight.is_some()),
            ("cognitive", self.cognitive.is_some()),
            ("social", self.social.is_some()),
            ("init_range", self.init_range.is_some()),
            ("velocity_clamp", self.velocity_clamp.is_some()),
            ("cost_threshold", self.cost_threshold.is_some()),
        ];
        let foreign = match method {
            Method::Ann => &pso_keys[..],
            Method::AnnPso => &ann_keys[..],
        };
        if let Some((key, _)) = foreign.iter().find(|(_, set)| *set) {
            return Err(bad(format!("`{key}` does not apply to method {method}")));
        }

        let (default_label, method) = match method {
            Method::Ann => {
                let d = BackpropConfig::default();
                let c = BackpropConfig {
                    learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
                    epochs: self.epochs.unwrap_or(d.epochs),
                    init_scale: self.init_scale.unwrap_or(d.init_scale),
                    seed: self.seed.unwrap_or(0),
                };
                ("ANN".to_string(), ModelMethod::Ann(c))
            }
            Method::AnnPso => {
                let swarm = self
                    .swarm_size
                    .ok_or_else(|| bad("ANN-PSO needs `swarm_size`".into()))?;
                let iters = self
                    .max_iterations
                    .ok_or_else(|| bad("ANN-PSO needs `max_iterations`".into()))?;
                let d = PsoConfig::new(swarm, iters);
                let c = PsoConfig {
                    inertia_weight: self.inertia_weight.unwrap_or(d.inertia_weight),
                    cognitive: self.cognitive.unwrap_or(d.cognitive),
                    social: self.social.unwrap_or(d.social),
                    init_range: self.init_range.unwrap_or(d.init_range),
                    velocity_clamp: self.velocity_clamp.unwrap_or(d.velocity_clamp),
                    cost_threshold: self.cost_threshold,
                    seed: self.seed.unwrap_or(0),
                    ..d
                };
                (format!("ANN-PSO-{swarm}"), ModelMethod::AnnPso(c))
            }
        };
        Ok(ModelConfig {
            label: self.label.unwrap_or(default_label),
            method,
            seed: self.seed,
        })
    }

    fn from_model(m: &ModelConfig) -> Self {
        let mut e = ModelEntry {
            label: Some(m.label.clone()),
            method: Some(m.method.tag()),
            seed: m.seed,
            ..Default::default()
        };
        match &m.method {
            ModelMethod::Ann(c) => {
                e.learning_rate = Some(c.learning_rate);
                e.epochs = Some(c.epochs);
                e.init_scale = Some(c.init_scale);
            }
            ModelMethod::AnnPso(c) => {
                e.swarm_size = Some(c.swarm_size);
                e.max_iterations = Some(c.max_iterations);
                e.inertia_weight = Some(c.inertia_weight);
                e.cognitive = Some(c.cognitive);
                e.social = Some(c.social);
                e.init_range = Some(c.init_range);
                e.velocity_clamp = Some(c.velocity_clamp);
                e.cost_threshold = c.cost_threshold;
            }
        }
        e
    }
}

/// Parses an experiment file. Relative dataset paths are joined onto
/// `base_dir` when given.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text)
        .map_err(|e| Error::InvalidConfig(e.message().to_string() + &span_hint(text, e.span())))?;

    let dataset = match file.dataset {
        None => DatasetSource::Synthetic {
            seed: None,
            noise_scale: DEFAULT_NOISE_SCALE,
        },
        Some(d) => match d.source {
            SourceKind::Synthetic => {
                if d.path.is_some() {
                    return Err(Error::InvalidConfig(
                        "dataset: `path` does not apply to a synthetic source".into(),
                    ));
                }
                DatasetSource::Synthetic {
                    seed: d.seed,
                    noise_scale: d.noise_scale.unwrap_or(DEFAULT_NOISE_SCALE),
                }
            }
            SourceKind::File => {
                if d.seed.is_some() || d.noise_scale.is_some() {
                    return Err(Error::InvalidConfig(
                        "dataset: `seed`/`noise_scale` do not apply to a file source".into(),
                    ));
                }
                let path = d.path.ok_or_else(|| {
                    Error::InvalidConfig("dataset: file source needs `path`".into())
                })?;
                let path = match base_dir {
                    Some(base) if path.is_relative() => base.join(path),
                    _ => path,
                };
                DatasetSource::File(path)
            }
        },
    };

    let models = file
        .models
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.into_model(i))
        .collect::<Result<Vec<_>>>()?;

    let config = ExperimentConfig {
        dataset,
        architecture: file
            .architecture
            .unwrap_or_else(|| super::PRESET_ARCHITECTURE.to_vec()),
        train_fraction: file.train_fraction.unwrap_or(super::DEFAULT_TRAIN_FRACTION),
        seed: file.seed.unwrap_or(super::DEFAULT_SEED),
        split_seed: file.split_seed,
        models,
        execution: Execution::default(),
    };
    config.validate()?;
    Ok(config)
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    span.map(|s| {
        let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
        format!(" (line {line})")
    })
    .unwrap_or_default()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent())
}

/// Serializes a configuration; [`parse_config`] reads it back unchanged.
pub fn write_config(config: &ExperimentConfig) -> Result<String> {
    let dataset = match &config.dataset {
        DatasetSource::File(p) => DatasetEntry {
            source: SourceKind::File,
            path: Some(p.clone()),
            seed: None,
            noise_scale: None,
        },
        DatasetSource::Synthetic { seed, noise_scale } => DatasetEntry {
            source: SourceKind::Synthetic,
            path: None,
            seed: *seed,
            noise_scale: Some(*noise_scale),
        },
    };
    let file = ConfigFile {
        seed: Some(config.seed),
        split_seed: config.split_seed,
        architecture: Some(config.architecture.clone()),
        train_fraction: Some(config.train_fraction),
        dataset: Some(dataset),
        models: config.models.iter().map(ModelEntry::from_model).collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::paper_preset;

    #[test]
    fn minimal_file() {
        let c = parse_config(
            "[[model]]\nmethod = \"ANN-PSO\"\nswarm_size = 10\nmax_iterations = 5\n",
            None,
        )
        .unwrap();
        assert_eq!(c.architecture, vec![3, 6, 2, 3]);
        assert_eq!(c.seed, 42);
        assert_eq!(c.models[0].label, "ANN-PSO-10");
        match &c.models[0].method {
            ModelMethod::AnnPso(p) => {
                assert_eq!((p.swarm_size, p.max_iterations), (10, 5));
                assert_eq!(p.inertia_weight, 0.729);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn preset_round_trips() {
        for c in [paper_preset(), paper_preset().resolved()] {
            let text = write_config(&c).unwrap();
            assert_eq!(parse_config(&text, None).unwrap(), c, "{text}");
        }
    }

    #[test]
    fn rejects_unknown_and_foreign_keys() {
        let err = parse_config("sed = 1\n[[model]]\nmethod = \"ANN\"\n", None).unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");

        let err = parse_config("[[model]]\nmethod = \"ANN\"\nswarm_size = 3\n", None).unwrap_err();
        assert!(err.to_string().contains("swarm_size"), "{err}");

        let err = parse_config(
            "[[model]]\nmethod = \"ANN-PSO\"\nswarm_size = 3\nmax_iterations = 2\nepochs = 9\n",
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");

        let err =
            parse_config("[[model]]\nmethod = \"ANN-PSO\"\nswarm_size = 3\n", None).unwrap_err();
        assert!(err.to_string().contains("max_iterations"), "{err}");

        assert!(parse_config("[[model]]\nmethod = \"SVM\"\n", None).is_err());
        assert!(parse_config("", None).is_err());
        assert!(parse_config(
            "[dataset]\nsource = \"file\"\n[[model]]\nmethod = \"ANN\"\n",
            None
        )
        .is_err());
        assert!(parse_config(
            "[dataset]\nsource = \"synthetic\"\nextra = 1\n[[model]]\nmethod = \"ANN\"\n",
            None
        )
        .is_err());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let c = parse_config(
            "[dataset]\nsource = \"file\"\npath = \"d.csv\"\n[[model]]\nmethod = \"ANN\"\n",
            Some(Path::new("/data/exp")),
        )
        .unwrap();
        assert_eq!(
            c.dataset,
            DatasetSource::File(PathBuf::from("/data/exp/d.csv"))
        );
    }
}
