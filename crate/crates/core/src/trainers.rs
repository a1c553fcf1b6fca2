//! Training a network's weights and biases.
//!
//! Two trainers minimize the same training-set error:
//!
//! - [`train_pso`] ("ANN-PSO") runs the particle swarm directly over the flat
//!   parameter vector, scoring each particle by [`TrainObjective::cost`].
//! - [`train_backprop`] ("ANN") is full-batch gradient descent on the mean
//!   squared error, with gradients from reverse accumulation.
//!
//! The swarm cost is the unweighted mean over outputs of per-output RMSE.
//! Backprop descends the MSE instead, which has the same minimizers and a
//! gradient that stays defined at zero error.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::NormalizationSpec;
use crate::error::{check_len, Error, Result};
use crate::network::{self, Activation, NetworkSpec, ParameterVector, Scratch};
use crate::pso::{self, PsoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ANN")]
    Ann,
    #[serde(rename = "ANN-PSO")]
    AnnPso,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ann => "ANN",
            Method::AnnPso => "ANN-PSO",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Loss {
    /// Mean over output dimensions of the per-output RMSE.
    #[default]
    MeanRmse,
}

/// Training inputs and targets (both normalized) for a fixed architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainObjective {
    spec: NetworkSpec,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    loss: Loss,
}

impl TrainObjective {
    /// Targets must lie strictly inside `(0, 1)`, the sigmoid's range.
    pub fn new(spec: NetworkSpec, inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_len("training targets", inputs.len(), targets.len())?;
        for (i, (x, t)) in inputs.iter().zip(&targets).enumerate() {
            if x.len() != spec.input_size() {
                return Err(Error::BatchRow {
                    index: i,
                    expected: spec.input_size(),
                    actual: x.len(),
                });
            }
            check_len("target row", spec.output_size(), t.len())?;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "training row {i} has a non-finite input"
                )));
            }
            if let Some(v) = t.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidConfig(format!(
                    "training row {i}: target {v} outside (0, 1)"
                )));
            }
        }
        Ok(TrainObjective {
            spec,
            inputs,
            targets,
            loss: Loss::MeanRmse,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn sum_squared_errors(&self, params: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::new(&self.spec);
        let mut sse = vec![0.0; self.spec.output_size()];
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            let y = network::forward_unchecked(&self.spec, params, x, &mut scratch);
            for ((acc, yk), tk) in sse.iter_mut().zip(y).zip(t) {
                let e = yk - tk;
                *acc += e * e;
            }
        }
        sse
    }

    /// Mean over outputs of per-output RMSE. `params` must have
    /// `parameter_count` entries.
    pub fn cost(&self, params: &[f64]) -> f64 {
        debug_assert_eq!(params.len(), self.spec.parameter_count());
        let n = self.len() as f64;
        let sse = self.sum_squared_errors(params);
        sse.iter().map(|s| (s / n).sqrt()).sum::<f64>() / sse.len() as f64
    }

    /// Mean squared error over all samples and outputs; the surrogate that
    /// backprop descends.
    pub fn mse(&self, params: &[f64]) -> f64 {
        let sse = self.sum_squared_errors(params);
        sse.iter().sum::<f64>() / (self.len() * self.spec.output_size()) as f64
    }

    fn check_params(&self, params: &ParameterVector) -> Result<()> {
        if params.spec() != &self.spec {
            return Err(Error::InvalidSpec(format!(
                "parameters are for {}, objective is {}",
                params.spec(),
                self.spec
            )));
        }
        Ok(())
    }

    /// SHA-256 over the architecture and the exact bits of every training
    /// value.
    fn data_digest(&self, hasher: &mut Sha256) {
        hasher.update(self.spec.to_string().as_bytes());
        for row in self.inputs.iter().chain(&self.targets) {
            for v in row {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
    }
}

pub fn objective_cost(obj: &TrainObjective, params: &ParameterVector) -> Result<f64> {
    obj.check_params(params)?;
    Ok(obj.cost(params.values()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackpropConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Initial weights and biases are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for BackpropConfig {
    fn default() -> Self {
        BackpropConfig {
            learning_rate: 0.5,
            epochs: 5000,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

impl BackpropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "init_scale must be > 0, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: NetworkSpec,
    pub params: ParameterVector,
    /// `(epoch or iteration, training cost)`; entry 0 is the starting point.
    pub training_curve: Vec<(usize, f64)>,
    pub method: Method,
    pub config_fingerprint: String,
}

fn fingerprint(method: Method, hyper: &str, obj: &TrainObjective) -> String {
    let mut h = Sha256::new();
    h.update(method.to_string().as_bytes());
    h.update(b"|");
    h.update(hyper.as_bytes());
    h.update(b"|");
    obj.data_digest(&mut h);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn pso_fingerprint_text(c: &PsoConfig) -> String {
    format!(
        "swarm_size={};max_iterations={};inertia_weight={:?};cognitive={:?};social={:?};\
         init_range={:?};velocity_clamp={:?};seed={};cost_threshold={:?}",
        c.swarm_size,
        c.max_iterations,
        c.inertia_weight,
        c.cognitive,
        c.social,
        c.init_range,
        c.velocity_clamp,
        c.seed,
        c.cost_threshold
    )
}

/// Particle swarm search over all weights and biases.
pub fn train_pso(obj: &TrainObjective, config: &PsoConfig) -> Result<TrainedModel> {
    let dim = obj.spec.parameter_count();
    let outcome = pso::optimize(config, dim, &|p: &[f64]| obj.cost(p))?;
    if outcome.non_finite_evaluations > 0 {
        log::warn!(
            "{} swarm evaluation(s) returned non-finite cost",
            outcome.non_finite_evaluations
        );
    }
    Ok(TrainedModel {
        spec: obj.spec.clone(),
        params: ParameterVector::new(obj.spec.clone(), outcome.best_position)?,
        training_curve: outcome.history,
        method: Method::AnnPso,
        config_fingerprint: fingerprint(Method::AnnPso, &pso_fingerprint_text(config), obj),
    })
}

/// Gradient of [`TrainObjective::mse`] with respect to every parameter, in
/// the canonical layout.
pub fn backprop_gradient(obj: &TrainObjective, params: &ParameterVector) -> Result<Vec<f64>> {
    obj.check_params(params)?;
    Ok(gradient_unchecked(obj, params.values()))
}

fn gradient_unchecked(obj: &TrainObjective, params: &[f64]) -> Vec<f64> {
    let spec = &obj.spec;
    let act = spec.activation();
    let transitions: Vec<(usize, usize, usize)> = spec.transitions().collect();
    let scale = 2.0 / (obj.len() * spec.output_size()) as f64;
    let mut grad = vec![0.0; params.len()];
    let mut delta = Vec::new();
    let mut prev_delta = Vec::new();

    for (x, t) in obj.inputs.iter().zip(&obj.targets) {
        let trace = network::trace_unchecked(spec, params, x);
        let out = trace.output();
        delta.clear();
        delta.extend(
            out.iter()
                .zip(t)
                .map(|(y, tk)| scale * (y - tk) * act.derivative_from_output(*y)),
        );

        for (l, &(n_in, n_out, off)) in transitions.iter().enumerate().rev() {
            let below = &trace.layers[l];
            let (w, _) = params[off..].split_at(n_in * n_out);
            let (gw, rest) = grad[off..].split_at_mut(n_in * n_out);
            let gb = &mut rest[..n_out];
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(below) {
                    *g += d * a;
                }
            }
            if l > 0 {
                prev_delta.clear();
                prev_delta.extend((0..n_in).map(|i| {
                    let s: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                    s * act.derivative_from_output(below[i])
                }));
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
    }
    grad
}

fn init_params(spec: &NetworkSpec, config: &BackpropConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.init_scale;
    (0..spec.parameter_count())
        .map(|_| rng.random_range(-s..=s))
        .collect()
}

/// Full-batch gradient descent from a seeded uniform initialization.
pub fn train_backprop(obj: &TrainObjective, config: &BackpropConfig) -> Result<TrainedModel> {
    config.validate()?;
    let mut params = init_params(&obj.spec, config);
    let mut curve = Vec::with_capacity(config.epochs + 1);
    curve.push((0, obj.cost(&params)));
    for epoch in 1..=config.epochs {
        let grad = gradient_unchecked(obj, &params);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
        let loss = obj.cost(&params);
        if !loss.is_finite() || !params.iter().all(|p| p.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        curve.push((epoch, loss));
    }
    let hyper = format!("{config:?}");
    Ok(TrainedModel {
        spec: obj.spec.clone(),
        params: ParameterVector::new(obj.spec.clone(), params)?,
        training_curve: curve,
        method: Method::Ann,
        config_fingerprint: fingerprint(Method::Ann, &hyper, obj),
    })
}

const MODEL_FORMAT: &str = "annpso-model";
const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    method: Method,
    layer_sizes: Vec<usize>,
    activation: Activation,
    config_fingerprint: String,
    params: Vec<f64>,
    training_curve: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<NormalizationSpec>,
}

/// A trained model plus, optionally, the normalization its inputs and
/// outputs were fitted with. Stored as TOML; floats use shortest round-trip
/// formatting so a save/load cycle is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: TrainedModel,
    pub normalization: Option<NormalizationSpec>,
}

impl SavedModel {
    pub fn to_text(&self) -> Result<String> {
        let m = &self.model;
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            method: m.method,
            layer_sizes: m.spec.layer_sizes().to_vec(),
            activation: m.spec.activation(),
            config_fingerprint: m.config_fingerprint.clone(),
            params: m.params.values().to_vec(),
            training_curve: m.training_curve.clone(),
            normalization: self.normalization.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format {:?} version {}",
                file.format, file.version
            )));
        }
        if file.training_curve.is_empty() {
            return Err(Error::Format("model has an empty training curve".into()));
        }
        let spec = NetworkSpec::with_activation(file.layer_sizes, file.activation)?;
        Ok(SavedModel {
            model: TrainedModel {
                params: ParameterVector::new(spec.clone(), file.params)?,
                spec,
                training_curve: file.training_curve,
                method: file.method,
                config_fingerprint: file.config_fingerprint,
            },
            normalization: file.normalization,
        })
    }
}

impl TrainedModel {
    pub fn to_text(&self) -> Result<String> {
        SavedModel {
            model: self.clone(),
            normalization: None,
        }
        .to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        SavedModel::from_text(text).map(|s| s.model)
    }

    pub fn final_training_cost(&self) -> f64 {
        self.training_curve.last().map_or(f64::NAN, |c| c.1)
    }
}
