//! Fully connected feed-forward networks with sigmoid units.
//!
//! Parameters live in one flat vector so that optimizers can treat a network
//! as a point in `R^n`. The layout is fixed: for each layer transition, in
//! order from the input side, the `n_out x n_in` weight matrix in row-major
//! (output-unit-major) order followed by the `n_out` biases of that layer.
//! Weight `w[o][i]` connecting input unit `i` to output unit `o` of a
//! transition therefore sits at `offset + o * n_in + i`, and bias `b[o]` at
//! `offset + n_out * n_in + o`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::par::Execution;

/// Pre-activations beyond this magnitude are clamped before the sigmoid.
pub const SIGMOID_INPUT_LIMIT: f64 = 500.0;

/// Largest `f64` strictly below one. Sigmoid outputs are capped here so that
/// saturated units stay inside the open unit interval.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the unit's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_INPUT_LIMIT, SIGMOID_INPUT_LIMIT);
    let y = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    y.min(ONE_BELOW)
}

/// Number of weights plus biases for the given layer sizes. A single layer has
/// no transitions and therefore no parameters.
pub fn parameter_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpecRepr", into = "NetworkSpecRepr")]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct NetworkSpecRepr {
    layer_sizes: Vec<usize>,
    #[serde(default)]
    activation: Activation,
}

impl TryFrom<NetworkSpecRepr> for NetworkSpec {
    type Error = Error;

    fn try_from(r: NetworkSpecRepr) -> Result<Self> {
        NetworkSpec::with_activation(r.layer_sizes, r.activation)
    }
}

impl From<NetworkSpec> for NetworkSpecRepr {
    fn from(s: NetworkSpec) -> Self {
        NetworkSpecRepr {
            layer_sizes: s.layer_sizes,
            activation: s.activation,
        }
    }
}

impl NetworkSpec {
    /// Sigmoid network with the given units per layer, input layer first.
    pub fn new(layer_sizes: impl Into<Vec<usize>>) -> Result<Self> {
        Self::with_activation(layer_sizes.into(), Activation::Sigmoid)
    }

    pub fn with_activation(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output layer, got {} layer(s)",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has zero units")));
        }
        Ok(NetworkSpec {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.layer_sizes)
    }

    /// Widest layer; sizes the scratch buffers of a forward pass.
    pub(crate) fn max_width(&self) -> usize {
        self.layer_sizes.iter().copied().max().unwrap_or(0)
    }

    /// `(n_in, n_out, offset)` for every layer transition.
    pub(crate) fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let t = (w[0], w[1], offset);
            offset += w[0] * w[1] + w[1];
            t
        })
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Parses `3-6-2-3` or `3,6,2,3`.
impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sizes = s
            .split(['-', ','])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidSpec(format!("bad layer size {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(sizes)
    }
}

/// Weights and biases of one layer transition.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn weight(&self, output: usize, input: usize) -> f64 {
        self.weights[output * self.inputs + input]
    }
}

/// Flat weight and bias vector bound to the spec it parameterizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    spec: NetworkSpec,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(spec: NetworkSpec, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", spec.parameter_count(), values.len())?;
        Ok(ParameterVector { spec, values })
    }

    pub fn zeros(spec: NetworkSpec) -> Self {
        let values = vec![0.0; spec.parameter_count()];
        ParameterVector { spec, values }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Splits the flat vector into per-transition matrices.
    pub fn layers(&self) -> Vec<LayerParams> {
        self.spec
            .transitions()
            .map(|(n_in, n_out, off)| {
                let w_end = off + n_in * n_out;
                LayerParams {
                    inputs: n_in,
                    outputs: n_out,
                    weights: self.values[off..w_end].to_vec(),
                    biases: self.values[w_end..w_end + n_out].to_vec(),
                }
            })
            .collect()
    }

    /// Inverse of [`ParameterVector::layers`].
    pub fn from_layers(spec: NetworkSpec, layers: &[LayerParams]) -> Result<Self> {
        check_len(
            "layer transitions",
            spec.layer_sizes().len() - 1,
            layers.len(),
        )?;
        let mut values = Vec::with_capacity(spec.parameter_count());
        for ((n_in, n_out, _), layer) in spec.transitions().zip(layers) {
            check_len("layer inputs", n_in, layer.inputs)?;
            check_len("layer outputs", n_out, layer.outputs)?;
            check_len("layer weights", n_in * n_out, layer.weights.len())?;
            check_len("layer biases", n_out, layer.biases.len())?;
            values.extend_from_slice(&layer.weights);
            values.extend_from_slice(&layer.biases);
        }
        Ok(ParameterVector { spec, values })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        forward(&self.spec, &self.values, input)
    }

    pub fn predict_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        predict_batch(&self.spec, &self.values, inputs)
    }
}

/// Every layer's outputs from one forward pass, input echo first.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub layers: Vec<Vec<f64>>,
}

impl ActivationRecord {
    pub fn output(&self) -> &[f64] {
        self.layers.last().unwrap()
    }
}

fn check_shapes(spec: &NetworkSpec, params: &[f64], input: &[f64]) -> Result<()> {
    check_len("parameter vector", spec.parameter_count(), params.len())?;
    check_len("input", spec.input_size(), input.len())
}

/// Reusable buffers for allocation-free forward passes.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(spec: &NetworkSpec) -> Self {
        let w = spec.max_width();
        Scratch {
            a: vec![0.0; w],
            b: vec![0.0; w],
        }
    }
}

/// Single dense layer: `out[o] = act(sum_i w[o][i] * x[i] + b[o])`.
#[inline]
fn dense(act: Activation, block: &[f64], n_in: usize, x: &[f64], out: &mut [f64]) {
    let (w, b) = block.split_at(n_in * out.len());
    for (o, (y, row)) in out.iter_mut().zip(w.chunks_exact(n_in)).enumerate() {
        let z = row.iter().zip(x).fold(b[o], |acc, (wi, xi)| acc + wi * xi);
        *y = act.apply(z);
    }
}

/// Forward pass without shape checks. Returns the output slice inside
/// `scratch`.
pub(crate) fn forward_unchecked<'s>(
    spec: &NetworkSpec,
    params: &[f64],
    input: &[f64],
    scratch: &'s mut Scratch,
) -> &'s [f64] {
    let act = spec.activation;
    let Scratch { a, b } = scratch;
    a[..input.len()].copy_from_slice(input);
    let mut width = input.len();
    for (n_in, n_out, off) in spec.transitions() {
        let block = &params[off..off + n_in * n_out + n_out];
        dense(act, block, n_in, &a[..width], &mut b[..n_out]);
        std::mem::swap(a, b);
        width = n_out;
    }
    &a[..width]
}

pub fn forward(spec: &NetworkSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    check_shapes(spec, params, input)?;
    let mut scratch = Scratch::new(spec);
    Ok(forward_unchecked(spec, params, input, &mut scratch).to_vec())
}

pub fn forward_with_trace(
    spec: &NetworkSpec,
    params: &[f64],
    input: &[f64],
) -> Result<ActivationRecord> {
    check_shapes(spec, params, input)?;
    Ok(trace_unchecked(spec, params, input))
}

pub(crate) fn trace_unchecked(
    spec: &NetworkSpec,
    params: &[f64],
    input: &[f64],
) -> ActivationRecord {
    let mut layers = Vec::with_capacity(spec.layer_sizes.len());
    layers.push(input.to_vec());
    for (n_in, n_out, off) in spec.transitions() {
        let block = &params[off..off + n_in * n_out + n_out];
        let mut out = vec![0.0; n_out];
        dense(
            spec.activation,
            block,
            n_in,
            layers.last().unwrap(),
            &mut out,
        );
        layers.push(out);
    }
    ActivationRecord { layers }
}

pub fn predict_batch(
    spec: &NetworkSpec,
    params: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    predict_batch_with(Execution::default(), spec, params, inputs)
}

/// [`predict_batch`] with an explicit execution strategy. Output is identical
/// for every strategy.
pub fn predict_batch_with(
    exec: Execution,
    spec: &NetworkSpec,
    params: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_len("parameter vector", spec.parameter_count(), params.len())?;
    if let Some((index, row)) = inputs
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != spec.input_size())
    {
        return Err(Error::BatchRow {
            index,
            expected: spec.input_size(),
            actual: row.len(),
        });
    }
    Ok(exec.map(inputs.len(), |i| {
        let mut scratch = Scratch::new(spec);
        forward_unchecked(spec, params, &inputs[i], &mut scratch).to_vec()
    }))
}
