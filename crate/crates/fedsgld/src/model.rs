//! Small dense classifier: flat parameter layout, forward pass, summed
//! negative log-likelihood, and exact analytic gradients.
//!
//! Parameters live in a single flat vector: layers in order, each layer's
//! weights row-major `(out x in)` followed by its biases. The flat layout is
//! the currency every other module trades in, so the sampler and the
//! parameter server never need to know the architecture.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::GaussianDiagPrior;

/// Predicted class probabilities are clamped to this floor before any log,
/// keeping losses and gradients bounded at saturation.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture of the classifier: `layer_sizes` runs input dim, hidden
/// dims, class count. The output layer is always categorical via softmax.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "layer_sizes needs at least input and output dims, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer_sizes entries must be >= 1, got {layer_sizes:?}"
            )));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count: sum of `in*out + out` over consecutive pairs.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ParamLength {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_features(&self, features: &Array2<f64>) -> Result<()> {
        if features.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: self.input_dim(),
                got: features.ncols(),
            });
        }
        Ok(())
    }
}

/// Flat vector of all model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Array1<f64>,
}

impl ParamVector {
    pub fn new(values: Array1<f64>) -> Self {
        Self { values }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self {
            values: Array1::from_vec(values),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: Array1::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("param vector is contiguous")
    }
}

/// A batch of labeled samples; features are `(B x input_dim)`.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if features.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.nrows(),
                right: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy out the rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledBatch {
        LabeledBatch {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn check_labels(&self, num_classes: usize) -> Result<()> {
        for (index, &label) in self.labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    num_classes,
                });
            }
        }
        Ok(())
    }
}

struct LayerView<'a> {
    w: ArrayView2<'a, f64>,
    b: ArrayView1<'a, f64>,
}

fn layer_views<'a>(spec: &ModelSpec, flat: &'a [f64]) -> Vec<LayerView<'a>> {
    let mut layers = Vec::with_capacity(spec.num_layers());
    let mut offset = 0;
    for pair in spec.layer_sizes.windows(2) {
        let (inp, out) = (pair[0], pair[1]);
        let w = ArrayView2::from_shape((out, inp), &flat[offset..offset + inp * out])
            .expect("layer weight slice matches shape");
        offset += inp * out;
        let b = ArrayView1::from(&flat[offset..offset + out]);
        offset += out;
        layers.push(LayerView { w, b });
    }
    layers
}

fn apply_hidden_activation(z: &Array2<f64>, activation: Activation) -> Array2<f64> {
    match activation {
        Activation::Relu => z.mapv(|v| v.max(0.0)),
        Activation::Tanh => z.mapv(f64::tanh),
    }
}

fn activation_derivative(z: &Array2<f64>, activation: Activation) -> Array2<f64> {
    match activation {
        Activation::Relu => z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        Activation::Tanh => z.mapv(|v| 1.0 - v.tanh() * v.tanh()),
    }
}

/// Row-wise softmax, stabilized by max subtraction.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

/// Run the network, returning pre-activations and activations per layer.
/// `activations[0]` is the input; the last entry holds class probabilities.
fn forward_trace(
    spec: &ModelSpec,
    params: &ParamVector,
    features: &Array2<f64>,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let layers = layer_views(spec, params.as_slice());
    let num_layers = layers.len();
    let mut pre = Vec::with_capacity(num_layers);
    let mut act = Vec::with_capacity(num_layers + 1);
    act.push(features.clone());
    for (l, layer) in layers.iter().enumerate() {
        let z = act[l].dot(&layer.w.t()) + &layer.b;
        let a = if l + 1 == num_layers {
            softmax_rows(&z)
        } else {
            apply_hidden_activation(&z, spec.activation)
        };
        pre.push(z);
        act.push(a);
    }
    (pre, act)
}

/// Class probabilities for every row of `features`; rows sum to 1.
pub fn forward(
    spec: &ModelSpec,
    params: &ParamVector,
    features: &Array2<f64>,
) -> Result<Array2<f64>> {
    spec.check_params(params)?;
    spec.check_features(features)?;
    let (_, mut act) = forward_trace(spec, params, features);
    Ok(act.pop().unwrap())
}

/// Summed negative log-likelihood over the batch, with probabilities
/// floored at [`PROB_FLOOR`] before the log.
pub fn nll_loss(spec: &ModelSpec, params: &ParamVector, batch: &LabeledBatch) -> Result<f64> {
    batch.check_labels(spec.num_classes())?;
    let probs = forward(spec, params, &batch.features)?;
    let mut loss = 0.0;
    for (i, &label) in batch.labels.iter().enumerate() {
        loss -= probs[[i, label]].max(PROB_FLOOR).ln();
    }
    Ok(loss)
}

/// Exact gradient of [`nll_loss`] in the flat parameter layout.
pub fn nll_grad(spec: &ModelSpec, params: &ParamVector, batch: &LabeledBatch) -> Result<ParamVector> {
    spec.check_params(params)?;
    spec.check_features(&batch.features)?;
    batch.check_labels(spec.num_classes())?;

    let (pre, act) = forward_trace(spec, params, &batch.features);
    let layers = layer_views(spec, params.as_slice());
    let num_layers = layers.len();
    let probs = act.last().unwrap();

    // dL/dz at the output: probs - onehot, zeroed where the floor clamps
    // the loss (the clamped branch has no dependence on the logits).
    let mut dz = probs.clone();
    for (i, &label) in batch.labels.iter().enumerate() {
        if probs[[i, label]] < PROB_FLOOR {
            dz.row_mut(i).fill(0.0);
        } else {
            dz[[i, label]] -= 1.0;
        }
    }

    let mut grads_rev: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(num_layers);
    for l in (0..num_layers).rev() {
        let gw = dz.t().dot(&act[l]);
        let gb = dz.sum_axis(Axis(0));
        if l > 0 {
            let da = dz.dot(&layers[l].w);
            dz = da * activation_derivative(&pre[l - 1], spec.activation);
        }
        grads_rev.push((gw, gb));
    }

    let mut flat = Vec::with_capacity(spec.param_count());
    for (gw, gb) in grads_rev.into_iter().rev() {
        flat.extend(gw.iter().cloned());
        flat.extend(gb.iter().cloned());
    }
    Ok(ParamVector::from_vec(flat))
}

/// Draw initial parameters componentwise from the prior.
pub fn init_params(
    spec: &ModelSpec,
    prior: &GaussianDiagPrior,
    rng: &mut ChaCha8Rng,
) -> Result<ParamVector> {
    if prior.len() != spec.param_count() {
        return Err(Error::ParamLength {
            expected: spec.param_count(),
            got: prior.len(),
        });
    }
    let values = prior
        .mean()
        .iter()
        .zip(prior.variance().iter())
        .map(|(&m, &v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(ParamVector::from_vec(values))
}
