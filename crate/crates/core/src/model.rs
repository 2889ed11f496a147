//! Fully-connected ReLU classifier with inverted dropout, manual backprop and
//! Adam with decoupled weight decay.
//!
//! All parameters live in one flat buffer. Layer `l` stores its weights
//! row-major as `(out, in)` followed by its `out` biases.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Rng, Stream};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_DROPOUT: f64 = 0.2;
const FORMAT_HEADER: &str = "bsm-mlp v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl ModelShape {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self> {
        let shape = Self {
            input,
            hidden,
            output,
        };
        if shape.widths().any(|w| w == 0) {
            return Err(invalid(format!("layer widths must be positive: {shape:?}")));
        }
        if shape.hidden.is_empty() {
            return Err(invalid("at least one hidden layer is required"));
        }
        Ok(shape)
    }

    /// Default `2 -> 64 -> 64 -> 2` classifier.
    pub fn binary_2d() -> Self {
        Self {
            input: 2,
            hidden: DEFAULT_HIDDEN.to_vec(),
            output: 2,
        }
    }

    fn widths(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.output))
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let w: Vec<usize> = self.widths().collect();
        w.windows(2).map(|p| (p[0], p[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn feature_dim(&self) -> usize {
        *self.hidden.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    shape: ModelShape,
    dropout: f64,
    params: Vec<f64>,
}

/// Intermediates of one forward pass, needed for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-activation, post-dropout).
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre_activations: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden unit; empty when dropout was inactive.
    masks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    /// Last hidden layer activations before dropout.
    pub features: Vec<f64>,
    pub cache: ForwardCache,
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
pub fn kaiming_init(shape: &ModelShape, dropout: f64, seed: u64) -> Result<MlpModel> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(invalid(format!("dropout rate {dropout} outside [0, 1)")));
    }
    let mut model = MlpModel {
        shape: shape.clone(),
        dropout,
        params: vec![0.0; shape.num_params()],
    };
    let mut rng = rng::stream(seed, Stream::Init);
    for layer in model.layers() {
        let normal = Normal::new(0.0, (2.0 / layer.fan_in as f64).sqrt()).expect("positive std");
        for w in &mut model.params[layer.weights()] {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(model)
}

impl MlpModel {
    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.shape
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let l = Layer {
                    fan_in,
                    fan_out,
                    offset,
                };
                offset += fan_in * fan_out + fan_out;
                l
            })
            .collect()
    }

    /// Weight matrix of layer `l` as `(out, in)` row-major.
    pub fn layer_weights(&self, l: usize) -> &[f64] {
        &self.params[self.layers()[l].weights()]
    }

    pub fn layer_biases(&self, l: usize) -> &[f64] {
        &self.params[self.layers()[l].biases()]
    }

    /// Forward pass. Dropout is active iff `dropout_rng` is given.
    pub fn forward(&self, input: &[f64], mut dropout_rng: Option<&mut Rng>) -> Result<ForwardPass> {
        if input.len() != self.shape.input {
            return Err(invalid(format!(
                "input has {} features, model expects {}",
                input.len(),
                self.shape.input
            )));
        }
        let layers = self.layers();
        let n_hidden = layers.len() - 1;
        let keep = 1.0 - self.dropout;
        let mut cache = ForwardCache {
            layer_inputs: Vec::with_capacity(layers.len()),
            pre_activations: Vec::with_capacity(n_hidden),
            masks: Vec::new(),
        };
        let mut a = input.to_vec();
        let mut features = Vec::new();

        for (l, layer) in layers.iter().enumerate() {
            let w = &self.params[layer.weights()];
            let b = &self.params[layer.biases()];
            let z: Vec<f64> = (0..layer.fan_out)
                .map(|o| {
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    b[o] + row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>()
                })
                .collect();
            cache.layer_inputs.push(std::mem::take(&mut a));
            if l == n_hidden {
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::TrainingDivergence {
                        epoch: 0,
                        detail: "non-finite logits".into(),
                    });
                }
                return Ok(ForwardPass {
                    logits: z,
                    features,
                    cache,
                });
            }
            let mut h: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            if l == n_hidden - 1 {
                features = h.clone();
            }
            if let Some(rng) = dropout_rng.as_deref_mut() {
                if self.dropout > 0.0 {
                    let mask: Vec<f64> = (0..h.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (hi, m) in h.iter_mut().zip(&mask) {
                        *hi *= m;
                    }
                    cache.masks.push(mask);
                }
            }
            cache.pre_activations.push(z);
            a = h;
        }
        unreachable!("the output layer returns")
    }

    /// Accumulates `scale * dL/dparams` into `grads` given `dL/dlogits`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) {
        let layers = self.layers();
        let mut delta: Vec<f64> = grad_logits.iter().map(|g| g * scale).collect();
        for (l, layer) in layers.iter().enumerate().rev() {
            let a_in = &cache.layer_inputs[l];
            let w_range = layer.weights();
            let b_range = layer.biases();
            {
                let gw = &mut grads[w_range.clone()];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, x) in row.iter_mut().zip(a_in) {
                        *g += d * x;
                    }
                }
            }
            for (g, d) in grads[b_range].iter_mut().zip(&delta) {
                *g += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[w_range];
            let mut prev = vec![0.0; layer.fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            // back through dropout and ReLU of hidden layer l - 1
            let h = l - 1;
            if let Some(mask) = cache.masks.get(h) {
                for (p, m) in prev.iter_mut().zip(mask) {
                    *p *= m;
                }
            }
            for (p, z) in prev.iter_mut().zip(&cache.pre_activations[h]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Logits for every row with dropout inactive.
    pub fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(inputs.rows(), self.shape.output);
        for (i, x) in inputs.iter_rows().enumerate() {
            out.row_mut(i)
                .copy_from_slice(&self.forward(x, None)?.logits);
        }
        Ok(out)
    }

    /// Penultimate-layer features for every row with dropout inactive.
    pub fn features(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(inputs.rows(), self.shape.feature_dim());
        for (i, x) in inputs.iter_rows().enumerate() {
            out.row_mut(i)
                .copy_from_slice(&self.forward(x, None)?.features);
        }
        Ok(out)
    }

    /// Plain-text serialization: a version header, the layer widths, the
    /// dropout rate, then one parameter per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.shape.widths().map(|w| w.to_string()).collect();
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "{}", widths.join(" ")).unwrap();
        writeln!(s, "{}", self.dropout).unwrap();
        for p in &self.params {
            writeln!(s, "{p}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(invalid(format!(
                "model file must start with `{FORMAT_HEADER}`"
            )));
        }
        let widths: Vec<usize> = lines
            .next()
            .ok_or_else(|| invalid("missing layer widths"))?
            .split_whitespace()
            .map(|w| {
                w.parse()
                    .map_err(|e| invalid(format!("layer width `{w}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if widths.len() < 3 {
            return Err(invalid("model needs input, hidden and output widths"));
        }
        let shape = ModelShape::new(
            widths[0],
            widths[1..widths.len() - 1].to_vec(),
            widths[widths.len() - 1],
        )?;
        let dropout: f64 = lines
            .next()
            .ok_or_else(|| invalid("missing dropout rate"))?
            .parse()
            .map_err(|e| invalid(format!("dropout rate: {e}")))?;
        let params: Vec<f64> = lines
            .map(|l| {
                l.parse()
                    .map_err(|e| invalid(format!("parameter `{l}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if params.len() != shape.num_params() {
            return Err(invalid(format!(
                "expected {} parameters, found {}",
                shape.num_params(),
                params.len()
            )));
        }
        Ok(Self {
            shape,
            dropout,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Adam moments with the usual defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Decoupled weight decay `p -= lr * wd * p`, then a bias-corrected Adam
    /// update.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *p -= lr * weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// One optimizer step from a minibatch: backprop each sample's logit
/// gradient in index order, average, then apply Adam.
pub fn backward_step(
    model: &mut MlpModel,
    grad_logits_batch: &[Vec<f64>],
    caches: &[ForwardCache],
    adam: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) {
    assert_eq!(grad_logits_batch.len(), caches.len());
    let mut grads = vec![0.0; model.params.len()];
    if !caches.is_empty() {
        let scale = 1.0 / caches.len() as f64;
        for (g, c) in grad_logits_batch.iter().zip(caches) {
            model.backward(c, g, scale, &mut grads);
        }
    }
    adam.step(&mut model.params, &grads, lr, weight_decay);
}
