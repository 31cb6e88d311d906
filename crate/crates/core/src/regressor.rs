//! Feedforward regression network trained on mean squared error with Adam.
//!
//! Weights are stored input-major (`in x out`) so a batch of row vectors is
//! propagated as `X W + b`. Targets are standardized internally and the
//! output layer is mapped back to target units, so callers always see
//! predictions on the original target scale.

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::debug;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormalizationParams, Sample};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

pub const MODEL_FORMAT: &str = "curvecf-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Sigmoid => a * (T::one() - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many epochs without validation improvement and keep
    /// the best weights. `None` trains for exactly `epochs`.
    pub patience: Option<usize>,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![100, 100],
            activation: Activation::Relu,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            patience: None,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `in x out`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = 1.0 / (inputs as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((inputs, outputs), || T::lit(rng.gen_range(-limit..limit)));
        let bias = Array1::from_shape_simple_fn(outputs, || T::lit(rng.gen_range(-limit..limit)));
        Self { weights, bias }
    }

    fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// A trained (or hand-built) network. Immutable once built; share freely
/// across threads for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    activation: Activation,
    target_shift: T,
    target_scale: T,
    normalization: Option<NormalizationParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_mse: Vec<f64>,
    pub validation_mse: f64,
    pub epochs_run: usize,
    pub seconds: f64,
}

struct Cache<T> {
    pre: Vec<Array2<T>>,
    post: Vec<Array2<T>>,
}

pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
    /// `batch x n`
    pub inputs: Array2<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Assembles a network from explicit layers. The last layer must have a
    /// single output; shapes must chain.
    pub fn from_layers(layers: Vec<Layer<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::InvalidConfig(format!(
                    "layer shapes do not chain ({} -> {})",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::InvalidConfig("bias length differs from layer width".into()));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network weights".into()));
            }
        }
        if layers.last().map(Layer::outputs) != Some(1) {
            return Err(Error::InvalidConfig("output layer must have width 1".into()));
        }
        Ok(Self {
            layers,
            activation,
            target_shift: T::zero(),
            target_scale: T::one(),
            normalization: None,
        })
    }

    /// Randomly initialized network (uniform, scaled by `1/sqrt(fan_in)`).
    pub fn random(inputs: usize, hidden: &[usize], activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| Layer::uniform(w[0], w[1], &mut rng))
            .collect();
        Self {
            layers,
            activation,
            target_shift: T::zero(),
            target_scale: T::one(),
            normalization: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn hidden_layers(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Layer::outputs).collect()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn normalization(&self) -> Option<&NormalizationParams> {
        self.normalization.as_ref()
    }

    pub fn set_normalization(&mut self, params: Option<NormalizationParams>) {
        self.normalization = params;
    }

    /// Output affine map `y = out * scale + shift`.
    pub fn set_target_affine(&mut self, shift: T, scale: T) {
        self.target_shift = shift;
        self.target_scale = scale;
    }

    pub fn predict(&self, sample: &Sample<T>) -> Result<T> {
        let x = ArrayView2::from_shape((1, sample.len()), &sample.features)
            .expect("contiguous sample");
        Ok(self.predict_batch(x)?[0])
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = affine(x, &self.layers[0], (last > 0).then_some(self.activation));
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = affine(h.view(), layer, (i < last).then_some(self.activation));
        }
        let (shift, scale) = (self.target_shift, self.target_scale);
        Ok(h.column(0).mapv(|o| o * scale + shift))
    }

    fn forward_cached(&self, x: ArrayView2<'_, T>) -> Cache<T> {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { post[i - 1].view() };
            let z = affine(input, layer, None);
            let a = if i < last {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(a);
        }
        Cache { pre, post }
    }

    /// Backpropagates `d loss / d raw_output` (`batch x 1`).
    fn backward(&self, x: ArrayView2<'_, T>, cache: &Cache<T>, d_out: Array2<T>) -> Gradients<T> {
        let n_layers = self.layers.len();
        let mut grads: Vec<Layer<T>> = Vec::with_capacity(n_layers);
        let mut delta = d_out;
        for i in (0..n_layers).rev() {
            let input = if i == 0 { x } else { cache.post[i - 1].view() };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let mut next = delta.dot(&self.layers[i].weights.t());
            if i > 0 {
                let act = self.activation;
                Zip::from(&mut next)
                    .and(&cache.pre[i - 1])
                    .and(&cache.post[i - 1])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            grads.push(Layer { weights: gw, bias: gb });
            delta = next;
        }
        grads.reverse();
        Gradients {
            layers: grads,
            inputs: delta,
        }
    }

    /// Gradients of `(y_hat - target)^2` for a single input.
    pub fn loss_gradient(&self, x: &[T], target: T) -> Result<(T, Gradients<T>)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("contiguous input");
        let cache = self.forward_cached(xv);
        let out = cache.post.last().expect("non-empty")[[0, 0]];
        let y_hat = out * self.target_scale + self.target_shift;
        let resid = y_hat - target;
        let d_out = Array2::from_elem((1, 1), T::lit(2.0) * resid * self.target_scale);
        Ok((resid * resid, self.backward(xv, &cache, d_out)))
    }

    fn squared_error(&self, x: &[T], target: T) -> T {
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("contiguous input");
        let r = self.predict_batch(xv).expect("dimension checked")[0] - target;
        r * r
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&ModelFile::from_model(self))?;
        fs::write(path, json).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(Error::CorruptModel(format!("unexpected format `{}`", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: header.version,
                expected: MODEL_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        file.into_model()
    }
}

/// On-disk model container (JSON). Weights are row-major `f64`.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    activation: Activation,
    input_dim: usize,
    hidden_layers: Vec<usize>,
    target_shift: f64,
    target_scale: f64,
    layers: Vec<LayerFile>,
    normalization: Option<NormalizationParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ModelFile {
    fn from_model<T: Scalar>(m: &Mlp<T>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            activation: m.activation,
            input_dim: m.input_dim(),
            hidden_layers: m.hidden_layers(),
            target_shift: m.target_shift.as_f64(),
            target_scale: m.target_scale.as_f64(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.inputs(),
                    cols: l.outputs(),
                    // standard layout is row-major
                    weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                    bias: l.bias.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
            normalization: m.normalization.clone(),
        }
    }

    fn into_model<T: Scalar>(self) -> Result<Mlp<T>> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in self.layers {
            let w = Array2::from_shape_vec((l.rows, l.cols), l.weights.into_iter().map(T::lit).collect())
                .map_err(|e| Error::CorruptModel(format!("weight matrix: {e}")))?;
            if l.bias.len() != l.cols {
                return Err(Error::CorruptModel("bias length differs from layer width".into()));
            }
            layers.push(Layer {
                weights: w,
                bias: l.bias.into_iter().map(T::lit).collect(),
            });
        }
        let mut model =
            Mlp::from_layers(layers, self.activation).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if model.input_dim() != self.input_dim || model.hidden_layers() != self.hidden_layers {
            return Err(Error::CorruptModel("architecture descriptor disagrees with weights".into()));
        }
        if let Some(p) = &self.normalization {
            if p.n_features() != self.input_dim {
                return Err(Error::CorruptModel("normalization params have wrong width".into()));
            }
        }
        model.target_shift = T::lit(self.target_shift);
        model.target_scale = T::lit(self.target_scale);
        model.normalization = self.normalization;
        Ok(model)
    }
}

struct Adam<T> {
    m: Vec<Layer<T>>,
    v: Vec<Layer<T>>,
    step: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    fn new(model: &Mlp<T>, lr: f64) -> Self {
        let zeros: Vec<Layer<T>> = model
            .layers
            .iter()
            .map(|l| Layer::zeros(l.inputs(), l.outputs()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    fn update(&mut self, model: &mut Mlp<T>, grads: &[Layer<T>]) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = T::one() - b1.powi(self.step);
        let bc2 = T::one() - b2.powi(self.step);
        let step_size = self.lr * bc2.sqrt() / bc1;
        let eps_hat = eps * bc2.sqrt();
        let one = T::one();
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *w -= step_size * *m / (v.sqrt() + eps_hat);
                });
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *w -= step_size * *m / (v.sqrt() + eps_hat);
                });
        }
    }
}

pub fn mse<T: Scalar>(model: &Mlp<T>, dataset: &Dataset<T>) -> Result<f64> {
    let pred = model.predict_batch(dataset.features())?;
    let n = dataset.len() as f64;
    Ok(pred
        .iter()
        .zip(dataset.targets())
        .map(|(&p, &y)| {
            let r = (p - y).as_f64();
            r * r
        })
        .sum::<f64>()
        / n)
}

/// Mini-batch Adam on mean squared error. Deterministic for a fixed seed.
pub fn train<T: Scalar>(
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    config: &RegressorConfig,
) -> Result<(Mlp<T>, TrainReport)> {
    config.validate()?;
    let n = train_set.n_features();
    if val_set.n_features() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: val_set.n_features(),
        });
    }
    let started = Instant::now();
    let mut model = Mlp::random(n, &config.hidden_layers, config.activation, config.seed);

    let y = train_set.targets();
    let (shift, scale) = standardization(y);
    model.set_target_affine(shift, scale);
    let y_std: Array1<T> = y.mapv(|v| (v - shift) / scale);
    let scale2 = (scale * scale).as_f64();

    let x = train_set.features();
    let mut adam = Adam::new(&model, config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut epoch_mse = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Mlp<T>)> = None;
    let mut stale = 0usize;
    let two = T::lit(2.0);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0f64;
        for batch in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y_std.select(Axis(0), batch);
            let cache = model.forward_cached(xb.view());
            let out = cache.post.last().expect("non-empty").column(0).to_owned();
            let resid = &out - &yb;
            sse += resid.iter().map(|r| r.as_f64() * r.as_f64()).sum::<f64>();
            let inv_b = T::one() / T::from_usize_lossy(batch.len());
            let d_out = resid.mapv(|r| two * r * inv_b).insert_axis(Axis(1));
            let grads = model.backward(xb.view(), &cache, d_out);
            adam.update(&mut model, &grads.layers);
        }
        let epoch_loss = sse / train_set.len() as f64 * scale2;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        epoch_mse.push(epoch_loss);
        if let Some(patience) = config.patience {
            let val = mse(&model, val_set)?;
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    debug!("early stop after epoch {}", epoch + 1);
                    break;
                }
            }
        }
        if epoch % 20 == 0 {
            debug!("epoch {} train mse {:.6}", epoch + 1, epoch_loss);
        }
    }
    if let Some((_, m)) = best {
        model = m;
    }
    let validation_mse = mse(&model, val_set)?;
    if !validation_mse.is_finite() {
        return Err(Error::Diverged { epoch: epoch_mse.len() });
    }
    let report = TrainReport {
        epochs_run: epoch_mse.len(),
        epoch_mse,
        validation_mse,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// `input · W + b`, with the activation applied in the same pass when given.
fn affine<T: Scalar>(input: ArrayView2<'_, T>, layer: &Layer<T>, act: Option<Activation>) -> Array2<T> {
    let mut h = input.dot(&layer.weights);
    let bias = layer.bias.view();
    for mut row in h.rows_mut() {
        match (row.as_slice_mut(), bias.as_slice()) {
            (Some(r), Some(b)) => match act {
                Some(Activation::Relu) => r.iter_mut().zip(b).for_each(|(v, &bb)| {
                    let z = *v + bb;
                    *v = if z > T::zero() { z } else { T::zero() };
                }),
                Some(a) => r.iter_mut().zip(b).for_each(|(v, &bb)| *v = a.apply(*v + bb)),
                None => r.iter_mut().zip(b).for_each(|(v, &bb)| *v += bb),
            },
            _ => Zip::from(&mut row).and(&bias).for_each(|v, &bb| {
                let z = *v + bb;
                *v = act.map_or(z, |a| a.apply(z));
            }),
        }
    }
    h
}

fn standardization<T: Scalar>(y: ArrayView1<'_, T>) -> (T, T) {
    let n = y.len() as f64;
    let mean = y.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = y.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    (T::lit(mean), T::lit(scale))
}

const FD_STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-2;

/// Largest relative discrepancy between backpropagated gradients of the
/// squared error and central finite differences, over every weight, bias
/// and input.
///
/// Hidden pre-activations closer than a small margin to zero are pushed
/// away from it first (on a copy), so ReLU kinks cannot corrupt the
/// difference quotients.
pub fn gradient_check<T: Scalar>(model: &Mlp<T>, sample: &Sample<T>, target: T) -> Result<T> {
    if sample.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: sample.len(),
        });
    }
    let mut net = model.clone();
    avoid_kinks(&mut net, &sample.features);
    let (_, grads) = net.loss_gradient(&sample.features, target)?;
    let h = T::lit(FD_STEP);
    let two_h = h + h;
    let mut worst = T::zero();

    let mut probe = net.clone();
    for (li, g) in grads.layers.iter().enumerate() {
        for (idx, &analytic) in g.weights.indexed_iter() {
            let orig = probe.layers[li].weights[idx];
            probe.layers[li].weights[idx] = orig + h;
            let plus = probe.squared_error(&sample.features, target);
            probe.layers[li].weights[idx] = orig - h;
            let minus = probe.squared_error(&sample.features, target);
            probe.layers[li].weights[idx] = orig;
            worst = worst.max(relative_error(analytic, (plus - minus) / two_h));
        }
        for (idx, &analytic) in g.bias.indexed_iter() {
            let orig = probe.layers[li].bias[idx];
            probe.layers[li].bias[idx] = orig + h;
            let plus = probe.squared_error(&sample.features, target);
            probe.layers[li].bias[idx] = orig - h;
            let minus = probe.squared_error(&sample.features, target);
            probe.layers[li].bias[idx] = orig;
            worst = worst.max(relative_error(analytic, (plus - minus) / two_h));
        }
    }
    let mut x = sample.features.clone();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = net.squared_error(&x, target);
        x[i] = orig - h;
        let minus = net.squared_error(&x, target);
        x[i] = orig;
        worst = worst.max(relative_error(grads.inputs[[0, i]], (plus - minus) / two_h));
    }
    Ok(worst)
}

fn relative_error<T: Scalar>(a: T, b: T) -> T {
    let denom = a.abs().max(b.abs());
    // both effectively zero (e.g. dead units)
    if denom < T::lit(1e-10) {
        T::zero()
    } else {
        (a - b).abs() / denom
    }
}

fn avoid_kinks<T: Scalar>(net: &mut Mlp<T>, x: &[T]) {
    let margin = T::lit(KINK_MARGIN);
    let hidden = net.layers.len() - 1;
    for li in 0..hidden {
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("contiguous input");
        let cache = net.forward_cached(xv);
        let z: ArrayView1<'_, T> = cache.pre[li].row(0);
        for (u, &zu) in z.iter().enumerate() {
            if zu.abs() < margin {
                let dir = if zu < T::zero() { -T::one() } else { T::one() };
                net.layers[li].bias[u] += dir * margin;
            }
        }
    }
}
