//! Deterministic mini-batch SGD with backprop.
//!
//! Training is a pure function of (spec, data, config): weight init and
//! epoch shuffles come from named streams of the config seed, the loop is
//! single-threaded, and reductions accumulate in f64, so identical inputs
//! reproduce bit-identical models.

use rand::Rng;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::nncore::{ActivationFn, LayerKind, ModelSpec, ParamPair, TrainedModel, Tensor};
use crate::rng::stream;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.1,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self, data_len: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > data_len {
            return Err(Error::Config(format!(
                "batch_size {} must be in 1..={data_len}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Glorot-uniform initialization (biases zero) from the seed's `init`
/// stream.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    let mut rng = stream(seed, "init");
    let mut params = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        params.push(match layer.kind {
            LayerKind::Dense { input, output } => {
                let limit = (6.0 / (input + output) as f64).sqrt() as f32;
                let weights = Tensor::new(
                    vec![output, input],
                    (0..output * input)
                        .map(|_| rng.random_range(-limit..=limit))
                        .collect(),
                )?;
                Some(ParamPair {
                    weights,
                    bias: Tensor::zeros(vec![output]),
                })
            }
            LayerKind::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => {
                let fan_in = in_channels * kernel_h * kernel_w;
                let fan_out = out_channels * kernel_h * kernel_w;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                let n = out_channels * in_channels * kernel_h * kernel_w;
                let weights = Tensor::new(
                    vec![out_channels, in_channels, kernel_h, kernel_w],
                    (0..n).map(|_| rng.random_range(-limit..=limit)).collect(),
                )?;
                Some(ParamPair {
                    weights,
                    bias: Tensor::zeros(vec![out_channels]),
                })
            }
            _ => None,
        });
    }
    TrainedModel::new(spec.clone(), params)
}

/// Train `spec` on `data`. See [`train_with_log`].
pub fn train(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with_log(spec, data, cfg, |_| {})
}

/// Train `spec` on `data`, invoking `on_epoch` after every epoch.
///
/// Aborts with [`Error::Diverged`] as soon as a batch loss is non-finite.
pub fn train_with_log(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(EpochLog),
) -> Result<TrainedModel> {
    spec.validate()?;
    check_data_against_spec(spec, data)?;
    cfg.validate(data.len())?;

    let model = init_model(spec, cfg.seed)?;
    let (spec_owned, mut params) = model.into_parts();
    let shapes = LayerShapes::for_spec(&spec_owned)?;

    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            // Fisher-Yates from the dedicated shuffle stream.
            for i in (1..order.len()).rev() {
                let j = shuffle_rng.random_range(0..=i);
                order.swap(i, j);
            }
        }
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_loss_and_grads(&spec_owned, &params, &shapes, data, chunk)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            apply_step(&mut params, &grads, cfg.learning_rate);
            loss_sum += loss;
            batches += 1;
        }
        on_epoch(EpochLog {
            epoch,
            mean_loss: loss_sum / batches.max(1) as f64,
        });
    }
    TrainedModel::new(spec_owned, params)
}

/// Mean cross-entropy of a batch and the gradient of that mean for every
/// parameter. The gradient layout mirrors the model's parameter layout.
pub fn loss_and_grads(
    model: &TrainedModel,
    batch: &Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<Option<ParamPair>>)> {
    let spec = model.spec();
    let shapes = LayerShapes::for_spec(spec)?;
    let sample_len: usize = spec.input_shape.iter().product();
    let expected: usize = labels.len() * sample_len;
    if batch.numel() != expected || batch.shape().first() != Some(&labels.len()) {
        return Err(Error::shape_mismatch(
            format!("[{}, ...] batch matching {} labels", labels.len(), labels.len()),
            format!("{:?}", batch.shape()),
            "loss_and_grads",
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= spec.num_classes) {
        return Err(Error::InvalidDataset(format!(
            "label {bad} out of range for {} classes",
            spec.num_classes
        )));
    }
    let mut acc = GradAccum::new(model.params());
    let mut loss_sum = 0.0f64;
    for (i, &label) in labels.iter().enumerate() {
        let sample = batch.data()[i * sample_len..(i + 1) * sample_len].to_vec();
        loss_sum += backprop_sample(
            spec,
            model.params(),
            &shapes,
            &sample,
            label,
            labels.len(),
            &mut acc,
        )?;
    }
    Ok((loss_sum / labels.len() as f64, acc.into_params()))
}

/// One SGD step: `w <- w - lr * g`. Returns the stepped model.
pub fn sgd_step(model: &TrainedModel, grads: &[Option<ParamPair>], lr: f32) -> Result<TrainedModel> {
    let (spec, mut params) = model.clone().into_parts();
    if grads.len() != params.len() {
        return Err(Error::shape_mismatch(
            format!("{} gradient entries", params.len()),
            format!("{}", grads.len()),
            "sgd_step",
        ));
    }
    apply_step(&mut params, grads, lr);
    TrainedModel::new(spec, params)
}

/// Fraction of `data` the model classifies correctly.
pub fn evaluate_accuracy(model: &TrainedModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyAnalysis("accuracy of an empty dataset".into()));
    }
    check_data_against_spec(model.spec(), data)?;
    let mut correct = 0usize;
    for i in 0..data.len() {
        if model.predict_sample(&data.sample(i))? == data.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn check_data_against_spec(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if data.sample_shape() != spec.input_shape {
        return Err(Error::shape_mismatch(
            format!("{:?}", spec.input_shape),
            format!("{:?}", data.sample_shape()),
            "dataset sample shape vs model input",
        ));
    }
    if data.num_classes() != spec.num_classes {
        return Err(Error::shape_mismatch(
            format!("{} classes", spec.num_classes),
            format!("{}", data.num_classes()),
            "dataset classes vs model classes",
        ));
    }
    Ok(())
}

/// Precomputed per-layer input/output shapes.
struct LayerShapes {
    inputs: Vec<Vec<usize>>,
    outputs: Vec<Vec<usize>>,
}

impl LayerShapes {
    fn for_spec(spec: &ModelSpec) -> Result<Self> {
        Ok(Self {
            inputs: spec.layer_input_shapes()?,
            outputs: spec.layer_output_shapes()?,
        })
    }
}

/// f64 gradient accumulators matching the parameter layout.
struct GradAccum {
    grads: Vec<Option<(Vec<f64>, Vec<f64>)>>,
    shapes: Vec<Option<(Vec<usize>, Vec<usize>)>>,
}

impl GradAccum {
    fn new(params: &[Option<ParamPair>]) -> Self {
        let mut grads = Vec::with_capacity(params.len());
        let mut shapes = Vec::with_capacity(params.len());
        for p in params {
            match p {
                Some(pair) => {
                    grads.push(Some((
                        vec![0.0f64; pair.weights.numel()],
                        vec![0.0f64; pair.bias.numel()],
                    )));
                    shapes.push(Some((
                        pair.weights.shape().to_vec(),
                        pair.bias.shape().to_vec(),
                    )));
                }
                None => {
                    grads.push(None);
                    shapes.push(None);
                }
            }
        }
        Self { grads, shapes }
    }

    fn into_params(self) -> Vec<Option<ParamPair>> {
        self.grads
            .into_iter()
            .zip(self.shapes)
            .map(|(g, s)| {
                g.map(|(w, b)| {
                    let (ws, bs) = s.expect("aligned");
                    ParamPair {
                        weights: Tensor::new(ws, w.into_iter().map(|v| v as f32).collect())
                            .expect("accumulator shape"),
                        bias: Tensor::new(bs, b.into_iter().map(|v| v as f32).collect())
                            .expect("accumulator shape"),
                    }
                })
            })
            .collect()
    }
}

/// Forward one sample with cached layer inputs, then backpropagate the
/// cross-entropy gradient into `acc`. Returns the sample's loss term.
///
/// `batch_len` scales the per-sample contribution so the accumulated
/// gradient is that of the batch-mean loss.
fn backprop_sample(
    spec: &ModelSpec,
    params: &[Option<ParamPair>],
    shapes: &LayerShapes,
    sample: &[f32],
    label: usize,
    batch_len: usize,
    acc: &mut GradAccum,
) -> Result<f64> {
    let layer_count = spec.layers.len();

    // Forward, keeping every layer input (index i) plus the final output.
    let mut values: Vec<Vec<f32>> = Vec::with_capacity(layer_count + 1);
    values.push(sample.to_vec());
    for i in 0..layer_count {
        let input = Tensor::new(shapes.inputs[i].clone(), values[i].clone())?;
        let out = crate::nncore::layer_forward(&spec.layers[i], params[i].as_ref(), &input)?;
        values.push(out.data().to_vec());
    }
    let probs = &values[layer_count];
    let p_label = f64::from(probs[label]);
    let loss = -p_label.ln();

    // Cross-entropy fused with the final softmax: the gradient w.r.t. the
    // logits is (p - onehot) / batch.
    let scale = 1.0f32 / batch_len as f32;
    let mut delta: Vec<f32> = probs.iter().copied().map(|p| p * scale).collect();
    delta[label] -= scale;

    for i in (0..layer_count).rev() {
        let layer = &spec.layers[i];
        let is_output_layer = i == layer_count - 1;
        match layer.kind {
            LayerKind::Dense { input: n_in, output } => {
                if !is_output_layer {
                    mask_activation(layer.activation, &values[i + 1], &mut delta);
                }
                let pair = params[i].as_ref().expect("dense has params");
                let (gw, gb) = acc.grads[i].as_mut().expect("dense has grads");
                let x = &values[i];
                for o in 0..output {
                    let d = f64::from(delta[o]);
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, xv) in row.iter_mut().zip(x) {
                        *g += d * f64::from(*xv);
                    }
                }
                let w = pair.weights.data();
                let mut prev = vec![0.0f64; n_in];
                for o in 0..output {
                    let d = f64::from(delta[o]);
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += d * f64::from(*wv);
                    }
                }
                delta = prev.into_iter().map(|v| v as f32).collect();
            }
            LayerKind::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => {
                if !is_output_layer {
                    mask_activation(layer.activation, &values[i + 1], &mut delta);
                }
                let pair = params[i].as_ref().expect("conv has params");
                let (gw, gb) = acc.grads[i].as_mut().expect("conv has grads");
                let [_, h, w] = *shapes.inputs[i].as_slice() else {
                    unreachable!("conv input is rank 3");
                };
                let [_, oh, ow] = *shapes.outputs[i].as_slice() else {
                    unreachable!("conv output is rank 3");
                };
                let x = &values[i];
                let kd = pair.weights.data();
                let mut prev = vec![0.0f64; in_channels * h * w];
                for o in 0..out_channels {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let d = f64::from(delta[(o * oh + y) * ow + xx]);
                            if d == 0.0 {
                                continue;
                            }
                            gb[o] += d;
                            for ci in 0..in_channels {
                                for dy in 0..kernel_h {
                                    let krow = ((o * in_channels + ci) * kernel_h + dy) * kernel_w;
                                    let irow = (ci * h + y + dy) * w + xx;
                                    for dx in 0..kernel_w {
                                        gw[krow + dx] += d * f64::from(x[irow + dx]);
                                        prev[irow + dx] += d * f64::from(kd[krow + dx]);
                                    }
                                }
                            }
                        }
                    }
                }
                delta = prev.into_iter().map(|v| v as f32).collect();
            }
            LayerKind::MaxPool2x2 => {
                let [c, h, w] = *shapes.inputs[i].as_slice() else {
                    unreachable!("pool input is rank 3");
                };
                let (oh, ow) = (h / 2, w / 2);
                let x = &values[i];
                let mut prev = vec![0.0f32; c * h * w];
                for ci in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let base = (ci * h + 2 * y) * w + 2 * xx;
                            // First-maximum wins, matching the forward max.
                            let cand = [base, base + 1, base + w, base + w + 1];
                            let mut best = cand[0];
                            for &p in &cand[1..] {
                                if x[p] > x[best] {
                                    best = p;
                                }
                            }
                            prev[best] = delta[(ci * oh + y) * ow + xx];
                        }
                    }
                }
                delta = prev;
            }
            LayerKind::Flatten => {
                // Same values, different shape bookkeeping.
            }
            LayerKind::Activation(f) => {
                if !(is_output_layer && f == ActivationFn::Softmax) {
                    mask_activation(f, &values[i + 1], &mut delta);
                }
            }
        }
    }
    Ok(loss)
}

/// Multiply `delta` by the activation derivative, evaluated from the layer
/// *output* (for ReLU, output > 0 iff pre-activation > 0).
fn mask_activation(f: ActivationFn, output: &[f32], delta: &mut [f32]) {
    match f {
        ActivationFn::Identity => {}
        ActivationFn::Relu => {
            for (d, &o) in delta.iter_mut().zip(output) {
                if o <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        ActivationFn::Softmax => {
            unreachable!("softmax only appears fused with the loss on the output layer")
        }
    }
}

fn batch_loss_and_grads(
    spec: &ModelSpec,
    params: &[Option<ParamPair>],
    shapes: &LayerShapes,
    data: &Dataset,
    batch_indices: &[usize],
) -> Result<(f64, Vec<Option<ParamPair>>)> {
    let mut acc = GradAccum::new(params);
    let mut loss_sum = 0.0f64;
    for &idx in batch_indices {
        loss_sum += backprop_sample(
            spec,
            params,
            shapes,
            data.sample_values(idx),
            data.labels()[idx],
            batch_indices.len(),
            &mut acc,
        )?;
    }
    Ok((loss_sum / batch_indices.len() as f64, acc.into_params()))
}

fn apply_step(params: &mut [Option<ParamPair>], grads: &[Option<ParamPair>], lr: f32) {
    for (p, g) in params.iter_mut().zip(grads) {
        if let (Some(pair), Some(grad)) = (p.as_mut(), g.as_ref()) {
            for (w, gw) in pair.weights.data_mut().iter_mut().zip(grad.weights.data()) {
                *w -= lr * gw;
            }
            for (b, gb) in pair.bias.data_mut().iter_mut().zip(grad.bias.data()) {
                *b -= lr * gb;
            }
        }
    }
}
