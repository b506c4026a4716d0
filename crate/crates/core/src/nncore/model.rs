//! Model spec, trained model, forward pass and prediction.

use crate::error::{Error, Result};
use crate::nncore::layer::{
    conv2d_forward, dense_forward, ActivationFn, LayerKind, LayerSpec,
};
use crate::nncore::layer::maxpool2x2;
use crate::nncore::tensor::Tensor;

/// Ordered layer descriptions defining an architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self> {
        let spec = Self {
            input_shape,
            layers,
            num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Run shape inference end to end and check the structural invariants:
    /// consecutive layers are shape-compatible, the final layer is a softmax
    /// of width `num_classes`, and softmax appears nowhere else.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidSpec("num_classes must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("model has no layers".into()));
        }
        let shapes = self.layer_output_shapes()?;
        let last_idx = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let is_softmax = layer.effective_activation() == ActivationFn::Softmax;
            if is_softmax && i != last_idx {
                return Err(Error::InvalidSpec(format!(
                    "softmax on layer {i} but only the final layer may use it"
                )));
            }
            if layer.activation != ActivationFn::Identity && !layer.has_params() {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} carries an activation attribute but is not Dense/Conv2D"
                )));
            }
        }
        if self.layers[last_idx].effective_activation() != ActivationFn::Softmax {
            return Err(Error::InvalidSpec(
                "final layer must apply softmax".into(),
            ));
        }
        let final_shape = shapes.last().expect("at least one layer");
        if *final_shape != [self.num_classes] {
            return Err(Error::InvalidSpec(format!(
                "final layer shape {final_shape:?} does not match num_classes {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Output shape of every layer, in order.
    pub fn layer_output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for layer in &self.layers {
            cur = layer.output_shape(&cur)?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    /// Input shape of every layer, in order.
    pub fn layer_input_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for layer in &self.layers {
            shapes.push(cur.clone());
            cur = layer.output_shape(&cur)?;
        }
        Ok(shapes)
    }

    /// Indices of layers whose input and output shapes coincide, excluding
    /// the output layer. This is the eligibility set for layer
    /// removal/duplication operators.
    pub fn shape_preserving_layers(&self) -> Result<Vec<usize>> {
        let inputs = self.layer_input_shapes()?;
        let outputs = self.layer_output_shapes()?;
        Ok((0..self.layers.len().saturating_sub(1))
            .filter(|&i| inputs[i] == outputs[i])
            .collect())
    }

    /// Total trainable parameter count.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Dense { input, output } => input * output + output,
                LayerKind::Conv2D {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                } => out_channels * in_channels * kernel_h * kernel_w + out_channels,
                _ => 0,
            })
            .sum()
    }
}

/// Weight and bias tensors of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPair {
    /// `[out, in]` for Dense, `[out_ch, in_ch, kh, kw]` for Conv2D.
    pub weights: Tensor,
    /// `[out]` / `[out_ch]`.
    pub bias: Tensor,
}

/// A spec plus concrete parameters. Immutable after construction; mutation
/// operators return fresh models.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    spec: ModelSpec,
    /// One entry per layer; `None` for parameterless layers.
    params: Vec<Option<ParamPair>>,
}

impl TrainedModel {
    pub fn new(spec: ModelSpec, params: Vec<Option<ParamPair>>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.layers.len() {
            return Err(Error::shape_mismatch(
                format!("{} parameter entries", spec.layers.len()),
                format!("{}", params.len()),
                "one entry per layer",
            ));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            match (layer.kind, p) {
                (LayerKind::Dense { input, output }, Some(pair)) => {
                    if pair.weights.shape() != [output, input] || pair.bias.shape() != [output] {
                        return Err(Error::shape_mismatch(
                            format!("weights [{output}, {input}], bias [{output}]"),
                            format!(
                                "weights {:?}, bias {:?}",
                                pair.weights.shape(),
                                pair.bias.shape()
                            ),
                            format!("layer {i} parameters"),
                        ));
                    }
                }
                (
                    LayerKind::Conv2D {
                        in_channels,
                        out_channels,
                        kernel_h,
                        kernel_w,
                    },
                    Some(pair),
                ) => {
                    if pair.weights.shape() != [out_channels, in_channels, kernel_h, kernel_w]
                        || pair.bias.shape() != [out_channels]
                    {
                        return Err(Error::shape_mismatch(
                            format!(
                                "kernels [{out_channels}, {in_channels}, {kernel_h}, {kernel_w}], bias [{out_channels}]"
                            ),
                            format!(
                                "kernels {:?}, bias {:?}",
                                pair.weights.shape(),
                                pair.bias.shape()
                            ),
                            format!("layer {i} parameters"),
                        ));
                    }
                }
                (LayerKind::Dense { .. } | LayerKind::Conv2D { .. }, None) => {
                    return Err(Error::InvalidSpec(format!(
                        "layer {i} requires parameters but none were given"
                    )));
                }
                (_, Some(_)) => {
                    return Err(Error::InvalidSpec(format!(
                        "layer {i} takes no parameters but some were given"
                    )));
                }
                (_, None) => {}
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Option<ParamPair>] {
        &self.params
    }

    /// Deconstruct into spec and parameters (for mutation operators).
    pub fn into_parts(self) -> (ModelSpec, Vec<Option<ParamPair>>) {
        (self.spec, self.params)
    }

    pub fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    /// Bitwise parameter equality against another model with the same spec.
    pub fn params_bit_eq(&self, other: &TrainedModel) -> bool {
        self.spec == other.spec
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(x), Some(y)) => x.weights.bit_eq(&y.weights) && x.bias.bit_eq(&y.bias),
                _ => false,
            })
    }

    /// Forward pass for one sample; output is the class-probability vector.
    pub fn forward_sample(&self, sample: &Tensor) -> Result<Tensor> {
        if sample.shape() != self.spec.input_shape {
            return Err(Error::shape_mismatch(
                format!("{:?}", self.spec.input_shape),
                format!("{:?}", sample.shape()),
                "model input",
            ));
        }
        let mut cur = sample.clone();
        for (layer, p) in self.spec.layers.iter().zip(&self.params) {
            cur = layer_forward(layer, p.as_ref(), &cur)?;
        }
        Ok(cur)
    }

    /// Forward pass over a batch shaped `[n, ...input_shape]`; returns the
    /// row-stochastic `[n, num_classes]` probability matrix.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let (n, sample_shape) = split_batch_shape(batch)?;
        if sample_shape != self.spec.input_shape {
            return Err(Error::shape_mismatch(
                format!("{:?}", self.spec.input_shape),
                format!("{sample_shape:?}"),
                "batch sample shape",
            ));
        }
        let sample_len: usize = sample_shape.iter().product();
        let k = self.spec.num_classes;
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            let sample = Tensor::new(
                sample_shape.clone(),
                batch.data()[i * sample_len..(i + 1) * sample_len].to_vec(),
            )?;
            let probs = self.forward_sample(&sample)?;
            out.extend_from_slice(probs.data());
        }
        Tensor::new(vec![n, k], out)
    }

    /// Predicted label for one sample: argmax with ties broken by the
    /// lowest class index.
    pub fn predict_sample(&self, sample: &Tensor) -> Result<usize> {
        let probs = self.forward_sample(sample)?;
        Ok(argmax(probs.data()))
    }

    /// Predicted labels for a batch shaped `[n, ...input_shape]`.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let probs = self.forward(batch)?;
        let k = self.spec.num_classes;
        Ok(probs
            .data()
            .chunks_exact(k)
            .map(argmax)
            .collect())
    }
}

/// Argmax with ties resolved to the lowest index. Kill decisions depend on
/// this rule, so it is fixed here and nowhere else.
pub(crate) fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn layer_forward(
    layer: &LayerSpec,
    params: Option<&ParamPair>,
    input: &Tensor,
) -> Result<Tensor> {
    let mut out = match layer.kind {
        LayerKind::Dense { .. } => {
            let p = params.expect("validated dense layer has parameters");
            dense_forward(&p.weights, &p.bias, input)?
        }
        LayerKind::Conv2D { .. } => {
            let p = params.expect("validated conv layer has parameters");
            conv2d_forward(&p.weights, &p.bias, input)?
        }
        LayerKind::MaxPool2x2 => maxpool2x2(input)?,
        LayerKind::Flatten => input.reshaped(vec![input.numel()])?,
        LayerKind::Activation(f) => {
            let mut t = input.clone();
            f.apply(t.data_mut());
            t
        }
    };
    layer.activation.apply(out.data_mut());
    Ok(out)
}

/// Split `[n, ...sample]` into `n` and the per-sample shape.
fn split_batch_shape(batch: &Tensor) -> Result<(usize, Vec<usize>)> {
    match batch.shape() {
        [n, rest @ ..] if !rest.is_empty() => Ok((*n, rest.to_vec())),
        other => Err(Error::shape_mismatch(
            "[n, ...sample]",
            format!("{other:?}"),
            "batch tensor",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_softmax_model(k: usize) -> TrainedModel {
        let spec = ModelSpec::new(
            vec![k],
            vec![LayerSpec::dense(k, k, ActivationFn::Softmax)],
            k,
        )
        .unwrap();
        let mut w = Tensor::zeros(vec![k, k]);
        for i in 0..k {
            w.data_mut()[i * k + i] = 1.0;
        }
        TrainedModel::new(spec, vec![Some(ParamPair { weights: w, bias: Tensor::zeros(vec![k]) })])
            .unwrap()
    }

    #[test]
    fn validate_rejects_mid_model_softmax() {
        let r = ModelSpec::new(
            vec![4],
            vec![
                LayerSpec::dense(4, 4, ActivationFn::Softmax),
                LayerSpec::dense(4, 2, ActivationFn::Softmax),
            ],
            2,
        );
        assert!(matches!(r, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn validate_rejects_width_mismatch() {
        let r = ModelSpec::new(
            vec![4],
            vec![LayerSpec::dense(4, 3, ActivationFn::Softmax)],
            2,
        );
        assert!(matches!(r, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn validate_rejects_incompatible_chain() {
        let r = ModelSpec::new(
            vec![4],
            vec![
                LayerSpec::dense(4, 3, ActivationFn::Relu),
                LayerSpec::dense(4, 2, ActivationFn::Softmax),
            ],
            2,
        );
        assert!(r.is_err());
    }

    #[test]
    fn uniform_distribution_on_zero_input() {
        let model = identity_softmax_model(4);
        let out = model
            .forward_sample(&Tensor::zeros(vec![4]))
            .unwrap();
        for &p in out.data() {
            assert!((p - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn batch_forward_equals_stacked_samples() {
        use rand::Rng;
        let model = identity_softmax_model(3);
        let mut rng = crate::rng::stream(5, "batch");
        let data: Vec<f32> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = Tensor::new(vec![4, 3], data.clone()).unwrap();
        let stacked = model.forward(&batch).unwrap();
        for i in 0..4 {
            let sample = Tensor::new(vec![3], data[i * 3..(i + 1) * 3].to_vec()).unwrap();
            let single = model.forward_sample(&sample).unwrap();
            assert_eq!(&stacked.data()[i * 3..(i + 1) * 3], single.data());
        }
    }

    #[test]
    fn predict_argmax_and_tie_break() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn predict_agrees_with_forward_scan() {
        use rand::Rng;
        let model = identity_softmax_model(5);
        let mut rng = crate::rng::stream(6, "predict-oracle");
        let data: Vec<f32> = (0..100 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let batch = Tensor::new(vec![100, 5], data).unwrap();
        let labels = model.predict(&batch).unwrap();
        let probs = model.forward(&batch).unwrap();
        for (i, &label) in labels.iter().enumerate() {
            let row = &probs.data()[i * 5..(i + 1) * 5];
            let scan = row
                .iter()
                .enumerate()
                .fold((0usize, f32::NEG_INFINITY), |(bi, bv), (j, &v)| {
                    if v > bv {
                        (j, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            assert_eq!(label, scan);
        }
    }

    #[test]
    fn forward_is_pure() {
        use rand::Rng;
        let model = identity_softmax_model(4);
        let mut rng = crate::rng::stream(7, "pure");
        let data: Vec<f32> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let batch = Tensor::new(vec![2, 4], data).unwrap();
        let a = model.forward(&batch).unwrap();
        let b = model.forward(&batch).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn forward_shape_mismatch_errors() {
        let model = identity_softmax_model(4);
        assert!(model.forward_sample(&Tensor::zeros(vec![5])).is_err());
        assert!(model.forward(&Tensor::zeros(vec![2, 5])).is_err());
    }

    #[test]
    fn shape_preserving_layer_detection() {
        let spec = ModelSpec::new(
            vec![4],
            vec![
                LayerSpec::dense(4, 4, ActivationFn::Relu),
                LayerSpec::activation(ActivationFn::Relu),
                LayerSpec::dense(4, 2, ActivationFn::Softmax),
            ],
            2,
        )
        .unwrap();
        assert_eq!(spec.shape_preserving_layers().unwrap(), vec![0, 1]);
    }
}
