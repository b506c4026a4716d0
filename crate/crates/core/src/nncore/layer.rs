//! Layer vocabulary and per-layer forward passes.
//!
//! All reductions accumulate in f64 before rounding back to f32 so that
//! identical inputs always reproduce identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::tensor::Tensor;

/// Activation function attached to a layer or carried by a standalone
/// activation layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFn {
    Identity,
    Relu,
    Softmax,
}

impl ActivationFn {
    pub fn name(self) -> &'static str {
        match self {
            ActivationFn::Identity => "identity",
            ActivationFn::Relu => "relu",
            ActivationFn::Softmax => "softmax",
        }
    }

    /// Apply in place. Softmax is the stabilized max-shift form.
    pub fn apply(self, values: &mut [f32]) {
        match self {
            ActivationFn::Identity => {}
            ActivationFn::Relu => {
                for v in values.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            ActivationFn::Softmax => softmax_in_place(values),
        }
    }
}

/// Structural kind of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        input: usize,
        output: usize,
    },
    Conv2D {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    MaxPool2x2,
    Flatten,
    /// Standalone activation layer; the function is the payload.
    Activation(ActivationFn),
}

/// One layer of a model spec: a kind plus the activation attribute used by
/// Dense/Conv2D layers (Identity for everything else).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: ActivationFn,
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize, activation: ActivationFn) -> Self {
        Self {
            kind: LayerKind::Dense { input, output },
            activation,
        }
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        activation: ActivationFn,
    ) -> Self {
        Self {
            kind: LayerKind::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            },
            activation,
        }
    }

    pub fn maxpool2x2() -> Self {
        Self {
            kind: LayerKind::MaxPool2x2,
            activation: ActivationFn::Identity,
        }
    }

    pub fn flatten() -> Self {
        Self {
            kind: LayerKind::Flatten,
            activation: ActivationFn::Identity,
        }
    }

    pub fn activation(f: ActivationFn) -> Self {
        Self {
            kind: LayerKind::Activation(f),
            activation: ActivationFn::Identity,
        }
    }

    /// True for layers that carry trainable parameters.
    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Dense { .. } | LayerKind::Conv2D { .. }
        )
    }

    /// The activation this layer effectively applies to its output.
    pub fn effective_activation(&self) -> ActivationFn {
        match self.kind {
            LayerKind::Activation(f) => f,
            _ => self.activation,
        }
    }

    /// Output shape for a given input shape, or an error when the layer
    /// cannot consume that shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self.kind {
            LayerKind::Dense { input: n_in, output } => {
                if input == [n_in] {
                    Ok(vec![output])
                } else {
                    Err(Error::shape_mismatch(
                        format!("[{n_in}]"),
                        format!("{input:?}"),
                        "dense layer input",
                    ))
                }
            }
            LayerKind::Conv2D {
                in_channels,
                kernel_h,
                kernel_w,
                out_channels,
            } => {
                let [c, h, w] = *input else {
                    return Err(Error::shape_mismatch(
                        "[channels, height, width]",
                        format!("{input:?}"),
                        "conv2d layer input",
                    ));
                };
                if c != in_channels {
                    return Err(Error::shape_mismatch(
                        format!("{in_channels} channels"),
                        format!("{c} channels"),
                        "conv2d layer input",
                    ));
                }
                if kernel_h > h || kernel_w > w {
                    return Err(Error::shape_mismatch(
                        format!("image at least {kernel_h}x{kernel_w}"),
                        format!("{h}x{w}"),
                        "conv2d kernel must fit inside image",
                    ));
                }
                Ok(vec![out_channels, h - kernel_h + 1, w - kernel_w + 1])
            }
            LayerKind::MaxPool2x2 => {
                let [c, h, w] = *input else {
                    return Err(Error::shape_mismatch(
                        "[channels, height, width]",
                        format!("{input:?}"),
                        "maxpool layer input",
                    ));
                };
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape_mismatch(
                        "even spatial dimensions",
                        format!("{h}x{w}"),
                        "maxpool2x2 input",
                    ));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Activation(_) => Ok(input.to_vec()),
        }
    }
}

/// y[i] = sum_j W[i,j] * x[j] + b[i], accumulated in f64.
pub fn dense_forward(weights: &Tensor, bias: &Tensor, x: &Tensor) -> Result<Tensor> {
    let [out, n_in] = *weights.shape() else {
        return Err(Error::shape_mismatch(
            "[out, in] weight matrix",
            format!("{:?}", weights.shape()),
            "dense_forward",
        ));
    };
    if bias.shape() != [out] {
        return Err(Error::shape_mismatch(
            format!("[{out}] bias"),
            format!("{:?}", bias.shape()),
            "dense_forward",
        ));
    }
    if x.numel() != n_in || x.shape().len() != 1 {
        return Err(Error::shape_mismatch(
            format!("[{n_in}] input"),
            format!("{:?}", x.shape()),
            "dense_forward",
        ));
    }
    let w = weights.data();
    let xv = x.data();
    let mut y = vec![0.0f32; out];
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &w[i * n_in..(i + 1) * n_in];
        let mut acc = 0.0f64;
        for (wij, xj) in row.iter().zip(xv) {
            acc += f64::from(*wij) * f64::from(*xj);
        }
        *yi = (acc + f64::from(bias.data()[i])) as f32;
    }
    Tensor::new(vec![out], y)
}

/// Valid-padding stride-1 cross-correlation.
///
/// `kernels` is `[out_ch, in_ch, kh, kw]`, `bias` is `[out_ch]`, `image` is
/// `[in_ch, h, w]`; the output is `[out_ch, h-kh+1, w-kw+1]`.
pub fn conv2d_forward(kernels: &Tensor, bias: &Tensor, image: &Tensor) -> Result<Tensor> {
    let [oc, ic, kh, kw] = *kernels.shape() else {
        return Err(Error::shape_mismatch(
            "[out_ch, in_ch, kh, kw] kernels",
            format!("{:?}", kernels.shape()),
            "conv2d_forward",
        ));
    };
    let [c, h, w] = *image.shape() else {
        return Err(Error::shape_mismatch(
            "[channels, height, width] image",
            format!("{:?}", image.shape()),
            "conv2d_forward",
        ));
    };
    if c != ic {
        return Err(Error::shape_mismatch(
            format!("{ic} input channels"),
            format!("{c}"),
            "conv2d_forward",
        ));
    }
    if bias.shape() != [oc] {
        return Err(Error::shape_mismatch(
            format!("[{oc}] bias"),
            format!("{:?}", bias.shape()),
            "conv2d_forward",
        ));
    }
    if kh > h || kw > w {
        return Err(Error::shape_mismatch(
            format!("image at least {kh}x{kw}"),
            format!("{h}x{w}"),
            "conv2d kernel must fit inside image",
        ));
    }
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    let kd = kernels.data();
    let id = image.data();
    let mut out = vec![0.0f32; oc * oh * ow];
    for o in 0..oc {
        let b = f64::from(bias.data()[o]);
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0f64;
                for ci in 0..ic {
                    for dy in 0..kh {
                        let krow = ((o * ic + ci) * kh + dy) * kw;
                        let irow = (ci * h + y + dy) * w + x;
                        for dx in 0..kw {
                            acc += f64::from(kd[krow + dx]) * f64::from(id[irow + dx]);
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = (acc + b) as f32;
            }
        }
    }
    Tensor::new(vec![oc, oh, ow], out)
}

/// 2x2 max pooling with stride 2; spatial dimensions must be even.
pub fn maxpool2x2(feature_map: &Tensor) -> Result<Tensor> {
    let [c, h, w] = *feature_map.shape() else {
        return Err(Error::shape_mismatch(
            "[channels, height, width]",
            format!("{:?}", feature_map.shape()),
            "maxpool2x2",
        ));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape_mismatch(
            "even spatial dimensions",
            format!("{h}x{w}"),
            "maxpool2x2",
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let d = feature_map.data();
    let mut out = vec![0.0f32; c * oh * ow];
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let base = (ci * h + 2 * y) * w + 2 * x;
                let m = d[base]
                    .max(d[base + 1])
                    .max(d[base + w])
                    .max(d[base + w + 1]);
                out[(ci * oh + y) * ow + x] = m;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Stabilized softmax over a logit vector.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.data().to_vec();
    softmax_in_place(&mut out);
    Tensor::new(logits.shape().to_vec(), out).expect("same element count")
}

/// Max-shifted softmax; sums accumulate in f64.
pub(crate) fn softmax_in_place(values: &mut [f32]) {
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for v in values.iter_mut() {
        let e = f64::from(*v - max).exp();
        sum += e;
        *v = e as f32;
    }
    let inv = 1.0 / sum;
    for v in values.iter_mut() {
        *v = (f64::from(*v) * inv) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn dense_identity_weights() {
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = t(&[2], &[0.0, 0.0]);
        let x = t(&[2], &[2.0, 3.0]);
        assert_eq!(dense_forward(&w, &b, &x).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn dense_forced_by_definition() {
        let w = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2], &[0.5, -0.5]);
        let x = t(&[2], &[1.0, 1.0]);
        assert_eq!(dense_forward(&w, &b, &x).unwrap().data(), &[3.5, 6.5]);
    }

    #[test]
    fn dense_zero_weights_yield_bias() {
        let w = Tensor::zeros(vec![2, 3]);
        let b = t(&[2], &[7.0, -7.0]);
        let x = t(&[3], &[0.3, -5.0, 12.0]);
        assert_eq!(dense_forward(&w, &b, &x).unwrap().data(), &[7.0, -7.0]);
    }

    #[test]
    fn dense_shape_mismatch_names_both_shapes() {
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = t(&[2], &[0.0, 0.0]);
        let x = t(&[3], &[1.0, 2.0, 3.0]);
        let err = dense_forward(&w, &b, &x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn conv_identity_kernel() {
        let k = t(&[1, 1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let img = t(&[1, 2, 2], &[0.1, 0.2, 0.3, 0.4]);
        let out = conv2d_forward(&k, &b, &img).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn conv_all_ones_sums_window() {
        let k = t(&[1, 1, 2, 2], &[1.0; 4]);
        let b = t(&[1], &[0.0]);
        let img = t(&[1, 2, 2], &[1.0; 4]);
        let out = conv2d_forward(&k, &b, &img).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn conv_kernel_larger_than_image_errors() {
        let k = t(&[1, 1, 3, 3], &[1.0; 9]);
        let b = t(&[1], &[0.0]);
        let img = t(&[1, 2, 2], &[1.0; 4]);
        assert!(conv2d_forward(&k, &b, &img).is_err());
    }

    /// Independent quadruple-loop oracle for valid cross-correlation.
    fn conv_oracle(kernels: &Tensor, bias: &Tensor, image: &Tensor) -> Vec<f32> {
        let [oc, ic, kh, kw] = *kernels.shape() else { unreachable!() };
        let [_, h, w] = *image.shape() else { unreachable!() };
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut out = vec![0.0f32; oc * oh * ow];
        for o in 0..oc {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = f64::from(bias.data()[o]);
                    for ci in 0..ic {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let kv = kernels.data()[((o * ic + ci) * kh + dy) * kw + dx];
                                let iv = image.data()[(ci * h + y + dy) * w + x + dx];
                                acc += f64::from(kv) * f64::from(iv);
                            }
                        }
                    }
                    out[(o * oh + y) * ow + x] = acc as f32;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_loop_oracle_on_random_input() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, "conv-oracle");
        let k = Tensor::new(
            vec![2, 1, 3, 3],
            (0..18).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let b = Tensor::new(
            vec![2],
            (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let img = Tensor::new(
            vec![1, 5, 5],
            (0..25).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let got = conv2d_forward(&k, &b, &img).unwrap();
        let want = conv_oracle(&k, &b, &img);
        for (g, w) in got.data().iter().zip(&want) {
            let denom = w.abs().max(1e-6);
            assert!((g - w).abs() / denom < 1e-5, "got {g}, want {w}");
        }
    }

    #[test]
    fn maxpool_basic_and_constant() {
        let m = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(maxpool2x2(&m).unwrap().data(), &[4.0]);

        let c = t(&[1, 4, 4], &[0.25; 16]);
        let out = maxpool2x2(&c).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn maxpool_odd_dims_error() {
        let m = t(&[1, 3, 2], &[0.0; 6]);
        assert!(maxpool2x2(&m).is_err());
    }

    #[test]
    fn maxpool_matches_window_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::stream(12, "pool-oracle");
        let data: Vec<f32> = (0..2 * 4 * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = Tensor::new(vec![2, 4, 4], data.clone()).unwrap();
        let out = maxpool2x2(&m).unwrap();
        for c in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let mut best = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            best = best.max(data[(c * 4 + 2 * y + dy) * 4 + 2 * x + dx]);
                        }
                    }
                    assert_eq!(out.data()[(c * 2 + y) * 2 + x], best);
                }
            }
        }
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let out = softmax(&t(&[2], &[0.0, 0.0]));
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_shift_invariant_no_overflow() {
        let out = softmax(&t(&[2], &[1000.0, 1000.0]));
        assert!(out.is_finite());
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_two_to_one_ratio() {
        let out = softmax(&t(&[2], &[std::f32::consts::LN_2, 0.0]));
        assert!((out.data()[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((out.data()[1] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        use rand::Rng;
        let mut rng = crate::rng::stream(13, "softmax-sum");
        for _ in 0..100 {
            let logits: Vec<f32> = (0..10).map(|_| rng.random_range(-30.0..30.0)).collect();
            let out = softmax(&Tensor::from_vec(logits));
            let sum: f32 = out.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "sum {sum}");
            assert!(out.data().iter().all(|&p| p >= 0.0));
        }
    }
}
