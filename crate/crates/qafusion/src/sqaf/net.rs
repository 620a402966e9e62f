//! The weight-prediction network: a small stack of 1-D convolutions over
//! stacked score curves, with hand-written forward and backward passes.
//!
//! Parameters live in one flat array; the architecture descriptor defines
//! how that array is partitioned, so checkpoints can swap in alternate layer
//! stacks without a format change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qaf::WeightVector;

use super::stack::CurveStack;

/// A channels-by-time activation buffer (row-major).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Signal {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Signal {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, t: usize) -> &mut f64 {
        &mut self.data[c * self.len + t]
    }
}

/// One layer of the architecture descriptor. Shapes are explicit; the
/// parameter count of the whole network follows from the list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 1-D convolution with symmetric zero padding.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        padding: usize,
    },
    Relu,
    /// Mean over the time axis; collapses length to 1.
    GlobalAvgPool,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn num_params(&self) -> usize {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => out_channels * in_channels * kernel_size + out_channels,
            LayerSpec::Dense {
                in_features,
                out_features,
            } => out_features * in_features + out_features,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                kernel_size,
                ..
            } => in_channels * kernel_size,
            LayerSpec::Dense { in_features, .. } => in_features,
            _ => 0,
        }
    }

    /// Output (channels, len) for a given input shape, validating
    /// compatibility.
    fn output_shape(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        let (channels, len) = input;
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                padding,
            } => {
                if channels != in_channels {
                    return Err(Error::InvalidParameter(format!(
                        "conv1d expects {in_channels} input channels, got {channels}"
                    )));
                }
                let padded = len + 2 * padding;
                if padded < kernel_size {
                    return Err(Error::InvalidParameter(format!(
                        "conv1d kernel {kernel_size} exceeds padded input length {padded}"
                    )));
                }
                Ok((out_channels, padded - kernel_size + 1))
            }
            LayerSpec::Relu => Ok((channels, len)),
            LayerSpec::GlobalAvgPool => Ok((channels, 1)),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if len != 1 {
                    return Err(Error::InvalidParameter(
                        "dense layer expects a pooled (length 1) input".into(),
                    ));
                }
                if channels != in_features {
                    return Err(Error::InvalidParameter(format!(
                        "dense expects {in_features} inputs, got {channels}"
                    )));
                }
                Ok((out_features, 1))
            }
            LayerSpec::Softmax => {
                if len != 1 {
                    return Err(Error::InvalidParameter(
                        "softmax expects a pooled (length 1) input".into(),
                    ));
                }
                Ok((channels, 1))
            }
        }
    }
}

/// Network architecture: input shape plus the layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Number of stacked features (K); also the output dimension.
    pub input_channels: usize,
    /// Curve prefix length (m).
    pub input_len: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// The stock layout: two stride-1 conv layers with kernel 5 (the first
    /// with "same" padding), ReLU activations, global average pooling, and
    /// a dense softmax head emitting one weight per feature.
    pub fn standard(num_features: usize, prefix_len: usize) -> Self {
        const CHANNELS: usize = 16;
        Self {
            input_channels: num_features,
            input_len: prefix_len,
            layers: vec![
                LayerSpec::Conv1d {
                    in_channels: num_features,
                    out_channels: CHANNELS,
                    kernel_size: 5,
                    padding: 2,
                },
                LayerSpec::Relu,
                LayerSpec::Conv1d {
                    in_channels: CHANNELS,
                    out_channels: CHANNELS,
                    kernel_size: 5,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense {
                    in_features: CHANNELS,
                    out_features: num_features,
                },
                LayerSpec::Softmax,
            ],
        }
    }

    /// Validate shape chaining and that the network ends in a softmax over
    /// exactly one weight per input feature.
    pub fn validate(&self) -> Result<()> {
        if self.input_channels < 1 || self.input_len < 1 {
            return Err(Error::InvalidParameter("empty network input".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("architecture has no layers".into()));
        }
        let mut shape = (self.input_channels, self.input_len);
        for layer in &self.layers {
            shape = layer.output_shape(shape)?;
        }
        if shape != (self.input_channels, 1) {
            return Err(Error::InvalidParameter(format!(
                "network must emit one weight per feature ({}), got shape {shape:?}",
                self.input_channels
            )));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            return Err(Error::InvalidParameter(
                "network must end in a softmax head".into(),
            ));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::num_params).sum()
    }

    /// Flat-array offset of each layer's parameter block.
    fn param_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            offsets.push(offset);
            offset += layer.num_params();
        }
        offsets
    }
}

/// The weight-prediction model: an architecture descriptor plus one flat
/// parameter array, and the seed that initialized it.
#[derive(Debug, Clone, PartialEq)]
pub struct SqafModel {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl SqafModel {
    /// Seeded initialization: every parameter uniform in
    /// [-sqrt(1/fan_in), +sqrt(1/fan_in)].
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.num_params());
        for layer in &arch.layers {
            let n = layer.num_params();
            if n == 0 {
                continue;
            }
            let bound = (1.0 / layer.fan_in() as f64).sqrt();
            params.extend((0..n).map(|_| rng.random::<f64>() * 2.0 * bound - bound));
        }
        Ok(Self { arch, params, seed })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::DataContract(format!(
                "architecture needs {} parameters, got {}",
                arch.num_params(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::DataContract(format!(
                "non-finite parameter at index {i}"
            )));
        }
        Ok(Self { arch, params, seed })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_stack(&self, stack: &CurveStack) -> Result<()> {
        if stack.num_features() != self.arch.input_channels
            || stack.prefix_len() != self.arch.input_len
        {
            return Err(Error::LengthMismatch {
                left: stack.num_features() * stack.prefix_len(),
                right: self.arch.input_channels * self.arch.input_len,
            });
        }
        Ok(())
    }

    /// Predict fusion weights for one stack of sorted score curves.
    pub fn forward(&self, stack: &CurveStack) -> Result<WeightVector> {
        let trace = self.forward_trace(stack)?;
        WeightVector::new(trace.output().data.clone())
    }

    /// Smallest absolute pre-activation entering any ReLU for this input.
    ///
    /// The loss is only piecewise smooth; a finite-difference probe is a
    /// valid derivative estimate only while it stays inside one linear
    /// region of every ReLU. Gradient checks use this to pick instances
    /// with enough headroom.
    pub fn relu_margin(&self, stack: &CurveStack) -> Result<f64> {
        let trace = self.forward_trace(stack)?;
        let mut margin = f64::INFINITY;
        for (i, layer) in self.arch.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Relu) {
                for &z in &trace.signals[i].data {
                    margin = margin.min(z.abs());
                }
            }
        }
        Ok(margin)
    }

    /// Forward pass retaining every intermediate activation for backprop.
    pub(crate) fn forward_trace(&self, stack: &CurveStack) -> Result<Trace> {
        self.check_stack(stack)?;
        let mut signals = Vec::with_capacity(self.arch.layers.len() + 1);
        signals.push(Signal {
            channels: stack.num_features(),
            len: stack.prefix_len(),
            data: stack.data().to_vec(),
        });
        let offsets = self.arch.param_offsets();
        for (layer, &offset) in self.arch.layers.iter().zip(&offsets) {
            let input = signals.last().unwrap();
            let output = self.layer_forward(layer, offset, input)?;
            signals.push(output);
        }
        Ok(Trace { signals })
    }

    #[allow(clippy::needless_range_loop)] // convolution indexing spans several arrays
    fn layer_forward(&self, layer: &LayerSpec, offset: usize, input: &Signal) -> Result<Signal> {
        let (out_c, out_len) = layer.output_shape((input.channels, input.len))?;
        let mut out = Signal::zeros(out_c, out_len);
        match *layer {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                padding,
            } => {
                let weights =
                    &self.params[offset..offset + out_channels * in_channels * kernel_size];
                let bias = &self.params[offset + out_channels * in_channels * kernel_size
                    ..offset + layer.num_params()];
                for o in 0..out_channels {
                    for t in 0..out_len {
                        let mut acc = bias[o];
                        for i in 0..in_channels {
                            let w_base = (o * in_channels + i) * kernel_size;
                            for j in 0..kernel_size {
                                // Index into the virtually padded input.
                                let tp = t + j;
                                if tp >= padding && tp - padding < input.len {
                                    acc += weights[w_base + j] * input.at(i, tp - padding);
                                }
                            }
                        }
                        *out.at_mut(o, t) = acc;
                    }
                }
            }
            LayerSpec::Relu => {
                for (y, &x) in out.data.iter_mut().zip(&input.data) {
                    *y = x.max(0.0);
                }
            }
            LayerSpec::GlobalAvgPool => {
                for c in 0..input.channels {
                    let mut acc = 0.0;
                    for t in 0..input.len {
                        acc += input.at(c, t);
                    }
                    *out.at_mut(c, 0) = acc / input.len as f64;
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let weights = &self.params[offset..offset + out_features * in_features];
                let bias =
                    &self.params[offset + out_features * in_features..offset + layer.num_params()];
                for o in 0..out_features {
                    let mut acc = bias[o];
                    for i in 0..in_features {
                        acc += weights[o * in_features + i] * input.data[i];
                    }
                    out.data[o] = acc;
                }
            }
            LayerSpec::Softmax => {
                let max = input.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (y, &x) in out.data.iter_mut().zip(&input.data) {
                    *y = (x - max).exp();
                    total += *y;
                }
                for y in &mut out.data {
                    *y /= total;
                }
            }
        }
        Ok(out)
    }

    /// Backpropagate a gradient w.r.t. the network output through every
    /// layer, returning the flat parameter gradient.
    pub(crate) fn backward_trace(&self, trace: &Trace, output_grad: &[f64]) -> Vec<f64> {
        let mut param_grad = vec![0.0; self.params.len()];
        let offsets = self.arch.param_offsets();
        let mut grad = Signal {
            channels: self.arch.input_channels,
            len: 1,
            data: output_grad.to_vec(),
        };
        for (idx, layer) in self.arch.layers.iter().enumerate().rev() {
            let input = &trace.signals[idx];
            let output = &trace.signals[idx + 1];
            grad = self.layer_backward(layer, offsets[idx], input, output, &grad, &mut param_grad);
        }
        param_grad
    }

    #[allow(clippy::needless_range_loop)] // convolution indexing spans several arrays
    fn layer_backward(
        &self,
        layer: &LayerSpec,
        offset: usize,
        input: &Signal,
        output: &Signal,
        out_grad: &Signal,
        param_grad: &mut [f64],
    ) -> Signal {
        match *layer {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                padding,
            } => {
                let weights =
                    &self.params[offset..offset + out_channels * in_channels * kernel_size];
                let (w_grad, rest) = param_grad[offset..offset + layer.num_params()]
                    .split_at_mut(out_channels * in_channels * kernel_size);
                let b_grad = rest;
                let mut in_grad = Signal::zeros(input.channels, input.len);
                for o in 0..out_channels {
                    for t in 0..output.len {
                        let g = out_grad.at(o, t);
                        b_grad[o] += g;
                        for i in 0..in_channels {
                            let w_base = (o * in_channels + i) * kernel_size;
                            for j in 0..kernel_size {
                                let tp = t + j;
                                if tp >= padding && tp - padding < input.len {
                                    let x = input.at(i, tp - padding);
                                    w_grad[w_base + j] += g * x;
                                    *in_grad.at_mut(i, tp - padding) += g * weights[w_base + j];
                                }
                            }
                        }
                    }
                }
                in_grad
            }
            LayerSpec::Relu => {
                let mut in_grad = Signal::zeros(input.channels, input.len);
                for ((g, &x), &og) in in_grad.data.iter_mut().zip(&input.data).zip(&out_grad.data) {
                    *g = if x > 0.0 { og } else { 0.0 };
                }
                in_grad
            }
            LayerSpec::GlobalAvgPool => {
                let mut in_grad = Signal::zeros(input.channels, input.len);
                let scale = 1.0 / input.len as f64;
                for c in 0..input.channels {
                    let g = out_grad.at(c, 0) * scale;
                    for t in 0..input.len {
                        *in_grad.at_mut(c, t) = g;
                    }
                }
                in_grad
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let weights = &self.params[offset..offset + out_features * in_features];
                let (w_grad, b_grad) = param_grad[offset..offset + layer.num_params()]
                    .split_at_mut(out_features * in_features);
                let mut in_grad = Signal::zeros(in_features, 1);
                for o in 0..out_features {
                    let g = out_grad.data[o];
                    b_grad[o] += g;
                    for i in 0..in_features {
                        w_grad[o * in_features + i] += g * input.data[i];
                        in_grad.data[i] += g * weights[o * in_features + i];
                    }
                }
                in_grad
            }
            LayerSpec::Softmax => softmax_backward(&output.data, &out_grad.data),
        }
    }
}

/// Softmax Jacobian-vector product: `dz_i = y_i (g_i - sum_j g_j y_j)`.
pub(crate) fn softmax_backward(y: &[f64], out_grad: &[f64]) -> Signal {
    let dot: f64 = y.iter().zip(out_grad).map(|(yi, gi)| yi * gi).sum();
    Signal {
        channels: y.len(),
        len: 1,
        data: y
            .iter()
            .zip(out_grad)
            .map(|(yi, gi)| yi * (gi - dot))
            .collect(),
    }
}

/// All intermediate activations of one forward pass: `signals[0]` is the
/// input, `signals[i + 1]` the output of layer `i`.
pub(crate) struct Trace {
    signals: Vec<Signal>,
}

impl Trace {
    pub fn output(&self) -> &Signal {
        self.signals.last().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack_from_rows(rows: &[Vec<f64>]) -> CurveStack {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        CurveStack::from_sorted_values(&refs, rows[0].len()).unwrap()
    }

    fn descending(seed: u64, len: usize) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    }

    #[test]
    fn standard_architecture_validates() {
        let arch = Architecture::standard(4, 100);
        arch.validate().unwrap();
        // conv1: 16*4*5+16, conv2: 16*16*5+16, dense: 4*16+4
        assert_eq!(arch.num_params(), 336 + 1296 + 68);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let arch = Architecture {
            input_channels: 4,
            input_len: 100,
            layers: vec![LayerSpec::Dense {
                in_features: 16,
                out_features: 4,
            }],
        };
        assert!(arch.validate().is_err());

        let arch = Architecture::standard(4, 100);
        let model = SqafModel::init(arch, 0).unwrap();
        let stack = stack_from_rows(&vec![descending(1, 50); 4]);
        assert!(model.forward(&stack).is_err());
    }

    #[test]
    fn forward_is_a_probability_vector() {
        let model = SqafModel::init(Architecture::standard(4, 100), 7).unwrap();
        for seed in 0..20 {
            let rows: Vec<Vec<f64>> = (0..4).map(|i| descending(seed * 10 + i, 100)).collect();
            let w = model.forward(&stack_from_rows(&rows)).unwrap();
            let sum: f64 = w.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(w.as_slice().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let model = SqafModel::init(Architecture::standard(3, 40), 5).unwrap();
        let rows: Vec<Vec<f64>> = (0..3).map(|i| descending(i as u64, 40)).collect();
        let stack = stack_from_rows(&rows);
        let a = model.forward(&stack).unwrap();
        let b = model.forward(&stack).unwrap();
        let bits_a: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn row_permutation_changes_the_output() {
        // Rows are channels, not set elements: the network is not
        // permutation-equivariant.
        let model = SqafModel::init(Architecture::standard(2, 30), 3).unwrap();
        let a = descending(100, 30);
        let b = descending(200, 30);
        let w_ab = model
            .forward(&stack_from_rows(&[a.clone(), b.clone()]))
            .unwrap();
        let w_ba = model.forward(&stack_from_rows(&[b, a])).unwrap();
        assert!(
            (w_ab.as_slice()[0] - w_ba.as_slice()[1]).abs() > 1e-9,
            "permuting rows unexpectedly permuted outputs: {w_ab:?} vs {w_ba:?}"
        );
    }

    #[test]
    fn softmax_gradient_rows_sum_to_zero() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let z: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let y: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let upstream: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let dz = softmax_backward(&y, &upstream);
            let sum: f64 = dz.data.iter().sum();
            assert!(sum.abs() < 1e-12, "logit gradients sum to {sum}");
        }
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let arch = Architecture::standard(4, 100);
        let a = SqafModel::init(arch.clone(), 9).unwrap();
        let b = SqafModel::init(arch.clone(), 9).unwrap();
        assert_eq!(a, b);
        let c = SqafModel::init(arch, 10).unwrap();
        assert_ne!(a, c);
        // First layer bound: sqrt(1 / (4 * 5)).
        let bound = (1.0f64 / 20.0).sqrt();
        assert!(a.params[..336].iter().all(|p| p.abs() <= bound));
    }
}
