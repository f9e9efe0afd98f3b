use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use super::activation::{selu, selu_grad};
use super::conv::{col2im, conv_backward, conv_forward, im2col, KERNEL};
use super::init::he_init;
use super::loss::{asym_term, asym_term_grad};
use super::pool::{pool_backward, pool_forward, pooled_len};
use super::Tensor;
use crate::error::{Error, Result};

/// Samples per work unit in batched passes. Gradients are summed inside a
/// chunk and then across chunks in index order, so results do not depend on
/// the number of worker threads.
const CHUNK: usize = 8;

/// One convolutional stage: 3x3 conv (stride 1, same padding, dilated),
/// SELU, then optional average pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub pool: Option<usize>,
}

impl LayerSpec {
    pub const fn new(out_channels: usize, dilation: usize, pool: Option<usize>) -> Self {
        LayerSpec {
            out_channels,
            kernel: KERNEL,
            dilation,
            pool,
        }
    }
}

/// Per-layer tensor geometry derived from an [`Architecture`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl LayerShape {
    fn hw(&self) -> usize {
        self.height * self.width
    }

    pub fn output(&self) -> [usize; 3] {
        [self.out_channels, self.out_height, self.out_width]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_channels: usize,
    pub height: usize,
    pub width: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// The six-layer value network on 3 x 30 x 30 inputs.
    pub fn value_net() -> Self {
        Architecture {
            input_channels: 3,
            height: 30,
            width: 30,
            layers: vec![
                LayerSpec::new(4, 1, None),
                LayerSpec::new(8, 2, None),
                LayerSpec::new(16, 4, None),
                LayerSpec::new(32, 8, Some(4)),
                LayerSpec::new(64, 1, Some(2)),
                LayerSpec::new(1, 1, Some(2)),
            ],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.height * self.width
    }

    /// Geometry of every layer; fails if a layer does not fit or the network
    /// does not end in a single scalar.
    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        if self.layers.is_empty() || self.input_channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Shape(format!("degenerate architecture {self}")));
        }
        let (mut c, mut h, mut w) = (self.input_channels, self.height, self.width);
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            if spec.kernel != KERNEL || spec.dilation == 0 || spec.out_channels == 0 {
                return Err(Error::Shape(format!("layer {i}: unsupported spec {spec:?}")));
            }
            let (ho, wo) = match spec.pool {
                None => (h, w),
                Some(p) if p > 0 && p <= h && p <= w => (pooled_len(h, p), pooled_len(w, p)),
                Some(p) => {
                    return Err(Error::Shape(format!("layer {i}: cannot pool {h}x{w} with window {p}")))
                }
            };
            shapes.push(LayerShape {
                in_channels: c,
                height: h,
                width: w,
                out_channels: spec.out_channels,
                out_height: ho,
                out_width: wo,
            });
            (c, h, w) = (spec.out_channels, ho, wo);
        }
        if (c, h, w) != (1, 1, 1) {
            return Err(Error::Shape(format!(
                "network must end in a 1x1x1 map, ends in {c}x{h}x{w}"
            )));
        }
        Ok(shapes)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.input_channels, self.height, self.width)?;
        for l in &self.layers {
            write!(f, " -> conv{}d{}", l.out_channels, l.dilation)?;
            if let Some(p) = l.pool {
                write!(f, "/pool{p}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub shape: LayerShape,
    /// C_out x C_in x 3 x 3.
    pub weight: Tensor,
    /// C_out.
    pub bias: Tensor,
}

/// Gradients with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| Tensor::zeros(l.weight.shape())).collect(),
            biases: net.layers.iter().map(|l| Tensor::zeros(l.bias.shape())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        let pairs = self
            .weights
            .iter_mut()
            .zip(&other.weights)
            .chain(self.biases.iter_mut().zip(&other.biases));
        for (a, b) in pairs {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    /// Parameter gradients in the order of [`Network::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.data()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .into_iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct LayerTrace {
    cols: Vec<f64>,
    z: Vec<f64>,
}

/// Fully convolutional value network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
}

impl Network {
    /// Variance-scaling weights, zero biases.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let shapes = arch.shapes()?;
        let layers = arch
            .layers
            .iter()
            .zip(shapes)
            .map(|(&spec, shape)| Layer {
                spec,
                shape,
                weight: he_init(&[spec.out_channels, shape.in_channels, KERNEL, KERNEL], rng),
                bias: Tensor::zeros(&[spec.out_channels]),
            })
            .collect();
        Ok(Network { arch, layers })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let shapes = arch.shapes()?;
        let layers = arch
            .layers
            .iter()
            .zip(shapes)
            .map(|(&spec, shape)| Layer {
                spec,
                shape,
                weight: Tensor::zeros(&[spec.out_channels, shape.in_channels, KERNEL, KERNEL]),
                bias: Tensor::zeros(&[spec.out_channels]),
            })
            .collect();
        Ok(Network { arch, layers })
    }

    /// Builds a network from explicit parameters, checking their shapes.
    pub fn from_parameters(arch: Architecture, params: Vec<(Tensor, Tensor)>) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        if params.len() != net.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter pairs for {} layers",
                params.len(),
                net.layers.len()
            )));
        }
        for (layer, (w, b)) in net.layers.iter_mut().zip(params) {
            w.expect_shape(layer.weight.shape(), "layer weight")?;
            b.expect_shape(layer.bias.shape(), "layer bias")?;
            layer.weight = w;
            layer.bias = b;
        }
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight and bias buffers, layer by layer.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.data_mut()])
            .collect()
    }

    fn layer_forward(&self, l: usize, input: &[f64], cols: &mut Vec<f64>, z: &mut Vec<f64>, out: &mut Vec<f64>) {
        let layer = &self.layers[l];
        let s = layer.shape;
        cols.resize(s.in_channels * KERNEL * KERNEL * s.hw(), 0.0);
        z.resize(s.out_channels * s.hw(), 0.0);
        im2col(input, s.in_channels, s.height, s.width, layer.spec.dilation, cols);
        conv_forward(cols, layer.weight.data(), layer.bias.data(), s.in_channels, s.hw(), z);
        match layer.spec.pool {
            None => {
                out.clear();
                out.extend(z.iter().map(|&v| selu(v)));
            }
            Some(p) => {
                let activated: Vec<f64> = z.iter().map(|&v| selu(v)).collect();
                out.resize(s.out_channels * s.out_height * s.out_width, 0.0);
                pool_forward(&activated, s.out_channels, s.height, s.width, p, out);
            }
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(Error::Shape(format!(
                "input of {} values, network expects {}",
                input.len(),
                self.arch.input_len()
            )));
        }
        Ok(())
    }

    /// Scalar prediction for one C x H x W input.
    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        Ok(self.predict_unchecked(input))
    }

    fn predict_unchecked(&self, input: &[f64]) -> f64 {
        let (mut cols, mut z) = (Vec::new(), Vec::new());
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layers.len() {
            self.layer_forward(l, &current, &mut cols, &mut z, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        current[0]
    }

    /// Output shape of every layer for one sample, as C x H x W.
    pub fn trace_shapes(&self, input: &[f64]) -> Result<Vec<[usize; 3]>> {
        self.check_input(input)?;
        let (mut cols, mut z) = (Vec::new(), Vec::new());
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let mut shapes = Vec::new();
        for l in 0..self.layers.len() {
            self.layer_forward(l, &current, &mut cols, &mut z, &mut next);
            let s = self.layers[l].shape;
            assert_eq!(next.len(), s.out_channels * s.out_height * s.out_width);
            shapes.push(s.output());
            std::mem::swap(&mut current, &mut next);
        }
        Ok(shapes)
    }

    fn forward_trace(&self, input: &[f64]) -> (f64, Vec<LayerTrace>) {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for l in 0..self.layers.len() {
            let (mut cols, mut z, mut out) = (Vec::new(), Vec::new(), Vec::new());
            self.layer_forward(l, &current, &mut cols, &mut z, &mut out);
            traces.push(LayerTrace { cols, z });
            current = out;
        }
        (current[0], traces)
    }

    fn backward_trace(&self, traces: &[LayerTrace], dpred: f64, grads: &mut Gradients) {
        let mut dy = vec![dpred];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let s = layer.shape;
            let trace = &traces[l];
            let mut dz = match layer.spec.pool {
                None => dy,
                Some(p) => {
                    let mut da = vec![0.0; s.out_channels * s.hw()];
                    pool_backward(&dy, s.out_channels, s.height, s.width, p, &mut da);
                    da
                }
            };
            for (g, &z) in dz.iter_mut().zip(&trace.z) {
                *g *= selu_grad(z);
            }
            let mut dcols = (l > 0).then(|| vec![0.0; trace.cols.len()]);
            conv_backward(
                &trace.cols,
                layer.weight.data(),
                &dz,
                s.in_channels,
                s.hw(),
                grads.weights[l].data_mut(),
                grads.biases[l].data_mut(),
                dcols.as_deref_mut(),
            );
            dy = match dcols {
                Some(dcols) => {
                    let mut dx = vec![0.0; s.in_channels * s.hw()];
                    col2im(&dcols, s.in_channels, s.height, s.width, layer.spec.dilation, &mut dx);
                    dx
                }
                None => Vec::new(),
            };
        }
    }

    /// Predictions for `n` samples produced by `fill`, which writes sample
    /// `i` into the provided input buffer.
    pub fn predict_with<F>(&self, n: usize, fill: F) -> Vec<f64>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let len = self.arch.input_len();
        (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; len],
                |buf, i| {
                    fill(i, buf);
                    self.predict_unchecked(buf)
                },
            )
            .collect()
    }

    /// Batched forward pass over an N x C x H x W tensor.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let len = self.arch.input_len();
        let preds = self.predict_with(n, |i, buf| buf.copy_from_slice(&batch.data()[i * len..(i + 1) * len]));
        Tensor::from_vec(&[n], preds)
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let a = &self.arch;
        match batch.shape() {
            &[n, c, h, w] if (c, h, w) == (a.input_channels, a.height, a.width) => Ok(n),
            other => Err(Error::Shape(format!(
                "batch {other:?} does not match input {}x{}x{}",
                a.input_channels, a.height, a.width
            ))),
        }
    }

    /// Asymmetric loss over `targets.len()` samples produced by `fill`, with
    /// exact gradients for every parameter.
    pub fn loss_and_gradients_with<F>(&self, targets: &[f64], a: f64, fill: F) -> (f64, Gradients)
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let n = targets.len();
        let len = self.arch.input_len();
        let chunks: Vec<(f64, Gradients)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut grads = Gradients::zeros_like(self);
                let mut loss = 0.0;
                let mut buf = vec![0.0; len];
                let start = chunk * CHUNK;
                for (i, &target) in targets.iter().enumerate().skip(start).take(CHUNK) {
                    fill(i, &mut buf);
                    let (pred, traces) = self.forward_trace(&buf);
                    let e = target - pred;
                    loss += asym_term(e, a);
                    let dpred = asym_term_grad(e, a) / n as f64;
                    if dpred != 0.0 {
                        self.backward_trace(&traces, dpred, &mut grads);
                    }
                }
                (loss, grads)
            })
            .collect();
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (l, g) in &chunks {
            loss += l;
            total.add_assign(g);
        }
        (if n == 0 { 0.0 } else { loss / n as f64 }, total)
    }

    /// Loss and gradients for an N x C x H x W batch.
    pub fn backward(&self, batch: &Tensor, targets: &[f64], a: f64) -> Result<(f64, Gradients)> {
        let n = self.check_batch(batch)?;
        if targets.len() != n {
            return Err(Error::Shape(format!("{} targets for a batch of {n}", targets.len())));
        }
        let len = self.arch.input_len();
        Ok(self.loss_and_gradients_with(targets, a, |i, buf| {
            buf.copy_from_slice(&batch.data()[i * len..(i + 1) * len])
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn value_net_shapes() {
        let shapes = Architecture::value_net().shapes().unwrap();
        let outputs: Vec<_> = shapes.iter().map(|s| s.output()).collect();
        assert_eq!(
            outputs,
            vec![[4, 30, 30], [8, 30, 30], [16, 30, 30], [32, 7, 7], [64, 3, 3], [1, 1, 1]]
        );
    }

    #[test]
    fn rejects_non_scalar_output() {
        let arch = Architecture {
            input_channels: 3,
            height: 4,
            width: 4,
            layers: vec![LayerSpec::new(2, 1, Some(2))],
        };
        assert!(arch.shapes().is_err());
    }

    #[test]
    fn zero_network_predicts_zero() {
        let net = Network::zeros(Architecture::value_net()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let input: Vec<f64> = (0..2700).map(|_| rng.gen_range(0.0..1.0)).collect();
        assert_eq!(net.predict(&input).unwrap(), 0.0);
    }

    #[test]
    fn batch_order_is_preserved() {
        let net = Network::new(Architecture::value_net(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 5;
        let data: Vec<f64> = (0..n * 2700).map(|_| rng.gen_range(0.0..1.0)).collect();
        let batch = Tensor::from_vec(&[n, 3, 30, 30], data.clone()).unwrap();
        let preds = net.forward(&batch).unwrap();
        assert_eq!(preds.shape(), &[n]);
        for i in 0..n {
            assert_eq!(preds.data()[i], net.predict(&data[i * 2700..(i + 1) * 2700]).unwrap());
        }
        assert!(net.forward(&Tensor::zeros(&[2, 3, 30, 29])).is_err());
    }

    #[test]
    fn zero_error_gives_zero_gradients() {
        let arch = Architecture {
            input_channels: 3,
            height: 4,
            width: 4,
            layers: vec![LayerSpec::new(2, 2, Some(2)), LayerSpec::new(1, 1, Some(2))],
        };
        let net = Network::new(arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let inputs: Vec<f64> = (0..48).map(|i| (i % 5) as f64 * 0.1).collect();
        let batch = Tensor::from_vec(&[1, 3, 4, 4], inputs).unwrap();
        let pred = net.forward(&batch).unwrap().data()[0];
        let (loss, grads) = net.backward(&batch, &[pred], -2.5).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }
}
