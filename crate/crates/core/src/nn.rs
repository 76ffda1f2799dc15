//! Dense feed-forward networks with manual backpropagation, Adam, and a
//! running input normalizer.
//!
//! Parameters of a [`DenseNet`] live in one flat vector. Layer `l` stores
//! its weights as an `in x out` row-major block followed by `out` biases,
//! so optimizers and Polyak averaging work on plain slices.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math::{self, axpy, dot};
use crate::{Error, Result, Rng};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stack equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("matrix row", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Copy of columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => math::tanh(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Tanh => math::tanh(z),
            OutputActivation::Sigmoid => math::sigmoid(z),
        }
    }

    fn derivative(self, a: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Tanh => 1.0 - a * a,
            OutputActivation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[0]` is the input; `activations[l + 1]` is the output of layer `l`.
    pub activations: Vec<Matrix>,
    /// Pre-activation values of every layer.
    pub pre_activations: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("tape has at least the input")
    }
}

/// Gradients of a scalar loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same layout as [`DenseNet::params`].
    pub params: Vec<f64>,
    /// Gradient with respect to the network input.
    pub input: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: OutputActivation,
    params: Vec<f64>,
}

impl DenseNet {
    /// Zero-initialized network.
    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least an input and an output layer".into()));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let n = layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum::<usize>();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            output_activation,
            params: vec![0.0; n],
        })
    }

    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// fan-in `k` is drawn from `U(-1/sqrt(k), 1/sqrt(k))`.
    pub fn new(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: OutputActivation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        let mut offset = 0;
        for w in net.layer_sizes.clone().windows(2) {
            let bound = 1.0 / math::sqrt(w[0] as f64);
            let len = w[0] * w[1] + w[1];
            for p in &mut net.params[offset..offset + len] {
                *p = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        Ok(net)
    }

    /// Multiply the last layer's weights and biases by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let l = self.num_layers() - 1;
        let (start, _) = self.layer_range(l);
        for p in &mut self.params[start..] {
            *p *= factor;
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replace all parameters, rejecting wrong lengths and non-finite values.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim("parameter vector", self.params.len(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Start of the weight block and of the bias block of layer `l`.
    fn layer_range(&self, l: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.layer_sizes.windows(2).take(l) {
            offset += w[0] * w[1] + w[1];
        }
        let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        (offset, offset + i * o)
    }

    pub fn weight(&self, layer: usize, input: usize, output: usize) -> f64 {
        let (w, _) = self.layer_range(layer);
        self.params[w + input * self.layer_sizes[layer + 1] + output]
    }

    pub fn set_weight(&mut self, layer: usize, input: usize, output: usize, value: f64) {
        let (w, _) = self.layer_range(layer);
        let o = self.layer_sizes[layer + 1];
        self.params[w + input * o + output] = value;
    }

    pub fn set_bias(&mut self, layer: usize, output: usize, value: f64) {
        let (_, b) = self.layer_range(layer);
        self.params[b + output] = value;
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.cols()));
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &Matrix) -> Matrix {
        let (w_start, b_start) = self.layer_range(l);
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &self.params[w_start..b_start];
        let b = &self.params[b_start..b_start + n_out];
        let mut z = Matrix::zeros(x.rows(), n_out);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let zr = z.row_mut(r);
            zr.copy_from_slice(b);
            for (k, &xk) in xr.iter().enumerate() {
                if xk != 0.0 {
                    axpy(zr, xk, &w[k * n_out..(k + 1) * n_out]);
                }
            }
        }
        debug_assert_eq!(n_in, x.cols());
        z
    }

    fn activate(&self, l: usize, z: &Matrix) -> Matrix {
        let last = l + 1 == self.num_layers();
        let mut a = z.clone();
        for v in a.data_mut() {
            *v = if last {
                self.output_activation.apply(*v)
            } else {
                self.hidden_activation.apply(*v)
            };
        }
        a
    }

    /// Evaluate a batch, one sample per row.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for l in 0..self.num_layers() {
            let z = self.affine(l, &a);
            a = self.activate(l, &z);
        }
        Ok(a)
    }

    /// Forward pass that records everything backpropagation needs.
    pub fn forward_tape(&self, x: &Matrix) -> Result<Tape> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        activations.push(x.clone());
        for l in 0..self.num_layers() {
            let z = self.affine(l, activations.last().unwrap());
            let a = self.activate(l, &z);
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(Tape {
            activations,
            pre_activations,
        })
    }

    /// Gradients of the scalar loss whose derivative with respect to the
    /// network output is `upstream`.
    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Result<Gradients> {
        let tape = self.forward_tape(x)?;
        self.backward_tape(&tape, upstream)
    }

    pub fn backward_tape(&self, tape: &Tape, upstream: &Matrix) -> Result<Gradients> {
        self.backward_tape_with_pre(tape, upstream, None)
    }

    /// Like [`DenseNet::backward_tape`], with an optional extra gradient
    /// applied directly to the output layer's pre-activation values (used
    /// for penalties on pre-squashing magnitudes).
    pub fn backward_tape_with_pre(&self, tape: &Tape, upstream: &Matrix, pre_output: Option<&Matrix>) -> Result<Gradients> {
        let out = tape.output();
        let same_shape = |m: &Matrix| m.rows() == out.rows() && m.cols() == out.cols();
        if !same_shape(upstream) {
            return Err(Error::dim(
                "upstream gradient",
                out.rows() * out.cols(),
                upstream.rows() * upstream.cols(),
            ));
        }
        let mut grads = vec![0.0; self.params.len()];
        // delta holds dL/dz for the current layer.
        let mut delta = upstream.clone();
        for (d, &a) in delta.data_mut().iter_mut().zip(out.data()) {
            *d *= self.output_activation.derivative(a);
        }
        if let Some(extra) = pre_output {
            if !same_shape(extra) {
                return Err(Error::dim("pre-activation gradient", out.rows() * out.cols(), extra.rows() * extra.cols()));
            }
            axpy(delta.data_mut(), 1.0, extra.data());
        }
        for l in (0..self.num_layers()).rev() {
            let (w_start, b_start) = self.layer_range(l);
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let a_prev = &tape.activations[l];
            {
                let (gw, gb) = grads[w_start..b_start + n_out].split_at_mut(b_start - w_start);
                for r in 0..delta.rows() {
                    let dr = delta.row(r);
                    axpy(gb, 1.0, dr);
                    for (k, &ak) in a_prev.row(r).iter().enumerate() {
                        if ak != 0.0 {
                            axpy(&mut gw[k * n_out..(k + 1) * n_out], ak, dr);
                        }
                    }
                }
            }
            let w = &self.params[w_start..b_start];
            let mut d_prev = Matrix::zeros(delta.rows(), n_in);
            for r in 0..delta.rows() {
                let dr = delta.row(r);
                let pr = d_prev.row_mut(r);
                for (k, p) in pr.iter_mut().enumerate() {
                    *p = dot(dr, &w[k * n_out..(k + 1) * n_out]);
                }
            }
            if l > 0 {
                let z = &tape.pre_activations[l - 1];
                let a = &tape.activations[l];
                for ((d, &zv), &av) in d_prev.data_mut().iter_mut().zip(z.data()).zip(a.data()) {
                    *d *= self.hidden_activation.derivative(zv, av);
                }
            }
            delta = d_prev;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn polyak_from(&mut self, online: &DenseNet, tau: f64) -> Result<()> {
        if online.params.len() != self.params.len() {
            return Err(Error::dim("polyak source", self.params.len(), online.params.len()));
        }
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    beta1_power: f64,
    beta2_power: f64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            beta1_power: 1.0,
            beta2_power: 1.0,
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::dim("adam parameters", self.first_moment.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(Error::dim("adam gradients", params.len(), grads.len()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        self.beta1_power *= beta1;
        self.beta2_power *= beta2;
        let c1 = 1.0 - self.beta1_power;
        let c2 = 1.0 - self.beta2_power;
        for i in 0..params.len() {
            let g = grads[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= learning_rate * (m / c1) / (math::sqrt(v / c2) + epsilon);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters after adam step"));
        }
        Ok(())
    }
}

/// A network together with its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainable {
    pub net: DenseNet,
    pub adam: AdamState,
}

impl Trainable {
    pub fn new(net: DenseNet, config: AdamConfig) -> Self {
        let adam = AdamState::new(net.params().len(), config);
        Self { net, adam }
    }

    pub fn apply(&mut self, grads: &[f64]) -> Result<()> {
        self.adam.step(self.net.params_mut(), grads)
    }
}

/// Running mean/std estimate used to standardize network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
    /// Lower bound on the standard deviation.
    pub min_std: f64,
    /// Normalized values are clipped to `[-clip, clip]`.
    pub clip: f64,
    pub enabled: bool,
}

impl Normalizer {
    pub fn new(size: usize, clip: f64, enabled: bool) -> Self {
        Self {
            sum: vec![0.0; size],
            sum_sq: vec![0.0; size],
            count: 0.0,
            mean: vec![0.0; size],
            std: vec![1.0; size],
            min_std: 1e-2,
            clip,
            enabled,
        }
    }

    pub fn size(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Accumulate one sample; statistics refresh on [`Normalizer::recompute`].
    pub fn observe(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.sum.len());
        for i in 0..x.len() {
            self.sum[i] += x[i];
            self.sum_sq[i] += x[i] * x[i];
        }
        self.count += 1.0;
    }

    pub fn recompute(&mut self) {
        if self.count == 0.0 {
            return;
        }
        for i in 0..self.mean.len() {
            let m = self.sum[i] / self.count;
            let var = (self.sum_sq[i] / self.count - m * m).max(0.0);
            self.mean[i] = m;
            self.std[i] = math::sqrt(var).max(self.min_std);
        }
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        if !self.enabled {
            out.copy_from_slice(x);
            return;
        }
        for i in 0..x.len() {
            let v = (x[i] - self.mean[i]) / self.std[i];
            out[i] = v.clamp(-self.clip, self.clip);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let net = DenseNet::zeros(&[3, 5, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let mut net = DenseNet::zeros(&[3, 3], Activation::Relu, OutputActivation::Identity).unwrap();
        for i in 0..3 {
            net.set_weight(0, i, i, 1.0);
        }
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_evaluated_2_3_1() {
        // Weights picked by hand; the expected value is worked out below
        // without touching the network code.
        let mut net = DenseNet::zeros(&[2, 3, 1], Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        let w1 = [[0.5, -1.0, 0.25], [2.0, 0.1, -0.3]];
        let b1 = [0.1, 0.0, -0.2];
        let w2 = [1.5, -0.7, 0.4];
        let b2 = 0.05;
        for i in 0..2 {
            for j in 0..3 {
                net.set_weight(0, i, j, w1[i][j]);
            }
        }
        for j in 0..3 {
            net.set_bias(0, j, b1[j]);
            net.set_weight(1, j, 0, w2[j]);
        }
        net.set_bias(1, 0, b2);
        let x = [0.3, -0.8];
        // h_j = tanh(x0*w1[0][j] + x1*w1[1][j] + b1[j])
        let h0 = (0.3f64 * 0.5 + -0.8 * 2.0 + 0.1).tanh();
        let h1 = (0.3f64 * -1.0 + -0.8 * 0.1 + 0.0).tanh();
        let h2 = (0.3f64 * 0.25 + -0.8 * -0.3 - 0.2).tanh();
        let z = 1.5 * h0 - 0.7 * h1 + 0.4 * h2 + 0.05;
        let expected = 1.0 / (1.0 + (-z).exp());
        let y = net.forward(&Matrix::from_rows(&[x]).unwrap()).unwrap();
        assert!((y.get(0, 0) - expected).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let net = DenseNet::zeros(&[3, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let x = Matrix::zeros(1, 4);
        assert!(matches!(net.forward(&x), Err(Error::DimensionMismatch { .. })));
        let x = Matrix::zeros(2, 3);
        let up = Matrix::zeros(2, 3);
        assert!(net.backward(&x, &up).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = rng_from(1, 0);
        let net = DenseNet::new(&[4, 8, 8, 2], Activation::Relu, OutputActivation::Tanh, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.0]]).unwrap();
        let g = net.backward(&x, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_squared_loss_closed_form() {
        let mut net = DenseNet::zeros(&[1, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        let (w, b, x, y) = (0.7, -0.2, 1.5, 2.0);
        net.set_weight(0, 0, 0, w);
        net.set_bias(0, 0, b);
        let input = Matrix::from_rows(&[[x]]).unwrap();
        let pred = net.forward(&input).unwrap().get(0, 0);
        let up = Matrix::from_rows(&[[2.0 * (pred - y)]]).unwrap();
        let g = net.backward(&input, &up).unwrap();
        assert!(close(g.params[0], 2.0 * (w * x + b - y) * x, 1e-14));
        assert!(close(g.params[1], 2.0 * (w * x + b - y), 1e-14));
    }

    #[test]
    fn batch_consistency() {
        let mut rng = rng_from(3, 0);
        let net = DenseNet::new(&[5, 16, 16, 3], Activation::Relu, OutputActivation::Tanh, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..5).map(|j| ((i * 5 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let batch = net.forward(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = net.forward(&Matrix::from_rows(&[r]).unwrap()).unwrap();
            for j in 0..3 {
                assert!((single.get(0, j) - batch.get(i, j)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut st = AdamState::new(3, AdamConfig::default());
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut st = AdamState::new(3, AdamConfig::default());
        st.step(&mut p, &[0.5, -3.0, 1e-3]).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!(close(p[0], -1e-3 * 0.5 / (0.5 + 1e-8), 1e-12));
        assert!(close(p[1], 1e-3 * 3.0 / (3.0 + 1e-8), 1e-12));
        assert!(close(p[2], -1e-3 * 1e-3 / (1e-3 + 1e-8), 1e-12));
    }

    #[test]
    fn adam_two_steps_match_scripted_recurrence() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            beta1: 0.8,
            beta2: 0.95,
            epsilon: 1e-6,
        };
        let g = 0.3;
        let mut p = vec![1.0];
        let mut st = AdamState::new(1, cfg);
        st.step(&mut p, &[g]).unwrap();
        st.step(&mut p, &[g]).unwrap();
        // Scripted recurrence.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            m = 0.8 * m + 0.2 * g;
            v = 0.95 * v + 0.05 * g * g;
            let mh = m / (1.0 - 0.8f64.powi(t));
            let vh = v / (1.0 - 0.95f64.powi(t));
            x -= 0.01 * mh / (vh.sqrt() + 1e-6);
        }
        assert!(close(p[0], x, 1e-14));
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut p = vec![0.0, 1.0];
        let mut st = AdamState::new(2, AdamConfig::default());
        assert_eq!(st.step(&mut p, &[f64::NAN, 0.0]), Err(Error::NonFinite("gradient")));
        assert_eq!(st.step(&mut p, &[f64::INFINITY, 0.0]), Err(Error::NonFinite("gradient")));
        assert_eq!(p, vec![0.0, 1.0]);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn polyak_cases() {
        let mut t = DenseNet::zeros(&[1, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut o = t.clone();
        o.params_mut().copy_from_slice(&[2.0, 2.0]);
        let mut half = t.clone();
        half.polyak_from(&o, 0.5).unwrap();
        assert_eq!(half.params(), &[1.0, 1.0]);
        let mut none = t.clone();
        none.polyak_from(&o, 0.0).unwrap();
        assert_eq!(none.params(), &[0.0, 0.0]);
        t.polyak_from(&o, 1.0).unwrap();
        assert_eq!(t.params(), o.params());
    }

    #[test]
    fn normalizer_standardizes_and_clips() {
        let mut n = Normalizer::new(2, 5.0, true);
        for i in 0..100 {
            n.observe(&[i as f64, 3.0]);
        }
        n.recompute();
        assert!((n.mean()[0] - 49.5).abs() < 1e-12);
        assert_eq!(n.std()[1], 1e-2);
        let mut out = [0.0; 2];
        n.normalize_into(&[49.5, 100.0], &mut out);
        assert_eq!(out, [0.0, 5.0]);
    }

    #[test]
    fn serde_round_trip_is_bit_identical() {
        let mut rng = rng_from(9, 0);
        let net = DenseNet::new(&[3, 7, 2], Activation::Tanh, OutputActivation::Identity, &mut rng).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let back: DenseNet = serde_json::from_str(&text).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3]]).unwrap();
        let a = net.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
        assert_eq!(a.data()[1].to_bits(), b.data()[1].to_bits());
    }
}
