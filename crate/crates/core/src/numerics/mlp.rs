//! Feed-forward ReLU networks with exact reverse-mode gradients.
//!
//! Layers may carry a [`SupportPattern`]: the set of weight positions that
//! can be nonzero. The pattern lets forward and backward passes skip known
//! zeros; the owner of the network keeps weights outside the pattern at
//! exactly zero.

use rand::Rng;

use super::tensor::{gemm, Tensor2};
use super::{NumericsError, RngStream};

/// Below this density a layer uses the gather/axpy kernels instead of GEMM.
const SPARSE_KERNEL_MAX_DENSITY: f64 = 0.25;

/// Active output columns per input row of a weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPattern {
    offsets: Vec<usize>,
    columns: Vec<u32>,
    rows: usize,
    cols: usize,
}

impl SupportPattern {
    pub fn from_fn(rows: usize, cols: usize, active: impl Fn(usize, usize) -> bool) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        let mut columns = Vec::new();
        offsets.push(0);
        for r in 0..rows {
            for c in 0..cols {
                if active(r, c) {
                    columns.push(c as u32);
                }
            }
            offsets.push(columns.len());
        }
        Self { offsets, columns, rows, cols }
    }

    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows * self.cols).max(1) as f64
    }

    #[inline]
    fn row(&self, r: usize) -> &[u32] {
        &self.columns[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }
}

/// He-style uniform initialisation on `[−√(6/fan_in), √(6/fan_in)]`.
pub fn he_init(rows: usize, cols: usize, fan_in: usize, rng: &mut RngStream) -> Result<Tensor2, NumericsError> {
    if fan_in == 0 {
        return Err(NumericsError::DegenerateLayer);
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor2::from_vec(rows, cols, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `n_in × n_out`; the layer computes `x · weights + bias`.
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    support: Option<SupportPattern>,
}

impl Layer {
    pub fn new(weights: Tensor2, bias: Vec<f64>) -> Result<Self, NumericsError> {
        if bias.len() != weights.cols() {
            return Err(NumericsError::Dimension(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weights.cols()
            )));
        }
        Ok(Self { weights, bias, support: None })
    }

    pub fn n_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn support(&self) -> Option<&SupportPattern> {
        self.support.as_ref()
    }

    pub fn set_support(&mut self, support: Option<SupportPattern>) {
        if let Some(s) = &support {
            assert_eq!((s.rows, s.cols), self.weights.shape(), "support shape");
        }
        self.support = support;
    }

    fn sparse_kernel(&self) -> Option<&SupportPattern> {
        self.support.as_ref().filter(|s| s.density() <= SPARSE_KERNEL_MAX_DENSITY)
    }

    fn forward(&self, input: &Tensor2) -> Tensor2 {
        let batch = input.rows();
        let mut out = Tensor2::zeros(batch, self.n_out());
        match self.sparse_kernel() {
            None => {
                for r in 0..batch {
                    out.row_mut(r).copy_from_slice(&self.bias);
                }
                gemm(input, false, &self.weights, false, &mut out, 1.0);
            }
            Some(support) => {
                // Batch-minor layout so every active weight is one axpy.
                let xt = input.transpose();
                let mut yt = Tensor2::zeros(self.n_out(), batch);
                for (j, &b) in self.bias.iter().enumerate() {
                    yt.row_mut(j).fill(b);
                }
                let w = self.weights.data();
                let n_out = self.n_out();
                for i in 0..self.n_in() {
                    let x_row = xt.row(i);
                    for &j in support.row(i) {
                        let j = j as usize;
                        let wij = w[i * n_out + j];
                        axpy(wij, x_row, yt.row_mut(j));
                    }
                }
                out = yt.transpose();
            }
        }
        out
    }

    /// `delta · weightsᵀ`.
    fn input_gradient(&self, delta: &Tensor2) -> Tensor2 {
        let batch = delta.rows();
        match self.sparse_kernel() {
            None => {
                let mut out = Tensor2::zeros(batch, self.n_in());
                gemm(delta, false, &self.weights, true, &mut out, 0.0);
                out
            }
            Some(support) => {
                let dt = delta.transpose();
                let mut gt = Tensor2::zeros(self.n_in(), batch);
                let w = self.weights.data();
                let n_out = self.n_out();
                for i in 0..self.n_in() {
                    let g_row = gt.row_mut(i);
                    for &j in support.row(i) {
                        let j = j as usize;
                        axpy(w[i * n_out + j], dt.row(j), g_row);
                    }
                }
                gt.transpose()
            }
        }
    }

    fn dense_weight_gradient(&self, input: &Tensor2, delta: &Tensor2) -> Tensor2 {
        let mut g = Tensor2::zeros(self.n_in(), self.n_out());
        gemm(input, true, delta, false, &mut g, 0.0);
        g
    }

    /// Weight gradient restricted to the support (zero elsewhere).
    fn masked_weight_gradient(&self, input: &Tensor2, delta: &Tensor2) -> Tensor2 {
        match (&self.support, self.sparse_kernel()) {
            (None, _) => self.dense_weight_gradient(input, delta),
            (Some(_), Some(support)) => {
                let xt = input.transpose();
                let dt = delta.transpose();
                let mut g = Tensor2::zeros(self.n_in(), self.n_out());
                let n_out = self.n_out();
                let gd = g.data_mut();
                for i in 0..self.n_in() {
                    let x_row = xt.row(i);
                    for &j in support.row(i) {
                        let j = j as usize;
                        gd[i * n_out + j] = dot(x_row, dt.row(j));
                    }
                }
                g
            }
            (Some(support), None) => {
                let mut g = self.dense_weight_gradient(input, delta);
                let n_out = self.n_out();
                let gd = g.data_mut();
                for i in 0..self.n_in() {
                    let row = &mut gd[i * n_out..(i + 1) * n_out];
                    let mut next = 0usize;
                    for &j in support.row(i) {
                        row[next..j as usize].fill(0.0);
                        next = j as usize + 1;
                    }
                    row[next..].fill(0.0);
                }
                g
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Activations recorded by [`Mlp::forward_tape`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[l]` is the input of layer `l`; the last entry is the output.
    activations: Vec<Tensor2>,
}

impl Tape {
    pub fn output(&self) -> &Tensor2 {
        self.activations.last().expect("tape always holds the input")
    }

    pub fn layer_input(&self, layer: usize) -> &Tensor2 {
        &self.activations[layer]
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BackwardOptions {
    /// Also return the unmasked weight gradient of every layer.
    pub dense_weights: bool,
    /// Return the gradient with respect to the network input.
    pub input: bool,
    /// Keep the per-layer pre-activation gradients (per-sample rows).
    pub deltas: bool,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// Weight gradients restricted to each layer's support.
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
    pub dense_weights: Option<Vec<Tensor2>>,
    pub input: Option<Tensor2>,
    /// `deltas[l]` holds, row by row, the gradient with respect to the
    /// pre-activation output of layer `l` for each sample.
    pub deltas: Option<Vec<Tensor2>>,
}

impl Gradients {
    /// Flat views in the order `w0, b0, w1, b1, …`, matching [`Mlp::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

/// ReLU multilayer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// He-initialised network with zero biases; `sizes` lists every width
    /// from input to output.
    pub fn new(sizes: &[usize], rng: &mut RngStream) -> Result<Self, NumericsError> {
        if sizes.len() < 2 {
            return Err(NumericsError::Dimension("an MLP needs at least an input and an output width".into()));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer::new(he_init(w[0], w[1], w[0], rng)?, vec![0.0; w[1]]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NumericsError> {
        if layers.is_empty() {
            return Err(NumericsError::Dimension("empty layer list".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(NumericsError::Dimension(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].n_out(),
                    i + 1,
                    pair[1].n_in()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::n_out)
    }

    /// Widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Layer::n_out)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect()
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.data(), l.bias.as_slice()]).collect()
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Layer { weights, bias, .. } = l;
                [weights.data_mut(), bias.as_mut_slice()]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &Tensor2) -> Result<(), NumericsError> {
        if input.cols() != self.input_dim() {
            return Err(NumericsError::Dimension(format!(
                "network expects {} input features, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2, NumericsError> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut x = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x);
            if l < last {
                relu_in_place(&mut x);
            }
        }
        Ok(x)
    }

    pub fn forward_tape(&self, input: &Tensor2) -> Result<Tape, NumericsError> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&activations[l]);
            if l < last {
                relu_in_place(&mut y);
            }
            activations.push(y);
        }
        Ok(Tape { activations })
    }

    /// Reverse-mode gradients of `Σ upstream ∘ output` for the batch on `tape`.
    pub fn backward(&self, tape: &Tape, upstream: &Tensor2, opts: BackwardOptions) -> Result<Gradients, NumericsError> {
        if tape.activations.len() != self.layers.len() + 1 {
            return Err(NumericsError::State(format!(
                "tape records {} activations, network needs {}",
                tape.activations.len(),
                self.layers.len() + 1
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let a = &tape.activations[l];
            if a.cols() != layer.n_in() {
                return Err(NumericsError::State(format!("tape activation {l} does not match this network")));
            }
        }
        if upstream.shape() != tape.output().shape() {
            return Err(NumericsError::State(format!(
                "upstream gradient is {:?} but the recorded output is {:?}",
                upstream.shape(),
                tape.output().shape()
            )));
        }

        let n = self.layers.len();
        let mut weights = vec![Tensor2::zeros(0, 0); n];
        let mut biases = vec![Vec::new(); n];
        let mut dense = opts.dense_weights.then(|| vec![Tensor2::zeros(0, 0); n]);
        let mut deltas = opts.deltas.then(|| vec![Tensor2::zeros(0, 0); n]);
        let mut input_grad = None;

        let mut delta = upstream.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let x = &tape.activations[l];
            weights[l] = layer.masked_weight_gradient(x, &delta);
            if let Some(d) = dense.as_mut() {
                d[l] = if layer.support.is_some() {
                    layer.dense_weight_gradient(x, &delta)
                } else {
                    weights[l].clone()
                };
            }
            let mut b = vec![0.0; layer.n_out()];
            for r in 0..delta.rows() {
                for (bj, dj) in b.iter_mut().zip(delta.row(r)) {
                    *bj += dj;
                }
            }
            biases[l] = b;

            if l > 0 || opts.input {
                let mut dx = layer.input_gradient(&delta);
                if l > 0 {
                    for (g, &a) in dx.data_mut().iter_mut().zip(x.data()) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                } else {
                    input_grad = Some(dx.clone());
                }
                if let Some(ds) = deltas.as_mut() {
                    ds[l] = std::mem::replace(&mut delta, dx);
                } else {
                    delta = dx;
                }
            } else if let Some(ds) = deltas.as_mut() {
                ds[l] = std::mem::replace(&mut delta, Tensor2::zeros(0, 0));
            }
        }

        Ok(Gradients { weights, biases, dense_weights: dense, input: input_grad, deltas })
    }
}

fn relu_in_place(x: &mut Tensor2) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: &[&[f64]], b: &[f64]) -> Mlp {
        Mlp::from_layers(vec![Layer::new(Tensor2::from_rows(w).unwrap(), b.to_vec()).unwrap()]).unwrap()
    }

    #[test]
    fn linear_regression_gradient() {
        // loss = (pred − target)², so dL/dW = 2·(pred − target)·xᵀ.
        let net = linear(&[&[0.5], &[-1.0], &[2.0]], &[0.25]);
        let x = Tensor2::row_vector(&[1.0, 2.0, -3.0]);
        let tape = net.forward_tape(&x).unwrap();
        let pred = tape.output().get(0, 0);
        let target = 1.5;
        let up = Tensor2::row_vector(&[2.0 * (pred - target)]);
        let g = net.backward(&tape, &up, BackwardOptions::default()).unwrap();
        for (i, xi) in [1.0, 2.0, -3.0].iter().enumerate() {
            assert!((g.weights[0].get(i, 0) - 2.0 * (pred - target) * xi).abs() < 1e-12);
        }
        assert!((g.biases[0][0] - 2.0 * (pred - target)).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = RngStream::new(1, "zero-up");
        let net = Mlp::new(&[4, 8, 8, 2], &mut rng).unwrap();
        let x = he_init(5, 4, 1, &mut rng).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        let g = net
            .backward(&tape, &Tensor2::zeros(5, 2), BackwardOptions { dense_weights: true, input: true, deltas: false })
            .unwrap();
        assert!(g.is_zero());
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_tape_is_state_error() {
        let mut rng = RngStream::new(1, "tape");
        let a = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let b = Mlp::new(&[3, 4, 5, 2], &mut rng).unwrap();
        let x = Tensor2::zeros(2, 3);
        let tape = a.forward_tape(&x).unwrap();
        let err = b.backward(&tape, &Tensor2::zeros(2, 2), BackwardOptions::default());
        assert!(matches!(err, Err(NumericsError::State(_))));
        let err = a.backward(&tape, &Tensor2::zeros(3, 2), BackwardOptions::default());
        assert!(matches!(err, Err(NumericsError::State(_))));
    }

    #[test]
    fn he_init_bounds_and_determinism() {
        let a = he_init(50, 40, 6, &mut RngStream::new(9, "he")).unwrap();
        let b = he_init(50, 40, 6, &mut RngStream::new(9, "he")).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
        assert!(matches!(he_init(2, 2, 0, &mut RngStream::new(9, "he")), Err(NumericsError::DegenerateLayer)));
    }

    #[test]
    fn he_init_variance() {
        // Uniform on [−b, b] has variance (2b)²/12 = b²/3 = 2/fan_in.
        let fan_in = 24;
        let t = he_init(1000, 100, fan_in, &mut RngStream::new(4, "var")).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = (6.0 / fan_in as f64) / 3.0;
        assert!((var - expected).abs() / expected < 0.05, "var {var} expected {expected}");
    }

    #[test]
    fn sparse_kernels_match_dense_kernels() {
        let mut rng = RngStream::new(11, "kernels");
        let mut net = Mlp::new(&[20, 64, 64, 3], &mut rng).unwrap();
        // ~10% support on the middle layer, zero outside it.
        let support = SupportPattern::from_fn(64, 64, |r, c| (r * 7 + c * 13) % 10 == 0);
        {
            let w = &mut net.layers_mut()[1].weights;
            for r in 0..64 {
                for c in 0..64 {
                    if !support.contains(r, c) {
                        w.set(r, c, 0.0);
                    }
                }
            }
        }
        let dense = net.clone();
        net.layers_mut()[1].set_support(Some(support.clone()));
        assert!(net.layers()[1].sparse_kernel().is_some());

        let x = he_init(16, 20, 1, &mut rng).unwrap();
        let up = he_init(16, 3, 1, &mut rng).unwrap();
        let opts = BackwardOptions { dense_weights: true, input: true, deltas: false };
        let ts = net.forward_tape(&x).unwrap();
        let td = dense.forward_tape(&x).unwrap();
        let close = |a: &Tensor2, b: &Tensor2| a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(ts.output(), td.output()));
        let gs = net.backward(&ts, &up, opts).unwrap();
        let gd = dense.backward(&td, &up, opts).unwrap();
        assert!(close(gs.input.as_ref().unwrap(), gd.input.as_ref().unwrap()));
        assert!(close(&gs.dense_weights.as_ref().unwrap()[1], &gd.weights[1]));
        for r in 0..64 {
            for c in 0..64 {
                let expect = if support.contains(r, c) { gd.weights[1].get(r, c) } else { 0.0 };
                assert!((gs.weights[1].get(r, c) - expect).abs() < 1e-12);
            }
        }
    }
}
