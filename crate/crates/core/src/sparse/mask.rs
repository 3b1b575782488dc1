use crate::numerics::{Mlp, SupportPattern};

use super::SparseError;

/// Binary connectivity of one weight matrix, stored row-major like the weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    active: usize,
}

impl LayerMask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![true; rows * cols], active: rows * cols }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![false; rows * cols], active: 0 }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self, SparseError> {
        if bits.len() != rows * cols {
            return Err(SparseError::Shape(format!("{} bits for a {rows}x{cols} mask", bits.len())));
        }
        let active = bits.iter().filter(|&&b| b).count();
        Ok(Self { rows, cols, bits, active })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn size(&self) -> usize {
        self.bits.len()
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn density(&self) -> f64 {
        self.active as f64 / self.size() as f64
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.density()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_active(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, on: bool) {
        match (self.bits[index], on) {
            (false, true) => self.active += 1,
            (true, false) => self.active -= 1,
            _ => {}
        }
        self.bits[index] = on;
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| self.bits[i]).collect()
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| !self.bits[i]).collect()
    }

    /// Active inputs of output unit `col`.
    pub fn column_active(&self, col: usize) -> usize {
        (0..self.rows).filter(|&r| self.bits[r * self.cols + col]).count()
    }

    pub fn support_pattern(&self) -> SupportPattern {
        SupportPattern::from_fn(self.rows, self.cols, |r, c| self.bits[r * self.cols + c])
    }
}

/// One [`LayerMask`] per weight matrix; biases are never masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    layers: Vec<LayerMask>,
}

impl Mask {
    pub fn new(layers: Vec<LayerMask>) -> Self {
        Self { layers }
    }

    /// All-ones mask shaped like `net`.
    pub fn dense_for(net: &Mlp) -> Self {
        Self::new(net.layers().iter().map(|l| LayerMask::ones(l.n_in(), l.n_out())).collect())
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerMask] {
        &mut self.layers
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.layers.iter().map(LayerMask::active_count).collect()
    }

    pub fn active_total(&self) -> usize {
        self.layers.iter().map(LayerMask::active_count).sum()
    }

    pub fn size_total(&self) -> usize {
        self.layers.iter().map(LayerMask::size).sum()
    }

    /// Fraction of masked weight connections over the whole network.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.active_total() as f64 / self.size_total() as f64
    }

    pub fn check_shape(&self, net: &Mlp) -> Result<(), SparseError> {
        if self.layers.len() != net.layers().len() {
            return Err(SparseError::Shape(format!(
                "mask has {} layers, network has {}",
                self.layers.len(),
                net.layers().len()
            )));
        }
        for (i, (m, l)) in self.layers.iter().zip(net.layers()).enumerate() {
            if (m.rows, m.cols) != l.weights.shape() {
                return Err(SparseError::Shape(format!(
                    "layer {i}: mask is {}x{}, weights are {:?}",
                    m.rows,
                    m.cols,
                    l.weights.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Zeroes every masked weight. Entries under an active bit are untouched.
pub fn apply_mask(net: &mut Mlp, mask: &Mask) -> Result<(), SparseError> {
    mask.check_shape(net)?;
    for (layer, m) in net.layers_mut().iter_mut().zip(mask.layers()) {
        for (w, &on) in layer.weights.data_mut().iter_mut().zip(&m.bits) {
            if !on {
                *w = 0.0;
            }
        }
    }
    Ok(())
}
