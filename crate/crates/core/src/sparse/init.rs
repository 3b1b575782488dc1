use rand::seq::index;

use crate::numerics::{Mlp, RngStream, Tensor2};

use super::{LayerMask, LayerShape, Mask, SparseError, SparsityPlan};

/// Draws a mask with exactly `plan.active_counts[l]` ones per layer,
/// positions chosen uniformly without replacement.
pub fn random_mask(plan: &SparsityPlan, layers: &[LayerShape], rng: &mut RngStream) -> Result<Mask, SparseError> {
    if plan.active_counts.len() != layers.len() {
        return Err(SparseError::Shape(format!(
            "plan covers {} layers, architecture has {}",
            plan.active_counts.len(),
            layers.len()
        )));
    }
    let mut out = Vec::with_capacity(layers.len());
    for (shape, &active) in layers.iter().zip(&plan.active_counts) {
        let size = shape.size();
        if active == 0 || active > size {
            return Err(SparseError::Infeasible(format!("{active} active connections in a layer of {size}")));
        }
        // Conv masks are flattened to (n_in·kh·kw) × n_out.
        let rows = size / shape.n_out;
        let mut mask = LayerMask::zeros(rows, shape.n_out);
        for i in index::sample(rng, size, active) {
            mask.set(i, true);
        }
        out.push(mask);
    }
    Ok(Mask::new(out))
}

/// Rescales the surviving inputs of each output unit by
/// `√(fan_in_dense / fan_in_active)` and zeroes masked entries.
///
/// Units with no active input are left as they are (their weights are all
/// masked).
pub fn sparsity_aware_init(weights: &mut Tensor2, mask: &LayerMask) -> Result<(), SparseError> {
    if weights.shape() != (mask.rows(), mask.cols()) {
        return Err(SparseError::Shape(format!(
            "weights {:?} vs mask {}x{}",
            weights.shape(),
            mask.rows(),
            mask.cols()
        )));
    }
    let (rows, cols) = weights.shape();
    for c in 0..cols {
        let active = mask.column_active(c);
        let scale = if active == 0 { 1.0 } else { (rows as f64 / active as f64).sqrt() };
        for r in 0..rows {
            let i = r * cols + c;
            let w = &mut weights.data_mut()[i];
            if mask.is_active(i) {
                *w *= scale;
            } else {
                *w = 0.0;
            }
        }
    }
    Ok(())
}

/// [`sparsity_aware_init`] for every layer of a network.
pub fn sparsity_aware_init_network(net: &mut Mlp, mask: &Mask) -> Result<(), SparseError> {
    mask.check_shape(net)?;
    for (layer, m) in net.layers_mut().iter_mut().zip(mask.layers()) {
        sparsity_aware_init(&mut layer.weights, m)?;
    }
    Ok(())
}
