//! Mask updates: magnitude pruning, SET (random regrowth) and RigL
//! (gradient regrowth).
//!
//! Every update zeroes the weights it drops and the weights it grows, so the
//! network stays consistent with its mask.

use std::cmp::Ordering;

use rand::seq::index;

use crate::numerics::{RngStream, Tensor2};
use crate::sparse::{round_active, LayerMask, SparseNetwork};

use super::TopologyError;

/// Positions changed in one layer by one update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerUpdate {
    pub dropped: Vec<usize>,
    pub grown: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopologyUpdate {
    pub layers: Vec<LayerUpdate>,
}

impl TopologyUpdate {
    pub fn is_noop(&self) -> bool {
        self.layers.iter().all(|l| l.dropped.is_empty() && l.grown.is_empty())
    }
}

/// `k` active positions with the smallest |w|, ties broken by lower index.
fn smallest_magnitude(weights: &[f64], mask: &LayerMask, k: usize) -> Vec<usize> {
    let mut active = mask.active_indices();
    if k == 0 {
        return Vec::new();
    }
    let by_magnitude = |a: &usize, b: &usize| {
        weights[*a].abs().partial_cmp(&weights[*b].abs()).unwrap_or(Ordering::Equal).then(a.cmp(b))
    };
    if k < active.len() {
        active.select_nth_unstable_by(k - 1, by_magnitude);
        active.truncate(k);
    }
    active.sort_unstable();
    active
}

/// Deactivates the lowest-magnitude connections until the layer's inactive
/// count reaches `round(target·size)`. Never reactivates anything.
pub fn prune_layer(weights: &mut [f64], mask: &mut LayerMask, target_sparsity: f64) -> Vec<usize> {
    let size = mask.size();
    // Keep at least one live connection.
    let target_inactive = (size - round_active(1.0 - target_sparsity, size)).min(size - 1);
    let current_inactive = size - mask.active_count();
    if target_inactive <= current_inactive {
        return Vec::new();
    }
    let dropped = smallest_magnitude(weights, mask, target_inactive - current_inactive);
    for &i in &dropped {
        mask.set(i, false);
        weights[i] = 0.0;
    }
    dropped
}

fn drop_count(mask: &LayerMask, fraction: f64) -> usize {
    let candidates = mask.size() - mask.active_count();
    ((fraction * mask.active_count() as f64).floor() as usize).min(candidates)
}

/// SET on one layer: drop `⌊f·active⌋` smallest-magnitude connections and
/// activate as many previously inactive positions uniformly at random.
pub fn set_layer(weights: &mut [f64], mask: &mut LayerMask, fraction: f64, rng: &mut RngStream) -> LayerUpdate {
    let k = drop_count(mask, fraction);
    if k == 0 {
        return LayerUpdate::default();
    }
    let candidates = mask.inactive_indices();
    let dropped = smallest_magnitude(weights, mask, k);
    let mut grown: Vec<usize> = index::sample(rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
    grown.sort_unstable();
    swap_connections(weights, mask, &dropped, &grown);
    LayerUpdate { dropped, grown }
}

/// RigL on one layer: drop as SET, grow the previously inactive positions
/// with the largest dense-gradient magnitude (ties to the lower index).
pub fn rigl_layer(weights: &mut [f64], mask: &mut LayerMask, dense_grad: &[f64], fraction: f64) -> LayerUpdate {
    let k = drop_count(mask, fraction);
    if k == 0 {
        return LayerUpdate::default();
    }
    let mut candidates = mask.inactive_indices();
    let dropped = smallest_magnitude(weights, mask, k);
    let by_gradient = |a: &usize, b: &usize| {
        dense_grad[*b].abs().partial_cmp(&dense_grad[*a].abs()).unwrap_or(Ordering::Equal).then(a.cmp(b))
    };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, by_gradient);
        candidates.truncate(k);
    }
    candidates.sort_unstable();
    swap_connections(weights, mask, &dropped, &candidates);
    LayerUpdate { dropped, grown: candidates }
}

fn swap_connections(weights: &mut [f64], mask: &mut LayerMask, dropped: &[usize], grown: &[usize]) {
    for &i in dropped {
        mask.set(i, false);
        weights[i] = 0.0;
    }
    for &i in grown {
        mask.set(i, true);
        weights[i] = 0.0;
    }
}

fn for_each_layer(
    net: &mut SparseNetwork,
    mut f: impl FnMut(usize, &mut [f64], &mut LayerMask) -> LayerUpdate,
) -> Result<TopologyUpdate, TopologyError> {
    let mut mask = net.mask().cloned().ok_or(TopologyError::Dense)?;
    let mut layers = Vec::with_capacity(mask.layers().len());
    for (i, (layer, m)) in net.net.layers_mut().iter_mut().zip(mask.layers_mut()).enumerate() {
        layers.push(f(i, layer.weights.data_mut(), m));
    }
    let update = TopologyUpdate { layers };
    if !update.is_noop() {
        *net.mask_mut().expect("checked above") = mask;
        net.sync_support();
    }
    Ok(update)
}

/// Magnitude pruning of every layer to the common target sparsity.
pub fn prune_step(net: &mut SparseNetwork, target_sparsity: f64) -> Result<TopologyUpdate, TopologyError> {
    for_each_layer(net, |_, w, m| LayerUpdate { dropped: prune_layer(w, m, target_sparsity), grown: Vec::new() })
}

pub fn set_update(net: &mut SparseNetwork, fraction: f64, rng: &mut RngStream) -> Result<TopologyUpdate, TopologyError> {
    check_fraction(fraction)?;
    for_each_layer(net, |_, w, m| set_layer(w, m, fraction, rng))
}

/// `dense_grads[l]` is the unmasked weight gradient of layer `l`.
pub fn rigl_update(net: &mut SparseNetwork, dense_grads: &[Tensor2], fraction: f64) -> Result<TopologyUpdate, TopologyError> {
    check_fraction(fraction)?;
    if dense_grads.len() != net.net.layers().len() {
        return Err(TopologyError::Shape(format!(
            "{} gradients for {} layers",
            dense_grads.len(),
            net.net.layers().len()
        )));
    }
    for (g, l) in dense_grads.iter().zip(net.net.layers()) {
        if g.shape() != l.weights.shape() {
            return Err(TopologyError::Shape(format!("gradient {:?} for weights {:?}", g.shape(), l.weights.shape())));
        }
    }
    for_each_layer(net, |i, w, m| rigl_layer(w, m, dense_grads[i].data(), fraction))
}

fn check_fraction(fraction: f64) -> Result<(), TopologyError> {
    if (0.0..=1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(TopologyError::Schedule(format!("drop fraction {fraction} outside [0, 1]")))
    }
}
