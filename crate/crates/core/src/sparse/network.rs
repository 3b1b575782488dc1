use crate::numerics::Mlp;

use super::{apply_mask, mlp_shapes, LayerShape, Mask, SparseError};

/// An MLP together with the mask that constrains it.
///
/// A dense network carries no mask. After every mutation of the mask or the
/// weights, call [`SparseNetwork::enforce`] so masked weights are exactly
/// zero and the layers' support patterns follow the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseNetwork {
    pub net: Mlp,
    mask: Option<Mask>,
}

impl SparseNetwork {
    pub fn dense(net: Mlp) -> Self {
        Self { net, mask: None }
    }

    pub fn masked(net: Mlp, mask: Mask) -> Result<Self, SparseError> {
        mask.check_shape(&net)?;
        let mut s = Self { net, mask: Some(mask) };
        s.enforce()?;
        s.sync_support();
        Ok(s)
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    /// Mutable access to the mask; call [`Self::sync_support`] afterwards.
    pub fn mask_mut(&mut self) -> Option<&mut Mask> {
        self.mask.as_mut()
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        mlp_shapes(&self.net.sizes())
    }

    /// Zeroes masked weights.
    pub fn enforce(&mut self) -> Result<(), SparseError> {
        if let Some(mask) = &self.mask {
            apply_mask(&mut self.net, mask)?;
        }
        Ok(())
    }

    /// Rebuilds each layer's support pattern from the mask.
    pub fn sync_support(&mut self) {
        match &self.mask {
            Some(mask) => {
                for (layer, m) in self.net.layers_mut().iter_mut().zip(mask.layers()) {
                    layer.set_support(Some(m.support_pattern()));
                }
            }
            None => self.net.layers_mut().iter_mut().for_each(|l| l.set_support(None)),
        }
    }

    /// Weight sparsity over the whole network (0 when dense).
    pub fn sparsity(&self) -> f64 {
        self.mask.as_ref().map_or(0.0, Mask::sparsity)
    }

    pub fn layer_sparsities(&self) -> Vec<f64> {
        match &self.mask {
            Some(m) => m.layers().iter().map(|l| l.sparsity()).collect(),
            None => vec![0.0; self.net.layers().len()],
        }
    }

    /// Weights plus biases that can be nonzero.
    pub fn active_params(&self) -> usize {
        let biases: usize = self.net.layers().iter().map(|l| l.bias.len()).sum();
        let weights = match &self.mask {
            Some(m) => m.active_total(),
            None => self.net.layers().iter().map(|l| l.weights.len()).sum(),
        };
        weights + biases
    }

    /// True when every masked weight is exactly zero.
    pub fn is_consistent(&self) -> bool {
        let Some(mask) = &self.mask else { return true };
        self.net
            .layers()
            .iter()
            .zip(mask.layers())
            .all(|(l, m)| l.weights.data().iter().zip(m.bits()).all(|(&w, &on)| on || w == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::sparse::{random_mask, uniform_plan};

    #[test]
    fn masked_network_is_consistent() {
        let mut rng = RngStream::new(2, "sn");
        let net = Mlp::new(&[4, 16, 2], &mut rng).unwrap();
        let shapes = mlp_shapes(&net.sizes());
        let plan = uniform_plan(0.75, &shapes).unwrap();
        let mask = random_mask(&plan, &shapes, &mut rng).unwrap();
        let sn = SparseNetwork::masked(net, mask).unwrap();
        assert!(sn.is_consistent());
        assert_eq!(sn.active_params(), 16 + 8 + 18);
        assert!(sn.net.layers().iter().all(|l| l.support().is_some()));
    }
}
