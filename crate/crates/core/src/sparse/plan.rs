//! Per-layer density allocation for a global sparsity target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SparseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    FullyConnected,
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        /// Output feature-map size; only needed for FLOPs.
        out_h: Option<usize>,
        out_w: Option<usize>,
    },
}

/// Dimensions of one weight tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub n_in: usize,
    pub n_out: usize,
}

impl LayerShape {
    pub fn fc(n_in: usize, n_out: usize) -> Self {
        Self { kind: LayerKind::FullyConnected, n_in, n_out }
    }

    pub fn conv(n_in: usize, n_out: usize, kernel: usize, stride: usize, out_hw: Option<(usize, usize)>) -> Self {
        Self {
            kind: LayerKind::Conv {
                kernel_h: kernel,
                kernel_w: kernel,
                stride,
                out_h: out_hw.map(|o| o.0),
                out_w: out_hw.map(|o| o.1),
            },
            n_in,
            n_out,
        }
    }

    /// Number of weight connections.
    pub fn size(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.n_in * self.n_out,
            LayerKind::Conv { kernel_h, kernel_w, .. } => self.n_in * self.n_out * kernel_h * kernel_w,
        }
    }

    pub fn bias_count(&self) -> usize {
        self.n_out
    }

    /// Erdős–Rényi(-kernel) coefficient: dimension sum over connection count.
    pub fn erk_coefficient(&self) -> f64 {
        let sum = match self.kind {
            LayerKind::FullyConnected => self.n_in + self.n_out,
            LayerKind::Conv { kernel_h, kernel_w, .. } => self.n_in + self.n_out + kernel_h + kernel_w,
        };
        sum as f64 / self.size() as f64
    }

    fn validate(&self) -> Result<(), SparseError> {
        let ok = self.n_in >= 1
            && self.n_out >= 1
            && match self.kind {
                LayerKind::FullyConnected => true,
                LayerKind::Conv { kernel_h, kernel_w, stride, .. } => kernel_h >= 1 && kernel_w >= 1 && stride >= 1,
            };
        if ok {
            Ok(())
        } else {
            Err(SparseError::Shape(format!("layer dimensions must be positive: {self:?}")))
        }
    }
}

/// Fully connected shapes for an MLP with the given widths.
pub fn mlp_shapes(sizes: &[usize]) -> Vec<LayerShape> {
    sizes.windows(2).map(|w| LayerShape::fc(w[0], w[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Erk,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Uniform => "uniform",
            Distribution::Erk => "erk",
        })
    }
}

impl FromStr for Distribution {
    type Err = SparseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "erk" => Ok(Distribution::Erk),
            other => Err(SparseError::Schema { line: 0, message: format!("unknown distribution '{other}'") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPlan {
    pub target: f64,
    pub distribution: Distribution,
    pub densities: Vec<f64>,
    pub active_counts: Vec<usize>,
}

impl SparsityPlan {
    pub fn active_total(&self) -> usize {
        self.active_counts.iter().sum()
    }
}

/// `⌊x + ½⌋`, clamped to `[1, size]`.
pub fn round_active(density: f64, size: usize) -> usize {
    let raw = (density * size as f64 + 0.5).floor();
    (raw.max(1.0) as usize).min(size)
}

fn check_target(target: f64, layers: &[LayerShape]) -> Result<(), SparseError> {
    if !(0.0..1.0).contains(&target) || !target.is_finite() {
        return Err(SparseError::InvalidSparsity(target));
    }
    if layers.is_empty() {
        return Err(SparseError::Shape("no layers to plan".into()));
    }
    layers.iter().try_for_each(LayerShape::validate)?;
    let total: usize = layers.iter().map(LayerShape::size).sum();
    let budget = (1.0 - target) * total as f64;
    if budget < layers.len() as f64 {
        return Err(SparseError::Infeasible(format!(
            "budget of {budget:.2} connections cannot give {} layers one connection each",
            layers.len()
        )));
    }
    Ok(())
}

fn finish(target: f64, distribution: Distribution, layers: &[LayerShape], densities: Vec<f64>) -> SparsityPlan {
    let active_counts = densities.iter().zip(layers).map(|(&d, l)| round_active(d, l.size())).collect();
    SparsityPlan { target, distribution, densities, active_counts }
}

/// Every layer gets density `1 − s`.
pub fn uniform_plan(target: f64, layers: &[LayerShape]) -> Result<SparsityPlan, SparseError> {
    check_target(target, layers)?;
    let densities = vec![1.0 - target; layers.len()];
    Ok(finish(target, Distribution::Uniform, layers, densities))
}

/// Densities proportional to each layer's ERK coefficient, capped at one.
///
/// The scale ε is solved in closed form over the uncapped layers; any layer
/// pushed above density one is pinned there and ε is re-solved on the rest,
/// which terminates after at most one pass per layer.
pub fn erk_plan(target: f64, layers: &[LayerShape]) -> Result<SparsityPlan, SparseError> {
    check_target(target, layers)?;
    let total: usize = layers.iter().map(LayerShape::size).sum();
    let budget = (1.0 - target) * total as f64;
    let mut capped = vec![false; layers.len()];
    let epsilon = loop {
        let fixed: f64 = layers.iter().zip(&capped).filter(|(_, &c)| c).map(|(l, _)| l.size() as f64).sum();
        let weight: f64 = layers
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(l, _)| l.erk_coefficient() * l.size() as f64)
            .sum();
        if weight == 0.0 {
            break 0.0;
        }
        let eps = (budget - fixed) / weight;
        let mut changed = false;
        for (l, c) in layers.iter().zip(capped.iter_mut()) {
            if !*c && eps * l.erk_coefficient() > 1.0 {
                *c = true;
                changed = true;
            }
        }
        if !changed {
            break eps;
        }
    };
    let densities = layers
        .iter()
        .zip(&capped)
        .map(|(l, &c)| if c { 1.0 } else { epsilon * l.erk_coefficient() })
        .collect();
    Ok(finish(target, Distribution::Erk, layers, densities))
}

pub fn make_plan(distribution: Distribution, target: f64, layers: &[LayerShape]) -> Result<SparsityPlan, SparseError> {
    match distribution {
        Distribution::Uniform => uniform_plan(target, layers),
        Distribution::Erk => erk_plan(target, layers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acrobot_mlp() -> Vec<LayerShape> {
        mlp_shapes(&[6, 512, 512, 3])
    }

    #[test]
    fn dense_target() {
        for plan in [uniform_plan(0.0, &acrobot_mlp()).unwrap(), erk_plan(0.0, &acrobot_mlp()).unwrap()] {
            assert!(plan.densities.iter().all(|&d| (d - 1.0).abs() < 1e-12));
            assert_eq!(plan.active_counts, vec![3072, 262144, 1536]);
        }
    }

    #[test]
    fn uniform_ninety() {
        let plan = uniform_plan(0.9, &acrobot_mlp()).unwrap();
        for d in &plan.densities {
            assert!((d - 0.1).abs() < 1e-12);
        }
        assert_eq!(plan.active_counts, vec![307, 26214, 154]);
    }

    #[test]
    fn uniform_round_half_up() {
        let plan = uniform_plan(0.5, &[LayerShape::fc(7, 1)]).unwrap();
        assert_eq!(plan.active_counts, vec![4]);
    }

    #[test]
    fn invalid_targets() {
        assert!(matches!(uniform_plan(1.0, &acrobot_mlp()), Err(SparseError::InvalidSparsity(_))));
        assert!(matches!(erk_plan(-0.1, &acrobot_mlp()), Err(SparseError::InvalidSparsity(_))));
        let tiny = [LayerShape::fc(2, 2), LayerShape::fc(2, 2)];
        assert!(matches!(erk_plan(0.8, &tiny), Err(SparseError::Infeasible(_))));
    }

    #[test]
    fn erk_caps_small_layers() {
        let plan = erk_plan(0.9, &acrobot_mlp()).unwrap();
        assert_eq!(plan.densities[0], 1.0);
        assert_eq!(plan.densities[2], 1.0);
        assert!((plan.densities[1] - 22067.2 / 262144.0).abs() < 1e-12);
        assert_eq!(plan.active_counts, vec![3072, 22067, 1536]);
    }

    #[test]
    fn erk_symmetric_layers() {
        let plan = erk_plan(0.7, &[LayerShape::fc(100, 80), LayerShape::fc(100, 80)]).unwrap();
        assert_eq!(plan.densities[0], plan.densities[1]);
    }

    #[test]
    fn conv_coefficient() {
        let l = LayerShape::conv(4, 32, 8, 4, None);
        assert_eq!(l.size(), 4 * 32 * 64);
        assert!((l.erk_coefficient() - 52.0 / 8192.0).abs() < 1e-15);
    }
}
