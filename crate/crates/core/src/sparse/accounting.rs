//! Parameter and FLOPs counts, plus the architecture description format
//! read by the FLOPs analyzer.
//!
//! Architecture files list one layer per line as whitespace-separated
//! fields, `#` starting a comment:
//!
//! ```text
//! # kind  n_in  n_out  kernel  stride  input_size
//! conv    4     32     8       4       84
//! conv    32    64     4       2       20x20
//! fc      3136  512    -       -       -
//! ```
//!
//! `kind` is `fc` or `conv`. For `fc` the last three fields are `-`. For
//! `conv`, `kernel` is `K` or `KHxKW`, `stride` a positive integer, and
//! `input_size` the input feature map as `N` or `HxW`. Convolutions use
//! valid padding, so the output side is `(in − k) / stride + 1`.

use super::{LayerKind, LayerShape, Mask, SparseError, SparsityPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// Every weight and bias of the dense architecture.
    pub dense_total: usize,
    /// Active weights plus all biases.
    pub active_total: usize,
}

pub fn count_params(layers: &[LayerShape], active_counts: &[usize]) -> Result<ParamCount, SparseError> {
    if layers.len() != active_counts.len() {
        return Err(SparseError::Shape(format!("{} layers but {} active counts", layers.len(), active_counts.len())));
    }
    let biases: usize = layers.iter().map(LayerShape::bias_count).sum();
    let dense_weights: usize = layers.iter().map(LayerShape::size).sum();
    Ok(ParamCount { dense_total: dense_weights + biases, active_total: active_counts.iter().sum::<usize>() + biases })
}

pub fn count_params_for_plan(layers: &[LayerShape], plan: &SparsityPlan) -> Result<ParamCount, SparseError> {
    count_params(layers, &plan.active_counts)
}

pub fn count_params_for_mask(layers: &[LayerShape], mask: &Mask) -> Result<ParamCount, SparseError> {
    count_params(layers, &mask.active_counts())
}

/// Forward-pass multiply-adds: an FC layer costs its active connections, a
/// convolution costs its active connections once per output position.
pub fn count_flops(layers: &[LayerShape], active_counts: &[usize]) -> Result<u64, SparseError> {
    if layers.len() != active_counts.len() {
        return Err(SparseError::Shape(format!("{} layers but {} active counts", layers.len(), active_counts.len())));
    }
    let mut total = 0u64;
    for (i, (l, &active)) in layers.iter().zip(active_counts).enumerate() {
        total += match l.kind {
            LayerKind::FullyConnected => active as u64,
            LayerKind::Conv { out_h: Some(h), out_w: Some(w), .. } => (active * h * w) as u64,
            LayerKind::Conv { .. } => {
                return Err(SparseError::Schema {
                    line: i + 1,
                    message: "convolution without an output spatial size".into(),
                })
            }
        };
    }
    Ok(total)
}

pub fn count_flops_for_plan(layers: &[LayerShape], plan: &SparsityPlan) -> Result<u64, SparseError> {
    count_flops(layers, &plan.active_counts)
}

fn parse_pair(field: &str, line: usize, what: &str) -> Result<(usize, usize), SparseError> {
    let bad = || SparseError::Schema { line, message: format!("invalid {what} '{field}'") };
    let parse = |s: &str| s.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(bad);
    match field.split_once('x') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let v = parse(field)?;
            Ok((v, v))
        }
    }
}

/// Parses an architecture description (format in the module docs).
pub fn parse_architecture(text: &str) -> Result<Vec<LayerShape>, SparseError> {
    let mut layers = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(SparseError::Schema { line, message: format!("expected 6 fields, found {}", fields.len()) });
        }
        let count = |s: &str, what: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| SparseError::Schema { line, message: format!("invalid {what} '{s}'") })
        };
        let n_in = count(fields[1], "n_in")?;
        let n_out = count(fields[2], "n_out")?;
        match fields[0] {
            "fc" => {
                if fields[3..].iter().any(|&f| f != "-") {
                    return Err(SparseError::Schema { line, message: "fc layers take '-' for kernel, stride and input size".into() });
                }
                layers.push(LayerShape::fc(n_in, n_out));
            }
            "conv" => {
                let (kh, kw) = parse_pair(fields[3], line, "kernel")?;
                let stride = count(fields[4], "stride")?;
                if fields[5] == "-" {
                    return Err(SparseError::Schema { line, message: "convolution is missing its input spatial size".into() });
                }
                let (ih, iw) = parse_pair(fields[5], line, "input size")?;
                if ih < kh || iw < kw {
                    return Err(SparseError::Schema { line, message: format!("kernel {kh}x{kw} exceeds input {ih}x{iw}") });
                }
                layers.push(LayerShape {
                    kind: LayerKind::Conv {
                        kernel_h: kh,
                        kernel_w: kw,
                        stride,
                        out_h: Some((ih - kh) / stride + 1),
                        out_w: Some((iw - kw) / stride + 1),
                    },
                    n_in,
                    n_out,
                });
            }
            other => return Err(SparseError::Schema { line, message: format!("unknown layer kind '{other}'") }),
        }
    }
    if layers.is_empty() {
        return Err(SparseError::Schema { line: 0, message: "architecture lists no layers".into() });
    }
    Ok(layers)
}

/// The Nature-DQN convolutional network on 84×84×4 inputs.
pub const NATURE_CNN: &str = "\
# kind  n_in  n_out  kernel  stride  input_size
conv    4     32     8       4       84
conv    32    64     4       2       20
conv    64    64     3       1       9
fc      3136  512    -       -       -
fc      512   6      -       -       -
";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{erk_plan, mlp_shapes, uniform_plan};

    #[test]
    fn mlp_dense_total() {
        let shapes = mlp_shapes(&[6, 512, 512, 3]);
        let c = count_params(&shapes, &[3072, 262144, 1536]).unwrap();
        assert_eq!(c.dense_total, 267_779);
        assert_eq!(c.active_total, c.dense_total);
    }

    #[test]
    fn uniform_ninety_active() {
        let shapes = mlp_shapes(&[6, 512, 512, 3]);
        let plan = uniform_plan(0.9, &shapes).unwrap();
        let c = count_params_for_plan(&shapes, &plan).unwrap();
        assert_eq!(c.active_total, 26_675 + 1_027);
    }

    #[test]
    fn fc_flops_ignore_distribution() {
        let shapes = mlp_shapes(&[6, 512, 512, 3]);
        for s in [0.5, 0.8, 0.9, 0.95] {
            let u = count_flops_for_plan(&shapes, &uniform_plan(s, &shapes).unwrap()).unwrap();
            let e = count_flops_for_plan(&shapes, &erk_plan(s, &shapes).unwrap()).unwrap();
            assert_eq!(u, e, "s = {s}");
        }
    }

    #[test]
    fn nature_cnn_parses() {
        let layers = parse_architecture(NATURE_CNN).unwrap();
        assert_eq!(layers.len(), 5);
        let outs: Vec<_> = layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Conv { out_h, .. } => out_h,
                _ => None,
            })
            .collect();
        assert_eq!(outs, vec![20, 9, 7]);
        let dense: Vec<usize> = layers.iter().map(LayerShape::size).collect();
        let flops = count_flops(&layers, &dense).unwrap();
        assert_eq!(flops, (8192 * 400 + 32768 * 81 + 36864 * 49 + 3136 * 512 + 3072) as u64);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(parse_architecture("conv 4 32 8 4 -"), Err(SparseError::Schema { line: 1, .. })));
        assert!(matches!(parse_architecture("fc 4 32"), Err(SparseError::Schema { .. })));
        assert!(matches!(parse_architecture("pool 4 4 2 2 8"), Err(SparseError::Schema { .. })));
        assert!(matches!(parse_architecture("# nothing\n"), Err(SparseError::Schema { .. })));
        let conv = [LayerShape::conv(3, 8, 3, 1, None)];
        assert!(matches!(count_flops(&conv, &[10]), Err(SparseError::Schema { .. })));
    }
}
