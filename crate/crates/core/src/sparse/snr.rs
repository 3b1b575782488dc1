//! Gradient signal-to-noise statistics over a mini-batch.

use crate::numerics::{Gradients, Tape};

use super::SparseError;

/// Added to σ so zero-variance parameters have a finite SNR of `|μ|/ε`.
pub const SNR_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SnrRecord {
    pub step: u64,
    /// Per-parameter mean over the mini-batch.
    pub means: Vec<f64>,
    /// Per-parameter population standard deviation over the mini-batch.
    pub stds: Vec<f64>,
    /// Mean of `|μ|/(σ + ε)` over every parameter, active or not.
    pub mean_snr: f64,
}

impl SnrRecord {
    fn from_moments(step: u64, means: Vec<f64>, stds: Vec<f64>) -> Self {
        let n = means.len().max(1) as f64;
        let mean_snr = means.iter().zip(&stds).map(|(m, s)| m.abs() / (s + SNR_EPSILON)).sum::<f64>() / n;
        Self { step, means, stds, mean_snr }
    }

    pub fn snr(&self, index: usize) -> f64 {
        self.means[index].abs() / (self.stds[index] + SNR_EPSILON)
    }
}

/// Statistics from explicit per-sample gradients, one row per sample.
pub fn snr_stats(step: u64, samples: &[Vec<f64>]) -> Result<SnrRecord, SparseError> {
    if samples.len() < 2 {
        return Err(SparseError::InsufficientSamples(samples.len()));
    }
    let width = samples[0].len();
    if samples.iter().any(|s| s.len() != width) {
        return Err(SparseError::Shape("per-sample gradients differ in length".into()));
    }
    let n = samples.len() as f64;
    let mut means = vec![0.0; width];
    for s in samples {
        for (m, g) in means.iter_mut().zip(s) {
            *m += g;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; width];
    for s in samples {
        for ((v, g), m) in stds.iter_mut().zip(s).zip(&means) {
            *v += (g - m) * (g - m);
        }
    }
    stds.iter_mut().for_each(|v| *v = (*v / n).sqrt());
    Ok(SnrRecord::from_moments(step, means, stds))
}

/// Statistics for every weight and bias of an MLP, from the activations on
/// `tape` and the per-layer deltas kept by the backward pass.
///
/// Row `b` of each delta, multiplied by `sample_scale`, must be the gradient
/// of sample `b`'s own loss. Weight positions outside a layer's support are
/// included with their unmasked per-sample gradients. Parameters are ordered
/// `w0, b0, w1, b1, …`.
pub fn network_snr(step: u64, tape: &Tape, grads: &Gradients, sample_scale: f64) -> Result<SnrRecord, SparseError> {
    let deltas = grads
        .deltas
        .as_ref()
        .ok_or_else(|| SparseError::Shape("backward pass did not keep per-layer deltas".into()))?;
    let batch = tape.batch_size();
    if batch < 2 {
        return Err(SparseError::InsufficientSamples(batch));
    }
    let n = batch as f64;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut per_sample = vec![0.0; batch];
    for (l, delta) in deltas.iter().enumerate() {
        let x = tape.layer_input(l);
        let (n_in, n_out) = (x.cols(), delta.cols());
        let xt = x.transpose();
        let mut dt = delta.transpose();
        dt.scale(sample_scale);
        for i in 0..n_in {
            let xi = xt.row(i);
            for j in 0..n_out {
                let dj = dt.row(j);
                for b in 0..batch {
                    per_sample[b] = xi[b] * dj[b];
                }
                let (m, s) = mean_std(&per_sample, n);
                means.push(m);
                stds.push(s);
            }
        }
        for j in 0..n_out {
            let (m, s) = mean_std(dt.row(j), n);
            means.push(m);
            stds.push(s);
        }
    }
    Ok(SnrRecord::from_moments(step, means, stds))
}

#[inline]
fn mean_std(values: &[f64], n: f64) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{he_init, BackwardOptions, Mlp, RngStream, Tensor2};

    #[test]
    fn zero_variance() {
        let rec = snr_stats(0, &[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(rec.stds[0], 0.0);
        assert!((rec.mean_snr - 1.0 / SNR_EPSILON).abs() < 1e-6);
    }

    #[test]
    fn symmetric_samples() {
        let rec = snr_stats(0, &[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(rec.mean_snr, 0.0);
    }

    #[test]
    fn three_and_one() {
        let rec = snr_stats(0, &[vec![3.0], vec![1.0]]).unwrap();
        assert_eq!(rec.means[0], 2.0);
        assert_eq!(rec.stds[0], 1.0);
        assert!((rec.mean_snr - 2.0 / (1.0 + SNR_EPSILON)).abs() < 1e-15);
    }

    #[test]
    fn single_sample_rejected() {
        assert!(matches!(snr_stats(0, &[vec![1.0]]), Err(SparseError::InsufficientSamples(1))));
    }

    #[test]
    fn network_path_matches_explicit_samples() {
        let mut rng = RngStream::new(21, "snr");
        let net = Mlp::new(&[3, 5, 4, 2], &mut rng).unwrap();
        let x = he_init(6, 3, 1, &mut rng).unwrap();
        let up = he_init(6, 2, 1, &mut rng).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        let opts = BackwardOptions { deltas: true, ..Default::default() };
        let g = net.backward(&tape, &up, opts).unwrap();
        let fast = network_snr(4, &tape, &g, 1.0).unwrap();

        let samples: Vec<Vec<f64>> = (0..6)
            .map(|b| {
                let xb = Tensor2::row_vector(x.row(b));
                let ub = Tensor2::row_vector(up.row(b));
                let t = net.forward_tape(&xb).unwrap();
                let gb = net.backward(&t, &ub, BackwardOptions::default()).unwrap();
                gb.blocks().concat()
            })
            .collect();
        let slow = snr_stats(4, &samples).unwrap();
        assert_eq!(fast.means.len(), net.param_count());
        for (a, b) in fast.means.iter().zip(&slow.means) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in fast.stds.iter().zip(&slow.stds) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((fast.mean_snr - slow.mean_snr).abs() / slow.mean_snr < 1e-6);
    }
}
