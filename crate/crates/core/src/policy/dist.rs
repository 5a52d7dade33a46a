//! Action distributions: Bernoulli admissions and Gaussian-perturbed logits
//! that are mapped onto simplices by (masked) normalised exponentials.

use crate::nn::{softplus, stable_sigmoid};

/// Lower bound on per-dimension log standard deviation; keeps each Gaussian
/// dimension's differential entropy non-negative.
pub const LOG_STD_MIN: f64 = -0.5 * 2.837_877_066_409_345_3; // -0.5 * ln(2 pi e)
/// Gaussian actions are allocation logits multiplied by this, so a unit of
/// action-space noise is a quarter of a logit. Together with [`LOG_STD_MIN`]
/// it sets the finest exploration noise the logits can reach.
pub const ACTION_SCALE: f64 = 4.0;
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
pub const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

/// Normalised exponentials over the entries with `mask[i] == true`; masked-out
/// entries get exactly zero. All-false masks give all zeros.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    debug_assert_eq!(logits.len(), mask.len());
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let e: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    masked_softmax(logits, &vec![true; logits.len()])
}

pub fn gaussian_log_prob(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

/// `log P(a)` for a Bernoulli with success logit `z`.
pub fn bernoulli_log_prob(admitted: bool, z: f64) -> f64 {
    if admitted {
        -softplus(-z)
    } else {
        -softplus(z)
    }
}

/// Entropy of a Bernoulli with success logit `z`; exactly zero for saturated logits.
pub fn bernoulli_entropy(z: f64) -> f64 {
    let h = softplus(z) - z * stable_sigmoid(z);
    h.max(0.0)
}

/// Entropy of a Bernoulli with success probability `p`.
pub fn bernoulli_entropy_p(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// Maps a raw log-std parameter to its bounded value.
pub fn bounded_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + softplus(raw)
}

/// Raw parameter value that yields `log_std`.
pub fn raw_for_log_std(log_std: f64) -> f64 {
    let y = (log_std - LOG_STD_MIN).max(1e-6);
    // inverse softplus
    y + (-(-y).exp_m1()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let r = softmax(&[0.3, 0.3, 0.3]);
        assert!(r.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let r = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]);
        for (got, want) in r.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let r = masked_softmax(&[5.0, 1.0, 1.0], &[false, true, true]);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 0.5).abs() < 1e-15);
        assert_eq!(masked_softmax(&[1.0, 2.0], &[false, false]), vec![0.0, 0.0]);
    }

    #[test]
    fn entropy_bounds() {
        assert_eq!(bernoulli_entropy(1e3), 0.0);
        assert_eq!(bernoulli_entropy(-1e3), 0.0);
        assert_eq!(bernoulli_entropy_p(1.0), 0.0);
        assert!((bernoulli_entropy(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((bernoulli_entropy_p(0.5) - 2f64.ln()).abs() < 1e-15);
        // the lowest admissible log-std has zero differential entropy
        assert!((HALF_LN_2PI_E + LOG_STD_MIN).abs() < 1e-15);
        assert!(bounded_log_std(-50.0) >= LOG_STD_MIN);
    }

    #[test]
    fn log_std_inverse() {
        for target in [-1.0, -0.5, 0.0, 0.7] {
            assert!((bounded_log_std(raw_for_log_std(target)) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_log_prob_at_mean() {
        assert!((gaussian_log_prob(1.0, 1.0, 0.0) + HALF_LN_2PI).abs() < 1e-15);
        let lp = gaussian_log_prob(2.0, 0.0, 0.5f64.ln());
        // N(0, 0.5^2) density at 2: z = 4
        let oracle = -8.0 - 0.5f64.ln() - HALF_LN_2PI;
        assert!((lp - oracle).abs() < 1e-12);
    }
}
