use crate::error::{Error, Result};

/// Per-sample clipped surrogate loss `-min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn ppo_clip_loss(ratio: f64, advantage: f64, eps: f64) -> f64 {
    -(ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Generalized advantage estimation.
///
/// `dones[t]` marks that the episode ended after step `t`, cutting both the
/// bootstrap and the advantage recursion. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    discount: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::InvalidInput(format!(
            "compute_gae: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    if !(discount > 0.0 && discount <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "compute_gae: need discount in (0, 1] and lambda in [0, 1], got {discount}, {lambda}"
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discount * next_value * live - values[t];
        next_adv = delta + discount * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_loss_examples() {
        for a in [-3.0, 0.0, 0.7] {
            assert_eq!(ppo_clip_loss(1.0, a, 0.2), -a);
        }
        assert!((ppo_clip_loss(2.0, 1.0, 0.2) + 1.2).abs() < 1e-12);
        // both branches: r A = -0.5, clip(r) A = -0.8
        assert!((ppo_clip_loss(0.5, -1.0, 0.2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn gae_single_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[false], 0.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn gae_matches_discounted_sum() {
        let (a, _) = compute_gae(&[1.0; 3], &[0.0; 3], &[false; 3], 0.0, 0.5, 1.0).unwrap();
        // brute force: sum_k 0.5^k r_{t+k}
        let oracle: Vec<f64> = (0..3).map(|t| (t..3).map(|k| 0.5f64.powi(k - t)).sum()).collect();
        assert_eq!(oracle, vec![1.75, 1.5, 1.0]);
        for (x, y) in a.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_with_zero_lambda_is_td_error() {
        let r = [0.3, -1.0, 2.0];
        let v = [0.5, 0.1, -0.4];
        let d = [false, true, false];
        let (a, _) = compute_gae(&r, &v, &d, 0.9, 0.9, 0.0).unwrap();
        let td = [0.3 + 0.9 * 0.1 - 0.5, -1.0 - 0.1, 2.0 + 0.9 * 0.9 + 0.4];
        for (x, y) in a.iter().zip(td) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_rejects_misaligned_inputs() {
        assert!(matches!(
            compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9),
            Err(Error::InvalidInput(_))
        ));
    }
}
