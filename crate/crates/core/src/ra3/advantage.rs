//! Group baselines and truncated advantages for the latent policy gradient.

use crate::error::{invalid, Result};

/// `sum_{k=t}^{min(t+W-1, T)} r_k` for every `t`; `None` sums the full tail.
pub fn truncated_returns(rewards: &[f64], window: Option<usize>) -> Vec<f64> {
    let n = rewards.len();
    let w = window.unwrap_or(n).max(1);
    (0..n)
        .map(|t| rewards[t..(t + w).min(n)].iter().sum())
        .collect()
}

/// Per-step group mean of (optionally truncated) tail reward sums.
pub fn group_baseline(rollouts: &[Vec<f64>], window: Option<usize>) -> Result<Vec<f64>> {
    let Some(first) = rollouts.first() else {
        return invalid("group must contain at least one rollout");
    };
    if rollouts.iter().any(|r| r.len() != first.len()) {
        return invalid("rollouts in a group must share their length");
    }
    let g = rollouts.len() as f64;
    let mut b = vec![0.0; first.len()];
    for r in rollouts {
        for (bt, rt) in b.iter_mut().zip(truncated_returns(r, window)) {
            *bt += rt / g;
        }
    }
    Ok(b)
}

/// `A_t = sum_{k=t}^{min(t+W-1,T)} r_k - b_t`.
pub fn truncated_advantage(rewards: &[f64], baseline: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return invalid("window must be at least 1");
    }
    if rewards.len() != baseline.len() {
        return invalid("rewards and baseline must have equal length");
    }
    Ok(truncated_returns(rewards, Some(window))
        .iter()
        .zip(baseline)
        .map(|(r, b)| r - b)
        .collect())
}

/// Advantages for a whole group with matching truncation, scaled by
/// `G / (G - 1)` so that each rollout is compared with the mean of the
/// others. A single-rollout group gets zero advantages.
pub fn group_advantages(rollouts: &[Vec<f64>], window: usize) -> Result<Vec<Vec<f64>>> {
    let b = group_baseline(rollouts, Some(window))?;
    let g = rollouts.len();
    let scale = if g > 1 { g as f64 / (g - 1) as f64 } else { 0.0 };
    rollouts
        .iter()
        .map(|r| Ok(truncated_advantage(r, &b, window)?.into_iter().map(|a| a * scale).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_examples() {
        let b = group_baseline(&[vec![1.0, 0.0], vec![0.0, 1.0]], None).unwrap();
        assert_eq!(b, vec![1.0, 0.5]);
        assert_eq!(group_baseline(&vec![vec![0.0; 3]; 4], None).unwrap(), vec![0.0; 3]);
        let single = vec![vec![1.0, 2.0, 3.0]];
        assert_eq!(group_baseline(&single, None).unwrap(), vec![6.0, 5.0, 3.0]);
        assert!(group_baseline(&[vec![1.0], vec![1.0, 2.0]], None).is_err());
    }

    #[test]
    fn window_sums() {
        let r = vec![1.0; 12];
        let ret = truncated_returns(&r, Some(5));
        assert_eq!(ret[0], 5.0);
        assert_eq!(ret[6], 5.0);
        assert_eq!(ret[10], 2.0);
        let b = vec![0.0; 12];
        assert_eq!(truncated_advantage(&r, &b, 100).unwrap(), truncated_returns(&r, None));
    }

    #[test]
    fn identical_rollouts_have_zero_advantage() {
        let g = vec![vec![0.3, -1.0, 2.0]; 3];
        for a in group_advantages(&g, 2).unwrap() {
            assert!(a.iter().all(|x| x.abs() < 1e-15));
        }
        for a in group_advantages(&[vec![1.0, 2.0]], 5).unwrap() {
            assert!(a.iter().all(|x| *x == 0.0));
        }
    }
}
