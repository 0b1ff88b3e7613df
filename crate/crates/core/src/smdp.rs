//! Semi-MDP value iteration over temporally extended actions.
//!
//! The backup is `(TV)(s) = max_z E[R_tau + gamma^tau V(s') | s, z]`. It is a
//! contraction with modulus `gamma_bar = sup_{s,z} E[gamma^tau | s, z]`, so
//! longer options shrink the error faster per iteration.
//!
//! By default the planner discounts the rewards inside an option from k = 1
//! (`RewardIndexing::FromOne`), i.e. `R_tau = sum_{k=1}^{tau} gamma^k R_k`.
//! Values are then one factor of gamma below the ordinary return; the
//! contraction modulus and the iteration counts are unaffected.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{ActionSpace, Mdp, OptionModel, RewardIndexing, ITERATION_CAP};
use crate::numeric::{sup_norm, sup_norm_diff};

/// Residual to which the reference fixed point is converged.
pub const REFERENCE_TOLERANCE: f64 = 1e-12;

pub fn gamma_bar(mdp: &Mdp, space: &ActionSpace) -> f64 {
    OptionModel::build(mdp, space, RewardIndexing::FromZero).gamma_bar()
}

pub fn smdp_backup(v: &[f64], mdp: &Mdp, space: &ActionSpace, indexing: RewardIndexing) -> Result<Vec<f64>> {
    OptionModel::build(mdp, space, indexing).backup(v)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlanSettings {
    pub indexing: RewardIndexing,
    pub iteration_cap: usize,
}

impl Default for PlanSettings {
    fn default() -> Self {
        PlanSettings { indexing: RewardIndexing::FromOne, iteration_cap: ITERATION_CAP }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanReport {
    /// Iterations N needed for `||V_N - V*|| <= eps`.
    pub iterations: usize,
    /// `||V_{n+1} - V_n||` for n = 0..N-1.
    pub residuals: Vec<f64>,
    /// `||V_n - V*||` for n = 0..=N.
    pub errors: Vec<f64>,
    pub final_error: f64,
    pub gamma_bar: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub eps: f64,
    /// Iteration count from the closed-form bound.
    pub bound_n: u64,
    pub values: Vec<f64>,
    pub reference: Vec<f64>,
}

/// Runs value iteration from `V_0 = 0` until it is within `eps` of the
/// reference fixed point.
pub fn iterate_to_eps(mdp: &Mdp, space: &ActionSpace, eps: f64, settings: PlanSettings) -> Result<PlanReport> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    let model = OptionModel::build(mdp, space, settings.indexing);
    let reference = model.solve(REFERENCE_TOLERANCE, settings.iteration_cap)?;
    let gb = model.gamma_bar();
    let mut v = vec![0.0; mdp.n_states()];
    let mut errors = vec![sup_norm(&reference)];
    let mut residuals = Vec::new();
    while *errors.last().unwrap() > eps {
        if residuals.len() >= settings.iteration_cap {
            return Err(Error::NoConvergence {
                iterations: residuals.len(),
                residual: residuals.last().copied().unwrap_or(f64::NAN),
            });
        }
        let next = model.backup(&v)?;
        residuals.push(sup_norm_diff(&next, &v));
        v = next;
        errors.push(sup_norm_diff(&v, &reference));
    }
    let r_max = mdp.r_max();
    let bound_n = if r_max > 0.0 {
        iteration_lower_bound(gb, mdp.gamma(), r_max, eps)?
    } else {
        0
    };
    Ok(PlanReport {
        iterations: residuals.len(),
        residuals,
        final_error: *errors.last().unwrap(),
        errors,
        gamma_bar: gb,
        gamma: mdp.gamma(),
        r_max,
        eps,
        bound_n,
        values: v,
        reference,
    })
}

/// `ceil( 1/(1-gamma_bar) * ln( r_max / (eps (1-gamma)) ) )`, clamped at 0.
pub fn iteration_lower_bound(gamma_bar: f64, gamma: f64, r_max: f64, eps: f64) -> Result<u64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid("gamma must lie in (0,1)");
    }
    // a summed kernel can land an ulp above gamma
    if !(gamma_bar > 0.0 && gamma_bar <= gamma + 1e-12) {
        return invalid("gamma_bar must lie in (0, gamma]");
    }
    let gamma_bar = gamma_bar.min(gamma);
    if !(r_max > 0.0) || !(eps > 0.0) {
        return invalid("r_max and eps must be positive");
    }
    let arg = r_max / (eps * (1.0 - gamma));
    // 1/(10 * 0.1) evaluates slightly above 1; treat that as exactly 1
    if arg <= 1.0 + 1e-12 {
        return Ok(0);
    }
    Ok((arg.ln() / (1.0 - gamma_bar)).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MdpSpec, OptionSpec, Sequence};
    use std::collections::BTreeMap;

    fn one_state(gamma: f64) -> Mdp {
        Mdp::new(MdpSpec {
            states: 1,
            actions: vec![0],
            gamma,
            reward: vec![vec![1.0]],
            transition: vec![vec![vec![1.0]]],
            initial_state: 0,
        })
        .unwrap()
    }

    #[test]
    fn gamma_bar_examples() {
        let m = one_state(0.95);
        assert!((gamma_bar(&m, &ActionSpace::primitive(&m)) - 0.95).abs() < 1e-15);
        let four = ActionSpace::new(vec![OptionSpec::deterministic(1, &[0, 0, 0, 0], 1)], &m).unwrap();
        assert!((gamma_bar(&m, &four) - 0.814_506_25).abs() < 1e-15);

        let m9 = one_state(0.9);
        let mut body = BTreeMap::new();
        body.insert(
            0,
            vec![
                Sequence { prob: 0.5, actions: vec![0] },
                Sequence { prob: 0.5, actions: vec![0, 0] },
            ],
        );
        let mixed = ActionSpace::new(vec![OptionSpec { id: 3, body }], &m9).unwrap();
        assert!((gamma_bar(&m9, &mixed) - 0.855).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(iteration_lower_bound(0.99, 0.99, 1.0, 0.01).unwrap(), 922);
        assert_eq!(iteration_lower_bound(0.96059601, 0.99, 1.0, 0.01).unwrap(), 234);
        assert_eq!(iteration_lower_bound(0.9, 0.9, 1.0, 10.0).unwrap(), 0);
        assert_eq!(iteration_lower_bound(0.9, 0.9, 1.0, 20.0).unwrap(), 0);
        assert!(iteration_lower_bound(0.95, 0.9, 1.0, 0.1).is_err());
        assert!(iteration_lower_bound(0.5, 0.9, 0.0, 0.1).is_err());
    }

    #[test]
    fn single_state_residual_ratio_is_gamma_bar() {
        let m = one_state(0.9);
        let space = ActionSpace::new(vec![OptionSpec::deterministic(1, &[0, 0], 1)], &m).unwrap();
        let rep = iterate_to_eps(&m, &space, 1e-6, PlanSettings::default()).unwrap();
        for w in rep.residuals.windows(2) {
            assert!((w[1] / w[0] - 0.81).abs() < 1e-8);
        }
    }

    #[test]
    fn large_eps_needs_no_iterations() {
        let m = one_state(0.5);
        let rep = iterate_to_eps(&m, &ActionSpace::primitive(&m), 100.0, PlanSettings::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.residuals.is_empty());
    }

    #[test]
    fn backup_dimension_mismatch() {
        let m = one_state(0.5);
        let err = smdp_backup(&[0.0, 0.0], &m, &ActionSpace::primitive(&m), RewardIndexing::FromOne);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let m = one_state(0.99);
        let settings = PlanSettings { iteration_cap: 10, ..PlanSettings::default() };
        assert!(matches!(
            iterate_to_eps(&m, &ActionSpace::primitive(&m), 1e-3, settings),
            Err(Error::NoConvergence { .. })
        ));
    }
}
