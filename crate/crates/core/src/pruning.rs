//! Action-space pruning from expert demonstrations.
//!
//! Everything here is exact over finite task distributions: the pruning error
//! `delta(M, Z') = V*_M(s0) - V*_{M_Z'}(s0)` is tabulated for every subset of
//! the action universe by value iteration, and expectations over tasks are
//! weighted sums.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use itertools::Itertools;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{
    ActionId, ActionSpace, Mdp, OptionModel, OptionSpec, RewardIndexing, StochasticPolicy, TaskDistribution,
    ITERATION_CAP, VALUE_TOLERANCE,
};
use crate::numeric::sample_index;
use crate::rng;

/// Default bound on |Z| for exhaustive subset search.
pub const DEFAULT_CAP: usize = 16;

/// Slack on `delta <= eps` comparisons, well above value-iteration error.
pub const DELTA_SLACK: f64 = 1e-9;

/// `V*_M(s0) - V*_{M_Z'}(s0)`.
pub fn delta(mdp: &Mdp, space: &ActionSpace, subset: &[ActionId]) -> Result<f64> {
    let model = OptionModel::build(mdp, space, RewardIndexing::FromZero);
    let full = model.solve(VALUE_TOLERANCE, ITERATION_CAP)?;
    let part = model.restrict(subset)?.solve(VALUE_TOLERANCE, ITERATION_CAP)?;
    let s0 = mdp.initial_state();
    Ok((full[s0] - part[s0]).max(0.0))
}

/// `ceil(constant * z_bar_size * ln(z_size / delta) / sigma)`.
pub fn sample_complexity(z_bar_size: usize, z_size: f64, delta: f64, sigma: f64, constant: f64) -> Result<u64> {
    if z_bar_size == 0 || !(z_size > 0.0) || !(constant > 0.0) {
        return invalid("sizes and constant must be positive");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid("delta must lie in (0,1)");
    }
    if !(sigma > 0.0 && sigma <= 1.0) {
        return invalid("sigma must lie in (0,1]");
    }
    let raw = constant * z_bar_size as f64 * (z_size / delta).ln() / sigma;
    // Guard against 17.000000000000004-style rounding pushing the ceiling up.
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        return Ok(rounded.max(0.0) as u64);
    }
    Ok(raw.ceil().max(0.0) as u64)
}

/// Per-task pruning errors for every nonempty subset of the action universe.
#[derive(Clone, Debug)]
pub struct DeltaTable {
    universe: Vec<ActionId>,
    weights: Vec<f64>,
    // deltas[task][mask], mask bit i <=> universe[i]
    deltas: Vec<Vec<f64>>,
}

impl DeltaTable {
    pub fn universe(&self) -> &[ActionId] {
        &self.universe
    }

    pub fn n_tasks(&self) -> usize {
        self.deltas.len()
    }

    pub fn mask(&self, subset: &[ActionId]) -> Result<usize> {
        subset.iter().try_fold(0usize, |m, id| {
            let i = self
                .universe
                .iter()
                .position(|u| u == id)
                .ok_or_else(|| Error::Invalid(format!("unknown action id {id}")))?;
            Ok(m | (1 << i))
        })
    }

    pub fn ids(&self, mask: usize) -> Vec<ActionId> {
        self.universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, id)| *id)
            .collect()
    }

    pub fn delta_mask(&self, task: usize, mask: usize) -> f64 {
        self.deltas[task][mask]
    }

    pub fn delta(&self, task: usize, subset: &[ActionId]) -> Result<f64> {
        let m = self.mask(subset)?;
        if m == 0 {
            return invalid("subset must be nonempty");
        }
        Ok(self.deltas[task][m])
    }

    fn in_support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.deltas.len()).filter(|&t| self.weights[t] > 0.0)
    }

    fn eps_optimal_everywhere(&self, mask: usize, eps: f64) -> bool {
        self.in_support().all(|t| self.deltas[t][mask] <= eps + DELTA_SLACK)
    }
}

/// Exact pruning computations over one finite task distribution.
pub struct PruningLab {
    dist: TaskDistribution,
    spaces: Vec<ActionSpace>,
    cap: usize,
    table: OnceLock<Result<DeltaTable>>,
}

impl PruningLab {
    /// Primitive actions as the action universe.
    pub fn primitive(dist: TaskDistribution) -> Self {
        let spaces = dist.tasks().iter().map(ActionSpace::primitive).collect();
        PruningLab { dist, spaces, cap: DEFAULT_CAP, table: OnceLock::new() }
    }

    /// A shared option library as the action universe.
    pub fn with_options(dist: TaskDistribution, options: &[OptionSpec]) -> Result<Self> {
        let spaces = dist
            .tasks()
            .iter()
            .map(|t| ActionSpace::new(options.to_vec(), t))
            .collect::<Result<_>>()?;
        Ok(PruningLab { dist, spaces, cap: DEFAULT_CAP, table: OnceLock::new() })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self.table = OnceLock::new();
        self
    }

    pub fn distribution(&self) -> &TaskDistribution {
        &self.dist
    }

    pub fn universe(&self) -> Vec<ActionId> {
        let mut ids = self.spaces[0].ids();
        ids.sort_unstable();
        ids
    }

    /// The subset table, computed on first use.
    pub fn table(&self) -> Result<&DeltaTable> {
        let size = self.spaces[0].len();
        if size > self.cap {
            return Err(Error::CapExceeded { size, cap: self.cap });
        }
        self.table
            .get_or_init(|| self.build_table())
            .as_ref()
            .map_err(|e| Error::Invalid(e.to_string()))
    }

    fn build_table(&self) -> Result<DeltaTable> {
        let universe = self.universe();
        let n_masks = 1usize << universe.len();
        let deltas = self
            .dist
            .tasks()
            .iter()
            .zip(&self.spaces)
            .map(|(mdp, space)| {
                let model = OptionModel::build(mdp, space, RewardIndexing::FromZero);
                let s0 = mdp.initial_state();
                let full = model.solve(VALUE_TOLERANCE, ITERATION_CAP)?[s0];
                let mut row = vec![f64::INFINITY; n_masks];
                let parts: Vec<(usize, f64)> = (1..n_masks)
                    .into_par_iter()
                    .map(|mask| {
                        let ids: Vec<ActionId> = universe
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, id)| *id)
                            .collect();
                        let v = model.restrict(&ids)?.solve(VALUE_TOLERANCE, ITERATION_CAP)?;
                        Ok((mask, (full - v[s0]).max(0.0)))
                    })
                    .collect::<Result<_>>()?;
                for (mask, d) in parts {
                    row[mask] = d;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DeltaTable { universe, weights: self.dist.weights().to_vec(), deltas })
    }

    /// Smallest k such that some k-subset is eps-optimal for every task in the
    /// support, with the lexicographically first such subset as witness.
    pub fn min_eps_subset_size(&self, eps: f64) -> Result<(usize, Vec<ActionId>)> {
        let table = self.table()?;
        let n = table.universe.len();
        for k in 1..=n {
            for combo in (0..n).combinations(k) {
                let mask = combo.iter().fold(0, |m, i| m | (1 << i));
                if table.eps_optimal_everywhere(mask, eps) {
                    return Ok((k, table.ids(mask)));
                }
            }
        }
        unreachable!("the full action set is always eps-optimal")
    }

    /// Union of the inclusion-minimal eps-optimal subsets of one task.
    ///
    /// Every superset of an eps-optimal subset is eps-optimal, so the union of
    /// all eps-optimal subsets is always the whole universe; the minimal ones
    /// are the subsets whose members each matter.
    pub fn eps_optimal_actions(&self, task: usize, eps: f64) -> Result<BTreeSet<ActionId>> {
        let table = self.table()?;
        let n = table.universe.len();
        let ok = |m: usize| m != 0 && table.deltas[task][m] <= eps + DELTA_SLACK;
        let mut union = 0usize;
        for mask in 1..(1usize << n) {
            if union | mask == union || !ok(mask) {
                continue;
            }
            let minimal = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .all(|i| !ok(mask & !(1 << i)));
            if minimal {
                union |= mask;
            }
        }
        Ok(table.ids(union).into_iter().collect())
    }

    /// `P_M[z not in Z_eps(M)] >= sigma`.
    pub fn is_suboptimal_action(&self, z: ActionId, eps: f64, sigma: f64) -> Result<bool> {
        let table = self.table()?;
        table.mask(&[z])?;
        let mut p = 0.0;
        for (t, w) in self.dist.weights().iter().enumerate() {
            if *w > 0.0 && !self.eps_optimal_actions(t, eps)?.contains(&z) {
                p += w;
            }
        }
        Ok(p >= sigma - 1e-12)
    }

    /// `P_M[delta(M, Z') > eps] >= sigma`.
    pub fn is_suboptimal_subset(&self, subset: &[ActionId], eps: f64, sigma: f64) -> Result<bool> {
        let table = self.table()?;
        let mask = table.mask(subset)?;
        if mask == 0 {
            return invalid("subset must be nonempty");
        }
        Ok(subset_failure_mass(table, mask, eps) >= sigma - 1e-12)
    }

    /// All (eps, sigma)-suboptimal actions of the universe.
    pub fn suboptimal_actions(&self, eps: f64, sigma: f64) -> Result<BTreeSet<ActionId>> {
        let mut out = BTreeSet::new();
        for z in self.universe() {
            if self.is_suboptimal_action(z, eps, sigma)? {
                out.insert(z);
            }
        }
        Ok(out)
    }

    /// `E_M[delta(M, Z')]`.
    pub fn pruning_error(&self, subset: &[ActionId]) -> Result<f64> {
        let table = self.table()?;
        let mask = table.mask(subset)?;
        if mask == 0 {
            return invalid("subset must be nonempty");
        }
        Ok(self
            .dist
            .weights()
            .iter()
            .enumerate()
            .map(|(t, w)| w * table.deltas[t][mask])
            .sum())
    }

    /// Samples `n_demos` tasks and keeps every `subset_size`-subset that is
    /// eps-optimal on all of them. Task draws are a prefix of one seeded
    /// stream, so larger `n_demos` sees a superset of the same demos.
    pub fn prune_from_demos(&self, eps: f64, n_demos: usize, subset_size: usize, seed: u64) -> Result<PruneOutcome> {
        let mut rng = rng::stream(seed, &[rng::tag::PRUNE]);
        let sampled: Vec<usize> = (0..n_demos)
            .map(|_| sample_index(self.dist.weights(), &mut rng))
            .collect();
        self.prune_with_tasks(eps, &sampled, subset_size)
    }

    /// Pruning against an explicit list of demonstrated task indices.
    pub fn prune_with_tasks(&self, eps: f64, sampled: &[usize], subset_size: usize) -> Result<PruneOutcome> {
        let table = self.table()?;
        let n = table.universe.len();
        if subset_size == 0 || subset_size > n {
            return invalid(format!("subset size must lie in 1..={n}"));
        }
        let distinct: BTreeSet<usize> = sampled.iter().copied().collect();
        if let Some(t) = distinct.iter().find(|&&t| t >= table.n_tasks()) {
            return invalid(format!("task index {t} out of range"));
        }
        let mut union = 0usize;
        let mut surviving_subsets = Vec::new();
        for combo in (0..n).combinations(subset_size) {
            let mask = combo.iter().fold(0, |m, i| m | (1 << i));
            if distinct.iter().all(|&t| table.deltas[t][mask] <= eps + DELTA_SLACK) {
                union |= mask;
                surviving_subsets.push(table.ids(mask));
            }
        }
        let surviving: BTreeSet<ActionId> = table.ids(union).into_iter().collect();
        let per_action_survival = table
            .universe
            .iter()
            .map(|id| (*id, surviving.contains(id)))
            .collect();
        let pruning_error = if union == 0 {
            None
        } else {
            Some(
                self.dist
                    .weights()
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * table.deltas[t][union])
                    .sum(),
            )
        };
        Ok(PruneOutcome {
            surviving,
            surviving_subsets,
            n_demos: sampled.len(),
            per_action_survival,
            pruning_error,
            sampled_tasks: sampled.to_vec(),
        })
    }

    /// Splits the regret of `policy` into pruning error and RL error.
    ///
    /// All tasks must share the policy's state count; the policy must only
    /// use actions from `subset`.
    pub fn regret_decompose(&self, subset: &[ActionId], policy: &StochasticPolicy) -> Result<RegretDecomposition> {
        let subset_set: BTreeSet<_> = subset.iter().collect();
        if let Some(id) = policy.ids.iter().find(|id| !subset_set.contains(id)) {
            return invalid(format!("policy uses action {id} outside the subset"));
        }
        let mut out = RegretDecomposition::default();
        for ((mdp, w), space) in self.dist.iter().zip(&self.spaces) {
            let s0 = mdp.initial_state();
            let full = OptionModel::build(mdp, space, RewardIndexing::FromZero);
            let restricted = full.restrict(subset)?;
            let v_star = full.solve(VALUE_TOLERANCE, ITERATION_CAP)?[s0];
            let v_star_sub = restricted.solve(VALUE_TOLERANCE, ITERATION_CAP)?[s0];
            let v_pi_full = full.policy_value(policy)?[s0];
            let v_pi_sub = restricted.policy_value(policy)?[s0];
            out.pruning_error += w * (v_star - v_star_sub);
            out.rl_error += w * (v_star_sub - v_pi_sub);
            out.total_regret += w * (v_star - v_pi_full);
        }
        Ok(out)
    }
}

fn subset_failure_mass(table: &DeltaTable, mask: usize, eps: f64) -> f64 {
    table
        .weights
        .iter()
        .enumerate()
        .filter(|(t, _)| table.deltas[*t][mask] > eps + DELTA_SLACK)
        .map(|(_, w)| w)
        .sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub surviving: BTreeSet<ActionId>,
    pub surviving_subsets: Vec<Vec<ActionId>>,
    pub n_demos: usize,
    pub per_action_survival: BTreeMap<ActionId, bool>,
    /// `E_M[delta(M, surviving)]`; `None` when nothing survives.
    pub pruning_error: Option<f64>,
    pub sampled_tasks: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretDecomposition {
    pub pruning_error: f64,
    pub rl_error: f64,
    pub total_regret: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleComplexityConfig {
    pub eps: f64,
    pub sigma: f64,
    pub delta: f64,
    pub constant: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub n_demos: usize,
    pub survived_suboptimal: bool,
    pub pruning_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleComplexityReport {
    pub z_size: usize,
    pub z_bar_size: usize,
    pub witness: Vec<ActionId>,
    pub suboptimal_actions: BTreeSet<ActionId>,
    pub n_demos: usize,
    pub rows: Vec<ReplicationRow>,
    /// Fraction of replications where an (eps, sigma)-suboptimal action survived.
    pub survival_rate: f64,
    /// Fraction where some (eps, sigma)-suboptimal subset of size |Z_bar| survived.
    pub subset_survival_rate: f64,
    pub max_pruning_error: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / replications)`.
    pub threshold: f64,
}

impl SampleComplexityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replication,n_demos,survived_suboptimal,pruning_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.replication, r.n_demos, r.survived_suboptimal as u8, r.pruning_error
            ));
        }
        out
    }
}

/// Replicates demonstration-driven pruning with the sample size from
/// [`sample_complexity`] and records how often suboptimal actions survive.
pub fn run_sample_complexity(lab: &PruningLab, cfg: &SampleComplexityConfig) -> Result<SampleComplexityReport> {
    if cfg.replications == 0 {
        return invalid("replications must be positive");
    }
    let (z_bar, witness) = lab.min_eps_subset_size(cfg.eps)?;
    let universe = lab.universe();
    let n_demos = sample_complexity(z_bar, universe.len() as f64, cfg.delta, cfg.sigma, cfg.constant)? as usize;
    let bad_actions = lab.suboptimal_actions(cfg.eps, cfg.sigma)?;
    let table = lab.table()?;
    let bad_subsets: BTreeSet<Vec<ActionId>> = (0..universe.len())
        .combinations(z_bar)
        .map(|c| c.iter().fold(0, |m, i| m | (1 << i)))
        .filter(|&mask| subset_failure_mass(table, mask, cfg.eps) >= cfg.sigma - 1e-12)
        .map(|mask| table.ids(mask))
        .collect();

    let results: Vec<(ReplicationRow, bool)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = cfg.seed.wrapping_add(rep as u64).wrapping_mul(0x9E37_79B9);
            let outcome = lab.prune_from_demos(cfg.eps, n_demos, z_bar, seed ^ rep as u64)?;
            let survived = bad_actions.iter().any(|z| outcome.surviving.contains(z));
            let subset_survived = outcome.surviving_subsets.iter().any(|s| bad_subsets.contains(s));
            let row = ReplicationRow {
                replication: rep,
                n_demos,
                survived_suboptimal: survived,
                pruning_error: outcome.pruning_error.unwrap_or(f64::INFINITY),
            };
            Ok((row, subset_survived))
        })
        .collect::<Result<_>>()?;
    let reps = cfg.replications as f64;
    let survival_rate = results.iter().filter(|(r, _)| r.survived_suboptimal).count() as f64 / reps;
    let subset_survival_rate = results.iter().filter(|(_, s)| *s).count() as f64 / reps;
    let rows: Vec<ReplicationRow> = results.into_iter().map(|(r, _)| r).collect();
    let max_pruning_error = rows.iter().map(|r| r.pruning_error).fold(0.0, f64::max);
    Ok(SampleComplexityReport {
        z_size: universe.len(),
        z_bar_size: z_bar,
        witness,
        suboptimal_actions: bad_actions,
        n_demos,
        rows,
        survival_rate,
        subset_survival_rate,
        max_pruning_error,
        threshold: cfg.delta + 3.0 * (cfg.delta * (1.0 - cfg.delta) / reps).sqrt(),
    })
}

/// Smallest constant on `grid` whose survival rate over a calibration run
/// (its own seed stream) is at most `delta`.
pub fn calibrate_constant(lab: &PruningLab, base: &SampleComplexityConfig, grid: &[f64]) -> Result<f64> {
    for &c in grid {
        let cfg = SampleComplexityConfig {
            constant: c,
            seed: rng::stream(base.seed, &[rng::tag::CALIBRATE]).gen(),
            ..base.clone()
        };
        if run_sample_complexity(lab, &cfg)?.survival_rate <= base.delta {
            return Ok(c);
        }
    }
    invalid("no constant on the calibration grid reaches the target survival rate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpSpec;

    /// Single-state task where action `i` pays `rewards[i]` forever.
    pub(crate) fn bandit(rewards: &[f64], gamma: f64) -> Mdp {
        Mdp::new(MdpSpec {
            states: 1,
            actions: (0..rewards.len() as u32).collect(),
            gamma,
            reward: vec![rewards.to_vec()],
            transition: vec![vec![vec![1.0]; rewards.len()]],
            initial_state: 0,
        })
        .unwrap()
    }

    #[test]
    fn delta_examples() {
        let m = bandit(&[0.0, 1.0], 0.5);
        let space = ActionSpace::primitive(&m);
        assert_eq!(delta(&m, &space, &[0, 1]).unwrap(), 0.0);
        assert!((delta(&m, &space, &[0]).unwrap() - 2.0).abs() < 1e-9);
        let dup = bandit(&[1.0, 1.0], 0.5);
        assert!(delta(&dup, &ActionSpace::primitive(&dup), &[0]).unwrap().abs() < 1e-12);
        assert!(delta(&m, &space, &[7]).is_err());
    }

    #[test]
    fn sample_complexity_examples() {
        let e = std::f64::consts::E;
        assert_eq!(sample_complexity(1, e * 0.1, 0.1, 1.0, 1.0).unwrap(), 1);
        assert_eq!(sample_complexity(2, 8.0, 0.1, 0.5, 1.0).unwrap(), 18);
        assert_eq!(sample_complexity(2, 8.0, 0.1, 0.25, 1.0).unwrap(), 36);
        assert!(sample_complexity(2, 8.0, 1.5, 0.5, 1.0).is_err());
        assert!(sample_complexity(2, 8.0, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn two_tasks_need_two_actions() {
        let dist = TaskDistribution::uniform(vec![bandit(&[1.0, 0.0, 0.2], 0.5), bandit(&[0.0, 1.0, 0.2], 0.5)]).unwrap();
        let lab = PruningLab::primitive(dist);
        assert_eq!(lab.min_eps_subset_size(0.1).unwrap(), (2, vec![0, 1]));
        // a loose eps lets the mediocre action cover both tasks
        assert_eq!(lab.min_eps_subset_size(1.7).unwrap(), (1, vec![2]));
        assert!(lab.is_suboptimal_action(2, 0.1, 1.0).unwrap());
        assert!(!lab.is_suboptimal_action(0, 0.1, 0.6).unwrap());
        assert!(lab.is_suboptimal_action(0, 0.1, 0.0).unwrap());
    }

    #[test]
    fn dominated_duplicate_is_droppable_at_zero_eps() {
        let dist = TaskDistribution::uniform(vec![
            bandit(&[1.0, 0.0, 0.0, 0.9], 0.5),
            bandit(&[0.0, 1.0, 0.0, 0.0], 0.5),
            bandit(&[0.0, 0.0, 1.0, 0.0], 0.5),
        ])
        .unwrap();
        let lab = PruningLab::primitive(dist);
        assert_eq!(lab.min_eps_subset_size(0.0).unwrap(), (3, vec![0, 1, 2]));
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let dist = TaskDistribution::uniform(vec![bandit(&[0.0; 5], 0.5)]).unwrap();
        let lab = PruningLab::primitive(dist).with_cap(4);
        assert!(matches!(lab.min_eps_subset_size(0.1), Err(Error::CapExceeded { size: 5, cap: 4 })));
    }

    #[test]
    fn prune_edge_cases() {
        let dist = TaskDistribution::uniform(vec![bandit(&[1.0, 0.0, 0.0], 0.5)]).unwrap();
        let lab = PruningLab::primitive(dist);
        let none = lab.prune_from_demos(0.1, 0, 1, 3).unwrap();
        assert_eq!(none.surviving, [0, 1, 2].into_iter().collect());
        let loose = lab.prune_from_demos(100.0, 5, 1, 3).unwrap();
        assert_eq!(loose.surviving.len(), 3);
        let tight = lab.prune_from_demos(0.1, 5, 1, 3).unwrap();
        assert_eq!(tight.surviving, [0].into_iter().collect());
        assert_eq!(tight.pruning_error, Some(0.0));
    }

    #[test]
    fn useless_action_is_always_pruned() {
        let dist = TaskDistribution::new(
            vec![bandit(&[1.0, 0.0, 0.0], 0.5), bandit(&[0.0, 1.0, 0.0], 0.5)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let lab = PruningLab::primitive(dist);
        assert!(lab.is_suboptimal_action(2, 0.1, 1.0).unwrap());
        for seed in 0..20 {
            let out = lab.prune_from_demos(0.1, 5, 2, seed).unwrap();
            assert!(!out.surviving.contains(&2));
        }
    }

    #[test]
    fn regret_rejects_policy_outside_subset() {
        let dist = TaskDistribution::uniform(vec![bandit(&[1.0, 0.0], 0.5)]).unwrap();
        let lab = PruningLab::primitive(dist);
        let pi = StochasticPolicy::uniform(vec![0, 1], 1);
        assert!(lab.regret_decompose(&[0], &pi).is_err());
    }

    #[test]
    fn regret_of_restricted_optimum_is_pure_pruning_error() {
        let dist = TaskDistribution::uniform(vec![bandit(&[1.0, 0.4, 0.0], 0.5)]).unwrap();
        let lab = PruningLab::primitive(dist);
        let pi = StochasticPolicy::deterministic(vec![1, 2], &[0]);
        let d = lab.regret_decompose(&[1, 2], &pi).unwrap();
        assert!(d.rl_error.abs() < 1e-9);
        assert!((d.total_regret - d.pruning_error).abs() < 1e-9);
        let all = StochasticPolicy::uniform(vec![0, 1, 2], 1);
        let d = lab.regret_decompose(&[0, 1, 2], &all).unwrap();
        assert_eq!(d.pruning_error, 0.0);
        assert!((d.total_regret - d.rl_error).abs() < 1e-12);
    }
}
