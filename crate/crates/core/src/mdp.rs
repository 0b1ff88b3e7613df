//! Finite MDPs, task distributions and temporally extended actions.
//!
//! A primitive action is treated as an option with a single length-1
//! sequence, so planning, pruning and policy evaluation all run on one
//! representation: the per-state option model `(r(s,z), M(s,z,s'))` where
//! `r` is the expected discounted reward collected while the option runs and
//! `M(s,z,s') = E[gamma^tau 1(s_tau = s')]` is the discounted landing kernel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{sample_index, sup_norm_diff};
use crate::rng;

/// Abstract-action id shared by primitives and options.
pub type ActionId = u32;

const ROW_TOL: f64 = 1e-12;
const PROB_TOL: f64 = 1e-9;

/// Residual at which [`optimal_value`] stops.
pub const VALUE_TOLERANCE: f64 = 1e-10;
/// Default iteration cap for value iteration.
pub const ITERATION_CAP: usize = 1_000_000;

/// On-disk layout of an MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub states: usize,
    pub actions: Vec<ActionId>,
    pub gamma: f64,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_state: usize,
}

/// A validated finite MDP. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpSpec", into = "MdpSpec")]
pub struct Mdp {
    spec: MdpSpec,
}

impl TryFrom<MdpSpec> for Mdp {
    type Error = Error;

    fn try_from(spec: MdpSpec) -> Result<Self> {
        Mdp::new(spec)
    }
}

impl From<Mdp> for MdpSpec {
    fn from(m: Mdp) -> Self {
        m.spec
    }
}

impl Mdp {
    pub fn new(spec: MdpSpec) -> Result<Self> {
        let n = spec.states;
        let na = spec.actions.len();
        if n == 0 {
            return invalid("MDP needs at least one state");
        }
        if na == 0 {
            return invalid("MDP needs at least one action");
        }
        let unique: BTreeSet<_> = spec.actions.iter().collect();
        if unique.len() != na {
            return invalid("duplicate action ids");
        }
        if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
            return invalid(format!("gamma must lie in (0,1), got {}", spec.gamma));
        }
        if spec.initial_state >= n {
            return invalid(format!("initial_state {} out of range", spec.initial_state));
        }
        if spec.reward.len() != n || spec.reward.iter().any(|r| r.len() != na) {
            return Err(Error::Dimension(format!("reward must be {n}x{na}")));
        }
        if spec.reward.iter().flatten().any(|r| !r.is_finite()) {
            return invalid("rewards must be finite");
        }
        if spec.transition.len() != n {
            return Err(Error::Dimension(format!("transition must have {n} state rows")));
        }
        for (s, per_action) in spec.transition.iter().enumerate() {
            if per_action.len() != na {
                return Err(Error::Dimension(format!("transition[{s}] must have {na} actions")));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Dimension(format!("transition[{s}][{a}] must have {n} entries")));
                }
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return invalid(format!("transition[{s}][{a}] has a negative or non-finite entry"));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    return invalid(format!(
                        "transition[{s}][{a}] is not stochastic (sums to {total})"
                    ));
                }
            }
        }
        Ok(Mdp { spec })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    pub fn n_states(&self) -> usize {
        self.spec.states
    }

    pub fn n_actions(&self) -> usize {
        self.spec.actions.len()
    }

    pub fn action_ids(&self) -> &[ActionId] {
        &self.spec.actions
    }

    pub fn action_index(&self, id: ActionId) -> Option<usize> {
        self.spec.actions.iter().position(|&a| a == id)
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    pub fn initial_state(&self) -> usize {
        self.spec.initial_state
    }

    /// Reward for action index `a` (position in `action_ids`).
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.spec.reward[s][a]
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.spec.transition[s][a]
    }

    /// `max_{s,a} R(s,a)`.
    pub fn r_max(&self) -> f64 {
        self.spec
            .reward
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The same task with action ids relabelled by `map` (old id -> new id).
    pub fn relabel_actions(&self, map: &BTreeMap<ActionId, ActionId>) -> Result<Self> {
        let mut spec = self.spec.clone();
        for a in spec.actions.iter_mut() {
            *a = *map
                .get(a)
                .ok_or_else(|| Error::Invalid(format!("no relabel for action {a}")))?;
        }
        Mdp::new(spec)
    }
}

/// A finite distribution over tasks that share one action-id universe.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TaskDistributionSpec", into = "TaskDistributionSpec")]
pub struct TaskDistribution {
    tasks: Vec<Mdp>,
    weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDistributionSpec {
    pub tasks: Vec<Mdp>,
    pub weights: Vec<f64>,
}

impl TryFrom<TaskDistributionSpec> for TaskDistribution {
    type Error = Error;

    fn try_from(spec: TaskDistributionSpec) -> Result<Self> {
        TaskDistribution::new(spec.tasks, spec.weights)
    }
}

impl From<TaskDistribution> for TaskDistributionSpec {
    fn from(d: TaskDistribution) -> Self {
        TaskDistributionSpec { tasks: d.tasks, weights: d.weights }
    }
}

impl TaskDistribution {
    pub fn new(tasks: Vec<Mdp>, weights: Vec<f64>) -> Result<Self> {
        if tasks.is_empty() {
            return invalid("task distribution needs at least one task");
        }
        if tasks.len() != weights.len() {
            return Err(Error::Dimension("one weight per task required".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return invalid(format!("weights sum to {total}, expected 1"));
        }
        let mut universe: Vec<ActionId> = tasks[0].action_ids().to_vec();
        universe.sort_unstable();
        for (i, t) in tasks.iter().enumerate().skip(1) {
            let mut ids = t.action_ids().to_vec();
            ids.sort_unstable();
            if ids != universe {
                return invalid(format!("task {i} has a different action universe"));
            }
        }
        Ok(TaskDistribution { tasks, weights })
    }

    pub fn uniform(tasks: Vec<Mdp>) -> Result<Self> {
        let w = 1.0 / tasks.len().max(1) as f64;
        let n = tasks.len();
        TaskDistribution::new(tasks, vec![w; n])
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn tasks(&self) -> &[Mdp] {
        &self.tasks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sorted action-id universe.
    pub fn action_universe(&self) -> Vec<ActionId> {
        let mut ids = self.tasks[0].action_ids().to_vec();
        ids.sort_unstable();
        ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Mdp, f64)> {
        self.tasks.iter().zip(self.weights.iter().copied())
    }
}

/// One primitive-action sequence an option may execute from a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sequence {
    pub prob: f64,
    pub actions: Vec<ActionId>,
}

/// A temporally extended action: per state, a distribution over open-loop
/// primitive sequences. Admissible in every state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub id: ActionId,
    pub body: BTreeMap<usize, Vec<Sequence>>,
}

impl OptionSpec {
    /// The primitive action `action` viewed as a duration-1 option.
    pub fn primitive(action: ActionId, n_states: usize) -> Self {
        OptionSpec::deterministic(action, &[action], n_states)
    }

    /// Executes the same fixed sequence from every state.
    pub fn deterministic(id: ActionId, actions: &[ActionId], n_states: usize) -> Self {
        let body = (0..n_states)
            .map(|s| (s, vec![Sequence { prob: 1.0, actions: actions.to_vec() }]))
            .collect();
        OptionSpec { id, body }
    }

    fn validate(&self, mdp: &Mdp) -> Result<()> {
        for s in 0..mdp.n_states() {
            let seqs = self.body.get(&s).ok_or_else(|| {
                Error::Invalid(format!("option {} has no body for state {s}", self.id))
            })?;
            if seqs.is_empty() {
                return invalid(format!("option {} has an empty distribution at state {s}", self.id));
            }
            let mut total = 0.0;
            for seq in seqs {
                if seq.actions.is_empty() {
                    return invalid(format!("option {} has a zero-length sequence", self.id));
                }
                if !(seq.prob.is_finite() && seq.prob >= 0.0) {
                    return invalid(format!("option {} has an invalid probability", self.id));
                }
                if let Some(a) = seq.actions.iter().find(|a| mdp.action_index(**a).is_none()) {
                    return invalid(format!("option {} uses unknown action {a}", self.id));
                }
                total += seq.prob;
            }
            if (total - 1.0).abs() > PROB_TOL {
                return invalid(format!(
                    "option {} sequence probabilities at state {s} sum to {total}",
                    self.id
                ));
            }
        }
        if let Some(extra) = self.body.keys().find(|&&s| s >= mdp.n_states()) {
            return invalid(format!("option {} references unknown state {extra}", self.id));
        }
        Ok(())
    }
}

/// The unified action space Z: a list of options with unique ids.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    options: Vec<OptionSpec>,
}

impl ActionSpace {
    pub fn new(options: Vec<OptionSpec>, mdp: &Mdp) -> Result<Self> {
        if options.is_empty() {
            return invalid("action space must be nonempty");
        }
        let ids: BTreeSet<_> = options.iter().map(|o| o.id).collect();
        if ids.len() != options.len() {
            return invalid("duplicate option ids");
        }
        for o in &options {
            o.validate(mdp)?;
        }
        Ok(ActionSpace { options })
    }

    /// Every primitive action of `mdp` as a duration-1 option.
    pub fn primitive(mdp: &Mdp) -> Self {
        let options = mdp
            .action_ids()
            .iter()
            .map(|&a| OptionSpec::primitive(a, mdp.n_states()))
            .collect();
        ActionSpace { options }
    }

    pub fn from_json_file(path: impl AsRef<Path>, mdp: &Mdp) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let options: Vec<OptionSpec> = serde_json::from_str(&text)?;
        ActionSpace::new(options, mdp)
    }

    pub fn options(&self) -> &[OptionSpec] {
        &self.options
    }

    pub fn ids(&self) -> Vec<ActionId> {
        self.options.iter().map(|o| o.id).collect()
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }
}

/// Where discounting of the rewards collected inside an option starts.
///
/// `FromZero` is the ordinary return `sum_t gamma^t r_t`; `FromOne` weights
/// the k-th reward of an option by `gamma^k` (k = 1..tau), which scales every
/// value by one factor of gamma relative to `FromZero`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardIndexing {
    #[default]
    FromZero,
    FromOne,
}

/// Expected discounted reward and discounted landing kernel per (option, state).
#[derive(Clone, Debug)]
pub struct OptionModel {
    n_states: usize,
    ids: Vec<ActionId>,
    reward: Vec<f64>,
    kernel: Vec<f64>,
}

impl OptionModel {
    pub fn build(mdp: &Mdp, space: &ActionSpace, indexing: RewardIndexing) -> Self {
        let n = mdp.n_states();
        let gamma = mdp.gamma();
        let offset = match indexing {
            RewardIndexing::FromZero => 0,
            RewardIndexing::FromOne => 1,
        };
        let nz = space.len();
        let mut reward = vec![0.0; nz * n];
        let mut kernel = vec![0.0; nz * n * n];
        let mut dist = vec![0.0; n];
        let mut next = vec![0.0; n];
        for (z, opt) in space.options().iter().enumerate() {
            for s in 0..n {
                let mut r_acc = 0.0;
                let out = &mut kernel[(z * n + s) * n..(z * n + s + 1) * n];
                for seq in &opt.body[&s] {
                    if seq.prob == 0.0 {
                        continue;
                    }
                    dist.iter_mut().for_each(|d| *d = 0.0);
                    dist[s] = 1.0;
                    let mut disc = 1.0;
                    for (k, a_id) in seq.actions.iter().enumerate() {
                        let a = mdp.action_index(*a_id).expect("validated action");
                        let step_disc = gamma.powi((k + offset) as i32);
                        let expected: f64 = (0..n).map(|x| dist[x] * mdp.reward(x, a)).sum();
                        r_acc += seq.prob * step_disc * expected;
                        next.iter_mut().for_each(|d| *d = 0.0);
                        for x in 0..n {
                            if dist[x] == 0.0 {
                                continue;
                            }
                            for (y, p) in mdp.transition(x, a).iter().enumerate() {
                                next[y] += dist[x] * p;
                            }
                        }
                        std::mem::swap(&mut dist, &mut next);
                        disc *= gamma;
                    }
                    for y in 0..n {
                        out[y] += seq.prob * disc * dist[y];
                    }
                }
                reward[z * n + s] = r_acc;
            }
        }
        OptionModel { n_states: n, ids: space.ids(), reward, kernel }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn ids(&self) -> &[ActionId] {
        &self.ids
    }

    /// Expected discounted reward of option index `z` from `s`.
    pub fn reward(&self, z: usize, s: usize) -> f64 {
        self.reward[z * self.n_states + s]
    }

    pub fn kernel(&self, z: usize, s: usize) -> &[f64] {
        let n = self.n_states;
        &self.kernel[(z * n + s) * n..(z * n + s + 1) * n]
    }

    /// `E[gamma^tau | s, z]`.
    pub fn discount_mass(&self, z: usize, s: usize) -> f64 {
        self.kernel(z, s).iter().sum()
    }

    /// `sup_{s,z} E[gamma^tau | s, z]`.
    pub fn gamma_bar(&self) -> f64 {
        (0..self.ids.len())
            .flat_map(|z| (0..self.n_states).map(move |s| (z, s)))
            .map(|(z, s)| self.discount_mass(z, s))
            .fold(0.0, f64::max)
    }

    /// The model restricted to the given option ids.
    pub fn restrict(&self, subset: &[ActionId]) -> Result<Self> {
        if subset.is_empty() {
            return invalid("action subset must be nonempty");
        }
        let n = self.n_states;
        let mut ids = Vec::new();
        let mut reward = Vec::new();
        let mut kernel = Vec::new();
        for id in subset {
            let z = self
                .ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Invalid(format!("unknown action id {id}")))?;
            if ids.contains(id) {
                continue;
            }
            ids.push(*id);
            reward.extend_from_slice(&self.reward[z * n..(z + 1) * n]);
            kernel.extend_from_slice(&self.kernel[z * n * n..(z + 1) * n * n]);
        }
        Ok(OptionModel { n_states: n, ids, reward, kernel })
    }

    fn q_value(&self, z: usize, s: usize, v: &[f64]) -> f64 {
        self.reward(z, s)
            + self
                .kernel(z, s)
                .iter()
                .zip(v)
                .map(|(m, x)| m * x)
                .sum::<f64>()
    }

    /// One Bellman optimality backup.
    pub fn backup(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_states {
            return Err(Error::Dimension(format!(
                "value table has {} entries, MDP has {} states",
                v.len(),
                self.n_states
            )));
        }
        Ok((0..self.n_states)
            .map(|s| {
                (0..self.ids.len())
                    .map(|z| self.q_value(z, s, v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }

    /// Greedy option index per state.
    pub fn greedy(&self, v: &[f64]) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                let mut best = 0;
                let mut best_q = f64::NEG_INFINITY;
                for z in 0..self.ids.len() {
                    let q = self.q_value(z, s, v);
                    if q > best_q {
                        best_q = q;
                        best = z;
                    }
                }
                best
            })
            .collect()
    }

    /// Value iteration from `V = 0` until the sup-norm residual is at most `tol`.
    pub fn solve(&self, tol: f64, cap: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.n_states];
        let mut residual = f64::INFINITY;
        for _ in 0..cap {
            let next = self.backup(&v)?;
            residual = sup_norm_diff(&next, &v);
            v = next;
            if residual <= tol {
                return Ok(v);
            }
        }
        Err(Error::NoConvergence { iterations: cap, residual })
    }

    /// Exact value of a stationary stochastic policy: solves `(I - M_pi) V = r_pi`.
    pub fn policy_value(&self, policy: &StochasticPolicy) -> Result<Vec<f64>> {
        let n = self.n_states;
        if policy.rows.len() != n {
            return Err(Error::Dimension(format!(
                "policy has {} rows, MDP has {n} states",
                policy.rows.len()
            )));
        }
        let cols: Vec<usize> = policy
            .ids
            .iter()
            .map(|id| {
                self.ids.iter().position(|x| x == id).ok_or_else(|| {
                    Error::Invalid(format!("policy uses action {id} outside the action set"))
                })
            })
            .collect::<Result<_>>()?;
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for s in 0..n {
            for (j, &z) in cols.iter().enumerate() {
                let p = policy.rows[s][j];
                if p == 0.0 {
                    continue;
                }
                b[s] += p * self.reward(z, s);
                for (y, m) in self.kernel(z, s).iter().enumerate() {
                    a[(s, y)] -= p * m;
                }
            }
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Invalid("singular policy-evaluation system".into()))?;
        Ok(x.iter().copied().collect())
    }
}

/// Stationary stochastic policy: `rows[s][j]` is the probability of `ids[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    pub ids: Vec<ActionId>,
    pub rows: Vec<Vec<f64>>,
}

impl StochasticPolicy {
    pub fn new(ids: Vec<ActionId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            if row.len() != ids.len() {
                return Err(Error::Dimension(format!("policy row {s} has wrong length")));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return invalid(format!("policy row {s} has invalid entries"));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return invalid(format!("policy row {s} sums to {total}"));
            }
        }
        Ok(StochasticPolicy { ids, rows })
    }

    pub fn deterministic(ids: Vec<ActionId>, choice: &[usize]) -> Self {
        let rows = choice
            .iter()
            .map(|&c| {
                let mut r = vec![0.0; ids.len()];
                r[c] = 1.0;
                r
            })
            .collect();
        StochasticPolicy { ids, rows }
    }

    pub fn uniform(ids: Vec<ActionId>, n_states: usize) -> Self {
        let p = 1.0 / ids.len() as f64;
        let rows = vec![vec![p; ids.len()]; n_states];
        StochasticPolicy { ids, rows }
    }
}

/// Optimal value table of `mdp` restricted to `action_set` (ids from `space`).
pub fn optimal_value(mdp: &Mdp, space: &ActionSpace, action_set: &[ActionId]) -> Result<Vec<f64>> {
    let model = OptionModel::build(mdp, space, RewardIndexing::FromZero).restrict(action_set)?;
    model.solve(VALUE_TOLERANCE, ITERATION_CAP)
}

/// One step of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: ActionId,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        let mut d = 1.0;
        for st in &self.steps {
            g += d * st.reward;
            d *= gamma;
        }
        g
    }
}

/// Samples `horizon` primitive steps from the initial state.
///
/// `policy` must be a distribution over primitive action ids of `mdp`.
pub fn rollout(mdp: &Mdp, policy: &StochasticPolicy, horizon: usize, seed: u64) -> Result<Trajectory> {
    rollout_with(mdp, policy, horizon, &mut rng::stream(seed, &[rng::tag::ROLLOUT]))
}

/// As [`rollout`], drawing from a caller-provided generator.
pub fn rollout_with<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    policy: &StochasticPolicy,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    if policy.rows.len() != mdp.n_states() {
        return Err(Error::Dimension("policy rows must match MDP states".into()));
    }
    let cols: Vec<usize> = policy
        .ids
        .iter()
        .map(|id| {
            mdp.action_index(*id)
                .ok_or_else(|| Error::Invalid(format!("policy uses unknown primitive {id}")))
        })
        .collect::<Result<_>>()?;
    let mut s = mdp.initial_state();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let j = sample_index(&policy.rows[s], rng);
        let a = cols[j];
        let r = mdp.reward(s, a);
        steps.push(Step { state: s, action: policy.ids[j], reward: r });
        s = sample_index(mdp.transition(s, a), rng);
    }
    Ok(Trajectory { steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: f64, gamma: f64) -> Mdp {
        Mdp::new(MdpSpec {
            states: 1,
            actions: vec![0],
            gamma,
            reward: vec![vec![reward]],
            transition: vec![vec![vec![1.0]]],
            initial_state: 0,
        })
        .unwrap()
    }

    #[test]
    fn geometric_series_value() {
        let m = single_state(1.0, 0.5);
        let v = optimal_value(&m, &ActionSpace::primitive(&m), &[0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = Mdp::new(MdpSpec {
            states: 1,
            actions: vec![0],
            gamma: 0.9,
            reward: vec![vec![0.0]],
            transition: vec![vec![vec![0.9]]],
            initial_state: 0,
        });
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn rejects_bad_gamma_and_empty_subset() {
        let mut spec = single_state(1.0, 0.5).spec().clone();
        spec.gamma = 1.0;
        assert!(Mdp::new(spec).is_err());
        let m = single_state(1.0, 0.5);
        assert!(optimal_value(&m, &ActionSpace::primitive(&m), &[]).is_err());
        assert!(optimal_value(&m, &ActionSpace::primitive(&m), &[9]).is_err());
    }

    #[test]
    fn zero_length_option_rejected() {
        let m = single_state(1.0, 0.5);
        let bad = OptionSpec::deterministic(5, &[], 1);
        assert!(ActionSpace::new(vec![bad], &m).is_err());
    }

    #[test]
    fn deterministic_rollout_is_unique_path() {
        let m = Mdp::new(MdpSpec {
            states: 3,
            actions: vec![4],
            gamma: 0.9,
            reward: vec![vec![1.0], vec![2.0], vec![3.0]],
            transition: vec![
                vec![vec![0.0, 1.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![1.0, 0.0, 0.0]],
            ],
            initial_state: 0,
        })
        .unwrap();
        let pi = StochasticPolicy::uniform(vec![4], 3);
        let tr = rollout(&m, &pi, 5, 11).unwrap();
        let states: Vec<_> = tr.steps.iter().map(|s| s.state).collect();
        assert_eq!(states, vec![0, 1, 2, 0, 1]);
        assert_eq!(tr, rollout(&m, &pi, 5, 99).unwrap());
        assert!(rollout(&m, &pi, 0, 1).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let m = single_state(1.0, 0.5);
        let text = serde_json::to_string(&m).unwrap();
        let back: Mdp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let bad = text.replace("0.5", "1.5");
        assert!(serde_json::from_str::<Mdp>(&bad).is_err());
    }
}
