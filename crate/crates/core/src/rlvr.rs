//! Post-training on verifiable tasks with group-relative policy optimisation.
//!
//! A policy is a [`SeqModel`]: at every step it draws a latent from the
//! posterior table and then a token from the decoder, so priors produced by
//! next-token fitting or by RA3 load without conversion. A task supplies a
//! prompt, an output length and a verifier that accepts outputs realizing an
//! ordered composition of skills.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hash::config_hash;
use crate::numeric::{sample_index, softmax};
use crate::rng;
use crate::seq::{advance, context_index, SeqModel, ACT};
use crate::world::SkillSpec;

/// Standard deviations below this count as a degenerate group.
pub const STD_GUARD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    pub group_size: usize,
    /// Ratio clip half-width; `None` disables clipping.
    pub clip_eps: Option<f64>,
    /// Weight of the KL penalty toward the reference (the prior a run starts from).
    pub kl_coef: f64,
    pub learning_rate: f64,
    pub n_updates: usize,
    /// Gradient steps taken on each sampled group before resampling.
    pub inner_steps: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_eps: Some(0.2),
            kl_coef: 0.0,
            learning_rate: 0.5,
            n_updates: 60,
            inner_steps: 1,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return invalid("group_size must be at least 2");
        }
        if let Some(e) = self.clip_eps {
            if !(e > 0.0) {
                return invalid("clip_eps must be positive");
            }
        }
        if !(self.kl_coef >= 0.0) {
            return invalid("kl_coef must be nonnegative");
        }
        if !(self.learning_rate > 0.0) || self.inner_steps == 0 {
            return invalid("learning_rate and inner_steps must be positive");
        }
        Ok(())
    }
}

/// One segment of a target composition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// Token that opens the segment.
    pub start: u32,
    /// Tokens that belong to the segment's skill.
    pub core: Vec<u32>,
}

/// A prompt plus a verifier over the generated continuation.
///
/// The verifier reads `prompt ++ output`. It must open with the first
/// segment's start token; each later segment begins at its start token once
/// the current segment holds a core token (a segment with an empty core
/// needs none). Inside a segment up to `tolerance` tokens outside the core
/// are forgiven. The output is accepted when the last segment is reached and
/// holds a core token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiableTask {
    pub id: String,
    pub prompt: Vec<u32>,
    /// Number of tokens the policy generates.
    pub length: usize,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub tolerance: usize,
}

/// Verifier automaton state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VerifierState {
    /// Nothing read yet.
    Idle,
    In { segment: usize, errors: usize, has_core: bool },
    Reject,
}

impl VerifiableTask {
    pub fn validate(&self, n_tokens: usize) -> Result<()> {
        if self.segments.is_empty() || self.length == 0 {
            return invalid(format!("task {:?}: needs segments and a positive length", self.id));
        }
        let tokens = self
            .prompt
            .iter()
            .chain(self.segments.iter().flat_map(|s| std::iter::once(&s.start).chain(&s.core)));
        if let Some(t) = tokens.into_iter().find(|&&t| t as usize >= n_tokens) {
            return invalid(format!("task {:?}: token {t} outside vocabulary of {n_tokens}", self.id));
        }
        Ok(())
    }

    pub fn step(&self, state: VerifierState, token: u32) -> VerifierState {
        match state {
            VerifierState::Reject => VerifierState::Reject,
            VerifierState::Idle if token == self.segments[0].start => {
                VerifierState::In { segment: 0, errors: 0, has_core: false }
            }
            VerifierState::Idle => VerifierState::Reject,
            VerifierState::In { segment, errors, has_core } => {
                let next = self.segments.get(segment + 1);
                let done = has_core || self.segments[segment].core.is_empty();
                if done && next.is_some_and(|s| s.start == token) {
                    VerifierState::In { segment: segment + 1, errors: 0, has_core: false }
                } else if self.segments[segment].core.contains(&token) {
                    VerifierState::In { segment, errors, has_core: true }
                } else if errors < self.tolerance {
                    VerifierState::In { segment, errors: errors + 1, has_core }
                } else {
                    VerifierState::Reject
                }
            }
        }
    }

    pub fn accepts(&self, state: VerifierState) -> bool {
        match state {
            VerifierState::In { segment, has_core, .. } => {
                segment + 1 == self.segments.len() && (has_core || self.segments[segment].core.is_empty())
            }
            _ => false,
        }
    }

    /// Verifier reward for a generated output.
    pub fn verify(&self, output: &[u32]) -> f64 {
        let s = self
            .prompt
            .iter()
            .chain(output)
            .fold(VerifierState::Idle, |s, &t| self.step(s, t));
        if output.len() == self.length && self.accepts(s) {
            1.0
        } else {
            0.0
        }
    }
}

/// Reads a JSON array of tasks.
pub fn read_tasks(path: impl AsRef<Path>) -> Result<Vec<VerifiableTask>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Composition tasks over the skills of a world spec. A skill's start token
/// is the mode of its start distribution and its core is every token it
/// emits with more than uniform probability. The prompt is the first start
/// token.
pub fn skill_tasks(spec: &SkillSpec, compositions: &[Vec<usize>], length: usize, tolerance: usize) -> Result<Vec<VerifiableTask>> {
    spec.validate()?;
    let uniform = 1.0 / spec.n_tokens as f64;
    let segment = |k: usize| -> Result<Segment> {
        let skill = spec.skills.get(k).ok_or_else(|| Error::Invalid(format!("no skill {k}")))?;
        let start = skill
            .start
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("skill {k} has no start distribution")))?;
        let start = (0..start.len()).max_by(|&a, &b| start[a].total_cmp(&start[b])).expect("nonempty") as u32;
        let core = (0..spec.n_tokens)
            .filter(|&a| skill.emission[a] > uniform)
            .map(|a| a as u32)
            .collect();
        Ok(Segment { start, core })
    };
    compositions
        .iter()
        .map(|comp| {
            let segments = comp.iter().map(|&k| segment(k)).collect::<Result<Vec<_>>>()?;
            if segments.is_empty() {
                return invalid("empty composition");
            }
            let id = comp.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("-");
            Ok(VerifiableTask { id, prompt: vec![segments[0].start], length, segments, tolerance })
        })
        .collect()
}

/// A sampled output together with every draw needed to rescore it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub output: Vec<u32>,
    /// `(posterior offset, latent)` per step, prompt included.
    pub latent_draws: Vec<(usize, usize)>,
    /// `(decoder offset, token)` per generated step.
    pub token_draws: Vec<(usize, usize)>,
    pub reward: f64,
}

fn probs_from_log(log_row: &[f64]) -> Vec<f64> {
    log_row.iter().map(|l| l.exp()).collect()
}

/// Draws one output for `task`. Prompt tokens are forced; latents are drawn
/// at every step.
pub fn sample_output<R: Rng + ?Sized>(policy: &SeqModel, task: &VerifiableTask, rng: &mut R) -> Sample {
    let v = policy.n_tokens;
    let total = task.prompt.len() + task.length;
    let mut history: Vec<u32> = Vec::with_capacity(total);
    let mut u = ACT;
    let mut s = Sample {
        output: Vec::with_capacity(task.length),
        latent_draws: Vec::with_capacity(total),
        token_draws: Vec::with_capacity(task.length),
        reward: 0.0,
    };
    for t in 0..total {
        let pctx = context_index(&history, policy.posterior_order, v);
        let q = probs_from_log(&policy.posterior_log_row(pctx, u, 1.0));
        let z = sample_index(&q, rng);
        s.latent_draws.push((policy.posterior_offset(pctx, u), z));
        u = advance(u, z);
        let a = if t < task.prompt.len() {
            task.prompt[t]
        } else {
            let dctx = context_index(&history, policy.decoder_order, v);
            let p = probs_from_log(&policy.decoder_log_row(dctx, u));
            let a = sample_index(&p, rng);
            s.token_draws.push((policy.decoder_offset(dctx, u), a));
            s.output.push(a as u32);
            a as u32
        };
        history.push(a);
    }
    s.reward = task.verify(&s.output);
    s
}

fn row_log_prob(logits: &[f64], offset: usize, width: usize, idx: usize) -> f64 {
    let row = &logits[offset..offset + width];
    crate::numeric::log_softmax(row, 1.0)[idx]
}

/// `log pi(o | s)` under `policy`, latent draws included.
pub fn log_prob(policy: &SeqModel, sample: &Sample) -> f64 {
    let l = policy.alphabet_size();
    let lq: f64 = sample
        .latent_draws
        .iter()
        .map(|&(o, z)| row_log_prob(&policy.posterior_logits, o, l, z))
        .sum();
    let la: f64 = sample
        .token_draws
        .iter()
        .map(|&(o, a)| row_log_prob(&policy.decoder_logits, o, policy.n_tokens, a))
        .sum();
    lq + la
}

/// Gradient over both logit tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGradient {
    pub posterior: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl PolicyGradient {
    pub fn zeros(policy: &SeqModel) -> Self {
        PolicyGradient {
            posterior: vec![0.0; policy.posterior_logits.len()],
            decoder: vec![0.0; policy.decoder_logits.len()],
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.posterior
            .iter()
            .zip(&other.posterior)
            .chain(self.decoder.iter().zip(&other.decoder))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn apply(&self, policy: &mut SeqModel, rate: f64) {
        for (x, g) in policy.posterior_logits.iter_mut().zip(&self.posterior) {
            *x += rate * g;
        }
        for (x, g) in policy.decoder_logits.iter_mut().zip(&self.decoder) {
            *x += rate * g;
        }
    }
}

fn add_row_score(grad: &mut [f64], logits: &[f64], offset: usize, width: usize, idx: usize, weight: f64) {
    let p = softmax(&logits[offset..offset + width], 1.0);
    for (j, pj) in p.iter().enumerate() {
        let onehot = if j == idx { 1.0 } else { 0.0 };
        grad[offset + j] += weight * (onehot - pj);
    }
}

/// Adds `weight * grad log pi(o | s)`.
pub fn add_score(grad: &mut PolicyGradient, policy: &SeqModel, sample: &Sample, weight: f64) {
    if weight == 0.0 {
        return;
    }
    let l = policy.alphabet_size();
    for &(o, z) in &sample.latent_draws {
        add_row_score(&mut grad.posterior, &policy.posterior_logits, o, l, z, weight);
    }
    for &(o, a) in &sample.token_draws {
        add_row_score(&mut grad.decoder, &policy.decoder_logits, o, policy.n_tokens, a, weight);
    }
}

/// `(r_i - mean) / std` with the population standard deviation; groups whose
/// deviation is below [`STD_GUARD`] get all-zero advantages.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return invalid("a group needs at least two rewards");
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < STD_GUARD {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// A sampled group frozen for one or more gradient steps.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenGroup {
    pub samples: Vec<Sample>,
    pub advantages: Vec<f64>,
    /// `log pi_old(o_i)`.
    pub old_log_probs: Vec<f64>,
    /// `log pi_ref(o_i)`.
    pub ref_log_probs: Vec<f64>,
}

impl FrozenGroup {
    pub fn new(samples: Vec<Sample>, old: &SeqModel, reference: &SeqModel) -> Result<Self> {
        let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
        Ok(FrozenGroup {
            advantages: grpo_advantages(&rewards)?,
            old_log_probs: samples.iter().map(|s| log_prob(old, s)).collect(),
            ref_log_probs: samples.iter().map(|s| log_prob(reference, s)).collect(),
            samples,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GrpoMetrics {
    /// Mean verifier reward of the sampled group.
    pub mean_reward: f64,
    /// Fraction of samples whose clipped term was active.
    pub clip_fraction: f64,
    /// Mean k3 estimate of `KL(pi || pi_ref)`.
    pub kl: f64,
}

/// Gradient of the clipped surrogate
/// `1/G sum_i [min(rho_i A_i, clip(rho_i) A_i) - beta k3_i]` with
/// sequence-level ratios `rho_i = pi(o_i) / pi_old(o_i)` and
/// `k3_i = r_i - log r_i - 1`, `r_i = pi_ref(o_i) / pi(o_i)`.
pub fn grpo_gradient(policy: &SeqModel, group: &FrozenGroup, cfg: &GrpoConfig) -> (PolicyGradient, GrpoMetrics) {
    let g = group.samples.len() as f64;
    let mut grad = PolicyGradient::zeros(policy);
    let mut clipped = 0usize;
    let mut kl = 0.0;
    for (i, s) in group.samples.iter().enumerate() {
        let lp = log_prob(policy, s);
        let rho = (lp - group.old_log_probs[i]).exp();
        let a = group.advantages[i];
        let active = match cfg.clip_eps {
            Some(e) => (a > 0.0 && rho > 1.0 + e) || (a < 0.0 && rho < 1.0 - e),
            None => false,
        };
        let mut w = if active { 0.0 } else { rho * a };
        clipped += usize::from(active);
        if cfg.kl_coef > 0.0 {
            let log_r = group.ref_log_probs[i] - lp;
            let r = log_r.exp();
            kl += r - log_r - 1.0;
            w -= cfg.kl_coef * (1.0 - r);
        }
        add_score(&mut grad, policy, s, w / g);
    }
    let metrics = GrpoMetrics {
        mean_reward: group.samples.iter().map(|s| s.reward).sum::<f64>() / g,
        clip_fraction: clipped as f64 / g,
        kl: kl / g,
    };
    (grad, metrics)
}

/// `1/G sum_i A_i grad log pi(o_i)`.
pub fn vanilla_pg_gradient(policy: &SeqModel, samples: &[Sample], advantages: &[f64]) -> PolicyGradient {
    let g = samples.len() as f64;
    let mut grad = PolicyGradient::zeros(policy);
    for (s, a) in samples.iter().zip(advantages) {
        add_score(&mut grad, policy, s, a / g);
    }
    grad
}

/// Samples a group for `task` from `policy` and takes `cfg.inner_steps`
/// clipped ascent steps on it.
pub fn grpo_update<R: Rng + ?Sized>(
    policy: &SeqModel,
    reference: &SeqModel,
    task: &VerifiableTask,
    cfg: &GrpoConfig,
    rng: &mut R,
) -> Result<(SeqModel, GrpoMetrics)> {
    let samples: Vec<Sample> = (0..cfg.group_size).map(|_| sample_output(policy, task, rng)).collect();
    let group = FrozenGroup::new(samples, policy, reference)?;
    let mut next = policy.clone();
    let mut metrics = GrpoMetrics::default();
    for step in 0..cfg.inner_steps {
        let (grad, m) = grpo_gradient(&next, &group, cfg);
        if step == 0 {
            metrics = m;
        }
        grad.apply(&mut next, cfg.learning_rate);
        if next.posterior_logits.iter().chain(&next.decoder_logits).any(|x| !x.is_finite()) {
            let snapshot = serde_json::to_string(policy).unwrap_or_default();
            return Err(Error::Divergence(format!(
                "non-finite logits on task {:?}; last finite policy: {snapshot}",
                task.id
            )));
        }
    }
    Ok((next, metrics))
}

/// Exact probability that the verifier accepts an output drawn from `policy`,
/// by dynamic programming over (recent tokens, active latent, verifier state).
pub fn success_probability(policy: &SeqModel, task: &VerifiableTask) -> f64 {
    let v = policy.n_tokens;
    let keep = policy.decoder_order.max(policy.posterior_order);
    type Key = (Vec<u32>, usize, VerifierState);
    let mut states: BTreeMap<Key, f64> = BTreeMap::new();
    states.insert((Vec::new(), ACT, VerifierState::Idle), 1.0);
    for t in 0..task.prompt.len() + task.length {
        let mut next: BTreeMap<Key, f64> = BTreeMap::new();
        for ((hist, u, vs), p) in states {
            let pctx = context_index(&hist, policy.posterior_order, v);
            let q = probs_from_log(&policy.posterior_log_row(pctx, u, 1.0));
            for (z, qz) in q.iter().enumerate() {
                if *qz == 0.0 {
                    continue;
                }
                let u2 = advance(u, z);
                let mut push = |a: u32, pa: f64| {
                    let vs2 = task.step(vs, a);
                    if vs2 == VerifierState::Reject {
                        return;
                    }
                    let mut h = hist.clone();
                    h.push(a);
                    if h.len() > keep {
                        h.remove(0);
                    }
                    *next.entry((h, u2, vs2)).or_insert(0.0) += p * qz * pa;
                };
                if t < task.prompt.len() {
                    push(task.prompt[t], 1.0);
                } else {
                    let dctx = context_index(&hist, policy.decoder_order, v);
                    for (a, pa) in probs_from_log(&policy.decoder_log_row(dctx, u2)).iter().enumerate() {
                        if *pa > 0.0 {
                            push(a as u32, *pa);
                        }
                    }
                }
            }
        }
        states = next;
    }
    states
        .into_iter()
        .filter(|((_, _, vs), _)| task.accepts(*vs))
        .map(|(_, p)| p)
        .sum()
}

/// Mean exact success probability over tasks, one policy per task.
pub fn mean_success(policies: &[SeqModel], tasks: &[VerifiableTask]) -> f64 {
    let total: f64 = policies
        .par_iter()
        .zip(tasks)
        .map(|(p, t)| success_probability(p, t))
        .sum();
    total / tasks.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub prior: String,
    pub seed: u64,
    /// 0 is the untrained prior.
    pub update: usize,
    /// Exact success probability averaged over tasks.
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlvrReport {
    pub config_hash: String,
    pub points: Vec<CurvePoint>,
}

impl RlvrReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("prior,seed,update,mean_reward\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.prior, p.seed, p.update, p.mean_reward));
        }
        out
    }

    pub fn curve(&self, prior: &str, seed: u64) -> Vec<f64> {
        let mut pts: Vec<&CurvePoint> = self.points.iter().filter(|p| p.prior == prior && p.seed == seed).collect();
        pts.sort_by_key(|p| p.update);
        pts.iter().map(|p| p.mean_reward).collect()
    }
}

/// First update whose curve value reaches `threshold`; `curve.len()` when
/// it never does.
pub fn updates_to_reach(curve: &[f64], threshold: f64) -> usize {
    curve.iter().position(|&r| r >= threshold).unwrap_or(curve.len())
}

fn run_one(prior: &SeqModel, tasks: &[VerifiableTask], cfg: &GrpoConfig, seed: u64) -> Result<Vec<f64>> {
    let mut policies = vec![prior.clone(); tasks.len()];
    let mut rngs: Vec<rng::Rng> = (0..tasks.len())
        .map(|i| rng::stream(cfg.seed, &[rng::tag::RLVR, seed, i as u64]))
        .collect();
    let mut curve = Vec::with_capacity(cfg.n_updates + 1);
    curve.push(mean_success(&policies, tasks));
    for _ in 0..cfg.n_updates {
        policies = policies
            .iter()
            .zip(tasks)
            .zip(rngs.iter_mut())
            .map(|((p, t), r)| grpo_update(p, prior, t, cfg, r).map(|(next, _)| next))
            .collect::<Result<_>>()?;
        curve.push(mean_success(&policies, tasks));
    }
    Ok(curve)
}

/// Trains a separate copy of each prior on every task for `n_seeds` seeds.
/// The sampling stream depends on the seed and the task but not on the
/// prior, so priors are compared on paired randomness.
pub fn run_rlvr(priors: &[(String, SeqModel)], tasks: &[VerifiableTask], cfg: &GrpoConfig, n_seeds: usize) -> Result<RlvrReport> {
    cfg.validate()?;
    if n_seeds == 0 {
        return invalid("n_seeds must be at least 1");
    }
    if priors.is_empty() || tasks.is_empty() {
        return invalid("need at least one prior and one task");
    }
    let v = priors[0].1.n_tokens;
    for (name, p) in priors {
        p.validate()?;
        if p.n_tokens != v {
            return invalid(format!("prior {name:?} has {} tokens, expected {v}", p.n_tokens));
        }
    }
    for t in tasks {
        t.validate(v)?;
    }
    let jobs: Vec<(usize, u64)> = (0..priors.len()).flat_map(|p| (0..n_seeds as u64).map(move |s| (p, s))).collect();
    let curves: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(p, s)| run_one(&priors[p].1, tasks, cfg, s))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for (&(p, s), curve) in jobs.iter().zip(curves) {
        for (update, r) in curve.into_iter().enumerate() {
            points.push(CurvePoint { prior: priors[p].0.clone(), seed: s, update, mean_reward: r });
        }
    }
    Ok(RlvrReport { config_hash: config_hash(&(cfg, n_seeds, tasks)), points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn single_token_task() -> VerifiableTask {
        VerifiableTask {
            id: "one".into(),
            prompt: vec![],
            length: 1,
            segments: vec![Segment { start: 2, core: vec![] }],
            tolerance: 0,
        }
    }

    #[test]
    fn advantage_examples() {
        let a = grpo_advantages(&[1.0, 0.0, 0.0]).unwrap();
        let s = 2f64.sqrt();
        assert!((a[0] - s).abs() < 1e-12 && (a[1] + 1.0 / s).abs() < 1e-12 && (a[2] + 1.0 / s).abs() < 1e-12);
        assert_eq!(grpo_advantages(&[0.3; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(grpo_advantages(&[1.0, 1.0, 0.0, 0.0]).unwrap(), vec![1.0, 1.0, -1.0, -1.0]);
        assert!(grpo_advantages(&[1.0]).is_err());
    }

    #[test]
    fn verifier_semantics() {
        let t = VerifiableTask {
            id: "x".into(),
            prompt: vec![8],
            length: 4,
            segments: vec![Segment { start: 8, core: vec![0, 1] }, Segment { start: 9, core: vec![2, 3] }],
            tolerance: 1,
        };
        assert_eq!(t.verify(&[0, 9, 2, 3]), 1.0);
        assert_eq!(t.verify(&[0, 5, 9, 3]), 1.0);
        assert_eq!(t.verify(&[5, 5, 9, 3]), 0.0);
        // the second segment needs a core token
        assert_eq!(t.verify(&[0, 1, 1, 9]), 0.0);
        // never leaves the first segment
        assert_eq!(t.verify(&[0, 1, 1, 0]), 0.0);
        assert_eq!(t.verify(&[0, 9, 2]), 0.0);
    }

    #[test]
    fn exact_success_matches_enumeration() {
        let mut m = SeqModel::new(3, 1, 1, 1, 0.9).unwrap();
        let mut rng = rng::Rng::seed_from_u64(4);
        for x in m.decoder_logits.iter_mut().chain(m.posterior_logits.iter_mut()) {
            *x = rng.gen_range(-1.5..1.5);
        }
        let t = VerifiableTask {
            id: "e".into(),
            prompt: vec![2],
            length: 3,
            segments: vec![Segment { start: 2, core: vec![0] }, Segment { start: 1, core: vec![0, 2] }],
            tolerance: 1,
        };
        // brute force over latents and tokens
        let mut total = 0.0;
        let n = 4usize; // prompt + 3
        for zs in 0..(2usize.pow(n as u32)) {
            for toks in 0..27usize {
                let out: Vec<u32> = (0..3).map(|i| ((toks / 3usize.pow(i)) % 3) as u32).collect();
                let mut hist: Vec<u32> = vec![];
                let mut u = ACT;
                let mut p = 1.0;
                for step in 0..n {
                    let z = (zs >> step) & 1;
                    let pctx = context_index(&hist, 1, 3);
                    p *= softmax(m.posterior_logit_row(pctx, u), 1.0)[z];
                    u = advance(u, z);
                    let a = if step == 0 { 2 } else { out[step - 1] };
                    if step > 0 {
                        let dctx = context_index(&hist, 1, 3);
                        p *= softmax(m.decoder_logit_row(dctx, u), 1.0)[a as usize];
                    }
                    hist.push(a);
                }
                total += p * t.verify(&out);
            }
        }
        assert!((success_probability(&m, &t) - total).abs() < 1e-12);
    }

    #[test]
    fn zero_advantages_leave_parameters_unchanged() {
        let m = SeqModel::new(3, 1, 1, 1, 0.9).unwrap();
        let task = single_token_task();
        let mut rng = rng::Rng::seed_from_u64(0);
        let samples: Vec<Sample> = (0..4).map(|_| sample_output(&m, &task, &mut rng)).collect();
        let mut group = FrozenGroup::new(samples, &m, &m).unwrap();
        group.advantages = vec![0.0; 4];
        let (g, _) = grpo_gradient(&m, &group, &GrpoConfig::default());
        assert!(g.posterior.iter().chain(&g.decoder).all(|x| *x == 0.0));
    }

    #[test]
    fn rewarded_token_gains_probability() {
        let m = SeqModel::new(3, 0, 0, 0, 0.9).unwrap();
        let task = single_token_task();
        let cfg = GrpoConfig { group_size: 16, ..GrpoConfig::default() };
        let mut rng = rng::Rng::seed_from_u64(1);
        let before = success_probability(&m, &task);
        let (next, metrics) = grpo_update(&m, &m, &task, &cfg, &mut rng).unwrap();
        assert!(metrics.mean_reward > 0.0 && metrics.mean_reward < 1.0);
        assert!(success_probability(&next, &task) > before);
    }

    #[test]
    fn clipped_samples_contribute_nothing() {
        let m = SeqModel::new(3, 0, 0, 0, 0.9).unwrap();
        let task = single_token_task();
        let mut rng = rng::Rng::seed_from_u64(2);
        let samples: Vec<Sample> = (0..6).map(|_| sample_output(&m, &task, &mut rng)).collect();
        let mut group = FrozenGroup::new(samples, &m, &m).unwrap();
        group.advantages = vec![1.0; 6];
        // pretend the old policy was far less likely: every ratio is e^2
        for lp in group.old_log_probs.iter_mut() {
            *lp -= 2.0;
        }
        let (g, metrics) = grpo_gradient(&m, &group, &GrpoConfig::default());
        assert_eq!(metrics.clip_fraction, 1.0);
        assert!(g.decoder.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn optimal_prior_stays_at_one() {
        let mut m = SeqModel::new(3, 0, 0, 0, 0.9).unwrap();
        m.decoder_logits = vec![crate::seq::model::LOGIT_FLOOR, crate::seq::model::LOGIT_FLOOR, 0.0];
        let task = single_token_task();
        let cfg = GrpoConfig { n_updates: 3, ..GrpoConfig::default() };
        let r = run_rlvr(&[("opt".into(), m)], &[task], &cfg, 2).unwrap();
        assert!(r.points.iter().all(|p| p.mean_reward == 1.0));
        assert!(run_rlvr(&[], &[single_token_task()], &cfg, 1).is_err());
    }
}
