//! Policy-gradient E-step on the posterior logits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advantage::group_advantages;
use super::config::EmConfig;
use super::rollout::{rollout_latents, step_reward, BootstrappedRecord};
use crate::error::{Error, Result};
use crate::numeric::{entropy, softmax};
use crate::rng;
use crate::seq::{advance, effective_alpha, Corpus, Encoded, Latent, LatentAlphabet, SeqModel, ACT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStat {
    pub update: usize,
    pub iteration: usize,
    /// Mean step reward over all rollouts of the update.
    pub mean_reward: f64,
    /// Fraction of sampled steps that drew a think latent.
    pub think_rate: f64,
}

/// Score-function gradient contribution of one drawn latent.
fn add_score(grad: &mut [f64], offset: usize, probs: &[f64], z: usize, weight: f64, temperature: f64) {
    for (j, p) in probs.iter().enumerate() {
        let onehot = if j == z { 1.0 } else { 0.0 };
        grad[offset + j] += weight * (onehot - p) / temperature;
    }
}

/// Gradient of the row entropy with respect to its logits.
fn add_entropy(grad: &mut [f64], offset: usize, probs: &[f64], weight: f64, temperature: f64) {
    let h = entropy(probs);
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            grad[offset + j] -= weight * p * (p.ln() + h) / temperature;
        }
    }
}

/// Rollouts of one group and their summary statistics.
pub struct GroupSample {
    pub gradient: Vec<f64>,
    pub rollouts: Vec<BootstrappedRecord>,
}

/// Samples `group_size` latent chains for one record and returns the
/// per-rollout-averaged gradient estimate of the expected penalized return.
pub fn group_gradient(
    model: &SeqModel,
    rec: &Encoded,
    alphabet: &LatentAlphabet,
    cfg: &EmConfig,
    penalty_c: f64,
    rng: &mut rng::Rng,
) -> Result<GroupSample> {
    let g = cfg.group_size;
    let rollouts: Vec<BootstrappedRecord> = (0..g)
        .map(|_| rollout_latents(model, rec, alphabet, cfg.temperature, penalty_c, rng))
        .collect();
    let rewards: Vec<Vec<f64>> = rollouts.iter().map(|r| r.rewards.clone()).collect();
    let adv = group_advantages(&rewards, cfg.truncation_window)?;
    let mut grad = vec![0.0; model.posterior_logits.len()];
    for (roll, a) in rollouts.iter().zip(&adv) {
        for t in 0..rec.len() {
            let offset = model.posterior_offset(rec.pctx[t], roll.u_prev[t]);
            let probs = softmax(model.posterior_logit_row(rec.pctx[t], roll.u_prev[t]), cfg.temperature);
            add_score(&mut grad, offset, &probs, roll.draws[t], a[t] / g as f64, cfg.temperature);
            if cfg.entropy_coef > 0.0 {
                add_entropy(&mut grad, offset, &probs, cfg.entropy_coef / g as f64, cfg.temperature);
            }
        }
    }
    Ok(GroupSample { gradient: grad, rollouts })
}

/// Runs `cfg.e_step_updates` ascent steps on the posterior of `model` over
/// the records of `shard`. `first_update` is the global index of the first
/// update, which decides whether the penalty-free warmup still applies.
///
/// Under a prior with no think mass (`alpha = 1`) any think makes the KL
/// infinite, so the posterior is projected onto ⟨act⟩ and no update runs.
pub fn e_step(
    model: &SeqModel,
    shard: &Corpus,
    cfg: &EmConfig,
    iteration: usize,
    first_update: usize,
) -> Result<(SeqModel, Vec<UpdateStat>)> {
    let alphabet = LatentAlphabet::new(model.n_think, cfg.max_latent_len)?;
    let enc = model.encode_corpus(shard)?;
    if enc.is_empty() {
        return Err(Error::Invalid("E-step shard is empty".into()));
    }
    let mut q = model.clone();
    if effective_alpha(model.alpha, model.alphabet_size()) >= 1.0 {
        q.set_posterior_point_mass(ACT)?;
        return Ok((q, Vec::new()));
    }
    let mut stats = Vec::with_capacity(cfg.e_step_updates);
    let batch = cfg.batch_size.min(enc.len());
    for step in 0..cfg.e_step_updates {
        let update = first_update + step;
        let c = if update < cfg.warmup_updates { 0.0 } else { cfg.penalty_c };
        let picks: Vec<usize> = (0..batch).map(|j| (step * batch + j) % enc.len()).collect();
        let groups: Vec<GroupSample> = picks
            .par_iter()
            .enumerate()
            .map(|(j, &r)| {
                let mut rng = rng::stream(cfg.seed, &[rng::tag::E_STEP, update as u64, j as u64]);
                group_gradient(&q, &enc[r], &alphabet, cfg, c, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut reward_sum = 0.0;
        let mut steps = 0usize;
        let mut thinks = 0usize;
        let lr = cfg.learning_rates[0] / batch as f64;
        for gs in &groups {
            for (x, g) in q.posterior_logits.iter_mut().zip(&gs.gradient) {
                *x += lr * g;
            }
            for r in &gs.rollouts {
                reward_sum += r.rewards.iter().sum::<f64>();
                steps += r.rewards.len();
                thinks += r.n_thinks();
            }
        }
        if q.posterior_logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence(format!("posterior logits diverged at E-step update {update}")));
        }
        stats.push(UpdateStat {
            update,
            iteration,
            mean_reward: reward_sum / steps.max(1) as f64,
            think_rate: thinks as f64 / steps.max(1) as f64,
        });
    }
    Ok((q, stats))
}

/// `(probability, total reward, (u_prev, z) per step)` of one latent chain.
type Chain = (f64, f64, Vec<(usize, usize)>);

/// Every latent chain of a record with its probability and total reward.
fn enumerate_chains(
    model: &SeqModel,
    rec: &Encoded,
    alphabet: &LatentAlphabet,
    penalty_c: f64,
    temperature: f64,
) -> Vec<Chain> {
    let l = model.alphabet_size();
    let n = rec.len();
    let mut out = Vec::new();
    for code in 0..l.pow(n as u32) {
        let mut c = code;
        let mut u = ACT;
        let mut prob = 1.0;
        let mut total = 0.0;
        let mut steps = Vec::with_capacity(n);
        for t in 0..n {
            let z = c % l;
            c /= l;
            prob *= softmax(model.posterior_logit_row(rec.pctx[t], u), temperature)[z];
            steps.push((u, z));
            let latent = if z == ACT { Latent::Act } else { Latent::Think(alphabet.render(z)) };
            u = advance(u, latent.id(alphabet).unwrap_or(ACT));
            total += step_reward(model.decoder_log_row(rec.dctx[t], u)[rec.tokens[t]], &latent, alphabet, penalty_c);
        }
        out.push((prob, total, steps));
    }
    out
}

/// `E_q[sum_t r_t]` by enumeration of all latent chains.
pub fn exact_objective(model: &SeqModel, rec: &Encoded, alphabet: &LatentAlphabet, penalty_c: f64, temperature: f64) -> f64 {
    enumerate_chains(model, rec, alphabet, penalty_c, temperature)
        .iter()
        .map(|(p, r, _)| p * r)
        .sum()
}

/// Gradient of [`exact_objective`] with respect to the posterior logits.
pub fn exact_gradient(
    model: &SeqModel,
    rec: &Encoded,
    alphabet: &LatentAlphabet,
    penalty_c: f64,
    temperature: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; model.posterior_logits.len()];
    for (p, total, steps) in enumerate_chains(model, rec, alphabet, penalty_c, temperature) {
        for (t, &(u_prev, z)) in steps.iter().enumerate() {
            let probs = softmax(model.posterior_logit_row(rec.pctx[t], u_prev), temperature);
            add_score(&mut grad, model.posterior_offset(rec.pctx[t], u_prev), &probs, z, p * total, temperature);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::Record;
    use rand::SeedableRng;

    /// One-step toy: ⟨act⟩ decodes the token with probability `p_act`, the
    /// single think latent with `p_think`.
    fn toy(p_act: f64, p_think: f64) -> (SeqModel, Corpus) {
        let mut m = SeqModel::new(2, 1, 0, 0, 0.95).unwrap();
        m.decoder_logits = vec![p_act.ln(), (1.0 - p_act).ln(), p_think.ln(), (1.0 - p_think).ln()];
        m.posterior_logits = vec![0.0; 4];
        (m, Corpus::new(vec![Record::new(vec![0])]).unwrap())
    }

    fn think_prob(m: &SeqModel) -> f64 {
        softmax(m.posterior_logit_row(0, 0), 1.0)[1]
    }

    fn cfg(c: f64) -> EmConfig {
        EmConfig {
            penalty_c: c,
            warmup_updates: 0,
            entropy_coef: 0.0,
            e_step_updates: 300,
            batch_size: 1,
            group_size: 4,
            ..EmConfig::default()
        }
    }

    #[test]
    fn think_preferred_iff_gain_exceeds_penalty() {
        // gain = ln 0.8 - ln 0.5 = 0.47
        let (m, c) = toy(0.5, 0.8);
        let (q, _) = e_step(&m, &c, &cfg(0.2), 0, 0).unwrap();
        assert!(think_prob(&q) > 0.9);
        let (q, _) = e_step(&m, &c, &cfg(0.7), 0, 0).unwrap();
        assert!(think_prob(&q) < 0.1);
    }

    #[test]
    fn single_rollout_groups_leave_parameters() {
        let (m, c) = toy(0.5, 0.8);
        let mut one = cfg(0.0);
        one.group_size = 1;
        let (q, _) = e_step(&m, &c, &one, 0, 0).unwrap();
        assert_eq!(q.posterior_logits, m.posterior_logits);
    }

    #[test]
    fn warmup_ignores_penalty() {
        let (m, c) = toy(0.5, 0.8);
        let mut w = cfg(5.0);
        w.warmup_updates = 10_000;
        let (q, _) = e_step(&m, &c, &w, 0, 0).unwrap();
        assert!(think_prob(&q) > 0.9);
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let (mut m, _) = toy(0.3, 0.6);
        m.posterior_logits = vec![0.2, -0.4, 0.1, 0.3];
        let rec = m.encode(&Record::new(vec![0])).unwrap();
        let a = LatentAlphabet::new(1, 16).unwrap();
        let g = exact_gradient(&m, &rec, &a, 0.05, 1.0);
        for i in 0..m.posterior_logits.len() {
            let h = 1e-6;
            let mut plus = m.clone();
            plus.posterior_logits[i] += h;
            let mut minus = m.clone();
            minus.posterior_logits[i] -= h;
            let fd = (exact_objective(&plus, &rec, &a, 0.05, 1.0) - exact_objective(&minus, &rec, &a, 0.05, 1.0)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn group_gradient_is_deterministic() {
        let (m, _) = toy(0.3, 0.6);
        let rec = m.encode(&Record::new(vec![0])).unwrap();
        let a = LatentAlphabet::new(1, 16).unwrap();
        let run = || {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            group_gradient(&m, &rec, &a, &cfg(0.1), 0.1, &mut r).unwrap().gradient
        };
        assert_eq!(run(), run());
    }
}
