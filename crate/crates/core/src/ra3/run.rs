//! The EM loop: alternate policy-gradient E-steps and bootstrapped M-steps on
//! fresh corpus shards.

use serde::{Deserialize, Serialize};

use super::config::EmConfig;
use super::estep::{e_step, UpdateStat};
use super::mstep::m_step;
use super::rollout::BootstrappedRecord;
use crate::error::{invalid, Result};
use crate::hash::config_hash;
use crate::seq::{elbo, exact_marginal_loglik, q_marginal_loglik, think_frequency, Corpus, LatentAlphabet, Record, SeqModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// ELBO per token on the training corpus.
    pub elbo: f64,
    /// Negative log-likelihood per token with latents marginalized under the prior.
    pub prior_marginal_nll: f64,
    /// Negative log-likelihood per token with latents marginalized under q.
    pub train_nll: f64,
    pub held_out_nll: Option<f64>,
    /// Expected fraction of steps at which q draws a think latent.
    pub think_frequency: f64,
    /// Mean symbol length of sampled think strings.
    pub mean_think_length: f64,
    pub mean_e_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: EmConfig,
    pub n_iterations: usize,
    pub iterations: Vec<IterationMetrics>,
    pub reward_trace: Vec<UpdateStat>,
}

impl RunReport {
    pub fn reward_trace_csv(&self) -> String {
        let mut out = String::from("update,iteration,mean_reward,think_rate\n");
        for s in &self.reward_trace {
            out.push_str(&format!("{},{},{},{}\n", s.update, s.iteration, s.mean_reward, s.think_rate));
        }
        out
    }
}

pub struct Ra3Run {
    pub model: SeqModel,
    pub report: RunReport,
    /// One sampled latent chain per record of the last M-step corpus.
    pub bootstrapped: Corpus,
}

fn per_token(total: f64, corpus: &Corpus) -> f64 {
    total / corpus.n_tokens().max(1) as f64
}

fn concat(shards: &[Corpus]) -> Corpus {
    Corpus { records: shards.iter().flat_map(|s| s.records.iter().cloned()).collect() }
}

/// Runs `n_iterations` EM iterations from `pi_0`. The corpus is cut into
/// `2 n_iterations` contiguous shards; iteration `i` runs its E-step on shard
/// `2i` and its M-step on shards `1, 3, ..., 2i+1`.
pub fn run_ra3(pi_0: &SeqModel, corpus: &Corpus, held_out: Option<&Corpus>, n_iterations: usize, cfg: &EmConfig) -> Result<Ra3Run> {
    if n_iterations == 0 {
        return invalid("n_iterations must be at least 1");
    }
    cfg.validate()?;
    let shards = corpus.shards(2 * n_iterations)?;
    let alphabet = LatentAlphabet::new(pi_0.n_think, cfg.max_latent_len)?;
    let mut model = pi_0.clone();
    let mut report = RunReport {
        config_hash: config_hash(&(cfg, n_iterations)),
        config: cfg.clone(),
        n_iterations,
        iterations: Vec::with_capacity(n_iterations),
        reward_trace: Vec::new(),
    };
    let mut m_shards: Vec<Corpus> = Vec::new();
    let mut boot_corpus = Corpus::default();
    for i in 0..n_iterations {
        let (q, stats) = e_step(&model, &shards[2 * i], cfg, i, i * cfg.e_step_updates)?;
        m_shards.push(shards[2 * i + 1].clone());
        let m_corpus = concat(&m_shards);
        let (next, boots) = m_step(&q, &m_corpus, cfg, i)?;
        model = next;

        let thinks: Vec<usize> = boots
            .iter()
            .flat_map(|b| b.latents.iter().filter(|l| l.is_think()).map(|l| l.symbol_len()))
            .collect();
        let mean_e_reward = if stats.is_empty() {
            0.0
        } else {
            stats.iter().map(|s| s.mean_reward).sum::<f64>() / stats.len() as f64
        };
        report.iterations.push(IterationMetrics {
            iteration: i,
            elbo: per_token(elbo(&model, corpus)?.elbo, corpus),
            prior_marginal_nll: -per_token(exact_marginal_loglik(&model, corpus)?, corpus),
            train_nll: -per_token(q_marginal_loglik(&model, corpus)?, corpus),
            held_out_nll: held_out
                .map(|h| q_marginal_loglik(&model, h).map(|ll| -per_token(ll, h)))
                .transpose()?,
            think_frequency: think_frequency(&model, corpus, &model)?,
            mean_think_length: if thinks.is_empty() {
                0.0
            } else {
                thinks.iter().sum::<usize>() as f64 / thinks.len() as f64
            },
            mean_e_reward,
        });
        report.reward_trace.extend(stats);
        boot_corpus = Corpus {
            records: boots
                .iter()
                .zip(&m_corpus.records)
                .map(|(b, r)| Record {
                    tokens: b.tokens.clone(),
                    latents: Some(b.latent_ids(&alphabet)),
                    task_id: r.task_id.clone(),
                })
                .collect(),
        };
    }
    Ok(Ra3Run { model, report, bootstrapped: boot_corpus })
}

/// Bootstrapped chains as corpus records.
pub fn bootstrapped_records(boots: &[BootstrappedRecord], alphabet: &LatentAlphabet) -> Vec<Record> {
    boots
        .iter()
        .map(|b| Record { tokens: b.tokens.clone(), latents: Some(b.latent_ids(alphabet)), task_id: String::new() })
        .collect()
}
