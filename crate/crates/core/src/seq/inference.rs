//! Exact inference over latent chains.
//!
//! The active latent `u` is the only state the chain carries, so every
//! expectation over latent sequences is a forward recursion over at most
//! `|alphabet|` states per step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alphabet::ACT;
use super::corpus::Corpus;
use super::model::{advance, Encoded, SeqModel};
use crate::error::Result;
use crate::numeric::logsumexp;

/// Source of per-step latent distributions `log q(z | ...)`.
pub trait PosteriorRows: Sync {
    /// Log-probabilities over the latent alphabet at step `t` of record
    /// `record`, given the posterior context and the previous active latent.
    fn log_row(&self, record: usize, t: usize, pctx: usize, u_prev: usize) -> Vec<f64>;
}

/// The model's own tabular posterior.
impl PosteriorRows for SeqModel {
    fn log_row(&self, _record: usize, _t: usize, pctx: usize, u_prev: usize) -> Vec<f64> {
        self.posterior_log_row(pctx, u_prev, 1.0)
    }
}

/// The temporal prior used as a posterior.
pub struct PriorRows(pub Vec<f64>);

impl PriorRows {
    pub fn of(model: &SeqModel) -> Self {
        PriorRows(model.prior().iter().map(|p| p.ln()).collect())
    }
}

impl PosteriorRows for PriorRows {
    fn log_row(&self, _: usize, _: usize, _: usize, _: usize) -> Vec<f64> {
        self.0.clone()
    }
}

/// Exact per-step posterior `p(z_t | u_{t-1}, a_{0:T})`, indexed by record,
/// step and previous active latent.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    rows: Vec<Vec<Vec<Vec<f64>>>>,
}

impl PosteriorRows for ExactPosterior {
    fn log_row(&self, record: usize, t: usize, _pctx: usize, u_prev: usize) -> Vec<f64> {
        self.rows[record][t][u_prev].clone()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboReport {
    pub elbo: f64,
    /// `sum_t E_q[log pi(a_t | s_t, u_t)]`.
    pub expected_loglik: f64,
    /// `sum_t E_q[KL(q_t || p)]`.
    pub kl: f64,
    /// Some latent chain with positive q mass gives a token zero probability.
    pub zero_likelihood: bool,
}

fn log_prior(model: &SeqModel) -> Vec<f64> {
    model.prior().iter().map(|p| p.ln()).collect()
}

/// Decoder log-probability of the observed token under every active latent.
fn emission(model: &SeqModel, rec: &Encoded, t: usize) -> Vec<f64> {
    (0..model.alphabet_size())
        .map(|u| model.decoder_log_row(rec.dctx[t], u)[rec.tokens[t]])
        .collect()
}

pub fn elbo_record(model: &SeqModel, rec: &Encoded, index: usize, rows: &dyn PosteriorRows) -> ElboReport {
    let l = model.alphabet_size();
    let lp = log_prior(model);
    let mut d = vec![0.0; l];
    d[ACT] = 1.0;
    let mut out = ElboReport::default();
    for t in 0..rec.len() {
        let em = emission(model, rec, t);
        let mut next_d = vec![0.0; l];
        for u_prev in 0..l {
            if d[u_prev] == 0.0 {
                continue;
            }
            let lq = rows.log_row(index, t, rec.pctx[t], u_prev);
            for z in 0..l {
                let q = lq[z].exp();
                if q == 0.0 {
                    continue;
                }
                let w = d[u_prev] * q;
                let next = advance(u_prev, z);
                if em[next] == f64::NEG_INFINITY {
                    out.zero_likelihood = true;
                }
                out.expected_loglik += w * em[next];
                out.kl += w * (lq[z] - lp[z]);
                next_d[next] += w;
            }
        }
        d = next_d;
    }
    out.elbo = out.expected_loglik - out.kl;
    out
}

fn sum_reports(parts: Vec<ElboReport>) -> ElboReport {
    parts.into_iter().fold(ElboReport::default(), |mut acc, r| {
        acc.elbo += r.elbo;
        acc.expected_loglik += r.expected_loglik;
        acc.kl += r.kl;
        acc.zero_likelihood |= r.zero_likelihood;
        acc
    })
}

/// `J(pi, q)` under the model's own posterior.
pub fn elbo(model: &SeqModel, corpus: &Corpus) -> Result<ElboReport> {
    elbo_with(model, corpus, model)
}

pub fn elbo_with(model: &SeqModel, corpus: &Corpus, rows: &dyn PosteriorRows) -> Result<ElboReport> {
    let enc = model.encode_corpus(corpus)?;
    let parts = enc
        .par_iter()
        .enumerate()
        .map(|(i, rec)| elbo_record(model, rec, i, rows))
        .collect();
    Ok(sum_reports(parts))
}

/// Forward log-messages `log P(a_{0:t}, u_t)` for every step, with latent
/// transitions drawn from `rows`.
pub fn forward_record(model: &SeqModel, rec: &Encoded, index: usize, rows: &dyn PosteriorRows) -> Vec<Vec<f64>> {
    let l = model.alphabet_size();
    let mut la = vec![f64::NEG_INFINITY; l];
    la[ACT] = 0.0;
    let mut out = Vec::with_capacity(rec.len());
    for t in 0..rec.len() {
        let em = emission(model, rec, t);
        let mut terms: Vec<Vec<f64>> = vec![Vec::new(); l];
        for u_prev in 0..l {
            if la[u_prev] == f64::NEG_INFINITY {
                continue;
            }
            let lq = rows.log_row(index, t, rec.pctx[t], u_prev);
            for z in 0..l {
                let next = advance(u_prev, z);
                terms[next].push(la[u_prev] + lq[z] + em[next]);
            }
        }
        la = terms.iter().map(|v| logsumexp(v)).collect();
        out.push(la.clone());
    }
    out
}

pub fn marginal_record(model: &SeqModel, rec: &Encoded, index: usize, rows: &dyn PosteriorRows) -> f64 {
    forward_record(model, rec, index, rows)
        .last()
        .map_or(0.0, |la| logsumexp(la))
}

/// `log p(a_{0:T})` summed over records, with latents marginalized under the
/// temporal prior.
pub fn exact_marginal_loglik(model: &SeqModel, corpus: &Corpus) -> Result<f64> {
    marginal_loglik_with(model, corpus, &PriorRows::of(model))
}

/// Log-likelihood with latents marginalized under the learned posterior,
/// which only looks at past tokens and so is itself a generative model.
pub fn q_marginal_loglik(model: &SeqModel, corpus: &Corpus) -> Result<f64> {
    marginal_loglik_with(model, corpus, model)
}

pub fn marginal_loglik_with(model: &SeqModel, corpus: &Corpus, rows: &dyn PosteriorRows) -> Result<f64> {
    let enc = model.encode_corpus(corpus)?;
    let parts: Vec<f64> = enc
        .par_iter()
        .enumerate()
        .map(|(i, rec)| marginal_record(model, rec, i, rows))
        .collect();
    Ok(parts.iter().sum())
}

/// Backward log-messages `log p(a_{t+1:T} | u_t)` under the prior.
fn backward_record(model: &SeqModel, rec: &Encoded) -> Vec<Vec<f64>> {
    let l = model.alphabet_size();
    let lp = log_prior(model);
    let n = rec.len();
    let mut beta = vec![vec![0.0; l]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        let em = emission(model, rec, t + 1);
        for u in 0..l {
            let terms: Vec<f64> = (0..l)
                .map(|z| {
                    let next = advance(u, z);
                    lp[z] + em[next] + beta[t + 1][next]
                })
                .collect();
            beta[t][u] = logsumexp(&terms);
        }
    }
    beta
}

fn exact_rows_record(model: &SeqModel, rec: &Encoded) -> Vec<Vec<Vec<f64>>> {
    let l = model.alphabet_size();
    let lp = log_prior(model);
    let beta = backward_record(model, rec);
    (0..rec.len())
        .map(|t| {
            let em = emission(model, rec, t);
            (0..l)
                .map(|u_prev| {
                    let un: Vec<f64> = (0..l)
                        .map(|z| {
                            let next = advance(u_prev, z);
                            lp[z] + em[next] + beta[t][next]
                        })
                        .collect();
                    let norm = logsumexp(&un);
                    if norm == f64::NEG_INFINITY {
                        // unreachable history: any valid row will do
                        lp.clone()
                    } else {
                        un.iter().map(|x| x - norm).collect()
                    }
                })
                .collect()
        })
        .collect()
}

/// The posterior that makes the ELBO tight.
pub fn exact_posterior(model: &SeqModel, corpus: &Corpus) -> Result<ExactPosterior> {
    let enc = model.encode_corpus(corpus)?;
    Ok(ExactPosterior { rows: enc.par_iter().map(|rec| exact_rows_record(model, rec)).collect() })
}

/// `P(u_t = u | a_{0:T})` under the prior, one row per step.
pub fn active_latent_marginals(model: &SeqModel, rec: &Encoded) -> Vec<Vec<f64>> {
    let prior = PriorRows::of(model);
    let fwd = forward_record(model, rec, 0, &prior);
    let beta = backward_record(model, rec);
    let total = fwd.last().map_or(0.0, |la| logsumexp(la));
    fwd.iter()
        .zip(&beta)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - total).exp()).collect())
        .collect()
}

/// Expected fraction of steps at which `rows` draws a think latent.
pub fn think_frequency(model: &SeqModel, corpus: &Corpus, rows: &dyn PosteriorRows) -> Result<f64> {
    let enc = model.encode_corpus(corpus)?;
    let l = model.alphabet_size();
    let per: Vec<f64> = enc
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut d = vec![0.0; l];
            d[ACT] = 1.0;
            let mut thinks = 0.0;
            for t in 0..rec.len() {
                let mut next_d = vec![0.0; l];
                for u_prev in 0..l {
                    if d[u_prev] == 0.0 {
                        continue;
                    }
                    let lq = rows.log_row(i, t, rec.pctx[t], u_prev);
                    for (z, lqz) in lq.iter().enumerate() {
                        let w = d[u_prev] * lqz.exp();
                        if z != ACT {
                            thinks += w;
                        }
                        next_d[advance(u_prev, z)] += w;
                    }
                }
                d = next_d;
            }
            thinks
        })
        .collect();
    let steps = corpus.n_tokens();
    Ok(if steps == 0 { 0.0 } else { per.iter().sum::<f64>() / steps as f64 })
}

/// Most likely latent at each step when following the posterior greedily.
pub fn greedy_latents(model: &SeqModel, corpus: &Corpus) -> Result<Vec<Vec<u32>>> {
    Ok(model
        .encode_corpus(corpus)?
        .iter()
        .map(|rec| {
            let mut u = ACT;
            (0..rec.len())
                .map(|t| {
                    let row = model.posterior_logit_row(rec.pctx[t], u);
                    let z = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
                    u = advance(u, z);
                    z as u32
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::corpus::Record;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, v: usize, k: usize, alpha: f64) -> SeqModel {
        let mut m = SeqModel::new(v, k, 1, 1, alpha).unwrap();
        for x in m.decoder_logits.iter_mut().chain(m.posterior_logits.iter_mut()) {
            *x = rng.gen_range(-2.0..2.0);
        }
        m
    }

    fn corpus(seqs: &[&[u32]]) -> Corpus {
        Corpus::new(seqs.iter().map(|s| Record::new(s.to_vec())).collect()).unwrap()
    }

    /// Brute-force `log sum_z p(z) pi(a | z)` over all latent chains.
    fn enumerate(model: &SeqModel, tokens: &[u32]) -> f64 {
        let rec = model.encode(&Record::new(tokens.to_vec())).unwrap();
        let l = model.alphabet_size();
        let lp = log_prior(model);
        let n = tokens.len();
        let mut terms = Vec::new();
        for code in 0..l.pow(n as u32) {
            let mut c = code;
            let mut u = ACT;
            let mut s = 0.0;
            for t in 0..n {
                let z = c % l;
                c /= l;
                u = advance(u, z);
                s += lp[z] + model.decoder_log_row(rec.dctx[t], u)[rec.tokens[t]];
            }
            terms.push(s);
        }
        logsumexp(&terms)
    }

    #[test]
    fn single_latent_elbo_is_decoder_loglik() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 3, 0, 0.5);
        let c = corpus(&[&[0, 2, 1, 1]]);
        let rec = m.encode(&c.records[0]).unwrap();
        let direct: f64 = (0..4).map(|t| m.decoder_log_row(rec.dctx[t], 0)[rec.tokens[t]]).sum();
        let e = elbo(&m, &c).unwrap();
        assert!((e.elbo - direct).abs() < 1e-12);
        assert_eq!(e.kl, 0.0);
        assert!((exact_marginal_loglik(&m, &c).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = random_model(&mut rng, 3, 1, 0.7);
            let toks = [rng.gen_range(0..3), rng.gen_range(0..3)];
            let got = exact_marginal_loglik(&m, &corpus(&[&toks])).unwrap();
            assert!((got - enumerate(&m, &toks)).abs() < 1e-12);
        }
        let m = random_model(&mut rng, 2, 3, 0.3);
        let toks = [0, 1, 1, 0];
        let got = exact_marginal_loglik(&m, &corpus(&[&toks])).unwrap();
        assert!((got - enumerate(&m, &toks)).abs() < 1e-12);
    }

    #[test]
    fn frozen_prior_uses_initial_latent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 3, 2, 1.0);
        let c = corpus(&[&[1, 0, 2]]);
        let rec = m.encode(&c.records[0]).unwrap();
        let direct: f64 = (0..3).map(|t| m.decoder_log_row(rec.dctx[t], ACT)[rec.tokens[t]]).sum();
        assert!((exact_marginal_loglik(&m, &c).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn elbo_below_marginal_and_tight_at_exact_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let (k, alpha) = (rng.gen_range(0..4), rng.gen_range(0.05..0.95));
            let m = random_model(&mut rng, 3, k, alpha);
            let n = rng.gen_range(1..7);
            let toks: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let c = corpus(&[&toks]);
            let marg = exact_marginal_loglik(&m, &c).unwrap();
            assert!(elbo(&m, &c).unwrap().elbo <= marg + 1e-12);
            let exact = exact_posterior(&m, &c).unwrap();
            let tight = elbo_with(&m, &c, &exact).unwrap().elbo;
            assert!((marg - tight).abs() < 1e-10, "{marg} vs {tight}");
        }
    }

    #[test]
    fn single_step_exact_posterior_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 4, 1, 0.6);
        let c = corpus(&[&[3]]);
        let exact = exact_posterior(&m, &c).unwrap();
        let e = elbo_with(&m, &c, &exact).unwrap().elbo;
        assert!((e - exact_marginal_loglik(&m, &c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn active_marginals_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(&mut rng, 3, 2, 0.5);
        let rec = m.encode(&Record::new(vec![0, 1, 2, 2, 1])).unwrap();
        for row in active_latent_marginals(&m, &rec) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn think_frequency_of_prior() {
        let m = SeqModel::new(2, 3, 0, 0, 0.6).unwrap();
        let c = corpus(&[&[0, 1, 1]]);
        let f = think_frequency(&m, &c, &PriorRows::of(&m)).unwrap();
        assert!((f - 0.3).abs() < 1e-12);
    }
}
