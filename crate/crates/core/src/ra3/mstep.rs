//! M-step: refit the decoder on expert tokens paired with latents sampled
//! from the current posterior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EmConfig;
use super::rollout::{rollout_latents, BootstrappedRecord};
use crate::error::{invalid, Result};
use crate::numeric::softmax;
use crate::rng;
use crate::seq::inference::active_latent_marginals;
use crate::seq::model::safe_ln;
use crate::seq::{elbo_with, exact_posterior, Corpus, DecoderCounts, LatentAlphabet, SeqModel};

/// Decoder counts from `samples` posterior chains per record, each weighted
/// `1 / samples`. Also returns the first chain of every record.
pub fn bootstrap_counts(
    q: &SeqModel,
    corpus: &Corpus,
    cfg: &EmConfig,
    iteration: usize,
) -> Result<(DecoderCounts, Vec<BootstrappedRecord>)> {
    let alphabet = LatentAlphabet::new(q.n_think, cfg.max_latent_len)?;
    let enc = q.encode_corpus(corpus)?;
    let samples = cfg.m_step_updates;
    let w = 1.0 / samples as f64;
    let parts: Vec<(DecoderCounts, BootstrappedRecord)> = enc
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut rng = rng::stream(cfg.seed, &[rng::tag::M_STEP, iteration as u64, i as u64]);
            let mut counts = q.empty_counts();
            let mut first = None;
            for _ in 0..samples {
                let b = rollout_latents(q, rec, &alphabet, cfg.temperature, cfg.penalty_c, &mut rng);
                for (t, &a) in rec.tokens.iter().enumerate() {
                    counts.add(q.decoder_offset(rec.dctx[t], b.active[t]), a, w);
                }
                first.get_or_insert(b);
            }
            (counts, first.expect("at least one sample"))
        })
        .collect();
    let mut total = q.empty_counts();
    let mut boots = Vec::with_capacity(parts.len());
    for (c, b) in parts {
        total.merge(&c);
        boots.push(b);
    }
    Ok((total, boots))
}

/// Moves the decoder of `model` a fraction `rate` of the way (in probability
/// space) toward the smoothed fit of `counts`; `rate = 1` replaces it.
pub fn refit_decoder(model: &SeqModel, counts: &DecoderCounts, smoothing: f64, rate: f64) -> Result<SeqModel> {
    if !(rate > 0.0 && rate <= 1.0) {
        return invalid("M-step rate must lie in (0,1]");
    }
    let mut out = model.clone();
    out.set_decoder(counts, smoothing)?;
    if rate < 1.0 {
        let v = model.n_tokens;
        for (new, old) in out.decoder_logits.chunks_mut(v).zip(model.decoder_logits.chunks(v)) {
            let p_new = softmax(new, 1.0);
            let p_old = softmax(old, 1.0);
            for (x, (a, b)) in new.iter_mut().zip(p_new.iter().zip(&p_old)) {
                *x = safe_ln(rate * a + (1.0 - rate) * b);
            }
        }
    }
    Ok(out)
}

/// One M-step on `corpus`. Returns the new model and one bootstrapped chain
/// per record.
pub fn m_step(q: &SeqModel, corpus: &Corpus, cfg: &EmConfig, iteration: usize) -> Result<(SeqModel, Vec<BootstrappedRecord>)> {
    let (counts, boots) = bootstrap_counts(q, corpus, cfg, iteration)?;
    Ok((refit_decoder(q, &counts, cfg.smoothing, cfg.learning_rates[1])?, boots))
}

/// Expected decoder counts under the exact posterior.
pub fn expected_counts(model: &SeqModel, corpus: &Corpus) -> Result<DecoderCounts> {
    let enc = model.encode_corpus(corpus)?;
    let parts: Vec<DecoderCounts> = enc
        .par_iter()
        .map(|rec| {
            let mut c = model.empty_counts();
            for (t, row) in active_latent_marginals(model, rec).iter().enumerate() {
                for (u, w) in row.iter().enumerate() {
                    if *w > 0.0 {
                        c.add(model.decoder_offset(rec.dctx[t], u), rec.tokens[t], *w);
                    }
                }
            }
            c
        })
        .collect();
    let mut total = model.empty_counts();
    parts.iter().for_each(|c| total.merge(c));
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEmStep {
    pub iteration: usize,
    /// `J(pi_i, q_i)` with `q_i` the exact posterior of `pi_i`.
    pub elbo: f64,
    /// `J(pi_{i+1}, q_i)`, after the M-step but before the new E-step.
    pub elbo_after_m: f64,
}

/// EM with an exact E-step (the true posterior) and an exact M-step
/// (unsmoothed expected-count maximum likelihood). Returns the final model
/// and one entry per iteration plus the final ELBO.
pub fn exact_em(model: &SeqModel, corpus: &Corpus, iterations: usize) -> Result<(SeqModel, Vec<ExactEmStep>, f64)> {
    let mut m = model.clone();
    let mut trace = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let q = exact_posterior(&m, corpus)?;
        let elbo = elbo_with(&m, corpus, &q)?.elbo;
        let next = refit_decoder(&m, &expected_counts(&m, corpus)?, 0.0, 1.0)?;
        let elbo_after_m = elbo_with(&next, corpus, &q)?.elbo;
        trace.push(ExactEmStep { iteration: i, elbo, elbo_after_m });
        m = next;
    }
    let final_elbo = elbo_with(&m, corpus, &exact_posterior(&m, corpus)?)?.elbo;
    Ok((m, trace, final_elbo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::{fit_ntp, Record, ACT};

    fn corpus() -> Corpus {
        Corpus::new(vec![
            Record::new(vec![0, 1, 1, 2, 0, 1]),
            Record::new(vec![2, 2, 1, 0]),
            Record::new(vec![1, 0, 2, 2, 2]),
        ])
        .unwrap()
    }

    #[test]
    fn all_act_posterior_reproduces_ntp() {
        let c = corpus();
        let mut q = SeqModel::new(3, 2, 1, 1, 0.9).unwrap();
        q.set_posterior_point_mass(ACT).unwrap();
        let cfg = EmConfig { m_step_updates: 7, ..EmConfig::default() };
        let (m, boots) = m_step(&q, &c, &cfg, 0).unwrap();
        assert!(boots.iter().all(|b| b.n_thinks() == 0));
        let ntp = fit_ntp(&c, 1, 3, cfg.smoothing).unwrap();
        for ctx in 0..m.n_decoder_contexts() {
            let a = softmax(m.decoder_logit_row(ctx, ACT), 1.0);
            let b = softmax(ntp.decoder_logit_row(ctx, ACT), 1.0);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_rate_interpolates() {
        let mut model = SeqModel::new(2, 0, 0, 0, 1.0).unwrap();
        let counts = DecoderCounts { n_tokens: 2, counts: vec![3.0, 1.0] };
        model = refit_decoder(&model, &counts, 0.0, 0.5).unwrap();
        let p = softmax(model.decoder_logit_row(0, 0), 1.0);
        assert!((p[0] - 0.625).abs() < 1e-12);
        assert!(refit_decoder(&model, &counts, 0.0, 0.0).is_err());
    }

    #[test]
    fn exact_em_never_decreases_elbo() {
        let c = corpus();
        let mut m = SeqModel::new(3, 2, 1, 1, 0.7).unwrap();
        for (i, x) in m.decoder_logits.iter_mut().enumerate() {
            *x = ((i * 7919) % 13) as f64 / 6.0 - 1.0;
        }
        let (_, trace, last) = exact_em(&m, &c, 5).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for s in &trace {
            assert!(s.elbo >= prev - 1e-10);
            assert!(s.elbo_after_m >= s.elbo - 1e-10);
            prev = s.elbo;
        }
        assert!(last >= prev - 1e-10);
    }
}
