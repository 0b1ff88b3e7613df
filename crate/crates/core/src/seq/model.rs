//! Tabular latent sequence model.
//!
//! The decoder `pi(a_t | s_t, u_t)` conditions on an order-k token context
//! and on the *active* latent `u_t`: the most recent think latent, or `0`
//! before any think. Drawing ⟨act⟩ keeps the active latent, so an abstraction
//! persists until the next think. The variational posterior
//! `q(z_t | s_t, u_{t-1})` conditions on its own context order and on the
//! previous active latent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::alphabet::{temporal_prior, ACT};
use super::corpus::{context_index, n_contexts, Corpus, Record};
use crate::error::{invalid, Error, Result};
use crate::numeric::log_softmax;

/// Stand-in for `ln 0` in stored logits; `exp` of it underflows to zero.
pub const LOGIT_FLOOR: f64 = -1e4;

pub const DEFAULT_SMOOTHING: f64 = 0.1;

/// Active latent after drawing `z` with `u_prev` active.
#[inline]
pub fn advance(u_prev: usize, z: usize) -> usize {
    if z == ACT {
        u_prev
    } else {
        z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqModel {
    pub n_tokens: usize,
    pub n_think: usize,
    pub decoder_order: usize,
    pub posterior_order: usize,
    /// Prior stickiness, used for ELBO and KL reporting.
    pub alpha: f64,
    /// `[context][active latent][token]`, row-major.
    pub decoder_logits: Vec<f64>,
    /// `[posterior context][previous active latent][latent]`, row-major.
    pub posterior_logits: Vec<f64>,
}

/// A record with its contexts precomputed for one model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub tokens: Vec<usize>,
    pub dctx: Vec<usize>,
    pub pctx: Vec<usize>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl SeqModel {
    /// Uniform decoder; posterior rows equal to the prior.
    pub fn new(n_tokens: usize, n_think: usize, decoder_order: usize, posterior_order: usize, alpha: f64) -> Result<Self> {
        if n_tokens == 0 {
            return invalid("token alphabet must be nonempty");
        }
        let l = n_think + 1;
        let mut m = SeqModel {
            n_tokens,
            n_think,
            decoder_order,
            posterior_order,
            alpha,
            decoder_logits: vec![0.0; n_contexts(decoder_order, n_tokens) * l * n_tokens],
            posterior_logits: vec![0.0; n_contexts(posterior_order, n_tokens) * l * l],
        };
        temporal_prior(alpha, l)?;
        m.set_posterior_to_prior();
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.alphabet_size();
        if self.n_tokens == 0 {
            return invalid("token alphabet must be nonempty");
        }
        temporal_prior(self.alpha, l)?;
        let nd = n_contexts(self.decoder_order, self.n_tokens) * l * self.n_tokens;
        let np = n_contexts(self.posterior_order, self.n_tokens) * l * l;
        if self.decoder_logits.len() != nd || self.posterior_logits.len() != np {
            return Err(Error::Dimension(format!(
                "expected {nd} decoder and {np} posterior logits, got {} and {}",
                self.decoder_logits.len(),
                self.posterior_logits.len()
            )));
        }
        if self
            .decoder_logits
            .iter()
            .chain(&self.posterior_logits)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Divergence("non-finite logits".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SeqModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Latents including ⟨act⟩.
    pub fn alphabet_size(&self) -> usize {
        self.n_think + 1
    }

    pub fn n_decoder_contexts(&self) -> usize {
        n_contexts(self.decoder_order, self.n_tokens)
    }

    pub fn n_posterior_contexts(&self) -> usize {
        n_contexts(self.posterior_order, self.n_tokens)
    }

    pub fn prior(&self) -> Vec<f64> {
        temporal_prior(self.alpha, self.alphabet_size()).expect("alpha validated at construction")
    }

    pub fn decoder_offset(&self, ctx: usize, u: usize) -> usize {
        (ctx * self.alphabet_size() + u) * self.n_tokens
    }

    pub fn posterior_offset(&self, pctx: usize, u_prev: usize) -> usize {
        let l = self.alphabet_size();
        (pctx * l + u_prev) * l
    }

    pub fn decoder_logit_row(&self, ctx: usize, u: usize) -> &[f64] {
        let o = self.decoder_offset(ctx, u);
        &self.decoder_logits[o..o + self.n_tokens]
    }

    /// Log-probabilities; entries stored at the floor come back as `-inf`.
    pub fn decoder_log_row(&self, ctx: usize, u: usize) -> Vec<f64> {
        clean_log_row(log_softmax(self.decoder_logit_row(ctx, u), 1.0))
    }

    pub fn posterior_logit_row(&self, pctx: usize, u_prev: usize) -> &[f64] {
        let o = self.posterior_offset(pctx, u_prev);
        &self.posterior_logits[o..o + self.alphabet_size()]
    }

    pub fn posterior_log_row(&self, pctx: usize, u_prev: usize, temperature: f64) -> Vec<f64> {
        clean_log_row(log_softmax(self.posterior_logit_row(pctx, u_prev), temperature))
    }

    pub fn set_posterior_to_prior(&mut self) {
        let logp: Vec<f64> = self.prior().iter().map(|p| safe_ln(*p)).collect();
        let l = self.alphabet_size();
        for row in self.posterior_logits.chunks_mut(l) {
            row.copy_from_slice(&logp);
        }
    }

    /// Every posterior row becomes a point mass on `z`.
    pub fn set_posterior_point_mass(&mut self, z: usize) -> Result<()> {
        let l = self.alphabet_size();
        if z >= l {
            return invalid(format!("latent {z} outside alphabet of size {l}"));
        }
        for row in self.posterior_logits.chunks_mut(l) {
            row.fill(LOGIT_FLOOR);
            row[z] = 0.0;
        }
        Ok(())
    }

    /// Replaces the decoder with the smoothed fit of `counts`.
    pub fn set_decoder(&mut self, counts: &DecoderCounts, smoothing: f64) -> Result<()> {
        if counts.counts.len() != self.decoder_logits.len() || counts.n_tokens != self.n_tokens {
            return Err(Error::Dimension("decoder counts do not match the model".into()));
        }
        self.decoder_logits = counts.to_logits(smoothing)?;
        Ok(())
    }

    pub fn encode(&self, record: &Record) -> Result<Encoded> {
        record.validate()?;
        if let Some(t) = record.tokens.iter().find(|&&t| t as usize >= self.n_tokens) {
            return invalid(format!("token {t} outside alphabet of size {}", self.n_tokens));
        }
        let n = record.tokens.len();
        let dctx = (0..n)
            .map(|t| context_index(&record.tokens[..t], self.decoder_order, self.n_tokens))
            .collect();
        let pctx = (0..n)
            .map(|t| context_index(&record.tokens[..t], self.posterior_order, self.n_tokens))
            .collect();
        Ok(Encoded { tokens: record.tokens.iter().map(|&t| t as usize).collect(), dctx, pctx })
    }

    pub fn encode_corpus(&self, corpus: &Corpus) -> Result<Vec<Encoded>> {
        corpus.records.iter().map(|r| self.encode(r)).collect()
    }

    /// Empty decoder count table shaped like this model.
    pub fn empty_counts(&self) -> DecoderCounts {
        DecoderCounts {
            n_tokens: self.n_tokens,
            counts: vec![0.0; self.decoder_logits.len()],
        }
    }
}

fn clean_log_row(mut row: Vec<f64>) -> Vec<f64> {
    for x in &mut row {
        if *x < LOGIT_FLOOR / 2.0 {
            *x = f64::NEG_INFINITY;
        }
    }
    row
}

pub(crate) fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOGIT_FLOOR)
    } else {
        LOGIT_FLOOR
    }
}

/// Weighted `(context, active latent, token)` counts.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderCounts {
    pub n_tokens: usize,
    pub counts: Vec<f64>,
}

impl DecoderCounts {
    pub fn add(&mut self, offset: usize, token: usize, weight: f64) {
        self.counts[offset + token] += weight;
    }

    pub fn merge(&mut self, other: &DecoderCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Log of `(count + smoothing) / (total + smoothing * V)` per row; rows
    /// without mass are uniform.
    pub fn to_logits(&self, smoothing: f64) -> Result<Vec<f64>> {
        if !(smoothing >= 0.0) {
            return invalid("smoothing must be nonnegative");
        }
        let v = self.n_tokens;
        let mut out = Vec::with_capacity(self.counts.len());
        for row in self.counts.chunks(v) {
            let total: f64 = row.iter().sum::<f64>() + smoothing * v as f64;
            if total <= 0.0 {
                out.extend(std::iter::repeat_n(-(v as f64).ln(), v));
            } else {
                out.extend(row.iter().map(|c| safe_ln((c + smoothing) / total)));
            }
        }
        Ok(out)
    }
}

/// Next-token prediction fit: a latent-free model whose decoder rows are the
/// smoothed empirical next-token frequencies per context.
pub fn fit_ntp(corpus: &Corpus, order: usize, n_tokens: usize, smoothing: f64) -> Result<SeqModel> {
    if corpus.is_empty() {
        return invalid("corpus must be nonempty");
    }
    let mut model = SeqModel::new(n_tokens, 0, order, 0, 1.0)?;
    let mut counts = model.empty_counts();
    for rec in model.encode_corpus(corpus)? {
        for (t, &a) in rec.tokens.iter().enumerate() {
            counts.add(model.decoder_offset(rec.dctx[t], ACT), a, 1.0);
        }
    }
    model.set_decoder(&counts, smoothing)?;
    Ok(model)
}

/// Decoder counts from annotated latents.
pub fn annotated_counts(model: &SeqModel, corpus: &Corpus) -> Result<DecoderCounts> {
    let mut counts = model.empty_counts();
    for r in &corpus.records {
        let rec = model.encode(r)?;
        let latents = r
            .latents
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("record {:?} lacks latents", r.task_id)))?;
        let mut u = ACT;
        for (t, &a) in rec.tokens.iter().enumerate() {
            let z = latents[t] as usize;
            if z > model.n_think {
                return invalid(format!("latent {z} outside alphabet"));
            }
            u = advance(u, z);
            counts.add(model.decoder_offset(rec.dctx[t], u), a, 1.0);
        }
    }
    Ok(counts)
}

/// Posterior counts from annotated latents: how often each latent follows
/// each `(posterior context, previous active latent)` pair.
pub fn annotated_posterior_counts(model: &SeqModel, corpus: &Corpus) -> Result<Vec<f64>> {
    let l = model.alphabet_size();
    let mut counts = vec![0.0; model.posterior_logits.len()];
    for r in &corpus.records {
        let rec = model.encode(r)?;
        let latents = r
            .latents
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("record {:?} lacks latents", r.task_id)))?;
        let mut u = ACT;
        for t in 0..rec.len() {
            let z = latents[t] as usize;
            if z >= l {
                return invalid(format!("latent {z} outside alphabet"));
            }
            counts[model.posterior_offset(rec.pctx[t], u) + z] += 1.0;
            u = advance(u, z);
        }
    }
    Ok(counts)
}

impl SeqModel {
    /// Fits decoder and posterior to an annotated corpus, the way a base
    /// model would imitate annotated rationales. The decoder gets additive
    /// smoothing; every posterior row also receives `prior_weight`
    /// pseudo-observations spread according to the temporal prior, which
    /// keeps rows seen only a few times from starting out deterministic.
    pub fn fit_annotated(&mut self, corpus: &Corpus, smoothing: f64, prior_weight: f64) -> Result<()> {
        if !(prior_weight >= 0.0) {
            return invalid("prior_weight must be nonnegative");
        }
        let dec = annotated_counts(self, corpus)?;
        let mut post = annotated_posterior_counts(self, corpus)?;
        let prior = self.prior();
        for row in post.chunks_mut(prior.len()) {
            for (c, p) in row.iter_mut().zip(&prior) {
                *c += prior_weight * p;
            }
        }
        self.set_decoder(&dec, smoothing)?;
        self.posterior_logits = DecoderCounts { n_tokens: self.alphabet_size(), counts: post }.to_logits(smoothing)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::softmax;

    fn corpus(seqs: &[&[u32]]) -> Corpus {
        Corpus::new(seqs.iter().map(|s| Record::new(s.to_vec())).collect()).unwrap()
    }

    #[test]
    fn repeated_token_gives_near_point_mass() {
        let m = fit_ntp(&corpus(&[&[2, 2, 2, 2, 2]]), 0, 3, 0.1).unwrap();
        let row = softmax(m.decoder_logit_row(0, 0), 1.0);
        assert!((row[2] - 5.1 / 5.3).abs() < 1e-12);
        assert!((row[0] - 0.1 / 5.3).abs() < 1e-12);
    }

    #[test]
    fn alternating_corpus_learns_alternation() {
        let m = fit_ntp(&corpus(&[&[0, 1, 0, 1, 0, 1, 0, 1]]), 1, 2, 0.0).unwrap();
        let after0 = softmax(m.decoder_logit_row(0, 0), 1.0);
        let after1 = softmax(m.decoder_logit_row(1, 0), 1.0);
        assert!((after0[1] - 1.0).abs() < 1e-12);
        assert!((after1[0] - 1.0).abs() < 1e-12);
        // BOS context saw a single 0
        assert!((softmax(m.decoder_logit_row(2, 0), 1.0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unsmoothed_fit_is_empirical_frequency() {
        let m = fit_ntp(&corpus(&[&[0, 1, 1, 2], &[1]]), 0, 3, 0.0).unwrap();
        let row = softmax(m.decoder_logit_row(0, 0), 1.0);
        for (p, want) in row.iter().zip([0.2, 0.6, 0.2]) {
            assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_rows_are_uniform_without_smoothing() {
        let counts = DecoderCounts { n_tokens: 4, counts: vec![0.0; 4] };
        let row = softmax(&counts.to_logits(0.0).unwrap(), 1.0);
        assert!(row.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn annotated_fit_tracks_active_latent() {
        let c = Corpus::new(vec![Record {
            tokens: vec![0, 0, 1, 1],
            latents: Some(vec![1, 0, 2, 0]),
            task_id: String::new(),
        }])
        .unwrap();
        let mut m = SeqModel::new(2, 2, 0, 0, 0.9).unwrap();
        m.set_decoder(&annotated_counts(&m, &c).unwrap(), 0.0).unwrap();
        assert!((softmax(m.decoder_logit_row(0, 1), 1.0)[0] - 1.0).abs() < 1e-12);
        assert!((softmax(m.decoder_logit_row(0, 2), 1.0)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_validates() {
        let m = SeqModel::new(3, 2, 1, 1, 0.9).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(SeqModel::from_json(&text).unwrap(), m);
        let mut bad = m.clone();
        bad.decoder_logits.pop();
        assert!(SeqModel::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }
}
