//! Synthetic expert corpora generated by hidden skills.
//!
//! A record is a sequence of segments. Each segment draws a skill from the
//! skill-transition matrix, a duration from that skill's duration
//! distribution, and then that many tokens i.i.d. from the skill's emission
//! table. The annotation marks the first step of every segment with the think
//! latent `skill + 1` and all other steps with ⟨act⟩.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::sample_index;
use crate::rng;
use crate::seq::model::{safe_ln, LOGIT_FLOOR};
use crate::seq::{Corpus, Record, SeqModel, ACT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skill {
    /// Distribution over tokens.
    pub emission: Vec<f64>,
    /// `duration[i]` is the probability of a segment of length `i + 1`.
    pub duration: Vec<f64>,
    /// Distribution of the first token of a segment; `emission` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillSpec {
    pub n_tokens: usize,
    pub skills: Vec<Skill>,
    /// Row-stochastic skill-to-skill transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Distribution of the first skill; uniform when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    pub n_records: usize,
    /// Record lengths are uniform on `min..=max`.
    pub length: LengthRange,
    /// Probability that a step inside a segment is annotated with the active
    /// skill's think again. Such redundant thinks leave the active latent
    /// unchanged and mimic noisy annotators.
    #[serde(default)]
    pub rethink: f64,
    pub seed: u64,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid(format!("{what} must be a probability vector"));
    }
    Ok(())
}

impl SkillSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.skills.len();
        if k == 0 || self.n_tokens == 0 {
            return invalid("need at least one skill and one token");
        }
        for (i, s) in self.skills.iter().enumerate() {
            if s.emission.len() != self.n_tokens {
                return invalid(format!("skill {i}: emission has {} entries", s.emission.len()));
            }
            check_distribution(&s.emission, &format!("skill {i} emission"))?;
            check_distribution(&s.duration, &format!("skill {i} duration"))?;
            if let Some(start) = &s.start {
                if start.len() != self.n_tokens {
                    return invalid(format!("skill {i}: start has {} entries", start.len()));
                }
                check_distribution(start, &format!("skill {i} start"))?;
            }
        }
        if self.transition.len() != k || self.transition.iter().any(|r| r.len() != k) {
            return invalid("transition matrix must be square over the skills");
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        if let Some(init) = &self.initial {
            if init.len() != k {
                return invalid("initial distribution must cover every skill");
            }
            check_distribution(init, "initial distribution")?;
        }
        if !(0.0..=1.0).contains(&self.rethink) {
            return invalid("rethink must be a probability");
        }
        if self.length.min == 0 || self.length.min > self.length.max {
            return invalid("record lengths must satisfy 1 <= min <= max");
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: SkillSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn initial_distribution(&self) -> Vec<f64> {
        self.initial
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.skills.len() as f64; self.skills.len()])
    }

    pub fn mean_duration(&self, skill: usize) -> f64 {
        self.skills[skill]
            .duration
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

/// A record, its per-step skills and its completed segments.
type GeneratedRecord = (Record, Vec<usize>, Vec<(usize, usize)>);

/// A generated corpus together with the generating skill of every token.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldCorpus {
    pub corpus: Corpus,
    pub skills: Vec<Vec<usize>>,
    /// Lengths of segments that ended before their record did.
    pub complete_segments: Vec<(usize, usize)>,
}

pub fn gen_corpus(spec: &SkillSpec) -> Result<WorldCorpus> {
    spec.validate()?;
    let init = spec.initial_distribution();
    let records: Vec<GeneratedRecord> = (0..spec.n_records)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(spec.seed, &[rng::tag::WORLD, i as u64]);
            let len = rng.gen_range(spec.length.min..=spec.length.max);
            let mut tokens = Vec::with_capacity(len);
            let mut latents = Vec::with_capacity(len);
            let mut skills = Vec::with_capacity(len);
            let mut complete = Vec::new();
            let mut skill = sample_index(&init, &mut rng);
            while tokens.len() < len {
                let d = sample_index(&spec.skills[skill].duration, &mut rng) + 1;
                let take = d.min(len - tokens.len());
                let sk = &spec.skills[skill];
                for j in 0..take {
                    let dist = match (&sk.start, j) {
                        (Some(start), 0) => start,
                        _ => &sk.emission,
                    };
                    tokens.push(sample_index(dist, &mut rng) as u32);
                    let think = j == 0 || (spec.rethink > 0.0 && rng.gen_bool(spec.rethink));
                    latents.push(if think { skill as u32 + 1 } else { ACT as u32 });
                    skills.push(skill);
                }
                if take == d && tokens.len() < len {
                    complete.push((skill, d));
                }
                skill = sample_index(&spec.transition[skill], &mut rng);
            }
            let record = Record { tokens, latents: Some(latents), task_id: format!("world-{}-{i}", spec.seed) };
            (record, skills, complete)
        })
        .collect();
    let mut out = WorldCorpus { corpus: Corpus::default(), skills: Vec::new(), complete_segments: Vec::new() };
    for (r, s, c) in records {
        out.corpus.records.push(r);
        out.skills.push(s);
        out.complete_segments.extend(c);
    }
    Ok(out)
}

/// Model that knows the generating process: decoder rows are the skill
/// emissions and the posterior switches skill with the inverse mean
/// duration as hazard. Segment-start tokens are not modelled.
pub fn oracle_model(spec: &SkillSpec, decoder_order: usize, posterior_order: usize, alpha: f64) -> Result<SeqModel> {
    spec.validate()?;
    let k = spec.skills.len();
    let mut m = SeqModel::new(spec.n_tokens, k, decoder_order, posterior_order, alpha)?;
    let init = spec.initial_distribution();
    let mixture: Vec<f64> = (0..spec.n_tokens)
        .map(|a| spec.skills.iter().map(|s| s.emission[a]).sum::<f64>() / k as f64)
        .collect();
    for ctx in 0..m.n_decoder_contexts() {
        for u in 0..=k {
            let row = if u == ACT { &mixture } else { &spec.skills[u - 1].emission };
            let o = m.decoder_offset(ctx, u);
            for (a, p) in row.iter().enumerate() {
                m.decoder_logits[o + a] = safe_ln(*p);
            }
        }
    }
    for pctx in 0..m.n_posterior_contexts() {
        for u_prev in 0..=k {
            let mut row = vec![0.0; k + 1];
            if u_prev == ACT {
                row[1..].copy_from_slice(&init);
            } else {
                let h = 1.0 / spec.mean_duration(u_prev - 1);
                row[ACT] = 1.0 - h;
                for j in 0..k {
                    row[j + 1] = h * spec.transition[u_prev - 1][j];
                }
            }
            let o = m.posterior_offset(pctx, u_prev);
            for (z, p) in row.iter().enumerate() {
                m.posterior_logits[o + z] = if *p > 0.0 { p.ln() } else { LOGIT_FLOOR };
            }
        }
    }
    Ok(m)
}

/// Steps `t >= 1` carrying a think latent.
pub fn think_points(latents: &[u32]) -> Vec<usize> {
    latents
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, z)| **z as usize != ACT)
        .map(|(t, _)| t)
        .collect()
}

/// Steps `t >= 1` where the active latent changes.
pub fn change_points(latents: &[u32]) -> Vec<usize> {
    let active = active_labels(latents);
    (1..active.len()).filter(|&t| active[t] != active[t - 1]).collect()
}

/// Active latent at every step.
pub fn active_labels(latents: &[u32]) -> Vec<usize> {
    let mut u = ACT;
    latents
        .iter()
        .map(|&z| {
            if z as usize != ACT {
                u = z as usize;
            }
            u
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub purity: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    hits_pred: usize,
    n_pred: usize,
    hits_true: usize,
    n_true: usize,
}

fn near(points: &[usize], t: usize) -> bool {
    points.iter().any(|&p| p.abs_diff(t) <= 1)
}

fn tally(pred: &[usize], truth: &[usize]) -> Tally {
    Tally {
        hits_pred: pred.iter().filter(|&&t| near(truth, t)).count(),
        n_pred: pred.len(),
        hits_true: truth.iter().filter(|&&t| near(pred, t)).count(),
        n_true: truth.len(),
    }
}

fn f1_of(t: Tally) -> (f64, f64, f64) {
    if t.n_pred == 0 && t.n_true == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if t.n_pred == 0 { 0.0 } else { t.hits_pred as f64 / t.n_pred as f64 };
    let r = if t.n_true == 0 { 0.0 } else { t.hits_true as f64 / t.n_true as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn sum_tallies(ts: impl Iterator<Item = Tally>) -> Tally {
    ts.fold(Tally::default(), |a, b| Tally {
        hits_pred: a.hits_pred + b.hits_pred,
        n_pred: a.n_pred + b.n_pred,
        hits_true: a.hits_true + b.hits_true,
        n_true: a.n_true + b.n_true,
    })
}

/// Boundary F1 with one step of slack and segment purity, pooled over
/// records. Inferred boundaries are think points; true boundaries are
/// changes of the true active latent.
pub fn latent_recovery_score(inferred: &[Vec<u32>], truth: &[Vec<u32>]) -> Result<RecoveryScore> {
    if inferred.len() != truth.len() || inferred.iter().zip(truth).any(|(a, b)| a.len() != b.len()) {
        return invalid("inferred and true latents must have equal shapes");
    }
    let t = sum_tallies(
        inferred
            .iter()
            .zip(truth)
            .map(|(i, tr)| tally(&think_points(i), &change_points(tr))),
    );
    let (precision, recall, f1) = f1_of(t);
    let mut majority = 0;
    let mut total = 0;
    for (inf, tr) in inferred.iter().zip(truth) {
        let labels = active_labels(tr);
        let mut cuts = vec![0];
        cuts.extend(think_points(inf));
        cuts.push(inf.len());
        for w in cuts.windows(2) {
            let seg = &labels[w[0]..w[1]];
            let mut counts = std::collections::HashMap::new();
            for l in seg {
                *counts.entry(l).or_insert(0usize) += 1;
            }
            majority += counts.values().max().copied().unwrap_or(0);
            total += seg.len();
        }
    }
    let purity = if total == 0 { 1.0 } else { majority as f64 / total as f64 };
    Ok(RecoveryScore { precision, recall, f1, purity })
}

/// Mean and standard error of the pooled boundary F1 when each record's
/// think points are placed uniformly at random, keeping their number.
pub fn random_placement_f1(inferred: &[Vec<u32>], truth: &[Vec<u32>], n_perm: usize, seed: u64) -> Result<(f64, f64)> {
    if inferred.len() != truth.len() || n_perm == 0 {
        return invalid("need matching records and at least one permutation");
    }
    let counts: Vec<usize> = inferred.iter().map(|i| think_points(i).len()).collect();
    let truths: Vec<Vec<usize>> = truth.iter().map(|t| change_points(t)).collect();
    let samples: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(seed, &[rng::tag::EVAL, p as u64]);
            let t = sum_tallies(truth.iter().zip(&counts).zip(&truths).map(|((tr, &c), tp)| {
                let slots = tr.len().saturating_sub(1);
                let mut pred = rand::seq::index::sample(&mut rng, slots, c.min(slots))
                    .into_iter()
                    .map(|i| i + 1)
                    .collect::<Vec<_>>();
                pred.sort_unstable();
                tally(&pred, tp)
            }));
            f1_of(t).2
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_skill_spec() -> SkillSpec {
        SkillSpec {
            n_tokens: 4,
            skills: vec![
                Skill { emission: vec![0.5, 0.5, 0.0, 0.0], duration: vec![0.0, 0.5, 0.5], start: None },
                Skill { emission: vec![0.0, 0.0, 0.5, 0.5], duration: vec![0.2, 0.3, 0.5], start: None },
            ],
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            initial: None,
            n_records: 50,
            length: LengthRange { min: 10, max: 20 },
            rethink: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn one_deterministic_skill_is_constant() {
        let spec = SkillSpec {
            n_tokens: 3,
            skills: vec![Skill { emission: vec![0.0, 1.0, 0.0], duration: vec![0.0, 0.0, 1.0], start: None }],
            transition: vec![vec![1.0]],
            initial: None,
            n_records: 4,
            length: LengthRange { min: 3, max: 3 },
            rethink: 0.0,
            seed: 0,
        };
        let w = gen_corpus(&spec).unwrap();
        for r in &w.corpus.records {
            assert_eq!(r.tokens, vec![1, 1, 1]);
            assert_eq!(r.latents.as_deref(), Some(&[1, 0, 0][..]));
        }
    }

    #[test]
    fn disjoint_supports_recover_skills() {
        let w = gen_corpus(&two_skill_spec()).unwrap();
        for (r, s) in w.corpus.records.iter().zip(&w.skills) {
            for (tok, sk) in r.tokens.iter().zip(s) {
                assert_eq!(*tok as usize / 2, *sk);
            }
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let spec = two_skill_spec();
        assert_eq!(gen_corpus(&spec).unwrap(), gen_corpus(&spec).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = two_skill_spec();
        spec.transition[0] = vec![0.5, 0.6];
        assert!(gen_corpus(&spec).is_err());
        let mut spec = two_skill_spec();
        spec.skills[0].emission.pop();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn recovery_score_extremes() {
        let truth = vec![vec![1, 0, 0, 2, 0, 0, 1, 0]];
        let s = latent_recovery_score(&truth, &truth).unwrap();
        assert_eq!((s.f1, s.purity), (1.0, 1.0));
        let none = vec![vec![1, 0, 0, 0, 0, 0, 0, 0]];
        let s = latent_recovery_score(&none, &truth).unwrap();
        assert_eq!(s.f1, 0.0);
        assert!((s.purity - 5.0 / 8.0).abs() < 1e-12);
        // one step late still counts
        let late = vec![vec![1, 0, 0, 0, 2, 0, 0, 1]];
        assert_eq!(latent_recovery_score(&late, &truth).unwrap().f1, 1.0);
        assert!(latent_recovery_score(&none, &[vec![1, 0]]).is_err());
    }
}
