//! Latent rollouts along expert trajectories and their step rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{sample_index, softmax};
use crate::seq::{advance, Encoded, Latent, LatentAlphabet, SeqModel, ACT};

/// `log pi(a_t | s_t, z_t) - c 1(z_t is a think)`, or 0 for a malformed think.
pub fn step_reward(log_pi: f64, latent: &Latent, alphabet: &LatentAlphabet, penalty_c: f64) -> f64 {
    match latent {
        Latent::Act => log_pi,
        Latent::Think(_) if latent.id(alphabet).is_none() => 0.0,
        Latent::Think(_) => log_pi - penalty_c,
    }
}

/// One sampled latent chain along an expert trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrappedRecord {
    pub tokens: Vec<u32>,
    pub latents: Vec<Latent>,
    pub rewards: Vec<f64>,
    pub format_ok: Vec<bool>,
    /// Latent id drawn at each step; kept for the score function.
    #[serde(skip)]
    pub draws: Vec<usize>,
    /// Previous active latent at each step.
    #[serde(skip)]
    pub u_prev: Vec<usize>,
    /// Active latent after each step.
    #[serde(skip)]
    pub active: Vec<usize>,
}

impl BootstrappedRecord {
    /// Latent ids for corpus output; malformed thinks are written as ⟨act⟩.
    pub fn latent_ids(&self, alphabet: &LatentAlphabet) -> Vec<u32> {
        self.latents
            .iter()
            .map(|l| l.id(alphabet).unwrap_or(ACT) as u32)
            .collect()
    }

    pub fn n_thinks(&self) -> usize {
        self.latents.iter().filter(|l| l.is_think()).count()
    }
}

/// Samples `z_t ~ q(. | s_t, u_{t-1})` at temperature `temperature` along the
/// trajectory. Drawing ⟨act⟩ emits no think symbols and keeps the active
/// latent; a think is rendered as a symbol string of at most `max_len`
/// symbols. Malformed strings leave the active latent unchanged.
pub fn rollout_latents<R: Rng + ?Sized>(
    model: &SeqModel,
    rec: &Encoded,
    alphabet: &LatentAlphabet,
    temperature: f64,
    penalty_c: f64,
    rng: &mut R,
) -> BootstrappedRecord {
    let n = rec.len();
    let mut out = BootstrappedRecord {
        tokens: rec.tokens.iter().map(|&t| t as u32).collect(),
        latents: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        format_ok: Vec::with_capacity(n),
        draws: Vec::with_capacity(n),
        u_prev: Vec::with_capacity(n),
        active: Vec::with_capacity(n),
    };
    let mut u = ACT;
    for t in 0..n {
        let probs = softmax(model.posterior_logit_row(rec.pctx[t], u), temperature);
        let z = sample_index(&probs, rng);
        let latent = if z == ACT { Latent::Act } else { Latent::Think(alphabet.render(z)) };
        let parsed = latent.id(alphabet);
        out.u_prev.push(u);
        u = advance(u, parsed.unwrap_or(ACT));
        let log_pi = model.decoder_log_row(rec.dctx[t], u)[rec.tokens[t]];
        out.rewards.push(step_reward(log_pi, &latent, alphabet, penalty_c));
        out.format_ok.push(parsed.is_some());
        out.latents.push(latent);
        out.draws.push(z);
        out.active.push(u);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::Record;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_examples() {
        let a = LatentAlphabet::new(2, 16).unwrap();
        let lp = 0.5f64.ln();
        assert!((step_reward(lp, &Latent::Act, &a, 0.05) - (-std::f64::consts::LN_2)).abs() < 1e-12);
        let think = Latent::Think(a.render(1));
        assert!((step_reward(lp, &think, &a, 0.05) - (lp - 0.05)).abs() < 1e-15);
        assert_eq!(step_reward(lp, &Latent::Think(vec![1]), &a, 0.05), 0.0);
    }

    #[test]
    fn point_mass_posteriors() {
        let a = LatentAlphabet::new(2, 16).unwrap();
        let mut m = SeqModel::new(3, 2, 1, 1, 0.9).unwrap();
        let rec = m.encode(&Record::new(vec![0, 1, 2, 1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.set_posterior_point_mass(ACT).unwrap();
        let r = rollout_latents(&m, &rec, &a, 1.0, 0.05, &mut rng);
        assert!(r.latents.iter().all(|l| *l == Latent::Act));
        m.set_posterior_point_mass(2).unwrap();
        let r = rollout_latents(&m, &rec, &a, 1.0, 0.05, &mut rng);
        assert!(r.latents.iter().all(|l| l.id(&a) == Some(2)));
    }

    #[test]
    fn truncated_thinks_are_flagged() {
        let a = LatentAlphabet::new(2, 1).unwrap();
        let mut m = SeqModel::new(3, 2, 0, 0, 0.9).unwrap();
        m.set_posterior_point_mass(1).unwrap();
        let rec = m.encode(&Record::new(vec![0, 1])).unwrap();
        let r = rollout_latents(&m, &rec, &a, 1.0, 0.05, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(r.format_ok, vec![false, false]);
        assert_eq!(r.rewards, vec![0.0, 0.0]);
        assert_eq!(r.latent_ids(&a), vec![0, 0]);
    }
}
