//! KL between a posterior row and the sticky prior, split into an ⟨act⟩
//! Bernoulli part and a think-entropy part.

use serde::{Deserialize, Serialize};

use super::alphabet::{effective_alpha, temporal_prior, ACT};
use crate::error::{invalid, Result};
use crate::numeric::entropy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlDecomposition {
    /// `KL(q || p)` summed atom by atom; `+inf` on support mismatch.
    pub full_kl: f64,
    /// `KL(Bern(q_act) || Bern(alpha'))`.
    pub bern_kl: f64,
    /// Entropy of q restricted to think latents and renormalized.
    pub cond_entropy: f64,
    /// `(1 - q_act) log |think latents|`.
    pub constant: f64,
    /// Entropy of the whole row.
    pub full_entropy: f64,
    pub alpha_eff: f64,
}

impl KlDecomposition {
    /// `bern_kl - (1 - q_act) cond_entropy + constant`.
    pub fn recombined(&self, q_act: f64) -> f64 {
        self.bern_kl - (1.0 - q_act) * self.cond_entropy + self.constant
    }

    pub fn is_infinite(&self) -> bool {
        self.full_kl.is_infinite()
    }
}

fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}

pub fn kl_decompose(q_row: &[f64], alpha: f64) -> Result<KlDecomposition> {
    let size = q_row.len();
    let p = temporal_prior(alpha, size)?;
    if q_row.iter().any(|x| !(*x >= 0.0)) || (q_row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("q row must be a probability vector");
    }
    let a = effective_alpha(alpha, size);
    let q_act = q_row[ACT];
    let full_kl = q_row.iter().zip(&p).map(|(&q, &pp)| xlogy_ratio(q, pp)).sum();
    let bern_kl = xlogy_ratio(q_act, a) + xlogy_ratio(1.0 - q_act, 1.0 - a);
    let think_mass = 1.0 - q_act;
    let n_think = size - 1;
    let cond_entropy = if think_mass > 0.0 {
        let cond: Vec<f64> = q_row[1..].iter().map(|q| q / think_mass).collect();
        entropy(&cond)
    } else {
        0.0
    };
    let constant = if n_think == 0 || think_mass == 0.0 { 0.0 } else { think_mass * (n_think as f64).ln() };
    Ok(KlDecomposition {
        full_kl,
        bern_kl,
        cond_entropy,
        constant,
        full_entropy: entropy(q_row),
        alpha_eff: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_row_has_zero_kl() {
        let p = temporal_prior(0.8, 5).unwrap();
        let d = kl_decompose(&p, 0.8).unwrap();
        assert!(d.full_kl.abs() < 1e-15);
        assert!(d.recombined(p[0]).abs() < 1e-15);
    }

    #[test]
    fn half_act_uniform_thinks() {
        let q = [0.5, 0.125, 0.125, 0.125, 0.125];
        let d = kl_decompose(&q, 0.8).unwrap();
        let direct = 0.5 * (0.5f64 / 0.84).ln() + 4.0 * 0.125 * (0.125f64 / 0.04).ln();
        assert!((d.full_kl - direct).abs() < 1e-12);
        assert!((d.recombined(0.5) - direct).abs() < 1e-12);
        assert!((d.cond_entropy - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unit_alpha_is_infinite_unless_all_act() {
        let d = kl_decompose(&[0.9, 0.1], 1.0).unwrap();
        assert!(d.is_infinite() && d.bern_kl.is_infinite());
        assert_eq!(kl_decompose(&[1.0, 0.0], 1.0).unwrap().full_kl, 0.0);
    }
}
