//! Latent alphabet: the reserved ⟨act⟩ latent plus `n_think` think latents.
//!
//! Latent ids are `0` for ⟨act⟩ and `1..=n_think` for think latents. A think
//! latent is rendered as a short string of think symbols that must begin with
//! [`THINK_START`]; symbol `k` in second position names latent `k`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const ACT: usize = 0;

/// Reserved first symbol of every well-formed think string.
pub const THINK_START: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentAlphabet {
    pub n_think: usize,
    /// Maximum think-string length in symbols.
    pub max_len: usize,
}

impl LatentAlphabet {
    pub fn new(n_think: usize, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return invalid("maximum latent length must be at least 1");
        }
        Ok(LatentAlphabet { n_think, max_len })
    }

    /// Number of latents including ⟨act⟩.
    pub fn size(&self) -> usize {
        self.n_think + 1
    }

    pub fn think_ids(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n_think
    }

    /// Symbol string for a latent id: empty for ⟨act⟩, truncated to
    /// `max_len` symbols otherwise.
    pub fn render(&self, z: usize) -> Vec<u32> {
        if z == ACT {
            return Vec::new();
        }
        let mut s = vec![THINK_START, z as u32];
        s.truncate(self.max_len);
        s
    }

    /// Latent named by a think string, or `None` if it is malformed.
    pub fn parse(&self, symbols: &[u32]) -> Option<usize> {
        match symbols {
            [THINK_START, k] if (1..=self.n_think as u32).contains(k) => Some(*k as usize),
            _ => None,
        }
    }
}

/// A sampled latent: ⟨act⟩ or a think string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Latent {
    Act,
    Think(Vec<u32>),
}

impl Latent {
    pub fn is_think(&self) -> bool {
        matches!(self, Latent::Think(_))
    }

    /// Latent id if well formed; malformed think strings map to `None`.
    pub fn id(&self, alphabet: &LatentAlphabet) -> Option<usize> {
        match self {
            Latent::Act => Some(ACT),
            Latent::Think(s) => alphabet.parse(s),
        }
    }

    pub fn symbol_len(&self) -> usize {
        match self {
            Latent::Act => 0,
            Latent::Think(s) => s.len(),
        }
    }
}

/// Sticky prior over `size` latents after re-encoding "repeat the previous
/// latent" as ⟨act⟩: `p(act) = alpha + (1-alpha)/size`, every think latent
/// `(1-alpha)/size`.
pub fn temporal_prior(alpha: f64, size: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return invalid("alpha must lie in [0,1]");
    }
    if size == 0 {
        return invalid("latent alphabet must be nonempty");
    }
    let share = (1.0 - alpha) / size as f64;
    let mut p = vec![share; size];
    p[ACT] = alpha + share;
    Ok(p)
}

/// `alpha' = p(act)` under [`temporal_prior`].
pub fn effective_alpha(alpha: f64, size: usize) -> f64 {
    alpha + (1.0 - alpha) / size as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_examples() {
        assert_eq!(temporal_prior(1.0, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(temporal_prior(0.0, 4).unwrap(), vec![0.25; 4]);
        let p = temporal_prior(0.8, 5).unwrap();
        assert!((p[0] - 0.84).abs() < 1e-15);
        assert!(p[1..].iter().all(|x| (x - 0.04).abs() < 1e-15));
        assert!(temporal_prior(1.5, 3).is_err());
    }

    #[test]
    fn render_and_parse_round_trip() {
        let a = LatentAlphabet::new(3, 16).unwrap();
        assert!(a.render(ACT).is_empty());
        for k in a.think_ids() {
            assert_eq!(a.parse(&a.render(k)), Some(k));
        }
        assert_eq!(a.parse(&[2]), None);
        assert_eq!(a.parse(&[THINK_START, 4]), None);
        let short = LatentAlphabet::new(3, 1).unwrap();
        assert_eq!(short.parse(&short.render(2)), None);
    }
}
