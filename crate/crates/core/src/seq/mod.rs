//! Latent-variable sequence models over finite token alphabets.

pub mod alphabet;
pub mod corpus;
pub mod inference;
pub mod kl;
pub mod model;

pub use alphabet::{effective_alpha, temporal_prior, Latent, LatentAlphabet, ACT, THINK_START};
pub use corpus::{context_index, n_contexts, Corpus, Record};
pub use inference::{
    elbo, elbo_with, exact_marginal_loglik, exact_posterior, greedy_latents, q_marginal_loglik, think_frequency, ElboReport,
    ExactPosterior, PosteriorRows, PriorRows,
};
pub use kl::{kl_decompose, KlDecomposition};
pub use model::{advance, annotated_counts, fit_ntp, DecoderCounts, Encoded, SeqModel, DEFAULT_SMOOTHING};
