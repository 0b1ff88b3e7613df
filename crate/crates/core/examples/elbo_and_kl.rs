//! Exact inference in the latent sequence model: the ELBO under the learned
//! posterior, the exact marginal, the tight exact posterior, and the split of
//! the KL term into an ⟨act⟩ Bernoulli part and a think-entropy part.
//!
//! `cargo run --example elbo_and_kl`

use ra3lab::seq::{elbo, elbo_with, exact_marginal_loglik, exact_posterior, kl_decompose, Corpus, Record, SeqModel};

fn main() -> ra3lab::Result<()> {
    let mut m = SeqModel::new(3, 2, 1, 1, 0.8)?;
    for (i, x) in m.decoder_logits.iter_mut().enumerate() {
        *x = ((i * 37) % 11) as f64 / 4.0 - 1.0;
    }
    for (i, x) in m.posterior_logits.iter_mut().enumerate() {
        *x = ((i * 13) % 7) as f64 / 3.0 - 1.0;
    }
    let corpus = Corpus::new(vec![Record::new(vec![0, 2, 2, 1, 0]), Record::new(vec![1, 1, 2])])?;
    let marginal = exact_marginal_loglik(&m, &corpus)?;
    let loose = elbo(&m, &corpus)?;
    let tight = elbo_with(&m, &corpus, &exact_posterior(&m, &corpus)?)?;
    println!("log p(a)            {marginal:.6}");
    println!("ELBO, learned q     {:.6} (loglik {:.4}, KL {:.4})", loose.elbo, loose.expected_loglik, loose.kl);
    println!("ELBO, exact q       {:.6}", tight.elbo);

    for (row, alpha) in [(vec![0.7, 0.2, 0.1], 0.8), (vec![0.9, 0.1, 0.0], 0.5), (vec![0.6, 0.4, 0.0], 1.0)] {
        let d = kl_decompose(&row, alpha)?;
        println!(
            "q = {row:?}, alpha = {alpha}: KL {:.5} = Bern {:.5} - (1 - q_act) H {:.5} + const {:.5}",
            d.full_kl, d.bern_kl, d.cond_entropy, d.constant
        );
    }
    Ok(())
}
