//! EM with the exact posterior and closed-form M-step: the ELBO never
//! decreases.
//!
//! `cargo run --example exact_em`

use ra3lab::ra3::exact_em;
use ra3lab::seq::{exact_marginal_loglik, Corpus, Record, SeqModel};

fn main() -> ra3lab::Result<()> {
    let corpus = Corpus::new(vec![
        Record::new(vec![0, 0, 1, 2, 2, 2]),
        Record::new(vec![2, 2, 0, 0, 1]),
        Record::new(vec![1, 2, 2, 0, 0, 0]),
    ])?;
    let mut m = SeqModel::new(3, 2, 1, 1, 0.7)?;
    for (i, x) in m.decoder_logits.iter_mut().enumerate() {
        *x = ((i * 7919) % 13) as f64 / 6.0 - 1.0;
    }
    println!("initial log p(a) {:.5}", exact_marginal_loglik(&m, &corpus)?);
    let (fitted, trace, last) = exact_em(&m, &corpus, 8)?;
    for s in &trace {
        println!("iteration {}: ELBO {:.6} -> after M-step {:.6}", s.iteration, s.elbo, s.elbo_after_m);
    }
    println!("final ELBO {last:.6}, log p(a) {:.5}", exact_marginal_loglik(&fitted, &corpus)?);
    Ok(())
}
