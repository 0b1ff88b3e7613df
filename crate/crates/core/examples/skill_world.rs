//! The synthetic expert world: skills with start tokens and durations,
//! annotated think points, and the oracle model's held-out likelihood.
//!
//! `cargo run --example skill_world`

use ra3lab::fixtures::{held_out_nll, skill_world};
use ra3lab::seq::fit_ntp;
use ra3lab::world::{change_points, gen_corpus, oracle_model};

fn main() -> ra3lab::Result<()> {
    let spec = skill_world(1, 3);
    let world = gen_corpus(&spec)?;
    for r in &world.corpus.records {
        let latents = r.latents.as_deref().unwrap_or_default();
        println!("{} tokens {:?}", r.task_id, &r.tokens[..20]);
        println!("{} thinks {:?}", " ".repeat(r.task_id.len()), &latents[..20]);
        println!("{} skill changes at {:?}", " ".repeat(r.task_id.len()), change_points(latents));
    }

    // the oracle does not model start tokens, so compare on a world without them
    let mut plain = skill_world(2, 200);
    plain.rethink = 0.0;
    plain.skills.iter_mut().for_each(|s| s.start = None);
    let train = gen_corpus(&plain)?.corpus;
    plain.seed = 3;
    let held = gen_corpus(&plain)?.corpus;
    println!(
        "held-out NLL/token: oracle {:.4}, order-1 next-token fit {:.4}",
        held_out_nll(&oracle_model(&plain, 1, 1, 0.9)?, &held)?,
        held_out_nll(&fit_ntp(&train, 1, plain.n_tokens, 0.1)?, &held)?
    );
    Ok(())
}
