//! EM mid-training on the skill world: think latents are placed by a
//! policy-gradient E-step and imitated by the M-step. Compares held-out
//! likelihood with next-token fitting and scores boundary recovery.
//!
//! `cargo run --release --example ra3_midtraining [PENALTY]`

use ra3lab::fixtures::{held_out_nll, world_ntp, world_ra3, world_split};
use ra3lab::seq::greedy_latents;
use ra3lab::world::{latent_recovery_score, random_placement_f1};

fn main() -> ra3lab::Result<()> {
    let c: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.05);
    let split = world_split(0)?;
    let run = world_ra3(&split, 0, c, 0.95)?;
    for it in &run.report.iterations {
        println!(
            "iteration {}: ELBO/token {:.4}, think frequency {:.4}, held-out NLL {:.4}",
            it.iteration,
            it.elbo,
            it.think_frequency,
            it.held_out_nll.unwrap_or(f64::NAN)
        );
    }
    let held = &split.held_out.corpus;
    println!("next-token baseline held-out NLL {:.4}", held_out_nll(&world_ntp(&split)?, held)?);
    let inferred = greedy_latents(&run.model, held)?;
    let truth: Vec<Vec<u32>> = held.records.iter().map(|r| r.latents.clone().unwrap_or_default()).collect();
    let score = latent_recovery_score(&inferred, &truth)?;
    let (random, _) = random_placement_f1(&inferred, &truth, 50, 0)?;
    println!(
        "boundary F1 {:.3} (precision {:.3}, recall {:.3}); random placement {:.3}",
        score.f1, score.precision, score.recall, random
    );
    Ok(())
}
