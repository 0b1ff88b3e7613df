//! GRPO post-training on skill-composition tasks from two priors: the
//! mid-trained latent model and a next-token fit of the same corpus.
//!
//! `cargo run --release --example grpo_posttraining [SEEDS]`

use ra3lab::fixtures::{world_grpo_config, world_ntp, world_ra3, world_split, world_tasks};
use ra3lab::rlvr::{run_rlvr, success_probability, updates_to_reach};

fn main() -> ra3lab::Result<()> {
    let seeds: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let split = world_split(0)?;
    let ra3 = world_ra3(&split, 0, 0.05, 0.95)?.model;
    let ntp = world_ntp(&split)?;
    let tasks = world_tasks()?;
    for t in &tasks {
        println!(
            "task {}: initial success RA3 {:.3}, next-token {:.3}",
            t.id,
            success_probability(&ra3, t),
            success_probability(&ntp, t)
        );
    }
    let cfg = world_grpo_config();
    let report = run_rlvr(&[("ra3".into(), ra3), ("ntp".into(), ntp)], &tasks, &cfg, seeds)?;
    for s in 0..seeds as u64 {
        let (a, b) = (report.curve("ra3", s), report.curve("ntp", s));
        println!(
            "seed {s}: updates to 0.9 RA3 {:>3}, next-token {:>3}; reward at update 20: {:.3} vs {:.3}",
            updates_to_reach(&a, 0.9),
            updates_to_reach(&b, 0.9),
            a[20.min(a.len() - 1)],
            b[20.min(b.len() - 1)]
        );
    }
    Ok(())
}
