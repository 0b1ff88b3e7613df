//! Splitting the post-training regret of a policy into the error caused by
//! pruning the action space and the error of RL inside the pruned space.
//!
//! `cargo run --example regret_split`

use ra3lab::fixtures::pruning_lab;
use ra3lab::mdp::StochasticPolicy;

fn main() -> ra3lab::Result<()> {
    let lab = pruning_lab()?;
    let subsets: [&[u32]; 3] = [&[0, 1, 2], &[0, 1, 3], &[0, 3, 4]];
    for subset in subsets {
        let uniform = StochasticPolicy::uniform(subset.to_vec(), 1);
        let greedy = StochasticPolicy::deterministic(subset.to_vec(), &[0]);
        for (name, pi) in [("uniform", uniform), ("first arm", greedy)] {
            let d = lab.regret_decompose(subset, &pi)?;
            println!(
                "Z' = {subset:?}, {name:<9}: regret {:.4} = pruning {:.4} + RL {:.4}",
                d.total_regret, d.pruning_error, d.rl_error
            );
        }
    }
    Ok(())
}
