//! Semi-MDP value iteration on chain MDPs: a library of four-step options
//! against the primitive left/right actions.
//!
//! `cargo run --example plan_options`

use ra3lab::fixtures::{chain_mdp, chain_options};
use ra3lab::mdp::ActionSpace;
use ra3lab::smdp::{iterate_to_eps, PlanSettings};

fn main() -> ra3lab::Result<()> {
    let eps = 1e-3;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "states", "N options", "bound", "N prims", "bound");
    for states in [10, 15, 20, 40] {
        let mdp = chain_mdp(states, 0.95)?;
        let options = ActionSpace::new(chain_options(&mdp, 4), &mdp)?;
        let o = iterate_to_eps(&mdp, &options, eps, PlanSettings::default())?;
        let p = iterate_to_eps(&mdp, &ActionSpace::primitive(&mdp), eps, PlanSettings::default())?;
        println!("{states:>6} {:>10} {:>10} {:>10} {:>10}", o.iterations, o.bound_n, p.iterations, p.bound_n);
    }
    let mdp = chain_mdp(10, 0.95)?;
    let options = ActionSpace::new(chain_options(&mdp, 4), &mdp)?;
    let o = iterate_to_eps(&mdp, &options, eps, PlanSettings::default())?;
    let ratios: Vec<String> = o.residuals.windows(2).take(5).map(|w| format!("{:.4}", w[1] / w[0])).collect();
    println!("gamma_bar {:.4}; first residual ratios {}", o.gamma_bar, ratios.join(" "));
    Ok(())
}
