//! Pruning an eight-action universe from sampled expert tasks, with the
//! sample size set by the union-bound formula.
//!
//! `cargo run --release --example prune_demos`

use ra3lab::fixtures::pruning_lab;
use ra3lab::pruning::{calibrate_constant, run_sample_complexity, sample_complexity, SampleComplexityConfig};

fn main() -> ra3lab::Result<()> {
    let lab = pruning_lab()?;
    let (eps, sigma, delta) = (0.1, 0.5, 0.1);
    let (z_bar, witness) = lab.min_eps_subset_size(eps)?;
    println!("smallest eps-optimal subset: {witness:?} (size {z_bar})");
    println!("(eps, sigma)-suboptimal actions: {:?}", lab.suboptimal_actions(eps, sigma)?);

    let base = SampleComplexityConfig { eps, sigma, delta, constant: 1.0, replications: 500, seed: 5 };
    let grid = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0];
    for c in grid {
        let n = sample_complexity(z_bar, 8.0, delta, sigma, c)?;
        let rep = run_sample_complexity(&lab, &SampleComplexityConfig { constant: c, ..base.clone() })?;
        println!("constant {c:>4}: n = {n:>3}, suboptimal survival {:.3}", rep.survival_rate);
    }
    let c = calibrate_constant(&lab, &base, &grid)?;
    let rep = run_sample_complexity(&lab, &SampleComplexityConfig { constant: c, ..base })?;
    println!(
        "calibrated constant {c}: survival {:.3} <= {:.3}, worst pruning error {:.2e}",
        rep.survival_rate, rep.threshold, rep.max_pruning_error
    );
    Ok(())
}
