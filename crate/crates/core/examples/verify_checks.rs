//! Runs the numbered checks and prints the pass/fail table, like the
//! `verify` command.
//!
//! `cargo run --release --example verify_checks [ID ...]`

fn main() -> ra3lab::Result<()> {
    let ids: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let checks = ra3lab::verify::run_checks(&ids)?;
    print!("{}", ra3lab::verify::render_table(&checks));
    if checks.iter().any(|c| !c.passed) {
        std::process::exit(1);
    }
    Ok(())
}
