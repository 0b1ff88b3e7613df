//! Acceptance criteria 1 to 10: runs each numbered check and prints one
//! PASS/FAIL line per criterion. Exits nonzero if any criterion fails.
//!
//! Built without the libtest harness so the table is always shown.
//! `cargo test --test acceptance -- 3 4` runs a subset.

use ra3lab::verify::{render_table, run_check, N_ACCEPTANCE};

fn main() {
    let ids: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|id| (1..=N_ACCEPTANCE).contains(id))
        .collect();
    let ids = if ids.is_empty() { (1..=N_ACCEPTANCE).collect() } else { ids };
    let mut failed = 0;
    for id in ids {
        let check = run_check(id);
        failed += usize::from(!check.passed);
        print!("criterion {}", render_table(std::slice::from_ref(&check)));
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
