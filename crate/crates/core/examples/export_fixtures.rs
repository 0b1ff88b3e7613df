//! Writes the reference scenarios as JSON files usable with the CLI.
//!
//! Usage: `cargo run --example export_fixtures [DIR]` (default `fixtures`).

use std::path::PathBuf;

fn main() -> ra3lab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, text) in ra3lab::fixtures::shipped_files()? {
        std::fs::write(dir.join(name), text)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
