//! Writes the bundled fixture files under a data directory.
//!
//! Usage: `cargo run --example generate_fixtures [-- <data dir>]`

use std::path::PathBuf;

use dextransfer::fixtures::{bundled_configs, demos, hands};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    for sub in ["hands", "demos", "configs"] {
        std::fs::create_dir_all(root.join(sub))?;
    }
    for (name, hand) in hands::bundled_hands() {
        std::fs::write(
            root.join("hands").join(format!("{name}.json")),
            hand.to_json(),
        )?;
    }
    for (name, demo) in demos::bundled_demos() {
        demo.save(root.join("demos").join(format!("{name}.json")))?;
    }
    for (name, cfg) in bundled_configs() {
        std::fs::write(
            root.join("configs").join(format!("{name}.json")),
            cfg.to_json(),
        )?;
    }
    println!("wrote fixtures to {}", root.display());
    Ok(())
}
