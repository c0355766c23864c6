//! Regenerates the application fixtures under `fixtures/` from their
//! parameterised builders.
//!
//! Run with `cargo run --example write_fixtures -- <fixtures dir>`.

use repfreq::apps::{build_stage_game, AppParams};
use repfreq::game::emit_game;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let games = [
        (
            "product_choice.json",
            AppParams::Product2 {
                gamma: 0.5,
                ch: 0.4,
                cl: 0.2,
            },
        ),
        (
            "product3.json",
            AppParams::Product3 {
                g1: 0.6,
                g2: 0.4,
                p: 0.5,
                c: 0.5,
            },
        ),
        (
            "entry_deterrence.json",
            AppParams::Entry {
                gamma: 0.6,
                co: 0.5,
                ci: 0.3,
                subsidy: 0.0,
            },
        ),
        ("fiscal.json", AppParams::Fiscal { tau: 0.3, c: 0.2 }),
    ];
    for (name, params) in games {
        let path = dir.join(name);
        std::fs::write(&path, emit_game(&build_stage_game(&params)?) + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
