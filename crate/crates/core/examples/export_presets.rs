//! Writes the built-in inequalities to `presets/` in the sparse JSON format.
//!
//! Usage: `cargo run -p diqkd-core --example export_presets [DIR]`

use std::path::PathBuf;

use diqkd::bell::{build_named, inequality_to_json};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "presets".into()));
    std::fs::create_dir_all(&dir)?;
    for name in ["chsh", "chained3", "cglmp3"] {
        let mut text = inequality_to_json(&build_named(name)?);
        text.push('\n');
        std::fs::write(dir.join(format!("{name}.json")), text)?;
    }
    Ok(())
}
