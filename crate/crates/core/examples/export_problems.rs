//! Writes every bundled problem as `<dir>/<name>.json` (default `problems/`).

use std::path::PathBuf;

use bregman_vi::problems::bundled;
use bregman_vi::report::write_atomic;

fn main() -> bregman_vi::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "problems".into()));
    for file in bundled() {
        let name = file.name.clone().unwrap_or_else(|| "problem".into());
        let path = dir.join(format!("{name}.json"));
        let mut text = file.to_json()?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}
