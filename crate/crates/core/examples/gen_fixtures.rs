//! Regenerate the experiment catalog: `cargo run -p tplrag-core --example gen_fixtures [out_dir]`.

use std::path::PathBuf;

use tplrag_core::eval::experiment_catalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog"));
    std::fs::create_dir_all(&out)?;
    let templates = experiment_catalog(20)?;
    for t in &templates {
        std::fs::write(out.join(&t.source_path), &t.raw_document)?;
    }
    println!("wrote {} templates to {}", templates.len(), out.display());
    Ok(())
}
