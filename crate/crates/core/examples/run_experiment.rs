//! Run the bundled synthetic experiment config end to end.
//!
//! `cargo run --example run_experiment -- <output root>` keeps the run
//! directory; without an argument it goes to a temporary directory.

use std::path::{Path, PathBuf};

use edos_core::pipeline::{run_file, RunOptions};

pub fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic.json")
}

pub fn run_into(root: &Path) -> edos_core::Result<()> {
    let outcome = run_file(
        &config_path(),
        &RunOptions {
            output_root: root.to_path_buf(),
            seed: None,
        },
    )?;
    println!("run directory: {}", outcome.dir.display());
    for d in &outcome.manifest.datasets {
        println!("  dataset {:<10} {:<9} {:>5} rows", d.id, d.op, d.rows);
    }
    for e in &outcome.manifest.ensembles {
        println!("  ensemble {:<8} {:?} {:?}", e.id, e.strategy, e.members);
    }
    for e in &outcome.manifest.evaluations {
        println!(
            "  {:<12} on {:<6} macro-F1 {:.4}",
            e.target, e.dataset, e.macro_f1
        );
    }
    println!(
        "  trained {} models, reused {}",
        outcome.timings.models_trained.len(),
        outcome.timings.models_reused.len()
    );
    Ok(())
}

pub fn run_example() -> edos_core::Result<()> {
    let root = std::env::temp_dir().join(format!("edos-example-run-{}", std::process::id()));
    let result = run_into(&root);
    std::fs::remove_dir_all(&root).ok();
    result
}

fn main() -> edos_core::Result<()> {
    match std::env::args().nth(1) {
        Some(root) => run_into(Path::new(&root)),
        None => run_example(),
    }
}
