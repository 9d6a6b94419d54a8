//! Generate the bundled synthetic corpora.
//!
//! `cargo run --example synthetic_data -- <dir>` writes them into `<dir>`
//! (the crate's `data/` directory by default).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use edos_core::corpus::{class_stats, save_csv, Dataset, LabelHierarchy, Task};
use edos_core::synth::{generate, SynthSpec};

/// Main corpus: every label layer, some label noise.
pub fn main_corpus(h: Arc<LabelHierarchy>) -> edos_core::Result<Dataset> {
    generate(
        &SynthSpec {
            name: "edos".into(),
            source: "edos".into(),
            id_prefix: "edos".into(),
            per_fine_class: 30,
            non_sexist: 990,
            label_noise: 0.15,
            confusion: 0.3,
            keywords_per_doc: 1,
            seed: 1,
            ..Default::default()
        },
        h,
    )
}

/// Second source: binary labels plus an origin category, sexist-heavy.
pub fn external_corpus(h: Arc<LabelHierarchy>) -> edos_core::Result<Dataset> {
    generate(
        &SynthSpec {
            name: "exist".into(),
            source: "exist".into(),
            id_prefix: "exist".into(),
            per_fine_class: 50,
            non_sexist: 100,
            fine_labels: false,
            confusion: 0.3,
            keywords_per_doc: 1,
            seed: 2,
            ..Default::default()
        },
        h,
    )
}

pub fn write_all(dir: &Path) -> edos_core::Result<Vec<PathBuf>> {
    let h = Arc::new(LabelHierarchy::canonical());
    let mut written = Vec::new();
    for d in [main_corpus(h.clone())?, external_corpus(h.clone())?] {
        let path = dir.join(format!("{}_synthetic.csv", d.name()));
        save_csv(&d, &path)?;
        written.push(path);
    }
    let path = dir.join("hierarchy.json");
    std::fs::write(&path, serde_json::to_string_pretty(&*h).unwrap() + "\n")
        .map_err(|e| edos_core::Error::io("writing hierarchy", e))?;
    written.push(path);
    Ok(written)
}

pub fn run_example() -> edos_core::Result<()> {
    let tmp = std::env::temp_dir().join(format!("edos-synthetic-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).map_err(|e| edos_core::Error::io("creating temp dir", e))?;
    let files = write_all(&tmp)?;
    let h = Arc::new(LabelHierarchy::canonical());
    let main = edos_core::corpus::read_dataset(&files[0], h)?;
    println!("{}", class_stats(&main, Task::A)?);
    println!("{}", class_stats(&main, Task::B)?);
    std::fs::remove_dir_all(&tmp).ok();
    Ok(())
}

fn main() -> edos_core::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data"));
    for path in write_all(&dir)? {
        println!("wrote {}", path.display());
    }
    run_example()
}
