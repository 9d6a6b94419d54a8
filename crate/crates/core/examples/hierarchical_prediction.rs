//! Two-stage prediction: a category classifier picks one of the four
//! categories, then that category's own classifier picks a fine label among
//! its children only.

use std::collections::BTreeMap;
use std::sync::Arc;

use edos_core::corpus::{stratified_split, LabelHierarchy, LabelSpace, Task};
use edos_core::ensemble::{predict_hierarchical, EnsembleSpec, HierarchicalSpec, Registry};
use edos_core::features::fit_tfidf;
use edos_core::metrics::confusion;
use edos_core::models::{train_linear, train_nb, AdamWConfig, LossSpec, TrainConfig};
use edos_core::pipeline::restrict;
use edos_core::synth::{generate, SynthSpec};

pub fn run_example() -> edos_core::Result<()> {
    let h = Arc::new(LabelHierarchy::canonical());
    let corpus = generate(
        &SynthSpec {
            per_fine_class: 40,
            non_sexist: 0,
            label_noise: 0.05,
            seed: 31,
            ..Default::default()
        },
        h.clone(),
    )?;
    let (train, test) = stratified_split(&corpus, Task::C, 0.25, 31)?;
    let tfidf = Arc::new(fit_tfidf(&train.texts(), 1, true)?);
    let config = TrainConfig {
        loss: LossSpec::FOCAL_DEFAULT,
        epochs: 15,
        optimizer: AdamWConfig {
            lr: 0.05,
            ..Default::default()
        },
        ..Default::default()
    };

    let mut registry = Registry::new();
    let categories = LabelSpace::for_task(&h, Task::B);
    registry.insert(
        "category-focal",
        Arc::new(train_linear(&train, tfidf.clone(), &categories, &config)?),
    );
    registry.insert(
        "category-nb",
        Arc::new(train_nb(&train, tfidf.clone(), &categories, 1.0)?),
    );

    let mut fine = BTreeMap::new();
    for category in h.classes(Task::B) {
        let space = LabelSpace::children_of(&h, category)?;
        let subset = restrict(&train, &space);
        let id = format!("fine:{category}");
        registry.insert(
            id.clone(),
            Arc::new(train_linear(&subset, tfidf.clone(), &space, &config)?),
        );
        fine.insert(category.clone(), EnsembleSpec::soft(&[id.as_str()]));
    }
    let spec = HierarchicalSpec::new(
        h.clone(),
        EnsembleSpec::soft(&["category-focal", "category-nb"]),
        fine,
    )?;
    spec.resolve(&registry)?;

    let mut golds = Vec::new();
    let mut preds = Vec::new();
    for doc in test.documents() {
        let p = predict_hierarchical(&spec, &registry, &doc.text)?;
        assert_eq!(h.parent(&p.fine), Some(p.category.as_str()));
        golds.push(doc.label(Task::C).expect("fine label").to_string());
        preds.push(p.fine);
    }
    let report = confusion(&golds, &preds, h.classes(Task::C))?.report()?;
    println!("{report}");

    let example = &test.documents()[0];
    let p = predict_hierarchical(&spec, &registry, &example.text)?;
    println!(
        "{:?}\n  category {} ({:.3})\n  fine     {} ({:.3})",
        example.text,
        p.category,
        p.category_probs
            .values()
            .iter()
            .cloned()
            .fold(0.0, f64::max),
        p.fine,
        p.fine_probs.values().iter().cloned().fold(0.0, f64::max)
    );
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
