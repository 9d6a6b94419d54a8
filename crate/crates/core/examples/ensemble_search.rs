//! Find the best soft-voting ensemble of each size on a validation set,
//! then use it for prediction.

use std::sync::Arc;

use edos_core::corpus::{stratified_split, LabelHierarchy, LabelSpace, Task};
use edos_core::ensemble::{
    predict_ensemble, render_search_text, search_subsets, EnsembleSpec, PredictionCache,
    PredictionMatrix, Registry, Strategy,
};
use edos_core::features::fit_tfidf;
use edos_core::models::{train_linear, train_nb, AdamWConfig, LossSpec, TrainConfig};
use edos_core::pipeline::best_overall;
use edos_core::synth::{generate, SynthSpec};

pub fn run_example() -> edos_core::Result<()> {
    let h = Arc::new(LabelHierarchy::canonical());
    let corpus = generate(
        &SynthSpec {
            per_fine_class: 12,
            non_sexist: 400,
            confusion: 0.4,
            keywords_per_doc: 1,
            label_noise: 0.1,
            seed: 21,
            ..Default::default()
        },
        h.clone(),
    )?;
    let (train, validation) = stratified_split(&corpus, Task::A, 0.3, 21)?;
    let space = LabelSpace::for_task(&h, Task::A);
    let words = Arc::new(fit_tfidf(&train.texts(), 1, true)?);
    let frequent = Arc::new(fit_tfidf(&train.texts(), 3, true)?);

    let mut registry = Registry::new();
    for (id, loss, epochs) in [
        ("ce", LossSpec::CrossEntropy, 3),
        ("wbce", LossSpec::WeightedBce { weight: 3.0 }, 3),
        ("focal", LossSpec::FOCAL_DEFAULT, 6),
        ("focal-long", LossSpec::FOCAL_DEFAULT, 20),
    ] {
        let config = TrainConfig {
            loss,
            epochs,
            optimizer: AdamWConfig {
                lr: 0.05,
                ..Default::default()
            },
            seed: 2,
            ..Default::default()
        };
        registry.insert(
            id,
            Arc::new(train_linear(&train, words.clone(), &space, &config)?),
        );
    }
    registry.insert("nb", Arc::new(train_nb(&train, words, &space, 1.0)?));
    registry.insert(
        "nb-frequent",
        Arc::new(train_nb(&train, frequent, &space, 0.5)?),
    );

    let ids: Vec<String> = registry.ids().map(String::from).collect();
    let cache = PredictionCache::new();
    let matrix = PredictionMatrix::evaluate(&registry, &ids, &validation, &cache)?;
    for strategy in [Strategy::Soft, Strategy::Hard] {
        let rows = search_subsets(&matrix, strategy)?;
        println!("{strategy:?} voting\n{}", render_search_text(&rows));
    }
    println!("validation passes: {}", cache.misses());

    let best = search_subsets(&matrix, Strategy::Soft)?;
    let top = best_overall(&best);
    let members: Vec<&str> = top.members.iter().map(String::as_str).collect();
    let spec = EnsembleSpec::soft(&members);
    let text = validation.documents()[0].text.as_str();
    let p = predict_ensemble(&spec, &registry, text)?;
    println!("{text:?} -> {} {:?}", p.label, p.probs.values());
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
