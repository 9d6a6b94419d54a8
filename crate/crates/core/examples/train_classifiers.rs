//! Train the binary classifier roster on an imbalanced corpus and compare
//! cross-entropy, class-weighted BCE, focal loss and Naive Bayes on a
//! stratified holdout.

use std::sync::Arc;

use edos_core::corpus::{
    imbalance_weight, stratified_split, Dataset, LabelHierarchy, LabelSpace, Task, SEXIST,
};
use edos_core::features::fit_tfidf;
use edos_core::metrics::ConfusionMatrix;
use edos_core::models::{
    train_linear_tracked, train_nb, AdamWConfig, Classifier, LossSpec, TrainConfig,
};
use edos_core::synth::{generate, SynthSpec};

fn evaluate(model: &dyn Classifier, data: &Dataset) -> edos_core::Result<ConfusionMatrix> {
    let space = model.label_space();
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    for doc in data.documents() {
        if let Some(g) = space.label_of(doc) {
            golds.push(g);
            preds.push(model.predict(&doc.text));
        }
    }
    ConfusionMatrix::from_indices(&golds, &preds, space.classes.clone())
}

pub fn run_example() -> edos_core::Result<()> {
    let h = Arc::new(LabelHierarchy::canonical());
    let corpus = generate(
        &SynthSpec {
            per_fine_class: 15,
            non_sexist: 500,
            confusion: 0.3,
            keywords_per_doc: 1,
            seed: 11,
            ..Default::default()
        },
        h.clone(),
    )?;
    let (train, holdout) = stratified_split(&corpus, Task::A, 0.25, 11)?;
    let (fit, dev) = stratified_split(&train, Task::A, 0.2, 12)?;
    let tfidf = Arc::new(fit_tfidf(&fit.texts(), 1, true)?);
    let space = LabelSpace::for_task(&h, Task::A);
    let w = imbalance_weight(&fit, Task::A, SEXIST)?;

    let losses = [
        LossSpec::CrossEntropy,
        LossSpec::WeightedBce { weight: 1.0 },
        LossSpec::WeightedBce { weight: w },
        LossSpec::FOCAL_DEFAULT,
    ];
    println!(
        "{:<28} {:>6} {:>9} {:>9} {:>14}",
        "model", "epoch", "macro-F1", "accuracy", "sexist recall"
    );
    for loss in losses {
        let config = TrainConfig {
            loss,
            epochs: 12,
            optimizer: AdamWConfig {
                lr: 0.05,
                ..Default::default()
            },
            seed: 1,
            ..Default::default()
        };
        let outcome = train_linear_tracked(&fit, tfidf.clone(), &space, &config, Some(&dev))?;
        let report = evaluate(&outcome.model, &holdout)?.report()?;
        println!(
            "{:<28} {:>6} {:>9.4} {:>9.4} {:>14.4}",
            loss.name().replace(&w.to_string(), &format!("{w:.3}")),
            outcome.chosen_epoch,
            report.macro_avg.f1,
            report.accuracy,
            report.class(SEXIST).expect("binary report").recall
        );
        assert!(outcome.epoch_losses.iter().all(|l| l.is_finite()));
    }

    let nb = train_nb(&fit, tfidf, &space, 1.0)?;
    let report = evaluate(&nb, &holdout)?.report()?;
    println!(
        "{:<28} {:>6} {:>9.4} {:>9.4} {:>14.4}",
        "naive_bayes",
        "-",
        report.macro_avg.f1,
        report.accuracy,
        report.class(SEXIST).expect("binary report").recall
    );
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
