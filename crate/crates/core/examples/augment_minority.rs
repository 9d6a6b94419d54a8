//! Grow a minority category with pool documents that resemble it.
//!
//! Every pool document gets the mean cosine similarity of its TF-IDF vector
//! to the class's existing documents; those above the threshold are copied
//! in under the target label.

use std::sync::Arc;

use edos_core::augment::{apply_augmentation, score_candidates, AugmentPlan, Verdict};
use edos_core::corpus::{class_stats, LabelHierarchy, Task};
use edos_core::features::{fit_tfidf, EmbeddingTable};
use edos_core::synth::{generate, SynthSpec};

const TARGET: &str = "threats, plans to harm and incitement";

pub fn run_example() -> edos_core::Result<()> {
    let h = Arc::new(LabelHierarchy::canonical());
    let base = generate(
        &SynthSpec {
            name: "base".into(),
            id_prefix: "b".into(),
            per_fine_class: 12,
            non_sexist: 0,
            decorate: false,
            seed: 3,
            ..Default::default()
        },
        h.clone(),
    )?;
    let pool = generate(
        &SynthSpec {
            name: "pool".into(),
            source: "pool".into(),
            id_prefix: "p".into(),
            per_fine_class: 6,
            non_sexist: 20,
            fine_labels: false,
            decorate: false,
            seed: 4,
            ..Default::default()
        },
        h.clone(),
    )?;

    let texts: Vec<&str> = base.texts().into_iter().chain(pool.texts()).collect();
    let tfidf = fit_tfidf(&texts, 1, true)?;
    let embeddings = EmbeddingTable::from_tfidf(
        &tfidf,
        base.documents()
            .iter()
            .chain(pool.documents())
            .map(|d| (d.id.as_str(), d.text.as_str())),
    )?;

    let plan = AugmentPlan::from_base(&base, Task::B, TARGET, pool).with_threshold(0.15);
    let scores = score_candidates(&plan, &embeddings)?;
    println!("{:<10} {:>7}  {:<40} verdict", "id", "score", "origin");
    for s in scores.iter().take(12) {
        println!(
            "{:<10} {:>7.4}  {:<40} {:?}",
            s.id,
            s.score,
            s.origin_label.as_deref().unwrap_or("-"),
            s.verdict
        );
    }
    let admitted: Vec<_> = scores
        .iter()
        .filter(|s| s.verdict == Verdict::Admitted)
        .collect();
    let on_target = admitted
        .iter()
        .filter(|s| s.origin_label.as_deref() == Some(TARGET))
        .count();
    println!(
        "admitted {} of {} ({} from the target category)",
        admitted.len(),
        scores.len(),
        on_target
    );

    let before = class_stats(&base, Task::B)?;
    let grown = apply_augmentation(&base, &plan, &embeddings)?;
    let after = class_stats(&grown, Task::B)?;
    println!(
        "{TARGET}: {} -> {}",
        before.count(TARGET),
        after.count(TARGET)
    );
    assert_eq!(after.count(TARGET), before.count(TARGET) + admitted.len());
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
