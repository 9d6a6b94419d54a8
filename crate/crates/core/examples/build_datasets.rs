//! Build dataset variants the way the experiments do: merge two sources,
//! balance the binary task without dropping protected rows, split off a
//! stratified holdout and print class distributions along the way.

use std::sync::Arc;

use edos_core::corpus::{
    balance_binary, class_stats, imbalance_weight, merge, stratified_split, LabelHierarchy, Task,
    SEXIST,
};
use edos_core::synth::{generate, SynthSpec};

pub fn run_example() -> edos_core::Result<()> {
    let h = Arc::new(LabelHierarchy::canonical());
    let main = generate(
        &SynthSpec {
            name: "main".into(),
            source: "main".into(),
            id_prefix: "m".into(),
            per_fine_class: 10,
            non_sexist: 330,
            seed: 1,
            ..Default::default()
        },
        h.clone(),
    )?;
    let external = generate(
        &SynthSpec {
            name: "external".into(),
            source: "external".into(),
            id_prefix: "x".into(),
            per_fine_class: 30,
            non_sexist: 40,
            fine_labels: false,
            seed: 2,
            ..Default::default()
        },
        h.clone(),
    )?;

    let (train, holdout) = stratified_split(&main, Task::A, 0.2, 5)?;
    println!("A1 train:\n{}", class_stats(&train, Task::A)?);
    println!("holdout:\n{}", class_stats(&holdout, Task::A)?);
    println!(
        "positive weight on A1: {:.4}",
        imbalance_weight(&train, Task::A, SEXIST)?
    );

    let merged = merge(&[train.clone(), external])?.renamed("A2");
    println!("A2 merged:\n{}", class_stats(&merged, Task::A)?);

    let balanced = balance_binary(&merged, Task::A, "main", 5)?.renamed("A3");
    let stats = class_stats(&balanced, Task::A)?;
    println!("A3 balanced:\n{stats}");
    assert_eq!(stats.counts[0], stats.counts[1]);
    let kept = balanced
        .documents()
        .iter()
        .filter(|d| d.source == "main")
        .count();
    assert_eq!(kept, train.len());

    println!("B1 categories:\n{}", class_stats(&train, Task::B)?);
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
