//! Precision, recall and F1 per class plus accuracy and macro/weighted
//! averages, from either raw predictions or a confusion matrix.

use edos_core::metrics::{confusion, ConfusionMatrix};

pub fn run_example() -> edos_core::Result<()> {
    let classes = vec!["not sexist".to_string(), "sexist".to_string()];
    // 4000 test rows: 3019 gold not sexist, 981 gold sexist.
    let cm = ConfusionMatrix::from_counts(classes.clone(), vec![vec![2773, 246], vec![233, 748]])?;
    let report = cm.report()?;
    println!("{report}");
    println!("macro-F1 {:.4}", report.macro_avg.f1);

    let golds = ["sexist", "sexist", "sexist", "not sexist"];
    let preds = ["sexist", "sexist", "sexist", "sexist"];
    let small = confusion(&golds, &preds, &classes)?;
    let r = small.report()?;
    println!("{r}");
    let mut csv = Vec::new();
    small.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    println!("{}", r.to_json());
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
