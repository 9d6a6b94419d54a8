//! Evaluate cross-entropy, weighted BCE and focal loss on a few predictions
//! and compare analytic gradients with finite differences.

use edos_core::corpus::weight_from_counts;
use edos_core::models::loss::{loss_from_logits, softmax};
use edos_core::models::{loss_gradient, loss_value, LossSpec, ProbVector};

pub fn run_example() -> edos_core::Result<()> {
    let w = weight_from_counts(14000, 3398).expect("positives present");
    println!("positive weight for 3398 of 14000: {w:.4}");

    let specs = [
        LossSpec::CrossEntropy,
        LossSpec::WeightedBce { weight: w },
        LossSpec::FOCAL_DEFAULT,
    ];
    println!(
        "{:<24} {:>8} {:>8} {:>8}",
        "loss", "p=0.9", "p=0.5", "p=0.1"
    );
    for spec in &specs {
        let row: Vec<String> = [0.9, 0.5, 0.1]
            .iter()
            .map(|&p| {
                let probs = ProbVector::new(vec![1.0 - p, p]).unwrap();
                format!("{:>8.4}", loss_value(spec, &probs, 1).unwrap())
            })
            .collect();
        println!(
            "{:<24} {}",
            spec.name().replace("4.120070629782225", "4.1201"),
            row.join(" ")
        );
    }

    let logits = [0.3, -1.2, 2.0, 0.5];
    let focal = LossSpec::FOCAL_DEFAULT;
    let grad = loss_gradient(&focal, &logits, 2)?;
    let h = 1e-5;
    for (i, g) in grad.iter().enumerate() {
        let mut up = logits;
        let mut down = logits;
        up[i] += h;
        down[i] -= h;
        let numeric =
            (loss_from_logits(&focal, &up, 2)? - loss_from_logits(&focal, &down, 2)?) / (2.0 * h);
        println!("d/dz{i}: analytic {g:+.8}  numeric {numeric:+.8}");
        assert!((g - numeric).abs() < 1e-7);
    }
    println!("softmax: {:?}", softmax(&logits));
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
