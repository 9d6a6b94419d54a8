//! Confusion matrices and classification reports.
//!
//! Undefined ratios (no predictions or no gold samples for a class) are
//! reported as 0 and flagged, following the competition convention.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are gold labels, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::Precondition(
                "a confusion matrix needs at least 2 classes".into(),
            ));
        }
        if counts.len() != classes.len() || counts.iter().any(|r| r.len() != classes.len()) {
            return Err(Error::ShapeMismatch("confusion matrix must be K×K".into()));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn from_indices(golds: &[usize], preds: &[usize], classes: Vec<String>) -> Result<Self> {
        if golds.len() != preds.len() {
            return Err(Error::LengthMismatch {
                left: golds.len(),
                right: preds.len(),
            });
        }
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (&g, &p) in golds.iter().zip(preds) {
            if g >= k || p >= k {
                return Err(Error::UnknownLabel(g.max(p).to_string()));
            }
            counts[g][p] += 1;
        }
        ConfusionMatrix::from_counts(classes, counts)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn macro_f1(&self) -> Result<f64> {
        Ok(self.report()?.macro_avg.f1)
    }

    pub fn report(&self) -> Result<Report> {
        report(self)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["gold \\ predicted".to_string()];
        header.extend(self.classes.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()
            .map_err(|e| Error::io("writing confusion matrix", e))?;
        Ok(())
    }
}

/// Tally gold/predicted label pairs over `classes`.
pub fn confusion<S: AsRef<str>>(
    golds: &[S],
    preds: &[S],
    classes: &[String],
) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::LengthMismatch {
            left: golds.len(),
            right: preds.len(),
        });
    }
    let index = |label: &str| {
        classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    };
    let g = golds
        .iter()
        .map(|s| index(s.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let p = preds
        .iter()
        .map(|s| index(s.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_indices(&g, &p, classes.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Precision, recall or F1 had a zero denominator.
    pub undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<Report> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = cm.classes.len();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let support: u64 = cm.counts[c].iter().sum();
            let predicted: u64 = cm.counts.iter().map(|r| r[c]).sum();
            let (precision, p_undef) = ratio(tp, predicted);
            let (recall, r_undef) = ratio(tp, support);
            // harmonic mean of precision and recall, from counts
            let f1 = if tp > 0 {
                (2 * tp) as f64 / (2 * tp + (predicted - tp) + (support - tp)) as f64
            } else {
                0.0
            };
            ClassMetrics {
                class: cm.classes[c].clone(),
                precision,
                recall,
                f1,
                support,
                undefined: p_undef || r_undef,
            }
        })
        .collect();
    let trace: u64 = (0..k).map(|c| cm.counts[c][c]).sum();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(Report {
        accuracy: trace as f64 / total as f64,
        macro_avg: Averages {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        weighted_avg: Averages {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        },
        per_class,
        total,
    })
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.macro_f1()
}

impl Report {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.class == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .per_class
            .iter()
            .map(|m| m.class.len())
            .chain([12])
            .max()
            .unwrap_or(12);
        writeln!(
            f,
            "{:w$}  {:>9}  {:>6}  {:>8}  {:>7}",
            "", "precision", "recall", "f1-score", "support"
        )?;
        for m in &self.per_class {
            let mark = if m.undefined { "*" } else { "" };
            writeln!(
                f,
                "{:w$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}{mark}",
                m.class, m.precision, m.recall, m.f1, m.support
            )?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:w$}  {:>9}  {:>6}  {:>8.2}  {:>7}",
            "accuracy", "", "", self.accuracy, self.total
        )?;
        for (name, a) in [
            ("macro avg", self.macro_avg),
            ("weighted avg", self.weighted_avg),
        ] {
            writeln!(
                f,
                "{name:w$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
                a.precision, a.recall, a.f1, self.total
            )?;
        }
        if self.per_class.iter().any(|m| m.undefined) {
            writeln!(f, "* zero denominator, reported as 0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        let cm = ConfusionMatrix::from_indices(&y, &y, names(3)).unwrap();
        for (i, row) in cm.counts().iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c > 0, i == j);
            }
        }
        let r = cm.report().unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_avg.f1, 1.0);
        assert!(r
            .per_class
            .iter()
            .all(|m| m.precision == 1.0 && m.recall == 1.0));
    }

    #[test]
    fn swapped_pair_is_anti_diagonal() {
        let cls = vec!["A".to_string(), "B".to_string()];
        let cm = confusion(&["A", "B"], &["B", "A"], &cls).unwrap();
        assert_eq!(cm.counts(), &[vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn ten_sample_hand_tally() {
        let cls = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        let golds = ["x", "x", "x", "y", "y", "y", "y", "z", "z", "z"];
        let preds = ["x", "y", "x", "y", "y", "z", "x", "z", "z", "x"];
        let cm = confusion(&golds, &preds, &cls).unwrap();
        assert_eq!(cm.counts(), &[vec![2, 1, 0], vec![1, 2, 1], vec![1, 0, 2]]);
        let r = cm.report().unwrap();
        // x: P 2/4 R 2/3; y: P 2/3 R 2/4; z: P 2/3 R 2/3
        assert!((r.class("x").unwrap().precision - 0.5).abs() < 1e-12);
        assert!((r.class("y").unwrap().recall - 0.5).abs() < 1e-12);
        assert!((r.accuracy - 0.6).abs() < 1e-12);
    }

    #[test]
    fn all_positive_binary() {
        let cls = vec!["neg".to_string(), "pos".to_string()];
        let golds = ["neg", "neg", "pos", "pos"];
        let preds = ["pos"; 4];
        let r = confusion(&golds, &preds, &cls).unwrap().report().unwrap();
        assert!((r.class("pos").unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.class("neg").unwrap().f1, 0.0);
        assert!(r.class("neg").unwrap().undefined);
        assert!(!r.class("pos").unwrap().undefined);
        assert!((r.macro_avg.f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let cls = names(2);
        assert!(matches!(
            confusion(&["c0"], &["c0", "c1"], &cls),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&["c9"], &["c0"], &cls),
            Err(Error::UnknownLabel(_))
        ));
        let empty = ConfusionMatrix::from_indices(&[], &[], cls).unwrap();
        assert!(matches!(empty.report(), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn text_and_csv_rendering() {
        let cm = ConfusionMatrix::from_counts(names(2), vec![vec![5, 1], vec![2, 3]]).unwrap();
        let text = cm.report().unwrap().to_string();
        assert!(text.contains("macro avg"));
        assert!(text.contains("weighted avg"));
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "gold \\ predicted,c0,c1\nc0,5,1\nc1,2,3\n"
        );
    }

    /// Per-class counting written independently of the matrix.
    fn naive(golds: &[usize], preds: &[usize], k: usize) -> Vec<(f64, f64, f64)> {
        (0..k)
            .map(|c| {
                let tp = golds
                    .iter()
                    .zip(preds)
                    .filter(|&(&g, &p)| g == c && p == c)
                    .count() as f64;
                let fp = golds
                    .iter()
                    .zip(preds)
                    .filter(|&(&g, &p)| g != c && p == c)
                    .count() as f64;
                let fnn = golds
                    .iter()
                    .zip(preds)
                    .filter(|&(&g, &p)| g == c && p != c)
                    .count() as f64;
                let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let r = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
                let f = if tp > 0.0 {
                    2.0 * tp / (2.0 * tp + fp + fnn)
                } else {
                    0.0
                };
                (p, r, f)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn report_matches_naive_counter(
            (k, pairs) in (2usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 1..60)))
        ) {
            let (golds, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = ConfusionMatrix::from_indices(&golds, &preds, names(k)).unwrap();
            let r = cm.report().unwrap();
            for (m, (p, rc, f)) in r.per_class.iter().zip(naive(&golds, &preds, k)) {
                prop_assert!((m.precision - p).abs() < 1e-12);
                prop_assert!((m.recall - rc).abs() < 1e-12);
                prop_assert!((m.f1 - f).abs() < 1e-12);
            }
            // accuracy = Σ support·recall / total
            let acc: f64 = r.per_class.iter().map(|m| m.support as f64 * m.recall).sum::<f64>() / r.total as f64;
            prop_assert!((acc - r.accuracy).abs() < 1e-12);
            let min = r.per_class.iter().map(|m| m.f1).fold(f64::MAX, f64::min);
            let max = r.per_class.iter().map(|m| m.f1).fold(f64::MIN, f64::max);
            prop_assert!(r.weighted_avg.f1 >= min - 1e-12 && r.weighted_avg.f1 <= max + 1e-12);
            prop_assert_eq!(r.per_class.iter().map(|m| m.support).sum::<u64>(), r.total);
            let all = [r.accuracy, r.macro_avg.f1, r.weighted_avg.precision, r.weighted_avg.recall];
            prop_assert!(all.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn macro_f1_invariant_under_relabeling(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
            perm in Just(vec![2usize, 0, 3, 1]),
        ) {
            let (golds, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let a = ConfusionMatrix::from_indices(&golds, &preds, names(4)).unwrap().macro_f1().unwrap();
            let g2: Vec<usize> = golds.iter().map(|&g| perm[g]).collect();
            let p2: Vec<usize> = preds.iter().map(|&p| perm[p]).collect();
            let b = ConfusionMatrix::from_indices(&g2, &p2, names(4)).unwrap().macro_f1().unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
