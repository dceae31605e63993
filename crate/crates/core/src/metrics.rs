//! Confusion matrices, macro-averaged precision/recall/F1 and the model
//! comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::LabelSpace;
use crate::error::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    label_space: LabelSpace,
}

impl ConfusionMatrix {
    pub fn zeros(label_space: LabelSpace) -> Self {
        let n = label_space.len();
        Self {
            counts: vec![vec![0; n]; n],
            label_space,
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, label_space: LabelSpace) -> Result<Self> {
        let n = label_space.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!(
                "confusion counts must be {n}x{n} for this label space"
            )));
        }
        Ok(Self {
            counts,
            label_space,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Row-major merge of two matrices over the same label space.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.label_space != other.label_space {
            return Err(Error::incompatible(
                "confusion matrices over different label spaces",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// CSV with a header row and header column of class names.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in self.label_space.names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.label_space.names().iter().zip(&self.counts) {
            out.push_str(name);
            for c in row {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(
    true_labels: &[usize],
    predicted: &[usize],
    label_space: &LabelSpace,
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::arg(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let n = label_space.len();
    let mut cm = ConfusionMatrix::zeros(label_space.clone());
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= n || p >= n {
            return Err(Error::arg(format!(
                "label pair ({t}, {p}) outside {n} classes"
            )));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Samples whose true class is this one.
    pub support: u64,
    /// Set when precision or recall had a zero denominator and was reported
    /// as 0.
    pub zero_division: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Macro (unweighted class mean) precision.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_loss: f64,
    pub samples: u64,
    /// No samples were evaluated; every figure is 0.
    pub empty: bool,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn report(cm: &ConfusionMatrix, mean_loss: f64) -> MetricsReport {
    let n = cm.counts.len();
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..n).map(|t| cm.counts[t][c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let (precision, p_zero) = ratio(tp, predicted);
            let (recall, r_zero) = ratio(tp, support);
            ClassMetrics {
                name: cm.label_space.names()[c].clone(),
                precision,
                recall,
                f1: harmonic_mean(precision, recall),
                support,
                zero_division: p_zero || r_zero,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    MetricsReport {
        accuracy: ratio(cm.trace(), total).0,
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        mean_loss,
        samples: total,
        empty: total == 0,
        per_class,
    }
}

/// One table row: a model's report on training data and on held-out data.
#[derive(Clone, Debug)]
pub struct TableRow {
    pub name: String,
    pub train: MetricsReport,
    pub validation: MetricsReport,
}

pub const TABLE_COLUMNS: [&str; 7] = [
    "Precision (%)",
    "Recall (%)",
    "F1-Score (%)",
    "Training Accuracy (%)",
    "Training loss",
    "Validation Accuracy (%)",
    "Validation loss",
];

/// Renders rows as a pipe table. Precision, recall and F1 come from the
/// validation report; percentages and losses carry two decimals.
pub fn render_table(rows: &[TableRow]) -> String {
    let name_width = rows
        .iter()
        .map(|r| r.name.chars().count())
        .chain(["Algorithms".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    write!(out, "| {:<name_width$} |", "Algorithms").unwrap();
    for col in TABLE_COLUMNS {
        write!(out, " {col} |").unwrap();
    }
    out.push('\n');
    write!(out, "|{}|", "-".repeat(name_width + 2)).unwrap();
    for col in TABLE_COLUMNS {
        write!(out, "{}|", "-".repeat(col.len() + 2)).unwrap();
    }
    out.push('\n');
    for r in rows {
        let cells = [
            r.validation.precision * 100.0,
            r.validation.recall * 100.0,
            r.validation.f1 * 100.0,
            r.train.accuracy * 100.0,
            r.train.mean_loss,
            r.validation.accuracy * 100.0,
            r.validation.mean_loss,
        ];
        write!(out, "| {:<name_width$} |", r.name).unwrap();
        for (col, v) in TABLE_COLUMNS.iter().zip(cells) {
            write!(out, " {:>w$.2} |", v, w = col.len()).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    fn two_classes() -> LabelSpace {
        LabelSpace::new(vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn confusion_tallies() {
        let ls = LabelSpace::default();
        let cm = confusion(&[0, 1, 2, 3], &[0, 1, 2, 3], &ls).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                assert_eq!(cm.get(t, p), u64::from(t == p));
            }
        }

        let cm = confusion(&[0, 0, 1], &[0, 1, 1], &ls).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 1)), (1, 1, 1));
        assert_eq!(cm.total(), 3);

        let cm = confusion(&[], &[], &ls).unwrap();
        assert_eq!(cm, ConfusionMatrix::zeros(ls.clone()));

        assert!(confusion(&[0], &[], &ls).is_err());
    }

    #[test]
    fn perfect_report() {
        let ls = LabelSpace::default();
        let r = report(
            &confusion(&[0, 1, 2, 3, 3], &[0, 1, 2, 3, 3], &ls).unwrap(),
            0.0,
        );
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert!(!r.empty);
    }

    #[test]
    fn two_class_arithmetic() {
        let cm = ConfusionMatrix::from_counts(vec![vec![8, 2], vec![1, 9]], two_classes()).unwrap();
        let r = report(&cm, 0.3);
        assert!((r.accuracy - 0.85).abs() < 1e-15);
        let c0 = &r.per_class[0];
        assert!((c0.precision - 8.0 / 9.0).abs() < 1e-15);
        assert!((c0.recall - 0.8).abs() < 1e-15);
        assert!((c0.f1 - 0.842_105_263_157_894_7).abs() < 1e-12);
        let c1 = &r.per_class[1];
        assert!((c1.precision - 9.0 / 11.0).abs() < 1e-15);
        assert!((c1.recall - 0.9).abs() < 1e-15);
        assert!((r.precision - (8.0 / 9.0 + 9.0 / 11.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_zero_and_flagged() {
        let ls = LabelSpace::default();
        let r = report(&confusion(&[0, 1], &[0, 1], &ls).unwrap(), 0.0);
        let c3 = &r.per_class[3];
        assert_eq!((c3.precision, c3.recall, c3.f1), (0.0, 0.0, 0.0));
        assert!(c3.zero_division);
        assert!(!r.per_class[0].zero_division);
    }

    #[test]
    fn empty_report() {
        let r = report(&ConfusionMatrix::zeros(LabelSpace::default()), 0.0);
        assert!(r.empty);
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn csv_layout() {
        let cm = ConfusionMatrix::from_counts(vec![vec![8, 2], vec![1, 9]], two_classes()).unwrap();
        assert_eq!(cm.to_csv(), "true\\predicted,a,b\na,8,2\nb,1,9\n");
    }

    #[test]
    fn report_json_round_trips() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![0, 0]], two_classes()).unwrap();
        let r = report(&cm, 0.25);
        let back: MetricsReport =
            serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn table_columns_and_perfect_row() {
        let ls = LabelSpace::default();
        let perfect = report(&confusion(&[0, 1, 2, 3], &[0, 1, 2, 3], &ls).unwrap(), 0.0);
        let row = TableRow {
            name: "Global Model (FL)".into(),
            train: perfect.clone(),
            validation: perfect,
        };
        let text = render_table(std::slice::from_ref(&row));
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let cols: Vec<&str> = header
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        assert_eq!(
            cols,
            [
                "Algorithms",
                "Precision (%)",
                "Recall (%)",
                "F1-Score (%)",
                "Training Accuracy (%)",
                "Training loss",
                "Validation Accuracy (%)",
                "Validation loss"
            ]
        );
        let body = lines.nth(1).unwrap();
        let cells: Vec<&str> = body
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        assert_eq!(
            cells,
            [
                "Global Model (FL)",
                "100.00",
                "100.00",
                "100.00",
                "100.00",
                "0.00",
                "100.00",
                "0.00"
            ]
        );
        assert_eq!(text, render_table(&[row]));
    }

    fn random_matrix(seed: u64, n: usize) -> ConfusionMatrix {
        let mut rng = RngStream::new(seed, 0);
        let names = (0..n).map(|i| format!("c{i}")).collect();
        let counts = (0..n)
            .map(|_| (0..n).map(|_| rng.below(20)).collect())
            .collect();
        ConfusionMatrix::from_counts(counts, LabelSpace::new(names).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn accuracy_is_prevalence_weighted_recall(seed in any::<u64>(), n in 2usize..6) {
            let cm = random_matrix(seed, n);
            let r = report(&cm, 0.0);
            let total = cm.total() as f64;
            if total > 0.0 {
                let weighted: f64 = r.per_class.iter().map(|c| c.recall * c.support as f64 / total).sum();
                prop_assert!((weighted - r.accuracy).abs() < 1e-12);
            }
            for c in &r.per_class {
                prop_assert!((c.f1 - harmonic_mean(c.precision, c.recall)).abs() < 1e-15);
                for v in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn metrics_follow_class_relabeling(seed in any::<u64>(), n in 2usize..6, rot in 0usize..6) {
            let cm = random_matrix(seed, n);
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let names: Vec<String> = {
                let mut v = vec![String::new(); n];
                for i in 0..n { v[perm[i]] = cm.label_space().names()[i].clone(); }
                v
            };
            let mut counts = vec![vec![0; n]; n];
            for t in 0..n {
                for p in 0..n {
                    counts[perm[t]][perm[p]] = cm.get(t, p);
                }
            }
            let permuted = ConfusionMatrix::from_counts(counts, LabelSpace::new(names).unwrap()).unwrap();
            let (a, b) = (report(&cm, 0.0), report(&permuted, 0.0));
            prop_assert!((a.accuracy - b.accuracy).abs() < 1e-15);
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            for (class, &moved) in a.per_class.iter().zip(&perm) {
                prop_assert_eq!(class, &b.per_class[moved]);
            }
        }
    }
}
