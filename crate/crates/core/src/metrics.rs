//! Confusion matrices, classification reports, one-vs-rest ROC/AUC and the
//! CSV/text renderings of those artifacts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EpochRecord;

/// `counts[t][p]`: rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.k..(truth + 1) * self.k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.row(c).iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    /// Builds a matrix from explicit row-major counts.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::ShapeMismatch { op: "confusion matrix", expected: vec![k, k], found: vec![counts.len()] });
        }
        Ok(Self { k, counts })
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch { op: "confusion", expected: vec![truth.len()], found: vec![pred.len()] });
    }
    let mut counts = vec![0u64; k * k];
    for (&t, &p) in truth.iter().zip(pred) {
        for label in [t, p] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Support-weighted.
    pub weighted: Averages,
    /// Unweighted mean over classes.
    pub macro_avg: Averages,
    pub support: u64,
    pub wall_time_s: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 and their averages; any zero denominator
/// yields 0.
pub fn report(cm: &ConfusionMatrix, wall_time_s: f64) -> Result<EvalReport> {
    let total = cm.total();
    if cm.k == 0 || total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.k)
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { precision, recall, f1, support: cm.row_sum(c) }
        })
        .collect();
    let avg = |w: &dyn Fn(&ClassMetrics) -> f64| -> Averages {
        let weight_sum: f64 = per_class.iter().map(w).sum();
        let mean = |f: fn(&ClassMetrics) -> f64| {
            if weight_sum == 0.0 {
                0.0
            } else {
                per_class.iter().map(|m| w(m) * f(m)).sum::<f64>() / weight_sum
            }
        };
        Averages { precision: mean(|m| m.precision), recall: mean(|m| m.recall), f1: mean(|m| m.f1) }
    };
    let weighted = avg(&|m| m.support as f64);
    let macro_avg = avg(&|_| 1.0);
    Ok(EvalReport { accuracy: ratio(cm.trace(), total), per_class, weighted, macro_avg, support: total, wall_time_s })
}

impl EvalReport {
    /// Fixed-width text table; `names[k]` labels class `k`.
    pub fn to_text(&self, names: &[&str]) -> String {
        let width = names.iter().map(|n| n.len()).chain([12]).max().unwrap_or(12);
        let mut s = String::new();
        let _ = writeln!(s, "{:>width$} {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support");
        let _ = writeln!(s);
        for (k, m) in self.per_class.iter().enumerate() {
            let name = names.get(k).copied().unwrap_or("?");
            let _ = writeln!(s, "{name:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}", m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>width$} {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", self.accuracy, self.support);
        for (label, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted)] {
            let _ = writeln!(s, "{label:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}", a.precision, a.recall, a.f1, self.support);
        }
        let _ = writeln!(s, "wall time: {:.3} s", self.wall_time_s);
        s
    }

    /// `class,precision,recall,f1,support` rows followed by the summary rows.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut s = String::from("class,precision,recall,f1,support\n");
        for (k, m) in self.per_class.iter().enumerate() {
            let name = names.get(k).copied().unwrap_or("?");
            let _ = writeln!(s, "{name},{},{},{},{}", m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s, "accuracy,,,{},{}", self.accuracy, self.support);
        let _ = writeln!(s, "macro avg,{},{},{},{}", self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1, self.support);
        let _ = writeln!(s, "weighted avg,{},{},{},{}", self.weighted.precision, self.weighted.recall, self.weighted.f1, self.support);
        s
    }
}

impl ConfusionMatrix {
    /// Header row of predicted class names, one row per true class.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let name = |k: usize| names.get(k).copied().unwrap_or("?");
        let mut s = String::from("true\\pred");
        for k in 0..self.k {
            let _ = write!(s, ",{}", name(k));
        }
        s.push('\n');
        for t in 0..self.k {
            s.push_str(name(t));
            for c in self.row(t) {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

/// One-vs-rest curve for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    /// `(fpr, tpr)` from `(0,0)` to `(1,1)`, nondecreasing in both.
    pub points: Vec<(f64, f64)>,
    /// Score threshold reached at each point after the origin.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `None` where the class has no positives or no negatives.
    pub per_class: Vec<Option<ClassRoc>>,
    /// Mean AUC over classes with a defined curve.
    pub macro_auc: f64,
}

/// Threshold sweep over distinct scores, descending; tied scores form one
/// step so the trapezoid area equals the Mann-Whitney statistic.
pub fn binary_roc(positive: &[bool], scores: &[f64]) -> Result<ClassRoc> {
    if positive.len() != scores.len() {
        return Err(Error::ShapeMismatch { op: "roc", expected: vec![positive.len()], found: vec![scores.len()] });
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClassOnly { class: usize::from(p > 0) });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
        thresholds.push(s);
    }
    Ok(ClassRoc { points, thresholds, auc: auc / (p * n) as f64 })
}

/// One-vs-rest ROC for every class of a `[N, K]` row-major probability matrix.
pub fn roc_auc(truth: &[usize], probs: &[f64], k: usize) -> Result<RocCurve> {
    if k == 0 || probs.len() != truth.len() * k {
        return Err(Error::ShapeMismatch { op: "roc_auc", expected: vec![truth.len(), k], found: vec![probs.len()] });
    }
    if let Some(&label) = truth.iter().find(|&&t| t >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let scores: Vec<f64> = probs.chunks_exact(k).map(|r| r[c]).collect();
        per_class.push(match binary_roc(&pos, &scores) {
            Ok(r) => Some(r),
            Err(Error::SingleClassOnly { .. }) => None,
            Err(e) => return Err(e),
        });
    }
    let defined: Vec<f64> = per_class.iter().flatten().map(|r| r.auc).collect();
    if defined.is_empty() {
        return Err(Error::SingleClassOnly { class: truth.first().copied().unwrap_or(0) });
    }
    let macro_auc = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(RocCurve { per_class, macro_auc })
}

impl RocCurve {
    /// `class,fpr,tpr,threshold` per point; the origin has an empty threshold.
    pub fn points_csv(&self, names: &[&str]) -> String {
        let mut s = String::from("class,fpr,tpr,threshold\n");
        for (k, r) in self.per_class.iter().enumerate() {
            let Some(r) = r else { continue };
            let name = names.get(k).copied().unwrap_or("?");
            for (i, (f, t)) in r.points.iter().enumerate() {
                let th = if i == 0 { String::new() } else { format!("{}", r.thresholds[i - 1]) };
                let _ = writeln!(s, "{name},{f},{t},{th}");
            }
        }
        s
    }

    /// `class,auc` with an empty cell for undefined classes, then `macro`.
    pub fn auc_csv(&self, names: &[&str]) -> String {
        let mut s = String::from("class,auc\n");
        for (k, r) in self.per_class.iter().enumerate() {
            let name = names.get(k).copied().unwrap_or("?");
            match r {
                Some(r) => writeln!(s, "{name},{}", r.auc),
                None => writeln!(s, "{name},"),
            }
            .ok();
        }
        let _ = writeln!(s, "macro,{}", self.macro_auc);
        s
    }
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_sound_acc,train_disease_acc,val_sound_acc,val_disease_acc";

/// One CSV row per epoch; missing validation values are empty cells.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            r.train_sound_acc,
            r.train_disease_acc,
            opt(r.val_sound_acc),
            opt(r.val_disease_acc)
        );
    }
    s
}

/// Inverse of [`history_csv`]; `steps` and wall time are not stored.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(Error::MalformedRow { line: 1, reason: "missing history header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let bad = |reason: &str| Error::MalformedRow { line: i + 1, reason: reason.into() };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("not a number"));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        out.push(EpochRecord {
            epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
            train_loss: num(f[1])?,
            val_loss: opt(f[2])?,
            train_sound_acc: num(f[3])?,
            train_disease_acc: num(f[4])?,
            val_sound_acc: opt(f[5])?,
            val_disease_acc: opt(f[6])?,
            steps: 0,
            wall_time_s: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_matrix() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.row(0), &[1, 1]);
        assert_eq!(cm.row(1), &[0, 1]);
        assert!(matches!(confusion(&[0, 2], &[0, 0], 2), Err(Error::LabelOutOfRange { label: 2, classes: 2 })));
    }

    #[test]
    fn perfect_and_absent_classes() {
        let y = [0, 1, 2, 2, 1];
        let r = report(&confusion(&y, &y, 3).unwrap(), 0.0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|m| m.f1 == 1.0 && m.precision == 1.0));
        let r = report(&confusion(&[0, 1, 1], &[0, 0, 0], 3).unwrap(), 1.5).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[2].support, 0);
        assert_eq!(r.per_class[2].f1, 0.0);
        assert!(matches!(report(&confusion(&[], &[], 3).unwrap(), 0.0), Err(Error::EmptyMatrix)));
        assert!(r.to_text(&["a", "b", "c"]).contains("weighted avg"));
    }

    #[test]
    fn roc_edge_cases() {
        let r = binary_roc(&[true, true, false, false], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = binary_roc(&[true, false, true, false], &[0.5; 4]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(binary_roc(&[true, true], &[0.1, 0.2]), Err(Error::SingleClassOnly { .. })));
        let curve = roc_auc(&[0, 0, 1], &[0.7, 0.3, 0.6, 0.4, 0.2, 0.8], 2).unwrap();
        assert!(curve.per_class.iter().all(Option::is_some));
        let curve = roc_auc(&[0, 0, 1], &[0.5, 0.3, 0.1, 0.6, 0.4, 0.0, 0.2, 0.7, 0.1], 3).unwrap();
        assert!(curve.per_class[2].is_none());
        assert!(curve.auc_csv(&["a", "b", "c"]).contains("c,\n"));
    }

    #[test]
    fn history_round_trip() {
        let h: Vec<EpochRecord> = (1..=3)
            .map(|e| EpochRecord {
                epoch: e,
                train_loss: 1.0 / e as f64,
                val_loss: if e == 2 { None } else { Some(0.3 * e as f64) },
                train_sound_acc: 0.1 * e as f64,
                train_disease_acc: 0.2,
                val_sound_acc: Some(0.5),
                val_disease_acc: None,
                steps: 0,
                wall_time_s: None,
            })
            .collect();
        let csv = history_csv(&h);
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(parse_history_csv(&csv).unwrap(), h);
    }

    proptest! {
        #[test]
        fn accuracy_equals_weighted_recall(counts in proptest::collection::vec(0u64..20, 16)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let r = report(&ConfusionMatrix::from_counts(4, counts).unwrap(), 0.0).unwrap();
            prop_assert!((r.accuracy - r.weighted.recall).abs() < 1e-12);
            for m in &r.per_class {
                prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.f1));
            }
        }

        #[test]
        fn roc_points_monotone(labels in proptest::collection::vec(any::<bool>(), 2..60), seed in any::<u64>()) {
            prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
            let scores: Vec<f64> = labels.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) & 7) as f64 / 7.0).collect();
            let r = binary_roc(&labels, &scores).unwrap();
            prop_assert_eq!(r.points[0], (0.0, 0.0));
            prop_assert_eq!(*r.points.last().unwrap(), (1.0, 1.0));
            prop_assert!(r.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
            prop_assert!((0.0..=1.0).contains(&r.auc));
        }
    }
}
