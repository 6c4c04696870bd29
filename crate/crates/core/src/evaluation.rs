//! Binary-classification metrics.
//!
//! Conventions: a score at or above the threshold predicts positive;
//! precision, recall and F1 are 0 when their denominators vanish; FPR and FNR
//! are 0 when the corresponding class is absent.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidValue(format!("score {s}")));
    }
    Ok(())
}

pub fn confusion_counts(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionCounts> {
    check_inputs(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Area under the ROC curve via average ranks (Mann-Whitney U); tied scores
/// count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps tie averages integral.
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean, (i + j + 2) / 2.
        let twice_avg = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        pos_rank_sum2 += twice_avg * pos_in_group;
        i = j + 1;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub counts: ConfusionCounts,
    pub decision_threshold: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(auc: f64, counts: ConfusionCounts, decision_threshold: f64) -> Self {
        let ConfusionCounts { tp, fp, tn, fn_ } = counts;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            auc,
            precision,
            recall,
            f1,
            fpr: ratio(fp, fp + tn),
            fnr: ratio(fn_, fn_ + tp),
            counts,
            decision_threshold,
        }
    }

    pub const COLUMNS: [&'static str; 6] = ["AUC", "Precision", "Recall", "F1 score", "FPR", "FNR"];

    pub fn values(&self) -> [f64; 6] {
        [self.auc, self.precision, self.recall, self.f1, self.fpr, self.fnr]
    }
}

pub fn compute_report(scores: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    let auc = roc_auc(scores, labels)?;
    let counts = confusion_counts(scores, labels, threshold)?;
    Ok(MetricsReport::from_counts(auc, counts, threshold))
}

/// The candidate threshold (an observed score) with the highest F1; ties go to
/// the higher threshold.
pub fn best_f1_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    check_inputs(scores, labels)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (candidates[0], -1.0);
    for t in candidates {
        let c = confusion_counts(scores, labels, t)?;
        let f1 = MetricsReport::from_counts(0.0, c, t).f1;
        if f1 >= best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

/// Plain-text table, one row per named report, in the usual column order.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<name_w$}", "Method");
    for c in MetricsReport::COLUMNS {
        let _ = write!(out, " | {c:>9}");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(name_w + 12 * MetricsReport::COLUMNS.len()));
    for (name, r) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for v in r.values() {
            let _ = write!(out, " | {v:>9.2}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bools(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn perfect_scores_have_no_errors() {
        let c = confusion_counts(&[0.9, 0.8, 0.2, 0.1], &bools(&[1, 1, 0, 0]), 0.5).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
    }

    #[test]
    fn counting_fixture() {
        let c = confusion_counts(&[0.9, 0.8, 0.6, 0.4, 0.3], &bools(&[1, 1, 0, 1, 0]), 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, tn: 1, fn_: 1 });
    }

    #[test]
    fn zero_threshold_predicts_everything_positive() {
        let c = confusion_counts(&[0.0, 0.3, 1.0], &bools(&[0, 1, 0]), 0.0).unwrap();
        assert_eq!((c.tn, c.fn_), (0, 0));
        assert_eq!(c.total(), 3);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(confusion_counts(&[0.1], &bools(&[1, 0]), 0.5).is_err());
    }

    #[test]
    fn auc_fixtures() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.1], &bools(&[1, 1, 0, 0])).unwrap(), 1.0);
        // Pairs (pos, neg): (.9,.2) (.9,.6) (.4,.2) ok, (.4,.6) wrong -> 3/4.
        assert_eq!(roc_auc(&[0.9, 0.2, 0.6, 0.4], &bools(&[1, 0, 0, 1])).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5; 6], &bools(&[1, 0, 1, 0, 0, 1])).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &bools(&[1, 1])), Err(Error::SingleClass)));
    }

    #[test]
    fn report_from_counts() {
        let r = MetricsReport::from_counts(0.9, ConfusionCounts { tp: 3, fp: 1, tn: 5, fn_: 1 }, 0.5);
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.recall, 0.75);
        assert!((r.f1 - 0.75).abs() < 1e-15);
        assert!((r.fpr - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.fnr, 0.25);
    }

    #[test]
    fn perfect_report() {
        let r = compute_report(&[0.9, 0.7, 0.2, 0.1], &bools(&[1, 1, 0, 0]), 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.fpr, r.fnr, r.auc), (1.0, 1.0, 1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn degenerate_f1_is_zero() {
        let r = MetricsReport::from_counts(0.5, ConfusionCounts { tp: 0, fp: 3, tn: 1, fn_: 2 }, 0.5);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn table_uses_column_order() {
        let r = MetricsReport::from_counts(0.99, ConfusionCounts { tp: 3, fp: 1, tn: 5, fn_: 1 }, 0.5);
        let t = render_table(&[("CRAFT-masked", &r)]);
        let header = t.lines().next().unwrap();
        let pos: Vec<usize> = MetricsReport::COLUMNS.iter().map(|c| header.find(c).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(t.contains("0.99"));
    }

    #[test]
    fn best_threshold_finds_separating_cut() {
        let (t, f1) = best_f1_threshold(&[0.1, 0.35, 0.4, 0.8], &bools(&[0, 0, 1, 1])).unwrap();
        assert_eq!((t, f1), (0.4, 1.0));
    }
}
