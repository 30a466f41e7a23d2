use serde::{Deserialize, Serialize};

use crate::error::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Binary splits with both classes present only.
    pub auc_roc: Option<f64>,
}

impl Metrics {
    /// Confusion-matrix metrics; `scores` are positive-class scores used for
    /// the AUC of binary problems.
    #[allow(clippy::needless_range_loop)]
    pub fn from_predictions(y_true: &[u32], y_pred: &[u32], n_classes: usize, scores: Option<&[f64]>) -> Self {
        assert_eq!(y_true.len(), y_pred.len(), "one prediction per label");
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            confusion[t as usize][p as usize] += 1;
        }
        let total = y_true.len();
        let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut precision = Vec::with_capacity(n_classes);
        let mut recall = Vec::with_capacity(n_classes);
        let mut f1 = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let tp = confusion[c][c];
            let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, support);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        }
        let macro_f1 = f1.iter().sum::<f64>() / n_classes as f64;
        let auc_roc = match scores {
            Some(s) if n_classes == 2 => {
                let positive: Vec<bool> = y_true.iter().map(|&y| y == 1).collect();
                auc_roc(s, &positive).ok()
            }
            _ => None,
        };
        Self { accuracy: ratio(correct, total), precision, recall, f1, macro_f1, confusion, auc_roc }
    }

    pub fn support(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Area under the ROC curve from the Mann-Whitney rank statistic; tied
/// scores receive their average rank.
pub fn auc_roc(scores: &[f64], positive: &[bool]) -> Result<f64, NnError> {
    assert_eq!(scores.len(), positive.len(), "one score per label");
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(NnError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in positive.iter().enumerate() {
            for (j, &pj) in positive.iter().enumerate() {
                if pi && !pj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_separation_gives_unit_auc() {
        assert_eq!(auc_roc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
    }

    #[test]
    fn six_scores_match_pairwise_count() {
        let scores = [0.3, 0.7, 0.5, 0.5, 0.9, 0.1];
        let positive = [false, true, true, false, false, true];
        assert_abs_diff_eq!(auc_roc(&scores, &positive).unwrap(), pairwise_auc(&scores, &positive), epsilon = 1e-15);
    }

    #[test]
    fn many_ties_match_pairwise_count() {
        let scores: Vec<f64> = (0..40).map(|i| ((i * 7) % 5) as f64).collect();
        let positive: Vec<bool> = (0..40).map(|i| (i * 3) % 4 == 1).collect();
        assert_abs_diff_eq!(auc_roc(&scores, &positive).unwrap(), pairwise_auc(&scores, &positive), epsilon = 1e-12);
    }

    #[test]
    fn single_class_has_no_auc() {
        assert!(matches!(auc_roc(&[0.1, 0.2], &[true, true]), Err(NnError::SingleClass)));
    }

    #[test]
    fn majority_predictor_on_sixty_forty() {
        let y: Vec<u32> = (0..10).map(|i| u32::from(i >= 6)).collect();
        let m = Metrics::from_predictions(&y, &[0; 10], 2, None);
        assert_abs_diff_eq!(m.accuracy, 0.6, epsilon = 1e-15);
        assert_eq!(m.recall[1], 0.0);
        assert_eq!(m.recall[0], 1.0);
        assert_eq!(m.support(), vec![6, 4]);
    }

    #[test]
    fn confusion_accounts_for_every_sample() {
        let y = [0, 1, 2, 2, 1, 0, 2];
        let p = [0, 2, 2, 1, 1, 0, 2];
        let m = Metrics::from_predictions(&y, &p, 3, None);
        assert_eq!(m.support(), vec![2, 2, 3]);
        let trace: usize = (0..3).map(|c| m.confusion[c][c]).sum();
        assert_abs_diff_eq!(m.accuracy, trace as f64 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.precision[2], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.recall[2], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.macro_f1, (1.0 + 0.5 + 2.0 / 3.0) / 3.0, epsilon = 1e-15);
        assert!(m.auc_roc.is_none());
    }
}
