//! Evaluation statistics: accuracy, balanced accuracy, quadratic weighted
//! kappa, weighted F1, and binary AUC, plus the confusion matrix they are
//! all derived from.
//!
//! Kappa is accumulated in integer arithmetic (`n * sum w O` over
//! `sum w row col` with unnormalized `(i-j)^2` weights), so perfect
//! agreement is exactly 1 and the full reversal case is exactly -1. AUC is
//! the Mann-Whitney statistic computed from average ranks, which handles
//! ties exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// The five evaluation statistics plus the confusion matrix for one labeled
/// split. `qwk` and `auc` are absent when undefined (degenerate marginals,
/// single-class input, or a task that is not binary).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub qwk: Option<f64>,
    pub weighted_f1: f64,
    pub auc: Option<f64>,
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: Vec<Vec<u64>>,
}

fn check_labels(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::parameter("metrics on empty input"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::parameter(format!(
            "label vectors of different lengths: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred.iter()).find(|&&l| l >= num_classes) {
        return Err(Error::parameter(format!(
            "label {bad} outside [0, {num_classes})"
        )));
    }
    Ok(())
}

/// `confusion[i][j]` = number of samples with true class `i` predicted `j`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<Vec<Vec<u64>>> {
    check_labels(y_true, y_pred, num_classes)?;
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred.iter()) {
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// Fraction of matching predictions.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::parameter("accuracy on empty input"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::parameter(format!(
            "label vectors of different lengths: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let matches = y_true.iter().zip(y_pred.iter()).filter(|(t, p)| t == p).count();
    Ok(matches as f64 / y_true.len() as f64)
}

/// Mean per-class recall over the classes that actually occur in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    let confusion = confusion_matrix(y_true, y_pred, num_classes)?;
    let mut total = 0.0;
    let mut present = 0;
    for (class, row) in confusion.iter().enumerate() {
        let support: u64 = row.iter().sum();
        if support > 0 {
            total += row[class] as f64 / support as f64;
            present += 1;
        }
    }
    Ok(total / present as f64)
}

/// Chance-corrected agreement with squared-distance penalties, in [-1, 1].
///
/// With `w_ij = (i-j)^2 / (c-1)^2`, observed counts `O`, and expected counts
/// `E = row x col / n`, kappa is `1 - sum(wO) / sum(wE)`. The normalizations
/// cancel, so the ratio is computed as exact integers before the one final
/// division.
pub fn quadratic_weighted_kappa(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return Err(Error::parameter("kappa needs at least 2 classes"));
    }
    let confusion = confusion_matrix(y_true, y_pred, num_classes)?;
    let n = y_true.len() as u128;
    let row_marginals: Vec<u128> = confusion.iter().map(|r| r.iter().map(|&v| v as u128).sum()).collect();
    let mut col_marginals = vec![0u128; num_classes];
    for row in &confusion {
        for (j, &v) in row.iter().enumerate() {
            col_marginals[j] += v as u128;
        }
    }
    let mut observed = 0u128; // n * sum (i-j)^2 O_ij
    let mut expected = 0u128; // sum (i-j)^2 row_i col_j
    for i in 0..num_classes {
        for j in 0..num_classes {
            let w = ((i as i64 - j as i64) * (i as i64 - j as i64)) as u128;
            observed += w * confusion[i][j] as u128 * n;
            expected += w * row_marginals[i] * col_marginals[j];
        }
    }
    if expected == 0 {
        return Err(Error::UndefinedMetric(
            "kappa undefined: both marginals are concentrated on a single class".into(),
        ));
    }
    Ok(1.0 - observed as f64 / expected as f64)
}

/// Support-weighted mean of per-class F1, with `F1 = 0` for classes whose
/// precision and recall are both zero.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    let confusion = confusion_matrix(y_true, y_pred, num_classes)?;
    let n = y_true.len() as f64;
    let mut total = 0.0;
    for class in 0..num_classes {
        let tp = confusion[class][class];
        let support: u64 = confusion[class].iter().sum();
        let predicted: u64 = confusion.iter().map(|r| r[class]).sum();
        let denom = support + predicted; // 2tp + fp + fn
        if support == 0 || denom == 0 {
            continue;
        }
        let f1 = 2.0 * tp as f64 / denom as f64;
        total += support as f64 / n * f1;
    }
    Ok(total)
}

/// Exact ROC AUC for binary labels via the Mann-Whitney rank statistic:
/// `P(score+ > score-) + P(tie)/2`.
pub fn auc_binary(scores: &[f64], y_true: &[usize]) -> Result<f64> {
    if scores.len() != y_true.len() || scores.is_empty() {
        return Err(Error::parameter("auc needs matching nonempty scores and labels"));
    }
    if let Some(&bad) = y_true.iter().find(|&&l| l > 1) {
        return Err(Error::parameter(format!("binary auc saw label {bad}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("non-finite score in auc_binary"));
    }
    let positives = y_true.iter().filter(|&&l| l == 1).count();
    let negatives = y_true.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(
            "auc undefined: both classes must be present".into(),
        ));
    }
    // average ranks (1-based), ties share the mean of their rank span
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let average_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if y_true[idx] == 1 {
                positive_rank_sum += average_rank;
            }
        }
        i = j + 1;
    }
    let u = positive_rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Builds the full report. AUC is filled in only for binary tasks when
/// scores are supplied; an undefined kappa or AUC becomes `None` rather than
/// an error so evaluation of degenerate splits still yields a report.
pub fn report(
    y_true: &[usize],
    y_pred: &[usize],
    num_classes: usize,
    binary_scores: Option<&[f64]>,
) -> Result<MetricsReport> {
    let confusion = confusion_matrix(y_true, y_pred, num_classes)?;
    let qwk = if num_classes >= 2 {
        match quadratic_weighted_kappa(y_true, y_pred, num_classes) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let auc = match binary_scores {
        Some(scores) if num_classes == 2 => match auc_binary(scores, y_true) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };
    Ok(MetricsReport {
        accuracy: accuracy(y_true, y_pred)?,
        balanced_accuracy: balanced_accuracy(y_true, y_pred, num_classes)?,
        qwk,
        weighted_f1: weighted_f1(y_true, y_pred, num_classes)?,
        auc,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    // Brute-force oracles written straight from the definitions; these stay
    // independent of the implementations above.
    pub(crate) mod oracle {
        use alloc::vec;
        use alloc::vec::Vec;

        pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
            let mut hits = 0.0;
            for i in 0..y_true.len() {
                if y_true[i] == y_pred[i] {
                    hits += 1.0;
                }
            }
            hits / y_true.len() as f64
        }

        pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], c: usize) -> f64 {
            let mut recalls = Vec::new();
            for class in 0..c {
                let mut right = 0.0;
                let mut total = 0.0;
                for i in 0..y_true.len() {
                    if y_true[i] == class {
                        total += 1.0;
                        if y_pred[i] == class {
                            right += 1.0;
                        }
                    }
                }
                if total > 0.0 {
                    recalls.push(right / total);
                }
            }
            recalls.iter().sum::<f64>() / recalls.len() as f64
        }

        pub fn qwk(y_true: &[usize], y_pred: &[usize], c: usize) -> Option<f64> {
            let n = y_true.len() as f64;
            let norm = ((c - 1) * (c - 1)) as f64;
            let mut observed = vec![vec![0.0f64; c]; c];
            for i in 0..y_true.len() {
                observed[y_true[i]][y_pred[i]] += 1.0;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..c {
                for j in 0..c {
                    let w = ((i as f64 - j as f64) * (i as f64 - j as f64)) / norm;
                    let row: f64 = observed[i].iter().sum();
                    let col: f64 = (0..c).map(|k| observed[k][j]).sum();
                    num += w * observed[i][j];
                    den += w * row * col / n;
                }
            }
            if den == 0.0 {
                None
            } else {
                Some(1.0 - num / den)
            }
        }

        pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], c: usize) -> f64 {
            let n = y_true.len() as f64;
            let mut total = 0.0;
            for class in 0..c {
                let mut tp = 0.0;
                let mut fp = 0.0;
                let mut fne = 0.0;
                for i in 0..y_true.len() {
                    match (y_true[i] == class, y_pred[i] == class) {
                        (true, true) => tp += 1.0,
                        (false, true) => fp += 1.0,
                        (true, false) => fne += 1.0,
                        _ => {}
                    }
                }
                let support = tp + fne;
                let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let recall = if support > 0.0 { tp / support } else { 0.0 };
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                total += support / n * f1;
            }
            total
        }

        /// All-pairs counting form of the Mann-Whitney statistic.
        pub fn auc(scores: &[f64], y_true: &[usize]) -> f64 {
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if y_true[i] == 1 && y_true[j] == 0 {
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
    }

    #[test]
    fn perfect_predictions_hit_one_everywhere() {
        let y = [0usize, 1, 2, 1, 0, 2];
        let r = report(&y, &y, 3, None).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.balanced_accuracy, 1.0);
        assert_eq!(r.qwk, Some(1.0));
        assert_eq!(r.weighted_f1, 1.0);
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert_eq!(accuracy(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert!(accuracy(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn balanced_accuracy_hand_case() {
        let got = balanced_accuracy(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((got - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_scores_one_over_c() {
        let y_true = [0usize, 0, 1, 1, 2, 2];
        let y_pred = [1usize; 6];
        let got = balanced_accuracy(&y_true, &y_pred, 3).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
        let acc = accuracy(&y_true, &y_pred).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn qwk_reversal_is_exactly_minus_one() {
        let got = quadratic_weighted_kappa(&[0, 1, 2], &[2, 1, 0], 3).unwrap();
        assert_eq!(got, -1.0);
    }

    #[test]
    fn qwk_perfect_is_exactly_one() {
        let y = [0usize, 3, 2, 5, 1, 4, 0];
        assert_eq!(quadratic_weighted_kappa(&y, &y, 6).unwrap(), 1.0);
    }

    #[test]
    fn qwk_degenerate_marginals_is_undefined() {
        let err = quadratic_weighted_kappa(&[1, 1, 1], &[1, 1, 1], 3).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn qwk_is_symmetric() {
        let mut rng = RngStream::new(31);
        for _ in 0..100 {
            let c = 2 + rng.below(5);
            let n = 2 + rng.below(40);
            let a: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let ab = quadratic_weighted_kappa(&a, &b, c);
            let ba = quadratic_weighted_kappa(&b, &a, c);
            match (ab, ba) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() < 1e-15),
                (Err(_), Err(_)) => {}
                other => panic!("asymmetric definedness: {other:?}"),
            }
        }
    }

    #[test]
    fn weighted_f1_ignores_absent_classes() {
        // class 2 never true and never predicted: zero weight
        let got = weighted_f1(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        let expect = oracle::weighted_f1(&[0, 0, 1], &[0, 1, 1], 3);
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn auc_hand_case_and_ties() {
        let got = auc_binary(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap();
        assert!((got - 0.75).abs() < 1e-15);
        let tied = auc_binary(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap();
        assert_eq!(tied, 0.5);
        let perfect = auc_binary(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(perfect, 1.0);
    }

    #[test]
    fn auc_requires_both_classes() {
        assert!(matches!(
            auc_binary(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = RngStream::new(37);
        for _ in 0..50 {
            let n = 4 + rng.below(30);
            let scores: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let transformed: Vec<f64> = scores.iter().map(|&s| (s * 0.5).exp() + 3.0).collect();
            let a = auc_binary(&scores, &labels).unwrap();
            let b = auc_binary(&transformed, &labels).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_metrics_match_brute_force_oracles() {
        let mut rng = RngStream::new(41);
        for _ in 0..1000 {
            let c = 2 + rng.below(5); // 2..=6
            let n = 2 + rng.below(49); // 2..=50
            let y_true: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let y_pred: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            assert!(
                (accuracy(&y_true, &y_pred).unwrap() - oracle::accuracy(&y_true, &y_pred)).abs() < 1e-12
            );
            assert!(
                (balanced_accuracy(&y_true, &y_pred, c).unwrap()
                    - oracle::balanced_accuracy(&y_true, &y_pred, c))
                .abs()
                    < 1e-12
            );
            assert!(
                (weighted_f1(&y_true, &y_pred, c).unwrap() - oracle::weighted_f1(&y_true, &y_pred, c))
                    .abs()
                    < 1e-12
            );
            match (quadratic_weighted_kappa(&y_true, &y_pred, c), oracle::qwk(&y_true, &y_pred, c)) {
                (Ok(got), Some(want)) => assert!((got - want).abs() < 1e-12, "{got} vs {want}"),
                (Err(Error::UndefinedMetric(_)), None) => {}
                other => panic!("kappa definedness mismatch: {other:?}"),
            }
            // binary AUC with ties injected via rounding
            let labels: Vec<usize> = y_true.iter().map(|&l| usize::from(l % 2 == 1)).collect();
            if labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0) {
                let scores: Vec<f64> = (0..n).map(|_| (rng.uniform_f64() * 8.0).round() / 8.0).collect();
                let got = auc_binary(&scores, &labels).unwrap();
                let want = oracle::auc(&scores, &labels);
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn balanced_accuracy_equals_accuracy_on_balanced_data() {
        let mut rng = RngStream::new(43);
        for _ in 0..50 {
            let c = 2 + rng.below(4);
            let per_class = 1 + rng.below(8);
            let mut y_true = Vec::new();
            for class in 0..c {
                for _ in 0..per_class {
                    y_true.push(class);
                }
            }
            let y_pred: Vec<usize> = (0..y_true.len()).map(|_| rng.below(c)).collect();
            let acc = accuracy(&y_true, &y_pred).unwrap();
            let ba = balanced_accuracy(&y_true, &y_pred, c).unwrap();
            assert!((acc - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_row_sums_are_class_counts() {
        let y_true = [0usize, 1, 1, 2, 2, 2];
        let y_pred = [0usize, 2, 1, 0, 2, 2];
        let confusion = confusion_matrix(&y_true, &y_pred, 3).unwrap();
        let row_sums: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![1, 2, 3]);
        let trace: u64 = (0..3).map(|i| confusion[i][i]).sum();
        let acc = accuracy(&y_true, &y_pred).unwrap();
        assert!((trace as f64 / 6.0 - acc).abs() < 1e-15);
    }
}
