//! Evaluation metrics: Jaccard over token sets, precision/recall/F1 from
//! confusion counts, and one-vs-rest ROC AUC with macro averaging.

use std::collections::HashSet;

use super::EvalError;

/// Jaccard similarity over whitespace-split token sets:
/// `|A ∩ B| / (|A| + |B| − |A ∩ B|)`. Two empty strings score 1 by
/// convention. Tokens are compared verbatim — no punctuation stripping —
/// so "wine" and "wine." are different tokens.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let set_a: HashSet<&str> = a.split_whitespace().collect();
    let set_b: HashSet<&str> = b.split_whitespace().collect();
    if set_a.is_empty() && set_b.is_empty() {
        return 1.0;
    }
    let inter = set_a.intersection(&set_b).count() as f64;
    let union = (set_a.len() + set_b.len()) as f64 - inter;
    inter / union
}

/// Per-class confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

/// `P = TP/(TP+FP)`, `R = TP/(TP+FN)`. A 0/0 ratio resolves to 0.
pub fn precision_recall(counts: &ConfusionCounts) -> (f64, f64) {
    let ratio = |num: u64, denom: u64| {
        if denom == 0 {
            0.0
        } else {
            num as f64 / denom as f64
        }
    };
    (
        ratio(
            counts.true_positive,
            counts.true_positive + counts.false_positive,
        ),
        ratio(
            counts.true_positive,
            counts.true_positive + counts.false_negative,
        ),
    )
}

/// `F1 = TP / (TP + (FP+FN)/2)`, equivalently the harmonic mean of P and R.
pub fn f1(counts: &ConfusionCounts) -> f64 {
    let denom = counts.true_positive as f64
        + 0.5 * (counts.false_positive + counts.false_negative) as f64;
    if denom == 0.0 {
        0.0
    } else {
        counts.true_positive as f64 / denom
    }
}

/// Confusion counts of one class treated one-vs-rest.
pub fn confusion_for_class(predicted: &[usize], labels: &[usize], class: usize) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&p, &y) in predicted.iter().zip(labels) {
        match (p == class, y == class) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, true) => c.false_negative += 1,
            (false, false) => c.true_negative += 1,
        }
    }
    c
}

/// Unweighted mean F1 over the classes present in `labels`.
pub fn macro_f1(predicted: &[usize], labels: &[usize], n_classes: usize) -> f64 {
    let mut sum = 0.0;
    for class in 0..n_classes {
        sum += f1(&confusion_for_class(predicted, labels, class));
    }
    sum / n_classes as f64
}

/// Binary ROC AUC by the rank (Mann-Whitney) formulation; tied scores earn
/// half credit. `labels[i]` is true for positives.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    // Rank with midpoints for ties.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            rank[idx] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = rank
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Macro-averaged one-vs-rest ROC AUC over `n_classes`. `scores[i]` holds a
/// score per class for sample `i`.
pub fn auc(scores: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(EvalError::DegenerateLabels);
    }
    let mut sum = 0.0;
    for class in 0..n_classes {
        let class_scores: Vec<f64> = scores.iter().map(|s| s[class]).collect();
        let class_labels: Vec<bool> = labels.iter().map(|&y| y == class).collect();
        sum += binary_auc(&class_scores, &class_labels)?;
    }
    Ok(sum / n_classes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_jaccard_pair() {
        // Trailing comma and period make two tokens differ: 5 shared of 9.
        let score = jaccard(
            "Hello this is a really good wine",
            "Hello, this is a really good wine.",
        );
        assert!((score - 5.0 / 9.0).abs() < 5e-4);
    }

    #[test]
    fn jaccard_identity_and_disjoint() {
        assert_eq!(jaccard("same words here", "same words here"), 1.0);
        assert_eq!(jaccard("aa bb", "cc dd"), 0.0);
        assert_eq!(jaccard("", ""), 1.0);
        assert_eq!(jaccard("word", ""), 0.0);
    }

    #[test]
    fn jaccard_symmetric_bounded() {
        let pairs = [
            ("a b c", "b c d"),
            ("x", "x y"),
            ("repeated repeated", "repeated"),
        ];
        for (a, b) in pairs {
            let ab = jaccard(a, b);
            assert_eq!(ab, jaccard(b, a));
            assert!((0.0..=1.0).contains(&ab));
        }
        // Duplicate tokens collapse: sets, not bags.
        assert_eq!(jaccard("repeated repeated", "repeated"), 1.0);
    }

    #[test]
    fn precision_recall_f1_formulas() {
        let perfect = ConfusionCounts {
            true_positive: 10,
            ..Default::default()
        };
        assert_eq!(precision_recall(&perfect), (1.0, 1.0));
        assert_eq!(f1(&perfect), 1.0);

        let mixed = ConfusionCounts {
            true_positive: 1,
            false_positive: 1,
            false_negative: 1,
            true_negative: 0,
        };
        assert_eq!(f1(&mixed), 0.5);

        let no_tp = ConfusionCounts {
            true_positive: 0,
            false_positive: 3,
            false_negative: 2,
            true_negative: 1,
        };
        assert_eq!(precision_recall(&no_tp).0, 0.0);
        assert_eq!(f1(&no_tp), 0.0);
    }

    #[test]
    fn f1_is_harmonic_mean_when_defined() {
        let mut rng = crate::num::Rng::new(5);
        for _ in 0..200 {
            let c = ConfusionCounts {
                true_positive: 1 + rng.next_below(20) as u64,
                false_positive: rng.next_below(20) as u64,
                false_negative: rng.next_below(20) as u64,
                true_negative: rng.next_below(20) as u64,
            };
            let (p, r) = precision_recall(&c);
            let harmonic = 2.0 * p * r / (p + r);
            assert!((f1(&c) - harmonic).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_separable_case() {
        let auc = binary_auc(&[0.9, 0.1], &[true, false]).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn auc_worked_four_sample_case() {
        // Three of four positive/negative pairs ordered correctly.
        let auc = binary_auc(&[0.8, 0.7, 0.6, 0.3], &[true, false, true, false]).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_reversal_symmetry() {
        let scores = [0.2, 0.9, 0.5, 0.1, 0.7];
        let labels = [false, true, true, false, false];
        let forward = binary_auc(&scores, &labels).unwrap();
        let reversed: Vec<f64> = scores.iter().map(|s| -s).collect();
        let backward = binary_auc(&reversed, &labels).unwrap();
        assert!((forward + backward - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_degenerate_labels() {
        assert!(matches!(
            binary_auc(&[0.5, 0.6], &[true, true]),
            Err(EvalError::DegenerateLabels)
        ));
    }

    #[test]
    fn auc_matches_pair_counting_with_ties() {
        // Independent oracle: count correctly ordered positive/negative
        // pairs, half credit for ties.
        let oracle = |scores: &[f64], labels: &[bool]| {
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for (i, &li) in labels.iter().enumerate() {
                if !li {
                    continue;
                }
                for (j, &lj) in labels.iter().enumerate() {
                    if lj {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
            wins / pairs
        };
        let mut rng = crate::num::Rng::new(31);
        for _ in 0..300 {
            let n = 2 + rng.next_below(19);
            let scores: Vec<f64> = (0..n).map(|_| (rng.next_below(7) as f64) / 6.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
            let n_pos = labels.iter().filter(|&&l| l).count();
            if n_pos == 0 || n_pos == n {
                continue;
            }
            let fast = binary_auc(&scores, &labels).unwrap();
            let slow = oracle(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "{scores:?} {labels:?}");
        }
    }
}
