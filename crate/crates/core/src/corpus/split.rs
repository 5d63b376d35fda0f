//! Stratified splitting: one-shot train/test and k-fold assignments.
//!
//! Both are deterministic given the seed: indices are grouped per class,
//! shuffled with a forked stream per class, then taken in order (train/test)
//! or dealt round-robin (folds).

use super::{CorpusError, Sample, Sentiment};
use crate::num::Rng;

/// Maps every sample index to a fold id in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of_sample: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn n_folds(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, sample: usize) -> usize {
        self.fold_of_sample[sample]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.fold_of_sample
    }

    /// Sample indices held out by `fold` and the complementary training set.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, &f) in self.fold_of_sample.iter().enumerate() {
            if f == fold {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        (train, val)
    }

    /// Serialise as one `index<TAB>fold` line per sample.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.fold_of_sample.iter().enumerate() {
            out.push_str(&format!("{i}\t{f}\n"));
        }
        out
    }
}

fn indices_by_class(samples: &[Sample]) -> [Vec<usize>; 3] {
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, s) in samples.iter().enumerate() {
        by_class[s.sentiment.code()].push(i);
    }
    by_class
}

/// Stratified shuffle split. Per class, `round(ratio · n)` samples go to the
/// train side; corpus order is preserved inside each side.
pub fn train_test_split(
    samples: &[Sample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>), CorpusError> {
    if samples.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadSplitRatio(ratio));
    }
    let base = Rng::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, mut idx) in indices_by_class(samples).into_iter().enumerate() {
        let mut rng = base.fork(class as u64);
        rng.shuffle(&mut idx);
        let n_train = ((idx.len() as f64) * ratio).round() as usize;
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Stratified k-fold assignment: shuffle within each class, deal round-robin.
pub fn stratified_kfold(
    samples: &[Sample],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, CorpusError> {
    if k < 2 {
        return Err(CorpusError::BadFoldCount(k));
    }
    if samples.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let by_class = indices_by_class(samples);
    for (class, idx) in by_class.iter().enumerate() {
        if !idx.is_empty() && idx.len() < k {
            return Err(CorpusError::TooFewSamples(
                Sentiment::from_code(class).expect("class code"),
            ));
        }
    }
    let base = Rng::new(seed);
    let mut fold_of_sample = vec![0usize; samples.len()];
    for (class, mut idx) in by_class.into_iter().enumerate() {
        let mut rng = base.fork(class as u64);
        rng.shuffle(&mut idx);
        for (pos, &sample) in idx.iter().enumerate() {
            fold_of_sample[sample] = pos % k;
        }
    }
    Ok(FoldAssignment { fold_of_sample, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(counts: [usize; 3]) -> Vec<Sample> {
        let mut v = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            for i in 0..n {
                v.push(Sample {
                    text_id: format!("{class}-{i}"),
                    text: format!("text {class} {i}"),
                    selected_text: format!("text {class} {i}"),
                    sentiment: Sentiment::from_code(class).unwrap(),
                });
            }
        }
        v
    }

    #[test]
    fn split_counts_match_table_arithmetic() {
        // 27480 samples at 80% -> 21984 train within ±1 per class.
        let samples = corpus([8582, 7781, 11117]);
        let (train, test) = train_test_split(&samples, 0.8, 7).unwrap();
        assert_eq!(train.len() + test.len(), 27480);
        assert!((train.len() as i64 - 21984).unsigned_abs() <= 3);
        let per_class = |set: &[Sample], s: Sentiment| {
            set.iter().filter(|x| x.sentiment == s).count() as i64
        };
        for (s, total) in [
            (Sentiment::Positive, 8582f64),
            (Sentiment::Negative, 7781f64),
            (Sentiment::Neutral, 11117f64),
        ] {
            let got = per_class(&train, s);
            let ideal = (total * 0.8).round() as i64;
            assert!((got - ideal).abs() <= 1, "{s}: {got} vs {ideal}");
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let samples = corpus([13, 9, 11]);
        let (a_train, a_test) = train_test_split(&samples, 0.8, 42).unwrap();
        let (b_train, b_test) = train_test_split(&samples, 0.8, 42).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let mut ids: Vec<&str> = a_train
            .iter()
            .chain(&a_test)
            .map(|s| s.text_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), samples.len());
    }

    #[test]
    fn single_class_80_20() {
        let samples = corpus([10, 0, 0]);
        let (train, test) = train_test_split(&samples, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn split_rejects_empty_and_bad_ratio() {
        assert!(matches!(
            train_test_split(&[], 0.8, 0),
            Err(CorpusError::EmptyInput)
        ));
        let samples = corpus([3, 0, 0]);
        assert!(matches!(
            train_test_split(&samples, 1.0, 0),
            Err(CorpusError::BadSplitRatio(_))
        ));
    }

    #[test]
    fn kfold_exact_stratification() {
        // 40/30/30 into five folds -> every fold holds 8/6/6.
        let samples = corpus([40, 30, 30]);
        let folds = stratified_kfold(&samples, 5, 3).unwrap();
        for fold in 0..5 {
            let (_, val) = folds.split(fold);
            let mut counts = [0usize; 3];
            for i in val {
                counts[samples[i].sentiment.code()] += 1;
            }
            assert_eq!(counts, [8, 6, 6]);
        }
    }

    #[test]
    fn kfold_partitions_exactly_once() {
        let samples = corpus([17, 11, 23]);
        let folds = stratified_kfold(&samples, 5, 12).unwrap();
        let mut seen = vec![0usize; samples.len()];
        for fold in 0..5 {
            let (train, val) = folds.split(fold);
            assert_eq!(train.len() + val.len(), samples.len());
            for i in val {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "each sample in exactly one fold");
    }

    #[test]
    fn kfold_deterministic() {
        let samples = corpus([12, 12, 12]);
        let a = stratified_kfold(&samples, 5, 9).unwrap();
        let b = stratified_kfold(&samples, 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kfold_too_few_samples() {
        let samples = corpus([3, 12, 12]);
        assert!(matches!(
            stratified_kfold(&samples, 5, 0),
            Err(CorpusError::TooFewSamples(Sentiment::Positive))
        ));
    }

    #[test]
    fn kfold_class_balance_within_one() {
        let samples = corpus([43, 29, 31]);
        let k = 5;
        let folds = stratified_kfold(&samples, k, 5).unwrap();
        for fold in 0..k {
            let (_, val) = folds.split(fold);
            let mut counts = [0usize; 3];
            for i in val {
                counts[samples[i].sentiment.code()] += 1;
            }
            for (class, &total) in [43usize, 29, 31].iter().enumerate() {
                let ideal = total as f64 / k as f64;
                let got = counts[class] as f64;
                assert!(
                    (got - ideal.round()).abs() <= 1.0,
                    "fold {fold} class {class}: {got} vs ideal {ideal}"
                );
            }
        }
    }
}
