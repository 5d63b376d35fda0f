//! The cross-validated experiment runner: outer 80/20 split, stratified
//! k-fold over the training side, one model per fold, per-epoch validation
//! metrics, test metrics, and persisted checkpoints for later ensembling.
//!
//! Extra-encoding semantics for span extraction:
//! - `En`: the sequence carries a constant sentiment slot and the head has
//!   no conditioning channels — the model sees text alone.
//! - `Es`: the gold sentiment enters both the sequence slot and a learned
//!   per-token embedding.
//! - `Esc`: additionally, coverage channels derived from the labelled span
//!   (its token indicator and the ⌊c⌋ bucket) are summed into the features,
//!   i.e. the experiment measures metadata-given refinement capacity. The
//!   deployed cascade instead derives coverage from the base model's own
//!   prediction.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{
    correct_corpus, preprocess_corpus, stratified_kfold, train_test_split, Sample, Sentiment,
};
use crate::coverage::{compute_coverage, coverage_features};
use crate::heads::{
    classification_loss, decode_span, span_training_loss, ClassifierNet, SpanAux, SpanNet,
};
use crate::num::{
    adam_step, save_checkpoint, AdamState, LrSchedule, Manifest, Rng, Tape,
};
use crate::tokenizer::{
    assemble_example, token_span_to_text, train_bpe, Encoding, SpanLabel, Vocabulary,
    SPECIAL_POSITIONS,
};

use super::config::{DatasetVariant, EncodingVariant, ExperimentConfig, Task};
use super::metrics::{auc, confusion_for_class, f1, jaccard};
use super::EvalError;

/// One classification example, ready for the model.
pub struct PreparedSc {
    pub encoding: Encoding,
    pub label: Sentiment,
}

/// One span-extraction example, ready for the model.
pub struct PreparedSe {
    pub encoding: Encoding,
    pub aux: SpanAux,
    pub selected: String,
}

/// Training loop settings shared by both tasks.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub epochs: u32,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub label_smoothing: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl TrainSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        TrainSettings {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size.max(1),
            schedule: LrSchedule::new(cfg.learning_rate, cfg.lr_gamma, cfg.lr_milestones.clone()),
            label_smoothing: cfg.label_smoothing,
            adam_beta1: cfg.adam_beta1,
            adam_beta2: cfg.adam_beta2,
            adam_epsilon: cfg.adam_epsilon,
        }
    }
}

/// Classification examples. Sequences take a constant sentiment slot so the
/// label never leaks into the input.
pub fn prepare_sc(
    vocab: &Vocabulary,
    samples: &[Sample],
    max_len: usize,
) -> Vec<PreparedSc> {
    samples
        .iter()
        .filter_map(|s| {
            let encoding =
                assemble_example(vocab, &s.text, Sentiment::Neutral, None, max_len).ok()?;
            Some(PreparedSc {
                encoding,
                label: s.sentiment,
            })
        })
        .collect()
}

/// Span examples for the given extra-encoding variant. Neutral samples are
/// bypassed, and samples whose label span cannot be located are skipped.
pub fn prepare_se(
    vocab: &Vocabulary,
    samples: &[Sample],
    max_len: usize,
    variant: EncodingVariant,
    kappa: f64,
) -> Vec<PreparedSe> {
    samples
        .iter()
        .filter(|s| s.sentiment != Sentiment::Neutral)
        .filter_map(|s| {
            let start = s.text.find(&s.selected_text)?;
            if s.selected_text.is_empty() {
                return None;
            }
            let span =
                SpanLabel::new(start, start + s.selected_text.len(), s.text.len()).ok()?;
            let slot_sentiment = if variant.uses_sentiment() {
                s.sentiment
            } else {
                Sentiment::Neutral
            };
            let encoding =
                assemble_example(vocab, &s.text, slot_sentiment, Some(span), max_len).ok()?;
            let (label_start, label_end) = encoding.label_span()?;
            let coverage = if variant.uses_coverage() {
                let m = label_end - label_start + 1;
                let n = encoding.n_text_tokens();
                let c = compute_coverage(m.min(n), n, kappa).ok()?;
                Some(coverage_features(c, (label_start, label_end), &encoding).ok()?)
            } else {
                None
            };
            Some(PreparedSe {
                aux: SpanAux {
                    sentiment: variant.uses_sentiment().then_some(s.sentiment),
                    coverage,
                },
                selected: s.selected_text.clone(),
                encoding,
            })
        })
        .collect()
}

/// Train a classifier in place. `after_epoch` sees the epoch index and the
/// net; returning `false` stops early.
pub fn train_classifier(
    net: &mut ClassifierNet,
    examples: &[PreparedSc],
    settings: &TrainSettings,
    seed: u64,
    mut after_epoch: impl FnMut(u32, &ClassifierNet) -> bool,
) -> Result<(), EvalError> {
    let base = Rng::new(seed);
    let mut dropout_rng = base.fork(7);
    let mut shuffle_rng = base.fork(9);
    let mut adam = AdamState::new(&net.store, settings.schedule.base_lr);
    adam.beta1 = settings.adam_beta1;
    adam.beta2 = settings.adam_beta2;
    adam.epsilon = settings.adam_epsilon;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..settings.epochs {
        adam.lr = settings.schedule.lr_at(epoch);
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(settings.batch_size) {
            let mut tape = Tape::new();
            let mut total = None;
            for &i in batch {
                let ex = &examples[i];
                let logits = net.logits(&mut tape, &ex.encoding, Some(&mut dropout_rng))?;
                let loss =
                    classification_loss(&mut tape, logits, ex.label, settings.label_smoothing)?;
                total = Some(match total {
                    Some(t) => tape.add(t, loss)?,
                    None => loss,
                });
            }
            let Some(total) = total else { continue };
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            tape.backward_into(mean, &mut net.store)?;
            adam_step(&mut net.store, &mut adam)?;
        }
        if !after_epoch(epoch, net) {
            break;
        }
    }
    Ok(())
}

/// Train a span network in place.
pub fn train_span(
    net: &mut SpanNet,
    examples: &[PreparedSe],
    settings: &TrainSettings,
    seed: u64,
    mut after_epoch: impl FnMut(u32, &SpanNet) -> bool,
) -> Result<(), EvalError> {
    let base = Rng::new(seed);
    let mut dropout_rng = base.fork(7);
    let mut shuffle_rng = base.fork(9);
    let mut adam = AdamState::new(&net.store, settings.schedule.base_lr);
    adam.beta1 = settings.adam_beta1;
    adam.beta2 = settings.adam_beta2;
    adam.epsilon = settings.adam_epsilon;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..settings.epochs {
        adam.lr = settings.schedule.lr_at(epoch);
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(settings.batch_size) {
            let mut tape = Tape::new();
            let mut total = None;
            for &i in batch {
                let ex = &examples[i];
                let out = net.output(&mut tape, &ex.encoding, &ex.aux, Some(&mut dropout_rng))?;
                let loss =
                    span_training_loss(&mut tape, out, &ex.encoding, settings.label_smoothing)?;
                total = Some(match total {
                    Some(t) => tape.add(t, loss)?,
                    None => loss,
                });
            }
            let Some(total) = total else { continue };
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            tape.backward_into(mean, &mut net.store)?;
            adam_step(&mut net.store, &mut adam)?;
        }
        if !after_epoch(epoch, net) {
            break;
        }
    }
    Ok(())
}

/// Accuracy, macro F1 and macro AUC of a classifier over examples.
pub fn classifier_metrics(
    net: &ClassifierNet,
    examples: &[PreparedSc],
) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut predicted = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    let mut scores = Vec::with_capacity(examples.len());
    for ex in examples {
        let probs = net.classify(&ex.encoding)?;
        predicted.push(probs.argmax().code());
        labels.push(ex.label.code());
        scores.push(probs.probs.to_vec());
    }
    let correct = predicted
        .iter()
        .zip(&labels)
        .filter(|(p, y)| p == y)
        .count();
    let mut out = BTreeMap::new();
    out.insert(
        "accuracy".to_string(),
        correct as f64 / examples.len().max(1) as f64,
    );
    let mut f1_sum = 0.0;
    for class in 0..3 {
        f1_sum += f1(&confusion_for_class(&predicted, &labels, class));
    }
    out.insert("f1_macro".to_string(), f1_sum / 3.0);
    // AUC needs both polarities per class; degenerate folds report 0.5.
    let auc_value = auc(&scores, &labels, 3).unwrap_or(0.5);
    out.insert("auc_macro".to_string(), auc_value);
    Ok(out)
}

/// Mean Jaccard of decoded spans against the labelled subsentences.
pub fn span_metrics(
    net: &SpanNet,
    examples: &[PreparedSe],
) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut total = 0.0;
    for ex in examples {
        let logits = net.span_logits(&ex.encoding, &ex.aux)?;
        let (s, e) = decode_span(&logits)?;
        let predicted = token_span_to_text(&ex.encoding, s, e)?;
        total += jaccard(&predicted, &ex.selected);
    }
    let mut out = BTreeMap::new();
    out.insert(
        "jaccard".to_string(),
        total / examples.len().max(1) as f64,
    );
    Ok(out)
}

/// Per-epoch validation metrics for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub metrics: BTreeMap<String, f64>,
}

/// A trained fold's artefacts.
pub struct TrainedFold {
    pub fold: usize,
    pub checkpoint: std::path::PathBuf,
    pub epochs: Vec<EpochRecord>,
    pub test_metrics: BTreeMap<String, f64>,
}

/// Full report of one experiment.
pub struct FoldReport {
    pub experiment: String,
    pub folds: Vec<TrainedFold>,
}

impl FoldReport {
    pub fn metric_names(&self) -> Vec<String> {
        self.folds
            .first()
            .map(|f| f.test_metrics.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Mean and population standard deviation of a final-validation metric.
    pub fn val_mean_std(&self, metric: &str) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .folds
            .iter()
            .filter_map(|f| f.epochs.last()?.metrics.get(metric).copied())
            .collect();
        mean_std(&values)
    }

    pub fn test_mean_std(&self, metric: &str) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .folds
            .iter()
            .filter_map(|f| f.test_metrics.get(metric).copied())
            .collect();
        mean_std(&values)
    }

    /// Plot-ready per-epoch series: `fold<TAB>epoch<TAB>metric<TAB>value`.
    pub fn series_tsv(&self) -> String {
        let mut out = String::from("fold\tepoch\tmetric\tvalue\n");
        for fold in &self.folds {
            for rec in &fold.epochs {
                for (metric, value) in &rec.metrics {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{:.6}\n",
                        fold.fold, rec.epoch, metric, value
                    ));
                }
            }
        }
        out
    }

    /// Human-readable summary, stable across replays.
    pub fn report_text(&self) -> String {
        let mut out = format!("experiment {}\nfolds {}\n", self.experiment, self.folds.len());
        for metric in self.metric_names() {
            if let Some((mean, std)) = self.val_mean_std(&metric) {
                let values: Vec<String> = self
                    .folds
                    .iter()
                    .filter_map(|f| f.epochs.last()?.metrics.get(&metric).copied())
                    .map(|v| format!("{v:.6}"))
                    .collect();
                out.push_str(&format!(
                    "val {metric}: [{}] mean {mean:.6} std {std:.6}\n",
                    values.join(", ")
                ));
            }
            if let Some((mean, std)) = self.test_mean_std(&metric) {
                let values: Vec<String> = self
                    .folds
                    .iter()
                    .filter_map(|f| f.test_metrics.get(&metric).copied())
                    .map(|v| format!("{v:.6}"))
                    .collect();
                out.push_str(&format!(
                    "test {metric}: [{}] mean {mean:.6} std {std:.6}\n",
                    values.join(", ")
                ));
            }
        }
        out
    }
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Apply the dataset variant: preprocessing alone, or repair + preprocessing.
pub fn apply_dataset_variant(samples: &[Sample], variant: DatasetVariant) -> Vec<Sample> {
    match variant {
        DatasetVariant::Tr => preprocess_corpus(samples),
        DatasetVariant::TrCorr => correct_corpus(samples).0,
    }
}

/// Run one experiment end to end, writing artefacts into `out_dir`:
/// `config.txt`, `vocab.tsv`, `merges.txt`, `folds.tsv`, `fold_<k>.ckpt`,
/// `series.tsv` and `report.txt`.
pub fn run_experiment(
    config: &ExperimentConfig,
    raw_samples: &[Sample],
    out_dir: &Path,
) -> Result<FoldReport, EvalError> {
    fs::create_dir_all(out_dir)?;
    let mut samples = apply_dataset_variant(raw_samples, config.dataset);
    if let Some(limit) = config.data_limit {
        samples.truncate(limit);
    }
    // The tokenizer plays the role of an externally trained vocabulary, so
    // it sees the whole corpus; splits below only govern model training.
    let all_texts: Vec<&str> = samples.iter().map(|s| s.text.as_str()).collect();
    let vocab = train_bpe(&all_texts, config.vocab_size)?;
    // Drop anything the fixed sequence length cannot hold, before splitting,
    // so fold stratification stays exact over the usable corpus.
    samples.retain(|s| {
        let (ids, _) = vocab.encode(&s.text);
        ids.len() + SPECIAL_POSITIONS <= config.max_len
    });

    let (train_samples, test_samples) =
        train_test_split(&samples, config.train_ratio, config.seed)?;
    let assignment = stratified_kfold(&train_samples, config.folds, config.seed)?;
    fs::write(out_dir.join("folds.tsv"), assignment.to_tsv())?;

    vocab.save(&out_dir.join("vocab.tsv"), &out_dir.join("merges.txt"))?;
    fs::write(out_dir.join("config.txt"), config.to_text())?;

    let settings = TrainSettings::from_config(config);
    let manifest_base = Manifest {
        config_hash: config.config_hash(),
        seed: config.seed,
        epoch: config.epochs,
    };

    let mut folds = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let (train_idx, val_idx) = assignment.split(fold);
        let pick = |idx: &[usize]| -> Vec<Sample> {
            idx.iter().map(|&i| train_samples[i].clone()).collect()
        };
        let fold_train = pick(&train_idx);
        let fold_val = pick(&val_idx);
        let fold_seed = config.seed.wrapping_add(1 + fold as u64);
        let checkpoint = out_dir.join(format!("fold_{fold}.ckpt"));
        let mut epochs = Vec::new();

        let (store, test_metrics) = match config.task {
            Task::Sc => {
                let train_ex = prepare_sc(&vocab, &fold_train, config.max_len);
                let val_ex = prepare_sc(&vocab, &fold_val, config.max_len);
                let test_ex = prepare_sc(&vocab, &test_samples, config.max_len);
                let mut net = ClassifierNet::init(
                    config.encoder_config(vocab.len()),
                    config.classifier_dropout,
                    fold_seed,
                )?;
                train_classifier(&mut net, &train_ex, &settings, fold_seed, |epoch, net| {
                    let metrics = classifier_metrics(net, &val_ex).unwrap_or_default();
                    epochs.push(EpochRecord { epoch, metrics });
                    true
                })?;
                let test_metrics = classifier_metrics(&net, &test_ex)?;
                (net.store, test_metrics)
            }
            Task::Se => {
                let variant = config.encoding;
                let train_ex = prepare_se(
                    &vocab,
                    &fold_train,
                    config.max_len,
                    variant,
                    config.refine_kappa,
                );
                let val_ex = prepare_se(
                    &vocab,
                    &fold_val,
                    config.max_len,
                    variant,
                    config.refine_kappa,
                );
                let test_ex = prepare_se(
                    &vocab,
                    &test_samples,
                    config.max_len,
                    variant,
                    config.refine_kappa,
                );
                let mut net = SpanNet::init(
                    config.encoder_config(vocab.len()),
                    config.span_head_config(),
                    variant.uses_sentiment(),
                    variant.uses_coverage(),
                    fold_seed,
                )?;
                train_span(&mut net, &train_ex, &settings, fold_seed, |epoch, net| {
                    let metrics = span_metrics(net, &val_ex).unwrap_or_default();
                    epochs.push(EpochRecord { epoch, metrics });
                    true
                })?;
                let test_metrics = span_metrics(&net, &test_ex)?;
                (net.store, test_metrics)
            }
        };
        save_checkpoint(&checkpoint, &store, &manifest_base)?;
        folds.push(TrainedFold {
            fold,
            checkpoint,
            epochs,
            test_metrics,
        });
    }

    let report = FoldReport {
        experiment: config.name(),
        folds,
    };
    fs::write(out_dir.join("series.tsv"), report.series_tsv())?;
    fs::write(out_dir.join("report.txt"), report.report_text())?;
    Ok(report)
}
