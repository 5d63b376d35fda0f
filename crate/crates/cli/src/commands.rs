//! Command implementations. Primary outputs go to files or stdout and are
//! byte-stable for a fixed seed; diagnostics go to stderr.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sentispan_core::corpus::{
    class_counts, correct_corpus, jaccard_distribution, load_csv, ngram_counts,
    preprocess_corpus, Sample, Sentiment,
};
use sentispan_core::coverage::RefinementParams;
use sentispan_core::eval::{
    apply_dataset_variant, classifier_metrics, prepare_sc, prepare_se, run_experiment,
    span_metrics, synthetic::synthetic_benchmark, ExperimentConfig, Task,
};
use sentispan_core::heads::decode_span;
use sentispan_core::pipeline::{
    cam, equal_weights, ClassifierEnsemble, Pipeline, SpanEnsemble,
};
use sentispan_core::tokenizer::token_span_to_text;

use crate::bundle::{load_classifiers, load_spans, parse_ensemble_spec, read_trained_dir};

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_escape(field: &str) -> String {
    if field.contains(['"', ',', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn samples_to_csv(samples: &[Sample]) -> String {
    let mut out = String::from("textID,text,selected_text,sentiment\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_escape(&s.text_id),
            csv_escape(&s.text),
            csv_escape(&s.selected_text),
            s.sentiment
        ));
    }
    out
}

fn dataset_stats(samples: &[Sample]) -> String {
    let counts = class_counts(samples);
    let total = samples.len();
    let unique_texts: BTreeSet<&str> = samples.iter().map(|s| s.text.as_str()).collect();
    let unique_selected: BTreeSet<&str> =
        samples.iter().map(|s| s.selected_text.as_str()).collect();
    let pct = |n: usize| {
        if total == 0 {
            "0.00%".to_string()
        } else {
            format!("{:.2}%", 100.0 * n as f64 / total as f64)
        }
    };
    let mut out = String::new();
    out.push_str(&format!("samples\t{total}\n"));
    out.push_str(&format!("unique_texts\t{}\n", unique_texts.len()));
    out.push_str(&format!("unique_selected\t{}\n", unique_selected.len()));
    for s in Sentiment::ALL {
        let n = counts[s.code()];
        out.push_str(&format!("{s}\t{n}\t{}\n", pct(n)));
    }
    out
}

pub fn ingest(csv: &Path, out: &Path) -> Result<()> {
    let raw = load_csv(csv)?;
    let processed = preprocess_corpus(&raw);
    let stats = dataset_stats(&processed);
    write_file(&out.join("stats.txt"), &stats)?;
    write_file(&out.join("preprocessed.csv"), &samples_to_csv(&processed))?;
    print!("{stats}");
    Ok(())
}

pub fn correct(csv: &Path, out: &Path, report_path: &Path) -> Result<()> {
    let raw = load_csv(csv)?;
    let (corrected, report) = correct_corpus(&raw);
    write_file(out, &samples_to_csv(&corrected))?;
    let mut rows = String::new();
    for (id, old, new) in &report.per_sample {
        rows.push_str(&format!("{id}\t{old}\t{new}\n"));
    }
    write_file(report_path, &rows)?;
    println!("corrected\t{}", report.n_corrected);
    println!("unrecoverable\t{}", report.n_unrecoverable);
    println!(
        "fraction_of_nonneutral\t{:.4}",
        report.fraction_of_nonneutral
    );
    println!("fraction_of_all\t{:.4}", report.fraction_of_all);
    Ok(())
}

pub fn eda(csv: &Path, max_ngram: usize, out: &Path) -> Result<()> {
    if max_ngram == 0 {
        bail!("--ngrams must be at least 1");
    }
    let raw = load_csv(csv)?;
    let samples = preprocess_corpus(&raw);
    write_file(&out.join("sentiment_distribution.tsv"), &dataset_stats(&samples))?;

    for n in 1..=max_ngram {
        for sentiment in Sentiment::ALL {
            let table = ngram_counts(&samples, n, sentiment);
            let mut text = String::from("gram\tcount\n");
            for (gram, count) in table.top(20) {
                text.push_str(&format!("{gram}\t{count}\n"));
            }
            write_file(&out.join(format!("ngrams_{n}_{sentiment}.tsv")), &text)?;
        }
    }

    let hist = jaccard_distribution(&samples, 20);
    let mut text = String::from("bin_low\tbin_high\tpositive\tnegative\tneutral\n");
    for bin in 0..hist.bin_count {
        let low = bin as f64 / hist.bin_count as f64;
        let high = (bin + 1) as f64 / hist.bin_count as f64;
        text.push_str(&format!(
            "{low:.2}\t{high:.2}\t{}\t{}\t{}\n",
            hist.bins[0][bin], hist.bins[1][bin], hist.bins[2][bin]
        ));
    }
    write_file(&out.join("jaccard_histogram.tsv"), &text)?;
    println!("eda written to {}", out.display());
    Ok(())
}

pub fn train(
    config_path: &Path,
    out: &Path,
    csv: Option<&Path>,
    synthetic: Option<usize>,
) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("cannot read config {}", config_path.display()))?;
    let config = ExperimentConfig::parse(&text)?;
    let samples = match (csv, synthetic) {
        (Some(path), None) => load_csv(path)?,
        (None, Some(n)) => synthetic_benchmark(n, config.seed),
        (None, None) => bail!("provide --csv PATH or --synthetic N"),
        (Some(_), Some(_)) => bail!("--csv and --synthetic are mutually exclusive"),
    };
    let report = run_experiment(&config, &samples, out)?;
    print!("{}", report.report_text());
    Ok(())
}

pub fn evaluate(checkpoints: &Path, test_csv: &Path) -> Result<()> {
    let td = read_trained_dir(checkpoints)?;
    let raw = load_csv(test_csv)?;
    let samples = apply_dataset_variant(&raw, td.config.dataset);
    println!("experiment\t{}", td.config.name());
    match td.config.task {
        Task::Sc => {
            let nets = load_classifiers(&td)?;
            let examples = prepare_sc(&td.vocab, &samples, td.config.max_len);
            let mut sums: Vec<(String, f64)> = Vec::new();
            for (fold, net) in nets.iter().enumerate() {
                let metrics = classifier_metrics(net, &examples)?;
                for (k, v) in &metrics {
                    println!("fold_{fold}\t{k}\t{v:.6}");
                    match sums.iter_mut().find(|(name, _)| name == k) {
                        Some((_, total)) => *total += v,
                        None => sums.push((k.clone(), *v)),
                    }
                }
            }
            for (k, total) in sums {
                println!("mean\t{k}\t{:.6}", total / nets.len() as f64);
            }
        }
        Task::Se => {
            let nets = load_spans(&td)?;
            let examples = prepare_se(
                &td.vocab,
                &samples,
                td.config.max_len,
                td.config.encoding,
                td.config.refine_kappa,
            );
            let mut total = 0.0;
            for (fold, net) in nets.iter().enumerate() {
                let metrics = span_metrics(net, &examples)?;
                println!("fold_{fold}\tjaccard\t{:.6}", metrics["jaccard"]);
                total += metrics["jaccard"];
            }
            println!("mean\tjaccard\t{:.6}", total / nets.len() as f64);
        }
    }
    Ok(())
}

pub fn ensemble(spec_path: &Path, test_csv: &Path) -> Result<()> {
    let spec = parse_ensemble_spec(spec_path)?;
    // All members must come from the same training layout.
    let first_dir = spec.members[0]
        .parent()
        .context("member path has no parent directory")?
        .to_path_buf();
    let td = read_trained_dir(&first_dir)?;
    for member in &spec.members {
        let dir = member.parent().context("member path has no parent")?;
        if dir != first_dir {
            let other = fs::read_to_string(dir.join("config.txt")).unwrap_or_default();
            if other != td.config.to_text() {
                bail!("ensemble members were trained under different configs");
            }
        }
        if !member.exists() {
            bail!("model missing: {}", member.display());
        }
    }
    let raw = load_csv(test_csv)?;
    let samples = apply_dataset_variant(&raw, td.config.dataset);
    println!("experiment\t{}", td.config.name());
    println!("members\t{}", spec.members.len());

    match td.config.task {
        Task::Sc => {
            let nets = load_classifiers(&with_member_checkpoints(&td, &spec.members))?;
            let examples = prepare_sc(&td.vocab, &samples, td.config.max_len);
            let mut average = 0.0;
            for net in &nets {
                average += classifier_metrics(net, &examples)?["f1_macro"];
            }
            average /= nets.len() as f64;
            let fused = ClassifierEnsemble {
                members: nets,
                weights: spec.weights.clone(),
            };
            let mut predicted = Vec::new();
            let mut labels = Vec::new();
            for ex in &examples {
                let probs = fused_probs(&fused, &ex.encoding)?;
                predicted.push(probs.argmax().code());
                labels.push(ex.label.code());
            }
            let mut f1_sum = 0.0;
            for class in 0..3 {
                f1_sum += sentispan_core::eval::f1(&sentispan_core::eval::confusion_for_class(
                    &predicted, &labels, class,
                ));
            }
            println!("average_f1\t{average:.6}");
            println!("ensemble_f1\t{:.6}", f1_sum / 3.0);
        }
        Task::Se => {
            let nets = load_spans(&with_member_checkpoints(&td, &spec.members))?;
            let examples = prepare_se(
                &td.vocab,
                &samples,
                td.config.max_len,
                td.config.encoding,
                td.config.refine_kappa,
            );
            let mut average = 0.0;
            for net in &nets {
                average += span_metrics(net, &examples)?["jaccard"];
            }
            average /= nets.len() as f64;
            let fused = SpanEnsemble {
                members: nets,
                weights: spec.weights.clone(),
            };
            let mut total = 0.0;
            for ex in &examples {
                let logits = fused.fused_with_aux(&ex.encoding, &ex.aux)?;
                let (s, e) = decode_span(&logits)?;
                let predicted = token_span_to_text(&ex.encoding, s, e)?;
                total += sentispan_core::eval::jaccard(&predicted, &ex.selected);
            }
            println!("average_jaccard\t{average:.6}");
            println!("ensemble_jaccard\t{:.6}", total / examples.len().max(1) as f64);
        }
    }
    Ok(())
}

fn fused_probs(
    fused: &ClassifierEnsemble,
    encoding: &sentispan_core::tokenizer::Encoding,
) -> Result<sentispan_core::heads::SentimentProbs> {
    use sentispan_core::pipeline::SentimentStage;
    Ok(fused.probs(encoding)?)
}

fn with_member_checkpoints(
    td: &crate::bundle::TrainedDir,
    members: &[PathBuf],
) -> crate::bundle::TrainedDir {
    crate::bundle::TrainedDir {
        dir: td.dir.clone(),
        config: td.config.clone(),
        vocab: td.vocab.clone(),
        checkpoints: members.to_vec(),
    }
}

pub fn predict(
    models: &Path,
    text: &str,
    gold_sentiment: Option<Sentiment>,
    with_cam: bool,
) -> Result<()> {
    let cls_dir = read_trained_dir(&models.join("classifier"))?;
    let base_dir = read_trained_dir(&models.join("base"))?;
    let cov_dir = read_trained_dir(&models.join("coverage"))?;
    if cls_dir.config.task != Task::Sc {
        bail!("classifier/ must hold a classification experiment");
    }
    if base_dir.config.task != Task::Se || cov_dir.config.task != Task::Se {
        bail!("base/ and coverage/ must hold span-extraction experiments");
    }
    if !cov_dir.config.encoding.uses_coverage() {
        bail!("coverage/ experiment was trained without coverage channels");
    }

    let classifiers = load_classifiers(&cls_dir)?;
    let cam_net = if with_cam {
        Some(load_classifiers(&cls_dir)?.remove(0))
    } else {
        None
    };
    let bases = load_spans(&base_dir)?;
    let coverages = load_spans(&cov_dir)?;
    let params = RefinementParams {
        epsilon: cov_dir.config.refine_epsilon,
        kappa: cov_dir.config.refine_kappa,
        max_iterations: cov_dir.config.refine_max_iterations,
    };
    let n_cls = classifiers.len();
    let n_base = bases.len();
    let n_cov = coverages.len();
    let pipeline = Pipeline {
        vocab: cls_dir.vocab.clone(),
        max_len: cls_dir.config.max_len,
        classifier: Box::new(ClassifierEnsemble {
            members: classifiers,
            weights: equal_weights(n_cls),
        }),
        base: Box::new(SpanEnsemble {
            members: bases,
            weights: equal_weights(n_base),
        }),
        coverage: Box::new(SpanEnsemble {
            members: coverages,
            weights: equal_weights(n_cov),
        }),
        params,
    };

    let prediction = pipeline.predict(text, gold_sentiment)?;
    println!("input\t{text}");
    println!("text\t{}", prediction.text);
    println!("sentiment\t{}", prediction.sentiment);
    for s in Sentiment::ALL {
        println!(
            "prob_{s}\t{:.6}",
            prediction.sentiment_probs.probs[s.code()]
        );
    }
    println!("span_tokens\t{}\t{}", prediction.span.0, prediction.span.1);
    println!(
        "span_chars\t{}\t{}",
        prediction.span_chars.0, prediction.span_chars.1
    );
    println!("subsentence\t{}", prediction.subsentence);
    println!("refined\t{}", prediction.refined);

    if let Some(net) = cam_net {
        let encoding = sentispan_core::tokenizer::assemble_example(
            &cls_dir.vocab,
            &prediction.text,
            Sentiment::Neutral,
            None,
            cls_dir.config.max_len,
        )?;
        let map = cam(&net, &encoding)?;
        let cells: Vec<String> = map
            .tokens
            .iter()
            .zip(&map.scores)
            .map(|(tok, score)| format!("{tok}={score:.6}"))
            .collect();
        println!("cam\t{}", cells.join("\t"));
    }
    Ok(())
}
