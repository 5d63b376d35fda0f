//! Loading trained experiment directories and ensemble specs.
//!
//! A training run leaves behind `config.txt`, `vocab.tsv`, `merges.txt` and
//! one `fold_<k>.ckpt` per fold; everything here reconstructs live models
//! from that layout.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sentispan_core::eval::ExperimentConfig;
use sentispan_core::heads::{ClassifierNet, SpanNet};
use sentispan_core::num::load_checkpoint;
use sentispan_core::pipeline::EnsembleSpec;
use sentispan_core::tokenizer::Vocabulary;

/// Artefacts of one training run.
pub struct TrainedDir {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub vocab: Vocabulary,
    pub checkpoints: Vec<PathBuf>,
}

pub fn read_trained_dir(dir: &Path) -> Result<TrainedDir> {
    let config_path = dir.join("config.txt");
    let config_text = fs::read_to_string(&config_path)
        .with_context(|| format!("model missing: cannot read {}", config_path.display()))?;
    let config = ExperimentConfig::parse(&config_text)?;
    let vocab = Vocabulary::load(&dir.join("vocab.tsv"), &dir.join("merges.txt"))
        .context("model missing: vocabulary files")?;
    let mut checkpoints = Vec::new();
    for fold in 0..config.folds {
        let path = dir.join(format!("fold_{fold}.ckpt"));
        if !path.exists() {
            bail!("model missing: {}", path.display());
        }
        checkpoints.push(path);
    }
    Ok(TrainedDir {
        dir: dir.to_path_buf(),
        config,
        vocab,
        checkpoints,
    })
}

pub fn load_classifiers(td: &TrainedDir) -> Result<Vec<ClassifierNet>> {
    td.checkpoints
        .iter()
        .map(|path| {
            let (store, _) = load_checkpoint(path)?;
            let mut net = ClassifierNet::init(
                td.config.encoder_config(td.vocab.len()),
                td.config.classifier_dropout,
                0,
            )?;
            net.store.assign_values(&store).with_context(|| {
                format!("checkpoint {} does not fit the config", path.display())
            })?;
            Ok(net)
        })
        .collect()
}

pub fn load_spans(td: &TrainedDir) -> Result<Vec<SpanNet>> {
    td.checkpoints
        .iter()
        .map(|path| {
            let (store, _) = load_checkpoint(path)?;
            let mut net = SpanNet::init(
                td.config.encoder_config(td.vocab.len()),
                td.config.span_head_config(),
                td.config.encoding.uses_sentiment(),
                td.config.encoding.uses_coverage(),
                0,
            )?;
            net.store.assign_values(&store).with_context(|| {
                format!("checkpoint {} does not fit the config", path.display())
            })?;
            Ok(net)
        })
        .collect()
}

/// Parse an ensemble spec file: one checkpoint path per line, optionally
/// followed by a tab and a weight. Either every line carries a weight or
/// none does (equal weights). Relative paths resolve against the spec file.
pub fn parse_ensemble_spec(path: &Path) -> Result<EnsembleSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read ensemble spec {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut members = Vec::new();
    let mut weights = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (member, weight) = match line.split_once('\t') {
            Some((m, w)) => (m.trim(), Some(w.trim())),
            None => (line, None),
        };
        let mut member_path = PathBuf::from(member);
        if member_path.is_relative() {
            member_path = base.join(member_path);
        }
        members.push(member_path);
        if let Some(w) = weight {
            let value: f64 = w
                .parse()
                .with_context(|| format!("bad weight on spec line {}", lineno + 1))?;
            weights.push(value);
        }
    }
    if members.is_empty() {
        bail!("ensemble spec lists no members");
    }
    let spec = if weights.is_empty() {
        EnsembleSpec::equal(members)
    } else if weights.len() == members.len() {
        EnsembleSpec { members, weights }
    } else {
        bail!("ensemble spec mixes weighted and unweighted lines");
    };
    spec.validate()?;
    Ok(spec)
}
