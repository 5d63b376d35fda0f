//! Experiment configuration: one cell of the experiment matrix plus every
//! training hyperparameter, serialisable as flat `key = value` text.

use std::collections::BTreeMap;

use crate::encoder::EncoderConfig;
use crate::heads::SpanHeadConfig;
use crate::num::fnv1a;

use super::EvalError;

/// Which dataset the experiment trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetVariant {
    /// Original training data (preprocessed, labels untouched).
    Tr,
    /// Label-corrected training data.
    TrCorr,
}

impl DatasetVariant {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetVariant::Tr => "TR",
            DatasetVariant::TrCorr => "TR_CORR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Sentiment classification.
    Sc,
    /// Subsentence extraction.
    Se,
}

impl Task {
    pub fn tag(self) -> &'static str {
        match self {
            Task::Sc => "SC",
            Task::Se => "SE",
        }
    }
}

/// Extra encoding fed to the span model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingVariant {
    /// Text only.
    En,
    /// Text plus sentiment.
    Es,
    /// Text plus sentiment and coverage.
    Esc,
}

impl EncodingVariant {
    pub fn tag(self) -> &'static str {
        match self {
            EncodingVariant::En => "En",
            EncodingVariant::Es => "Es",
            EncodingVariant::Esc => "Esc",
        }
    }

    pub fn uses_sentiment(self) -> bool {
        !matches!(self, EncodingVariant::En)
    }

    pub fn uses_coverage(self) -> bool {
        matches!(self, EncodingVariant::Esc)
    }
}

/// Backbone preset tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderSize {
    /// Two layers, 64 wide: trainable on a CPU.
    Desk,
    /// 12 layers, 768 wide.
    Bert,
    /// 12 layers, 768 wide.
    Rob,
    /// 24 layers, 1024 wide.
    RobL,
}

impl EncoderSize {
    pub fn tag(self) -> &'static str {
        match self {
            EncoderSize::Desk => "DESK",
            EncoderSize::Bert => "BERT",
            EncoderSize::Rob => "ROB",
            EncoderSize::RobL => "ROB_L",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetVariant,
    pub task: Task,
    pub encoding: EncodingVariant,
    pub encoder: EncoderSize,
    pub seed: u64,

    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub lr_gamma: f64,
    pub lr_milestones: Vec<u32>,
    pub label_smoothing: f64,
    pub folds: usize,
    pub train_ratio: f64,

    pub vocab_size: usize,
    pub max_len: usize,

    pub classifier_dropout: f64,
    pub span_dropout: f64,

    pub refine_epsilon: f64,
    pub refine_kappa: f64,
    pub refine_max_iterations: usize,

    /// Cap on corpus size, for desk-scale runs over large CSVs.
    pub data_limit: Option<usize>,

    // Optional architecture overrides on top of the encoder preset.
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub ff_dim: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetVariant::TrCorr,
            task: Task::Sc,
            encoding: EncodingVariant::Es,
            encoder: EncoderSize::Desk,
            seed: 42,
            epochs: 6,
            batch_size: 32,
            learning_rate: 3e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lr_gamma: 0.1,
            lr_milestones: vec![3, 4, 5],
            label_smoothing: 0.1,
            folds: 5,
            train_ratio: 0.8,
            vocab_size: 600,
            max_len: 96,
            classifier_dropout: 0.1,
            span_dropout: 0.3,
            refine_epsilon: 0.1,
            refine_kappa: 15.0,
            refine_max_iterations: 1,
            data_limit: None,
            n_layers: None,
            n_heads: None,
            hidden_dim: None,
            ff_dim: None,
        }
    }
}

impl ExperimentConfig {
    /// Render the experiment name, `[Dataset]_[Task]_[EXT]_[Transformer]`;
    /// classification runs have no extra-encoding segment.
    pub fn name(&self) -> String {
        match self.task {
            Task::Sc => format!(
                "[{}]_[{}]_[{}]",
                self.dataset.tag(),
                self.task.tag(),
                self.encoder.tag()
            ),
            Task::Se => format!(
                "[{}]_[{}]_[{}]_[{}]",
                self.dataset.tag(),
                self.task.tag(),
                self.encoding.tag(),
                self.encoder.tag()
            ),
        }
    }

    /// Backbone dimensions for the configured preset and overrides.
    pub fn encoder_config(&self, vocab_len: usize) -> EncoderConfig {
        let mut cfg = match self.encoder {
            EncoderSize::Desk => EncoderConfig::desk(vocab_len, self.max_len),
            EncoderSize::Bert | EncoderSize::Rob => EncoderConfig::base(vocab_len, self.max_len),
            EncoderSize::RobL => EncoderConfig {
                n_layers: 24,
                n_heads: 16,
                hidden_dim: 1024,
                ff_dim: 4096,
                max_len: self.max_len,
                vocab_size: vocab_len,
            },
        };
        if let Some(v) = self.n_layers {
            cfg.n_layers = v;
        }
        if let Some(v) = self.n_heads {
            cfg.n_heads = v;
        }
        if let Some(v) = self.hidden_dim {
            cfg.hidden_dim = v;
        }
        if let Some(v) = self.ff_dim {
            cfg.ff_dim = v;
        }
        cfg
    }

    pub fn span_head_config(&self) -> SpanHeadConfig {
        let mut head = match self.encoder {
            EncoderSize::Desk => SpanHeadConfig::desk(),
            _ => SpanHeadConfig::table_scale(),
        };
        head.dropout = self.span_dropout;
        head.coverage_buckets = self.refine_kappa.floor() as usize + 1;
        head
    }

    /// Canonical flat `key = value` rendering; parsing it back yields an
    /// equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("dataset", self.dataset.tag().to_string());
        push("task", self.task.tag().to_string());
        push("encoding", self.encoding.tag().to_string());
        push("encoder", self.encoder.tag().to_string());
        push("seed", self.seed.to_string());
        push("epochs", self.epochs.to_string());
        push("batch_size", self.batch_size.to_string());
        push("learning_rate", format_f64(self.learning_rate));
        push("adam_beta1", format_f64(self.adam_beta1));
        push("adam_beta2", format_f64(self.adam_beta2));
        push("adam_epsilon", format_f64(self.adam_epsilon));
        push("lr_gamma", format_f64(self.lr_gamma));
        push(
            "lr_milestones",
            self.lr_milestones
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        push("label_smoothing", format_f64(self.label_smoothing));
        push("folds", self.folds.to_string());
        push("train_ratio", format_f64(self.train_ratio));
        push("vocab_size", self.vocab_size.to_string());
        push("max_len", self.max_len.to_string());
        push("classifier_dropout", format_f64(self.classifier_dropout));
        push("span_dropout", format_f64(self.span_dropout));
        push("refine_epsilon", format_f64(self.refine_epsilon));
        push("refine_kappa", format_f64(self.refine_kappa));
        push(
            "refine_max_iterations",
            self.refine_max_iterations.to_string(),
        );
        if let Some(v) = self.data_limit {
            push("data_limit", v.to_string());
        }
        for (key, v) in [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("hidden_dim", self.hidden_dim),
            ("ff_dim", self.ff_dim),
        ] {
            if let Some(v) = v {
                push(key, v.to_string());
            }
        }
        out
    }

    pub fn config_hash(&self) -> u64 {
        fnv1a(self.to_text().as_bytes())
    }

    /// Parse the flat `key = value` format. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut pairs: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                EvalError::BadConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            pairs.insert(k.trim(), v.trim());
        }
        let mut cfg = ExperimentConfig::default();
        for (key, value) in pairs {
            match key {
                "dataset" => {
                    cfg.dataset = match value {
                        "TR" => DatasetVariant::Tr,
                        "TR_CORR" => DatasetVariant::TrCorr,
                        other => {
                            return Err(EvalError::BadConfig(format!("dataset {other:?}")))
                        }
                    }
                }
                "task" => {
                    cfg.task = match value {
                        "SC" => Task::Sc,
                        "SE" => Task::Se,
                        other => return Err(EvalError::BadConfig(format!("task {other:?}"))),
                    }
                }
                "encoding" => {
                    cfg.encoding = match value {
                        "En" => EncodingVariant::En,
                        "Es" => EncodingVariant::Es,
                        "Esc" => EncodingVariant::Esc,
                        other => {
                            return Err(EvalError::BadConfig(format!("encoding {other:?}")))
                        }
                    }
                }
                "encoder" => {
                    cfg.encoder = match value {
                        "DESK" => EncoderSize::Desk,
                        "BERT" => EncoderSize::Bert,
                        "ROB" => EncoderSize::Rob,
                        "ROB_L" => EncoderSize::RobL,
                        other => {
                            return Err(EvalError::BadConfig(format!("encoder {other:?}")))
                        }
                    }
                }
                "seed" => cfg.seed = parse_num(key, value)?,
                "epochs" => cfg.epochs = parse_num(key, value)?,
                "batch_size" => cfg.batch_size = parse_num(key, value)?,
                "learning_rate" => cfg.learning_rate = parse_num(key, value)?,
                "adam_beta1" => cfg.adam_beta1 = parse_num(key, value)?,
                "adam_beta2" => cfg.adam_beta2 = parse_num(key, value)?,
                "adam_epsilon" => cfg.adam_epsilon = parse_num(key, value)?,
                "lr_gamma" => cfg.lr_gamma = parse_num(key, value)?,
                "lr_milestones" => {
                    cfg.lr_milestones = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| parse_num("lr_milestones", s.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "label_smoothing" => cfg.label_smoothing = parse_num(key, value)?,
                "folds" => cfg.folds = parse_num(key, value)?,
                "train_ratio" => cfg.train_ratio = parse_num(key, value)?,
                "vocab_size" => cfg.vocab_size = parse_num(key, value)?,
                "max_len" => cfg.max_len = parse_num(key, value)?,
                "classifier_dropout" => cfg.classifier_dropout = parse_num(key, value)?,
                "span_dropout" => cfg.span_dropout = parse_num(key, value)?,
                "refine_epsilon" => cfg.refine_epsilon = parse_num(key, value)?,
                "refine_kappa" => cfg.refine_kappa = parse_num(key, value)?,
                "refine_max_iterations" => {
                    cfg.refine_max_iterations = parse_num(key, value)?
                }
                "data_limit" => cfg.data_limit = Some(parse_num(key, value)?),
                "n_layers" => cfg.n_layers = Some(parse_num(key, value)?),
                "n_heads" => cfg.n_heads = Some(parse_num(key, value)?),
                "hidden_dim" => cfg.hidden_dim = Some(parse_num(key, value)?),
                "ff_dim" => cfg.ff_dim = Some(parse_num(key, value)?),
                other => {
                    return Err(EvalError::BadConfig(format!("unknown key {other:?}")))
                }
            }
        }
        Ok(cfg)
    }
}

fn format_f64(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v}")
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, EvalError> {
    value
        .parse()
        .map_err(|_| EvalError::BadConfig(format!("bad value for {key}: {value:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming_convention() {
        let cfg = ExperimentConfig {
            dataset: DatasetVariant::TrCorr,
            task: Task::Se,
            encoding: EncodingVariant::Esc,
            encoder: EncoderSize::Rob,
            ..Default::default()
        };
        assert_eq!(cfg.name(), "[TR_CORR]_[SE]_[Esc]_[ROB]");
        let sc = ExperimentConfig {
            dataset: DatasetVariant::Tr,
            task: Task::Sc,
            encoder: EncoderSize::Bert,
            ..Default::default()
        };
        assert_eq!(sc.name(), "[TR]_[SC]_[BERT]");
    }

    #[test]
    fn text_round_trip() {
        let cfg = ExperimentConfig {
            task: Task::Se,
            encoding: EncodingVariant::Esc,
            data_limit: Some(400),
            n_layers: Some(1),
            ..Default::default()
        };
        let text = cfg.to_text();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(cfg.config_hash(), parsed.config_hash());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = ExperimentConfig::parse(
            "# a comment\n\nseed = 7\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("nonsense = 1\n"),
            Err(EvalError::BadConfig(_))
        ));
    }

    #[test]
    fn default_training_settings() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.learning_rate, 3e-5);
        assert_eq!(cfg.lr_gamma, 0.1);
        assert_eq!(cfg.lr_milestones, vec![3, 4, 5]);
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.train_ratio, 0.8);
        assert_eq!(cfg.refine_epsilon, 0.1);
        assert_eq!(cfg.refine_kappa, 15.0);
        assert_eq!(cfg.classifier_dropout, 0.1);
        assert_eq!(cfg.span_dropout, 0.3);
        assert_eq!(cfg.batch_size, 32);
    }

    #[test]
    fn desk_encoder_preset_dimensions() {
        let cfg = ExperimentConfig::default();
        let enc = cfg.encoder_config(500);
        assert_eq!((enc.n_layers, enc.n_heads, enc.hidden_dim), (2, 4, 64));
        let table = ExperimentConfig {
            encoder: EncoderSize::Rob,
            ..Default::default()
        };
        let enc = table.encoder_config(50000);
        assert_eq!((enc.n_layers, enc.hidden_dim), (12, 768));
        assert_eq!(
            table.span_head_config().conv_channels,
            [256, 128, 64]
        );
    }
}
