//! Training configuration: presets, a `key = value` text format and JSON.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetKind, Vocabularies};
use crate::model::{DecoderKind, EncoderKind, ModelDims, ModelVariant, Pooling};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` expects {expected}, got `{value}`")]
    Type {
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown preset `{0}` (expected mathqa or algolisp)")]
    UnknownPreset(String),
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub max_decode_len: usize,
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub pooling: Pooling,
    pub reasoning_layers: usize,
    pub d_word: usize,
    pub n_fillers: usize,
    pub n_roles: usize,
    pub d_filler: usize,
    pub d_role: usize,
    pub d_rel: usize,
    pub d_arg: usize,
    pub d_pos: usize,
    pub positions: usize,
    pub lstm_hidden: usize,
    pub relation_linear: bool,
    pub attention_tanh: bool,
    /// Always on; kept so the effective config states it.
    pub teacher_forcing: bool,
    pub grad_clip: Option<f64>,
    /// Stop after this many epochs without a lower mean loss.
    pub patience: Option<usize>,
}

/// Keys in the order they are written back out.
pub const KEYS: [&str; 25] = [
    "dataset",
    "epochs",
    "learning_rate",
    "batch_size",
    "seed",
    "max_decode_len",
    "encoder",
    "decoder",
    "pooling",
    "reasoning_layers",
    "d_word",
    "n_fillers",
    "n_roles",
    "d_filler",
    "d_role",
    "d_rel",
    "d_arg",
    "d_pos",
    "positions",
    "lstm_hidden",
    "relation_linear",
    "attention_tanh",
    "teacher_forcing",
    "grad_clip",
    "patience",
];

impl Default for TrainConfig {
    fn default() -> Self {
        Self::mathqa()
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        expected,
        value: value.to_string(),
    })
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Option<T>> {
    match value {
        "" | "none" | "null" => Ok(None),
        v => parse_num(key, v, expected).map(Some),
    }
}

fn parse_kind<T>(key: &str, value: &str, expected: &'static str, options: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    options
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(value))
        .map(|&(_, v)| v)
        .ok_or_else(|| ConfigError::Type {
            key: key.to_string(),
            expected,
            value: value.to_string(),
        })
}

const KINDS_ENC: [(&str, EncoderKind); 2] = [("tpr", EncoderKind::Tpr), ("lstm", EncoderKind::Lstm)];
const KINDS_DEC: [(&str, DecoderKind); 2] = [("tpr", DecoderKind::Tpr), ("lstm", DecoderKind::Lstm)];
const POOLINGS: [(&str, Pooling); 2] = [("sum_tprs", Pooling::SumTprs), ("last_state", Pooling::LastState)];

fn dataset_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::MathQa => "mathqa",
        DatasetKind::AlgoLisp => "algolisp",
    }
}

impl TrainConfig {
    /// MathQA: `n_F=150, n_R=50, d_F=30, d_R=20, d_Rel=20, d_Arg=10,
    /// d_Pos=5`, 60 epochs at learning rate 0.00115.
    pub fn mathqa() -> Self {
        let dims = ModelDims::mathqa(0, 0, 0);
        let variant = ModelVariant::tp_n2f();
        Self {
            dataset: DatasetKind::MathQa,
            epochs: 60,
            learning_rate: 0.00115,
            batch_size: 64,
            seed: 1,
            max_decode_len: 40,
            encoder: variant.encoder,
            decoder: variant.decoder,
            pooling: variant.pooling,
            reasoning_layers: variant.reasoning_layers,
            d_word: dims.d_word,
            n_fillers: dims.n_fillers,
            n_roles: dims.n_roles,
            d_filler: dims.d_filler,
            d_role: dims.d_role,
            d_rel: dims.d_rel,
            d_arg: dims.d_arg,
            d_pos: dims.d_pos,
            positions: dims.positions,
            lstm_hidden: dims.lstm_hidden,
            relation_linear: dims.relation_linear,
            attention_tanh: dims.attention_tanh,
            teacher_forcing: true,
            grad_clip: None,
            patience: None,
        }
    }

    /// AlgoLisp: as MathQA with `d_R=30, d_Rel=30, d_Arg=20`, three argument
    /// slots and 50 epochs.
    pub fn algolisp() -> Self {
        let dims = ModelDims::algolisp(0, 0, 0);
        Self {
            dataset: DatasetKind::AlgoLisp,
            epochs: 50,
            max_decode_len: 60,
            d_role: dims.d_role,
            d_rel: dims.d_rel,
            d_arg: dims.d_arg,
            positions: dims.positions,
            ..Self::mathqa()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "mathqa" => Ok(Self::mathqa()),
            "algolisp" => Ok(Self::algolisp()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn variant(&self) -> ModelVariant {
        ModelVariant {
            encoder: self.encoder,
            decoder: self.decoder,
            pooling: self.pooling,
            reasoning_layers: self.reasoning_layers,
        }
    }

    /// Model sizes with vocabulary sizes taken from `vocab`.
    pub fn model_dims(&self, vocab: &Vocabularies) -> ModelDims {
        ModelDims {
            n_tokens: vocab.tokens.len(),
            n_relations: vocab.relations.len(),
            n_args: vocab.args.len(),
            d_word: self.d_word,
            n_fillers: self.n_fillers,
            n_roles: self.n_roles,
            d_filler: self.d_filler,
            d_role: self.d_role,
            d_rel: self.d_rel,
            d_arg: self.d_arg,
            d_pos: self.d_pos,
            positions: self.positions,
            lstm_hidden: self.lstm_hidden,
            relation_linear: self.relation_linear,
            attention_tanh: self.attention_tanh,
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let uint = "a non-negative integer";
        let float = "a number";
        let boolean = "true or false";
        match key {
            "dataset" => {
                self.dataset = value.parse().map_err(|_| ConfigError::Type {
                    key: key.into(),
                    expected: "mathqa or algolisp",
                    value: value.into(),
                })?
            }
            "epochs" => self.epochs = parse_num(key, value, uint)?,
            "learning_rate" => self.learning_rate = parse_num(key, value, float)?,
            "batch_size" => self.batch_size = parse_num(key, value, uint)?,
            "seed" => self.seed = parse_num(key, value, uint)?,
            "max_decode_len" => self.max_decode_len = parse_num(key, value, uint)?,
            "encoder" => self.encoder = parse_kind(key, value, "tpr or lstm", &KINDS_ENC)?,
            "decoder" => self.decoder = parse_kind(key, value, "tpr or lstm", &KINDS_DEC)?,
            "pooling" => self.pooling = parse_kind(key, value, "sum_tprs or last_state", &POOLINGS)?,
            "reasoning_layers" => self.reasoning_layers = parse_num(key, value, uint)?,
            "d_word" => self.d_word = parse_num(key, value, uint)?,
            "n_fillers" => self.n_fillers = parse_num(key, value, uint)?,
            "n_roles" => self.n_roles = parse_num(key, value, uint)?,
            "d_filler" => self.d_filler = parse_num(key, value, uint)?,
            "d_role" => self.d_role = parse_num(key, value, uint)?,
            "d_rel" => self.d_rel = parse_num(key, value, uint)?,
            "d_arg" => self.d_arg = parse_num(key, value, uint)?,
            "d_pos" => self.d_pos = parse_num(key, value, uint)?,
            "positions" => self.positions = parse_num(key, value, uint)?,
            "lstm_hidden" => self.lstm_hidden = parse_num(key, value, uint)?,
            "relation_linear" => self.relation_linear = parse_num(key, value, boolean)?,
            "attention_tanh" => self.attention_tanh = parse_num(key, value, boolean)?,
            "teacher_forcing" => {
                // scheduled sampling is not supported
                if !parse_num::<bool>(key, value, boolean)? {
                    return Err(ConfigError::Type {
                        key: key.into(),
                        expected: "true (teacher forcing is always on)",
                        value: value.into(),
                    });
                }
            }
            "grad_clip" => self.grad_clip = parse_optional(key, value, float)?,
            "patience" => self.patience = parse_optional(key, value, uint)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Current value of `key` in the text format.
    pub fn get(&self, key: &str) -> Result<String> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        Ok(match key {
            "dataset" => dataset_name(self.dataset).into(),
            "epochs" => self.epochs.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seed" => self.seed.to_string(),
            "max_decode_len" => self.max_decode_len.to_string(),
            "encoder" => KINDS_ENC.iter().find(|k| k.1 == self.encoder).unwrap().0.into(),
            "decoder" => KINDS_DEC.iter().find(|k| k.1 == self.decoder).unwrap().0.into(),
            "pooling" => POOLINGS.iter().find(|k| k.1 == self.pooling).unwrap().0.into(),
            "reasoning_layers" => self.reasoning_layers.to_string(),
            "d_word" => self.d_word.to_string(),
            "n_fillers" => self.n_fillers.to_string(),
            "n_roles" => self.n_roles.to_string(),
            "d_filler" => self.d_filler.to_string(),
            "d_role" => self.d_role.to_string(),
            "d_rel" => self.d_rel.to_string(),
            "d_arg" => self.d_arg.to_string(),
            "d_pos" => self.d_pos.to_string(),
            "positions" => self.positions.to_string(),
            "lstm_hidden" => self.lstm_hidden.to_string(),
            "relation_linear" => self.relation_linear.to_string(),
            "attention_tanh" => self.attention_tanh.to_string(),
            "teacher_forcing" => self.teacher_forcing.to_string(),
            "grad_clip" => opt(self.grad_clip.map(|v| v.to_string())),
            "patience" => opt(self.patience.map(|v| v.to_string())),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        })
    }

    /// Parses the `key = value` format. Blank lines and `#` comments are
    /// skipped. A `preset` key selects the base values and is applied before
    /// every other key, wherever it appears.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    /// Parses a flat JSON object with the same keys as the text format.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let pairs = map.into_iter().map(|(k, v)| {
            let v = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Null => "none".into(),
                other => other.to_string(),
            };
            (k, v)
        });
        Self::from_pairs(pairs.collect())
    }

    fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut cfg = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, name)) => Self::preset(name)?,
            None => Self::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Reads a config file; JSON when the content starts with `{`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_kv(&text)
        }
    }

    /// Every key in the text format; [`TrainConfig::from_kv`] reads it back
    /// to an equal config.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }
}
