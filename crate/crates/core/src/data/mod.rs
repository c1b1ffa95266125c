//! Dataset ingestion, number linking, program preprocessing and vocabularies.

mod synthetic;
mod vocab;

pub use synthetic::{arithmetic_dataset, arithmetic_dataset_with_steps, ArithmeticTemplate};
pub use vocab::{
    build_vocabularies, EncodedSample, Vocab, Vocabularies, ARG_PAD, ARG_UNK, EOS, GO, TOKEN_UNK,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lang::{
    flatten_program_tree, parse_call_sequence, parse_tuple_sequence, result_ref, ExecSuite, IoTest,
    RelationalTuple, MAX_TUPLE_ARGS, PAD,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    Schema { line: usize, field: &'static str },
    #[error("ternary operators without a rewrite rule: {0:?}")]
    MissingRewrite(Vec<String>),
    #[error("tuple `{tuple}` has more than {slots} arguments")]
    TooManyArgs { tuple: String, slots: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("relation `{0}` is not in the relation vocabulary")]
    UnknownRelation(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    MathQa,
    AlgoLisp,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mathqa" => Ok(Self::MathQa),
            "algolisp" => Ok(Self::AlgoLisp),
            other => Err(format!("unknown dataset kind `{other}` (expected mathqa or algolisp)")),
        }
    }
}

/// One normalised text → program pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Tokens, with question numbers replaced by `n0, n1, …` for MathQA.
    pub text: Vec<String>,
    pub program: Vec<RelationalTuple>,
    #[serde(default)]
    pub numbers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<IoTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<usize>,
}

impl Sample {
    pub fn exec_suite(&self, kind: DatasetKind) -> ExecSuite {
        match kind {
            DatasetKind::MathQa => ExecSuite::MathQa {
                numbers: self.numbers.clone(),
                options: self.options.clone(),
                correct: self.correct,
            },
            DatasetKind::AlgoLisp => ExecSuite::AlgoLisp {
                tests: self.tests.clone(),
            },
        }
    }
}

/// Splits text into lower-cased words, numbers and single punctuation marks.
/// Thousands separators inside numbers are kept with the number.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || (matches!(chars[i], '.' | ',') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())))
            {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else if c.is_alphanumeric() || c == '_' || c == '#' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '\'' | '#')) {
                i += 1;
            }
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

fn as_number(token: &str) -> Option<f64> {
    if !token.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    token.replace(',', "").parse().ok()
}

/// Replaces numerals left to right with `n0, n1, …` and returns their values.
pub fn link_numbers(tokens: &[String]) -> (Vec<f64>, Vec<String>) {
    let mut numbers = Vec::new();
    let linked = tokens
        .iter()
        .map(|t| match as_number(t) {
            Some(v) => {
                numbers.push(v);
                format!("n{}", numbers.len() - 1)
            }
            None => t.clone(),
        })
        .collect();
    (numbers, linked)
}

/// `const-100`, `const_100` → `const100`; `const_0_25` → `const0.25`.
pub fn normalize_constant(symbol: &str) -> String {
    let Some(body) = symbol.strip_prefix("const") else {
        return symbol.to_string();
    };
    let body = body.trim_start_matches(['_', '-']).replace('_', ".");
    if body.parse::<f64>().is_ok() {
        format!("const{body}")
    } else {
        symbol.to_string()
    }
}

/// Op → binary templates. In a template `$k` is the k-th operand of the
/// original tuple and `#new` the result of the previous template step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewriteTable(pub BTreeMap<String, Vec<Vec<String>>>);

impl RewriteTable {
    /// The rules shipped for MathQA.
    pub fn mathqa_default() -> Self {
        let rule = |r: &str, a: &str, b: &str| vec![r.to_string(), a.to_string(), b.to_string()];
        Self(
            [(
                "volume_rectangular_prism".to_string(),
                vec![rule("multiply", "$1", "$2"), rule("multiply", "#new", "$3")],
            )]
            .into_iter()
            .collect(),
        )
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Replaces every tuple with more than two operands by its template and
/// renumbers downstream `#i` references.
pub fn rewrite_ternary_ops(program: &[RelationalTuple], table: &RewriteTable) -> Result<Vec<RelationalTuple>> {
    let mut missing: Vec<String> = program
        .iter()
        .filter(|t| t.operand_count() > 2 && !table.0.contains_key(&t.relation))
        .map(|t| t.relation.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(DataError::MissingRewrite(missing));
    }
    let mut out: Vec<RelationalTuple> = Vec::with_capacity(program.len());
    let mut new_index = Vec::with_capacity(program.len());
    let renumber = |sym: &str, map: &[usize]| match result_ref(sym) {
        Some(i) if i < map.len() => format!("#{}", map[i]),
        _ => sym.to_string(),
    };
    for t in program {
        let operands: Vec<String> = t.operands().map(|a| renumber(a, &new_index)).collect();
        match table.0.get(&t.relation).filter(|_| operands.len() > 2) {
            Some(template) => {
                for step in template {
                    let Some((rel, args)) = step.split_first() else { continue };
                    let args = args
                        .iter()
                        .map(|a| {
                            if a == "#new" {
                                format!("#{}", out.len() - 1)
                            } else if let Some(k) = a.strip_prefix('$').and_then(|k| k.parse::<usize>().ok()) {
                                operands.get(k - 1).cloned().unwrap_or_else(|| PAD.to_string())
                            } else {
                                a.clone()
                            }
                        })
                        .collect();
                    out.push(RelationalTuple {
                        relation: rel.clone(),
                        args,
                    });
                }
            }
            None => out.push(RelationalTuple {
                relation: t.relation.clone(),
                args: t.args.iter().map(|a| renumber(a, &new_index)).collect(),
            }),
        }
        new_index.push(out.len() - 1);
    }
    Ok(out)
}

/// Pads every tuple with `PAD` to exactly `slots` arguments.
pub fn pad_arguments(program: &[RelationalTuple], slots: usize) -> Result<Vec<RelationalTuple>> {
    program
        .iter()
        .map(|t| {
            let mut operands: Vec<String> = t.operands().map(String::from).collect();
            if operands.len() > slots {
                return Err(DataError::TooManyArgs {
                    tuple: t.to_string(),
                    slots,
                });
            }
            operands.resize(slots, PAD.to_string());
            Ok(RelationalTuple {
                relation: t.relation.clone(),
                args: operands,
            })
        })
        .collect()
}

/// Rewrites ternaries (only when `positions == 2`) and pads to `positions`.
pub fn preprocess_program(
    program: &[RelationalTuple],
    positions: usize,
    table: &RewriteTable,
) -> Result<Vec<RelationalTuple>> {
    let rewritten = if positions < MAX_TUPLE_ARGS {
        rewrite_ternary_ops(program, table)?
    } else {
        program.to_vec()
    };
    pad_arguments(&rewritten, positions)
}

/// Loads JSON-lines or a JSON array of records.
///
/// Record fields: `text` (string or token list), one of `program` (tuple
/// string, call-form string or list of `[rel, args…]`) or `program_tree`
/// (s-expression), and optionally `id`, `numbers`, `options`, `correct`,
/// `tests`.
pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, kind)
}

pub fn parse_dataset(text: &str, kind: DatasetKind) -> Result<Vec<Sample>> {
    let records: Vec<(usize, Value)> = if text.trim_start().starts_with('[') {
        let arr: Vec<Value> = serde_json::from_str(text).map_err(|e| DataError::Malformed {
            line: e.line(),
            message: e.to_string(),
        })?;
        arr.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map(|v| (i + 1, v))
                    .map_err(|e| DataError::Malformed {
                        line: i + 1,
                        message: e.to_string(),
                    })
            })
            .collect::<Result<_>>()?
    };
    records
        .into_iter()
        .map(|(line, v)| record_to_sample(line, &v, kind))
        .collect()
}

fn malformed(line: usize, message: impl Into<String>) -> DataError {
    DataError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_program_field(line: usize, v: &Value) -> Result<Vec<RelationalTuple>> {
    match v {
        Value::String(s) => {
            let s = s.trim();
            let parsed = if s.starts_with('(') {
                parse_tuple_sequence(s)
            } else {
                parse_call_sequence(s)
            };
            parsed.map_err(|e| malformed(line, e.to_string()))
        }
        Value::Array(_) => serde_json::from_value(v.clone()).map_err(|e| malformed(line, e.to_string())),
        _ => Err(malformed(line, "`program` must be a string or a list of tuples")),
    }
}

fn parse_options(line: usize, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed(line, "options must be numbers")))
            .collect(),
        // "a ) 2500 , b ) 2100 , …"
        Value::String(s) => Ok(s
            .split(',')
            .filter_map(|part| {
                let body = part.split_once(')').map_or(part, |(_, b)| b);
                let cleaned: String = body.chars().filter(|c| c.is_ascii_digit() || matches!(c, '.' | '-')).collect();
                cleaned.parse().ok()
            })
            .collect()),
        _ => Err(malformed(line, "options must be a list or a string")),
    }
}

fn parse_correct(line: usize, v: &Value) -> Result<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|x| x as usize).ok_or_else(|| malformed(line, "bad `correct`")),
        Value::String(s) if s.len() == 1 && s.as_bytes()[0].is_ascii_lowercase() => {
            Ok(usize::from(s.as_bytes()[0] - b'a'))
        }
        _ => Err(malformed(line, "`correct` must be an index or a letter")),
    }
}

fn record_to_sample(line: usize, v: &Value, kind: DatasetKind) -> Result<Sample> {
    let obj = v.as_object().ok_or_else(|| malformed(line, "record must be an object"))?;
    let raw_tokens: Vec<String> = match obj.get("text").ok_or(DataError::Schema { line, field: "text" })? {
        Value::String(s) => tokenize(s),
        Value::Array(items) => items
            .iter()
            .map(|t| t.as_str().map(String::from).ok_or_else(|| malformed(line, "text tokens must be strings")))
            .collect::<Result<_>>()?,
        _ => return Err(malformed(line, "`text` must be a string or token list")),
    };
    let mut program = match (obj.get("program"), obj.get("program_tree")) {
        (Some(p), _) => parse_program_field(line, p)?,
        (None, Some(Value::String(tree))) => flatten_program_tree(tree).map_err(|e| malformed(line, e.to_string()))?,
        (None, Some(_)) => return Err(malformed(line, "`program_tree` must be a string")),
        (None, None) => return Err(DataError::Schema { line, field: "program" }),
    };
    let (numbers, text) = match (kind, obj.get("numbers")) {
        (_, Some(n)) => (
            serde_json::from_value(n.clone()).map_err(|e| malformed(line, e.to_string()))?,
            raw_tokens,
        ),
        (DatasetKind::MathQa, None) => link_numbers(&raw_tokens),
        (DatasetKind::AlgoLisp, None) => (Vec::new(), raw_tokens),
    };
    if kind == DatasetKind::MathQa {
        for t in &mut program {
            for a in &mut t.args {
                *a = normalize_constant(a);
            }
        }
    }
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => line.to_string(),
    };
    let options = obj.get("options").map(|o| parse_options(line, o)).transpose()?;
    let correct = obj.get("correct").map(|c| parse_correct(line, c)).transpose()?;
    let tests = match obj.get("tests") {
        Some(t) => serde_json::from_value(t.clone()).map_err(|e| malformed(line, e.to_string()))?,
        None => Vec::new(),
    };
    Ok(Sample {
        id,
        text,
        program,
        numbers,
        tests,
        options,
        correct,
    })
}

/// Writes samples as JSON-lines.
pub fn write_dataset(path: &Path, samples: &[Sample]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        writeln!(out)?;
    }
    out.flush()
}
