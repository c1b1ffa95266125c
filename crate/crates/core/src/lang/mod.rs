//! Relational-tuple programs: grammar, executors, tree flattening, metrics.

mod lisp;
mod mathqa;
mod metrics;
mod tree;

pub use lisp::{exec_algolisp, exec_algolisp_with_depth, Builtin, Closure, LispValue, MAX_RECURSION_DEPTH};
pub use mathqa::{exec_mathqa, MathOp, OperatorTable, ProgramEnv};
pub use metrics::{
    evaluate_metrics, pass_fraction, ExecSuite, IoTest, MetricReport, MetricsError, Prediction, EXEC_TOLERANCE,
};
pub use tree::{flatten_program_tree, flatten_sexpr, parse_sexpr, rebuild_program_tree, SExpr};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Padding argument for relations with fewer operands than tuple slots.
pub const PAD: &str = "PAD";

/// One program step: a relation applied to argument symbols.
///
/// Serialises as a flat array `[relation, arg₁, arg₂, …]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<String>", try_from = "Vec<String>")]
pub struct RelationalTuple {
    pub relation: String,
    pub args: Vec<String>,
}

impl RelationalTuple {
    pub fn new(relation: impl Into<String>, args: &[&str]) -> Self {
        Self {
            relation: relation.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Arguments with padding removed.
    pub fn operands(&self) -> impl Iterator<Item = &str> {
        self.args.iter().map(String::as_str).filter(|a| *a != PAD)
    }

    pub fn operand_count(&self) -> usize {
        self.operands().count()
    }

    /// Copy with `PAD` appended until there are `slots` arguments.
    pub fn padded(&self, slots: usize) -> Self {
        let mut t = self.clone();
        while t.args.len() < slots {
            t.args.push(PAD.to_string());
        }
        t
    }
}

impl From<RelationalTuple> for Vec<String> {
    fn from(t: RelationalTuple) -> Self {
        std::iter::once(t.relation).chain(t.args).collect()
    }
}

impl TryFrom<Vec<String>> for RelationalTuple {
    type Error = String;

    fn try_from(mut v: Vec<String>) -> Result<Self, Self::Error> {
        if v.is_empty() {
            return Err("tuple needs a relation".into());
        }
        let relation = v.remove(0);
        Ok(Self { relation, args: v })
    }
}

impl fmt::Display for RelationalTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.relation)?;
        for a in &self.args {
            write!(f, ",{a}")?;
        }
        write!(f, ")")
    }
}

/// Space-separated tuple rendering, the inverse of [`parse_tuple_sequence`].
pub fn format_program(program: &[RelationalTuple]) -> String {
    program.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn parse_err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

/// Most operands a tuple may carry.
pub const MAX_TUPLE_ARGS: usize = 3;

/// Parses `(rel,a,b) (rel2,c) …`.
///
/// Symbols inside a tuple may be separated by commas, whitespace or both.
/// One-argument tuples are padded to two with [`PAD`]; up to three arguments
/// are accepted. Error offsets are byte offsets into `text`.
pub fn parse_tuple_sequence(text: &str) -> Result<Vec<RelationalTuple>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() || c == b',' {
            i += 1;
            continue;
        }
        if c != b'(' {
            return parse_err(i, format!("expected '(' but found {:?}", c as char));
        }
        let open = i;
        i += 1;
        let mut symbols: Vec<String> = Vec::new();
        loop {
            while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b',') {
                i += 1;
            }
            if i >= bytes.len() {
                return parse_err(i, format!("unclosed '(' opened at offset {open}"));
            }
            match bytes[i] {
                b')' => {
                    i += 1;
                    break;
                }
                b'(' => return parse_err(i, "nested '(' inside a tuple"),
                _ => {
                    let start = i;
                    while i < bytes.len() && !is_delim(bytes[i]) {
                        i += 1;
                    }
                    symbols.push(text[start..i].to_string());
                }
            }
        }
        match symbols.len() {
            0 => return parse_err(open, "empty tuple"),
            1 => return parse_err(open, format!("relation `{}` has no arguments", symbols[0])),
            n if n > MAX_TUPLE_ARGS + 1 => {
                return parse_err(open, format!("tuple has {} symbols, at most {} allowed", n, MAX_TUPLE_ARGS + 1))
            }
            _ => {}
        }
        let relation = symbols.remove(0);
        out.push(RelationalTuple { relation, args: symbols }.padded(2));
    }
    Ok(out)
}

fn is_delim(b: u8) -> bool {
    b.is_ascii_whitespace() || matches!(b, b',' | b'(' | b')')
}

/// Parses the call form `op(a,b), op2(c)` used by some MathQA dumps.
/// Arguments are padded like [`parse_tuple_sequence`].
pub fn parse_call_sequence(text: &str) -> Result<Vec<RelationalTuple>, ParseError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() || bytes[i] == b',' || bytes[i] == b'|' {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i] != b'(' && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] != b'(' {
            return parse_err(i, "expected '(' after operator name");
        }
        let name = &text[start..i];
        if name.is_empty() {
            return parse_err(start, "missing operator name");
        }
        let close = match text[i..].find(')') {
            Some(off) => i + off,
            None => return parse_err(text.len(), format!("unclosed '(' opened at offset {i}")),
        };
        let args: Vec<&str> = text[i + 1..close]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if args.is_empty() || args.len() > MAX_TUPLE_ARGS {
            return parse_err(start, format!("`{name}` has {} arguments", args.len()));
        }
        out.push(RelationalTuple::new(name, &args).padded(2));
        i = close + 1;
    }
    Ok(out)
}

/// `#i` → `Some(i)`.
pub fn result_ref(symbol: &str) -> Option<usize> {
    symbol.strip_prefix('#')?.parse().ok()
}

/// Errors raised while running a program. Every variant has a distinct
/// [`ExecError::code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("empty program")]
    EmptyProgram,
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("step {step} references #{target}, which is not an earlier step")]
    DanglingReference { step: usize, target: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("`{op}` expects {expected} operands, got {got}")]
    Arity {
        op: String,
        expected: String,
        got: usize,
    },
    #[error("no value bound to `{0}`")]
    UnboundSymbol(String),
    #[error("result is not a finite number")]
    NonFinite,
    #[error("type error: {0}")]
    Type(String),
    #[error("`self` used outside a lambda")]
    SelfOutsideLambda,
    #[error("recursion deeper than {0}")]
    RecursionLimit(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: i64, len: usize },
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyProgram => "empty_program",
            Self::UnknownOperator(_) => "unknown_operator",
            Self::DanglingReference { .. } => "dangling_reference",
            Self::DivisionByZero => "division_by_zero",
            Self::NegativeSqrt(_) => "negative_sqrt",
            Self::Arity { .. } => "arity",
            Self::UnboundSymbol(_) => "unbound_symbol",
            Self::NonFinite => "non_finite",
            Self::Type(_) => "type",
            Self::SelfOutsideLambda => "self_outside_lambda",
            Self::RecursionLimit(_) => "recursion_limit",
            Self::IndexOutOfRange { .. } => "index_out_of_range",
        }
    }
}

/// Rejects any `#i` that does not point at an earlier step.
pub fn check_straight_line(program: &[RelationalTuple]) -> Result<(), ExecError> {
    for (step, t) in program.iter().enumerate() {
        for a in &t.args {
            if let Some(target) = result_ref(a) {
                if target >= step {
                    return Err(ExecError::DanglingReference { step, target });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
