use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{exec_algolisp, exec_mathqa, LispValue, ProgramEnv, RelationalTuple};
use crate::parallel::{self, Parallelism};

/// Relative tolerance when comparing executed numbers.
pub const EXEC_TOLERANCE: f64 = 1e-6;

/// One line of a prediction file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub program: Vec<RelationalTuple>,
}

/// An input/output example for an AlgoLisp program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoTest {
    pub inputs: BTreeMap<String, Value>,
    pub expected: Value,
}

/// What a program is executed against when scoring it.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ExecSuite {
    #[default]
    None,
    MathQa {
        numbers: Vec<f64>,
        options: Option<Vec<f64>>,
        /// Index of the correct option, when the dataset records it.
        correct: Option<usize>,
    },
    AlgoLisp {
        tests: Vec<IoTest>,
    },
}

/// `exec_acc` is absent without MathQA cases; `acc` and `p50_acc` are absent
/// without AlgoLisp test suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub op_acc: f64,
    pub exec_acc: Option<f64>,
    pub acc: Option<f64>,
    pub p50_acc: Option<f64>,
    pub m_acc: f64,
    pub n: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions, {golds} golds and {suites} suites must align")]
    Length {
        predictions: usize,
        golds: usize,
        suites: usize,
    },
}

struct Outcome {
    exact: bool,
    exec: Option<bool>,
    pass_fraction: Option<f64>,
}

fn same_program(a: &[RelationalTuple], b: &[RelationalTuple]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.relation == y.relation && x.operands().eq(y.operands()))
}

fn nearest(options: &[f64], x: f64) -> Option<usize> {
    options
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXEC_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn mathqa_correct(
    pred: &[RelationalTuple],
    gold: &[RelationalTuple],
    numbers: &[f64],
    options: Option<&[f64]>,
    correct: Option<usize>,
) -> bool {
    let env = ProgramEnv::new(numbers.to_vec());
    let Ok(value) = exec_mathqa(pred, &env) else {
        return false;
    };
    match options.filter(|o| !o.is_empty()) {
        Some(opts) => {
            let target = correct.or_else(|| exec_mathqa(gold, &env).ok().and_then(|g| nearest(opts, g)));
            target.is_some() && nearest(opts, value) == target
        }
        None => exec_mathqa(gold, &env).is_ok_and(|g| close(value, g)),
    }
}

/// Fraction of `tests` the program passes; `None` without tests.
pub fn pass_fraction(program: &[RelationalTuple], tests: &[IoTest]) -> Option<f64> {
    if tests.is_empty() {
        return None;
    }
    let passed = tests
        .iter()
        .filter(|t| {
            let Ok(bindings) = t
                .inputs
                .iter()
                .map(|(k, v)| LispValue::from_json(v).map(|v| (k.clone(), v)))
                .collect::<Result<BTreeMap<_, _>, _>>()
            else {
                return false;
            };
            let Ok(expected) = LispValue::from_json(&t.expected) else {
                return false;
            };
            exec_algolisp(program, &bindings).is_ok_and(|v| v.approx_eq(&expected, EXEC_TOLERANCE))
        })
        .count();
    Some(passed as f64 / tests.len() as f64)
}

fn score(pred: &[RelationalTuple], gold: &[RelationalTuple], suite: &ExecSuite) -> Outcome {
    let exact = same_program(pred, gold);
    match suite {
        ExecSuite::None => Outcome {
            exact,
            exec: None,
            pass_fraction: None,
        },
        ExecSuite::MathQa {
            numbers,
            options,
            correct,
        } => Outcome {
            exact,
            exec: Some(mathqa_correct(pred, gold, numbers, options.as_deref(), *correct)),
            pass_fraction: None,
        },
        ExecSuite::AlgoLisp { tests } => Outcome {
            exact,
            exec: None,
            pass_fraction: pass_fraction(pred, tests),
        },
    }
}

fn rate(hits: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut n, mut k) = (0usize, 0usize);
    for h in hits {
        n += 1;
        k += usize::from(h);
    }
    (n > 0).then(|| k as f64 / n as f64)
}

/// Scores aligned predictions against golds.
pub fn evaluate_metrics(
    predictions: &[Vec<RelationalTuple>],
    golds: &[Vec<RelationalTuple>],
    suites: &[ExecSuite],
    mode: Parallelism,
) -> Result<MetricReport, MetricsError> {
    if predictions.len() != golds.len() || suites.len() != golds.len() {
        return Err(MetricsError::Length {
            predictions: predictions.len(),
            golds: golds.len(),
            suites: suites.len(),
        });
    }
    let idx: Vec<usize> = (0..golds.len()).collect();
    let outcomes = parallel::map(&idx, mode, |&i| score(&predictions[i], &golds[i], &suites[i]));
    let exact = rate(outcomes.iter().map(|o| o.exact)).unwrap_or(0.0);
    Ok(MetricReport {
        op_acc: exact,
        exec_acc: rate(outcomes.iter().filter_map(|o| o.exec)),
        acc: rate(outcomes.iter().filter_map(|o| o.pass_fraction).map(|f| f >= 1.0)),
        p50_acc: rate(outcomes.iter().filter_map(|o| o.pass_fraction).map(|f| f >= 0.5)),
        m_acc: exact,
        n: golds.len(),
    })
}
