use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_straight_line, result_ref, ExecError, RelationalTuple};

/// Arithmetic primitives of the MathQA language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MathOp {
    Add,
    Subtract,
    Multiply,
    Divide,
    Power,
    Max,
    Min,
    Sqrt,
    Floor,
    Negate,
    Inverse,
    Log,
    /// `x·y·z`; the only native ternary operator.
    VolumeRectangularPrism,
}

impl MathOp {
    pub const ALL: [MathOp; 13] = [
        MathOp::Add,
        MathOp::Subtract,
        MathOp::Multiply,
        MathOp::Divide,
        MathOp::Power,
        MathOp::Max,
        MathOp::Min,
        MathOp::Sqrt,
        MathOp::Floor,
        MathOp::Negate,
        MathOp::Inverse,
        MathOp::Log,
        MathOp::VolumeRectangularPrism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MathOp::Add => "add",
            MathOp::Subtract => "subtract",
            MathOp::Multiply => "multiply",
            MathOp::Divide => "divide",
            MathOp::Power => "power",
            MathOp::Max => "max",
            MathOp::Min => "min",
            MathOp::Sqrt => "sqrt",
            MathOp::Floor => "floor",
            MathOp::Negate => "negate",
            MathOp::Inverse => "inverse",
            MathOp::Log => "log",
            MathOp::VolumeRectangularPrism => "volume_rectangular_prism",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            MathOp::Sqrt | MathOp::Floor | MathOp::Negate | MathOp::Inverse | MathOp::Log => 1,
            MathOp::VolumeRectangularPrism => 3,
            _ => 2,
        }
    }

    pub fn apply(self, x: &[f64]) -> Result<f64, ExecError> {
        let v = match self {
            MathOp::Add => x[0] + x[1],
            MathOp::Subtract => x[0] - x[1],
            MathOp::Multiply => x[0] * x[1],
            MathOp::Divide => {
                if x[1] == 0.0 {
                    return Err(ExecError::DivisionByZero);
                }
                x[0] / x[1]
            }
            MathOp::Power => x[0].powf(x[1]),
            MathOp::Max => x[0].max(x[1]),
            MathOp::Min => x[0].min(x[1]),
            MathOp::Sqrt => {
                if x[0] < 0.0 {
                    return Err(ExecError::NegativeSqrt(x[0]));
                }
                x[0].sqrt()
            }
            MathOp::Floor => x[0].floor(),
            MathOp::Negate => -x[0],
            MathOp::Inverse => {
                if x[0] == 0.0 {
                    return Err(ExecError::DivisionByZero);
                }
                1.0 / x[0]
            }
            MathOp::Log => x[0].ln(),
            MathOp::VolumeRectangularPrism => x[0] * x[1] * x[2],
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExecError::NonFinite)
        }
    }
}

/// Operator names accepted by the executor. Extra names can alias any
/// [`MathOp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorTable {
    ops: BTreeMap<String, MathOp>,
}

impl Default for OperatorTable {
    fn default() -> Self {
        Self {
            ops: MathOp::ALL.iter().map(|&op| (op.name().to_string(), op)).collect(),
        }
    }
}

impl OperatorTable {
    pub fn with_alias(mut self, name: impl Into<String>, op: MathOp) -> Self {
        self.ops.insert(name.into(), op);
        self
    }

    pub fn get(&self, name: &str) -> Option<MathOp> {
        self.ops.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ops.keys().map(String::as_str)
    }
}

/// Values visible to a MathQA program.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramEnv {
    /// Bound to `n0, n1, …`.
    pub numbers: Vec<f64>,
    /// Explicit constants; anything else spelled `const<number>` is parsed.
    pub constants: BTreeMap<String, f64>,
}

impl ProgramEnv {
    pub fn new(numbers: Vec<f64>) -> Self {
        let constants = [("const_pi", std::f64::consts::PI), ("constpi", std::f64::consts::PI)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self { numbers, constants }
    }

    /// Resolves `const100`, `const0.2778`, `const_0_25` and table entries.
    pub fn constant(&self, symbol: &str) -> Option<f64> {
        if let Some(&v) = self.constants.get(symbol) {
            return Some(v);
        }
        let body = symbol.strip_prefix("const")?;
        let body = body.trim_start_matches(['_', '-']);
        body.replace('_', ".").parse().ok()
    }

    fn resolve(&self, symbol: &str, results: &[f64]) -> Result<f64, ExecError> {
        if let Some(i) = result_ref(symbol) {
            return results
                .get(i)
                .copied()
                .ok_or_else(|| ExecError::UnboundSymbol(symbol.into()));
        }
        if let Some(idx) = symbol.strip_prefix('n').and_then(|s| s.parse::<usize>().ok()) {
            return self
                .numbers
                .get(idx)
                .copied()
                .ok_or_else(|| ExecError::UnboundSymbol(symbol.into()));
        }
        if let Some(v) = self.constant(symbol) {
            return Ok(v);
        }
        symbol
            .parse::<f64>()
            .map_err(|_| ExecError::UnboundSymbol(symbol.into()))
    }
}

/// Runs a straight-line arithmetic program and returns its last value.
pub fn exec_mathqa(program: &[RelationalTuple], env: &ProgramEnv) -> Result<f64, ExecError> {
    let trace = OperatorTable::default().trace(program, env)?;
    Ok(*trace.last().expect("non-empty trace"))
}

impl OperatorTable {
    /// Runs `program` and returns the value of every step.
    pub fn trace(&self, program: &[RelationalTuple], env: &ProgramEnv) -> Result<Vec<f64>, ExecError> {
        if program.is_empty() {
            return Err(ExecError::EmptyProgram);
        }
        check_straight_line(program)?;
        let mut results = Vec::with_capacity(program.len());
        for t in program {
            let op = self
                .get(&t.relation)
                .ok_or_else(|| ExecError::UnknownOperator(t.relation.clone()))?;
            let operands = t
                .operands()
                .map(|a| env.resolve(a, &results))
                .collect::<Result<Vec<_>, _>>()?;
            if operands.len() != op.arity() {
                return Err(ExecError::Arity {
                    op: t.relation.clone(),
                    expected: op.arity().to_string(),
                    got: operands.len(),
                });
            }
            results.push(op.apply(&operands)?);
        }
        Ok(results)
    }

    pub fn exec(&self, program: &[RelationalTuple], env: &ProgramEnv) -> Result<f64, ExecError> {
        Ok(*self.trace(program, env)?.last().expect("non-empty trace"))
    }
}
