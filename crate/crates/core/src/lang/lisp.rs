//! Interpreter for flattened AlgoLisp programs.
//!
//! Steps are evaluated on demand: the program value is the last step, and a
//! step runs only when something needs it. That is what lets a lambda body
//! mention `arg1` and lets `if` guard a recursive `self` call. Each lambda
//! invocation gets a fresh frame with its own memo of step values, its
//! arguments bound to `arg1`/`arg2`, and `self` bound to the lambda.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde_json::Value;

use super::{check_straight_line, result_ref, ExecError, RelationalTuple};

pub const MAX_RECURSION_DEPTH: usize = 10_000;

#[derive(Clone, Debug)]
pub enum LispValue {
    Number(f64),
    Bool(bool),
    Str(String),
    List(Vec<LispValue>),
    Closure(Arc<Closure>),
}

#[derive(Debug)]
pub enum Closure {
    /// Body is the step index the lambda points at.
    Lambda { arity: usize, body: usize },
    Builtin(Builtin),
    /// `x ↦ f(bound, x)`.
    Partial { f: LispValue, bound: LispValue },
}

impl PartialEq for LispValue {
    fn eq(&self, other: &Self) -> bool {
        use LispValue::*;
        match (self, other) {
            (Number(a), Number(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            (List(a), List(b)) => a == b,
            (Closure(a), Closure(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Display for LispValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LispValue::Number(x) => write!(f, "{x}"),
            LispValue::Bool(b) => write!(f, "{b}"),
            LispValue::Str(s) => write!(f, "{s:?}"),
            LispValue::List(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            LispValue::Closure(_) => write!(f, "<closure>"),
        }
    }
}

impl LispValue {
    pub fn list_of_numbers(xs: &[f64]) -> Self {
        LispValue::List(xs.iter().map(|&x| LispValue::Number(x)).collect())
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        Ok(match v {
            Value::Number(n) => LispValue::Number(n.as_f64().ok_or("unrepresentable number")?),
            Value::Bool(b) => LispValue::Bool(*b),
            Value::String(s) => LispValue::Str(s.clone()),
            Value::Array(items) => {
                LispValue::List(items.iter().map(Self::from_json).collect::<Result<_, _>>()?)
            }
            Value::Null | Value::Object(_) => return Err(format!("unsupported value {v}")),
        })
    }

    /// JSON form; closures have none.
    pub fn to_json(&self) -> Option<Value> {
        Some(match self {
            LispValue::Number(x) => {
                if x.fract() == 0.0 && x.abs() < 9.0e15 {
                    Value::from(*x as i64)
                } else {
                    Value::from(*x)
                }
            }
            LispValue::Bool(b) => Value::Bool(*b),
            LispValue::Str(s) => Value::String(s.clone()),
            LispValue::List(items) => {
                Value::Array(items.iter().map(Self::to_json).collect::<Option<_>>()?)
            }
            LispValue::Closure(_) => return None,
        })
    }

    /// Structural equality with numbers compared to relative tolerance `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        match (self, other) {
            (LispValue::Number(a), LispValue::Number(b)) => {
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
            }
            (LispValue::List(a), LispValue::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.approx_eq(y, tol))
            }
            _ => self == other,
        }
    }

    fn truthy(&self) -> Result<bool, ExecError> {
        match self {
            LispValue::Bool(b) => Ok(*b),
            LispValue::Number(x) => Ok(*x != 0.0),
            other => Err(ExecError::Type(format!("condition must be boolean, got {other}"))),
        }
    }

    fn number(&self) -> Result<f64, ExecError> {
        match self {
            LispValue::Number(x) => Ok(*x),
            other => Err(ExecError::Type(format!("expected number, got {other}"))),
        }
    }

    fn integer(&self) -> Result<i64, ExecError> {
        let x = self.number()?;
        if x.fract() != 0.0 {
            return Err(ExecError::Type(format!("expected integer, got {x}")));
        }
        Ok(x as i64)
    }

    fn list(&self) -> Result<&[LispValue], ExecError> {
        match self {
            LispValue::List(items) => Ok(items),
            other => Err(ExecError::Type(format!("expected list, got {other}"))),
        }
    }

    fn closure(&self) -> Result<&Arc<Closure>, ExecError> {
        match self {
            LispValue::Closure(c) => Ok(c),
            other => Err(ExecError::Type(format!("expected function, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    /// `--`: `(v, x) ↦ x − v`.
    FlipSub,
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
    Ne,
    And,
    Or,
    Not,
    Len,
    Sort,
    Reverse,
    Range,
    Deref,
    Digits,
    Floor,
    Sqrt,
    Sum,
    Max,
    Min,
}

impl Builtin {
    fn lookup(name: &str) -> Option<Self> {
        use Builtin::*;
        Some(match name {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "%" => Mod,
            "--" => FlipSub,
            "<" => Lt,
            "<=" => Le,
            "==" => Eq,
            ">" => Gt,
            ">=" => Ge,
            "!=" => Ne,
            "&&" | "and" => And,
            "||" | "or" => Or,
            "!" | "not" => Not,
            "len" => Len,
            "sort" => Sort,
            "reverse" => Reverse,
            "range" => Range,
            "deref" => Deref,
            "digits" => Digits,
            "floor" => Floor,
            "sqrt" => Sqrt,
            "sum" => Sum,
            "max" => Max,
            "min" => Min,
            _ => return None,
        })
    }

    fn arity(self) -> (usize, usize) {
        use Builtin::*;
        match self {
            Not | Len | Sort | Reverse | Digits | Floor | Sqrt | Sum => (1, 1),
            Max | Min => (1, 2),
            _ => (2, 2),
        }
    }

    fn call(self, args: &[LispValue]) -> Result<LispValue, ExecError> {
        use Builtin::*;
        use LispValue::{Bool, List, Number, Str};
        let num = |i: usize| args[i].number();
        let out = match self {
            Add => Number(num(0)? + num(1)?),
            Sub => Number(num(0)? - num(1)?),
            Mul => Number(num(0)? * num(1)?),
            FlipSub => Number(num(1)? - num(0)?),
            Div => {
                let (a, b) = (num(0)?, num(1)?);
                if b == 0.0 {
                    return Err(ExecError::DivisionByZero);
                }
                if a.fract() == 0.0 && b.fract() == 0.0 {
                    Number((a / b).floor())
                } else {
                    Number(a / b)
                }
            }
            Mod => {
                let (a, b) = (args[0].integer()?, args[1].integer()?);
                if b == 0 {
                    return Err(ExecError::DivisionByZero);
                }
                Number(a.rem_euclid(b) as f64)
            }
            Lt => Bool(num(0)? < num(1)?),
            Le => Bool(num(0)? <= num(1)?),
            Gt => Bool(num(0)? > num(1)?),
            Ge => Bool(num(0)? >= num(1)?),
            Eq => Bool(args[0] == args[1]),
            Ne => Bool(args[0] != args[1]),
            And => Bool(args[0].truthy()? && args[1].truthy()?),
            Or => Bool(args[0].truthy()? || args[1].truthy()?),
            Not => Bool(!args[0].truthy()?),
            Len => match &args[0] {
                Str(s) => Number(s.chars().count() as f64),
                v => Number(v.list()?.len() as f64),
            },
            Sort => {
                let mut xs = args[0]
                    .list()?
                    .iter()
                    .map(LispValue::number)
                    .collect::<Result<Vec<_>, _>>()?;
                xs.sort_by(f64::total_cmp);
                LispValue::list_of_numbers(&xs)
            }
            Reverse => match &args[0] {
                Str(s) => Str(s.chars().rev().collect()),
                v => List(v.list()?.iter().rev().cloned().collect()),
            },
            Range => {
                let (a, b) = (args[0].integer()?, args[1].integer()?);
                List((a..b.max(a)).map(|i| Number(i as f64)).collect())
            }
            Deref => {
                let items = args[0].list()?;
                let i = args[1].integer()?;
                usize::try_from(i)
                    .ok()
                    .and_then(|u| items.get(u))
                    .cloned()
                    .ok_or(ExecError::IndexOutOfRange {
                        index: i,
                        len: items.len(),
                    })?
            }
            Digits => {
                let n = args[0].integer()?.unsigned_abs();
                List(
                    n.to_string()
                        .bytes()
                        .map(|d| Number(f64::from(d - b'0')))
                        .collect(),
                )
            }
            Floor => Number(num(0)?.floor()),
            Sqrt => {
                let x = num(0)?;
                if x < 0.0 {
                    return Err(ExecError::NegativeSqrt(x));
                }
                Number(x.sqrt())
            }
            Sum => Number(
                args[0]
                    .list()?
                    .iter()
                    .map(LispValue::number)
                    .sum::<Result<f64, _>>()?,
            ),
            Max | Min => {
                let xs: Vec<f64> = if args.len() == 2 {
                    vec![num(0)?, num(1)?]
                } else {
                    args[0].list()?.iter().map(LispValue::number).collect::<Result<_, _>>()?
                };
                let pick = if self == Max { f64::max } else { f64::min };
                let first = *xs.first().ok_or(ExecError::IndexOutOfRange { index: 0, len: 0 })?;
                Number(xs.into_iter().fold(first, pick))
            }
        };
        if let Number(x) = out {
            if !x.is_finite() {
                return Err(ExecError::NonFinite);
            }
        }
        Ok(out)
    }
}

/// Operand-count range of each special form.
fn special_form_arity(name: &str) -> Option<(usize, usize)> {
    Some(match name {
        "if" | "reduce" => (3, 3),
        "lambda1" | "lambda2" => (1, 1),
        "self" => (1, 2),
        "invoke1" | "map" | "filter" | "partial" | "partial1" => (2, 2),
        _ => return None,
    })
}

fn validate(program: &[RelationalTuple]) -> Result<(), ExecError> {
    if program.is_empty() {
        return Err(ExecError::EmptyProgram);
    }
    check_straight_line(program)?;
    for t in program {
        let (lo, hi) = special_form_arity(&t.relation)
            .or_else(|| Builtin::lookup(&t.relation).map(Builtin::arity))
            .ok_or_else(|| ExecError::UnknownOperator(t.relation.clone()))?;
        let n = t.operand_count();
        if n < lo || n > hi {
            let expected = if lo == hi { lo.to_string() } else { format!("{lo}..={hi}") };
            return Err(ExecError::Arity {
                op: t.relation.clone(),
                expected,
                got: n,
            });
        }
        if t.relation.starts_with("lambda") {
            let body = t.operands().next().expect("arity checked");
            if result_ref(body).is_none() {
                return Err(ExecError::Type(format!("lambda body must be a step reference, got `{body}`")));
            }
        }
    }
    Ok(())
}

struct Frame {
    args: Vec<LispValue>,
    current: Option<Arc<Closure>>,
    memo: RefCell<Vec<Option<LispValue>>>,
}

struct Interp<'p> {
    program: &'p [RelationalTuple],
    bindings: &'p BTreeMap<String, LispValue>,
    max_depth: usize,
}

impl Interp<'_> {
    fn frame(&self, args: Vec<LispValue>, current: Option<Arc<Closure>>) -> Frame {
        Frame {
            args,
            current,
            memo: RefCell::new(vec![None; self.program.len()]),
        }
    }

    fn step(&self, frame: &Frame, k: usize, depth: usize) -> Result<LispValue, ExecError> {
        if let Some(v) = &frame.memo.borrow()[k] {
            return Ok(v.clone());
        }
        let v = self.compute(frame, k, depth)?;
        frame.memo.borrow_mut()[k] = Some(v.clone());
        Ok(v)
    }

    fn compute(&self, frame: &Frame, k: usize, depth: usize) -> Result<LispValue, ExecError> {
        let t = &self.program[k];
        let ops: Vec<&str> = t.operands().collect();
        let arg = |i: usize| self.operand(frame, ops[i], depth);
        match t.relation.as_str() {
            "if" => {
                if arg(0)?.truthy()? {
                    arg(1)
                } else {
                    arg(2)
                }
            }
            r @ ("lambda1" | "lambda2") => Ok(LispValue::Closure(Arc::new(Closure::Lambda {
                arity: if r == "lambda1" { 1 } else { 2 },
                body: result_ref(ops[0]).expect("validated"),
            }))),
            "self" => {
                let f = frame.current.clone().ok_or(ExecError::SelfOutsideLambda)?;
                let args = (0..ops.len()).map(arg).collect::<Result<Vec<_>, _>>()?;
                self.apply(&f, args, depth)
            }
            "invoke1" => {
                let f = arg(0)?;
                let x = arg(1)?;
                self.apply(f.closure()?, vec![x], depth)
            }
            "map" | "filter" => {
                let list = arg(0)?;
                let f = arg(1)?;
                let f = f.closure()?;
                let mut out = Vec::new();
                for x in list.list()? {
                    let y = self.apply(f, vec![x.clone()], depth)?;
                    if t.relation == "map" {
                        out.push(y);
                    } else if y.truthy()? {
                        out.push(x.clone());
                    }
                }
                Ok(LispValue::List(out))
            }
            "reduce" => {
                let list = arg(0)?;
                let mut acc = arg(1)?;
                let f = arg(2)?;
                let f = f.closure()?;
                for x in list.list()? {
                    acc = self.apply(f, vec![acc, x.clone()], depth)?;
                }
                Ok(acc)
            }
            "partial" | "partial1" => {
                let bound = arg(0)?;
                let f = arg(1)?;
                f.closure()?;
                Ok(LispValue::Closure(Arc::new(Closure::Partial { f, bound })))
            }
            name => {
                let b = Builtin::lookup(name).ok_or_else(|| ExecError::UnknownOperator(name.into()))?;
                let args = (0..ops.len()).map(arg).collect::<Result<Vec<_>, _>>()?;
                b.call(&args)
            }
        }
    }

    fn operand(&self, frame: &Frame, symbol: &str, depth: usize) -> Result<LispValue, ExecError> {
        if let Some(i) = result_ref(symbol) {
            return self.step(frame, i, depth);
        }
        if let Some(idx) = match symbol {
            "arg1" => Some(0),
            "arg2" => Some(1),
            _ => None,
        } {
            return frame
                .args
                .get(idx)
                .cloned()
                .ok_or_else(|| ExecError::UnboundSymbol(symbol.into()));
        }
        if let Some(v) = self.bindings.get(symbol) {
            return Ok(v.clone());
        }
        match symbol {
            "true" => return Ok(LispValue::Bool(true)),
            "false" => return Ok(LispValue::Bool(false)),
            _ => {}
        }
        if let Ok(x) = symbol.parse::<f64>() {
            return Ok(LispValue::Number(x));
        }
        if let Some(b) = Builtin::lookup(symbol) {
            return Ok(LispValue::Closure(Arc::new(Closure::Builtin(b))));
        }
        Err(ExecError::UnboundSymbol(symbol.into()))
    }

    fn apply(&self, f: &Arc<Closure>, args: Vec<LispValue>, depth: usize) -> Result<LispValue, ExecError> {
        match &**f {
            Closure::Lambda { arity, body } => {
                if args.len() != *arity {
                    return Err(ExecError::Arity {
                        op: format!("lambda{arity}"),
                        expected: arity.to_string(),
                        got: args.len(),
                    });
                }
                if depth >= self.max_depth {
                    return Err(ExecError::RecursionLimit(self.max_depth));
                }
                let frame = self.frame(args, Some(f.clone()));
                stacker::maybe_grow(256 * 1024, 8 * 1024 * 1024, || self.step(&frame, *body, depth + 1))
            }
            Closure::Builtin(b) => {
                let (lo, hi) = b.arity();
                if args.len() < lo || args.len() > hi {
                    return Err(ExecError::Arity {
                        op: format!("{b:?}"),
                        expected: format!("{lo}..={hi}"),
                        got: args.len(),
                    });
                }
                b.call(&args)
            }
            Closure::Partial { f: inner, bound } => {
                if args.len() != 1 {
                    return Err(ExecError::Arity {
                        op: "partial".into(),
                        expected: "1".into(),
                        got: args.len(),
                    });
                }
                let mut full = Vec::with_capacity(2);
                full.push(bound.clone());
                full.extend(args);
                self.apply(inner.closure()?, full, depth)
            }
        }
    }
}

/// Runs a flattened program with named inputs and returns its last step.
pub fn exec_algolisp(
    program: &[RelationalTuple],
    bindings: &BTreeMap<String, LispValue>,
) -> Result<LispValue, ExecError> {
    exec_algolisp_with_depth(program, bindings, MAX_RECURSION_DEPTH)
}

pub fn exec_algolisp_with_depth(
    program: &[RelationalTuple],
    bindings: &BTreeMap<String, LispValue>,
    max_depth: usize,
) -> Result<LispValue, ExecError> {
    validate(program)?;
    let interp = Interp {
        program,
        bindings,
        max_depth,
    };
    let root = interp.frame(Vec::new(), None);
    interp.step(&root, program.len() - 1, 0)
}
