use std::fmt;

use super::{result_ref, ExecError, ParseError, RelationalTuple};

/// A parsed s-expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(a) => write!(f, "{a}"),
            SExpr::List(items) => {
                write!(f, "(")?;
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

/// Parses exactly one s-expression.
pub fn parse_sexpr(text: &str) -> Result<SExpr, ParseError> {
    let bytes = text.as_bytes();
    let mut stack: Vec<(usize, Vec<SExpr>)> = Vec::new();
    let mut root: Option<SExpr> = None;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if root.is_some() {
            return err(i, "trailing input after expression");
        }
        let done = match c {
            b'(' => {
                stack.push((i, Vec::new()));
                i += 1;
                None
            }
            b')' => {
                let Some((_, items)) = stack.pop() else {
                    return err(i, "unbalanced ')'");
                };
                i += 1;
                Some(SExpr::List(items))
            }
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !matches!(bytes[i], b'(' | b')') {
                    i += 1;
                }
                Some(SExpr::Atom(text[start..i].to_string()))
            }
        };
        if let Some(node) = done {
            match stack.last_mut() {
                Some((_, items)) => items.push(node),
                None => root = Some(node),
            }
        }
    }
    if let Some((open, _)) = stack.last() {
        return err(text.len(), format!("unclosed '(' opened at offset {open}"));
    }
    root.ok_or(ParseError {
        offset: 0,
        message: "empty expression".into(),
    })
}

/// Post-order flattening of a nested program into straight-line tuples.
///
/// `(map a (partial1 b --))` → `(partial1,b,--) (map,a,#0)`.
pub fn flatten_program_tree(text: &str) -> Result<Vec<RelationalTuple>, ParseError> {
    let tree = parse_sexpr(text)?;
    flatten_sexpr(&tree)
}

pub fn flatten_sexpr(tree: &SExpr) -> Result<Vec<RelationalTuple>, ParseError> {
    if let SExpr::Atom(a) = tree {
        return err(0, format!("program must have at least one application, got atom `{a}`"));
    }
    let mut out = Vec::new();
    emit(tree, &mut out)?;
    Ok(out)
}

fn emit(node: &SExpr, out: &mut Vec<RelationalTuple>) -> Result<String, ParseError> {
    match node {
        SExpr::Atom(a) => Ok(a.clone()),
        SExpr::List(items) => {
            let Some((SExpr::Atom(head), children)) = items.split_first() else {
                return err(0, format!("application `{node}` must start with an operator symbol"));
            };
            let args = children
                .iter()
                .map(|c| emit(c, out))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(RelationalTuple {
                relation: head.clone(),
                args,
            });
            Ok(format!("#{}", out.len() - 1))
        }
    }
}

/// Inverse of [`flatten_sexpr`]: expands every `#i` into the subtree of step
/// `i`, rooted at the last step. Padding arguments are dropped.
pub fn rebuild_program_tree(program: &[RelationalTuple]) -> Result<SExpr, ExecError> {
    if program.is_empty() {
        return Err(ExecError::EmptyProgram);
    }
    super::check_straight_line(program)?;
    let mut built: Vec<SExpr> = Vec::with_capacity(program.len());
    for t in program {
        let mut items = vec![SExpr::Atom(t.relation.clone())];
        for a in t.operands() {
            items.push(match result_ref(a) {
                Some(i) => built[i].clone(),
                None => SExpr::Atom(a.to_string()),
            });
        }
        built.push(SExpr::List(items));
    }
    Ok(built.pop().expect("non-empty"))
}
