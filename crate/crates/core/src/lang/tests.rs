use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::parallel::Parallelism;

fn prog(text: &str) -> Vec<RelationalTuple> {
    parse_tuple_sequence(text).unwrap()
}

fn nums(xs: &[f64]) -> LispValue {
    LispValue::list_of_numbers(xs)
}

fn bind(pairs: &[(&str, LispValue)]) -> BTreeMap<String, LispValue> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn parses_comma_separated_tuples() {
    let p = prog("(add,n0,n2) (divide,n1,const100) (divide,#0,#1)");
    assert_eq!(p.len(), 3);
    assert_eq!(p[1], RelationalTuple::new("divide", &["n1", "const100"]));
    assert_eq!(format_program(&p), "(add,n0,n2) (divide,n1,const100) (divide,#0,#1)");
}

#[test]
fn parses_space_separated_and_pads_unary() {
    let p = prog("( <=,arg1,1 ) (sqrt n0)\n(if,#0,1,#3)");
    assert_eq!(p[0], RelationalTuple::new("<=", &["arg1", "1"]));
    assert_eq!(p[1], RelationalTuple::new("sqrt", &["n0", PAD]));
    assert_eq!(p[2].args.len(), 3);
}

#[test]
fn parse_errors_carry_offsets() {
    assert_eq!(prog(""), vec![]);
    assert_eq!(parse_tuple_sequence("(add,n0").unwrap_err().offset, 7);
    assert_eq!(parse_tuple_sequence("(add,n0) ()").unwrap_err().offset, 9);
    assert!(parse_tuple_sequence("(add)").is_err());
    assert!(parse_tuple_sequence("(f,a,b,c,d)").is_err());
    assert_eq!(parse_tuple_sequence("add,n0)").unwrap_err().offset, 0);
    assert!(parse_tuple_sequence("(a,(b,c))").is_err());
}

#[test]
fn parses_call_form() {
    let p = parse_call_sequence("multiply(n0,n1), divide(#0,const-100), add(n0,#1)").unwrap();
    assert_eq!(
        p,
        vec![
            RelationalTuple::new("multiply", &["n0", "n1"]),
            RelationalTuple::new("divide", &["#0", "const-100"]),
            RelationalTuple::new("add", &["n0", "#1"]),
        ]
    );
    assert!(parse_call_sequence("add(n0").is_err());
}

#[test]
fn tuples_serialise_as_flat_arrays() {
    let t = RelationalTuple::new("add", &["n0", "n1"]);
    let s = serde_json::to_string(&t).unwrap();
    assert_eq!(s, r#"["add","n0","n1"]"#);
    assert_eq!(serde_json::from_str::<RelationalTuple>(&s).unwrap(), t);
    assert!(serde_json::from_str::<RelationalTuple>("[]").is_err());
}

#[test]
fn mathqa_worked_example() {
    let p = prog("(add,n0,n2) (divide,n1,const100) (divide,#0,#1)");
    let env = ProgramEnv::new(vec![20.0, 60.0, 88.0]);
    let trace = OperatorTable::default().trace(&p, &env).unwrap();
    assert_eq!(trace[0], 108.0);
    assert!((trace[1] - 0.6).abs() < 1e-12);
    // 0.6x − 20 = 88
    assert!((exec_mathqa(&p, &env).unwrap() - 180.0).abs() < 1e-9);
}

#[test]
fn mathqa_population_sample() {
    let p = parse_call_sequence("multiply(n0,n1), divide(#0,const-100), add(n0,#1)").unwrap();
    let env = ProgramEnv::new(vec![3888.0, 20.0, 1.0]);
    let trace = OperatorTable::default().trace(&p, &env).unwrap();
    assert_eq!(trace[0], 77760.0);
    assert!((trace[1] - 777.6).abs() < 1e-9);
    assert!((trace[2] - 4665.6).abs() < 1e-9);
}

#[test]
fn mathqa_errors_have_distinct_codes() {
    let env = ProgramEnv::new(vec![1.0, 0.0]);
    let cases = [
        ("(divide,n0,n1)", "division_by_zero"),
        ("(frobnicate,n0,n1)", "unknown_operator"),
        ("(add,n0,#0)", "dangling_reference"),
        ("(negate,n0) (sqrt,#0)", "negative_sqrt"),
        ("(add,n0,n7)", "unbound_symbol"),
        ("(sqrt,n0,n1)", "arity"),
    ];
    let mut seen = std::collections::BTreeSet::new();
    for (src, code) in cases {
        let e = exec_mathqa(&prog(src), &env).unwrap_err();
        assert_eq!(e.code(), code, "{src}");
        seen.insert(e.code());
    }
    assert_eq!(seen.len(), cases.len());
    assert_eq!(exec_mathqa(&[], &env).unwrap_err(), ExecError::EmptyProgram);
}

#[test]
fn mathqa_constants_and_extra_ops() {
    let env = ProgramEnv::new(vec![2.0, 3.0, 4.0]);
    assert_eq!(env.constant("const100"), Some(100.0));
    assert_eq!(env.constant("const0.2778"), Some(0.2778));
    assert_eq!(env.constant("const_0_25"), Some(0.25));
    assert_eq!(env.constant("const_pi"), Some(std::f64::consts::PI));
    assert_eq!(env.constant("n0"), None);
    let p = prog("(multiply,const4,const100) (sqrt,#0)");
    assert_eq!(exec_mathqa(&p, &env).unwrap(), 20.0);
    let p = prog("(volume_rectangular_prism,n0,n1,n2)");
    assert_eq!(exec_mathqa(&p, &env).unwrap(), 24.0);
    let table = OperatorTable::default().with_alias("times", MathOp::Multiply);
    assert_eq!(table.exec(&prog("(times,n0,n1)"), &env).unwrap(), 6.0);
}

#[test]
fn lisp_partial1_decrement() {
    let p = prog("(partial1,b,--) (map,a,#0)");
    let env = bind(&[("a", nums(&[5.0, 3.0])), ("b", LispValue::Number(2.0))]);
    assert_eq!(exec_algolisp(&p, &env).unwrap(), nums(&[3.0, 1.0]));
}

#[test]
fn lisp_factorial() {
    let p = prog("( <=,arg1,1 ) ( -,arg1,1 ) ( self,#1 ) ( *,#2,arg1 ) ( if,#0,1,#3 ) ( lambda1,#4 ) ( invoke1,#5,a )");
    for (a, want) in [(4.0, 24.0), (1.0, 1.0), (6.0, 720.0)] {
        let env = bind(&[("a", LispValue::Number(a))]);
        assert_eq!(exec_algolisp(&p, &env).unwrap(), LispValue::Number(want));
    }
}

#[test]
fn lisp_partial_then_map() {
    let p = prog("( partial, b,* ) ( partial1,c,+ ) ( map,a,#0 ) ( map,#2,#1 )");
    let env = bind(&[
        ("a", nums(&[1.0, 2.0])),
        ("b", LispValue::Number(3.0)),
        ("c", LispValue::Number(10.0)),
    ]);
    assert_eq!(exec_algolisp(&p, &env).unwrap(), nums(&[13.0, 16.0]));
}

#[test]
fn lisp_builtins() {
    let env = bind(&[("a", nums(&[3.0, 1.0, 2.0])), ("n", LispValue::Number(907.0))]);
    let run = |src: &str| exec_algolisp(&prog(src), &env).unwrap();
    assert_eq!(run("(range,0,3)"), nums(&[0.0, 1.0, 2.0]));
    assert_eq!(run("(range,3,0)"), nums(&[]));
    assert_eq!(run("(sort,a)"), nums(&[1.0, 2.0, 3.0]));
    assert_eq!(run("(reverse,a)"), nums(&[2.0, 1.0, 3.0]));
    assert_eq!(run("(deref,a,0)"), LispValue::Number(3.0));
    assert_eq!(run("(digits,n)"), nums(&[9.0, 0.0, 7.0]));
    assert_eq!(run("(len,a)"), LispValue::Number(3.0));
    assert_eq!(run("(/,7,2)"), LispValue::Number(3.0));
    assert_eq!(run("(/,7.5,2.5)"), LispValue::Number(3.0));
    assert_eq!(run("(reduce,a,0,+)"), LispValue::Number(6.0));
    assert_eq!(run("(max,a)"), LispValue::Number(3.0));
    // partial1 binds the first operand: x ↦ 2 > x
    assert_eq!(run("(partial1,2,>) (filter,a,#0)"), nums(&[1.0]));
    assert_eq!(run("(==,a,a)"), LispValue::Bool(true));
    assert_eq!(run("(sqrt,16)"), LispValue::Number(4.0));
}

#[test]
fn lisp_lambda2_with_reduce() {
    let p = prog("(*,arg1,arg2) (lambda2,#0) (reduce,a,1,#1)");
    let env = bind(&[("a", nums(&[2.0, 3.0, 4.0]))]);
    assert_eq!(exec_algolisp(&p, &env).unwrap(), LispValue::Number(24.0));
}

#[test]
fn lisp_errors() {
    let env = bind(&[("a", nums(&[1.0]))]);
    let err = |src: &str| exec_algolisp(&prog(src), &env).unwrap_err();
    assert_eq!(err("(self,a)"), ExecError::SelfOutsideLambda);
    assert!(matches!(err("(frob,a,a)"), ExecError::UnknownOperator(_)));
    assert!(matches!(err("(len,a,a)"), ExecError::Arity { .. }));
    assert!(matches!(err("(map,a,#1) (len,a)"), ExecError::DanglingReference { .. }));
    assert!(matches!(err("(deref,a,5)"), ExecError::IndexOutOfRange { index: 5, len: 1 }));
    assert!(matches!(err("(len,zz)"), ExecError::UnboundSymbol(_)));
    assert!(matches!(err("(lambda1,a)"), ExecError::Type(_)));
    assert!(matches!(err("(/,1,0)"), ExecError::DivisionByZero));
}

#[test]
fn lisp_runaway_recursion_is_caught() {
    let p = prog("(self,arg1) (lambda1,#0) (invoke1,#1,a)");
    let env = bind(&[("a", LispValue::Number(1.0))]);
    assert_eq!(
        exec_algolisp(&p, &env).unwrap_err(),
        ExecError::RecursionLimit(MAX_RECURSION_DEPTH)
    );
    assert_eq!(
        exec_algolisp_with_depth(&p, &env, 5).unwrap_err(),
        ExecError::RecursionLimit(5)
    );
}

#[test]
fn lisp_values_round_trip_json() {
    let v = LispValue::from_json(&json!([1, [2.5, true], "x"])).unwrap();
    assert_eq!(v.to_json().unwrap(), json!([1, [2.5, true], "x"]));
    assert!(LispValue::from_json(&json!({"a": 1})).is_err());
    assert!(LispValue::Number(1.0).approx_eq(&LispValue::Number(1.0 + 1e-9), 1e-6));
}

#[test]
fn flatten_appendix_example() {
    let p = flatten_program_tree("(map a (partial1 b --))").unwrap();
    assert_eq!(
        p,
        vec![
            RelationalTuple::new("partial1", &["b", "--"]),
            RelationalTuple::new("map", &["a", "#0"]),
        ]
    );
    assert!(flatten_program_tree("a").is_err());
    assert!(flatten_program_tree("(map a").is_err());
    assert!(flatten_program_tree("(map a) b").is_err());
    assert!(flatten_program_tree("((f) a)").is_err());
}

#[test]
fn flatten_factorial_tree_matches_sequence() {
    let p = flatten_program_tree("(invoke1 (lambda1 (if (<= arg1 1) 1 (* (self (- arg1 1)) arg1))) a)").unwrap();
    let want = prog("(<=,arg1,1) (-,arg1,1) (self,#1 ) (*,#2,arg1) (if,#0,1,#3) (lambda1,#4) (invoke1,#5,a)");
    let strip = |v: Vec<RelationalTuple>| {
        v.into_iter()
            .map(|t| RelationalTuple {
                args: t.operands().map(String::from).collect(),
                ..t
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(p), strip(want));
}

fn arb_tree() -> impl Strategy<Value = SExpr> {
    let atom = prop::sample::select(vec!["a", "b", "c", "1", "+", "--", "arg1"]).prop_map(|s| SExpr::Atom(s.to_string()));
    let head = prop::sample::select(vec!["map", "f", "g", "add", "if"]).prop_map(|s| SExpr::Atom(s.to_string()));
    let leaf_app = (head.clone(), prop::collection::vec(atom.clone(), 1..=3)).prop_map(|(h, xs)| {
        let mut v = vec![h];
        v.extend(xs);
        SExpr::List(v)
    });
    leaf_app.prop_recursive(5, 64, 3, move |inner| {
        (head.clone(), prop::collection::vec(prop_oneof![atom.clone(), inner], 1..=3)).prop_map(|(h, xs)| {
            let mut v = vec![h];
            v.extend(xs);
            SExpr::List(v)
        })
    })
}

fn depth(t: &SExpr) -> usize {
    match t {
        SExpr::Atom(_) => 0,
        SExpr::List(xs) => 1 + xs.iter().map(depth).max().unwrap_or(0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn flatten_rebuild_round_trip(tree in arb_tree()) {
        prop_assert!(depth(&tree) <= 6);
        let flat = flatten_sexpr(&tree).unwrap();
        prop_assert_eq!(rebuild_program_tree(&flat).unwrap(), tree.clone());
        let text = tree.to_string();
        prop_assert_eq!(parse_sexpr(&text).unwrap(), tree);
    }
}

proptest! {
    #[test]
    fn forward_references_rejected_before_execution(
        steps in prop::collection::vec((0usize..6, 0usize..6, any::<bool>()), 1..6)
    ) {
        let program: Vec<RelationalTuple> = steps
            .iter()
            .map(|&(x, y, lisp)| {
                let op = if lisp { "+" } else { "add" };
                RelationalTuple::new(op, &[&format!("#{x}"), &format!("#{y}")])
            })
            .collect();
        let forward = program
            .iter()
            .enumerate()
            .any(|(k, t)| t.args.iter().any(|a| result_ref(a).unwrap() >= k));
        let env = ProgramEnv::new(vec![]);
        let mut m = program.clone();
        for t in &mut m { t.relation = "add".into(); }
        let mut l = program;
        for t in &mut l { t.relation = "+".into(); }
        let rm = exec_mathqa(&m, &env);
        let rl = exec_algolisp(&l, &BTreeMap::new());
        prop_assert_eq!(forward, matches!(rm, Err(ExecError::DanglingReference { .. })));
        prop_assert_eq!(forward, matches!(rl, Err(ExecError::DanglingReference { .. })));
    }

    #[test]
    fn mathqa_execution_is_deterministic(a in -1e3f64..1e3, b in 0.5f64..1e3) {
        let p = prog("(add,n0,n1) (divide,#0,n1) (power,#1,const2) (sqrt,#2)");
        let env = ProgramEnv::new(vec![a, b]);
        let x = exec_mathqa(&p, &env).unwrap();
        prop_assert_eq!(x.to_bits(), exec_mathqa(&p, &env).unwrap().to_bits());
    }

    #[test]
    fn acc_never_exceeds_p50(passes in prop::collection::vec((0usize..=4, 1usize..=4), 1..8)) {
        // program (+,x,1); test expects x+1 when it should pass, something else otherwise
        let program = prog("(+,x,1)");
        let mut preds = Vec::new();
        let mut suites = Vec::new();
        for &(k, n) in &passes {
            let k = k.min(n);
            let tests = (0..n)
                .map(|i| IoTest {
                    inputs: [("x".to_string(), json!(i))].into_iter().collect(),
                    expected: json!(if i < k { i + 1 } else { 1000 }),
                })
                .collect();
            preds.push(program.clone());
            suites.push(ExecSuite::AlgoLisp { tests });
        }
        let r = evaluate_metrics(&preds, &preds, &suites, Parallelism::Sequential).unwrap();
        prop_assert!(r.acc.unwrap() <= r.p50_acc.unwrap());
    }
}

#[test]
fn metrics_perfect_predictions() {
    let g = vec![
        prog("(add,n0,n2) (divide,n1,const100) (divide,#0,#1)"),
        prog("(multiply,n0,n1)"),
    ];
    let suites = vec![
        ExecSuite::MathQa {
            numbers: vec![20.0, 60.0, 88.0],
            options: Some(vec![150.0, 180.0, 200.0]),
            correct: None,
        },
        ExecSuite::MathQa {
            numbers: vec![2.0, 3.0],
            options: None,
            correct: None,
        },
    ];
    let r = evaluate_metrics(&g, &g, &suites, Parallelism::Parallel).unwrap();
    assert_eq!(r.op_acc, 1.0);
    assert_eq!(r.exec_acc, Some(1.0));
    assert_eq!(r.m_acc, 1.0);
    assert_eq!(r.acc, None);
    assert_eq!(r.n, 2);
}

#[test]
fn metrics_exact_match_versus_execution() {
    let gold = vec![prog("(+,x,1)"), prog("(+,x,2)")];
    // second prediction is a different program with the same behaviour
    let pred = vec![prog("(+,x,1)"), prog("(+,x,1) (+,#0,1)")];
    let suite = |k: i64| ExecSuite::AlgoLisp {
        tests: (0..4)
            .map(|i| IoTest {
                inputs: [("x".to_string(), json!(i))].into_iter().collect(),
                expected: json!(i + k),
            })
            .collect(),
    };
    let r = evaluate_metrics(&pred, &gold, &[suite(1), suite(2)], Parallelism::Sequential).unwrap();
    assert_eq!(r.m_acc, 0.5);
    assert_eq!(r.acc, Some(1.0));
    assert_eq!(r.p50_acc, Some(1.0));
}

#[test]
fn metrics_half_passing_counts_for_p50_only() {
    let program = prog("(+,x,1)");
    let tests = (0..10)
        .map(|i| IoTest {
            inputs: [("x".to_string(), json!(i))].into_iter().collect(),
            expected: json!(if i < 5 { i + 1 } else { -1 }),
        })
        .collect();
    let suites = [ExecSuite::AlgoLisp { tests }];
    let r = evaluate_metrics(&[program.clone()], &[program], &suites, Parallelism::Sequential).unwrap();
    assert_eq!(r.acc, Some(0.0));
    assert_eq!(r.p50_acc, Some(1.0));
}

#[test]
fn metrics_option_matching_and_length_check() {
    let gold = vec![prog("(add,n0,n1)")];
    let pred = vec![prog("(add,n0,n0)")];
    let suites = [ExecSuite::MathQa {
        numbers: vec![10.0, 10.5],
        options: Some(vec![0.0, 20.0, 100.0]),
        correct: None,
    }];
    // 20 and 20.5 both snap to the option 20
    let r = evaluate_metrics(&pred, &gold, &suites, Parallelism::Sequential).unwrap();
    assert_eq!(r.exec_acc, Some(1.0));
    assert_eq!(r.op_acc, 0.0);
    let suites = [ExecSuite::MathQa {
        numbers: vec![10.0, 10.5],
        options: Some(vec![0.0, 20.0, 100.0]),
        correct: Some(2),
    }];
    let r = evaluate_metrics(&pred, &gold, &suites, Parallelism::Sequential).unwrap();
    assert_eq!(r.exec_acc, Some(0.0));
    assert!(evaluate_metrics(&pred, &[], &[], Parallelism::Sequential).is_err());
}
