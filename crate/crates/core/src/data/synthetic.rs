//! Small generated text → program corpora for smoke tests and overfitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{link_numbers, tokenize, Sample};
use crate::lang::RelationalTuple;

const OPS: [(&str, &str); 4] = [
    ("plus", "add"),
    ("minus", "subtract"),
    ("times", "multiply"),
    ("over", "divide"),
];

/// Sentence shapes used by [`arithmetic_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithmeticTemplate {
    /// `what is a OP b then OP c …` → `(op,n0,n1) (op,#0,n2) …`
    Chain,
    /// `from a and b , OP the second by the first` → `(op,n1,n0)`
    Swapped,
}

fn sample(id: usize, text: String, program: Vec<RelationalTuple>) -> Sample {
    let (numbers, text) = link_numbers(&tokenize(&text));
    Sample {
        id: format!("syn-{id}"),
        text,
        program,
        numbers,
        tests: Vec::new(),
        options: None,
        correct: None,
    }
}

/// `n` MathQA-style samples with at most three steps, deterministic in `seed`.
/// Numbers are drawn from 1..=99, so every program executes.
pub fn arithmetic_dataset(n: usize, seed: u64) -> Vec<Sample> {
    arithmetic_dataset_with_steps(n, seed, 3)
}

/// Like [`arithmetic_dataset`] with chains of at most `max_steps` operations.
pub fn arithmetic_dataset_with_steps(n: usize, seed: u64, max_steps: usize) -> Vec<Sample> {
    let max_steps = max_steps.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let mut num = || rng.random_range(1..=99u32);
            let template = if id % 4 == 3 {
                ArithmeticTemplate::Swapped
            } else {
                ArithmeticTemplate::Chain
            };
            match template {
                ArithmeticTemplate::Chain => {
                    let steps = 1 + id % max_steps;
                    let (a, b) = (num(), num());
                    let extra: Vec<u32> = (1..steps).map(|_| num()).collect();
                    let mut rng_ops = ChaCha8Rng::seed_from_u64(seed ^ (id as u64).wrapping_mul(0x9e37_79b9));
                    let ops: Vec<usize> = (0..steps).map(|_| rng_ops.random_range(0..OPS.len())).collect();
                    let mut text = format!("what is {a} {} {b}", OPS[ops[0]].0);
                    let mut program = vec![RelationalTuple::new(OPS[ops[0]].1, &["n0", "n1"])];
                    for (k, (&c, &op)) in extra.iter().zip(&ops[1..]).enumerate() {
                        text.push_str(&format!(" then {} {c}", OPS[op].0));
                        program.push(RelationalTuple::new(OPS[op].1, &[&format!("#{k}"), &format!("n{}", k + 2)]));
                    }
                    sample(id, text, program)
                }
                ArithmeticTemplate::Swapped => {
                    let (a, b) = (num(), num());
                    let op = (id / 4) % OPS.len();
                    let text = format!("from {a} and {b} , {} the second by the first", OPS[op].0);
                    sample(id, text, vec![RelationalTuple::new(OPS[op].1, &["n1", "n0"])])
                }
            }
        })
        .collect()
}
