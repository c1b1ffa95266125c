use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{DataError, Result, Sample};
use crate::lang::{RelationalTuple, PAD};

pub const TOKEN_UNK: usize = 0;
pub const GO: usize = 0;
pub const EOS: usize = 1;
pub const ARG_PAD: usize = 0;
pub const ARG_UNK: usize = 1;

const UNK: &str = "UNK";

/// Symbol ↔ id table. Special symbols come first, then the rest by
/// descending frequency with ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(symbols: Vec<String>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { symbols, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

impl Vocab {
    fn build<'a>(specials: &[&str], items: impl Iterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in items.filter(|s| !specials.contains(s)) {
            *counts.entry(s).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let symbols: Vec<String> = specials
            .iter()
            .copied()
            .chain(ranked.into_iter().map(|(s, _)| s))
            .map(String::from)
            .collect();
        symbols.into()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        self.symbols.get(id).map_or(UNK, String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub tokens: Vocab,
    pub relations: Vocab,
    pub args: Vocab,
}

/// A sample as id sequences. `targets` ends with the `(EOS, PAD, …)` tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSample {
    pub tokens: Vec<usize>,
    pub targets: Vec<Vec<usize>>,
}

/// Token vocab from text (plus `UNK`), relation vocab from tuple heads (plus
/// `GO`, `EOS`), argument vocab from tuple arguments (plus `PAD`, `UNK`).
pub fn build_vocabularies(samples: &[Sample]) -> Result<Vocabularies> {
    if samples.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let tokens = Vocab::build(&[UNK], samples.iter().flat_map(|s| s.text.iter().map(String::as_str)));
    let relations = Vocab::build(
        &["GO", "EOS"],
        samples.iter().flat_map(|s| s.program.iter().map(|t| t.relation.as_str())),
    );
    let args = Vocab::build(
        &[PAD, UNK],
        samples
            .iter()
            .flat_map(|s| s.program.iter().flat_map(|t| t.args.iter().map(String::as_str))),
    );
    Ok(Vocabularies {
        tokens,
        relations,
        args,
    })
}

impl Vocabularies {
    pub fn encode_tokens(&self, text: &[String]) -> Vec<usize> {
        text.iter().map(|t| self.tokens.id(t).unwrap_or(TOKEN_UNK)).collect()
    }

    /// `(rel, arg₁, …, arg_positions)` ids; unknown arguments map to `UNK`.
    pub fn encode_tuple(&self, t: &RelationalTuple, positions: usize) -> Result<Vec<usize>> {
        let rel = self
            .relations
            .id(&t.relation)
            .ok_or_else(|| DataError::UnknownRelation(t.relation.clone()))?;
        let mut ids = Vec::with_capacity(positions + 1);
        ids.push(rel);
        for k in 0..positions {
            let a = t.args.get(k).map_or(ARG_PAD, |a| self.args.id(a).unwrap_or(ARG_UNK));
            ids.push(a);
        }
        Ok(ids)
    }

    pub fn encode_sample(&self, s: &Sample, positions: usize) -> Result<EncodedSample> {
        let mut targets = s
            .program
            .iter()
            .map(|t| self.encode_tuple(t, positions))
            .collect::<Result<Vec<_>>>()?;
        targets.push(Self::eos_tuple(positions));
        Ok(EncodedSample {
            tokens: self.encode_tokens(&s.text),
            targets,
        })
    }

    pub fn go_tuple(positions: usize) -> Vec<usize> {
        let mut t = vec![ARG_PAD; positions + 1];
        t[0] = GO;
        t
    }

    pub fn eos_tuple(positions: usize) -> Vec<usize> {
        let mut t = vec![ARG_PAD; positions + 1];
        t[0] = EOS;
        t
    }

    pub fn decode_tuple(&self, ids: &[usize]) -> RelationalTuple {
        RelationalTuple {
            relation: self.relations.symbol(ids[0]).to_string(),
            args: ids[1..].iter().map(|&a| self.args.symbol(a).to_string()).collect(),
        }
    }
}
