//! Interpretability: role/filler assignments, relation-vector clustering and
//! static reports.

mod report;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Vocabularies;
use crate::model::{ModelError, Tpn2fModel};
use crate::parallel::{self, Parallelism};
use crate::tensor::Tape;
use crate::train::{greedy_decode_steps, TrainError};

pub use report::{emit_report, render_roles_svg, render_scatter_svg, ClusterPoint};
pub use stats::{kmeans, pca_project, KMeans, Pca};

/// Softmax scores below this are dropped.
pub const SCORE_THRESHOLD: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no samples to analyse")]
    EmptyDataset,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("k = {k} exceeds the {n} points")]
    TooManyClusters { k: usize, n: usize },
    #[error("{0}")]
    Dims(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// `(id, score)` pairs with score ≥ [`SCORE_THRESHOLD`], highest first; equal
/// scores keep id order.
pub fn filter_scores(scores: &[f64]) -> Vec<(usize, f64)> {
    let mut kept: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, s)| s >= SCORE_THRESHOLD)
        .collect();
    kept.sort_by(|a, b| b.1.total_cmp(&a.1));
    kept
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub token: String,
    pub position: usize,
    pub kept_fillers: Vec<(usize, f64)>,
    pub kept_roles: Vec<(usize, f64)>,
}

/// Filler and role selection scores for each token of `text`, thresholded.
pub fn extract_assignments(
    model: &Tpn2fModel,
    vocab: &Vocabularies,
    text: &[String],
) -> Result<Vec<AssignmentRecord>> {
    if !model.has_dictionaries() {
        return Err(ModelError::Unsupported("role/filler assignment").into());
    }
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let enc = model.encode_sequence(&mut tape, &p, &vocab.encode_tokens(text))?;
    Ok(text
        .iter()
        .enumerate()
        .map(|(i, tok)| AssignmentRecord {
            token: tok.clone(),
            position: i,
            kept_fillers: filter_scores(tape.value(enc.filler_weights[i]).data()),
            kept_roles: filter_scores(tape.value(enc.role_weights[i]).data()),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationVectorStats {
    pub relation: String,
    /// Mean `r′_rel` over every step that emitted `relation`.
    pub mean: Vec<f64>,
    pub count: usize,
}

/// Greedy-decodes every input and averages the relation unbinding vector per
/// emitted relation symbol. Output is sorted by symbol.
pub fn collect_relation_vectors(
    model: &Tpn2fModel,
    vocab: &Vocabularies,
    inputs: &[Vec<usize>],
    max_len: usize,
    mode: Parallelism,
) -> Result<Vec<RelationVectorStats>> {
    if inputs.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    if model.positional_unbinding().is_none() {
        return Err(ModelError::Unsupported("relation unbinding vectors").into());
    }
    let decoded = parallel::map(inputs, mode, |tokens| greedy_decode_steps(model, tokens, max_len));
    let mut groups: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for steps in decoded {
        for step in steps? {
            let v = step.relation_vector.expect("TPR decoder");
            let symbol = vocab.relations.symbol(step.tuple[0]).to_string();
            let (sum, n) = groups.entry(symbol).or_insert_with(|| (vec![0.0; v.len()], 0));
            for (s, x) in sum.iter_mut().zip(v.data()) {
                *s += x;
            }
            *n += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|(relation, (sum, count))| RelationVectorStats {
            relation,
            mean: sum.into_iter().map(|s| s / count as f64).collect(),
            count,
        })
        .collect())
}

/// Averaged vectors → 2-D PCA → k-means, one point per relation.
pub fn cluster_relations(stats: &[RelationVectorStats], k: usize, seed: u64) -> Result<(Vec<ClusterPoint>, Pca)> {
    let vectors: Vec<Vec<f64>> = stats.iter().map(|s| s.mean.clone()).collect();
    let dim = vectors.first().map_or(0, Vec::len).min(2);
    let pca = pca_project(&vectors, dim)?;
    let km = kmeans(&pca.projected, k, seed)?;
    let points = stats
        .iter()
        .zip(&pca.projected)
        .zip(&km.labels)
        .map(|((s, xy), &cluster)| ClusterPoint {
            relation: s.relation.clone(),
            x: xy[0],
            y: xy.get(1).copied().unwrap_or(0.0),
            cluster,
        })
        .collect();
    Ok((points, pca))
}
