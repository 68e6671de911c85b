use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointSource {
    Pair(String),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub vector: Vec<f64>,
    pub class_label: String,
    pub source: PointSource,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmoteError {
    #[error("class {class:?} has {have} points but needs at least k + 1 = {need}")]
    TooFewPoints { class: String, have: usize, need: usize },
    #[error("neighbor count k must be at least 1")]
    ZeroK,
    #[error("points have inconsistent dimensions or non-finite entries")]
    BadVector,
}

/// Size of the largest class; the default oversampling target.
pub fn majority_count(points: &[EmbeddingPoint]) -> usize {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in points {
        *counts.entry(&p.class_label).or_insert(0) += 1;
    }
    counts.into_values().max().unwrap_or(0)
}

/// Seeded SMOTE: returns only the synthetic points.
pub fn smote(
    points: &[EmbeddingPoint],
    k: usize,
    target_count: usize,
    seed: u64,
) -> Result<Vec<EmbeddingPoint>, SmoteError> {
    let mut rng = rng_from(seed);
    smote_with(points, k, target_count, |k| (rng.gen_range(0..k), rng.gen::<f64>()))
}

/// SMOTE with an explicit draw: `draw(k)` returns which of the k nearest
/// neighbors to use and the interpolation weight in [0, 1].
///
/// Every class below `target_count` is grown round-robin over its members
/// (input order) until it reaches the target.
pub fn smote_with<F>(
    points: &[EmbeddingPoint],
    k: usize,
    target_count: usize,
    mut draw: F,
) -> Result<Vec<EmbeddingPoint>, SmoteError>
where
    F: FnMut(usize) -> (usize, f64),
{
    if k == 0 {
        return Err(SmoteError::ZeroK);
    }
    let dim = points.first().map_or(0, |p| p.vector.len());
    if points.iter().any(|p| p.vector.len() != dim || p.vector.iter().any(|v| !v.is_finite())) {
        return Err(SmoteError::BadVector);
    }
    let mut by_class: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for p in points {
        by_class.entry(&p.class_label).or_default().push(&p.vector);
    }
    let minority: Vec<(&str, &Vec<&[f64]>)> =
        by_class.iter().filter(|(_, m)| m.len() < target_count).map(|(c, m)| (*c, m)).collect();
    for (class, members) in &minority {
        if members.len() < k + 1 {
            return Err(SmoteError::TooFewPoints { class: String::from(*class), have: members.len(), need: k + 1 });
        }
    }

    let mut out = Vec::new();
    for (class, members) in minority {
        let neighbors: Vec<Vec<usize>> = (0..members.len()).map(|i| nearest(members, i, k)).collect();
        for n in 0..target_count - members.len() {
            let i = n % members.len();
            let (choice, lambda) = draw(k);
            let x = members[i];
            let nn = members[neighbors[i][choice.min(k - 1)]];
            let vector = x.iter().zip(nn).map(|(a, b)| a + lambda * (b - a)).collect();
            out.push(EmbeddingPoint { vector, class_label: String::from(class), source: PointSource::Synthetic });
        }
    }
    Ok(out)
}

/// Indices of the k nearest other members by Euclidean distance, ties by index.
fn nearest(members: &[&[f64]], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> =
        members.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, m)| (sq_dist(members[i], m), j)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
