//! Mean-centered kNN rating prediction.
//!
//! For a target row `u` and column `v`:
//!
//! ```text
//! r(u, v) = mean(u) + sum_j s(u, j) * (r(j, v) - mean(j)) / sum_j s(u, j)
//! ```
//!
//! where `j` ranges over the `k` most similar rows that rated `v`. All means
//! are over the ratings of the matrix the view is built on (the training
//! data during evaluation).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ratings::{EntityId, EntityView};
use crate::similarity::{SimilarityMatrix, SimilarityValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub k: usize,
    /// Neighborhoods smaller than this fall back to the row mean.
    pub min_neighbors: usize,
    /// Only neighbors with strictly positive similarity take part.
    pub positive_only: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            k: 13,
            min_neighbors: 1,
            positive_only: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionSource {
    /// The neighborhood formula.
    Neighbors,
    /// The target row's mean (user mean in user-based mode).
    RowMean,
    /// The global mean, for rows without ratings.
    GlobalMean,
}

impl PredictionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionSource::Neighbors => "eq1",
            PredictionSource::RowMean => "user-mean-fallback",
            PredictionSource::GlobalMean => "global-mean-fallback",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub source: PredictionSource,
    pub neighbors_used: usize,
}

#[derive(Clone, Copy)]
struct Neighbor {
    sim: f64,
    id: EntityId,
    rating: f64,
}

/// Predicts the rating of column `col` for row `row`. Total over valid ids:
/// empty neighborhoods fall back to the row mean, rows without ratings to the
/// global mean (or the scale midpoint when the matrix is empty).
pub fn predict(
    view: &EntityView<'_>,
    sims: &SimilarityMatrix,
    row: EntityId,
    col: EntityId,
    cfg: &PredictorConfig,
) -> Prediction {
    let scale = view.scale();
    let fallback = |value: f64, source| Prediction {
        value: scale.clamp(value),
        source,
        neighbors_used: 0,
    };
    let Some(row_mean) = view.row_mean(row) else {
        let global = view.global_mean().unwrap_or_else(|| scale.midpoint());
        return fallback(global, PredictionSource::GlobalMean);
    };

    let sim_row = sims.row(row);
    let mut neighbors: Vec<Neighbor> = view
        .col(col)
        .iter()
        .filter(|&(id, _)| id != row)
        .filter_map(|(id, rating)| {
            let sim = sim_row[id as usize].get()?;
            (!cfg.positive_only || sim > 0.0).then_some(Neighbor { sim, id, rating })
        })
        .collect();

    let by_rank = |a: &Neighbor, b: &Neighbor| {
        SimilarityValue::new(b.sim)
            .cmp(&SimilarityValue::new(a.sim))
            .then(a.id.cmp(&b.id))
    };
    if neighbors.len() > cfg.k {
        neighbors.select_nth_unstable_by(cfg.k, by_rank);
        neighbors.truncate(cfg.k);
    }
    neighbors.sort_unstable_by(by_rank);

    if neighbors.is_empty() || neighbors.len() < cfg.min_neighbors {
        return fallback(row_mean, PredictionSource::RowMean);
    }

    let means = view.row_means();
    let (mut num, mut den) = (0.0, 0.0);
    for nb in &neighbors {
        let mean = means[nb.id as usize].expect("a row with a rating has a mean");
        num += nb.sim * (nb.rating - mean);
        den += nb.sim;
    }
    if den == 0.0 {
        return fallback(row_mean, PredictionSource::RowMean);
    }
    Prediction {
        value: scale.clamp(num / den + row_mean),
        source: PredictionSource::Neighbors,
        neighbors_used: neighbors.len(),
    }
}

/// [`predict`] for every `(row, col)` pair, in input order.
pub fn predict_batch(
    view: &EntityView<'_>,
    sims: &SimilarityMatrix,
    pairs: &[(EntityId, EntityId)],
    cfg: &PredictorConfig,
) -> Vec<Prediction> {
    pairs
        .par_iter()
        .map(|&(row, col)| predict(view, sims, row, col, cfg))
        .collect()
}
