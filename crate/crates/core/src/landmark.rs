//! Landmark selection and the landmark-space re-embedding of rows.
//!
//! Every row is re-represented by its `d1` similarities to `n` selected
//! landmark rows (the embedding `H`, `rows x n`), and row-row similarities
//! are then computed with `d2` over those `n` coordinates instead of over
//! the co-rated columns of the rating matrix. Building `H` costs
//! `rows * n` rating-space similarity evaluations; the similarity matrix
//! costs `rows^2 * n`.

use std::cmp::Reverse;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratings::{EntityId, EntityView};
use crate::rng::SplitRng;
use crate::similarity::{MeasureKind, SimilarityMatrix, SimilarityValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Uniform draws without replacement.
    Random,
    /// Draws without replacement, proportional to row rating counts.
    DistOfRatings,
    /// Iterative diversity pruning with rating-count-weighted candidates.
    Coresets,
    /// Iterative diversity pruning with uniform candidates.
    CoresetsRandom,
    /// The `n` rows with the most ratings.
    Popularity,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::DistOfRatings,
        StrategyKind::Coresets,
        StrategyKind::CoresetsRandom,
        StrategyKind::Popularity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::DistOfRatings => "dist-of-ratings",
            StrategyKind::Coresets => "coresets",
            StrategyKind::CoresetsRandom => "coresets-random",
            StrategyKind::Popularity => "popularity",
        }
    }

    /// Whether the strategy looks at rating counts.
    pub fn is_count_aware(self) -> bool {
        matches!(
            self,
            StrategyKind::DistOfRatings | StrategyKind::Coresets | StrategyKind::Popularity
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "random" => Ok(StrategyKind::Random),
            "dist-of-ratings" | "distribution-of-ratings" | "dist" => Ok(StrategyKind::DistOfRatings),
            "coresets" => Ok(StrategyKind::Coresets),
            "coresets-random" => Ok(StrategyKind::CoresetsRandom),
            "popularity" => Ok(StrategyKind::Popularity),
            other => Err(Error::Config(format!("unknown landmark strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LandmarkSet {
    pub ids: Vec<EntityId>,
    pub strategy: StrategyKind,
    pub seed: u64,
    /// Pruning rounds run by the coreset strategies (0 otherwise).
    pub rounds: usize,
    /// Landmarks carried over from the previous coreset round because the
    /// final pool held fewer than `n` rows.
    pub topped_up: usize,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `rank,entity_id,rating_count` CSV. `labels` maps dense ids to raw ids.
    pub fn write_csv<W: Write>(
        &self,
        view: &EntityView<'_>,
        labels: Option<&[String]>,
        out: W,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "entity_id", "rating_count"])?;
        for (rank, &id) in self.ids.iter().enumerate() {
            let label = match labels {
                Some(l) => l[id as usize].clone(),
                None => id.to_string(),
            };
            w.write_record([rank.to_string(), label, view.row(id).len().to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn select_landmarks(
    view: &EntityView<'_>,
    strategy: StrategyKind,
    n: usize,
    seed: u64,
    d1: MeasureKind,
) -> Result<LandmarkSet> {
    let rows = view.num_rows();
    if n == 0 || n > rows {
        return Err(Error::TooManyLandmarks {
            requested: n,
            available: rows,
        });
    }
    let counts = view.row_counts();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut rng = SplitRng::new(seed);
    let mut set = LandmarkSet {
        ids: Vec::new(),
        strategy,
        seed,
        rounds: 0,
        topped_up: 0,
    };
    match strategy {
        StrategyKind::Random => {
            set.ids = rng.sample(rows, n).into_iter().map(|i| i as EntityId).collect();
        }
        StrategyKind::DistOfRatings => {
            set.ids = rng
                .weighted_sample(&weights, n)
                .into_iter()
                .map(|i| i as EntityId)
                .collect();
        }
        StrategyKind::Popularity => {
            let mut order: Vec<EntityId> = (0..rows as EntityId).collect();
            order.sort_by_key(|&r| (Reverse(counts[r as usize]), r));
            order.truncate(n);
            set.ids = order;
        }
        StrategyKind::Coresets | StrategyKind::CoresetsRandom => {
            let weighted = strategy == StrategyKind::Coresets;
            let out = coreset_rounds(view, n, &weights, weighted, d1, &mut rng);
            set.ids = out.ids;
            set.rounds = out.rounds;
            set.topped_up = out.topped_up;
        }
    }
    debug_assert_eq!(set.ids.len(), n);
    Ok(set)
}

struct CoresetOutcome {
    ids: Vec<EntityId>,
    rounds: usize,
    topped_up: usize,
}

/// Each row's highest defined `d1` similarity to any candidate; `UNDEFINED`
/// when it has none.
fn nearest_candidate_scores(
    view: &EntityView<'_>,
    rows: &[EntityId],
    candidates: &[EntityId],
    d1: MeasureKind,
) -> Vec<SimilarityValue> {
    rows.par_iter()
        .map(|&r| {
            candidates
                .iter()
                .map(|&c| d1.similarity(view, r, c))
                .max()
                .unwrap_or(SimilarityValue::UNDEFINED)
        })
        .collect()
}

/// Draw `n` candidates from the pool, drop the more similar half of the pool
/// (by nearest-candidate score, ties by ascending id), repeat until the pool
/// is empty. The last round's candidates are the landmarks. A final pool
/// smaller than `n` contributes all its rows, and the remaining slots go to
/// the previous round's candidates, least similar to the final ones first.
fn coreset_rounds(
    view: &EntityView<'_>,
    n: usize,
    weights: &[f64],
    weighted: bool,
    d1: MeasureKind,
    rng: &mut SplitRng,
) -> CoresetOutcome {
    let mut pool: Vec<EntityId> = (0..view.num_rows() as EntityId).collect();
    let mut previous: Vec<EntityId> = Vec::new();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let take = n.min(pool.len());
        let drawn = if weighted {
            let w: Vec<f64> = pool.iter().map(|&r| weights[r as usize]).collect();
            rng.weighted_sample(&w, take)
        } else {
            rng.sample(pool.len(), take)
        };
        let mut candidates: Vec<EntityId> = drawn.into_iter().map(|i| pool[i]).collect();

        if take < n {
            let mut extra: Vec<EntityId> = previous
                .iter()
                .copied()
                .filter(|id| !candidates.contains(id))
                .collect();
            let scores = nearest_candidate_scores(view, &extra, &candidates, d1);
            let mut ranked: Vec<(SimilarityValue, EntityId)> =
                scores.into_iter().zip(extra.iter().copied()).collect();
            ranked.sort();
            extra = ranked.into_iter().map(|(_, id)| id).collect();
            let topped_up = n - candidates.len();
            candidates.extend(extra.into_iter().take(topped_up));
            return CoresetOutcome {
                ids: candidates,
                rounds,
                topped_up,
            };
        }

        let scores = nearest_candidate_scores(view, &pool, &candidates, d1);
        let mut ranked: Vec<(SimilarityValue, EntityId)> =
            scores.into_iter().zip(pool.iter().copied()).collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let removed = ranked.len().div_ceil(2);
        pool = ranked[removed..].iter().map(|&(_, id)| id).collect();
        pool.sort_unstable();

        if pool.is_empty() {
            return CoresetOutcome {
                ids: candidates,
                rounds,
                topped_up: 0,
            };
        }
        previous = candidates;
    }
}

/// Rows re-embedded as their similarities to the landmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkEmbedding {
    rows: usize,
    h: Vec<SimilarityValue>,
    pub landmarks: LandmarkSet,
    pub d1: MeasureKind,
    pub work: EmbeddingWork,
}

/// Work done while building an embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EmbeddingWork {
    /// Rating-space similarity evaluations.
    pub measure_calls: u64,
    /// Upper bound on merge steps: the summed lengths of both rows over all
    /// evaluated pairs.
    pub entries_scanned: u64,
}

impl LandmarkEmbedding {
    /// Wraps an explicit `rows x n` row-major matrix.
    pub fn from_rows(h: Vec<SimilarityValue>, landmarks: LandmarkSet, d1: MeasureKind) -> Self {
        let n = landmarks.len();
        assert!(n > 0 && h.len().is_multiple_of(n), "H must have a multiple of n entries");
        Self {
            rows: h.len() / n,
            h,
            landmarks,
            d1,
            work: EmbeddingWork::default(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    pub fn row(&self, r: EntityId) -> &[SimilarityValue] {
        let n = self.num_landmarks();
        &self.h[r as usize * n..(r as usize + 1) * n]
    }

    pub fn get(&self, r: EntityId, j: usize) -> SimilarityValue {
        self.row(r)[j]
    }
}

/// Fills `H[u][j] = d1(u, landmarks[j])` for every row, landmarks included.
pub fn build_embedding(
    view: &EntityView<'_>,
    landmarks: &LandmarkSet,
    d1: MeasureKind,
) -> LandmarkEmbedding {
    let n = landmarks.len();
    let rows = view.num_rows();
    let mut h = vec![SimilarityValue::UNDEFINED; rows * n];
    if n > 0 {
        h.par_chunks_mut(n).enumerate().for_each(|(u, out)| {
            for (cell, &l) in out.iter_mut().zip(&landmarks.ids) {
                *cell = d1.similarity(view, u as EntityId, l);
            }
        });
    }
    let row_total: u64 = (0..rows as EntityId).map(|u| view.row(u).len() as u64).sum();
    let landmark_total: u64 = landmarks.ids.iter().map(|&l| view.row(l).len() as u64).sum();
    LandmarkEmbedding {
        rows,
        h,
        landmarks: landmarks.clone(),
        d1,
        work: EmbeddingWork {
            measure_calls: (rows * n) as u64,
            entries_scanned: row_total * n as u64 + rows as u64 * landmark_total,
        },
    }
}

/// `d2` between two embedded rows over the landmark coordinates where both
/// rows are defined. A single shared coordinate suffices.
pub fn landmark_similarity(
    emb: &LandmarkEmbedding,
    a: EntityId,
    b: EntityId,
    d2: MeasureKind,
) -> SimilarityValue {
    let pairs = emb
        .row(a)
        .iter()
        .zip(emb.row(b))
        .filter(|(x, y)| x.is_defined() && y.is_defined())
        .map(|(x, y)| (x.raw(), y.raw()));
    d2.over_pairs(pairs, 1)
}

pub fn landmark_cosine(emb: &LandmarkEmbedding, a: EntityId, b: EntityId) -> SimilarityValue {
    landmark_similarity(emb, a, b, MeasureKind::Cosine)
}

/// Row-row similarity matrix in landmark space: symmetric, `UNDEFINED`
/// diagonal.
pub fn landmark_similarity_matrix(emb: &LandmarkEmbedding, d2: MeasureKind) -> SimilarityMatrix {
    SimilarityMatrix::symmetric(emb.num_rows(), |a, b| {
        landmark_similarity(emb, a as EntityId, b as EntityId, d2)
    })
}
