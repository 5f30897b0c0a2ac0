//! Rating-space similarity measures over co-rated columns.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratings::{EntityId, EntityView};

/// A similarity, or `UNDEFINED` when it cannot be computed.
///
/// Stored as an `f64` with `-inf` as the sentinel, so the natural ordering
/// already ranks an undefined similarity below every real one.
#[derive(Clone, Copy, PartialEq)]
#[repr(transparent)]
pub struct SimilarityValue(f64);

impl SimilarityValue {
    pub const UNDEFINED: Self = Self(f64::NEG_INFINITY);

    /// Non-finite inputs map to `UNDEFINED`.
    #[inline]
    pub fn new(value: f64) -> Self {
        if value.is_finite() {
            Self(value)
        } else {
            Self::UNDEFINED
        }
    }

    #[inline]
    pub fn get(self) -> Option<f64> {
        self.is_defined().then_some(self.0)
    }

    #[inline]
    pub fn is_defined(self) -> bool {
        self.0 != f64::NEG_INFINITY
    }

    /// The raw encoding: the value, or `-inf`.
    #[inline]
    pub fn raw(self) -> f64 {
        self.0
    }

    pub fn to_bits(self) -> u64 {
        self.0.to_bits()
    }
}

impl Eq for SimilarityValue {}

impl PartialOrd for SimilarityValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimilarityValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Debug for SimilarityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.get() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("UNDEFINED"),
        }
    }
}

impl From<Option<f64>> for SimilarityValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::UNDEFINED, Self::new)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Euclidean,
    Cosine,
    Pearson,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [
        MeasureKind::Euclidean,
        MeasureKind::Cosine,
        MeasureKind::Pearson,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Euclidean => "euclidean",
            MeasureKind::Cosine => "cosine",
            MeasureKind::Pearson => "pearson",
        }
    }

    /// Similarity of two rows over their co-rated columns.
    pub fn similarity(self, view: &EntityView<'_>, a: EntityId, b: EntityId) -> SimilarityValue {
        match self {
            MeasureKind::Euclidean => euclidean_similarity(view, a, b),
            MeasureKind::Cosine => cosine(view, a, b),
            MeasureKind::Pearson => pearson(view, a, b),
        }
    }

    /// Applies the measure to explicit value pairs; `min_pairs` is the
    /// smallest number of pairs for which a value is produced.
    pub(crate) fn over_pairs<I>(self, pairs: I, min_pairs: usize) -> SimilarityValue
    where
        I: Iterator<Item = (f64, f64)> + Clone,
    {
        match self {
            MeasureKind::Euclidean => euclidean_pairs(pairs, min_pairs),
            MeasureKind::Cosine => cosine_pairs(pairs, min_pairs),
            MeasureKind::Pearson => pearson_pairs(pairs, min_pairs),
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(MeasureKind::Euclidean),
            "cosine" => Ok(MeasureKind::Cosine),
            "pearson" => Ok(MeasureKind::Pearson),
            other => Err(Error::Config(format!("unknown similarity measure `{other}`"))),
        }
    }
}

/// Rows must share more than one co-rated column for any rating-space measure.
pub const MIN_CORATED: usize = 2;

#[inline]
fn cosine_pairs<I: Iterator<Item = (f64, f64)>>(pairs: I, min_pairs: usize) -> SimilarityValue {
    let (mut dot, mut xx, mut yy, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (x, y) in pairs {
        dot += x * y;
        xx += x * x;
        yy += y * y;
        n += 1;
    }
    if n < min_pairs || xx == 0.0 || yy == 0.0 {
        return SimilarityValue::UNDEFINED;
    }
    SimilarityValue::new((dot / (xx * yy).sqrt()).clamp(-1.0, 1.0))
}

#[inline]
fn pearson_pairs<I>(pairs: I, min_pairs: usize) -> SimilarityValue
where
    I: Iterator<Item = (f64, f64)> + Clone,
{
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in pairs.clone() {
        sx += x;
        sy += y;
        n += 1;
    }
    if n < min_pairs.max(1) {
        return SimilarityValue::UNDEFINED;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return SimilarityValue::UNDEFINED;
    }
    SimilarityValue::new((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

#[inline]
fn euclidean_pairs<I: Iterator<Item = (f64, f64)>>(pairs: I, min_pairs: usize) -> SimilarityValue {
    let (mut ss, mut n) = (0.0, 0usize);
    for (x, y) in pairs {
        let d = x - y;
        ss += d * d;
        n += 1;
    }
    if n < min_pairs.max(1) {
        return SimilarityValue::UNDEFINED;
    }
    SimilarityValue::new(1.0 / (1.0 + ss.sqrt()))
}

/// Cosine of the raw (uncentered) co-rated ratings.
pub fn cosine(view: &EntityView<'_>, a: EntityId, b: EntityId) -> SimilarityValue {
    cosine_pairs(view.corated(a, b).map(|(_, x, y)| (x, y)), MIN_CORATED)
}

/// Correlation of the co-rated ratings, each side centered by its own mean
/// over the co-rated columns.
pub fn pearson(view: &EntityView<'_>, a: EntityId, b: EntityId) -> SimilarityValue {
    pearson_pairs(view.corated(a, b).map(|(_, x, y)| (x, y)), MIN_CORATED)
}

/// `1 / (1 + d)` for the Euclidean distance `d` over co-rated ratings.
pub fn euclidean_similarity(view: &EntityView<'_>, a: EntityId, b: EntityId) -> SimilarityValue {
    euclidean_pairs(view.corated(a, b).map(|(_, x, y)| (x, y)), MIN_CORATED)
}

/// Dense square matrix of similarities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<SimilarityValue>,
}

impl SimilarityMatrix {
    pub fn undefined(n: usize) -> Self {
        Self {
            n,
            data: vec![SimilarityValue::UNDEFINED; n * n],
        }
    }

    /// Fills a symmetric matrix with an `UNDEFINED` diagonal from a pairwise
    /// function evaluated once per unordered pair `a < b`. Rows of the upper
    /// triangle are computed in parallel, each by a single worker.
    pub fn symmetric<F>(n: usize, pair: F) -> Self
    where
        F: Fn(usize, usize) -> SimilarityValue + Sync,
    {
        let mut m = Self::undefined(n);
        if n == 0 {
            return m;
        }
        m.data.par_chunks_mut(n).enumerate().for_each(|(a, row)| {
            for (b, cell) in row.iter_mut().enumerate().skip(a + 1) {
                *cell = pair(a, b);
            }
        });
        for a in 0..n {
            for b in 0..a {
                m.data[a * n + b] = m.data[b * n + a];
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: EntityId, b: EntityId) -> SimilarityValue {
        self.data[a as usize * self.n + b as usize]
    }

    pub fn row(&self, a: EntityId) -> &[SimilarityValue] {
        let start = a as usize * self.n;
        &self.data[start..start + self.n]
    }

    pub fn set(&mut self, a: EntityId, b: EntityId, value: SimilarityValue) {
        self.data[a as usize * self.n + b as usize] = value;
    }

    pub fn values(&self) -> &[SimilarityValue] {
        &self.data
    }

    pub fn defined_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_defined()).count()
    }
}

/// Baseline all-pairs similarity matrix over the view's rows; the diagonal
/// is `UNDEFINED` so an entity is never its own neighbor.
pub fn similarity_matrix(view: &EntityView<'_>, measure: MeasureKind) -> SimilarityMatrix {
    SimilarityMatrix::symmetric(view.num_rows(), |a, b| {
        measure.similarity(view, a as EntityId, b as EntityId)
    })
}
