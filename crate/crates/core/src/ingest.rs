//! Rating file parsing, chronological cuts and seeded k-fold splits.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratings::{EntityId, Rating, RatingMatrix, Scale};
use crate::rng::SplitRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Format {
    /// `user\titem\trating\ttimestamp`, no header (MovieLens 100k `u.data`).
    #[serde(rename = "ml-100k")]
    Ml100k,
    /// `user::item::rating::timestamp`, no header (MovieLens 1M `ratings.dat`).
    #[serde(rename = "ml-1m")]
    Ml1m,
    #[serde(rename = "csv")]
    Csv,
}

impl Format {
    pub fn default_separator(self) -> &'static str {
        match self {
            Format::Ml100k => "\t",
            Format::Ml1m => "::",
            Format::Csv => ",",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Ml100k => "ml-100k",
            Format::Ml1m => "ml-1m",
            Format::Csv => "csv",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml-100k" | "ml100k" => Ok(Format::Ml100k),
            "ml-1m" | "ml1m" => Ok(Format::Ml1m),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// Positions of the fields within a CSV record. `timestamp` is optional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Columns {
    pub user: usize,
    pub item: usize,
    pub rating: usize,
    pub timestamp: Option<usize>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            user: 0,
            item: 1,
            rating: 2,
            timestamp: Some(3),
        }
    }
}

impl FromStr for Columns {
    type Err = Error;

    /// Comma-separated field names, e.g. `item,user,rating` or
    /// `user,item,rating,timestamp`. Unknown names are skipped columns (`_`).
    fn from_str(s: &str) -> Result<Self> {
        let (mut user, mut item, mut rating, mut timestamp) = (None, None, None, None);
        for (pos, name) in s.split(',').map(str::trim).enumerate() {
            match name {
                "user" => user = Some(pos),
                "item" => item = Some(pos),
                "rating" => rating = Some(pos),
                "timestamp" => timestamp = Some(pos),
                _ => {}
            }
        }
        match (user, item, rating) {
            (Some(user), Some(item), Some(rating)) => Ok(Columns {
                user,
                item,
                rating,
                timestamp,
            }),
            _ => Err(Error::Config(format!(
                "column order `{s}` must name user, item and rating"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: Format,
    /// Overrides the format's separator (CSV only).
    #[serde(default)]
    pub separator: Option<String>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub columns: Columns,
    #[serde(default)]
    pub scale: Scale,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>, format: Format) -> Self {
        Self {
            path: path.into(),
            format,
            separator: None,
            has_header: false,
            columns: Columns::default(),
            scale: Scale::default(),
        }
    }

    pub fn separator(&self) -> &str {
        match self.format {
            Format::Csv => self.separator.as_deref().unwrap_or(","),
            f => f.default_separator(),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        parse_ratings(self)
    }
}

/// Parsed ratings with dense ids and the tables mapping back to raw ids.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ratings: Vec<Rating>,
    /// `user_ids[dense] == raw id`
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub scale: Scale,
    pub lines_read: usize,
}

impl Dataset {
    /// Builds a dataset from raw string ids, assigning dense ids in order of
    /// first appearance.
    pub fn from_raw<I, U, P>(records: I, scale: Scale) -> Self
    where
        I: IntoIterator<Item = (U, P, f64, i64)>,
        U: Into<String>,
        P: Into<String>,
    {
        let mut users = IdRemap::default();
        let mut items = IdRemap::default();
        let ratings: Vec<Rating> = records
            .into_iter()
            .map(|(u, i, value, timestamp)| Rating {
                user: users.dense(u.into()),
                item: items.dense(i.into()),
                value,
                timestamp,
            })
            .collect();
        let lines_read = ratings.len();
        Dataset {
            ratings,
            user_ids: users.raw,
            item_ids: items.raw,
            scale,
            lines_read,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn matrix(&self) -> Result<RatingMatrix> {
        RatingMatrix::build(&self.ratings, self.num_users(), self.num_items(), self.scale)
    }

    /// Rebuilds the dataset from a subset of its ratings, dropping ids that
    /// no longer occur and renumbering densely in first-appearance order.
    pub fn restrict(&self, ratings: &[Rating]) -> Dataset {
        Dataset::from_raw(
            ratings.iter().map(|r| {
                (
                    self.user_ids[r.user as usize].clone(),
                    self.item_ids[r.item as usize].clone(),
                    r.value,
                    r.timestamp,
                )
            }),
            self.scale,
        )
    }

    /// Writes `user,item,rating,timestamp` rows with the raw ids.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user", "item", "rating", "timestamp"])?;
        for r in &self.ratings {
            w.write_record([
                self.user_ids[r.user as usize].as_str(),
                self.item_ids[r.item as usize].as_str(),
                &r.value.to_string(),
                &r.timestamp.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Default)]
struct IdRemap {
    index: HashMap<String, EntityId>,
    raw: Vec<String>,
}

impl IdRemap {
    fn dense(&mut self, raw: String) -> EntityId {
        if let Some(&id) = self.index.get(&raw) {
            return id;
        }
        let id = self.raw.len() as EntityId;
        self.raw.push(raw.clone());
        self.index.insert(raw, id);
        id
    }
}

/// Parses a rating file. Raw ids are remapped densely in first-appearance
/// order; the returned tables map dense ids back to the raw strings.
pub fn parse_ratings(spec: &DatasetSpec) -> Result<Dataset> {
    let text = fs::read_to_string(&spec.path).map_err(|source| Error::Io {
        path: spec.path.clone(),
        source,
    })?;
    parse_ratings_str(&text, spec)
}

pub fn parse_ratings_str(text: &str, spec: &DatasetSpec) -> Result<Dataset> {
    let sep = spec.separator();
    let columns = match spec.format {
        Format::Csv => spec.columns,
        _ => Columns::default(),
    };
    let skip_header = spec.format == Format::Csv && spec.has_header;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: spec.path.clone(),
        line,
        message,
    };

    let mut users = IdRemap::default();
    let mut items = IdRemap::default();
    let mut ratings = Vec::new();
    let mut lines_read = 0;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        lines_read += 1;
        if (skip_header && n == 0) || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        let field = |pos: usize, name: &str| {
            fields
                .get(pos)
                .copied()
                .filter(|f| !f.is_empty())
                .ok_or_else(|| parse_err(line_no, format!("missing {name} field")))
        };
        let user = field(columns.user, "user")?;
        let item = field(columns.item, "item")?;
        let raw_value = field(columns.rating, "rating")?;
        let value: f64 = raw_value
            .parse()
            .map_err(|_| parse_err(line_no, format!("non-numeric rating `{raw_value}`")))?;
        if !value.is_finite() {
            return Err(parse_err(line_no, format!("non-finite rating `{raw_value}`")));
        }
        if !spec.scale.contains(value) {
            return Err(parse_err(
                line_no,
                format!(
                    "rating {value} outside scale [{}, {}]",
                    spec.scale.min, spec.scale.max
                ),
            ));
        }
        let timestamp = match columns.timestamp {
            Some(pos) => match fields.get(pos) {
                Some(ts) if !ts.is_empty() => parse_timestamp(ts)
                    .ok_or_else(|| parse_err(line_no, format!("bad timestamp `{ts}`")))?,
                _ if spec.format == Format::Csv => 0,
                _ => return Err(parse_err(line_no, "missing timestamp field".into())),
            },
            None => 0,
        };
        ratings.push(Rating {
            user: users.dense(user.to_string()),
            item: items.dense(item.to_string()),
            value,
            timestamp,
        });
    }
    if ratings.is_empty() {
        return Err(Error::EmptyDataset {
            path: spec.path.clone(),
        });
    }
    Ok(Dataset {
        ratings,
        user_ids: users.raw,
        item_ids: items.raw,
        scale: spec.scale,
        lines_read,
    })
}

fn parse_timestamp(s: &str) -> Option<i64> {
    s.parse::<i64>()
        .ok()
        .or_else(|| s.parse::<f64>().ok().filter(|t| t.is_finite()).map(|t| t as i64))
}

/// The `m` earliest ratings, ordered by timestamp with ties kept in input order.
pub fn chronological_cut(ratings: &[Rating], m: usize) -> Result<Vec<Rating>> {
    if m > ratings.len() {
        return Err(Error::CutTooLarge {
            requested: m,
            available: ratings.len(),
        });
    }
    let mut sorted = ratings.to_vec();
    sorted.sort_by_key(|r| r.timestamp);
    sorted.truncate(m);
    Ok(sorted)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<u32>,
    pub k_folds: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k_folds];
        for &f in &self.fold_of {
            sizes[f as usize] += 1;
        }
        sizes
    }

    /// Record indices of the held-out fold and of the remaining folds.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut test, mut train) = (Vec::new(), Vec::new());
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f as usize == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (test, train)
    }

    /// `record_index,fold` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["record_index", "fold"])?;
        for (i, f) in self.fold_of.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Random balanced partition of rating records: a seeded Fisher-Yates
/// permutation of record indices (see [`SplitRng::shuffle`]), after which
/// the record at permuted position `p` lands in fold `p % k_folds`.
pub fn kfold_split(num_records: usize, k_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if k_folds < 2 {
        return Err(Error::TooFewFolds(k_folds));
    }
    if num_records < k_folds {
        return Err(Error::TooFewRecords {
            records: num_records,
            folds: k_folds,
        });
    }
    let mut order: Vec<usize> = (0..num_records).collect();
    SplitRng::new(seed).shuffle(&mut order);
    let mut fold_of = vec![0u32; num_records];
    for (pos, &record) in order.iter().enumerate() {
        fold_of[record] = (pos % k_folds) as u32;
    }
    Ok(FoldAssignment {
        fold_of,
        k_folds,
        seed,
    })
}

/// Table-style dataset summary: rating, user and item counts plus the
/// percentage of filled matrix cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub ratings: usize,
    pub users: usize,
    pub items: usize,
    pub fill_percent: f64,
}

impl DatasetStats {
    pub fn of(matrix: &RatingMatrix) -> Self {
        Self {
            ratings: matrix.num_ratings(),
            users: matrix.num_users(),
            items: matrix.num_items(),
            fill_percent: matrix.density_percent(),
        }
    }

    pub const HEADER: &'static str = "#ratings, #users, #items, sparsity(%)";

    pub fn row(&self) -> String {
        format!(
            "{}, {}, {}, {:.2}",
            self.ratings, self.users, self.items, self.fill_percent
        )
    }
}
