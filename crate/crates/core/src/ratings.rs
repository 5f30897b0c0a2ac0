//! Sparse rating matrix with user-major and item-major access.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 0-based user or item index.
pub type EntityId = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: EntityId,
    pub item: EntityId,
    pub value: f64,
    /// Seconds since the epoch, 0 when the source has no timestamps.
    pub timestamp: i64,
}

impl Rating {
    pub fn new(user: EntityId, item: EntityId, value: f64) -> Self {
        Self {
            user,
            item,
            value,
            timestamp: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(Error::InvalidScale { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// Nearest value of the grid `min, min + step, ...` inside the scale.
    /// Halfway cases round up.
    pub fn snap(&self, value: f64, step: f64) -> f64 {
        let steps = ((value - self.min) / step + 0.5).floor();
        self.clamp(self.min + steps * step)
    }
}

impl Default for Scale {
    /// The 1-5 star scale of MovieLens and Netflix.
    fn default() -> Self {
        Self { min: 1.0, max: 5.0 }
    }
}

/// Which entities play the role of rows: users (user-based CF) or items.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    User,
    Item,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::User => Orientation::Item,
            Orientation::Item => Orientation::User,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::User => "user",
            Orientation::Item => "item",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "user" | "user-based" | "ucf" => Ok(Orientation::User),
            "item" | "item-based" | "icf" => Ok(Orientation::Item),
            other => Err(Error::Config(format!("unknown orientation `{other}`"))),
        }
    }
}

/// Compressed sparse rows, each row sorted by column id.
#[derive(Clone, Debug, Default)]
struct Csr {
    offsets: Vec<usize>,
    indices: Vec<EntityId>,
    values: Vec<f64>,
}

impl Csr {
    fn row(&self, r: usize) -> Row<'_> {
        let span = self.offsets[r]..self.offsets[r + 1];
        Row {
            indices: &self.indices[span.clone()],
            values: &self.values[span],
        }
    }

    fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Column-major copy. Rows are visited in order, so every output row
    /// comes out sorted by the original row id.
    fn transpose(&self, num_cols: usize) -> Csr {
        let mut counts = vec![0usize; num_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..num_cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0; self.indices.len()];
        let mut values = vec![0.0; self.values.len()];
        for r in 0..self.num_rows() {
            let row = self.row(r);
            for (&c, &v) in row.indices.iter().zip(row.values) {
                let slot = cursor[c as usize];
                indices[slot] = r as EntityId;
                values[slot] = v;
                cursor[c as usize] += 1;
            }
        }
        Csr {
            offsets,
            indices,
            values,
        }
    }
}

/// One sparse row: parallel slices of column ids (ascending) and ratings.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a> {
    pub indices: &'a [EntityId],
    pub values: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, col: EntityId) -> Option<f64> {
        self.indices
            .binary_search(&col)
            .ok()
            .map(|pos| self.values[pos])
    }
}

#[derive(Clone, Debug)]
pub struct RatingMatrix {
    num_users: usize,
    num_items: usize,
    by_user: Csr,
    by_item: Csr,
    user_means: Vec<Option<f64>>,
    item_means: Vec<Option<f64>>,
    global_mean: Option<f64>,
    scale: Scale,
    duplicates: usize,
}

fn row_means(csr: &Csr) -> Vec<Option<f64>> {
    (0..csr.num_rows())
        .map(|r| {
            let row = csr.row(r);
            if row.is_empty() {
                None
            } else {
                Some(row.values.iter().sum::<f64>() / row.len() as f64)
            }
        })
        .collect()
}

impl RatingMatrix {
    /// Builds both index directions. Duplicate `(user, item)` pairs keep the
    /// rating that appears last in `ratings`; the number of dropped records is
    /// reported by [`RatingMatrix::duplicates`].
    pub fn build(
        ratings: &[Rating],
        num_users: usize,
        num_items: usize,
        scale: Scale,
    ) -> Result<Self> {
        Scale::new(scale.min, scale.max)?;
        for (index, r) in ratings.iter().enumerate() {
            if r.user as usize >= num_users {
                return Err(Error::IdOutOfRange {
                    index,
                    what: "user",
                    id: r.user.into(),
                    limit: num_users,
                });
            }
            if r.item as usize >= num_items {
                return Err(Error::IdOutOfRange {
                    index,
                    what: "item",
                    id: r.item.into(),
                    limit: num_items,
                });
            }
            if !scale.contains(r.value) {
                return Err(Error::RatingOutOfScale {
                    index,
                    value: r.value,
                    min: scale.min,
                    max: scale.max,
                });
            }
        }

        let mut order: Vec<usize> = (0..ratings.len()).collect();
        order.sort_unstable_by_key(|&i| (ratings[i].user, ratings[i].item, i));
        // keep the last record of each (user, item) run
        let mut kept: Vec<usize> = Vec::with_capacity(order.len());
        for &i in &order {
            match kept.last_mut() {
                Some(last)
                    if ratings[*last].user == ratings[i].user
                        && ratings[*last].item == ratings[i].item =>
                {
                    *last = i
                }
                _ => kept.push(i),
            }
        }
        let duplicates = ratings.len() - kept.len();

        let mut offsets = vec![0usize; num_users + 1];
        for &i in &kept {
            offsets[ratings[i].user as usize + 1] += 1;
        }
        for u in 0..num_users {
            offsets[u + 1] += offsets[u];
        }
        let by_user = Csr {
            offsets,
            indices: kept.iter().map(|&i| ratings[i].item).collect(),
            values: kept.iter().map(|&i| ratings[i].value).collect(),
        };
        let by_item = by_user.transpose(num_items);

        let total: f64 = by_user.values.iter().sum();
        let global_mean = if by_user.values.is_empty() {
            None
        } else {
            Some(total / by_user.values.len() as f64)
        };

        Ok(Self {
            num_users,
            num_items,
            user_means: row_means(&by_user),
            item_means: row_means(&by_item),
            by_user,
            by_item,
            global_mean,
            scale,
            duplicates,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_ratings(&self) -> usize {
        self.by_user.values.len()
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn user(&self, u: EntityId) -> Row<'_> {
        self.by_user.row(u as usize)
    }

    pub fn item(&self, i: EntityId) -> Row<'_> {
        self.by_item.row(i as usize)
    }

    /// `None` marks a user without ratings.
    pub fn user_means(&self) -> &[Option<f64>] {
        &self.user_means
    }

    pub fn item_means(&self) -> &[Option<f64>] {
        &self.item_means
    }

    pub fn global_mean(&self) -> Option<f64> {
        self.global_mean
    }

    /// Percentage of filled cells, `100 * ratings / (users * items)`.
    pub fn density_percent(&self) -> f64 {
        let cells = self.num_users as f64 * self.num_items as f64;
        if cells == 0.0 {
            0.0
        } else {
            100.0 * self.num_ratings() as f64 / cells
        }
    }

    pub fn view(&self, orientation: Orientation) -> EntityView<'_> {
        EntityView {
            matrix: self,
            orientation,
        }
    }

    /// Item-based view of the same storage.
    pub fn transpose_view(&self) -> EntityView<'_> {
        self.view(Orientation::Item)
    }
}

/// Row/column access in either orientation. The item view reads the
/// item-major index, so it is the exact transpose of the user view.
#[derive(Clone, Copy, Debug)]
pub struct EntityView<'a> {
    matrix: &'a RatingMatrix,
    orientation: Orientation,
}

impl<'a> EntityView<'a> {
    pub fn matrix(&self) -> &'a RatingMatrix {
        self.matrix
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn transpose(&self) -> EntityView<'a> {
        EntityView {
            matrix: self.matrix,
            orientation: self.orientation.flipped(),
        }
    }

    pub fn num_rows(&self) -> usize {
        match self.orientation {
            Orientation::User => self.matrix.num_users,
            Orientation::Item => self.matrix.num_items,
        }
    }

    pub fn num_cols(&self) -> usize {
        match self.orientation {
            Orientation::User => self.matrix.num_items,
            Orientation::Item => self.matrix.num_users,
        }
    }

    pub fn row(&self, r: EntityId) -> Row<'a> {
        match self.orientation {
            Orientation::User => self.matrix.by_user.row(r as usize),
            Orientation::Item => self.matrix.by_item.row(r as usize),
        }
    }

    pub fn col(&self, c: EntityId) -> Row<'a> {
        self.transpose().row(c)
    }

    pub fn row_mean(&self, r: EntityId) -> Option<f64> {
        match self.orientation {
            Orientation::User => self.matrix.user_means[r as usize],
            Orientation::Item => self.matrix.item_means[r as usize],
        }
    }

    pub fn row_means(&self) -> &'a [Option<f64>] {
        match self.orientation {
            Orientation::User => &self.matrix.user_means,
            Orientation::Item => &self.matrix.item_means,
        }
    }

    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.num_rows() as EntityId)
            .map(|r| self.row(r).len())
            .collect()
    }

    pub fn global_mean(&self) -> Option<f64> {
        self.matrix.global_mean
    }

    pub fn scale(&self) -> Scale {
        self.matrix.scale
    }

    /// Columns rated by both rows, with both ratings, in ascending column order.
    pub fn corated(&self, a: EntityId, b: EntityId) -> CoRated<'a> {
        CoRated::new(self.row(a), self.row(b))
    }

    pub fn corated_items(&self, a: EntityId, b: EntityId) -> Vec<(EntityId, f64, f64)> {
        self.corated(a, b).collect()
    }
}

/// Linear merge of two sorted rows.
#[derive(Clone, Debug)]
pub struct CoRated<'a> {
    a: Row<'a>,
    b: Row<'a>,
    i: usize,
    j: usize,
}

impl<'a> CoRated<'a> {
    pub fn new(a: Row<'a>, b: Row<'a>) -> Self {
        Self { a, b, i: 0, j: 0 }
    }
}

impl Iterator for CoRated<'_> {
    type Item = (EntityId, f64, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        let (ai, bi) = (self.a.indices, self.b.indices);
        while self.i < ai.len() && self.j < bi.len() {
            let (x, y) = (ai[self.i], bi[self.j]);
            if x < y {
                self.i += 1;
            } else if y < x {
                self.j += 1;
            } else {
                let item = (x, self.a.values[self.i], self.b.values[self.j]);
                self.i += 1;
                self.j += 1;
                return Some(item);
            }
        }
        None
    }
}
