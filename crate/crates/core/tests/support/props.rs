//! Property checks, each runnable with a chosen number of cases.

use std::collections::BTreeSet;
use std::fmt::Debug;

use landmark_cf::eval::{mae, run_on, Algorithm, ExperimentConfig};
use landmark_cf::ingest::{
    chronological_cut, kfold_split, parse_ratings_str, Dataset, DatasetSpec, Format,
};
use landmark_cf::landmark::{
    build_embedding, landmark_similarity_matrix, select_landmarks, LandmarkEmbedding, LandmarkSet,
    StrategyKind,
};
use landmark_cf::predict::{predict, predict_batch, PredictionSource, PredictorConfig};
use landmark_cf::ratings::{EntityId, Orientation, Rating, RatingMatrix, Scale};
use landmark_cf::similarity::{similarity_matrix, MeasureKind, SimilarityMatrix, SimilarityValue};
use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::test_runner::TestCaseError;

use super::oracle::{self, Measure, Source};
use super::{dense, dense_half_stars, orientation, runner, Dense};

pub type Property = fn(u32) -> Result<(), String>;

/// Every property, by name.
pub const ALL: &[(&str, Property)] = &[
    ("corated_pairs_swap", corated_pairs_swap),
    ("row_and_column_lengths_sum_to_rating_count", lengths_sum),
    ("means_are_arithmetic_and_in_scale", means_in_scale),
    ("item_view_is_transpose", item_view_is_transpose),
    ("duplicates_last_write_wins", duplicates_last_write_wins),
    ("csv_round_trip", csv_round_trip),
    ("folds_partition_balanced_deterministic", folds_partition),
    ("chronological_cut_prefix", chronological_prefix),
    ("similarity_symmetric_bitwise", similarity_symmetric),
    ("similarity_ranges", similarity_ranges),
    ("similarity_item_order_invariant", item_order_invariant),
    ("guard_sentinel_below_two_corated", guard_sentinel),
    ("undefined_ranks_below_reals", undefined_ranks_lowest),
    ("landmark_column_order_invariant", landmark_column_order),
    ("strategies_return_n_distinct_ids", strategies_distinct),
    ("popularity_ignores_seed", popularity_seed_free),
    ("coresets_round_bound", coresets_round_bound),
    ("cosine_scale_invariance_of_landmark_rows", cosine_scale_invariance),
    ("landmark_rows_have_defined_entry", landmark_rows_defined),
    ("predictions_deterministic", predictions_deterministic),
    ("equal_similarities_reduce_to_mean_deviation", equal_similarities),
    ("zero_similarity_neighbor_is_ignored", zero_similarity_ignored),
    ("predictions_in_scale", predictions_in_scale),
    ("paired_folds_and_report_means", paired_folds),
    ("snap_lands_on_grid", snap_on_grid),
    ("mae_nonnegative_and_zero_on_truth", mae_basic),
];

fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn measure() -> impl Strategy<Value = MeasureKind> {
    prop_oneof![
        Just(MeasureKind::Euclidean),
        Just(MeasureKind::Cosine),
        Just(MeasureKind::Pearson)
    ]
}

fn strategy_kind() -> impl Strategy<Value = StrategyKind> {
    proptest::sample::select(StrategyKind::ALL.to_vec())
}

pub fn oracle_measure(m: MeasureKind) -> Measure {
    match m {
        MeasureKind::Euclidean => Measure::Euclidean,
        MeasureKind::Cosine => Measure::Cosine,
        MeasureKind::Pearson => Measure::Pearson,
    }
}

fn same(a: SimilarityValue, b: Option<f64>) -> bool {
    match (a.get(), b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        _ => false,
    }
}

fn close(a: SimilarityValue, b: SimilarityValue, tol: f64) -> bool {
    match (a.get(), b.get()) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

// ---- oracle equivalence ----

/// One random grid checked against the brute-force oracles: rating-space
/// similarities and landmark-space similarities bitwise, predictions to 1e-12.
pub fn oracle_case(
    d: &Dense,
    o: Orientation,
    m: MeasureKind,
    d1: MeasureKind,
    d2: MeasureKind,
    n_frac: f64,
    seed: u64,
) -> Result<(), TestCaseError> {
    let matrix = d.matrix();
    let view = matrix.view(o);
    let grid = d.oriented(o);
    let rows = grid.rows;

    let got = similarity_matrix(&view, m);
    let want = oracle::similarity_matrix(&grid, oracle_measure(m));
    for a in 0..rows {
        for b in 0..rows {
            prop_assert!(
                same(got.get(a as EntityId, b as EntityId), want[a][b]),
                "similarity ({a},{b}): {:?} vs {:?}",
                got.get(a as EntityId, b as EntityId),
                want[a][b]
            );
        }
    }

    let n = ((rows as f64 * n_frac).ceil() as usize).clamp(1, rows);
    let set = select_landmarks(&view, StrategyKind::Random, n, seed, d1).unwrap();
    let emb = build_embedding(&view, &set, d1);
    let ids: Vec<usize> = set.ids.iter().map(|&i| i as usize).collect();
    let h = oracle::embedding(&grid, &ids, oracle_measure(d1));
    let got_l = landmark_similarity_matrix(&emb, d2);
    let want_l = oracle::landmark_similarity_matrix(&h, oracle_measure(d2));
    for a in 0..rows {
        for (j, want_h) in h[a].iter().enumerate() {
            prop_assert!(same(emb.get(a as EntityId, j), *want_h), "H[{a}][{j}]");
        }
        for b in 0..rows {
            prop_assert!(
                same(got_l.get(a as EntityId, b as EntityId), want_l[a][b]),
                "landmark similarity ({a},{b})"
            );
        }
    }

    let cfg = PredictorConfig::default();
    let scale = matrix.scale();
    for (sims, want_sims) in [(&got, &want), (&got_l, &want_l)] {
        let pairs: Vec<(EntityId, EntityId)> = (0..rows as EntityId)
            .flat_map(|r| (0..grid.cols as EntityId).map(move |c| (r, c)))
            .collect();
        let preds = predict_batch(&view, sims, &pairs, &cfg);
        for (p, &(r, c)) in preds.iter().zip(&pairs) {
            let (value, source) =
                oracle::predict(&grid, want_sims, r as usize, c as usize, cfg.k, (scale.min, scale.max));
            prop_assert!((p.value - value).abs() <= 1e-12, "prediction ({r},{c}): {} vs {value}", p.value);
            let expected = match source {
                Source::Neighbors(k) => (PredictionSource::Neighbors, k),
                Source::RowMean => (PredictionSource::RowMean, 0),
                Source::GlobalMean => (PredictionSource::GlobalMean, 0),
            };
            prop_assert_eq!((p.source, p.neighbors_used), expected);
        }
    }
    Ok(())
}

/// `cases` random grids up to 50 x 40 at 10-50% fill, integer ratings 1-5.
pub fn oracle_equivalence(cases: u32) -> Result<(), String> {
    let s = (
        dense(50, 40, 0.1..0.5),
        orientation(),
        measure(),
        measure(),
        measure(),
        0.05..1.0f64,
        any::<u64>(),
    );
    check(cases, s, |(d, o, m, d1, d2, frac, seed)| oracle_case(&d, o, m, d1, d2, frac, seed))
}

// ---- ratings ----

fn corated_pairs_swap(cases: u32) -> Result<(), String> {
    check(cases, (dense_half_stars(12, 10), orientation()), |(d, o)| {
        let m = d.matrix();
        let v = m.view(o);
        for a in 0..v.num_rows() as EntityId {
            for b in 0..v.num_rows() as EntityId {
                let ab = v.corated_items(a, b);
                let ba: Vec<_> = v.corated_items(b, a).into_iter().map(|(c, x, y)| (c, y, x)).collect();
                prop_assert_eq!(ab, ba);
            }
        }
        Ok(())
    })
}

fn lengths_sum(cases: u32) -> Result<(), String> {
    check(cases, dense_half_stars(15, 15), |d| {
        let m = d.matrix();
        let rows: usize = (0..m.num_users() as EntityId).map(|u| m.user(u).len()).sum();
        let cols: usize = (0..m.num_items() as EntityId).map(|i| m.item(i).len()).sum();
        prop_assert_eq!(rows, m.num_ratings());
        prop_assert_eq!(cols, m.num_ratings());
        prop_assert_eq!(m.num_ratings(), d.num_ratings());
        let density = 100.0 * d.num_ratings() as f64 / (d.rows * d.cols) as f64;
        prop_assert!((m.density_percent() - density).abs() < 1e-12);
        Ok(())
    })
}

fn means_in_scale(cases: u32) -> Result<(), String> {
    check(cases, dense_half_stars(15, 15), |d| {
        let m = d.matrix();
        let s = m.scale();
        let mut all = Vec::new();
        for u in 0..d.rows {
            let vals: Vec<f64> = d.row(u).iter().flatten().copied().collect();
            all.extend(&vals);
            match m.user_means()[u] {
                None => prop_assert!(vals.is_empty()),
                Some(mean) => {
                    prop_assert!(s.min <= mean && mean <= s.max);
                    let want = vals.iter().sum::<f64>() / vals.len() as f64;
                    prop_assert!((mean - want).abs() < 1e-12);
                }
            }
        }
        match m.global_mean() {
            None => prop_assert!(all.is_empty()),
            Some(g) => prop_assert!((g - all.iter().sum::<f64>() / all.len() as f64).abs() < 1e-12),
        }
        for (i, mean) in m.item_means().iter().enumerate() {
            if let Some(mean) = mean {
                prop_assert!(s.min <= *mean && *mean <= s.max, "item {i}");
            }
        }
        Ok(())
    })
}

fn item_view_is_transpose(cases: u32) -> Result<(), String> {
    check(cases, dense_half_stars(12, 12), |d| {
        let m = d.matrix();
        let (users, items) = (m.view(Orientation::User), m.view(Orientation::Item));
        prop_assert_eq!(items.num_rows(), users.num_cols());
        for i in 0..items.num_rows() as EntityId {
            let row: Vec<_> = items.row(i).iter().collect();
            let col: Vec<_> = users.col(i).iter().collect();
            prop_assert_eq!(row, col);
            prop_assert_eq!(items.row_mean(i), m.item_means()[i as usize]);
        }
        let t = d.transpose().matrix();
        let tv = t.view(Orientation::User);
        for i in 0..items.num_rows() as EntityId {
            for j in 0..items.num_rows() as EntityId {
                prop_assert_eq!(items.corated_items(i, j), tv.corated_items(i, j));
            }
        }
        Ok(())
    })
}

fn duplicates_last_write_wins(cases: u32) -> Result<(), String> {
    let s = proptest::collection::vec((0u32..4, 0u32..4, 1u8..=5), 1..30);
    check(cases, s, |records| {
        let ratings: Vec<Rating> = records.iter().map(|&(u, i, v)| Rating::new(u, i, v as f64)).collect();
        let m = RatingMatrix::build(&ratings, 4, 4, Scale::default()).unwrap();
        let mut last = std::collections::BTreeMap::new();
        for r in &ratings {
            last.insert((r.user, r.item), r.value);
        }
        prop_assert_eq!(m.num_ratings(), last.len());
        prop_assert_eq!(m.duplicates(), ratings.len() - last.len());
        for (&(u, i), &v) in &last {
            prop_assert_eq!(m.user(u).get(i), Some(v));
        }
        Ok(())
    })
}

// ---- ingest ----

fn csv_round_trip(cases: u32) -> Result<(), String> {
    let record = ("[a-z0-9]{1,4}", "[a-z0-9]{1,4}", 2u8..=10, 0i64..2_000_000_000);
    check(cases, proptest::collection::vec(record, 1..40), |records| {
        let data = Dataset::from_raw(
            records.iter().map(|(u, i, h, t)| (u.clone(), i.clone(), *h as f64 / 2.0, *t)),
            Scale::default(),
        );
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let mut spec = DatasetSpec::new("mem.csv", Format::Csv);
        spec.has_header = true;
        let back = parse_ratings_str(std::str::from_utf8(&buf).unwrap(), &spec).unwrap();
        let as_raw = |d: &Dataset| {
            let mut v: Vec<(String, String, u64, i64)> = d
                .ratings
                .iter()
                .map(|r| {
                    (
                        d.user_ids[r.user as usize].clone(),
                        d.item_ids[r.item as usize].clone(),
                        r.value.to_bits(),
                        r.timestamp,
                    )
                })
                .collect();
            v.sort();
            v
        };
        prop_assert_eq!(as_raw(&data), as_raw(&back));
        Ok(())
    })
}

fn folds_partition(cases: u32) -> Result<(), String> {
    check(cases, (2usize..12, 0usize..300, any::<u64>()), |(k, extra, seed)| {
        let n = k + extra;
        let f = kfold_split(n, k, seed).unwrap();
        prop_assert_eq!(&f, &kfold_split(n, k, seed).unwrap());
        let sizes = f.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen = vec![0u8; n];
        for fold in 0..k {
            let (test, train) = f.split(fold);
            prop_assert_eq!(test.len() + train.len(), n);
            for i in test {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        Ok(())
    })
}

fn chronological_prefix(cases: u32) -> Result<(), String> {
    let s = proptest::collection::vec(0i64..20, 0..40).prop_flat_map(|ts| {
        let n = ts.len();
        (Just(ts), 0..=n, 0..=n)
    });
    check(cases, s, |(ts, a, b)| {
        let ratings: Vec<Rating> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut r = Rating::new(i as u32, 0, 1.0);
                r.timestamp = t;
                r
            })
            .collect();
        let (small, large) = (a.min(b), a.max(b));
        let x = chronological_cut(&ratings, small).unwrap();
        let y = chronological_cut(&ratings, large).unwrap();
        prop_assert_eq!(&x[..], &y[..small]);
        for w in y.windows(2) {
            prop_assert!(w[0].timestamp < w[1].timestamp || (w[0].timestamp == w[1].timestamp && w[0].user < w[1].user));
        }
        prop_assert!(chronological_cut(&ratings, ts.len() + 1).is_err());
        Ok(())
    })
}

// ---- similarity ----

fn similarity_symmetric(cases: u32) -> Result<(), String> {
    check(cases, (dense_half_stars(12, 12), orientation(), measure()), |(d, o, m)| {
        let mat = d.matrix();
        let v = mat.view(o);
        let s = similarity_matrix(&v, m);
        for a in 0..v.num_rows() as EntityId {
            prop_assert!(!s.get(a, a).is_defined());
            for b in 0..v.num_rows() as EntityId {
                prop_assert_eq!(m.similarity(&v, a, b).to_bits(), m.similarity(&v, b, a).to_bits());
                prop_assert_eq!(s.get(a, b).to_bits(), s.get(b, a).to_bits());
            }
        }
        Ok(())
    })
}

fn similarity_ranges(cases: u32) -> Result<(), String> {
    check(cases, (dense_half_stars(12, 12), orientation()), |(d, o)| {
        let mat = d.matrix();
        let v = mat.view(o);
        for a in 0..v.num_rows() as EntityId {
            for b in 0..v.num_rows() as EntityId {
                if let Some(c) = MeasureKind::Cosine.similarity(&v, a, b).get() {
                    // raw ratings are positive
                    prop_assert!((0.0..=1.0).contains(&c), "cosine {c}");
                }
                if let Some(p) = MeasureKind::Pearson.similarity(&v, a, b).get() {
                    prop_assert!((-1.0..=1.0).contains(&p), "pearson {p}");
                }
                if let Some(e) = MeasureKind::Euclidean.similarity(&v, a, b).get() {
                    prop_assert!(e > 0.0 && e <= 1.0, "euclidean {e}");
                }
            }
        }
        Ok(())
    })
}

fn item_order_invariant(cases: u32) -> Result<(), String> {
    let s = dense_half_stars(10, 12).prop_flat_map(|d| {
        let cols = d.cols;
        (Just(d), Just((0..cols).collect::<Vec<_>>()).prop_shuffle(), measure())
    });
    check(cases, s, |(d, perm, m)| {
        let mut cells = vec![None; d.cells.len()];
        for r in 0..d.rows {
            for c in 0..d.cols {
                cells[r * d.cols + perm[c]] = d.get(r, c);
            }
        }
        let shuffled = Dense { cells, ..d.clone() };
        let (x, y) = (d.matrix(), shuffled.matrix());
        let (vx, vy) = (x.view(Orientation::User), y.view(Orientation::User));
        for a in 0..d.rows as EntityId {
            for b in 0..d.rows as EntityId {
                let (p, q) = (m.similarity(&vx, a, b), m.similarity(&vy, a, b));
                prop_assert!(close(p, q, 1e-12), "{p:?} vs {q:?}");
            }
        }
        Ok(())
    })
}

fn guard_sentinel(cases: u32) -> Result<(), String> {
    check(cases, (dense_half_stars(10, 10), measure()), |(d, m)| {
        let mat = d.matrix();
        let v = mat.view(Orientation::User);
        for a in 0..d.rows as EntityId {
            for b in 0..d.rows as EntityId {
                if v.corated(a, b).count() <= 1 {
                    prop_assert_eq!(m.similarity(&v, a, b), SimilarityValue::UNDEFINED);
                }
            }
        }
        Ok(())
    })
}

fn undefined_ranks_lowest(cases: u32) -> Result<(), String> {
    check(cases, any::<f64>().prop_filter("real", |x| x.is_finite()), |x| {
        let v = SimilarityValue::new(x);
        prop_assert!(v.is_defined());
        prop_assert!(SimilarityValue::UNDEFINED < v);
        prop_assert_eq!(SimilarityValue::from(None), SimilarityValue::UNDEFINED);
        prop_assert_eq!(SimilarityValue::from(Some(x)), v);
        Ok(())
    })
}

// ---- landmarks ----

fn landmark_column_order(cases: u32) -> Result<(), String> {
    let s = (dense(12, 12, 0.2..0.9), measure(), measure(), 1usize..12).prop_flat_map(|(d, d1, d2, n)| {
        let n = n.min(d.rows);
        let rows = d.rows;
        (
            Just(d),
            Just(d1),
            Just(d2),
            subsequence((0..rows as EntityId).collect::<Vec<_>>(), n).prop_shuffle(),
        )
        .prop_flat_map(|(d, d1, d2, ids)| {
            let len = ids.len();
            (Just(d), Just(d1), Just(d2), Just(ids), Just((0..len).collect::<Vec<_>>()).prop_shuffle())
        })
    });
    check(cases, s, |(d, d1, d2, ids, perm)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let set = |ids: Vec<EntityId>| LandmarkSet {
            ids,
            strategy: StrategyKind::Random,
            seed: 0,
            rounds: 0,
            topped_up: 0,
        };
        let permuted: Vec<EntityId> = perm.iter().map(|&p| ids[p]).collect();
        let a = landmark_similarity_matrix(&build_embedding(&v, &set(ids), d1), d2);
        let b = landmark_similarity_matrix(&build_embedding(&v, &set(permuted), d1), d2);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!(close(*x, *y, 1e-12), "{x:?} vs {y:?}");
        }
        Ok(())
    })
}

fn strategies_distinct(cases: u32) -> Result<(), String> {
    let s = (dense(30, 15, 0.05..0.8), orientation(), strategy_kind(), measure(), 1usize..40, any::<u64>());
    check(cases, s, |(d, o, strategy, d1, n, seed)| {
        let m = d.matrix();
        let v = m.view(o);
        let rows = v.num_rows();
        let n = n.min(rows);
        let set = select_landmarks(&v, strategy, n, seed, d1).unwrap();
        prop_assert_eq!(set.ids.len(), n);
        let distinct: BTreeSet<_> = set.ids.iter().collect();
        prop_assert_eq!(distinct.len(), n);
        prop_assert!(set.ids.iter().all(|&i| (i as usize) < rows));
        prop_assert!(select_landmarks(&v, strategy, rows + 1, seed, d1).is_err());
        prop_assert!(select_landmarks(&v, strategy, 0, seed, d1).is_err());
        prop_assert_eq!(set, select_landmarks(&v, strategy, n, seed, d1).unwrap());
        Ok(())
    })
}

fn popularity_seed_free(cases: u32) -> Result<(), String> {
    let s = (dense(30, 15, 0.05..0.8), 1usize..30, any::<u64>(), any::<u64>());
    check(cases, s, |(d, n, s1, s2)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let n = n.min(v.num_rows());
        let a = select_landmarks(&v, StrategyKind::Popularity, n, s1, MeasureKind::Cosine).unwrap();
        let b = select_landmarks(&v, StrategyKind::Popularity, n, s2, MeasureKind::Cosine).unwrap();
        prop_assert_eq!(&a.ids, &b.ids);
        let counts = v.row_counts();
        for w in a.ids.windows(2) {
            prop_assert!(counts[w[0] as usize] >= counts[w[1] as usize]);
        }
        Ok(())
    })
}

fn coresets_round_bound(cases: u32) -> Result<(), String> {
    let s = (
        dense(60, 10, 0.05..0.8),
        prop_oneof![Just(StrategyKind::Coresets), Just(StrategyKind::CoresetsRandom)],
        measure(),
        1usize..60,
        any::<u64>(),
    );
    check(cases, s, |(d, strategy, d1, n, seed)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let rows = v.num_rows();
        let n = n.min(rows);
        let set = select_landmarks(&v, strategy, n, seed, d1).unwrap();
        let bound = (rows as f64).log2().ceil() as usize + 1;
        prop_assert!(set.rounds >= 1 && set.rounds <= bound, "{} rounds for {rows} rows", set.rounds);
        prop_assert!(set.topped_up < n.max(1));
        Ok(())
    })
}

fn cosine_scale_invariance(cases: u32) -> Result<(), String> {
    let s = (dense(12, 12, 0.2..0.9), 0.1..20.0f64).prop_flat_map(|(d, c)| {
        let rows = d.rows;
        (Just(d), Just(c), 0..rows, subsequence((0..rows as EntityId).collect::<Vec<_>>(), 1..=rows))
    });
    check(cases, s, |(d, c, user, ids)| {
        let scale = Scale::new(0.0, 200.0).unwrap();
        let mut scaled = d.clone();
        for col in 0..d.cols {
            if let Some(x) = d.get(user, col) {
                scaled.cells[user * d.cols + col] = Some(x * c);
            }
        }
        let (a, b) = (d.matrix_with(scale), scaled.matrix_with(scale));
        let (va, vb) = (a.view(Orientation::User), b.view(Orientation::User));
        let set = LandmarkSet {
            ids,
            strategy: StrategyKind::Random,
            seed: 0,
            rounds: 0,
            topped_up: 0,
        };
        let (ea, eb) = (
            build_embedding(&va, &set, MeasureKind::Cosine),
            build_embedding(&vb, &set, MeasureKind::Cosine),
        );
        for j in 0..set.ids.len() {
            let (x, y) = (ea.get(user as EntityId, j), eb.get(user as EntityId, j));
            // the user's own column (if a landmark) compares the scaled row to itself
            prop_assert!(close(x, y, 1e-12), "H[{user}][{j}]: {x:?} vs {y:?}");
        }
        let (sa, sb) = (
            landmark_similarity_matrix(&ea, MeasureKind::Cosine),
            landmark_similarity_matrix(&eb, MeasureKind::Cosine),
        );
        for other in 0..d.rows as EntityId {
            let (x, y) = (sa.get(user as EntityId, other), sb.get(user as EntityId, other));
            prop_assert!(close(x, y, 1e-12), "S[{user}][{other}]: {x:?} vs {y:?}");
        }
        Ok(())
    })
}

fn landmark_rows_defined(cases: u32) -> Result<(), String> {
    let s = (
        dense(20, 12, 0.05..0.9),
        prop_oneof![Just(MeasureKind::Cosine), Just(MeasureKind::Euclidean)],
        strategy_kind(),
        1usize..20,
        any::<u64>(),
    );
    check(cases, s, |(d, d1, strategy, n, seed)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let n = n.min(v.num_rows());
        let set = select_landmarks(&v, strategy, n, seed, d1).unwrap();
        let emb: LandmarkEmbedding = build_embedding(&v, &set, d1);
        for (j, &l) in set.ids.iter().enumerate() {
            prop_assert_eq!(emb.get(l, j), d1.similarity(&v, l, l));
            if v.row(l).len() >= 2 {
                prop_assert!(emb.row(l).iter().any(|x| x.is_defined()));
                prop_assert_eq!(emb.get(l, j).get(), Some(1.0));
            }
        }
        Ok(())
    })
}

// ---- prediction ----

fn random_sims(rows: usize) -> impl Strategy<Value = Vec<Option<f64>>> {
    proptest::collection::vec(proptest::option::weighted(0.7, -1.0..1.0f64), rows * rows)
}

fn sims_from(rows: usize, cells: &[Option<f64>]) -> SimilarityMatrix {
    SimilarityMatrix::symmetric(rows, |a, b| cells[a * rows + b].into())
}

fn predictions_deterministic(cases: u32) -> Result<(), String> {
    let s = dense_half_stars(15, 10).prop_flat_map(|d| {
        let rows = d.rows;
        (Just(d), random_sims(rows), 1usize..20)
    });
    check(cases, s, |(d, cells, k)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let sims = sims_from(d.rows, &cells);
        let cfg = PredictorConfig { k, ..Default::default() };
        let pairs: Vec<(EntityId, EntityId)> = (0..d.rows as EntityId)
            .flat_map(|r| (0..d.cols as EntityId).map(move |c| (r, c)))
            .collect();
        let a = predict_batch(&v, &sims, &pairs, &cfg);
        let b = predict_batch(&v, &sims, &pairs, &cfg);
        for ((x, y), &(r, c)) in a.iter().zip(&b).zip(&pairs) {
            prop_assert_eq!(x.value.to_bits(), y.value.to_bits());
            prop_assert_eq!(*x, predict(&v, &sims, r, c, &cfg));
        }
        Ok(())
    })
}

fn equal_similarities(cases: u32) -> Result<(), String> {
    let s = (dense_half_stars(15, 10), 0.01..1.0f64).prop_flat_map(|(d, c)| {
        let (rows, cols) = (d.rows, d.cols);
        (Just(d), Just(c), 0..rows, 0..cols)
    });
    check(cases, s, |(d, c, u, col)| {
        let m = d.matrix_with(Scale::new(-100.0, 100.0).unwrap());
        let v = m.view(Orientation::User);
        let sims = SimilarityMatrix::symmetric(d.rows, |_, _| SimilarityValue::new(c));
        let cfg = PredictorConfig { k: d.rows, ..Default::default() };
        let p = predict(&v, &sims, u as EntityId, col as EntityId, &cfg);
        let means = v.row_means();
        let devs: Vec<f64> = (0..d.rows)
            .filter(|&j| j != u)
            .filter_map(|j| Some(d.get(j, col)? - means[j].unwrap()))
            .collect();
        if let (Some(mu), false) = (means[u], devs.is_empty()) {
            let want = mu + devs.iter().sum::<f64>() / devs.len() as f64;
            prop_assert!((p.value - want).abs() < 1e-12, "{} vs {want}", p.value);
            prop_assert_eq!(p.neighbors_used, devs.len());
        }
        Ok(())
    })
}

fn zero_similarity_ignored(cases: u32) -> Result<(), String> {
    let s = dense_half_stars(15, 10).prop_flat_map(|d| {
        let rows = d.rows;
        (Just(d), random_sims(rows), 0..rows, 0..rows, 1usize..20)
    });
    check(cases, s, |(d, cells, u, other, k)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let before = sims_from(d.rows, &cells);
        let mut after = before.clone();
        if u != other {
            after.set(u as EntityId, other as EntityId, SimilarityValue::new(0.0));
            after.set(other as EntityId, u as EntityId, SimilarityValue::new(0.0));
        }
        let mut without = before.clone();
        if u != other {
            without.set(u as EntityId, other as EntityId, SimilarityValue::UNDEFINED);
            without.set(other as EntityId, u as EntityId, SimilarityValue::UNDEFINED);
        }
        let cfg = PredictorConfig { k, ..Default::default() };
        for col in 0..d.cols as EntityId {
            prop_assert_eq!(
                predict(&v, &after, u as EntityId, col, &cfg),
                predict(&v, &without, u as EntityId, col, &cfg)
            );
        }
        Ok(())
    })
}

fn predictions_in_scale(cases: u32) -> Result<(), String> {
    let s = dense_half_stars(15, 10).prop_flat_map(|d| {
        let rows = d.rows;
        (Just(d), random_sims(rows), 1usize..20, 1usize..4, any::<bool>())
    });
    check(cases, s, |(d, cells, k, min_neighbors, positive_only)| {
        let m = d.matrix();
        let v = m.view(Orientation::User);
        let sims = sims_from(d.rows, &cells);
        let cfg = PredictorConfig { k, min_neighbors, positive_only };
        for r in 0..d.rows as EntityId {
            for c in 0..d.cols as EntityId {
                let p = predict(&v, &sims, r, c, &cfg);
                prop_assert!((1.0..=5.0).contains(&p.value), "{p:?}");
                if p.source == PredictionSource::Neighbors {
                    prop_assert!(p.neighbors_used >= min_neighbors && p.neighbors_used <= k);
                }
            }
        }
        Ok(())
    })
}

// ---- evaluation ----

fn paired_folds(cases: u32) -> Result<(), String> {
    let s = (dense(12, 10, 0.3..0.9), 2usize..5, any::<u64>(), strategy_kind(), measure(), measure());
    check(cases, s, |(d, k_folds, seed, strategy, d1, d2)| {
        let data = Dataset::from_raw(
            d.ratings().into_iter().map(|r| (r.user.to_string(), r.item.to_string(), r.value, r.timestamp)),
            Scale::default(),
        );
        prop_assume!(data.ratings.len() >= k_folds);
        let folds = kfold_split(data.ratings.len(), k_folds, seed).unwrap();
        let spec = DatasetSpec::new("mem", Format::Csv);
        let mut base = ExperimentConfig::baseline(spec.clone(), Orientation::User, d1);
        base.k_folds = k_folds;
        let n = 1 + (seed as usize % data.num_users());
        let mut lm = base.clone().with_algorithm(Algorithm::Landmark { strategy, n, d1, d2 });
        lm.seed = seed;
        let a = run_on(&data, &folds, &base).unwrap();
        let b = run_on(&data, &folds, &lm).unwrap();
        let sizes = folds.fold_sizes();
        for r in [&a, &b] {
            prop_assert_eq!(r.folds.len(), k_folds);
            let mean = r.folds.iter().map(|f| f.mae).sum::<f64>() / k_folds as f64;
            prop_assert!((r.mean_mae - mean).abs() < 1e-12);
            let total = r.folds.iter().map(|f| f.timings.total()).sum::<f64>() / k_folds as f64;
            prop_assert!((r.mean_total_s - total).abs() < 1e-9);
            for (f, &size) in r.folds.iter().zip(&sizes) {
                prop_assert_eq!(f.n_test, size);
                prop_assert!(f.mae >= 0.0);
                let t = f.timings;
                prop_assert!(t.selection_s >= 0.0 && t.embedding_s >= 0.0 && t.similarity_s >= 0.0 && t.prediction_s >= 0.0);
                let s = f.sources;
                prop_assert_eq!(s.neighbors + s.row_mean + s.global_mean, size);
            }
        }
        Ok(())
    })
}

fn snap_on_grid(cases: u32) -> Result<(), String> {
    let s = (-2.0..8.0f64, prop_oneof![Just(0.5), Just(1.0), Just(0.25)]);
    check(cases, s, |(x, step)| {
        let scale = Scale::default();
        let y = scale.snap(x, step);
        prop_assert!(scale.contains(y));
        let k = (y - scale.min) / step;
        prop_assert!((k - k.round()).abs() < 1e-9);
        if scale.contains(x) {
            prop_assert!((y - x).abs() <= step / 2.0 + 1e-12);
        }
        Ok(())
    })
}

fn mae_basic(cases: u32) -> Result<(), String> {
    let s = proptest::collection::vec((1.0..5.0f64, 1.0..5.0f64), 1..50);
    check(cases, s, |pairs| {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(mae(&p, &t).unwrap() >= 0.0);
        prop_assert_eq!(mae(&t, &t).unwrap(), 0.0);
        prop_assert_eq!(mae(&p, &t).unwrap(), mae(&t, &p).unwrap());
        Ok(())
    })
}
