//! Cross-validated MAE and phase timings for landmark and baseline kNN.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{kfold_split, Columns, Dataset, DatasetSpec, FoldAssignment, Format};
use crate::landmark::{
    build_embedding, landmark_similarity_matrix, select_landmarks, StrategyKind,
};
use crate::predict::{predict_batch, PredictionSource, PredictorConfig};
use crate::ratings::{EntityId, Orientation, Rating, RatingMatrix, Scale};
use crate::rng::SplitRng;
use crate::similarity::{similarity_matrix, MeasureKind, SimilarityMatrix};

/// Mean absolute error.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let total: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / truths.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Landmark {
        strategy: StrategyKind,
        n: usize,
        d1: MeasureKind,
        d2: MeasureKind,
    },
    Baseline {
        measure: MeasureKind,
    },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Landmark { .. } => "landmark",
            Algorithm::Baseline { .. } => "baseline",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    /// Everything on one thread, for comparable runtimes.
    SingleThreaded,
    /// Folds and inner loops on the rayon pool.
    #[default]
    Parallel,
}

impl fmt::Display for TimingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimingMode::SingleThreaded => "single-threaded",
            TimingMode::Parallel => "parallel",
        })
    }
}

impl FromStr for TimingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-threaded" | "single" | "timing" => Ok(TimingMode::SingleThreaded),
            "parallel" | "throughput" => Ok(TimingMode::Parallel),
            other => Err(Error::Config(format!("unknown timing mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub dataset: DatasetSpec,
    pub orientation: Orientation,
    pub algorithm: Algorithm,
    pub predictor: PredictorConfig,
    pub k_folds: usize,
    pub seed: u64,
    pub timing_mode: TimingMode,
    /// Predictions are snapped to the rating grid with this step before
    /// scoring, since the recommender outputs one of the possible rating
    /// values. `None` scores the real-valued predictions.
    pub rating_step: Option<f64>,
}

impl ExperimentConfig {
    /// Landmark kNN with the default setting: Popularity, 20 landmarks,
    /// Cosine for both measures, k = 13, 10 folds.
    pub fn landmark(dataset: DatasetSpec, orientation: Orientation) -> Self {
        Self {
            id: String::new(),
            dataset,
            orientation,
            algorithm: Algorithm::Landmark {
                strategy: StrategyKind::Popularity,
                n: 20,
                d1: MeasureKind::Cosine,
                d2: MeasureKind::Cosine,
            },
            predictor: PredictorConfig::default(),
            k_folds: 10,
            seed: 0,
            timing_mode: TimingMode::Parallel,
            rating_step: Some(1.0),
        }
    }

    pub fn baseline(dataset: DatasetSpec, orientation: Orientation, measure: MeasureKind) -> Self {
        Self {
            algorithm: Algorithm::Baseline { measure },
            ..Self::landmark(dataset, orientation)
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    /// A readable identifier derived from the parameters, used when `id` is empty.
    pub fn label(&self) -> String {
        if !self.id.is_empty() {
            return self.id.clone();
        }
        match self.algorithm {
            Algorithm::Landmark { strategy, n, d1, d2 } => format!(
                "{}-landmark-{strategy}-n{n}-{d1}-{d2}-k{}",
                self.orientation, self.predictor.k
            ),
            Algorithm::Baseline { measure } => {
                format!("{}-baseline-{measure}-k{}", self.orientation, self.predictor.k)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::TooFewFolds(self.k_folds));
        }
        if self.predictor.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if let Algorithm::Landmark { n, .. } = self.algorithm {
            if n == 0 {
                return Err(Error::Config("landmark count must be at least 1".into()));
            }
        }
        if let Some(step) = self.rating_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::Config(format!("rating step must be positive, got {step}")));
            }
        }
        Scale::new(self.dataset.scale.min, self.dataset.scale.max)?;
        Ok(())
    }

    /// Parses a TOML experiment file. Top-level keys describe one experiment
    /// and act as defaults for each `[[experiment]]` table, if any.
    pub fn from_toml(text: &str) -> Result<Vec<ExperimentConfig>> {
        let file: RawConfig = toml::from_str(text)?;
        if file.experiment.is_empty() {
            return Ok(vec![file.resolve()?]);
        }
        file.experiment
            .iter()
            .map(|entry| {
                if !entry.experiment.is_empty() {
                    return Err(Error::Config("nested [[experiment]] tables".into()));
                }
                entry.merged_over(&file).resolve()
            })
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Vec<ExperimentConfig>> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

/// Flat key-value form of an experiment, as written in config files.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
struct RawConfig {
    id: Option<String>,
    dataset: Option<String>,
    format: Option<String>,
    separator: Option<String>,
    has_header: Option<bool>,
    columns: Option<String>,
    scale_min: Option<f64>,
    scale_max: Option<f64>,
    orientation: Option<String>,
    algorithm: Option<String>,
    strategy: Option<String>,
    landmarks: Option<usize>,
    d1: Option<String>,
    d2: Option<String>,
    measure: Option<String>,
    k: Option<usize>,
    min_neighbors: Option<usize>,
    positive_only: Option<bool>,
    folds: Option<usize>,
    seed: Option<u64>,
    timing_mode: Option<String>,
    /// 0 turns snapping off.
    rating_step: Option<f64>,
    #[serde(default)]
    experiment: Vec<RawConfig>,
}

impl RawConfig {
    fn merged_over(&self, base: &RawConfig) -> RawConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RawConfig { $($f: self.$f.clone().or_else(|| base.$f.clone()),)* experiment: Vec::new() } };
        }
        pick!(
            id, dataset, format, separator, has_header, columns, scale_min, scale_max,
            orientation, algorithm, strategy, landmarks, d1, d2, measure, k, min_neighbors,
            positive_only, folds, seed, timing_mode, rating_step
        )
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let path = self
            .dataset
            .clone()
            .ok_or_else(|| Error::Config("missing `dataset` path".into()))?;
        let format: Format = self.format.as_deref().unwrap_or("ml-100k").parse()?;
        let mut dataset = DatasetSpec::new(path, format);
        dataset.separator = self.separator.clone();
        dataset.has_header = self.has_header.unwrap_or(false);
        if let Some(cols) = &self.columns {
            dataset.columns = cols.parse::<Columns>()?;
        }
        let defaults = Scale::default();
        dataset.scale = Scale::new(
            self.scale_min.unwrap_or(defaults.min),
            self.scale_max.unwrap_or(defaults.max),
        )?;

        let measure = |s: &Option<String>| -> Result<MeasureKind> {
            s.as_deref().unwrap_or("cosine").parse()
        };
        let algorithm = match self.algorithm.as_deref().unwrap_or("landmark") {
            "landmark" | "landmark-knn" => {
                if self.measure.is_some() {
                    return Err(Error::Config(
                        "`measure` applies to baseline runs; use d1/d2 for landmark runs".into(),
                    ));
                }
                Algorithm::Landmark {
                    strategy: self.strategy.as_deref().unwrap_or("popularity").parse()?,
                    n: self.landmarks.unwrap_or(20),
                    d1: measure(&self.d1)?,
                    d2: measure(&self.d2)?,
                }
            }
            "baseline" | "baseline-knn" => {
                if self.strategy.is_some()
                    || self.landmarks.is_some()
                    || self.d1.is_some()
                    || self.d2.is_some()
                {
                    return Err(Error::Config(
                        "landmark settings (strategy, landmarks, d1, d2) given for a baseline run"
                            .into(),
                    ));
                }
                Algorithm::Baseline {
                    measure: measure(&self.measure)?,
                }
            }
            other => return Err(Error::Config(format!("unknown algorithm `{other}`"))),
        };
        let defaults = PredictorConfig::default();
        let config = ExperimentConfig {
            id: self.id.clone().unwrap_or_default(),
            dataset,
            orientation: self.orientation.as_deref().unwrap_or("user").parse()?,
            algorithm,
            predictor: PredictorConfig {
                k: self.k.unwrap_or(defaults.k),
                min_neighbors: self.min_neighbors.unwrap_or(defaults.min_neighbors),
                positive_only: self.positive_only.unwrap_or(defaults.positive_only),
            },
            k_folds: self.folds.unwrap_or(10),
            seed: self.seed.unwrap_or(0),
            timing_mode: self
                .timing_mode
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default(),
            rating_step: match self.rating_step {
                Some(0.0) => None,
                Some(step) => Some(step),
                None => Some(1.0),
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// Wall-clock seconds per phase of one fold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub selection_s: f64,
    pub embedding_s: f64,
    pub similarity_s: f64,
    pub prediction_s: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.selection_s + self.embedding_s + self.similarity_s + self.prediction_s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SourceCounts {
    pub neighbors: usize,
    pub row_mean: usize,
    pub global_mean: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub mae: f64,
    pub n_test: usize,
    pub sources: SourceCounts,
    pub timings: PhaseTimings,
    /// MAE of predicting the training global mean for every test record.
    pub global_mean_mae: f64,
    /// Landmark ids used in this fold (empty for baselines).
    pub landmarks: Vec<EntityId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub folds: Vec<FoldReport>,
    pub mean_mae: f64,
    pub mean_total_s: f64,
    pub warnings: Vec<String>,
}

impl RunReport {
    fn from_folds(config: ExperimentConfig, folds: Vec<FoldReport>) -> Self {
        let k = folds.len() as f64;
        let mean_mae = folds.iter().map(|f| f.mae).sum::<f64>() / k;
        let mean_total_s = folds.iter().map(|f| f.timings.total()).sum::<f64>() / k;
        let floor = folds.iter().map(|f| f.global_mean_mae).sum::<f64>() / k;
        let mut warnings = Vec::new();
        if mean_mae > floor + 1e-12 {
            warnings.push(format!(
                "{}: MAE {mean_mae:.5} is worse than the global-mean predictor ({floor:.5})",
                config.label()
            ));
        }
        Self {
            config,
            folds,
            mean_mae,
            mean_total_s,
            warnings,
        }
    }

    pub fn mean_timings(&self) -> PhaseTimings {
        let k = self.folds.len() as f64;
        let mut t = PhaseTimings::default();
        for f in &self.folds {
            t.selection_s += f.timings.selection_s / k;
            t.embedding_s += f.timings.embedding_s / k;
            t.similarity_s += f.timings.similarity_s / k;
            t.prediction_s += f.timings.prediction_s / k;
        }
        t
    }
}

/// Runs one fold: build the training matrix from the other folds, compute
/// the similarity matrix, predict every held-out rating.
fn run_fold(
    data: &Dataset,
    folds: &FoldAssignment,
    fold: usize,
    config: &ExperimentConfig,
) -> Result<FoldReport> {
    let (test, train) = folds.split(fold);
    let train_ratings: Vec<Rating> = train.iter().map(|&i| data.ratings[i]).collect();
    let matrix = RatingMatrix::build(&train_ratings, data.num_users(), data.num_items(), data.scale)?;
    let view = matrix.view(config.orientation);

    let mut timings = PhaseTimings::default();
    let mut landmarks = Vec::new();
    let sims: SimilarityMatrix = match config.algorithm {
        Algorithm::Landmark { strategy, n, d1, d2 } => {
            let seed = SplitRng::derive(config.seed, fold as u64).next_u64();
            let t = Instant::now();
            let set = select_landmarks(&view, strategy, n, seed, d1)?;
            timings.selection_s = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let emb = build_embedding(&view, &set, d1);
            timings.embedding_s = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let sims = landmark_similarity_matrix(&emb, d2);
            timings.similarity_s = t.elapsed().as_secs_f64();
            landmarks = set.ids;
            sims
        }
        Algorithm::Baseline { measure } => {
            let t = Instant::now();
            let sims = similarity_matrix(&view, measure);
            timings.similarity_s = t.elapsed().as_secs_f64();
            sims
        }
    };

    let (pairs, truths): (Vec<(EntityId, EntityId)>, Vec<f64>) = test
        .iter()
        .map(|&i| {
            let r = data.ratings[i];
            let pair = match config.orientation {
                Orientation::User => (r.user, r.item),
                Orientation::Item => (r.item, r.user),
            };
            (pair, r.value)
        })
        .unzip();
    let t = Instant::now();
    let preds = predict_batch(&view, &sims, &pairs, &config.predictor);
    timings.prediction_s = t.elapsed().as_secs_f64();

    let mut sources = SourceCounts::default();
    for p in &preds {
        match p.source {
            PredictionSource::Neighbors => sources.neighbors += 1,
            PredictionSource::RowMean => sources.row_mean += 1,
            PredictionSource::GlobalMean => sources.global_mean += 1,
        }
    }
    let values: Vec<f64> = match config.rating_step {
        Some(step) => preds.iter().map(|p| data.scale.snap(p.value, step)).collect(),
        None => preds.iter().map(|p| p.value).collect(),
    };
    let global = matrix.global_mean().unwrap_or_else(|| data.scale.midpoint());
    Ok(FoldReport {
        fold,
        mae: mae(&values, &truths)?,
        n_test: truths.len(),
        sources,
        timings,
        global_mean_mae: mae(&vec![global; truths.len()], &truths)?,
        landmarks,
    })
}

/// Cross-validates `config` on already-loaded data with a given fold split.
pub fn run_on(data: &Dataset, folds: &FoldAssignment, config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    if folds.fold_of.len() != data.ratings.len() {
        return Err(Error::Config(format!(
            "fold assignment covers {} records, dataset has {}",
            folds.fold_of.len(),
            data.ratings.len()
        )));
    }
    let run = || -> Result<Vec<FoldReport>> {
        match config.timing_mode {
            TimingMode::SingleThreaded => (0..folds.k_folds)
                .map(|f| run_fold(data, folds, f, config))
                .collect(),
            TimingMode::Parallel => (0..folds.k_folds)
                .into_par_iter()
                .map(|f| run_fold(data, folds, f, config))
                .collect(),
        }
    };
    let reports = match config.timing_mode {
        TimingMode::SingleThreaded => rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?,
        TimingMode::Parallel => run()?,
    };
    Ok(RunReport::from_folds(config.clone(), reports))
}

/// Loads the dataset, splits it with the config's seed and cross-validates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let data = config.dataset.load()?;
    let folds = kfold_split(data.ratings.len(), config.k_folds, config.seed)?;
    run_on(&data, &folds, config)
}

/// Runs every config in order. Each dataset is loaded once, and all configs
/// on the same dataset with the same fold count share one split, drawn with
/// the seed of the first such config, so their folds are paired. A config's
/// own seed still drives its landmark sampling.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<RunReport>> {
    if configs.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    let mut datasets: Vec<(DatasetSpec, Dataset)> = Vec::new();
    let mut splits: Vec<(usize, usize, FoldAssignment)> = Vec::new();
    let mut reports = Vec::with_capacity(configs.len());
    for (index, config) in configs.iter().enumerate() {
        let wrap = |source: Error| Error::Sweep {
            index,
            source: Box::new(source),
        };
        config.validate().map_err(wrap)?;
        let data_index = match datasets.iter().position(|(spec, _)| *spec == config.dataset) {
            Some(i) => i,
            None => {
                let data = config.dataset.load().map_err(wrap)?;
                datasets.push((config.dataset.clone(), data));
                datasets.len() - 1
            }
        };
        let data = &datasets[data_index].1;
        let split_index = match splits
            .iter()
            .position(|(d, k, _)| *d == data_index && *k == config.k_folds)
        {
            Some(i) => i,
            None => {
                let folds =
                    kfold_split(data.ratings.len(), config.k_folds, config.seed).map_err(wrap)?;
                splits.push((data_index, config.k_folds, folds));
                splits.len() - 1
            }
        };
        reports.push(run_on(data, &splits[split_index].2, config).map_err(wrap)?);
    }
    Ok(reports)
}

pub const FOLD_CSV_HEADER: [&str; 8] = [
    "config_id",
    "fold",
    "mae",
    "n_test",
    "selection_s",
    "embedding_s",
    "similarity_s",
    "prediction_s",
];

pub const SUMMARY_CSV_HEADER: [&str; 16] = [
    "config_id",
    "orientation",
    "algorithm",
    "strategy",
    "landmarks",
    "d1",
    "d2",
    "k",
    "folds",
    "seed",
    "mean_mae",
    "mean_total_s",
    "mean_selection_s",
    "mean_embedding_s",
    "mean_similarity_s",
    "mean_prediction_s",
];

/// One row per fold of every report.
pub fn write_fold_csv<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FOLD_CSV_HEADER)?;
    for r in reports {
        let id = r.config.label();
        for f in &r.folds {
            w.write_record([
                id.clone(),
                f.fold.to_string(),
                f.mae.to_string(),
                f.n_test.to_string(),
                f.timings.selection_s.to_string(),
                f.timings.embedding_s.to_string(),
                f.timings.similarity_s.to_string(),
                f.timings.prediction_s.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per report with fold means.
pub fn write_summary_csv<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for r in reports {
        let c = &r.config;
        let (strategy, n, d1, d2) = match c.algorithm {
            Algorithm::Landmark { strategy, n, d1, d2 } => (
                strategy.to_string(),
                n.to_string(),
                d1.to_string(),
                d2.to_string(),
            ),
            Algorithm::Baseline { measure } => {
                (String::new(), String::new(), measure.to_string(), String::new())
            }
        };
        let t = r.mean_timings();
        w.write_record([
            c.label(),
            c.orientation.to_string(),
            c.algorithm.name().to_string(),
            strategy,
            n,
            d1,
            d2,
            c.predictor.k.to_string(),
            c.k_folds.to_string(),
            c.seed.to_string(),
            r.mean_mae.to_string(),
            r.mean_total_s.to_string(),
            t.selection_s.to_string(),
            t.embedding_s.to_string(),
            t.similarity_s.to_string(),
            t.prediction_s.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
