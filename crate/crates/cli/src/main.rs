use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use landmark_cf::eval::{
    sweep, write_fold_csv, write_summary_csv, Algorithm, ExperimentConfig, RunReport, TimingMode,
};
use landmark_cf::ingest::{kfold_split, Columns, DatasetSpec, DatasetStats, Format};
use landmark_cf::landmark::StrategyKind;
use landmark_cf::predict::PredictorConfig;
use landmark_cf::ratings::{Orientation, Scale};
use landmark_cf::similarity::MeasureKind;

/// Landmark-based user/item kNN collaborative filtering experiments.
#[derive(Parser)]
#[command(name = "lmcf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print rating, user and item counts and the fill percentage.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Write a seeded k-fold assignment as `record_index,fold`.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Cross-validate one configuration, or every experiment in a config file.
    Run(RunArgs),
    /// MAE against the number of landmarks for each strategy, plus baselines.
    SweepLandmarks(SweepLandmarksArgs),
    /// MAE for every d1 x d2 measure pair and strategy at a fixed landmark count.
    SweepMeasures(SweepMeasuresArgs),
    /// MAE and runtime of the plain kNN baselines next to landmark kNN.
    CompareBaselines(CompareArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Rating file.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "ml-100k")]
    format: Format,
    /// Field separator for `--format csv`.
    #[arg(long)]
    separator: Option<String>,
    /// The CSV file starts with a header line.
    #[arg(long)]
    header: bool,
    /// CSV column order, e.g. `user,item,rating,timestamp`.
    #[arg(long)]
    columns: Option<Columns>,
    #[arg(long, default_value_t = 1.0)]
    scale_min: f64,
    #[arg(long, default_value_t = 5.0)]
    scale_max: f64,
}

impl DataArgs {
    fn spec(&self) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::new(&self.dataset, self.format);
        spec.separator = self.separator.clone();
        spec.has_header = self.header;
        if let Some(c) = &self.columns {
            spec.columns = *c;
        }
        spec.scale = Scale::new(self.scale_min, self.scale_max)?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Neighbors used per prediction.
    #[arg(long, default_value_t = 13)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    timing_mode: Option<TimingMode>,
    /// Let negative similarities into the neighborhood.
    #[arg(long)]
    allow_negative: bool,
    /// Score predictions on this rating grid; 0 scores raw predictions.
    #[arg(long, default_value_t = 1.0)]
    rating_step: f64,
}

impl EvalArgs {
    fn apply(&self, config: &mut ExperimentConfig, default_timing: TimingMode) {
        config.predictor = PredictorConfig {
            k: self.k,
            positive_only: !self.allow_negative,
            ..PredictorConfig::default()
        };
        config.k_folds = self.folds;
        config.seed = self.seed;
        config.timing_mode = self.timing_mode.unwrap_or(default_timing);
        config.rating_step = (self.rating_step != 0.0).then_some(self.rating_step);
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Orientations {
    User,
    Item,
    Both,
}

impl Orientations {
    fn list(self) -> Vec<Orientation> {
        match self {
            Orientations::User => vec![Orientation::User],
            Orientations::Item => vec![Orientation::Item],
            Orientations::Both => vec![Orientation::User, Orientation::Item],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Landmark,
    Baseline,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; replaces the dataset and experiment flags.
    #[arg(long, conflicts_with = "dataset")]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: Option<DataArgs>,
    #[arg(long, default_value = "user")]
    orientation: Orientation,
    #[arg(long, value_enum, default_value = "landmark")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value = "popularity")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 20)]
    landmarks: usize,
    #[arg(long, default_value = "cosine")]
    d1: MeasureKind,
    #[arg(long, default_value = "cosine")]
    d2: MeasureKind,
    /// Similarity of baseline runs.
    #[arg(long, default_value = "cosine")]
    measure: MeasureKind,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepLandmarksArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "both")]
    orientation: Orientations,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_value = "random,dist-of-ratings,coresets,coresets-random,popularity")]
    strategies: Vec<StrategyKind>,
    /// `N` or `FROM:TO:STEP`.
    #[arg(long, default_value = "10:100:10")]
    landmarks: LandmarkRange,
    #[arg(long, default_value = "cosine")]
    d1: MeasureKind,
    #[arg(long, default_value = "cosine")]
    d2: MeasureKind,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepMeasuresArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "both")]
    orientation: Orientations,
    #[arg(long, value_delimiter = ',', default_value = "random,dist-of-ratings,coresets,coresets-random,popularity")]
    strategies: Vec<StrategyKind>,
    #[arg(long, default_value_t = 20)]
    landmarks: usize,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "both")]
    orientation: Orientations,
    #[arg(long, default_value = "popularity")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 20)]
    landmarks: usize,
    #[arg(long, default_value = "cosine")]
    d1: MeasureKind,
    #[arg(long, default_value = "cosine")]
    d2: MeasureKind,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LandmarkRange(Vec<usize>);

impl std::str::FromStr for LandmarkRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{t}` is not a landmark count"))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [n] => vec![num(n)?],
            [from, to] => (num(from)?..=num(to)?).collect(),
            [from, to, step] => {
                let step = num(step)?;
                if step == 0 {
                    return Err("range step must be positive".into());
                }
                (num(from)?..=num(to)?).step_by(step).collect()
            }
            _ => return Err(format!("`{s}` is neither N nor FROM:TO:STEP")),
        };
        if values.is_empty() || values.contains(&0) {
            return Err(format!("`{s}` gives no positive landmark counts"));
        }
        Ok(LandmarkRange(values))
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Stats { data } => stats(&data),
        Command::Split {
            data,
            folds,
            seed,
            out,
        } => split(&data, folds, seed, &out),
        Command::Run(args) => run(args),
        Command::SweepLandmarks(args) => sweep_landmarks(args),
        Command::SweepMeasures(args) => sweep_measures(args),
        Command::CompareBaselines(args) => compare_baselines(args),
    }
}

fn stats(data: &DataArgs) -> Result<()> {
    let spec = data.spec()?;
    let dataset = spec.load()?;
    let matrix = dataset.matrix()?;
    println!("{}", DatasetStats::HEADER);
    println!("{}", DatasetStats::of(&matrix).row());
    Ok(())
}

fn split(data: &DataArgs, folds: usize, seed: u64, out: &Path) -> Result<()> {
    let spec = data.spec()?;
    let dataset = spec.load()?;
    let assignment = kfold_split(dataset.ratings.len(), folds, seed)?;
    let path = out.join("folds.csv");
    assignment.write_csv(create(&path)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let configs = match (&args.config, &args.data) {
        (Some(path), _) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading {}", path.display()))?,
        (None, Some(data)) => {
            let algorithm = match args.algorithm {
                AlgorithmArg::Landmark => Algorithm::Landmark {
                    strategy: args.strategy,
                    n: args.landmarks,
                    d1: args.d1,
                    d2: args.d2,
                },
                AlgorithmArg::Baseline => Algorithm::Baseline {
                    measure: args.measure,
                },
            };
            let mut config =
                ExperimentConfig::landmark(data.spec()?, args.orientation).with_algorithm(algorithm);
            args.eval.apply(&mut config, TimingMode::Parallel);
            vec![config]
        }
        (None, None) => bail!("either --config or --dataset is required"),
    };
    let reports = sweep(&configs)?;
    for r in &reports {
        print_report(r);
    }
    write_reports(&reports, &args.out, "")
}

fn sweep_landmarks(args: SweepLandmarksArgs) -> Result<()> {
    let spec = args.data.spec()?;
    let ns = &args.landmarks.0;
    for orientation in args.orientation.list() {
        let mut configs = Vec::new();
        for &n in ns {
            for &strategy in &args.strategies {
                configs.push(ExperimentConfig::landmark(spec.clone(), orientation).with_algorithm(
                    Algorithm::Landmark {
                        strategy,
                        n,
                        d1: args.d1,
                        d2: args.d2,
                    },
                ));
            }
        }
        for measure in MeasureKind::ALL {
            configs.push(ExperimentConfig::baseline(spec.clone(), orientation, measure));
        }
        for c in &mut configs {
            args.eval.apply(c, TimingMode::Parallel);
        }
        let reports = sweep(&configs)?;

        let mut header = vec!["n".to_string()];
        header.extend(args.strategies.iter().map(|s| s.to_string()));
        header.extend(MeasureKind::ALL.iter().map(|m| format!("baseline_{m}")));
        let baselines = &reports[ns.len() * args.strategies.len()..];
        let rows = ns.iter().enumerate().map(|(i, n)| {
            let strategies = &reports[i * args.strategies.len()..(i + 1) * args.strategies.len()];
            let mut row = vec![n.to_string()];
            row.extend(strategies.iter().chain(baselines).map(|r| fmt_mae(r.mean_mae)));
            row
        });
        let path = args.out.join(format!("sweep_landmarks_{orientation}.csv"));
        write_table(&path, &header, rows)?;
        write_reports(&reports, &args.out, &format!("sweep_landmarks_{orientation}_"))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn sweep_measures(args: SweepMeasuresArgs) -> Result<()> {
    let spec = args.data.spec()?;
    for orientation in args.orientation.list() {
        let mut configs = Vec::new();
        for d1 in MeasureKind::ALL {
            for d2 in MeasureKind::ALL {
                for &strategy in &args.strategies {
                    let mut c = ExperimentConfig::landmark(spec.clone(), orientation).with_algorithm(
                        Algorithm::Landmark {
                            strategy,
                            n: args.landmarks,
                            d1,
                            d2,
                        },
                    );
                    args.eval.apply(&mut c, TimingMode::Parallel);
                    configs.push(c);
                }
            }
        }
        let reports = sweep(&configs)?;

        let mut header = vec!["d1".to_string(), "d2".to_string()];
        header.extend(args.strategies.iter().map(|s| s.to_string()));
        let rows = reports.chunks(args.strategies.len()).map(|chunk| {
            let Algorithm::Landmark { d1, d2, .. } = chunk[0].config.algorithm else {
                unreachable!("measure sweeps only hold landmark runs")
            };
            let mut row = vec![d1.to_string(), d2.to_string()];
            row.extend(chunk.iter().map(|r| fmt_mae(r.mean_mae)));
            row
        });
        let path = args.out.join(format!("sweep_measures_{orientation}.csv"));
        write_table(&path, &header, rows)?;
        write_reports(&reports, &args.out, &format!("sweep_measures_{orientation}_"))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn compare_baselines(args: CompareArgs) -> Result<()> {
    let spec = args.data.spec()?;
    for orientation in args.orientation.list() {
        let mut configs: Vec<ExperimentConfig> = MeasureKind::ALL
            .iter()
            .map(|&m| ExperimentConfig::baseline(spec.clone(), orientation, m))
            .collect();
        configs.push(
            ExperimentConfig::landmark(spec.clone(), orientation).with_algorithm(
                Algorithm::Landmark {
                    strategy: args.strategy,
                    n: args.landmarks,
                    d1: args.d1,
                    d2: args.d2,
                },
            ),
        );
        for c in &mut configs {
            args.eval.apply(c, TimingMode::SingleThreaded);
        }
        let reports = sweep(&configs)?;

        let landmark_s = reports[3].mean_total_s;
        let names = ["Euclidean kNN", "Cosine kNN", "Pearson kNN", "Landmarks kNN"];
        let header = ["algorithm", "mean_mae", "mean_runtime_s", "slowdown"].map(String::from);
        let rows = names.iter().zip(&reports).map(|(name, r)| {
            vec![
                name.to_string(),
                fmt_mae(r.mean_mae),
                format!("{:.6}", r.mean_total_s),
                format!("{:.2}", r.mean_total_s / landmark_s),
            ]
        });
        let path = args.out.join(format!("compare_baselines_{orientation}.csv"));
        write_table(&path, &header, rows)?;
        for r in &reports {
            print_report(r);
        }
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn fmt_mae(mae: f64) -> String {
    format!("{mae:.5}")
}

fn print_report(r: &RunReport) {
    println!(
        "{}: mae {} over {} folds, {:.4} s per fold",
        r.config.label(),
        fmt_mae(r.mean_mae),
        r.folds.len(),
        r.mean_total_s
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-fold and summary CSVs; these carry timings, so they differ between runs.
fn write_reports(reports: &[RunReport], out: &Path, prefix: &str) -> Result<()> {
    write_fold_csv(reports, create(&out.join(format!("{prefix}folds.csv")))?)?;
    write_summary_csv(reports, create(&out.join(format!("{prefix}summary.csv")))?)?;
    Ok(())
}
