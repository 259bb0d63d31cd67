//! `purify`: data generation, training, evaluation, analysis and OT oracles.

mod overrides;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use purified::analysis::{
    dataset_representations, eval_csv, evaluate_accuracy, pca_explained_variance, AnalysisError, EvalRow,
};
use purified::checkpoint::{self, CheckpointError};
use purified::config::ConfigError;
use purified::data::{
    generate_synthetic_biased, read_dataset, write_dataset, DataError, LabeledDataset, NuisanceDataset,
};
use purified::otoracle::{self, CriticBudget, EmpiricalDistribution, OtError};
use purified::train::{self, EpochMetrics, Observer, TrainError};
use purified::ModelParams;

use overrides::{resolve, Overrides};

const TRAIN_FILE: &str = "train.pld";
const TEST_FILE: &str = "test.pld";
const SOURCE_FILE: &str = "source.pld";
const MANIFEST_FILE: &str = "manifest.toml";
const RESOLVED_FILE: &str = "config.toml";

#[derive(Parser)]
#[command(
    name = "purify",
    version,
    about = "Purified learning experiments on a synthetic biased benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/test/source datasets and a manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a purified model or the classification-only baseline.
    Train {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the data directory's manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Nuisance-labelled source set; defaults to source.pld in the data directory.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Accuracy of a checkpoint on a labelled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the result as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// PCA of representations plus accuracy on each dataset.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        /// Labelled datasets; PCA uses the first.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        top_k: usize,
    },
    /// Exact Wasserstein-1 distances and bound checks.
    Oracle {
        #[command(subcommand)]
        command: OracleCmd,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// W1 between the feature clouds of two dataset files.
    W1 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also train a clipped critic for this many steps and report its estimate.
        #[arg(long)]
        critic_steps: Option<usize>,
        /// Seed for padding unequal sizes and critic initialisation.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomised checks of the cross-distribution disagreement bound.
    Theorem1 {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Purified,
    Goal1,
}

/// A failure mapped to the documented exit codes.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl Display) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }

    fn io(e: impl Display) -> Self {
        Self {
            code: 3,
            message: e.to_string(),
        }
    }

    fn numerical(e: impl Display) -> Self {
        Self {
            code: 4,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::io(e),
            _ => Self::config(e),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::config(e),
            TrainError::Numerical { .. } | TrainError::NonFiniteMetric { .. } => Self::numerical(e),
            _ => Self::io(e),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Dim { .. } => Self::config(e),
            _ => Self::io(e),
        }
    }
}

impl From<OtError> for Failure {
    fn from(e: OtError) -> Self {
        match e {
            OtError::Diverged { .. } => Self::numerical(e),
            _ => Self::config(e),
        }
    }
}

fn with_path<E: Display>(path: &Path) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure::io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<purified::data::Dataset, Failure> {
    read_dataset(path).map_err(|e: DataError| Failure::io(format!("{}: {e}", path.display())))
}

fn read_labeled(path: &Path) -> Result<LabeledDataset, Failure> {
    LabeledDataset::new(read(path)?).map_err(with_path(path))
}

fn load_model(path: &Path) -> Result<ModelParams, Failure> {
    checkpoint::load(path).map_err(|e: CheckpointError| Failure::io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(with_path(path))
}

fn gen_data(out: &Path, config: Option<&Path>, overrides: &Overrides) -> Result<(), Failure> {
    let cfg = resolve(config, overrides)?;
    let splits = generate_synthetic_biased(&cfg.generator()).map_err(Failure::config)?;
    fs::create_dir_all(out).map_err(with_path(out))?;
    for (name, ds) in [
        (TRAIN_FILE, splits.train.inner()),
        (TEST_FILE, splits.test.inner()),
        (SOURCE_FILE, splits.source.inner()),
    ] {
        let path = out.join(name);
        write_dataset(ds, &path).map_err(with_path(&path))?;
        println!("wrote {} ({} samples)", path.display(), ds.len());
    }
    write(&out.join(MANIFEST_FILE), &cfg.to_toml())
}

/// Per-epoch progress on stderr.
struct Progress {
    quiet: bool,
}

impl Observer<f64> for Progress {
    fn epoch_end(&mut self, rows: &[EpochMetrics]) {
        if self.quiet {
            return;
        }
        let parts: Vec<String> = rows
            .iter()
            .map(|r| format!("{} acc {:.4} loss {:.4}", r.split, r.accuracy, r.loss_cls))
            .collect();
        if let Some(r) = rows.first() {
            eprintln!(
                "epoch {:>3}  lr {:.0e}  {}  critic {:.4}",
                r.epoch,
                r.lr,
                parts.join("  "),
                r.critic_obj
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    mode: Mode,
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    source: Option<&Path>,
    quiet: bool,
    overrides: &Overrides,
) -> Result<(), Failure> {
    let manifest = data.join(MANIFEST_FILE);
    let config = config.or_else(|| manifest.exists().then_some(manifest.as_path()));
    let cfg = resolve(config, overrides)?;
    let target = read_labeled(&data.join(TRAIN_FILE))?;
    let mut progress = Progress { quiet };
    let outcome = match mode {
        Mode::Purified => {
            let path = source.map(Path::to_path_buf).unwrap_or_else(|| data.join(SOURCE_FILE));
            let src = NuisanceDataset::new(read(&path)?).map_err(with_path(&path))?;
            train::train_purified(&cfg, &target, &src, &mut progress)?
        }
        Mode::Goal1 => {
            if let Some(path) = source {
                eprintln!("warning: goal1 mode ignores source data {}", path.display());
            }
            train::train_goal1_only(&cfg, &target, &mut progress)?
        }
    };
    outcome.write(out).map_err(with_path(out))?;
    write(&out.join(RESOLVED_FILE), &outcome.resolved_config(&cfg).to_toml())?;
    let last = outcome.metrics.last().map_or(0.0, |r| r.accuracy);
    println!(
        "trained {} epochs, best epoch {}, final {} accuracy {:.4}",
        cfg.epochs,
        outcome.best_epoch,
        outcome.metrics.last().map_or("train".into(), |r| r.split.to_string()),
        last
    );
    Ok(())
}

fn eval_cmd(model: &Path, data: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    let m = load_model(model)?;
    let ds = read_labeled(data)?;
    let accuracy = evaluate_accuracy(&m, &ds)?;
    println!("accuracy: {accuracy} (n = {})", ds.len());
    if let Some(path) = csv {
        let row = EvalRow {
            dataset: dataset_name(data),
            accuracy,
            n: ds.len(),
        };
        write(path, &eval_csv(&[row]))?;
    }
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn analyze_cmd(model: &Path, data: &[PathBuf], out: &Path, top_k: usize) -> Result<(), Failure> {
    let m = load_model(model)?;
    let sets = data.iter().map(|p| read_labeled(p)).collect::<Result<Vec<_>, _>>()?;
    let reps = dataset_representations(&m, &sets[0])?;
    let pca = pca_explained_variance(&reps, top_k)?;
    let rows: Vec<EvalRow> = data
        .iter()
        .zip(&sets)
        .map(|(p, ds)| {
            Ok(EvalRow {
                dataset: dataset_name(p),
                accuracy: evaluate_accuracy(&m, ds)?,
                n: ds.len(),
            })
        })
        .collect::<Result<_, AnalysisError>>()?;
    fs::create_dir_all(out).map_err(with_path(out))?;
    write(&out.join("pca_report.csv"), &pca.to_csv())?;
    write(&out.join("eval_report.csv"), &eval_csv(&rows))?;
    match pca.top_k_proportion() {
        Some(p) => println!("top-{top_k} explained variance: {p}"),
        None => println!("representations have zero variance"),
    }
    Ok(())
}

fn oracle_w1(a: &Path, b: &Path, critic_steps: Option<usize>, seed: u64) -> Result<(), Failure> {
    let da = EmpiricalDistribution::from_dataset(&read(a)?)?;
    let db = EmpiricalDistribution::from_dataset(&read(b)?)?;
    let (da, db) = if da.len() == db.len() {
        (da, db)
    } else {
        eprintln!(
            "note: padding to {} points by resampling (seed {seed})",
            da.len().max(db.len())
        );
        otoracle::equalize(&da, &db, seed)
    };
    let exact = otoracle::w1_exact(&da, &db)?;
    match critic_steps {
        None => {
            println!("exact_w1");
            println!("{exact}");
        }
        Some(steps) => {
            let budget = CriticBudget {
                steps,
                seed,
                ..CriticBudget::default()
            };
            let est = otoracle::critic_w1_estimate(&da, &db, &budget)?;
            println!("exact_w1,critic_estimate,critic_objective,k_upper");
            println!("{exact},{},{},{}", est.estimate, est.objective, est.k_upper);
        }
    }
    Ok(())
}

fn oracle_theorem1(trials: usize, seed: u64) -> Result<(), Failure> {
    let s = otoracle::theorem1_trials(trials, seed);
    println!("trials: {}", s.trials);
    println!("violations: {}", s.violations);
    if s.trials > 0 {
        println!("min slack: {}", s.min_slack);
    }
    if s.violations > 0 {
        return Err(Failure::numerical(format!("{} bound violations", s.violations)));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::GenData { out, config, overrides } => gen_data(&out, config.as_deref(), &overrides),
        Cmd::Train {
            mode,
            data,
            out,
            config,
            source,
            quiet,
            overrides,
        } => train_cmd(
            mode,
            &data,
            &out,
            config.as_deref(),
            source.as_deref(),
            quiet,
            &overrides,
        ),
        Cmd::Eval { model, data, csv } => eval_cmd(&model, &data, csv.as_deref()),
        Cmd::Analyze {
            model,
            data,
            out,
            top_k,
        } => analyze_cmd(&model, &data, &out, top_k),
        Cmd::Oracle { command } => match command {
            OracleCmd::W1 {
                a,
                b,
                critic_steps,
                seed,
            } => oracle_w1(&a, &b, critic_steps, seed),
            OracleCmd::Theorem1 { trials, seed } => oracle_theorem1(trials, seed),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
