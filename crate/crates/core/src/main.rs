use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use annpso::dataset::{self, DEFAULT_NOISE_SCALE};
use annpso::experiment::{self, DatasetSource, ExperimentConfig, ExperimentResult, ModelConfig};
use annpso::metrics::{self, Stage};
use annpso::trainers::SavedModel;
use annpso::{BackpropConfig, Error, NetworkSpec, PsoConfig, Result};

#[derive(Parser)]
#[command(
    name = "annpso",
    version,
    about = "Train sigmoid networks by backprop or particle swarm and compare them"
)]
struct Cli {
    /// Run seed. Overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic 81-row dataset as CSV.
    Generate {
        #[arg(long, default_value_t = DEFAULT_NOISE_SCALE)]
        noise_scale: f64,
        /// Defaults to <out-dir>/dataset.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a single model and write its reports.
    Train(TrainArgs),
    /// Run a multi-model comparison.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        paper_preset: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Repeat with seeds seed, seed+1, ... and summarize test mean-RMSE.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Score a saved model on every row of a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Rewrite report files from a saved result.json.
    Report {
        #[arg(long)]
        result: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    #[value(name = "ann")]
    Ann,
    #[value(name = "ann-pso")]
    AnnPso,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// CSV/TSV dataset; the synthetic dataset when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "3-6-2-3")]
    architecture: NetworkSpec,
    #[arg(long, default_value_t = experiment::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = 30)]
    swarm_size: usize,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate {
            noise_scale,
            output,
        } => {
            let seed = cli.seed.unwrap_or(experiment::DEFAULT_SEED);
            let data = dataset::synthesize(seed, *noise_scale)?;
            let path = output
                .clone()
                .unwrap_or_else(|| cli.out_dir.join("dataset.csv"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            data.write_file(&path)?;
            info!("wrote {} rows to {}", data.len(), path.display());
            Ok(())
        }
        Command::Train(args) => {
            let model = match args.method {
                MethodArg::Ann => {
                    let d = BackpropConfig::default();
                    ModelConfig::ann(
                        "ANN",
                        BackpropConfig {
                            epochs: args.epochs.unwrap_or(d.epochs),
                            learning_rate: args.learning_rate.unwrap_or(d.learning_rate),
                            ..d
                        },
                    )
                }
                MethodArg::AnnPso => ModelConfig::ann_pso(
                    format!("ANN-PSO-{}", args.swarm_size),
                    PsoConfig::new(args.swarm_size, args.max_iterations),
                ),
            };
            let mut config = experiment::paper_preset();
            config.models = vec![model];
            config.architecture = args.architecture.layer_sizes().to_vec();
            config.train_fraction = args.train_fraction;
            if let Some(p) = &args.data {
                config.dataset = DatasetSource::File(p.clone());
            }
            run_once(cli, config)
        }
        Command::Run {
            paper_preset,
            config,
            repeats,
        } => {
            let config = match (paper_preset, config) {
                (_, Some(path)) => experiment::load_config(path)?,
                _ => experiment::paper_preset(),
            };
            if *repeats > 1 {
                run_repeated(cli, config, *repeats)
            } else {
                run_once(cli, config)
            }
        }
        Command::Evaluate { model, data } => {
            let text = fs::read_to_string(model).map_err(|e| io_err(model, e))?;
            let saved = SavedModel::from_text(&text)?;
            let norm = saved.normalization.ok_or_else(|| {
                Error::Format(format!("{} carries no normalization", model.display()))
            })?;
            let data = dataset::ingest(data)?;
            let rows: Vec<usize> = (0..data.len()).collect();
            let eval = metrics::evaluate(&saved.model, &data, &rows, &norm, Stage::Test)?;
            let mut out = io::stdout().lock();
            let w = |e: io::Error| Error::Format(e.to_string());
            writeln!(out, "output,rmse,r,r_pearson,mae").map_err(w)?;
            for m in &eval.report.outputs {
                let pearson = m.r_pearson.map_or("NA".into(), |v| v.to_string());
                writeln!(
                    out,
                    "{},{},{},{pearson},{}",
                    m.name, m.rmse, m.r_paper, m.mae
                )
                .map_err(w)?;
            }
            Ok(())
        }
        Command::Report { result } => {
            let r = experiment::load_result(result)?;
            write_outputs(cli, &r)
        }
    }
}

fn apply_seed(cli: &Cli, config: ExperimentConfig) -> ExperimentConfig {
    match cli.seed {
        Some(s) => config.with_seed(s),
        None => config,
    }
}

fn run_once(cli: &Cli, config: ExperimentConfig) -> Result<()> {
    let config = apply_seed(cli, config);
    info!(
        "running {} model(s) with seed {}",
        config.models.len(),
        config.seed
    );
    let result = experiment::run(&config)?;
    write_outputs(cli, &result)
}

fn write_outputs(cli: &Cli, result: &ExperimentResult) -> Result<()> {
    let files = experiment::emit_reports(result, &cli.out_dir)?;
    info!("wrote {} files to {}", files.len(), cli.out_dir.display());
    if !cli.quiet {
        println!("model,label,train_mean_rmse,test_mean_rmse");
        for (i, m) in result.models.iter().enumerate() {
            println!(
                "{},{},{},{}",
                i + 1,
                m.label,
                m.train.mean_rmse(),
                m.test.mean_rmse()
            );
        }
    }
    Ok(())
}

fn run_repeated(cli: &Cli, config: ExperimentConfig, repeats: usize) -> Result<()> {
    let config = apply_seed(cli, config);
    let summary = experiment::run_repeated(&config, repeats)?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| io_err(&cli.out_dir, e))?;
    let path = cli.out_dir.join("repeats.csv");
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    experiment::write_repeat_summary(&summary, io::BufWriter::new(file))?;
    info!("wrote {}", path.display());
    if !cli.quiet {
        println!("label,median_train_mean_rmse,median_test_mean_rmse");
        for (i, l) in summary.labels.iter().enumerate() {
            println!(
                "{l},{},{}",
                summary.median_train_mean_rmse(i),
                summary.median_test_mean_rmse(i)
            );
        }
    }
    Ok(())
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
