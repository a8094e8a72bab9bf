use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use somlab::config::{preset, ExperimentConfig, PRESETS};
use somlab::experiment::{self, Data, GridSearchSpec, SweepAxis};
use somlab::formats::{FeatureDump, FeatureMetadata, GridCheckpoint, LabelTable};
use somlab::{Error, Result};
use somlab_core::labeling::{confusion, evaluate, label_neurons};
use somlab_core::{dataset, Split, SubsetSpec};

#[derive(Parser)]
#[command(name = "somlab", version, about = "Self-organizing map experiments on MNIST features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config; see `somlab presets`.
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of repetitions.
    #[arg(long)]
    reps: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?,
            (None, None) => return Err(Error::Config("pass --config <file> or --preset <name>".into())),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(r) = self.reps {
            cfg.repetitions = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the extractor and SOMs, then report test accuracy.
    Run(Common),
    /// Run one experiment per value of a config axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// feature_maps, som_neurons or label_fraction.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Search SOM hyper-parameters on a validation slice of the training set.
    GridSearch {
        #[command(flatten)]
        common: Common,
        /// Search spec (JSON): candidate lists per hyper-parameter.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Label the neurons of a saved grid from a new labeled subset.
    Label {
        #[arg(long)]
        grid: PathBuf,
        /// Training feature dump written by `dump-features`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stratified: bool,
        /// Output label table (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved grid and label table on a feature dump.
    Eval {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Test feature dump written by `dump-features`.
        #[arg(long)]
        features: PathBuf,
        /// Optional JSON file for accuracy and confusion matrix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the extractor and write the scaled SOM inputs of both splits.
    DumpFeatures(Common),
    /// Print the effective config.
    ShowConfig(Common),
    /// List built-in presets.
    Presets,
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.output_dir
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs an output directory (--out)".into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let report = experiment::run_experiment(&cfg)?;
            println!(
                "{}: accuracy {:.4} +- {:.4} over {} repetitions",
                cfg.name,
                report.mean_accuracy,
                report.std_accuracy,
                report.repetitions.len()
            );
            if cfg.output_dir.is_none() {
                println!("{}", report.to_json());
            }
        }
        Command::Sweep { common, axis, values } => {
            let cfg = common.resolve()?;
            let report = experiment::run_sweep(&cfg, axis, &values)?;
            print!("{}", report.to_csv()?);
        }
        Command::GridSearch { common, grid } => {
            let cfg = common.resolve()?;
            let text = std::fs::read_to_string(&grid).map_err(|source| Error::Io { path: grid.clone(), source })?;
            let spec: GridSearchSpec = serde_json::from_str(&text)?;
            let report = experiment::grid_search_som(&cfg, &spec)?;
            print!("{}", report.to_csv()?);
            println!("best {:?} accuracy {:.4}", report.best, report.best_accuracy);
        }
        Command::Label {
            grid,
            features,
            fraction,
            seed: subset_seed,
            stratified,
            out,
        } => {
            let ckpt = GridCheckpoint::load(&grid)?;
            let dump = FeatureDump::load(&features)?;
            let spec = SubsetSpec {
                fraction,
                seed: subset_seed,
                stratified,
            };
            let idx = dataset::subset_indices(dump.features.labels(), &spec).map_err(stage("label subset"))?;
            let labels = label_neurons(&ckpt.grid, &dump.features.select(&idx), ckpt.hyper.alpha).map_err(stage("labeling"))?;
            LabelTable::new(&labels, fraction, subset_seed).save(&out)?;
            let named = labels.iter().filter(|l| l.class().is_some()).count();
            println!("labeled {named}/{} neurons from {} samples", labels.len(), idx.len());
        }
        Command::Eval {
            grid,
            labels,
            features,
            out,
        } => {
            let ckpt = GridCheckpoint::load(&grid)?;
            let table = LabelTable::load(&labels)?;
            let dump = FeatureDump::load(&features)?;
            let neuron_labels = table.neuron_labels();
            let accuracy = evaluate(&ckpt.grid, &neuron_labels, &dump.features).map_err(stage("evaluation"))?;
            let matrix = confusion(&ckpt.grid, &neuron_labels, &dump.features).map_err(stage("evaluation"))?;
            println!("accuracy {accuracy:.4} on {} samples", dump.features.len());
            if let Some(path) = out {
                let body = serde_json::json!({ "accuracy": accuracy, "samples": dump.features.len(), "confusion": matrix });
                std::fs::write(&path, serde_json::to_string_pretty(&body)?).map_err(|source| Error::Io { path, source })?;
            }
        }
        Command::DumpFeatures(common) => {
            let cfg = common.resolve()?;
            let dir = out_dir(&cfg)?;
            let data = Data::load(&cfg.data)?;
            let prepared = experiment::prepare_features(&cfg, &data)?;
            for (name, features, split) in [("train.feat", &prepared.train, Split::Train), ("test.feat", &prepared.test, Split::Test)] {
                let path = dir.join(name);
                FeatureDump {
                    metadata: FeatureMetadata {
                        extractor: prepared.summary.kind.clone(),
                        topology: prepared.summary.topology.clone(),
                        seed: cfg.seed,
                        split,
                        fingerprint: prepared.summary.fingerprint.clone(),
                    },
                    features: features.clone(),
                }
                .save(&path)?;
                info!("wrote {}", path.display());
            }
            println!(
                "{} features of dimension {} for {} train and {} test images",
                prepared.summary.kind,
                prepared.train.dim(),
                prepared.train.len(),
                prepared.test.len()
            );
        }
        Command::ShowConfig(common) => println!("{}", common.resolve()?.to_json()),
        Command::Presets => {
            for name in PRESETS {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn stage(name: &'static str) -> impl Fn(somlab_core::Error) -> Error {
    move |source| Error::Stage { stage: name, source }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
