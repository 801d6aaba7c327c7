use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use bnnuq::dataio::CsvSchema;
use bnnuq::harness::{
    evaluate_stage, generate_data, ood_report_stage, predict_file, predict_splits, run_experiment, train_models,
    verify_bounds_stage, ExperimentConfig, Layout,
};

#[derive(Parser)]
#[command(name = "bnnuq", version, about = "Bayesian neural network uncertainty experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage that reads the experiment configuration.
#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `samples` (posterior draws T).
    #[arg(long)]
    samples: Option<usize>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(t) = self.samples {
            cfg.samples = t;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where report stages read predictions and write their output.
#[derive(Args, Clone)]
struct ReportArgs {
    /// Prediction CSVs; defaults to `<output-dir>/predictions.csv`.
    #[arg(long, short)]
    predictions: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

impl ReportArgs {
    fn resolve(&self) -> anyhow::Result<(ExperimentConfig, Vec<PathBuf>)> {
        let cfg = self.common.load()?;
        let files = if self.predictions.is_empty() {
            vec![Layout::new(&cfg.output_dir).predictions()]
        } else {
            self.predictions.clone()
        };
        Ok((cfg, files))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the raw train/test CSVs (synthetic or split from a CSV source).
    GenerateData(Common),
    /// Fit preprocessing, the BNN, the deterministic network and the GBDT.
    Train(Common),
    /// Score the test split and the out-of-domain subgroup, or an external CSV.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Raw CSV to score instead of the experiment splits.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Model file; defaults to `<output-dir>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Destination for `--input` predictions.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the variance-based loss bounds on every prediction.
    VerifyBounds(ReportArgs),
    /// Classification, risk-coverage and error-detection metrics.
    Evaluate(ReportArgs),
    /// Out-of-domain uncertainty comparison and detection table.
    OodReport(ReportArgs),
    /// All six stages in order.
    Run(Common),
    /// Print the effective configuration as TOML.
    ShowConfig(Common),
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenerateData(c) => generate_data(&c.load()?)?,
        Command::Train(c) => {
            let record = train_models(&c.load()?)?;
            println!(
                "trained on {} records; final negative ELBO {:.4}",
                record.n_train,
                record.bnn.elbo.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Predict {
            common,
            input,
            model,
            output,
        } => {
            let cfg = common.load()?;
            match input {
                Some(input) => {
                    let layout = Layout::new(&cfg.output_dir);
                    let model = model.unwrap_or_else(|| layout.model());
                    let output = output.unwrap_or_else(|| layout.root.join("external_predictions.csv"));
                    let rows = predict_file(&model, &input, &CsvSchema::default(), &output, cfg.samples, cfg.seed)?;
                    println!("wrote {} predictions to {}", rows.len(), output.display());
                }
                None => {
                    let rows = predict_splits(&cfg)?;
                    println!("wrote {} predictions", rows.len());
                }
            }
        }
        Command::VerifyBounds(args) => {
            let (cfg, files) = args.resolve()?;
            let file = verify_bounds_stage(&files, &cfg.output_dir)?;
            println!(
                "{} predictions, {} bound violations, worst margin {:?}",
                file.report.total, file.report.violation_count, file.report.worst_margin
            );
        }
        Command::Evaluate(args) => {
            let (cfg, files) = args.resolve()?;
            let r = evaluate_stage(&files, &cfg.output_dir, cfg.quantile)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::OodReport(args) => {
            let (cfg, files) = args.resolve()?;
            let r = ood_report_stage(&files, &cfg.output_dir)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Run(c) => {
            let out = run_experiment(&c.load()?)?;
            println!("experiment complete: {}", out.dir.display());
        }
        Command::ShowConfig(c) => print!("{}", c.load()?.to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
