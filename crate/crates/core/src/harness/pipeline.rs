use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::artifact::{MaskedFeature, ModelArtifact, FORMAT_VERSION};
use super::config::{DataSource, ExperimentConfig};
use super::predictions::{read_prediction_files, write_predictions, PredictionRow, SPLIT_OOD, SPLIT_TEST};
use super::reports::{self, BoundsFile, EvaluationReport, OodReport, TrainingRecord};
use crate::baselines::{predict_gbdt, train_gbdt};
use crate::dataio::{generate_synthetic, load_csv, make_ood_holdout, write_csv, CsvSchema, Dataset, Preprocessor};
use crate::error::{Error, Result};
use crate::inference::{predict, PredictionSummary};
use crate::ndcore::Matrix;
use crate::network::{BnnModel, DeterministicModel, NetworkSpec};
use crate::rng::{stream, Stream};
use crate::training::{train, train_deterministic};

/// File locations inside an experiment directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn raw_train(&self) -> PathBuf {
        self.root.join("data").join("train.csv")
    }

    pub fn raw_test(&self) -> PathBuf {
        self.root.join("data").join("test.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn training(&self) -> PathBuf {
        self.root.join("training.json")
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }

    pub fn bounds_report(&self) -> PathBuf {
        self.root.join("bounds_report.json")
    }

    pub fn bounds_csv(&self) -> PathBuf {
        self.root.join("bounds.csv")
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation.json")
    }

    pub fn ood_report(&self) -> PathBuf {
        self.root.join("ood_report.json")
    }

    pub fn curves(&self) -> PathBuf {
        self.root.join("curves")
    }

    pub fn status(&self) -> PathBuf {
        self.root.join("status.json")
    }
}

fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            path: path.to_path_buf(),
            hint: format!(" (run `{hint}` first)"),
        })
    }
}

fn raw_schema() -> CsvSchema {
    CsvSchema::default()
}

/// Writes `data/train.csv` (in-domain training records plus the subgroup)
/// and `data/test.csv` (in-domain test records).
pub fn generate_data(cfg: &ExperimentConfig) -> Result<()> {
    let cfg = cfg.resolved();
    let layout = Layout::new(&cfg.output_dir);
    std::fs::create_dir_all(layout.root.join("data"))?;
    let (train, test) = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let data = generate_synthetic(spec)?;
            (data.train.concat(&data.ood)?, data.test)
        }
        DataSource::Csv(src) => {
            require(&src.path, "nothing; the configured CSV")?;
            let all = load_csv(&src.path, &src.schema)?;
            let (mut inside, outside): (Vec<usize>, Vec<usize>) =
                (0..all.len()).partition(|&i| all.groups[i] != cfg.ood_group);
            inside.shuffle(&mut stream(cfg.seed, Stream::Split));
            let n_test = (src.test_fraction * inside.len() as f64).round() as usize;
            let (test_idx, train_idx) = inside.split_at(n_test);
            let mut train_idx = train_idx.to_vec();
            let mut test_idx = test_idx.to_vec();
            train_idx.sort_unstable();
            test_idx.sort_unstable();
            train_idx.extend(outside);
            (all.subset(&train_idx), all.subset(&test_idx))
        }
    };
    write_csv(&train, layout.raw_train())?;
    write_csv(&test, layout.raw_test())?;
    log::info!("wrote {} training and {} test records", train.len(), test.len());
    Ok(())
}

fn split_groups(ds: &Dataset, group: &str) -> (Dataset, Dataset) {
    let (outside, inside): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.groups[i] == group);
    (ds.subset(&inside), ds.subset(&outside))
}

fn apply_mask(ds: &mut Dataset, mask: &[MaskedFeature]) {
    for m in mask {
        for i in 0..ds.len() {
            ds.features.set(i, m.index, m.value);
        }
    }
}

/// Fits preprocessing, the BNN, the deterministic network and the GBDT;
/// writes `model.json` and `training.json`.
pub fn train_models(cfg: &ExperimentConfig) -> Result<TrainingRecord> {
    let cfg = cfg.resolved();
    let digest = cfg.digest()?;
    let layout = Layout::new(&cfg.output_dir);
    require(&layout.raw_train(), "generate-data")?;
    let raw = load_csv(layout.raw_train(), &raw_schema())?;
    let (inside_raw, outside_raw) = split_groups(&raw, &cfg.ood_group);

    let preprocessor = Preprocessor::fit(&inside_raw, &cfg.preprocess)?;
    let inside = preprocessor.transform(&inside_raw)?;
    let outside = preprocessor.transform(&outside_raw)?;
    let masked_names = cfg.masked();
    let (train_all, ood) = make_ood_holdout(&inside.dataset.concat(&outside.dataset)?, &cfg.ood_group, &masked_names)?;
    let masked_features = masked_names
        .iter()
        .map(|name| {
            let index = train_all.feature_index(name).unwrap_or_default();
            let column = (0..train_all.len()).map(|i| train_all.features.get(i, index));
            MaskedFeature {
                name: name.clone(),
                index,
                value: column.sum::<f64>() / train_all.len() as f64,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..train_all.len()).collect();
    order.shuffle(&mut stream(cfg.seed, Stream::Split));
    let n_val = (cfg.validation_fraction * train_all.len() as f64).round() as usize;
    let (mut val_idx, mut fit_idx) = (order[..n_val].to_vec(), order[n_val..].to_vec());
    val_idx.sort_unstable();
    fit_idx.sort_unstable();
    let fit = train_all.subset(&fit_idx);
    let validation = (n_val > 0).then(|| train_all.subset(&val_idx));

    let spec = NetworkSpec::new(fit.n_features(), cfg.network.hidden.clone())?;
    log::info!(
        "training BNN on {} records ({} parameters)",
        fit.len(),
        spec.param_count() * 2
    );
    let (bnn, bnn_history) = train(
        &fit,
        BnnModel::init(spec.clone(), cfg.prior, cfg.seed)?,
        &cfg.train,
        validation.as_ref(),
    )?;
    log::info!("training deterministic network");
    let (det, det_history) = train_deterministic(
        &fit,
        DeterministicModel::init(spec, cfg.seed)?,
        &cfg.train,
        validation.as_ref(),
    )?;
    log::info!("training GBDT");
    let gbdt = train_gbdt(&fit, &cfg.gbdt)?;

    std::fs::create_dir_all(&layout.root)?;
    ModelArtifact {
        format_version: FORMAT_VERSION,
        config_digest: digest.clone(),
        seed: cfg.seed,
        train_config: cfg.train.clone(),
        bnn,
        deterministic: det,
        gbdt,
        preprocessor,
        ood_group: cfg.ood_group.clone(),
        masked_features,
    }
    .save(layout.model())?;
    let record = TrainingRecord {
        config_digest: digest,
        n_train: fit.len(),
        n_validation: n_val,
        n_ood: ood.len(),
        removed_outliers: inside.removed.len() + outside.removed.len(),
        bnn: bnn_history,
        deterministic: det_history,
    };
    write_json(&record, layout.training())?;
    Ok(record)
}

/// Scores `x` with all three models. The same `samples` posterior draws
/// are shared by every row.
pub fn score(
    artifact: &ModelArtifact,
    x: &Matrix,
    samples: usize,
    seed: u64,
) -> Result<(Vec<PredictionSummary>, Vec<f64>, Vec<f64>)> {
    let bnn = predict(&artifact.bnn, x, samples, seed)?;
    let det = artifact.deterministic.forward_det(x)?;
    let gbdt = predict_gbdt(&artifact.gbdt, x)?;
    Ok((bnn, det, gbdt))
}

fn rows_for(
    ds: &Dataset,
    split: &str,
    summaries: &[PredictionSummary],
    det: &[f64],
    gbdt: &[f64],
    digest: &str,
) -> Vec<PredictionRow> {
    (0..ds.len())
        .map(|i| PredictionRow {
            record_id: ds.ids[i].clone(),
            split: split.to_string(),
            label: ds.labels[i],
            mean: summaries[i].mean,
            mean_complement: summaries[i].mean_complement,
            variance: summaries[i].variance,
            std: summaries[i].std(),
            samples: summaries[i].samples,
            det_prob: det[i],
            gbdt_prob: gbdt[i],
            config_digest: digest.to_string(),
        })
        .collect()
}

/// Predicts the test split and the masked out-of-domain subgroup; writes
/// `predictions.csv`.
pub fn predict_splits(cfg: &ExperimentConfig) -> Result<Vec<PredictionRow>> {
    let cfg = cfg.resolved();
    let layout = Layout::new(&cfg.output_dir);
    let artifact = ModelArtifact::load(layout.model())?;
    let digest = cfg.digest()?;
    if artifact.config_digest != digest {
        return Err(Error::Invariant(format!(
            "model was trained under configuration {} but the current one is {digest}; retrain first",
            artifact.config_digest
        )));
    }
    require(&layout.raw_test(), "generate-data")?;
    let test = artifact
        .preprocessor
        .transform(&load_csv(layout.raw_test(), &raw_schema())?)?
        .dataset;
    let (_, outside_raw) = split_groups(&load_csv(layout.raw_train(), &raw_schema())?, &artifact.ood_group);
    let mut ood = artifact.preprocessor.transform(&outside_raw)?.dataset;
    apply_mask(&mut ood, &artifact.masked_features);

    let pooled = test.concat(&ood)?;
    let (bnn, det, gbdt) = score(&artifact, &pooled.features, cfg.samples, cfg.seed)?;
    let n = test.len();
    let mut rows = rows_for(&test, SPLIT_TEST, &bnn[..n], &det[..n], &gbdt[..n], &digest);
    rows.extend(rows_for(&ood, SPLIT_OOD, &bnn[n..], &det[n..], &gbdt[n..], &digest));
    write_predictions(&rows, layout.predictions())?;
    Ok(rows)
}

/// Scores an arbitrary raw CSV with a saved model.
pub fn predict_file(
    model: &Path,
    input: &Path,
    schema: &CsvSchema,
    output: &Path,
    samples: usize,
    seed: u64,
) -> Result<Vec<PredictionRow>> {
    let artifact = ModelArtifact::load(model)?;
    require(input, "nothing; the input CSV")?;
    let processed = artifact.preprocessor.transform(&load_csv(input, schema)?)?;
    if !processed.removed.is_empty() {
        log::warn!(
            "{} records fall outside the outlier fence and were skipped",
            processed.removed.len()
        );
    }
    let ds = processed.dataset;
    let (bnn, det, gbdt) = score(&artifact, &ds.features, samples, seed)?;
    let rows = rows_for(&ds, "external", &bnn, &det, &gbdt, &artifact.config_digest);
    write_predictions(&rows, output)?;
    Ok(rows)
}

/// Checks the loss bounds for every prediction; writes the JSON report and
/// per-record CSV to `out_dir`.
pub fn verify_bounds_stage(predictions: &[PathBuf], out_dir: &Path) -> Result<BoundsFile> {
    let (rows, digest) = read_prediction_files(predictions)?;
    let file = reports::bounds_file(&rows, &digest)?;
    std::fs::create_dir_all(out_dir)?;
    let layout = Layout::new(out_dir);
    write_json(&file, layout.bounds_report())?;
    let ids: Vec<String> = rows.iter().map(|r| r.record_id.clone()).collect();
    let csv_file = std::fs::File::create(layout.bounds_csv())?;
    file.report
        .write_csv_to(std::io::BufWriter::new(csv_file), Some(&ids))?;
    if !file.report.holds() {
        return Err(Error::Invariant(format!(
            "{} of {} predictions violate the loss bounds",
            file.report.violation_count, file.report.total
        )));
    }
    Ok(file)
}

/// Classification, risk-coverage and error-detection metrics on the test
/// split; writes `evaluation.json` and the curve CSVs.
pub fn evaluate_stage(predictions: &[PathBuf], out_dir: &Path, quantile: f64) -> Result<EvaluationReport> {
    let (rows, digest) = read_prediction_files(predictions)?;
    let (report, curves) = reports::evaluation(&rows, &digest, quantile)?;
    let layout = Layout::new(out_dir);
    std::fs::create_dir_all(layout.curves())?;
    write_json(&report, layout.evaluation())?;
    let open = |name: &str| -> Result<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(std::fs::File::create(
            layout.curves().join(name),
        )?))
    };
    curves
        .bnn
        .write_csv_to(open("risk_coverage_bnn.csv")?, Some((&curves.means, &curves.labels)))?;
    curves.gbdt.write_csv_to(open("risk_coverage_gbdt.csv")?, None)?;
    let mut w = csv::Writer::from_writer(open("scatter.csv")?);
    w.write_record(["record_id", "split", "label", "mean", "std"])?;
    for r in &rows {
        w.write_record([
            r.record_id.clone(),
            r.split.clone(),
            r.label.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(report)
}

/// In-domain versus out-of-domain uncertainty; writes `ood_report.json`.
pub fn ood_report_stage(predictions: &[PathBuf], out_dir: &Path) -> Result<OodReport> {
    let (rows, digest) = read_prediction_files(predictions)?;
    let report = reports::ood_report(&rows, &digest)?;
    std::fs::create_dir_all(out_dir)?;
    write_json(&report, Layout::new(out_dir).ood_report())?;
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub complete: bool,
    pub config_digest: String,
    pub completed_stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub training: TrainingRecord,
    pub bounds: BoundsFile,
    pub evaluation: EvaluationReport,
    pub ood: OodReport,
}

pub const STAGES: [&str; 6] = [
    "generate-data",
    "train",
    "predict",
    "verify-bounds",
    "evaluate",
    "ood-report",
];

/// The six stages chained. `status.json` records progress; on failure it
/// names the stage and the run is marked incomplete.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    std::fs::create_dir_all(&layout.root)?;
    let mut status = Status {
        config_digest: cfg.digest()?,
        ..Status::default()
    };
    write_json(&status, layout.status())?;
    let predictions = vec![layout.predictions()];

    macro_rules! stage {
        ($name:expr, $body:expr) => {{
            log::info!("stage {}", $name);
            match $body {
                Ok(v) => {
                    status.completed_stages.push($name.to_string());
                    write_json(&status, layout.status())?;
                    v
                }
                Err(e) => {
                    status.failed_stage = Some($name.to_string());
                    status.error = Some(e.to_string());
                    write_json(&status, layout.status())?;
                    return Err(Error::Stage {
                        stage: $name,
                        source: Box::new(e),
                    });
                }
            }
        }};
    }

    stage!(STAGES[0], generate_data(cfg));
    let training = stage!(STAGES[1], train_models(cfg));
    stage!(STAGES[2], predict_splits(cfg));
    let bounds = stage!(STAGES[3], verify_bounds_stage(&predictions, &layout.root));
    let evaluation = stage!(STAGES[4], evaluate_stage(&predictions, &layout.root, cfg.quantile));
    let ood = stage!(STAGES[5], ood_report_stage(&predictions, &layout.root));
    status.complete = true;
    write_json(&status, layout.status())?;
    Ok(ExperimentOutcome {
        dir: layout.root,
        training,
        bounds,
        evaluation,
        ood,
    })
}
