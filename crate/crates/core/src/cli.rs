//! Command-line interface.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use driftlens::autoencoder::{load_model, save_model, train_anchor, AutoencoderConfig};
use driftlens::config::Config;
use driftlens::cpm::{run_series, CpmDetector};
use driftlens::dataset::{upsample, LengthDistribution, UpsampleSpec};
use driftlens::embedding::io::save_requests;
use driftlens::embedding::{generate_synthetic_corpus, load_embeddings, EmbeddedRequest};
use driftlens::harness::output::{read_outliers, write_json, write_outliers, write_run_artifacts, write_series_csv, write_suite};
use driftlens::harness::{
    run_suite, simulate_run, EvaluationReport, GroundTruth, ScenarioKind, ScorerKind, SeriesPoint,
};
use driftlens::interpret::interpret;
use driftlens::stream::{batchify, SeriesSource, StreamMonitor};
use driftlens::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "driftlens", version, about = "Concept-drift detection for streams of embedded text requests")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Corpus JSONL (`id`, `text`, `intent`).
    #[arg(long, requires = "embeddings")]
    corpus: Option<PathBuf>,
    /// Embedding rows, binary or JSONL, aligned with the corpus.
    #[arg(long, requires = "corpus")]
    embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long)]
    kind: Option<ScenarioKind>,
    #[arg(long)]
    scorer: Option<ScorerKind>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus and its embeddings.
    Synth,
    /// Upsample a corpus to a target request-length distribution.
    BuildDataset {
        #[command(flatten)]
        data: DataArgs,
        /// Output size; the configured target size by default.
        #[arg(long)]
        size: Option<usize>,
        /// Length distribution JSON; the bundled reference by default.
        #[arg(long)]
        lengths: Option<PathBuf>,
    },
    /// Train the anchor autoencoder on a corpus.
    TrainAnchor {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a corpus as a stream of batches against a trained anchor model.
    Stream {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run one drift scenario end to end.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Run index within the suite seeded by `--seed`.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Run a suite of seeded scenarios and aggregate the metrics.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Cluster and name an outlier file.
    Interpret {
        #[arg(long)]
        outliers: PathBuf,
        /// Comma-separated ground-truth drift intents, enabling recall.
        #[arg(long, value_delimiter = ',')]
        drift_intents: Vec<String>,
        /// Output file; `<out-dir>/clusters.json` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the change-point detector on a CSV column.
    Detect {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value = "s_t")]
        column: String,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_data(config: &Config, data: &DataArgs) -> Result<Vec<EmbeddedRequest>> {
    let paths = data
        .corpus
        .as_ref()
        .zip(data.embeddings.as_ref())
        .or(config.data.corpus.as_ref().zip(config.data.embeddings.as_ref()));
    match paths {
        Some((c, e)) => load_embeddings(c, e),
        None => generate_synthetic_corpus(&config.data.synthetic),
    }
}

fn require_data(config: &Config, data: &DataArgs) -> Result<Vec<EmbeddedRequest>> {
    if data.corpus.is_none() && config.data.corpus.is_none() {
        return Err(Error::InvalidConfig("--corpus and --embeddings are required".into()));
    }
    load_data(config, data)
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn apply_scenario(config: &mut Config, args: &ScenarioArgs) {
    if let Some(k) = args.kind {
        config.scenario.kind = k;
    }
    if let Some(s) = args.scorer {
        config.scorer = s;
    }
}

fn read_series_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::EmptyInput("series file"))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::InvalidConfig(format!("no column {column:?} in {}", path.display())))?;
    lines
        .enumerate()
        .map(|(index, line)| {
            line.split(',')
                .nth(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format {
                    kind: "series",
                    index: index + 1,
                    message: format!("missing or non-numeric {column}"),
                })
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    let out = &cli.out_dir;
    mkdir(out)?;
    match &cli.command {
        Command::Synth => {
            let mut spec = config.data.synthetic.clone();
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let corpus = generate_synthetic_corpus(&spec)?;
            save_requests(&out.join("corpus.jsonl"), &out.join("embeddings.bin"), &corpus)?;
            log::info!("wrote {} requests to {}", corpus.len(), out.display());
        }
        Command::BuildDataset { data, size, lengths } => {
            let corpus = require_data(&config, data)?;
            let distribution = match lengths.as_ref().or(config.dataset.lengths.as_ref()) {
                Some(p) => LengthDistribution::load(p)?,
                None => LengthDistribution::reference(),
            };
            let spec = UpsampleSpec {
                target_size: size.unwrap_or(config.dataset.target_size),
                distribution,
                seed: config.seed,
                empty_stratum: config.dataset.empty_stratum,
            };
            let built = upsample(&corpus, &spec)?;
            save_requests(&out.join("corpus.jsonl"), &out.join("embeddings.bin"), &built)?;
        }
        Command::TrainAnchor { data } => {
            let corpus = require_data(&config, data)?;
            let vectors: Vec<_> = corpus.iter().map(|r| r.embedding.clone()).collect();
            let ae = AutoencoderConfig {
                input_dim: vectors.first().map_or(0, |v| v.dim()),
                seed: config.seed,
                ..config.autoencoder.clone()
            };
            let model = train_anchor(&vectors, &ae)?;
            save_model(&model, &out.join("model.bin"))?;
            if let Some(last) = model.training_loss_trace().last() {
                log::info!("final training loss {last}");
            }
        }
        Command::Stream { model, data } => {
            let model = load_model(model)?;
            let corpus = require_data(&config, data)?;
            let batches = batchify(&corpus, config.detector.batch_size);
            let mut monitor = StreamMonitor::new(SeriesSource::Instance(&model), config.detector.clone())?;
            let mut cpm = CpmDetector::new(config.cpm.clone())?;
            let mut reports = Vec::with_capacity(batches.len());
            for b in &batches {
                let r = monitor.process(b)?.clone();
                if !cpm.is_detected() {
                    cpm.step(b.t, r.s)?;
                }
                reports.push(r);
            }
            let lines: Vec<String> = reports
                .iter()
                .map(serde_json::to_string)
                .collect::<std::result::Result<_, _>>()?;
            let path = out.join("batches.jsonl");
            std::fs::write(&path, lines.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
            let series: Vec<SeriesPoint> = reports
                .iter()
                .map(|r| SeriesPoint {
                    t: r.t,
                    s: r.s,
                    true_drift_fraction: f64::NAN,
                })
                .collect();
            write_series_csv(&out.join("series.csv"), &series)?;
            write_outliers(&out.join("outliers.jsonl"), monitor.pool().entries())?;
            write_json(&out.join("changepoint.json"), cpm.report())?;
            println!("{}", serde_json::to_string(cpm.report())?);
        }
        Command::Simulate { data, scenario, run } => {
            apply_scenario(&mut config, scenario);
            config.validate()?;
            let corpus = load_data(&config, data)?;
            let artifacts = simulate_run(&corpus, &config.suite_spec(), &config.pipeline(), *run)?;
            write_run_artifacts(out, &artifacts)?;
            let report = EvaluationReport::new(vec![artifacts.report]);
            write_json(&out.join("report.json"), &report)?;
            println!("{}", serde_json::to_string(&report.aggregate)?);
        }
        Command::Evaluate { data, scenario, runs } => {
            apply_scenario(&mut config, scenario);
            if let Some(n) = runs {
                config.suite.n_runs = *n;
            }
            config.validate()?;
            let corpus = load_data(&config, data)?;
            let all = run_suite(&corpus, &config.suite_spec(), &config.pipeline())?;
            let report = write_suite(out, &all)?;
            println!("{}", serde_json::to_string(&report.aggregate)?);
        }
        Command::Interpret {
            outliers,
            drift_intents,
            out: target,
        } => {
            let entries = read_outliers(outliers)?;
            let drift: BTreeSet<String> = drift_intents.iter().filter(|s| !s.is_empty()).cloned().collect();
            let report = if entries.is_empty() {
                let truth = GroundTruth {
                    t_s: 1,
                    drift_intents: drift,
                    drift_counts: vec![],
                    batch_size: 1,
                };
                driftlens::harness::interpret_window(&[], &config.clustering, &truth)?
            } else {
                let requests: Vec<_> = entries.into_iter().map(|e| e.request).collect();
                interpret(&requests, &config.clustering, (!drift.is_empty()).then_some(&drift))?
            };
            let path = target.clone().unwrap_or_else(|| out.join("clusters.json"));
            write_json(&path, &report.summary())?;
        }
        Command::Detect { series, column } => {
            let values = read_series_column(series, column)?;
            let report = run_series(&values, &config.cpm)?;
            write_json(&out.join("changepoint.json"), &report)?;
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(())
}
