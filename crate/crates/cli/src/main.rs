//! `cvsslens` command line: ingest, split, build-vocab, train, evaluate,
//! predict, explain, aggregate.

mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cvsslens::model::{ModelCheckpoint, Preset};
use cvsslens::nvd::{self, DatasetSplit, SplitManifest, VulnRecord};
use cvsslens::pipeline::{self, checkpoint_path, ClassifierSet, PipelineConfig};
use cvsslens::saliency::{self, AggregationConfig};
use cvsslens::textprep::Vocabulary;
use cvsslens::train::{self, OptimizerKind, TrainConfig};
use cvsslens::{Execution, Metric};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cvsslens", version, about = "Predict and explain CVSS v3.1 base vectors from vulnerability descriptions")]
struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true, env = "CVSSLENS_CONFIG")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize NVD JSON 1.1 feeds into a JSONL dataset.
    Ingest {
        /// Feed files or URLs, plain or gzipped.
        #[arg(long, num_args = 1.., required = true)]
        feeds: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Publication years to keep (default 2018,2019,2020).
        #[arg(long, value_delimiter = ',', conflicts_with = "all_years")]
        years: Option<Vec<u16>>,
        #[arg(long)]
        all_years: bool,
    },
    /// Seeded train/test split of a dataset.
    Split {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the shared vocabulary from the training descriptions.
    BuildVocab {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one metric classifier, or all eight.
    Train {
        /// AV, AC, PR, UI, S, C, I, A or `all`.
        #[arg(long)]
        metric: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, alias = "checkpoints")]
        checkpoints_dir: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        epochs_frozen: usize,
        #[arg(long, default_value_t = 3)]
        epochs_joint: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
        optimizer: OptimizerArg,
        #[arg(long)]
        seq_len: Option<usize>,
    },
    /// Evaluate all eight classifiers on the test split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Predict a vector, score and rating for a description.
    Predict {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Attach a saliency report per metric.
        #[arg(long)]
        explain: bool,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Gradient×Input explanation of one metric's prediction.
    Explain {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        k: Option<usize>,
        /// Also write an HTML rendering to the reports directory.
        #[arg(long)]
        html: bool,
    },
    /// Most frequent top-k tokens and bigrams per predicted class.
    Aggregate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, alias = "checkpoints")]
    checkpoints_dir: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    #[arg(long)]
    text: Option<String>,
    /// Look the description up in the local dataset.
    #[arg(long)]
    cve: Option<String>,
    #[arg(long, requires = "cve")]
    dataset: Option<PathBuf>,
}

struct Ctx {
    cfg: PipelineConfig,
    format: Format,
    exec: Execution,
}

impl Ctx {
    fn emit(&self, text: &str, structured: &str) -> Result<(), CliError> {
        let mut out = std::io::stdout().lock();
        match self.format {
            Format::Text => out.write_all(text.as_bytes())?,
            Format::Structured => out.write_all(structured.as_bytes())?,
        }
        out.flush()?;
        Ok(())
    }

    fn report(&self, kind: &str, ext: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = pipeline::write_report(&self.cfg.reports_dir, kind, ext, bytes)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_split(dataset: &Path, manifest: &Path) -> Result<(Vec<VulnRecord>, DatasetSplit), CliError> {
    let records = nvd::read_dataset(dataset)?;
    let manifest = SplitManifest::load(manifest)?;
    if manifest.dataset_digest != nvd::dataset_digest(&records) {
        return Err(CliError::data(format!(
            "manifest was made for a different dataset than {}",
            dataset.display()
        )));
    }
    let split = nvd::apply_manifest(&records, &manifest)?;
    Ok((records, split))
}

fn data_paths<'a>(ctx: &'a Ctx, d: &'a DataArgs) -> (&'a Path, &'a Path) {
    (
        d.dataset.as_deref().unwrap_or(&ctx.cfg.dataset),
        d.manifest.as_deref().unwrap_or(&ctx.cfg.manifest),
    )
}

fn load_models(ctx: &Ctx, m: &ModelArgs) -> Result<(ClassifierSet<ModelCheckpoint>, Vocabulary), CliError> {
    let dir = m.checkpoints_dir.as_deref().unwrap_or(&ctx.cfg.checkpoints_dir);
    let vocab = Vocabulary::load(m.vocab.as_deref().unwrap_or(&ctx.cfg.vocab))?;
    let set = ClassifierSet::load_dir(dir)?;
    set.check_vocab(&vocab)?;
    Ok((set, vocab))
}

fn resolve_input(ctx: &Ctx, input: &InputArgs) -> Result<(Option<String>, String), CliError> {
    if let Some(t) = &input.text {
        return Ok((None, t.clone()));
    }
    let id = input.cve.as_deref().expect("clap requires text or cve");
    let records = nvd::read_dataset(input.dataset.as_deref().unwrap_or(&ctx.cfg.dataset))?;
    let r = records
        .into_iter()
        .find(|r| r.cve_id == id)
        .ok_or_else(|| CliError::data(format!("{id} is not in the dataset")))?;
    Ok((Some(r.cve_id), r.description))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let ctx = Ctx {
        cfg,
        format: cli.format,
        exec,
    };

    match cli.command {
        Command::Ingest {
            feeds,
            out,
            years,
            all_years,
        } => {
            let mut raw = Vec::new();
            for f in &feeds {
                let entries = nvd::load_feed(f)?;
                log::info!("{f}: {} entries", entries.len());
                raw.extend(entries);
            }
            let years = years.unwrap_or_else(|| nvd::DEFAULT_YEARS.to_vec());
            let norm = nvd::normalize(&raw, if all_years { None } else { Some(&years) });
            let out = out.unwrap_or(ctx.cfg.dataset.clone());
            nvd::write_dataset(&out, &norm.records)?;
            let flagged = norm.records.iter().filter(|r| !r.flags.is_empty()).count();
            let summary = json!({
                "raw_entries": raw.len(),
                "records": norm.records.len(),
                "flagged": flagged,
                "dropped": norm.dropped,
                "dataset_digest": nvd::dataset_digest(&norm.records),
            });
            ctx.emit(
                &format!(
                    "{} raw entries, {} records ({} flagged)\n",
                    raw.len(),
                    norm.records.len(),
                    flagged
                ),
                &pretty(&summary),
            )
        }
        Command::Split {
            dataset,
            seed,
            fraction,
            out,
        } => {
            let records = nvd::read_dataset(dataset.as_deref().unwrap_or(&ctx.cfg.dataset))?;
            let seed = seed.unwrap_or(ctx.cfg.seed);
            let split = nvd::split(&records, seed, fraction)?;
            split.manifest.save(out.as_deref().unwrap_or(&ctx.cfg.manifest))?;
            let summary = json!({
                "train": split.train.len(),
                "test": split.test.len(),
                "seed": seed,
                "fraction": fraction,
                "manifest_digest": split.manifest_digest(),
            });
            ctx.emit(
                &format!("train {} / test {} (seed {seed})\n", split.train.len(), split.test.len()),
                &pretty(&summary),
            )
        }
        Command::BuildVocab { data, max_size, out } => {
            let (dataset, manifest) = data_paths(&ctx, &data);
            let (_, split) = load_split(dataset, manifest)?;
            let vocab = Vocabulary::build(
                split.train.iter().map(|r| r.description.as_str()),
                max_size.unwrap_or(ctx.cfg.vocab_size),
            )?;
            vocab.save(out.as_deref().unwrap_or(&ctx.cfg.vocab))?;
            ctx.emit(
                &format!("{} tokens, digest {}\n", vocab.len(), vocab.digest()),
                &pretty(&json!({"size": vocab.len(), "digest": vocab.digest()})),
            )
        }
        Command::Train {
            metric,
            data,
            vocab,
            checkpoints_dir,
            preset,
            seed,
            epochs_frozen,
            epochs_joint,
            batch_size,
            learning_rate,
            optimizer,
            seq_len,
        } => {
            let metrics: Vec<Metric> = if metric.eq_ignore_ascii_case("all") {
                Metric::ALL.to_vec()
            } else {
                vec![metric
                    .parse()
                    .map_err(|_| CliError::usage(format!("unknown metric {metric:?}")))?]
            };
            let (dataset, manifest) = data_paths(&ctx, &data);
            let (_, split) = load_split(dataset, manifest)?;
            let vocab = Vocabulary::load(vocab.as_deref().unwrap_or(&ctx.cfg.vocab))?;
            let dir = checkpoints_dir.unwrap_or(ctx.cfg.checkpoints_dir.clone());
            let preset = preset.unwrap_or(ctx.cfg.preset);
            let mut text = String::new();
            let mut structured = String::new();
            for m in metrics {
                let mut tc = TrainConfig::new(m, preset, seed.unwrap_or(ctx.cfg.seed));
                tc.epochs_frozen = epochs_frozen;
                tc.epochs_joint = epochs_joint;
                tc.batch_size = batch_size;
                if let Some(lr) = learning_rate {
                    tc.learning_rate = lr;
                }
                tc.optimizer = match optimizer {
                    OptimizerArg::Adam => OptimizerKind::Adam,
                    OptimizerArg::Sgd => OptimizerKind::Sgd,
                };
                tc.seq_len = seq_len.unwrap_or(ctx.cfg.seq_len);
                tc.manifest_digest = split.manifest_digest();
                let outcome = train::train_metric(&tc, &split.train, &vocab, ctx.exec)?;
                outcome.checkpoint.save(&checkpoint_path(&dir, m))?;
                let log = outcome.log.to_jsonl();
                cvsslens::digest::write_atomic(&dir.join(format!("{}.log.jsonl", m.key())), log.as_bytes())?;
                let last = outcome.log.epochs.last().expect("at least one epoch");
                text.push_str(&format!(
                    "{}: {} epochs, final loss {:.4}, train accuracy {:.4}\n",
                    m.key(),
                    outcome.log.epochs.len(),
                    last.loss,
                    last.accuracy
                ));
                structured.push_str(&log);
            }
            ctx.emit(&text, &structured)
        }
        Command::Evaluate { data, model } => {
            let (dataset, manifest) = data_paths(&ctx, &data);
            let (_, split) = load_split(dataset, manifest)?;
            let (set, vocab) = load_models(&ctx, &model)?;
            let report = train::evaluate(&set, &vocab, &split.test, &split.manifest_digest(), ctx.exec)?;
            let json = report.to_json();
            ctx.report("eval", "json", json.as_bytes())?;
            ctx.emit(&report.to_text(), &json)
        }
        Command::Predict {
            input,
            model,
            explain,
            k,
        } => {
            let (cve_id, text) = resolve_input(&ctx, &input)?;
            let (set, vocab) = load_models(&ctx, &model)?;
            let mut result = pipeline::predict_full(&text, &set, &vocab)?;
            result.cve_id = cve_id.clone();
            if explain {
                let k = k.unwrap_or(ctx.cfg.top_k);
                let mut reports = Vec::with_capacity(8);
                for ckpt in set.iter() {
                    let mut r = saliency::explain(ckpt, Some(ckpt.metric), &text, &vocab, k)?;
                    r.cve_id = cve_id.clone();
                    reports.push(r);
                }
                result.saliency = Some(reports);
            }
            result.check_consistency()?;
            let json = result.to_json();
            ctx.report("prediction", "json", json.as_bytes())?;
            ctx.emit(&result.to_text(), &json)
        }
        Command::Explain {
            input,
            model,
            metric,
            k,
            html,
        } => {
            let (cve_id, text) = resolve_input(&ctx, &input)?;
            let (set, vocab) = load_models(&ctx, &model)?;
            let mut report = saliency::explain(
                set.get(metric),
                Some(metric),
                &text,
                &vocab,
                k.unwrap_or(ctx.cfg.top_k),
            )?;
            report.cve_id = cve_id;
            let json = pretty(&report);
            ctx.report("explain", "json", json.as_bytes())?;
            if html {
                ctx.report("explain", "html", saliency::render_html(&report).as_bytes())?;
            }
            ctx.emit(&saliency::render_text(&report, false), &json)
        }
        Command::Aggregate {
            data,
            model,
            metric,
            threshold,
            k,
        } => {
            let (dataset, manifest) = data_paths(&ctx, &data);
            let (_, split) = load_split(dataset, manifest)?;
            let (set, vocab) = load_models(&ctx, &model)?;
            let agg = AggregationConfig {
                threshold: threshold.unwrap_or(ctx.cfg.confidence_threshold),
                k: k.unwrap_or(ctx.cfg.top_k),
                ..AggregationConfig::default()
            };
            let descriptions: Vec<&str> = split.test.iter().map(|r| r.description.as_str()).collect();
            let table = saliency::aggregate_associations(
                set.get(metric),
                metric,
                &descriptions,
                &vocab,
                &agg,
                &split.manifest_digest(),
                ctx.exec,
            )?;
            let json = table.to_json();
            ctx.report(&format!("associations-{}", metric.key()), "json", json.as_bytes())?;
            ctx.emit(&table.to_text(), &json)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvsslens: {e}");
            e.category.exit_code()
        }
    }
}
