//! Command-line front end. Every subcommand accepts `--config` with an
//! experiment JSON file; flags given on the command line override it.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attnreport::sample_for_analysis;
use crate::corpus::{
    assign_iemocap_names, compute_stats, generate_synthetic, load_corpus, read_native,
    write_native, CorpusFormat, LabelRule, LabelSet, LoadOptions, Split, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_detailed, run_ablation, AblationSpec};
use crate::model::load_checkpoint;
use crate::pipeline::{run_pipeline, write_json, write_reports, ExperimentConfig, RunLock};
use crate::seqbuilder::{
    build_dataset, read_packed, write_packed, ContextMode, PackedHeader, PackedSequence,
};
use crate::tokenizer::Vocab;
use crate::training::{search_peak_lr, train, PackedSplits};

#[derive(Debug, Parser)]
#[command(
    name = "erc",
    version,
    about = "Speaker-aware emotion recognition in conversation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a MELD/IEMOCAP-shaped corpus and write it as native JSON lines.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus as native JSON lines.
    Synth(SynthArgs),
    /// Dialogue and utterance counts per split.
    Stats(StatsArgs),
    /// Tokenizer commands.
    #[command(subcommand)]
    Tokenizer(TokenizerCommand),
    /// Pack every utterance of a corpus into model input sequences.
    Build(BuildArgs),
    /// Fine-tune on packed data and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Search the peak learning rate on a data subsample.
    LrSearch(LrSearchArgs),
    /// Score a checkpoint on one split of packed data.
    Eval(EvalArgs),
    /// Train and score every configuration of an ablation grid.
    Ablate(AblateArgs),
    /// Write attention highlight reports for sampled predictions.
    Inspect(InspectArgs),
    /// Run ingest, tokenizer, build, train, evaluate and inspect.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Subcommand)]
pub enum TokenizerCommand {
    /// Learn a byte-level BPE vocabulary from the training split.
    Train(TokenizerTrainArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::from_file(p),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, visible_alias = "in")]
    pub input: PathBuf,
    /// meld_csv, iemocap_json or native_jsonl.
    #[arg(long, default_value = "native_jsonl")]
    pub format: CorpusFormat,
    /// meld or iemocap; defaults to the format's own set.
    #[arg(long)]
    pub label_set: Option<String>,
    /// Replace actor identities with names from the gendered name pools.
    #[arg(long)]
    pub assign_names: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// SyntheticConfig JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// content_only, speaker_dependent or context_dependent.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub dialogues: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, visible_alias = "in")]
    pub corpus: PathBuf,
    #[arg(long, default_value = "native_jsonl")]
    pub format: CorpusFormat,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TokenizerTrainArgs {
    #[arg(long, visible_alias = "in")]
    pub corpus: PathBuf,
    #[arg(long, visible_alias = "size")]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, visible_alias = "in")]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// none, past, future or both.
    #[arg(long)]
    pub mode: Option<ContextMode>,
    /// Render utterances without the speaker name prefix.
    #[arg(long)]
    pub no_speaker: bool,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Output file, or a directory that receives `packed.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Packed file or a directory containing `packed.jsonl`.
    #[arg(long)]
    pub packed: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct LrSearchArgs {
    #[arg(long)]
    pub packed: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the trial log (JSON); printed otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub packed: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// AblationSpec JSON; defaults to the experiment config's grid.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Dataset name for the table header.
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub packed: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n_correct: usize,
    #[arg(long, default_value_t = 10)]
    pub n_incorrect: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::attnreport::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Replaces the configured seed list with this one seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generate a synthetic corpus with this rule instead of the configured source.
    #[arg(long)]
    pub synthetic: Option<String>,
}

fn parse_rule(s: &str) -> Result<LabelRule> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        Error::InvalidArgument(format!(
            "unknown rule {s:?} (content_only|speaker_dependent|context_dependent)"
        ))
    })
}

fn resolve_packed(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("packed.jsonl")
    } else {
        path.to_path_buf()
    }
}

fn load_packed(path: &Path) -> Result<(PackedHeader, PackedSplits)> {
    let (header, seqs) = read_packed(&resolve_packed(path))?;
    Ok((header, PackedSplits::from_sequences(seqs)))
}

fn split_of(data: &PackedSplits, split: Split) -> &[PackedSequence] {
    match split {
        Split::Train => &data.train,
        Split::Val => &data.val,
        Split::Test => &data.test,
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn read_corpus(path: &Path) -> Result<crate::corpus::Corpus> {
    read_native(path, &LoadOptions::default())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let label_set = match &a.label_set {
                Some(n) => Some(
                    LabelSet::by_name(n)
                        .ok_or_else(|| Error::Config(format!("unknown label set {n:?}")))?,
                ),
                None => None,
            };
            let mut corpus = load_corpus(&a.input, a.format, &LoadOptions { label_set })?;
            if a.assign_names {
                corpus.dialogues = assign_iemocap_names(&corpus.dialogues, a.seed)?;
            }
            write_native(&corpus, &a.out)?;
            eprintln!(
                "wrote {} dialogues, {} utterances to {}",
                corpus.dialogues.len(),
                corpus.num_utterances(),
                a.out.display()
            );
            Ok(())
        }
        Command::Synth(a) => {
            let mut cfg: SyntheticConfig = match &a.config {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => SyntheticConfig::default(),
            };
            if let Some(r) = &a.rule {
                cfg.rule = parse_rule(r)?;
            }
            if let Some(n) = a.dialogues {
                cfg.n_dialogues = n;
            }
            let corpus = generate_synthetic(&cfg, a.seed)?;
            write_native(&corpus, &a.out)
        }
        Command::Stats(a) => {
            let corpus = load_corpus(&a.corpus, a.format, &LoadOptions::default())?;
            let stats = compute_stats(&corpus.dialogues)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", stats.to_table());
            }
            Ok(())
        }
        Command::Tokenizer(TokenizerCommand::Train(a)) => {
            let cfg = a.config.load()?;
            let corpus = read_corpus(&a.corpus)?;
            let vocab = Vocab::train(
                &corpus.split(Split::Train),
                a.vocab_size.unwrap_or(cfg.vocab_size),
            )?;
            vocab.save(&a.out)?;
            eprintln!(
                "vocabulary of {} tokens written to {}",
                vocab.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Build(a) => {
            let mut build = a.config.load()?.build;
            if let Some(m) = a.mode {
                build.mode = m;
            }
            if a.no_speaker {
                build.prepend_speaker = false;
            }
            if let Some(t) = a.max_tokens {
                build.max_total_tokens = t;
            }
            build.validate()?;
            let corpus = read_corpus(&a.corpus)?;
            let vocab = Vocab::load(&a.vocab)?;
            let seqs = build_dataset(&corpus.dialogues, &build, &vocab)?;
            let out = if a.out.extension().is_some() {
                a.out.clone()
            } else {
                fs::create_dir_all(&a.out)
                    .map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
                a.out.join("packed.jsonl")
            };
            let header = PackedHeader {
                vocab_size: vocab.len(),
                label_set: corpus.label_set.clone(),
                build,
            };
            write_packed(&out, &header, &seqs)?;
            eprintln!("packed {} sequences into {}", seqs.len(), out.display());
            Ok(())
        }
        Command::Train(a) => {
            let cfg = a.config.load()?;
            let mut tc = cfg.train.clone();
            if let Some(s) = a.seed {
                tc.seed = s;
            }
            if let Some(e) = a.epochs {
                tc.epochs = e;
            }
            if let Some(lr) = a.lr {
                tc.peak_lr = lr;
            }
            if let Some(b) = a.batch_size {
                tc.batch_size = b;
            }
            tc.validate()?;
            let (header, data) = load_packed(&a.packed)?;
            let model = crate::model::ModelConfig {
                vocab_size: header.vocab_size,
                n_classes: header.label_set.len(),
                ..cfg.model
            };
            fs::create_dir_all(&a.out)
                .map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
            let _lock = RunLock::acquire(&a.out)?;
            let (result, _) = train(&model, &data, &tc, Some(&a.out))?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Command::LrSearch(a) => {
            let cfg = a.config.load()?;
            let mut search = cfg.lr_search.clone();
            if let Some(t) = a.trials {
                search.trials = t;
            }
            if let Some(s) = a.seed {
                search.seed = s;
            }
            let (header, data) = load_packed(&a.packed)?;
            let model = crate::model::ModelConfig {
                vocab_size: header.vocab_size,
                n_classes: header.label_set.len(),
                ..cfg.model
            };
            let result = search_peak_lr(&model, &data, &cfg.train, &search)?;
            emit_json(a.out.as_deref(), &result)
        }
        Command::Eval(a) => {
            let (params, _) = load_checkpoint(&a.checkpoint)?;
            let (header, data) = load_packed(&a.packed)?;
            let (report, _) =
                evaluate_detailed(&params, split_of(&data, a.split), &header.label_set)?;
            eprintln!(
                "weighted f1 {}",
                crate::evaluation::percent(report.weighted_f1)
            );
            emit_json(a.out.as_deref(), &report)
        }
        Command::Ablate(a) => {
            let cfg = a.config.load()?;
            let spec: AblationSpec = match &a.spec {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => cfg.ablation.clone(),
            };
            let corpus = read_corpus(&a.corpus)?;
            let vocab = Vocab::load(&a.vocab)?;
            let model = cfg.model_for(&vocab, &corpus.label_set)?;
            let table = run_ablation(&spec, &corpus, &vocab, &cfg.build, &model, &cfg.train)?;
            let md = table.to_markdown(&a.dataset);
            fs::write(&a.out, &md)
                .map_err(|e| Error::io(format!("writing {}", a.out.display()), e))?;
            print!("{md}");
            Ok(())
        }
        Command::Inspect(a) => {
            let (params, _) = load_checkpoint(&a.checkpoint)?;
            let (header, data) = load_packed(&a.packed)?;
            let vocab = Vocab::load(&a.vocab)?;
            let (_, scored) =
                evaluate_detailed(&params, split_of(&data, a.split), &header.label_set)?;
            let sample = sample_for_analysis(&scored, a.n_correct, a.n_incorrect, a.seed)?;
            let written =
                write_reports(&params, &sample, &vocab, &header.label_set, a.top_k, &a.out)?;
            eprintln!("wrote {} files to {}", written.files.len(), a.out.display());
            if let Some(stat) = written.stat {
                println!("{}", serde_json::to_string_pretty(&stat)?);
            }
            Ok(())
        }
        Command::Pipeline(a) => {
            let mut cfg = a.config.load()?;
            if let Some(d) = a.run_dir {
                cfg.run_dir = d;
            }
            if let Some(s) = a.seed {
                cfg.seeds = vec![s];
            }
            if let Some(r) = &a.synthetic {
                cfg.corpus.path = None;
                let base = cfg.corpus.synthetic.take().unwrap_or_default();
                cfg.corpus.synthetic = Some(SyntheticConfig {
                    rule: parse_rule(r)?,
                    ..base
                });
            }
            let manifest = run_pipeline(&cfg)?;
            eprintln!("run complete: {}", cfg.run_dir.display());
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli)
}
