//! End-to-end experiment runner: ingest, tokenizer, build, train, evaluate
//! and inspect, with every artifact written under one run directory next to
//! a `manifest.json` describing each stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attnreport::{
    render_report, sample_for_analysis, speaker_attention_stat, DEFAULT_TOP_K,
};
use crate::corpus::{
    assign_iemocap_names, compute_stats, generate_synthetic, load_corpus, write_native, Corpus,
    CorpusFormat, LabelSet, LoadOptions, Split, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_detailed, AblationSpec};
use crate::model::{load_checkpoint, ModelConfig};
use crate::seqbuilder::{build_dataset, write_packed, BuildConfig, PackedHeader};
use crate::tokenizer::Vocab;
use crate::training::{
    search_peak_lr, train, LrSearchConfig, PackedSplits, TrainConfig, BEST_CHECKPOINT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSource {
    /// Corpus file or directory; mutually exclusive with `synthetic`.
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    /// `meld`, `iemocap`, or absent for the format's default.
    pub label_set: Option<String>,
    /// Replace speaker identities with names from the gendered pools.
    pub assign_names: bool,
    pub name_seed: u64,
    pub synthetic: Option<SyntheticConfig>,
    pub synthetic_seed: u64,
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource {
            path: None,
            format: CorpusFormat::NativeJsonl,
            label_set: None,
            assign_names: false,
            name_seed: 0,
            synthetic: None,
            synthetic_seed: 0,
        }
    }
}

impl CorpusSource {
    pub fn validate(&self) -> Result<()> {
        match (&self.path, &self.synthetic) {
            (Some(_), Some(_)) => Err(Error::Config(
                "corpus: give either path or synthetic, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "corpus: a path or a synthetic config is required".into(),
            )),
            (Some(p), None) if !p.exists() => Err(Error::Config(format!(
                "corpus path {} does not exist",
                p.display()
            ))),
            (None, Some(s)) => s.validate(),
            _ => {
                if let Some(name) = &self.label_set {
                    LabelSet::by_name(name)
                        .ok_or_else(|| Error::Config(format!("unknown label set {name:?}")))?;
                }
                Ok(())
            }
        }
    }

    pub fn load(&self) -> Result<Corpus> {
        let mut corpus = match (&self.path, &self.synthetic) {
            (Some(path), _) => {
                let options = LoadOptions {
                    label_set: self.label_set.as_deref().and_then(LabelSet::by_name),
                };
                load_corpus(path, self.format, &options)?
            }
            (None, Some(syn)) => generate_synthetic(syn, self.synthetic_seed)?,
            (None, None) => return Err(Error::Config("no corpus source".into())),
        };
        if self.assign_names {
            corpus.dialogues = assign_iemocap_names(&corpus.dialogues, self.name_seed)?;
        }
        Ok(corpus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectConfig {
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub seed: u64,
    pub top_k: usize,
    pub split: Split,
}

impl Default for InspectConfig {
    fn default() -> Self {
        InspectConfig {
            n_correct: 10,
            n_incorrect: 10,
            seed: 0,
            top_k: DEFAULT_TOP_K,
            split: Split::Test,
        }
    }
}

/// Everything needed to reproduce a run. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run_dir: PathBuf,
    pub corpus: CorpusSource,
    /// Existing vocabulary to reuse instead of training one.
    pub vocab_path: Option<PathBuf>,
    pub vocab_size: usize,
    pub build: BuildConfig,
    /// `vocab_size` and `n_classes` are filled in from the vocabulary and
    /// label set.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Run a learning-rate search before training and use its best rate.
    pub search_lr: bool,
    pub lr_search: LrSearchConfig,
    pub inspect: InspectConfig,
    pub ablation: AblationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_dir: PathBuf::from("runs/default"),
            corpus: CorpusSource::default(),
            vocab_path: None,
            vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            build: BuildConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0],
            search_lr: false,
            lr_search: LrSearchConfig::default(),
            inspect: InspectConfig::default(),
            ablation: AblationSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that can be checked before touching the disk.
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        if let Some(p) = &self.vocab_path {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "vocab path {} does not exist",
                    p.display()
                )));
            }
        }
        if self.vocab_size < crate::tokenizer::BASE_VOCAB_SIZE {
            return Err(Error::Config(format!(
                "vocab_size {} is below the byte alphabet size {}",
                self.vocab_size,
                crate::tokenizer::BASE_VOCAB_SIZE
            )));
        }
        self.build.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.model.max_positions < self.build.max_total_tokens {
            return Err(Error::Config(format!(
                "model max_positions {} is below the packing budget {}",
                self.model.max_positions, self.build.max_total_tokens
            )));
        }
        if self.inspect.top_k == 0 {
            return Err(Error::Config("inspect.top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Model config with vocabulary and class counts filled in.
    pub fn model_for(&self, vocab: &Vocab, labels: &LabelSet) -> Result<ModelConfig> {
        let m = ModelConfig {
            vocab_size: vocab.len(),
            n_classes: labels.len(),
            ..self.model
        };
        m.validate()?;
        Ok(m)
    }
}

pub const STAGES: [&str; 6] = [
    "ingest",
    "tokenizer",
    "build",
    "train",
    "evaluate",
    "inspect",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: String,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
}

impl Manifest {
    fn new() -> Self {
        Manifest {
            config: "config.json".into(),
            stages: STAGES
                .iter()
                .map(|s| StageRecord {
                    name: s.to_string(),
                    status: StageStatus::Pending,
                    outputs: Vec::new(),
                    error: None,
                })
                .collect(),
            failed_stage: None,
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Exclusive ownership of a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "run directory {} is locked by another process (remove {} if stale)",
                run_dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub peak_lr: f64,
    pub selected_epoch: usize,
    pub best_val_weighted_f1: f64,
    pub test_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    pub seeds: Vec<SeedMetrics>,
    pub mean_test_weighted_f1: f64,
    pub speaker_attention: Option<crate::attnreport::SpeakerAttentionStat>,
}

/// State threaded through the stages.
#[derive(Default)]
struct Artifacts {
    corpus: Option<Corpus>,
    vocab: Option<Vocab>,
    data: Option<PackedSplits>,
    peak_lr: Option<f64>,
    metrics: Option<PipelineMetrics>,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    art: Artifacts,
}

impl Runner<'_> {
    fn run_stage(&mut self, name: &str) -> Result<Vec<String>> {
        match name {
            "ingest" => self.ingest(),
            "tokenizer" => self.tokenizer(),
            "build" => self.build(),
            "train" => self.train(),
            "evaluate" => self.evaluate(),
            "inspect" => self.inspect(),
            other => unreachable!("unknown stage {other}"),
        }
    }

    fn ingest(&mut self) -> Result<Vec<String>> {
        let corpus = self.cfg.corpus.load()?;
        write_native(&corpus, &self.dir.join("corpus.jsonl"))?;
        write_json(
            &self.dir.join("stats.json"),
            &compute_stats(&corpus.dialogues)?,
        )?;
        self.art.corpus = Some(corpus);
        Ok(vec!["corpus.jsonl".into(), "stats.json".into()])
    }

    fn tokenizer(&mut self) -> Result<Vec<String>> {
        let corpus = self.art.corpus.as_ref().expect("ingest ran");
        let vocab = match &self.cfg.vocab_path {
            Some(p) => Vocab::load(p)?,
            None => Vocab::train(&corpus.split(Split::Train), self.cfg.vocab_size)?,
        };
        vocab.save(&self.dir.join("vocab.json"))?;
        self.art.vocab = Some(vocab);
        Ok(vec!["vocab.json".into()])
    }

    fn build(&mut self) -> Result<Vec<String>> {
        let corpus = self.art.corpus.as_ref().expect("ingest ran");
        let vocab = self.art.vocab.as_ref().expect("tokenizer ran");
        let seqs = build_dataset(&corpus.dialogues, &self.cfg.build, vocab)?;
        let header = PackedHeader {
            vocab_size: vocab.len(),
            label_set: corpus.label_set.clone(),
            build: self.cfg.build,
        };
        write_packed(&self.dir.join("packed.jsonl"), &header, &seqs)?;
        self.art.data = Some(PackedSplits::from_sequences(seqs));
        Ok(vec!["packed.jsonl".into()])
    }

    fn model_config(&self) -> Result<ModelConfig> {
        let corpus = self.art.corpus.as_ref().expect("ingest ran");
        self.cfg.model_for(
            self.art.vocab.as_ref().expect("tokenizer ran"),
            &corpus.label_set,
        )
    }

    fn train(&mut self) -> Result<Vec<String>> {
        let model = self.model_config()?;
        let data = self.art.data.as_ref().expect("build ran");
        let mut outputs = Vec::new();
        let mut train_cfg = self.cfg.train.clone();
        if self.cfg.search_lr {
            let result = search_peak_lr(&model, data, &train_cfg, &self.cfg.lr_search)?;
            write_json(&self.dir.join("lr_search.json"), &result)?;
            outputs.push("lr_search.json".into());
            train_cfg.peak_lr = result.best_lr;
        }
        for &seed in &self.cfg.seeds {
            let rel = format!("train/seed_{seed}");
            let cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            train(&model, data, &cfg, Some(&self.dir.join(&rel)))?;
            outputs.push(rel);
        }
        self.art.peak_lr = Some(train_cfg.peak_lr);
        Ok(outputs)
    }

    fn evaluate(&mut self) -> Result<Vec<String>> {
        let data = self.art.data.as_ref().expect("build ran");
        let labels = &self.art.corpus.as_ref().expect("ingest ran").label_set;
        if data.test.is_empty() {
            return Err(Error::Data("the test split is empty".into()));
        }
        mkdir(&self.dir.join("eval"))?;
        let mut outputs = Vec::new();
        let mut seeds = Vec::new();
        for &seed in &self.cfg.seeds {
            let run = self.dir.join(format!("train/seed_{seed}"));
            let (params, meta) = load_checkpoint(&run.join(BEST_CHECKPOINT))?;
            let (report, _) = evaluate_detailed(&params, &data.test, labels)?;
            let rel = format!("eval/seed_{seed}.json");
            write_json(&self.dir.join(&rel), &report)?;
            outputs.push(rel);
            seeds.push(SeedMetrics {
                seed,
                peak_lr: self.art.peak_lr.expect("train ran"),
                selected_epoch: meta["epoch"].as_u64().unwrap_or(0) as usize,
                best_val_weighted_f1: meta["val_weighted_f1"].as_f64().unwrap_or(f64::NAN),
                test_weighted_f1: report.weighted_f1,
            });
        }
        let mean = seeds.iter().map(|s| s.test_weighted_f1).sum::<f64>() / seeds.len() as f64;
        let metrics = PipelineMetrics {
            seeds,
            mean_test_weighted_f1: mean,
            speaker_attention: None,
        };
        write_json(&self.dir.join("metrics.json"), &metrics)?;
        outputs.push("metrics.json".into());
        self.art.metrics = Some(metrics);
        Ok(outputs)
    }

    fn inspect(&mut self) -> Result<Vec<String>> {
        let data = self.art.data.as_ref().expect("build ran");
        let corpus = self.art.corpus.as_ref().expect("ingest ran");
        let vocab = self.art.vocab.as_ref().expect("tokenizer ran");
        let ic = &self.cfg.inspect;
        let seqs = match ic.split {
            Split::Train => &data.train,
            Split::Val => &data.val,
            Split::Test => &data.test,
        };
        let seed = self.cfg.seeds[0];
        let (params, _) = load_checkpoint(
            &self
                .dir
                .join(format!("train/seed_{seed}"))
                .join(BEST_CHECKPOINT),
        )?;
        let (_, scored) = evaluate_detailed(&params, seqs, &corpus.label_set)?;
        let available_correct = scored.iter().filter(|s| s.correct()).count();
        let available_incorrect = scored.len() - available_correct;
        let n_correct = ic.n_correct.min(available_correct);
        let n_incorrect = ic.n_incorrect.min(available_incorrect);
        if (n_correct, n_incorrect) != (ic.n_correct, ic.n_incorrect) {
            log::warn!(
                "inspect: only {available_correct} correct and {available_incorrect} incorrect samples available"
            );
        }
        let sample = sample_for_analysis(&scored, n_correct, n_incorrect, ic.seed)?;
        let out = write_reports(
            &params,
            &sample,
            vocab,
            &corpus.label_set,
            ic.top_k,
            &self.dir.join("reports"),
        )?;
        if let Some(m) = self.art.metrics.as_mut() {
            m.speaker_attention = out.stat;
            write_json(&self.dir.join("metrics.json"), m)?;
        }
        Ok(out
            .files
            .into_iter()
            .map(|f| format!("reports/{f}"))
            .collect())
    }
}

pub struct WrittenReports {
    /// File names inside the report directory.
    pub files: Vec<String>,
    pub stat: Option<crate::attnreport::SpeakerAttentionStat>,
}

/// One HTML file per sample plus `summary.json`.
pub fn write_reports(
    params: &crate::model::ModelParams,
    sample: &[crate::evaluation::ScoredSequence],
    vocab: &Vocab,
    labels: &LabelSet,
    top_k: usize,
    dir: &Path,
) -> Result<WrittenReports> {
    mkdir(dir)?;
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for s in sample {
        let (report, html) = render_report(params, &s.sequence, vocab, labels, top_k)?;
        let name = format!(
            "{}_{:03}_{}.html",
            sanitize(&report.dialogue_id),
            report.index,
            if report.correct {
                "correct"
            } else {
                "incorrect"
            }
        );
        fs::write(dir.join(&name), html).map_err(|e| Error::io(format!("writing {name}"), e))?;
        files.push(name);
        reports.push(report);
    }
    let stat = if reports.is_empty() {
        None
    } else {
        Some(speaker_attention_stat(&reports)?)
    };
    let summary = serde_json::json!({
        "samples": reports.iter().map(|r| serde_json::json!({
            "dialogue_id": r.dialogue_id,
            "index": r.index,
            "predicted": r.predicted,
            "gold": r.gold,
            "correct": r.correct,
            "cls_attends_speaker_by_layer": r.cls_attends_speaker_by_layer,
        })).collect::<Vec<_>>(),
        "speaker_attention": stat,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    Ok(WrittenReports { files, stat })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs all stages. The configuration is validated before the run directory
/// is created or touched; afterwards a failing stage is recorded in the
/// manifest, earlier artifacts are kept and the stage's error is returned.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.run_dir.as_path();
    mkdir(dir)?;
    let _lock = RunLock::acquire(dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let mut manifest = Manifest::new();
    write_json(&dir.join("manifest.json"), &manifest)?;
    let mut runner = Runner {
        cfg,
        dir,
        art: Artifacts::default(),
    };
    for (i, &name) in STAGES.iter().enumerate() {
        log::info!("stage {name}");
        match runner.run_stage(name) {
            Ok(outputs) => {
                manifest.stages[i].status = StageStatus::Ok;
                manifest.stages[i].outputs = outputs;
                write_json(&dir.join("manifest.json"), &manifest)?;
            }
            Err(e) => {
                manifest.stages[i].status = StageStatus::Failed;
                manifest.stages[i].error = Some(e.to_string());
                manifest.failed_stage = Some(name.to_string());
                write_json(&dir.join("manifest.json"), &manifest)?;
                return Err(e);
            }
        }
    }
    Ok(manifest)
}
