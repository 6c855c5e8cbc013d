//! Fine-tuning loop: AdamW with linear warmup and decay, per-epoch validation,
//! best-validation-f1 checkpoint selection, learning-rate search and
//! multi-seed aggregation.

mod optimizer;
mod schedule;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::evaluation::{predict, weighted_f1};
use crate::model::{save_checkpoint, ModelConfig, ModelParams};
use crate::seqbuilder::PackedSequence;

pub use optimizer::AdamW;
pub use schedule::{lr_at, warmup_steps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Mode {
    /// `(lambda / 2) * ||w||^2` is part of the reported loss and its gradient.
    InLoss,
    /// Weight decay applied in the optimizer update; the loss is cross-entropy.
    Decoupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub l2_rate: f64,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub l2_mode: L2Mode,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            l2_rate: 0.01,
            peak_lr: 1e-5,
            batch_size: 8,
            warmup_fraction: 0.2,
            seed: 0,
            l2_mode: L2Mode::Decoupled,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::Config(format!(
                "warmup_fraction {} must lie in (0, 1)",
                self.warmup_fraction
            )));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::Config(format!(
                "peak_lr {} must be positive",
                self.peak_lr
            )));
        }
        if !(self.l2_rate.is_finite() && self.l2_rate >= 0.0) {
            return Err(Error::Config(format!(
                "l2_rate {} must be non-negative",
                self.l2_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Packed sequences grouped by split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackedSplits {
    pub train: Vec<PackedSequence>,
    pub val: Vec<PackedSequence>,
    pub test: Vec<PackedSequence>,
}

impl PackedSplits {
    pub fn from_sequences(sequences: impl IntoIterator<Item = PackedSequence>) -> Self {
        let mut out = PackedSplits::default();
        for s in sequences {
            match s.split {
                Split::Train => out.train.push(s),
                Split::Val => out.val.push(s),
                Split::Test => out.test.push(s),
            }
        }
        out
    }

    pub fn max_len(&self) -> usize {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|s| s.len())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean reported training loss over the epoch's steps; absent for epoch 0.
    pub train_loss: Option<f64>,
    pub val_weighted_f1: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (0 is the untrained model).
    pub selected_epoch: usize,
    pub best_val_weighted_f1: f64,
    /// Absent when the test split is empty.
    pub test_weighted_f1: Option<f64>,
}

impl RunResult {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.train_loss).collect()
    }

    pub fn val_weighted_f1s(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_weighted_f1).collect()
    }
}

pub(crate) fn labels_of(seqs: &[PackedSequence]) -> Vec<usize> {
    seqs.iter().map(|s| s.label.class_index).collect()
}

fn split_f1(params: &ModelParams, seqs: &[PackedSequence]) -> Result<f64> {
    let preds: Vec<usize> = predict(params, seqs)?
        .iter()
        .map(|p| p.predicted())
        .collect();
    weighted_f1(&preds, &labels_of(seqs))
}

/// Orders one epoch's examples: seeded shuffle, then sort by length inside
/// windows of several batches so that batch members have similar lengths,
/// then shuffle the batch order.
fn epoch_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    const WINDOW_BATCHES: usize = 8;
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    for window in order.chunks_mut(batch_size * WINDOW_BATCHES) {
        window.sort_by_key(|&i| lengths[i]);
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    batches.shuffle(rng);
    batches
}

struct RunDir<'a> {
    path: &'a Path,
    metrics: fs::File,
}

impl<'a> RunDir<'a> {
    fn create(path: &'a Path, model: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        fs::create_dir_all(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let snapshot = serde_json::json!({ "model": model, "train": cfg });
        let cfg_path = path.join("config.json");
        fs::write(&cfg_path, serde_json::to_string_pretty(&snapshot)?)
            .map_err(|e| Error::io(format!("writing {}", cfg_path.display()), e))?;
        let metrics_path = path.join("metrics.jsonl");
        let metrics = fs::File::create(&metrics_path)
            .map_err(|e| Error::io(format!("creating {}", metrics_path.display()), e))?;
        Ok(RunDir { path, metrics })
    }

    fn log(&mut self, m: &EpochMetrics) -> Result<()> {
        let line = serde_json::to_string(m)?;
        writeln!(self.metrics, "{line}").map_err(|e| Error::io("writing metrics.jsonl", e))
    }

    fn checkpoint(
        &self,
        name: &str,
        params: &ModelParams,
        epoch: usize,
        val_f1: f64,
    ) -> Result<()> {
        let meta = serde_json::json!({ "epoch": epoch, "val_weighted_f1": val_f1 });
        save_checkpoint(&self.path.join(name), params, meta)
    }
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Trains a freshly initialized model (init seed = `cfg.seed`).
///
/// Runs `epochs * ceil(N / batch_size)` optimizer steps, evaluates validation
/// weighted f1 after every epoch and keeps the parameters of the first epoch
/// reaching the maximum. With `out_dir`, writes `config.json`,
/// `metrics.jsonl`, `best.ckpt` and `result.json` there; on a non-finite loss
/// the last finite parameters go to `last_finite.ckpt` before the error is
/// returned.
pub fn train(
    model_cfg: &ModelConfig,
    data: &PackedSplits,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(RunResult, ModelParams)> {
    let params = ModelParams::init(*model_cfg, cfg.seed)?;
    train_from(params, data, cfg, out_dir)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    params: ModelParams,
    data: &PackedSplits,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(RunResult, ModelParams)> {
    let outcome = fit(params, data, cfg, out_dir)?;
    Ok((outcome.result, outcome.best))
}

struct FitOutcome {
    result: RunResult,
    best: ModelParams,
    last: ModelParams,
}

fn fit(
    mut params: ModelParams,
    data: &PackedSplits,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    params.config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Data(format!(
            "training needs non-empty train and validation splits (got {} and {})",
            data.train.len(),
            data.val.len()
        )));
    }
    if data.max_len() > params.config.max_positions {
        return Err(Error::Config(format!(
            "packed sequences reach {} tokens but max_positions is {}",
            data.max_len(),
            params.config.max_positions
        )));
    }
    let mut run_dir = match out_dir {
        Some(p) => Some(RunDir::create(p, &params.config, cfg)?),
        None => None,
    };

    let steps_per_epoch = data.train.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let lengths: Vec<usize> = data.train.iter().map(|s| s.len()).collect();
    let labels = labels_of(&data.train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005E_ED0F_7EA1);
    let mut opt = AdamW::new(&params);
    let (loss_l2, decoupled_decay) = match cfg.l2_mode {
        L2Mode::InLoss => (cfg.l2_rate, 0.0),
        L2Mode::Decoupled => (0.0, cfg.l2_rate),
    };

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    if cfg.epochs == 0 {
        let f = split_f1(&params, &data.val)?;
        let m = EpochMetrics {
            epoch: 0,
            train_loss: None,
            val_weighted_f1: f,
            steps: 0,
        };
        if let Some(d) = run_dir.as_mut() {
            d.log(&m)?;
        }
        epochs.push(m);
        best = Some((0, f, params.clone()));
    }

    let mut step: u64 = 0;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut n_steps = 0u64;
        for batch in epoch_batches(&lengths, cfg.batch_size, &mut rng) {
            let inputs: Vec<&[u32]> = batch
                .iter()
                .map(|&i| data.train[i].ids.as_slice())
                .collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let dropout_seed = rng.random::<u64>();
            let (loss, mut grads) =
                match params.loss_and_grad(&inputs, &ys, loss_l2, Some(dropout_seed)) {
                    Ok(r) => r,
                    Err(e) => {
                        if let Some(d) = &run_dir {
                            d.checkpoint("last_finite.ckpt", &params, epoch - 1, f64::NAN)?;
                        }
                        return Err(e);
                    }
                };
            if let Some(c) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            let lr = lr_at(step, total_steps, cfg.peak_lr, cfg.warmup_fraction)?;
            let previous = params.clone();
            opt.step(&mut params, &grads, lr, decoupled_decay);
            if !params.all_finite() {
                if let Some(d) = &run_dir {
                    d.checkpoint("last_finite.ckpt", &previous, epoch - 1, f64::NAN)?;
                }
                return Err(Error::Numeric(format!(
                    "parameters became non-finite at step {step}"
                )));
            }
            step += 1;
            n_steps += 1;
            loss_sum += loss;
        }
        let f = split_f1(&params, &data.val)?;
        let m = EpochMetrics {
            epoch,
            train_loss: Some(loss_sum / n_steps as f64),
            val_weighted_f1: f,
            steps: step,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val weighted f1 {:.4}",
            loss_sum / n_steps as f64,
            f
        );
        if let Some(d) = run_dir.as_mut() {
            d.log(&m)?;
        }
        epochs.push(m);
        if best.as_ref().is_none_or(|(_, b, _)| f > *b) {
            if let Some(d) = &run_dir {
                d.checkpoint(BEST_CHECKPOINT, &params, epoch, f)?;
            }
            best = Some((epoch, f, params.clone()));
        }
    }

    let (selected_epoch, best_val, best_params) = best.expect("at least one evaluation");
    if cfg.epochs == 0 {
        if let Some(d) = &run_dir {
            d.checkpoint(BEST_CHECKPOINT, &best_params, 0, best_val)?;
        }
    }
    let test_weighted_f1 = if data.test.is_empty() {
        None
    } else {
        Some(split_f1(&best_params, &data.test)?)
    };
    let result = RunResult {
        seed: cfg.seed,
        epochs,
        selected_epoch,
        best_val_weighted_f1: best_val,
        test_weighted_f1,
    };
    if let Some(d) = &run_dir {
        let p = d.path.join("result.json");
        fs::write(&p, serde_json::to_string_pretty(&result)?)
            .map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
    }
    Ok(FitOutcome {
        result,
        best: best_params,
        last: params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSearchConfig {
    pub trials: usize,
    pub min_lr: f64,
    pub max_lr: f64,
    /// Fraction of the training split used per trial; the same number of
    /// validation sequences scores it.
    pub data_fraction: f64,
    pub seed: u64,
}

impl Default for LrSearchConfig {
    fn default() -> Self {
        LrSearchConfig {
            trials: 5,
            min_lr: 1e-6,
            max_lr: 1e-4,
            data_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTrial {
    pub lr: f64,
    /// Validation cross-entropy; absent if the trial diverged.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSearchResult {
    pub trials: Vec<LrTrial>,
    pub best_lr: f64,
}

/// Log-uniform candidates in `[min_lr, max_lr]`.
pub fn lr_candidates(cfg: &LrSearchConfig) -> Result<Vec<f64>> {
    if cfg.trials == 0 {
        return Err(Error::Config("lr search needs at least one trial".into()));
    }
    if !(cfg.min_lr > 0.0 && cfg.min_lr <= cfg.max_lr) {
        return Err(Error::Config(format!(
            "invalid lr range [{}, {}]",
            cfg.min_lr, cfg.max_lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = (cfg.min_lr.ln(), cfg.max_lr.ln());
    Ok((0..cfg.trials)
        .map(|_| {
            let u: f64 = rng.random();
            (lo + u * (hi - lo)).exp().clamp(cfg.min_lr, cfg.max_lr)
        })
        .collect())
}

/// Scores every candidate with `objective` and returns the argmin (first on
/// ties). Candidates whose objective errors with a numeric failure or returns
/// a non-finite value count as diverged.
pub fn search_with<F>(cfg: &LrSearchConfig, mut objective: F) -> Result<LrSearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut trials = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for lr in lr_candidates(cfg)? {
        let val_loss = match objective(lr) {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) | Err(Error::Numeric(_)) => None,
            Err(e) => return Err(e),
        };
        log::info!("lr trial {lr:.3e}: {val_loss:?}");
        if let Some(v) = val_loss {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((lr, v));
            }
        }
        trials.push(LrTrial { lr, val_loss });
    }
    let (best_lr, _) =
        best.ok_or_else(|| Error::Numeric(format!("all {} lr trials diverged", trials.len())))?;
    Ok(LrSearchResult { trials, best_lr })
}

fn subsample(seqs: &[PackedSequence], n: usize, rng: &mut ChaCha8Rng) -> Vec<PackedSequence> {
    let mut idx: Vec<usize> = (0..seqs.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n.clamp(1, seqs.len().max(1)));
    idx.sort_unstable();
    idx.into_iter().map(|i| seqs[i].clone()).collect()
}

/// Learning-rate search: each candidate trains on a fixed subsample of the
/// training split and is scored by cross-entropy on an equally sized
/// validation subsample, using the final (not best-f1) parameters.
pub fn search_peak_lr(
    model_cfg: &ModelConfig,
    data: &PackedSplits,
    train_cfg: &TrainConfig,
    search: &LrSearchConfig,
) -> Result<LrSearchResult> {
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Data(
            "lr search needs non-empty train and validation splits".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed ^ 0x1A_5EA2C4);
    let n = ((data.train.len() as f64) * search.data_fraction).ceil() as usize;
    let sub = PackedSplits {
        train: subsample(&data.train, n, &mut rng),
        val: subsample(&data.val, n, &mut rng),
        test: Vec::new(),
    };
    let val_inputs: Vec<&[u32]> = sub.val.iter().map(|s| s.ids.as_slice()).collect();
    let val_labels = labels_of(&sub.val);
    search_with(search, |lr| {
        let cfg = TrainConfig {
            peak_lr: lr,
            ..train_cfg.clone()
        };
        let params = ModelParams::init(*model_cfg, cfg.seed)?;
        let outcome = fit(params, &sub, &cfg, None)?;
        outcome.last.cross_entropy(&val_inputs, &val_labels)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: Vec<RunResult>,
    pub mean_test_weighted_f1: Option<f64>,
    pub mean_val_weighted_f1: f64,
}

/// Trains once per seed (seed overrides `cfg.seed`) and averages the scores.
pub fn run_seeds(
    model_cfg: &ModelConfig,
    data: &PackedSplits,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<SeedSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        runs.push(train(model_cfg, data, &cfg, None)?.0);
    }
    let n = runs.len() as f64;
    let mean_val_weighted_f1 = runs.iter().map(|r| r.best_val_weighted_f1).sum::<f64>() / n;
    let mean_test_weighted_f1 = runs
        .iter()
        .map(|r| r.test_weighted_f1)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    Ok(SeedSummary {
        runs,
        mean_test_weighted_f1,
        mean_val_weighted_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticConfig};
    use crate::seqbuilder::{build_dataset, BuildConfig, ContextMode};
    use crate::tokenizer::Vocab;

    fn setup() -> (ModelConfig, PackedSplits) {
        let syn = SyntheticConfig {
            n_dialogues: 30,
            ..Default::default()
        };
        let corpus = generate_synthetic(&syn, 3).unwrap();
        let vocab = Vocab::train(&corpus.dialogues, 400).unwrap();
        let build = BuildConfig {
            mode: ContextMode::None,
            ..Default::default()
        };
        let data =
            PackedSplits::from_sequences(build_dataset(&corpus.dialogues, &build, &vocab).unwrap());
        let model = ModelConfig {
            vocab_size: vocab.len(),
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            max_positions: 64,
            n_classes: 3,
            dropout: 0.1,
        };
        (model, data)
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            peak_lr: 3e-3,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_evaluates_initial_model() {
        let (model, data) = setup();
        let cfg = TrainConfig {
            epochs: 0,
            ..quick(0)
        };
        let (r, params) = train(&model, &data, &cfg, None).unwrap();
        assert_eq!(r.selected_epoch, 0);
        assert_eq!(r.epochs.len(), 1);
        assert_eq!(params, ModelParams::init(model, 0).unwrap());
    }

    #[test]
    fn same_seed_same_result() {
        let (model, data) = setup();
        let (a, pa) = train(&model, &data, &quick(4), None).unwrap();
        let (b, pb) = train(&model, &data, &quick(4), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        let (c, _) = train(&model, &data, &quick(5), None).unwrap();
        assert_ne!(a.train_losses(), c.train_losses());
    }

    #[test]
    fn selection_picks_first_maximum() {
        let (model, data) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            ..quick(1)
        };
        let (r, _) = train(&model, &data, &cfg, None).unwrap();
        let f = r.val_weighted_f1s();
        let best = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_val_weighted_f1, best);
        assert_eq!(
            r.selected_epoch,
            1 + f.iter().position(|&x| x == best).unwrap()
        );
    }

    #[test]
    fn run_dir_contents() {
        let (model, data) = setup();
        let dir = tempfile::tempdir().unwrap();
        let (r, params) = train(&model, &data, &quick(2), Some(dir.path())).unwrap();
        let metrics = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        assert_eq!(metrics.lines().count(), 2);
        let (saved, meta) =
            crate::model::load_checkpoint(&dir.path().join(BEST_CHECKPOINT)).unwrap();
        assert_eq!(saved, params);
        assert_eq!(meta["epoch"], r.selected_epoch);
        assert!(dir.path().join("config.json").exists());
    }

    #[test]
    fn in_loss_reports_penalized_loss() {
        let (model, data) = setup();
        let params = ModelParams::init(model, 0).unwrap();
        let ids: Vec<&[u32]> = data.train[..4].iter().map(|s| s.ids.as_slice()).collect();
        let ys = labels_of(&data.train[..4]);
        let ce = params.cross_entropy(&ids, &ys).unwrap();
        let (l, _) = params.loss_and_grad(&ids, &ys, 0.01, None).unwrap();
        assert!((l - (ce + 0.005 * params.decay_norm_sq())).abs() < 1e-12);
    }

    #[test]
    fn search_returns_argmin_of_objective() {
        let cfg = LrSearchConfig {
            trials: 5,
            seed: 9,
            ..Default::default()
        };
        let cands = lr_candidates(&cfg).unwrap();
        assert!(cands.iter().all(|&c| (1e-6..=1e-4).contains(&c)));
        let target = cands[3];
        let r = search_with(&cfg, |lr| Ok((lr.ln() - target.ln()).abs())).unwrap();
        assert_eq!(r.best_lr, target);
        assert_eq!(r.trials.len(), 5);

        let one = LrSearchConfig {
            trials: 1,
            ..cfg.clone()
        };
        let r = search_with(&one, |_| Ok(1.0)).unwrap();
        assert_eq!(r.best_lr, lr_candidates(&one).unwrap()[0]);

        let diverged = search_with(&cfg, |_| Err(Error::Numeric("nan".into())));
        assert!(matches!(diverged, Err(Error::Numeric(_))));
        assert!(lr_candidates(&LrSearchConfig { trials: 0, ..cfg }).is_err());
    }

    #[test]
    fn real_search_is_deterministic() {
        let (model, data) = setup();
        let search = LrSearchConfig {
            trials: 2,
            data_fraction: 0.3,
            ..Default::default()
        };
        let a = search_peak_lr(&model, &data, &quick(0), &search).unwrap();
        let b = search_peak_lr(&model, &data, &quick(0), &search).unwrap();
        assert_eq!(a, b);
        assert!(a.trials.iter().all(|t| t.val_loss.is_some()));
    }

    #[test]
    fn seeds_average() {
        let (model, data) = setup();
        let s = run_seeds(&model, &data, &quick(0), &[7]).unwrap();
        assert_eq!(s.mean_test_weighted_f1, s.runs[0].test_weighted_f1);
        assert!(run_seeds(&model, &data, &quick(0), &[]).is_err());
    }
}
