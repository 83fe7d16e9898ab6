//! Mini-batch teacher-forced training with Adam, periodic dev evaluation,
//! best-dev retention and binary checkpoints.

mod checkpoint;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{PosTagger, TrainingExample, Vocabularies};
use crate::evalsuite::{evaluate, EvalContext, EvalError, EvalScenario};
use crate::model::{Batch, DecodeMode, Dropout, Generator, ModelError};
use crate::numerics::{clip_grad_norm, Adam, AdamConfig, NumericsError};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, MAGIC};
pub use config::TrainConfig;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
        /// Parameters after the last completed epoch (or the initialization).
        last_good: Box<Generator<f32>>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Index groups for one epoch: shuffled, stably sorted by template length,
/// cut into batches, then the batch order shuffled.
pub fn batch_indices(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut idx: Vec<usize> = (0..lengths.len()).collect();
    idx.shuffle(rng);
    idx.sort_by_key(|&i| lengths[i]);
    let mut groups: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    groups.shuffle(rng);
    groups
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Padded batches for one epoch.
pub fn make_batches(data: &[TrainingExample], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    make_epoch_batches(data, batch_size, seed, 0)
}

pub fn make_epoch_batches(data: &[TrainingExample], batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(TrainError::Config("batch_size must be at least 1".into()));
    }
    let lengths: Vec<usize> = data.iter().map(|e| e.template.len()).collect();
    batch_indices(&lengths, batch_size, &mut epoch_rng(seed, epoch))
        .into_iter()
        .map(|g| {
            let refs: Vec<&TrainingExample> = g.iter().map(|&i| &data[i]).collect();
            Ok(Batch::from_examples(&refs)?)
        })
        .collect()
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub dev_bleu: Option<f64>,
    pub dev_posmatch: Option<f64>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.4}"));
    let mut s = String::from("epoch,train_loss,dev_bleu,dev_posmatch\n");
    for r in history {
        s.push_str(&format!(
            "{},{:.6},{},{}\n",
            r.epoch,
            r.train_loss,
            opt(r.dev_bleu),
            opt(r.dev_posmatch)
        ));
    }
    s
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| TrainError::io(path, e))?;
    f.write_all(history_csv(history).as_bytes())
        .map_err(|e| TrainError::io(path, e))
}

/// Held-out data for periodic evaluation.
#[derive(Clone, Copy)]
pub struct DevSet<'a> {
    pub examples: &'a [TrainingExample],
    pub tagger: &'a dyn PosTagger,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// When set, `last.ckpt` is written after every epoch and `best.ckpt`
    /// whenever dev BLEU improves.
    pub checkpoint_dir: Option<PathBuf>,
    pub on_epoch: Option<Box<dyn FnMut(&EpochRecord) + 'a>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Generator<f32>,
    /// Epoch and parameters with the highest dev BLEU, earliest on ties.
    pub best: Option<(usize, Generator<f32>)>,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

fn check_ids(data: &[TrainingExample], vocab: &Vocabularies) -> Result<()> {
    let (v, t) = (vocab.words.len(), vocab.tags.len());
    for (i, e) in data.iter().enumerate() {
        let bad_word = e.keywords.iter().chain(&e.reference).any(|&w| w >= v);
        let bad_tag = e.keyword_tags.iter().chain(&e.template).any(|&x| x >= t);
        if bad_word || bad_tag {
            return Err(TrainError::Data(format!(
                "example {i} uses ids outside the vocabularies ({v} words, {t} tags)"
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model. Parameter updates are single-threaded, so the result
/// is a function of (data, vocabularies, config).
pub fn train(
    data: &[TrainingExample],
    dev: Option<DevSet>,
    vocab: &Vocabularies,
    cfg: &TrainConfig,
    mut opts: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Data("training set is empty".into()));
    }
    check_ids(data, vocab)?;
    if let Some(d) = &dev {
        check_ids(d.examples, vocab)?;
    }
    let mcfg = cfg.model_config(vocab.words.len(), vocab.tags.len());
    let mut model: Generator<f32> = Generator::new(mcfg, cfg.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut drop_rng = epoch_rng(cfg.seed ^ 0x5eed_d20b, 0);
    let mut last_good = model.clone();
    let mut best: Option<(usize, f64, Generator<f32>)> = None;
    let mut history = Vec::new();
    let mut steps = 0;
    let ckpt_dir = opts.checkpoint_dir.clone();
    if let Some(dir) = &ckpt_dir {
        std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    }
    let step_cap = cfg.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=cfg.epochs {
        if steps >= step_cap {
            break;
        }
        let batches = make_epoch_batches(data, cfg.batch_size, cfg.seed, epoch)?;
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for batch in &batches {
            if steps >= step_cap {
                break;
            }
            let mut drop = Dropout {
                p: cfg.dropout,
                rng: &mut drop_rng,
            };
            let loss = match model.loss_and_grad(batch, (cfg.dropout > 0.0).then_some(&mut drop)) {
                Ok(l) => f64::from(l),
                // overflowing parameters surface as numeric errors inside the forward pass
                Err(ModelError::Numerics(_) | ModelError::NonFinite(_)) => f64::NAN,
                Err(e) => return Err(e.into()),
            };
            let norm = if cfg.clip_norm > 0.0 {
                clip_grad_norm(&mut model.params, cfg.clip_norm)
            } else {
                0.0
            };
            if !f64::is_finite(loss) || !norm.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step: steps + 1,
                    loss,
                    last_good: Box::new(last_good),
                });
            }
            adam.step(&mut model.params)?;
            steps += 1;
            loss_sum += loss;
            n_batches += 1;
        }
        let mut rec = EpochRecord {
            epoch,
            steps,
            train_loss: loss_sum / n_batches.max(1) as f64,
            dev_bleu: None,
            dev_posmatch: None,
        };
        let last_epoch = epoch == cfg.epochs || steps >= step_cap;
        if let Some(d) = &dev {
            if !d.examples.is_empty() && cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || last_epoch) {
                let ctx = EvalContext {
                    vocab,
                    tagger: d.tagger,
                };
                let report = evaluate(&model, d.examples, ctx, EvalScenario::Exact, DecodeMode::Greedy)?;
                rec.dev_bleu = Some(report.bleu);
                rec.dev_posmatch = report.posmatch;
                if best.as_ref().map_or(true, |b| report.bleu > b.1) {
                    best = Some((epoch, report.bleu, model.clone()));
                    if let Some(dir) = &ckpt_dir {
                        save_checkpoint(&dir.join("best.ckpt"), &model, vocab, cfg)?;
                    }
                }
            }
        }
        last_good = model.clone();
        if let Some(dir) = &ckpt_dir {
            save_checkpoint(&dir.join("last.ckpt"), &model, vocab, cfg)?;
        }
        if let Some(f) = opts.on_epoch.as_mut() {
            f(&rec);
        }
        history.push(rec);
    }
    Ok(TrainOutcome {
        model,
        best: best.map(|(e, _, m)| (e, m)),
        history,
        steps,
    })
}
