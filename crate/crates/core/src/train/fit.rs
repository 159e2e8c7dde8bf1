use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, TrainProgress};
use super::optim::{nadam_step, Nadam, OptimState};
use crate::datasets::SequenceSample;
use crate::error::{Error, Result};
use crate::models::{Graph, ModelGraph, StatsUpdate};
use crate::nn::BnMode;
use crate::objectives::{evaluate_set, forecaster_loss, LossKind, MetricsReport};
use crate::tensor::Scalar as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Nadam,
    /// Last-epoch checkpoint; the best one goes next to it (see
    /// [`best_checkpoint_path`]).
    pub checkpoint: Option<PathBuf>,
    /// JSON-lines epoch log.
    pub log: Option<PathBuf>,
    /// Evaluate every this many epochs (0 = only after the last one).
    pub eval_every: usize,
    pub eccr_tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Mse,
            epochs: 10,
            batch_size: 4,
            seed: 0,
            optimizer: Nadam::default(),
            checkpoint: None,
            log: None,
            eval_every: 1,
            eccr_tau: 30.0,
        }
    }
}

/// `<dir>/<stem>.best.sckp` for a checkpoint path `<dir>/<stem>.<ext>`.
pub fn best_checkpoint_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.best.sckp"))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: u64,
    /// Mean training objective over the epoch's samples.
    pub train_loss: f64,
    /// Mean over samples of the summed weighted error of the final prediction.
    pub forecaster_sum: f64,
    /// `forecaster_sum` divided by the pixel count.
    pub forecaster_mean: f64,
    pub eval: Option<MetricsReport>,
}

/// Loss and gradients of one sample.
struct SamplePass {
    loss: f64,
    forecaster_sum: f64,
    grads: Vec<(String, Vec<f32>)>,
    stats: Vec<StatsUpdate<f32>>,
}

fn sample_pass(model: &ModelGraph, loss: LossKind, s: &SequenceSample, track: bool) -> Result<SamplePass> {
    let x = s.last_inputs::<f32>(model.spec.input_frames())?;
    let y = s.target::<f32>();
    let mut g = Graph::new(&model.params, BnMode::Train, track);
    let out = model.spec.forward(&mut g, &x)?;
    let l = loss.eval_output(&out, &y)?;
    let value = l.item()?.as_f64();
    let forecaster_sum = if value.is_finite() {
        forecaster_loss(out.prediction(), &y)?.item()?.as_f64()
    } else {
        f64::NAN
    };
    if track && value.is_finite() {
        l.backward()?;
    }
    let grads = if track { g.grads() } else { Vec::new() };
    Ok(SamplePass {
        loss: value,
        forecaster_sum,
        grads,
        stats: g.into_stats(),
    })
}

/// Mean training objective (batch-statistics mode, no updates) over a set.
pub fn mean_loss(model: &ModelGraph, loss: LossKind, samples: &[SequenceSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no samples to score".into()));
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_pass(model, loss, s, false).map(|p| p.loss))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Per-sample results of one optimizer step, in batch order.
pub struct StepResult {
    pub losses: Vec<f64>,
    pub forecaster_sums: Vec<f64>,
}

/// Forward/backward over a minibatch, averages gradients and batch-norm
/// statistics, then applies one Nadam step. A non-finite loss aborts with
/// [`Error::Diverged`] (epoch 0) before anything is modified.
pub fn train_step(
    model: &mut ModelGraph,
    optim: &mut OptimState<f32>,
    loss: LossKind,
    batch: &[&SequenceSample],
) -> Result<StepResult> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("empty minibatch".into()));
    }
    let passes: Vec<SamplePass> = batch
        .par_iter()
        .map(|s| sample_pass(model, loss, s, true))
        .collect::<Result<_>>()?;
    if let Some(p) = passes.iter().find(|p| !p.loss.is_finite()) {
        return Err(Error::Diverged {
            epoch: 0,
            step: optim.step + 1,
            loss: p.loss,
        });
    }
    let inv = 1.0 / batch.len() as f32;

    let mut passes = passes.into_iter();
    let first = passes.next().expect("non-empty batch");
    let mut losses = vec![first.loss];
    let mut forecaster_sums = vec![first.forecaster_sum];
    let mut grads = first.grads;
    let mut stats = first.stats;
    for p in passes {
        losses.push(p.loss);
        forecaster_sums.push(p.forecaster_sum);
        for ((_, acc), (_, g)) in grads.iter_mut().zip(p.grads) {
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        for (acc, s) in stats.iter_mut().zip(p.stats) {
            acc.mean.iter_mut().zip(s.mean).for_each(|(a, b)| *a += b);
            acc.var.iter_mut().zip(s.var).for_each(|(a, b)| *a += b);
        }
    }
    for (_, g) in &mut grads {
        g.iter_mut().for_each(|v| *v *= inv);
    }
    for s in &mut stats {
        s.mean.iter_mut().for_each(|v| *v *= inv);
        s.var.iter_mut().for_each(|v| *v *= inv);
    }
    nadam_step(&mut model.params, &grads, optim)?;
    model.params.apply_stats(&stats)?;
    Ok(StepResult {
        losses,
        forecaster_sums,
    })
}

fn open_log(path: &Path, append: bool) -> Result<File> {
    Ok(OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)?)
}

/// Trains for the epochs not yet covered by `resume`, evaluating and
/// checkpointing as configured. Returns the log lines written by this call.
pub fn fit(
    model: &mut ModelGraph,
    optim: &mut OptimState<f32>,
    cfg: &TrainConfig,
    train: &[SequenceSample],
    eval: &[SequenceSample],
    resume: Option<TrainProgress>,
) -> Result<Vec<EpochLog>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    cfg.optimizer.validate()?;
    optim.hyper = cfg.optimizer;
    let mut progress = resume.unwrap_or(TrainProgress {
        loss: cfg.loss,
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        epochs_completed: 0,
        best_eval_mse: None,
    });
    let mut log_file = match &cfg.log {
        Some(p) => Some(open_log(p, progress.epochs_completed > 0)?),
        None => None,
    };
    let pixels = (train[0].height() * train[0].width()) as f64;
    let mut logs = Vec::new();

    for epoch in progress.epochs_completed + 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let mut losses = vec![0.0; train.len()];
        let mut sums = vec![0.0; train.len()];
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&SequenceSample> = idx.iter().map(|&i| &train[i]).collect();
            let res = match train_step(model, optim, cfg.loss, &batch) {
                Ok(r) => r,
                Err(Error::Diverged { step, loss, .. }) => return Err(Error::Diverged { epoch, step, loss }),
                Err(Error::NonFinite(msg)) => {
                    log::error!("epoch {epoch}: {msg}");
                    return Err(Error::Diverged {
                        epoch,
                        step: optim.step + 1,
                        loss: f64::NAN,
                    });
                }
                Err(e) => return Err(e),
            };
            for (k, &i) in idx.iter().enumerate() {
                losses[i] = res.losses[k];
                sums[i] = res.forecaster_sums[k];
            }
        }
        let n = train.len() as f64;
        let train_loss = losses.iter().sum::<f64>() / n;
        let forecaster_sum = sums.iter().sum::<f64>() / n;

        let due = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
        let report = if due && !eval.is_empty() {
            Some(evaluate_set(&*model, eval, cfg.eccr_tau)?)
        } else {
            None
        };
        progress.epochs_completed = epoch;
        let improved = report.is_some_and(|r| progress.best_eval_mse.is_none_or(|b| r.mse < b));
        if improved {
            progress.best_eval_mse = report.map(|r| r.mse);
        }
        if let Some(path) = &cfg.checkpoint {
            if improved {
                save_checkpoint(model, optim, Some(&progress), &best_checkpoint_path(path))?;
            }
            save_checkpoint(model, optim, Some(&progress), path)?;
        }

        let line = EpochLog {
            epoch,
            step: optim.step,
            train_loss,
            forecaster_sum,
            forecaster_mean: forecaster_sum / pixels,
            eval: report,
        };
        log::info!(
            "epoch {epoch}/{}: train {} {:.4}{}",
            cfg.epochs,
            cfg.loss,
            train_loss,
            report.map(|r| format!(", eval mse {:.3}", r.mse)).unwrap_or_default()
        );
        if let Some(f) = &mut log_file {
            writeln!(f, "{}", serde_json::to_string(&line)?)?;
            f.flush()?;
        }
        logs.push(line);
    }
    Ok(logs)
}
