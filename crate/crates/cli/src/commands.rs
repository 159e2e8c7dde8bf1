use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use nowcast_core::datasets::{
    self, read_container, split, write_container, write_pgm, BackgroundMode, GlyphSource, MnistPpConfig,
    NephoPipelineConfig, SequenceSample,
};
use nowcast_core::models::{ClstmConfig, FcLstmConfig, FclstmConfig, MlpConfig, ModelGraph, ModelKind, ModelSpec};
use nowcast_core::objectives::{evaluate_set, LastFramePredictor, Predictor};
use nowcast_core::train::{
    best_checkpoint_path, fit, load_checkpoint, load_checkpoint_for, Nadam, OptimState, TrainConfig,
};

use crate::render::{layout, Cell};
use crate::{EvalArgs, GenArgs, ModelArgs, PredictArgs, PrepArgs, RenderArgs, TrainArgs};

/// Widths and input length used when the flags are absent. 64-pixel data is
/// taken to be digit sequences, anything else nephograms.
struct Preset {
    fclstm: Vec<usize>,
    frames_in: usize,
}

fn preset(width: usize) -> Preset {
    if width == 64 {
        Preset {
            fclstm: vec![32, 32, 64, 64, 128, 128],
            frames_in: 9,
        }
    } else {
        Preset {
            fclstm: vec![16, 16, 32, 32, 64, 64],
            frames_in: 6,
        }
    }
}

fn load(path: &Path) -> Result<Vec<SequenceSample>> {
    let samples = read_container(path).with_context(|| format!("reading {}", path.display()))?;
    if samples.is_empty() {
        bail!("{} holds no sequences", path.display());
    }
    Ok(samples)
}

pub fn model_spec(args: &ModelArgs, sample: &SequenceSample) -> Result<ModelSpec> {
    let hw = (sample.height(), sample.width());
    let p = preset(sample.width());
    let available = sample.input_frames();
    let frames = match args.frames_in {
        Some(n) if n > available => bail!("--frames-in {n} exceeds the {available} input frames per sequence"),
        Some(n) => n,
        None => p.frames_in.min(available),
    };
    let channels = args.channels.clone();
    let spec = match args.model {
        ModelKind::Fclstm => {
            let mut cfg = FclstmConfig::new(channels.unwrap_or(p.fclstm), hw, frames);
            if !cfg.channels.len().is_multiple_of(2) {
                bail!("fclstm needs an even number of channel widths (seq-conv, ConvLSTM per scale)");
            }
            cfg.peephole = args.peephole;
            ModelSpec::Fclstm(cfg)
        }
        ModelKind::Clstm => {
            let mut cfg = ClstmConfig::new(channels.unwrap_or_else(|| vec![16, 32, 64]), hw, frames);
            cfg.peephole = args.peephole;
            ModelSpec::Clstm(cfg)
        }
        ModelKind::FcLstm => {
            let mut cfg = FcLstmConfig::new(hw, frames);
            match channels.as_deref() {
                None => {}
                Some([h]) => cfg.hidden = *h,
                Some(_) => bail!("fc_lstm takes a single hidden width"),
            }
            ModelSpec::FcLstm(cfg)
        }
        ModelKind::Mlp => {
            let mut cfg = MlpConfig::new(hw, frames);
            if let Some(c) = channels {
                cfg.hidden = c;
            }
            ModelSpec::Mlp(cfg)
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn gen_mnistpp(a: GenArgs) -> Result<Value> {
    let cfg = MnistPpConfig {
        patch: a.patch,
        frames: a.frames,
        digits_per_seq: a.digits,
        glyphs: a.glyphs.map(GlyphSource::Idx).unwrap_or_default(),
        ..MnistPpConfig::default()
    };
    let samples = datasets::gen_mnistpp(&cfg, a.seed, a.count)?;
    write_container(&samples, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(json!({
        "command": "gen-mnistpp",
        "out": a.out,
        "count": samples.len(),
        "frames": a.frames,
        "height": a.patch,
        "width": a.patch,
        "seed": a.seed,
    }))
}

pub fn prep_nephograms(a: PrepArgs) -> Result<Value> {
    let background = match a.background.as_str() {
        "min" => BackgroundMode::Min,
        "median" => BackgroundMode::Median,
        path => BackgroundMode::File(PathBuf::from(path)),
    };
    let cfg = NephoPipelineConfig {
        interval_minutes: a.interval,
        seq_len: a.seq_len,
        crop: a.crop,
        crops_per_window: a.crops_per_window,
        background,
        min_mean: a.min_mean,
    };
    let (samples, report) = datasets::prep_nephograms(&a.src, &cfg, a.seed)?;
    write_container(&samples, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(json!({
        "command": "prep-nephograms",
        "out": a.out,
        "seed": a.seed,
        "report": report,
    }))
}

fn default_log(ckpt: &Path) -> PathBuf {
    let stem = ckpt
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ckpt.with_file_name(format!("{stem}.log.jsonl"))
}

pub fn train(a: TrainArgs) -> Result<Value> {
    let data = load(&a.data)?;
    let (train_set, eval_set) = match &a.eval_data {
        Some(p) => (data, load(p)?),
        None if a.train_frac == 1.0 => (data, Vec::new()),
        None => split(&data, a.train_frac, a.seed)?,
    };
    let spec = model_spec(&a.model, &train_set[0])?;
    let hyper = Nadam {
        lr: a.lr,
        ..Nadam::default()
    };
    hyper.validate()?;

    let (mut model, mut optim, progress) = if a.resume && a.ckpt.exists() {
        let ck = load_checkpoint_for(&a.ckpt, &spec)?;
        (ck.model, ck.optim, ck.progress)
    } else {
        let model = ModelGraph::build(spec, a.seed)?;
        let optim = OptimState::new(&model.params, hyper);
        (model, optim, None)
    };
    let log = a.log.clone().unwrap_or_else(|| default_log(&a.ckpt));
    let cfg = TrainConfig {
        loss: a.loss,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        optimizer: hyper,
        checkpoint: Some(a.ckpt.clone()),
        log: Some(log.clone()),
        eval_every: a.eval_every,
        eccr_tau: a.eccr_tau,
    };
    let logs = fit(&mut model, &mut optim, &cfg, &train_set, &eval_set, progress)?;
    let best = best_checkpoint_path(&a.ckpt);
    let last = logs.last();
    Ok(json!({
        "command": "train",
        "model": model.kind().name(),
        "loss": a.loss.name(),
        "param_count": model.param_count(),
        "train_samples": train_set.len(),
        "eval_samples": eval_set.len(),
        "epochs_run": logs.len(),
        "step": optim.step,
        "final_train_loss": last.map(|l| l.train_loss),
        "final_eval": last.and_then(|l| l.eval),
        "ckpt": a.ckpt,
        "best_ckpt": best.exists().then_some(best),
        "log": log,
    }))
}

fn load_model(path: &Path) -> Result<ModelGraph> {
    Ok(load_checkpoint(path)
        .with_context(|| format!("loading {}", path.display()))?
        .model)
}

fn check_fits(model: &ModelGraph, sample: &SequenceSample) -> Result<()> {
    let hw = (sample.height(), sample.width());
    if model.spec.input_hw() != hw {
        bail!(
            "model expects {:?} frames but the data is {hw:?}",
            model.spec.input_hw()
        );
    }
    if model.spec.input_frames() > sample.input_frames() {
        bail!(
            "model reads {} input frames but sequences only have {}",
            model.spec.input_frames(),
            sample.input_frames()
        );
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<Value> {
    let data = load(&a.data)?;
    let report = match &a.ckpt {
        Some(p) => {
            let model = load_model(p)?;
            check_fits(&model, &data[0])?;
            evaluate_set(&model, &data, a.eccr_tau)?
        }
        None => evaluate_set(&LastFramePredictor, &data, a.eccr_tau)?,
    };
    Ok(serde_json::to_value(report)?)
}

fn select<'a>(data: &'a [SequenceSample], indices: &[usize]) -> Result<Vec<&'a SequenceSample>> {
    indices
        .iter()
        .map(|&i| {
            data.get(i)
                .ok_or_else(|| anyhow!("sample index {i} out of range for {} samples", data.len()))
        })
        .collect()
}

pub fn predict(a: PredictArgs) -> Result<Value> {
    let data = load(&a.data)?;
    let model = load_model(&a.ckpt)?;
    check_fits(&model, &data[0])?;
    let chosen = match &a.indices {
        Some(ix) => select(&data, ix)?,
        None => data.iter().collect(),
    };
    let out: Vec<SequenceSample> = chosen
        .iter()
        .map(|s| {
            let pred = model.predict_sample(s)?;
            let cell = Cell::from_prediction(s.height(), s.width(), &pred);
            let inputs = &s.pixels()[..s.input_frames() * s.height() * s.width()];
            let mut frames = inputs.to_vec();
            frames.extend_from_slice(&cell.pixels);
            let mut seq = SequenceSample::new(frames, s.len(), s.height(), s.width())?;
            seq.meta = s.meta.clone();
            Ok(seq)
        })
        .collect::<Result<_>>()?;
    write_container(&out, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(json!({
        "command": "predict",
        "out": a.out,
        "count": out.len(),
        "frames": data[0].len(),
        "height": data[0].height(),
        "width": data[0].width(),
    }))
}

pub fn render(a: RenderArgs) -> Result<Value> {
    let data = load(&a.data)?;
    let chosen = select(&data, &a.indices)?;
    let models = a.ckpt.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    for m in &models {
        check_fits(m, &data[0])?;
    }
    let mut predictors: Vec<&dyn Predictor> = models.iter().map(|m| m as &dyn Predictor).collect();
    if a.persistence {
        predictors.push(&LastFramePredictor);
    }
    let rows = chosen
        .iter()
        .map(|s| {
            let (h, w) = (s.height(), s.width());
            let last = s.input_frames() - 1;
            let mut row = vec![
                Cell::new(h, w, s.frame(last.saturating_sub(1)).to_vec()),
                Cell::new(h, w, s.frame(last).to_vec()),
                Cell::new(h, w, s.target_pixels().to_vec()),
            ];
            for p in &predictors {
                row.push(Cell::from_prediction(h, w, &p.predict_sample(s)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let (width, height, pixels) = layout(&rows);
    write_pgm(&a.out, width, height, &pixels).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(json!({
        "command": "render",
        "out": a.out,
        "rows": rows.len(),
        "columns": 3 + predictors.len(),
        "width": width,
        "height": height,
    }))
}
