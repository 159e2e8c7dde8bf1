//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 7`.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nowcast_core::datasets::{
    background, decode_container, encode_container, gen_mnistpp, prep_nephograms, read_container, subtract_background,
    write_container, write_pgm, BackgroundMode, MnistPpConfig, NephoPipelineConfig, SequenceSample, HEADER_LEN,
};
use nowcast_core::models::{ClstmConfig, FclstmConfig, Graph, ModelGraph, ModelOutput, ModelSpec, ParamTable};
use nowcast_core::nn::{
    batchnorm2d, conv2d, conv_transpose2d, convlstm_cell, linear, lstm_cell, maxpool2d, upsample_nearest,
    BatchNormParams, BnMode, Conv2dParams, ConvLstmParams, ConvLstmState, LstmParams, LstmState, Peephole,
};
use nowcast_core::objectives::{eccr, evaluate_set, forecaster_loss, mse_loss, psnr_from_mse, ssim, LossKind};
use nowcast_core::tensor::ops::{self, Ew};
use nowcast_core::tensor::{fd_check, fd_check_many};
use nowcast_core::train::{
    decode_checkpoint, encode_checkpoint, fit, load_checkpoint, mean_loss, nadam_step, save_checkpoint, train_step,
    Nadam, OptimState, TrainConfig,
};
use nowcast_core::Tensor;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::new(shape, uniform(rng, shape.iter().product(), lo, hi)).unwrap()
}

// 1. Loss oracle.

fn loss_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (h, w) = (32, 32);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let y = uniform(&mut rng, h * w, 0.0, 255.0);
        let p = uniform(&mut rng, h * w, -40.0, 295.0);
        let mut want = 0.0;
        for r in 0..h {
            for c in 0..w {
                let (a, b) = (y[r * w + c], p[r * w + c]);
                let weight = (1.0 - a.abs().min(b.abs()) / 255.0).exp();
                want += weight * (a - b) * (a - b);
            }
        }
        let yt = Tensor::new(&[1, h, w], y).unwrap();
        let pt = Tensor::new(&[1, h, w], p).unwrap();
        let got = forecaster_loss(&pt, &yt).map_err(e2s)?.item().map_err(e2s)?;
        worst = worst.max((got - want).abs() / want.abs());
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:.3e} > 1e-9"))?;
    Ok(format!("1000 pairs, max relative error {worst:.2e}"))
}

// 2. Gradient suite.

fn op_checks() -> Vec<(&'static str, Result<f64, String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = 1e-6;
    let mut out: Vec<(&'static str, Result<f64, String>)> = Vec::new();
    let mut push = |name, r: nowcast_core::Result<f64>| out.push((name, r.map_err(e2s)));

    let a = tensor(&mut rng, &[3, 4], -2.0, 2.0);
    let b = tensor(&mut rng, &[3, 4], -2.0, 2.0);
    let probe = tensor(&mut rng, &[3, 4], -1.0, 1.0);
    // Keep |x| and the pairwise gaps away from the kinks of relu, abs and min.
    let away = |t: &Tensor<f64>, rng: &mut ChaCha8Rng| {
        let d: Vec<f64> = t
            .data()
            .iter()
            .map(|&v| {
                let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                if v.abs() < 0.1 {
                    s * 0.5
                } else {
                    v
                }
            })
            .collect();
        Tensor::new(t.shape(), d).unwrap()
    };
    let a = away(&a, &mut rng);
    let b_far: Tensor<f64> = Tensor::new(
        b.shape(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| if (x - y).abs() < 0.1 { x + 0.5 } else { y })
            .collect(),
    )
    .unwrap();
    for op in [Ew::Add, Ew::Sub, Ew::Mul, Ew::Min2] {
        let name = match op {
            Ew::Add => "add",
            Ew::Sub => "sub",
            Ew::Mul => "mul",
            _ => "min2",
        };
        push(
            name,
            fd_check_many(
                |xs| Ok(ops::sum(&ops::mul(&ops::ew(op, &xs[0], Some(&xs[1]))?, &probe)?)),
                &[a.clone(), b_far.clone()],
                eps,
            ),
        );
    }
    for (name, op) in [
        ("sigmoid", Ew::Sigmoid),
        ("tanh", Ew::Tanh),
        ("relu", Ew::Relu),
        ("exp", Ew::Exp),
        ("abs", Ew::Abs),
    ] {
        push(
            name,
            fd_check(|x| Ok(ops::sum(&ops::mul(&ops::ew(op, x, None)?, &probe)?)), &a, eps),
        );
    }
    push(
        "scale",
        fd_check(|x| Ok(ops::sum(&ops::mul(&ops::scale(x, -1.7), &probe)?)), &a, eps),
    );
    push("sum", fd_check(|x| Ok(ops::sum(&ops::mul(x, x)?)), &a, eps));
    push("mean", fd_check(|x| Ok(ops::mean(&ops::mul(x, x)?)), &a, eps));

    let x = tensor(&mut rng, &[2, 6, 6], -1.0, 1.0);
    let w = tensor(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
    let bias = tensor(&mut rng, &[3], -0.5, 0.5);
    let cprobe = tensor(&mut rng, &[3, 6, 6], -1.0, 1.0);
    push(
        "conv2d",
        fd_check_many(
            |xs| {
                let y = conv2d(&xs[0], &Conv2dParams::same(xs[1].clone(), Some(xs[2].clone())))?;
                Ok(ops::sum(&ops::mul(&y, &cprobe)?))
            },
            &[x.clone(), w.clone(), bias.clone()],
            eps,
        ),
    );
    let wt = tensor(&mut rng, &[2, 3, 3, 3], -0.5, 0.5);
    push(
        "conv_transpose2d",
        fd_check_many(
            |xs| {
                let y = conv_transpose2d(&xs[0], &Conv2dParams::same(xs[1].clone(), Some(xs[2].clone())))?;
                Ok(ops::sum(&ops::mul(&y, &cprobe)?))
            },
            &[x.clone(), wt, bias.clone()],
            eps,
        ),
    );
    let pprobe = tensor(&mut rng, &[2, 3, 3], -1.0, 1.0);
    push(
        "maxpool2d",
        fd_check(|x| Ok(ops::sum(&ops::mul(&maxpool2d(x, 2)?.0, &pprobe)?)), &x, eps),
    );
    let uprobe = tensor(&mut rng, &[2, 12, 12], -1.0, 1.0);
    push(
        "upsample_nearest",
        fd_check(|x| Ok(ops::sum(&ops::mul(&upsample_nearest(x, 2)?, &uprobe)?)), &x, eps),
    );
    let bx = tensor(&mut rng, &[3, 2, 4, 4], -2.0, 2.0);
    let gamma = tensor(&mut rng, &[2], 0.5, 1.5);
    let beta = tensor(&mut rng, &[2], -0.5, 0.5);
    let bprobe = tensor(&mut rng, &[3, 2, 4, 4], -1.0, 1.0);
    push(
        "batchnorm2d",
        fd_check_many(
            |xs| {
                let mut p = BatchNormParams::new(2, BnMode::Train);
                p.gamma = xs[1].clone();
                p.beta = xs[2].clone();
                Ok(ops::sum(&ops::mul(&batchnorm2d(&xs[0], &mut p)?, &bprobe)?))
            },
            &[bx, gamma, beta],
            eps,
        ),
    );
    let lx = tensor(&mut rng, &[5], -1.0, 1.0);
    let lw = tensor(&mut rng, &[4, 5], -0.5, 0.5);
    let lb = tensor(&mut rng, &[4], -0.5, 0.5);
    let lprobe = tensor(&mut rng, &[4], -1.0, 1.0);
    push(
        "linear",
        fd_check_many(
            |xs| Ok(ops::sum(&ops::mul(&linear(&xs[0], &xs[1], Some(&xs[2]))?, &lprobe)?)),
            &[lx.clone(), lw, lb],
            eps,
        ),
    );
    let hid = 3;
    let lstm_in = vec![
        lx,
        tensor(&mut rng, &[hid], -0.5, 0.5),
        tensor(&mut rng, &[hid], -0.5, 0.5),
        tensor(&mut rng, &[4 * hid, 5], -0.5, 0.5),
        tensor(&mut rng, &[4 * hid, hid], -0.5, 0.5),
        tensor(&mut rng, &[4 * hid], -0.5, 0.5),
    ];
    let hprobe = tensor(&mut rng, &[hid], -1.0, 1.0);
    push(
        "lstm_cell",
        fd_check_many(
            |xs| {
                let p = LstmParams {
                    wx: xs[3].clone(),
                    wh: xs[4].clone(),
                    bias: xs[5].clone(),
                };
                let s = lstm_cell(
                    &xs[0],
                    &LstmState {
                        h: xs[1].clone(),
                        c: xs[2].clone(),
                    },
                    &p,
                )?;
                ops::add(
                    &ops::sum(&ops::mul(&s.h, &hprobe)?),
                    &ops::sum(&ops::mul(&s.c, &hprobe)?),
                )
            },
            &lstm_in,
            eps,
        ),
    );
    let (ch, cw) = (4, 4);
    let clstm_in = vec![
        tensor(&mut rng, &[2, ch, cw], -1.0, 1.0),
        tensor(&mut rng, &[hid, ch, cw], -0.5, 0.5),
        tensor(&mut rng, &[hid, ch, cw], -0.5, 0.5),
        tensor(&mut rng, &[4 * hid, 2, 3, 3], -0.3, 0.3),
        tensor(&mut rng, &[4 * hid, hid, 3, 3], -0.3, 0.3),
        tensor(&mut rng, &[4 * hid], -0.3, 0.3),
        tensor(&mut rng, &[hid, ch, cw], -0.5, 0.5),
        tensor(&mut rng, &[hid, ch, cw], -0.5, 0.5),
        tensor(&mut rng, &[hid, ch, cw], -0.5, 0.5),
    ];
    let sprobe = tensor(&mut rng, &[hid, ch, cw], -1.0, 1.0);
    for (name, peep) in [("convlstm_cell", false), ("convlstm_cell+peephole", true)] {
        push(
            name,
            fd_check_many(
                |xs| {
                    let p = ConvLstmParams {
                        wx: xs[3].clone(),
                        wh: xs[4].clone(),
                        bias: xs[5].clone(),
                        peephole: peep.then(|| Peephole {
                            wci: xs[6].clone(),
                            wcf: xs[7].clone(),
                            wco: xs[8].clone(),
                        }),
                    };
                    let st = ConvLstmState {
                        h: xs[1].clone(),
                        c: xs[2].clone(),
                    };
                    let s = convlstm_cell(&xs[0], &st, &p)?;
                    ops::add(
                        &ops::sum(&ops::mul(&s.h, &sprobe)?),
                        &ops::sum(&ops::mul(&s.c, &sprobe)?),
                    )
                },
                &clstm_in,
                eps,
            ),
        );
    }
    let y = tensor(&mut rng, &[1, 5, 5], 0.0, 255.0);
    let p = tensor(&mut rng, &[1, 5, 5], 0.0, 255.0);
    push(
        "mse_loss",
        fd_check(|x| Ok(ops::scale(&mse_loss(x, &y)?, 1e-3)), &p, 1e-4),
    );
    push(
        "forecaster_loss",
        fd_check(|x| Ok(ops::scale(&forecaster_loss(x, &y)?, 1e-4)), &p, 1e-4),
    );
    out
}

/// Probe-weighted sum of every prediction the model emits, scaled to order one.
fn probe_loss(out: &ModelOutput<f64>, probe: &Tensor<f64>) -> nowcast_core::Result<Tensor<f64>> {
    let mut total = ops::sum(&ops::mul(out.prediction(), probe)?);
    if let ModelOutput::MultiScale(ms) = out {
        for p in &ms.per_scale_preds {
            total = ops::add(&total, &ops::sum(&ops::mul(p, probe)?))?;
        }
    }
    Ok(ops::scale(&total, 1.0 / (255.0 * probe.numel() as f64)))
}

fn whole_model_check(spec: ModelSpec) -> Result<f64, String> {
    let m = ModelGraph::build(spec.clone(), 21).map_err(e2s)?;
    let table: ParamTable<f64> = m.params.cast();
    let (h, w) = spec.input_hw();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = tensor(&mut rng, &[spec.input_frames(), 1, h, w], 0.0, 255.0);
    let probe = tensor(&mut rng, &[1, h, w], -1.0, 1.0);
    let names: Vec<String> = table.trainable().map(|e| e.name.clone()).collect();
    let leaves: Vec<Tensor<f64>> = table
        .trainable()
        .map(|e| Tensor::new(&e.shape, e.data.clone()).unwrap())
        .collect();
    fd_check_many(
        |vals| {
            let map: HashMap<String, Tensor<f64>> = names.iter().cloned().zip(vals.iter().cloned()).collect();
            let mut g = Graph::with_leaves(&table, BnMode::Train, map)?;
            probe_loss(&spec.forward(&mut g, &x)?, &probe)
        },
        &leaves,
        1e-6,
    )
    .map_err(e2s)
}

fn gradient_suite() -> Check {
    let mut failures = Vec::new();
    let mut worst_op = 0.0f64;
    let ops = op_checks();
    for (name, r) in &ops {
        match r {
            Ok(e) if *e <= 1e-4 => worst_op = worst_op.max(*e),
            Ok(e) => failures.push(format!("{name} {e:.2e}")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let mut worst_model = 0.0f64;
    let models = [
        (
            "fclstm",
            ModelSpec::Fclstm(FclstmConfig::new(vec![2, 2, 4, 4], (16, 16), 3)),
        ),
        ("clstm", ModelSpec::Clstm(ClstmConfig::new(vec![2, 2, 4], (16, 16), 3))),
    ];
    for (name, spec) in models {
        match whole_model_check(spec) {
            Ok(e) if e <= 1e-3 => worst_model = worst_model.max(e),
            Ok(e) => failures.push(format!("{name} {e:.2e}")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!(
        "{} ops max {worst_op:.2e} (<= 1e-4), 2 models max {worst_model:.2e} (<= 1e-3)",
        ops.len()
    ))
}

// 3. Optimizer oracle.

fn optimizer_oracle() -> Check {
    let mut table = ParamTable::<f64>::new();
    table
        .declare("x", &[1], nowcast_core::models::ParamRole::Bias)
        .map_err(e2s)?;
    table.get_mut("x").unwrap().data[0] = -0.4;
    let mut state = OptimState::new(&table, Nadam::default());
    let (lr, b1, b2, eps) = (0.002f64, 0.9f64, 0.999f64, 1e-8f64);
    let (mut x, mut m, mut v) = (-0.4f64, 0.0f64, 0.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for t in 1..=100 {
        let g: f64 = rng.gen_range(-3.0..3.0);
        nadam_step(&mut table, &[("x".to_string(), vec![g])], &mut state).map_err(e2s)?;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let bc1 = 1.0 - b1.powi(t);
        let m_hat = m / bc1;
        let v_hat = v / (1.0 - b2.powi(t));
        x -= lr * (b1 * m_hat + (1.0 - b1) * g / bc1) / (v_hat.sqrt() + eps);
        worst = worst.max((table.get("x").unwrap().data[0] - x).abs());
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:.3e} > 1e-10"))?;
    ensure(state.step == 100, || format!("step counter {}", state.step))?;
    Ok(format!("100 steps, max deviation {worst:.2e}"))
}

// 4. Overfit.

fn overfit_run(loss: LossKind, seed: u64) -> Result<(f64, f64), String> {
    let data = gen_mnistpp(&MnistPpConfig::default(), 400 + seed, 8).map_err(e2s)?;
    let spec = ModelSpec::Fclstm(FclstmConfig::new(vec![4, 4, 8, 8], (64, 64), 9));
    let mut model = ModelGraph::build(spec, seed).map_err(e2s)?;
    let mut optim = OptimState::new(&model.params, Nadam::default());
    let initial = mean_loss(&model, loss, &data).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = 4;
    while optim.step < 200 {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(batch) {
            if optim.step == 200 {
                break;
            }
            let b: Vec<&SequenceSample> = chunk.iter().map(|&i| &data[i]).collect();
            train_step(&mut model, &mut optim, loss, &b).map_err(e2s)?;
        }
    }
    let last = mean_loss(&model, loss, &data).map_err(e2s)?;
    Ok((initial, last))
}

fn overfit() -> Check {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for loss in [LossKind::Mse, LossKind::Forecaster] {
        for seed in 0..3 {
            let (a, b) = overfit_run(loss, seed)?;
            let ratio = b / a;
            lines.push(format!("{}/{seed} {:.1}%", loss.name(), 100.0 * ratio));
            if ratio.is_nan() || ratio > 0.10 {
                failures.push(format!(
                    "{}/seed {seed}: {a:.1} -> {b:.1} ({:.1}%)",
                    loss.name(),
                    100.0 * ratio
                ));
            }
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("final/initial loss after 200 steps: {}", lines.join(", ")))
}

// 5 and 6. Directional comparisons at matched budgets.

#[derive(Clone, Debug)]
struct RunResult {
    mse: f64,
    eccr: [f64; 3],
}

const TAUS: [f64; 3] = [10.0, 30.0, 60.0];

struct Comparison {
    fclstm_mse: Vec<RunResult>,
    fclstm_forecaster: Vec<RunResult>,
    clstm_mse: Vec<RunResult>,
}

fn comparison_run(
    spec: &ModelSpec,
    loss: LossKind,
    seed: u64,
    train: &[SequenceSample],
    test: &[SequenceSample],
) -> Result<RunResult, String> {
    let mut model = ModelGraph::build(spec.clone(), seed).map_err(e2s)?;
    let mut optim = OptimState::new(&model.params, Nadam::default());
    let cfg = TrainConfig {
        loss,
        epochs: 10,
        batch_size: 4,
        seed,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let logs = fit(&mut model, &mut optim, &cfg, train, test, None).map_err(e2s)?;
    let last = logs.last().and_then(|l| l.eval).ok_or("no evaluation logged")?;
    let mut eccr = [0.0; 3];
    for (k, tau) in TAUS.iter().enumerate() {
        eccr[k] = evaluate_set(&model, test, *tau).map_err(e2s)?.eccr;
    }
    Ok(RunResult { mse: last.mse, eccr })
}

fn comparison() -> &'static Result<Comparison, String> {
    static CELL: OnceLock<Result<Comparison, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let fclstm = ModelSpec::Fclstm(FclstmConfig::new(vec![8, 8, 16, 16, 32, 32], (64, 64), 9));
        let clstm = ModelSpec::Clstm(ClstmConfig::new(vec![8, 16, 32], (64, 64), 9));
        let mut c = Comparison {
            fclstm_mse: Vec::new(),
            fclstm_forecaster: Vec::new(),
            clstm_mse: Vec::new(),
        };
        for seed in 1..=3u64 {
            let cfg = MnistPpConfig::default();
            let train = gen_mnistpp(&cfg, 1000 + seed, 300).map_err(e2s)?;
            let test = gen_mnistpp(&cfg, 2000 + seed, 60).map_err(e2s)?;
            c.fclstm_mse
                .push(comparison_run(&fclstm, LossKind::Mse, seed, &train, &test)?);
            c.fclstm_forecaster
                .push(comparison_run(&fclstm, LossKind::Forecaster, seed, &train, &test)?);
            c.clstm_mse
                .push(comparison_run(&clstm, LossKind::Mse, seed, &train, &test)?);
            eprintln!(
                "  seed {seed}: fclstm {:?} | fclstm-F {:?} | clstm {:?}",
                c.fclstm_mse.last().unwrap(),
                c.fclstm_forecaster.last().unwrap(),
                c.clstm_mse.last().unwrap()
            );
        }
        Ok(c)
    })
}

fn model_ordering() -> Check {
    let c = comparison().as_ref().map_err(Clone::clone)?;
    let wins = c
        .fclstm_mse
        .iter()
        .zip(&c.clstm_mse)
        .filter(|(f, b)| f.mse < b.mse)
        .count();
    let pairs: Vec<String> = c
        .fclstm_mse
        .iter()
        .zip(&c.clstm_mse)
        .map(|(f, b)| format!("{:.1} vs {:.1}", f.mse, b.mse))
        .collect();
    ensure(wins >= 2, || {
        format!("F-CLSTM lower in {wins}/3 seeds ({})", pairs.join(", "))
    })?;
    Ok(format!(
        "F-CLSTM lower test MSE in {wins}/3 seeds ({})",
        pairs.join(", ")
    ))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn loss_ordering() -> Check {
    let c = comparison().as_ref().map_err(Clone::clone)?;
    let mse_m = mean(c.fclstm_mse.iter().map(|r| r.mse));
    let mse_f = mean(c.fclstm_forecaster.iter().map(|r| r.mse));
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (k, tau) in TAUS.iter().enumerate() {
        let e_m = mean(c.fclstm_mse.iter().map(|r| r.eccr[k]));
        let e_f = mean(c.fclstm_forecaster.iter().map(|r| r.eccr[k]));
        parts.push(format!("tau {tau}: {:.2}% vs {:.2}%", 100.0 * e_f, 100.0 * e_m));
        if e_f < e_m {
            failures.push(format!("ECCR at tau {tau}: {e_f:.4} < {e_m:.4}"));
        }
    }
    let rel = (mse_f - mse_m).abs() / mse_m;
    if rel > 0.10 {
        failures.push(format!("MSE {mse_f:.1} vs {mse_m:.1} differs by {:.1}%", 100.0 * rel));
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!(
        "ECCR forecaster vs mse {}; MSE {mse_f:.1} vs {mse_m:.1} ({:.1}%)",
        parts.join(", "),
        100.0 * rel
    ))
}

// 7. Metric closed forms.

fn metric_closed_forms() -> Check {
    let n = 16 * 16;
    let zeros = vec![0.0; n];
    let full = vec![255.0; n];
    let psnr = psnr_from_mse(255.0 * 255.0);
    ensure(psnr == 0.0, || format!("psnr(255^2) = {psnr}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = uniform(&mut rng, n, 0.0, 255.0);
    let same = ssim(&img, &img, 16, 16).map_err(e2s)?;
    ensure((same - 1.0).abs() <= 1e-12, || format!("ssim(identical) = {same}"))?;
    let opposite = ssim(&zeros, &full, 16, 16).map_err(e2s)?;
    ensure((opposite - 1.0e-4).abs() <= 1e-6, || {
        format!("ssim(0, 255) = {opposite}")
    })?;
    let cases = [
        (eccr(&zeros, 30.0).map_err(e2s)?, 0.0),
        (eccr(&full, 30.0).map_err(e2s)?, 1.0),
        (eccr(&vec![30.0; n], 30.0).map_err(e2s)?, 0.0),
        (eccr(&[0.0, 31.0, 100.0, 30.0], 30.0).map_err(e2s)?, 0.5),
    ];
    for (got, want) in cases {
        ensure(got == want, || format!("eccr {got} != {want}"))?;
    }
    Ok(format!(
        "psnr {psnr} dB, ssim identical {same}, ssim(0,255) {opposite:.4e}, eccr cases exact"
    ))
}

// 8. Determinism through the command line.

fn nowcast(args: &[&str], dir: &Path, threads: &str) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .current_dir(dir)
        .env("NOWCAST_THREADS", threads)
        .output()
        .map_err(e2s)?;
    if !out.status.success() {
        return Err(format!(
            "`nowcast {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_nephograms(
    dir: &Path,
    times: &[&str],
    (w, h): (usize, usize),
    fill: impl Fn(usize, usize) -> u8,
) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(e2s)?;
    for (k, t) in times.iter().enumerate() {
        let px: Vec<u8> = (0..w * h).map(|i| fill(k, i)).collect();
        write_pgm(&dir.join(format!("IR1_{t}.pgm")), w, h, &px).map_err(e2s)?;
    }
    Ok(())
}

fn half_hours(start_hour: u32, count: u32) -> Vec<String> {
    (0..count)
        .map(|k| {
            let minutes = start_hour * 60 + 30 * k;
            format!("20150601{:02}{:02}", minutes / 60, minutes % 60)
        })
        .collect()
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let neph: Vec<String> = half_hours(0, 8);
    let neph_refs: Vec<&str> = neph.iter().map(String::as_str).collect();
    write_nephograms(&tmp.path().join("raw"), &neph_refs, (24, 24), |k, i| {
        ((i * 7 + k * 13) % 200 + 20) as u8
    })?;
    let commands: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (
            vec!["gen-mnistpp", "--out", "d.scsq", "--count", "12", "--seed", "42"],
            vec!["d.scsq"],
        ),
        (
            vec![
                "prep-nephograms",
                "--src",
                "raw",
                "--out",
                "n.scsq",
                "--crop",
                "16",
                "--seed",
                "5",
            ],
            vec!["n.scsq"],
        ),
        (
            vec![
                "train",
                "--data",
                "d.scsq",
                "--model",
                "fclstm",
                "--loss",
                "forecaster",
                "--lr",
                "0.002",
                "--seed",
                "1",
                "--epochs",
                "2",
                "--ckpt",
                "m.sckp",
                "--channels",
                "2,2,4,4",
            ],
            vec!["m.sckp", "m.best.sckp", "m.log.jsonl"],
        ),
        (
            vec!["eval", "--data", "d.scsq", "--ckpt", "m.sckp", "--eccr-tau", "30"],
            vec![],
        ),
        (
            vec!["predict", "--data", "d.scsq", "--ckpt", "m.sckp", "--out", "p.scsq"],
            vec!["p.scsq"],
        ),
        (
            vec![
                "render",
                "--data",
                "d.scsq",
                "--ckpt",
                "m.sckp",
                "--indices",
                "0,3",
                "--out",
                "g.pgm",
            ],
            vec!["g.pgm"],
        ),
    ];
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .zip(["1", "0"])
        .map(|(name, threads)| {
            let dir = tmp.path().join(name);
            std::fs::create_dir_all(&dir).map_err(e2s)?;
            copy_dir(&tmp.path().join("raw"), &dir.join("raw"))?;
            let mut outputs = Vec::new();
            for (args, files) in &commands {
                let stdout = nowcast(args, &dir, threads)?;
                ensure(stdout.lines().count() == 1, || {
                    format!("{} printed {stdout:?}", args[0])
                })?;
                serde_json::from_str::<serde_json::Value>(&stdout).map_err(e2s)?;
                outputs.push((args[0], "stdout".to_string(), stdout.into_bytes()));
                for f in files {
                    outputs.push((args[0], f.to_string(), std::fs::read(dir.join(f)).map_err(e2s)?));
                }
            }
            Ok::<_, String>(outputs)
        })
        .collect::<Result<_, _>>()?;
    let mut compared = 0;
    for ((cmd, file, a), (_, _, b)) in runs[0].iter().zip(&runs[1]) {
        ensure(a == b, || format!("{cmd}: {file} differs between runs"))?;
        compared += 1;
    }
    Ok(format!(
        "{} commands twice (1 thread and auto), {compared} artifacts bit-identical",
        commands.len()
    ))
}

fn copy_dir(src: &Path, dst: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dst).map_err(e2s)?;
    for e in std::fs::read_dir(src).map_err(e2s)? {
        let e = e.map_err(e2s)?;
        std::fs::copy(e.path(), dst.join(e.file_name())).map_err(e2s)?;
    }
    Ok(())
}

// 9. Formats.

fn formats() -> Check {
    let data = gen_mnistpp(&MnistPpConfig::default(), 9, 1000).map_err(e2s)?;
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let path = tmp.path().join("big.scsq");
    write_container(&data, &path).map_err(e2s)?;
    let size = std::fs::metadata(&path).map_err(e2s)?.len();
    ensure(size == 40_960_000 + 25 && HEADER_LEN == 25, || {
        format!("container is {size} bytes")
    })?;
    let back = read_container(&path).map_err(e2s)?;
    let same = |a: &[SequenceSample], b: &[SequenceSample]| {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                (x.len(), x.height(), x.width(), x.pixels()) == (y.len(), y.height(), y.width(), y.pixels())
            })
    };
    ensure(same(&back, &data), || "decoded samples differ".into())?;
    let bytes = std::fs::read(&path).map_err(e2s)?;
    ensure(encode_container(&back).map_err(e2s)? == bytes, || {
        "re-encoding differs".into()
    })?;
    ensure(same(&decode_container(&bytes, "big").map_err(e2s)?, &data), || {
        "in-memory decode differs".into()
    })?;

    let spec = ModelSpec::Fclstm(FclstmConfig::new(vec![4, 4, 8, 8], (64, 64), 9));
    let mut model = ModelGraph::build(spec, 3).map_err(e2s)?;
    let mut optim = OptimState::new(&model.params, Nadam::default());
    let batch: Vec<&SequenceSample> = data[..2].iter().collect();
    train_step(&mut model, &mut optim, LossKind::Mse, &batch).map_err(e2s)?;
    let ck = tmp.path().join("m.sckp");
    save_checkpoint(&model, &optim, None, &ck).map_err(e2s)?;
    let raw = std::fs::read(&ck).map_err(e2s)?;
    let loaded = load_checkpoint(&ck).map_err(e2s)?;
    ensure(loaded.model == model && loaded.optim == optim, || {
        "checkpoint contents differ".into()
    })?;
    ensure(
        encode_checkpoint(&loaded.model, &loaded.optim, None).map_err(e2s)? == raw,
        || "checkpoint re-encoding differs".into(),
    )?;
    ensure(decode_checkpoint(&raw, "m").map_err(e2s)?.optim.step == 1, || {
        "step counter lost".into()
    })?;
    let x = data[5].last_inputs::<f32>(9).map_err(e2s)?;
    let (a, b) = (model.predict(&x).map_err(e2s)?, loaded.model.predict(&x).map_err(e2s)?);
    ensure(a.data() == b.data(), || "forward differs after reload".into())?;
    Ok(format!(
        "1000-sequence container {size} bytes, checkpoint {} bytes, both bit-exact",
        raw.len()
    ))
}

// 10. Nephogram pipeline semantics.

/// Runs of timestamps spaced exactly `step` minutes apart, by direct scan.
fn expected_runs(minutes: &[i64], step: i64) -> Vec<Vec<i64>> {
    let mut runs: Vec<Vec<i64>> = Vec::new();
    for &m in minutes {
        match runs.last_mut() {
            Some(r) if m - r[r.len() - 1] == step => r.push(m),
            _ => runs.push(vec![m]),
        }
    }
    runs
}

fn pipeline_semantics() -> Check {
    // 14 frames, a 60-minute gap, 9 frames, a 45-minute gap, 7 frames.
    let mut minutes: Vec<i64> = (0..14).map(|k| 30 * k).collect();
    let after_gap = minutes[13] + 60;
    minutes.extend((0..9).map(|k| after_gap + 30 * k));
    let after_odd = minutes[minutes.len() - 1] + 45;
    minutes.extend((0..7).map(|k| after_odd + 30 * k));
    let stamp = |m: i64| format!("201506{:02}{:02}{:02}", 1 + m / 1440, (m % 1440) / 60, m % 60);
    let names: Vec<String> = minutes.iter().map(|&m| stamp(m)).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();

    let runs = expected_runs(&minutes, 30);
    let seq_len = 7;
    let want_windows: Vec<Vec<String>> = runs
        .iter()
        .flat_map(|r| {
            r.chunks_exact(seq_len)
                .map(|c| c.iter().map(|&m| stamp(m)).collect())
                .collect::<Vec<_>>()
        })
        .collect();

    let tmp = tempfile::tempdir().map_err(e2s)?;
    let dir = tmp.path().join("ir");
    write_nephograms(&dir, &refs, (20, 20), |k, i| (40 + (k * 5 + i) % 150) as u8)?;
    let cfg = NephoPipelineConfig {
        crop: 12,
        crops_per_window: 3,
        min_mean: 0.0,
        ..NephoPipelineConfig::default()
    };
    let (samples, report) = prep_nephograms(&dir, &cfg, 11).map_err(e2s)?;
    ensure(report.segments == runs.len(), || {
        format!("{} segments, expected {}", report.segments, runs.len())
    })?;
    ensure(report.windows == want_windows.len(), || {
        format!("{} windows, expected {}", report.windows, want_windows.len())
    })?;
    ensure(samples.len() == 3 * want_windows.len(), || {
        format!("{} samples", samples.len())
    })?;
    for s in &samples {
        let ts = &s.meta.as_ref().ok_or("sample without timestamps")?.timestamps;
        ensure(want_windows.contains(ts), || format!("unexpected window {ts:?}"))?;
    }
    for w in &want_windows {
        let n = samples
            .iter()
            .filter(|s| &s.meta.as_ref().unwrap().timestamps == w)
            .count();
        ensure(n == 3, || format!("window starting {} has {n} crops", w[0]))?;
    }

    // Frames identical to a constant background vanish entirely.
    let flat = vec![90u8; 20 * 20];
    let views: Vec<&[u8]> = vec![&flat; 5];
    for mode in [BackgroundMode::Min, BackgroundMode::Median] {
        let bg = background(&views, &mode, 20, 20).map_err(e2s)?;
        ensure(subtract_background(&flat, &bg).iter().all(|&v| v == 0), || {
            format!("{mode:?} left residue")
        })?;
    }
    let const_dir = tmp.path().join("flat");
    let seven = half_hours(6, 7);
    let seven: Vec<&str> = seven.iter().map(String::as_str).collect();
    write_nephograms(&const_dir, &seven, (20, 20), |_, _| 90)?;
    let (flat_samples, _) = prep_nephograms(&const_dir, &cfg, 3).map_err(e2s)?;
    ensure(flat_samples.iter().all(|s| s.pixels().iter().all(|&v| v == 0)), || {
        "constant background did not subtract to zero".into()
    })?;
    Ok(format!(
        "{} runs and {} windows as predicted; constant background subtracts to zero",
        runs.len(),
        want_windows.len()
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion {
            id: 1,
            name: "loss oracle",
            budget: Duration::from_secs(10),
            run: loss_oracle,
        },
        Criterion {
            id: 2,
            name: "gradient suite",
            budget: Duration::from_secs(300),
            run: gradient_suite,
        },
        Criterion {
            id: 3,
            name: "optimizer oracle",
            budget: Duration::from_secs(1),
            run: optimizer_oracle,
        },
        Criterion {
            id: 4,
            name: "overfit",
            budget: Duration::from_secs(900),
            run: overfit,
        },
        Criterion {
            id: 5,
            name: "model ordering",
            budget: Duration::from_secs(7200),
            run: model_ordering,
        },
        Criterion {
            id: 6,
            name: "loss ordering",
            budget: Duration::from_secs(7200),
            run: loss_ordering,
        },
        Criterion {
            id: 7,
            name: "metric closed forms",
            budget: Duration::from_secs(1),
            run: metric_closed_forms,
        },
        Criterion {
            id: 8,
            name: "determinism",
            budget: Duration::from_secs(600),
            run: determinism,
        },
        Criterion {
            id: 9,
            name: "formats",
            budget: Duration::from_secs(10),
            run: formats,
        },
        Criterion {
            id: 10,
            name: "pipeline semantics",
            budget: Duration::from_secs(10),
            run: pipeline_semantics,
        },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            if took <= c.budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {took:.1?}, budget {:?}", c.budget))
            }
        });
        ran += 1;
        match result {
            Ok(detail) => println!("PASS {:>2} {}: {detail} [{took:.1?}]", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {}: {why} [{took:.1?}]", c.id, c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
