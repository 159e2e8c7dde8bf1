use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel batch normalization state.
#[derive(Clone, Debug)]
pub struct BatchNormParams<F: Scalar> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    pub eps: f64,
    pub momentum: f64,
    pub mode: BnMode,
}

impl<F: Scalar> BatchNormParams<F> {
    /// gamma = 1, beta = 0, running statistics (0, 1).
    pub fn new(channels: usize, mode: BnMode) -> Self {
        BatchNormParams {
            gamma: Tensor::full(&[channels], F::one()).expect("positive channel count"),
            beta: Tensor::zeros(&[channels]).expect("positive channel count"),
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
            eps: 1e-5,
            momentum: 0.1,
            mode,
        }
    }
}

/// Normalizes `[C,H,W]` or `[N,C,H,W]` over every axis but C. Train mode uses
/// batch statistics and folds them into the running estimates; eval mode is
/// the fixed affine map given by the running estimates.
pub fn batchnorm2d<F: Scalar>(x: &Tensor<F>, p: &mut BatchNormParams<F>) -> Result<Tensor<F>> {
    const OP: &str = "batchnorm2d";
    let (n, c, spatial) = match *x.shape() {
        [c, h, w] => (1, c, h * w),
        [n, c, h, w] => (n, c, h * w),
        _ => {
            return Err(Error::invalid_shape(
                OP,
                format!("expected [C,H,W] or [N,C,H,W], got {:?}", x.shape()),
            ))
        }
    };
    for t in [&p.gamma, &p.beta] {
        if t.shape() != [c] {
            return Err(Error::shape(OP, t.shape(), &[c]));
        }
    }
    if p.running_mean.len() != c || p.running_var.len() != c {
        return Err(Error::invalid_shape(
            OP,
            "running statistics do not match channel count",
        ));
    }
    let count = n * spatial;
    let src = x.data();
    let chan_slices = |ch: usize| (0..n).map(move |b| (b * c + ch) * spatial..(b * c + ch + 1) * spatial);

    let (mean, var) = match p.mode {
        BnMode::Train => {
            if count < 2 {
                return Err(Error::invalid_shape(
                    OP,
                    format!("train mode needs at least 2 values per channel, got {count}"),
                ));
            }
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let s: f64 = chan_slices(ch).flat_map(|r| src[r].iter()).map(|v| v.as_f64()).sum();
                let m = s / count as f64;
                let ss: f64 = chan_slices(ch)
                    .flat_map(|r| src[r].iter())
                    .map(|v| (v.as_f64() - m).powi(2))
                    .sum();
                mean[ch] = m;
                var[ch] = ss / count as f64;
            }
            let mom = p.momentum;
            let unbias = count as f64 / (count - 1) as f64;
            for ch in 0..c {
                let rm = p.running_mean[ch].as_f64();
                let rv = p.running_var[ch].as_f64();
                p.running_mean[ch] = F::from_f64((1.0 - mom) * rm + mom * mean[ch]);
                p.running_var[ch] = F::from_f64((1.0 - mom) * rv + mom * var[ch] * unbias);
            }
            (mean, var)
        }
        BnMode::Eval => (
            p.running_mean.iter().map(|v| v.as_f64()).collect(),
            p.running_var.iter().map(|v| v.as_f64()).collect(),
        ),
    };

    let inv_std: Vec<F> = var.iter().map(|v| F::from_f64(1.0 / (v + p.eps).sqrt())).collect();
    let mean: Vec<F> = mean.into_iter().map(F::from_f64).collect();
    let (gamma, beta) = (p.gamma.data(), p.beta.data());

    let mut xhat = vec![F::zero(); src.len()];
    let mut out = vec![F::zero(); src.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * spatial..(b * c + ch + 1) * spatial;
            for i in r {
                let xh = (src[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }

    let train = p.mode == BnMode::Train;
    let inputs = vec![x.clone(), p.gamma.clone(), p.beta.clone()];
    Ok(Tensor::from_op(
        OP,
        x.shape().to_vec(),
        out,
        inputs,
        move |inp, _, g| {
            let gamma = inp[1].data();
            let mut gsum = vec![F::zero(); c];
            let mut gdot = vec![F::zero(); c];
            for b in 0..n {
                for ch in 0..c {
                    let r = (b * c + ch) * spatial..(b * c + ch + 1) * spatial;
                    for i in r {
                        gsum[ch] += g[i];
                        gdot[ch] += g[i] * xhat[i];
                    }
                }
            }
            let gx = inp[0].requires_grad().then(|| {
                let mut gx = vec![F::zero(); g.len()];
                let m = F::from_f64(count as f64);
                for b in 0..n {
                    for ch in 0..c {
                        let r = (b * c + ch) * spatial..(b * c + ch + 1) * spatial;
                        let k = gamma[ch] * inv_std[ch];
                        if train {
                            let (sm, dm) = (gsum[ch] / m, gdot[ch] / m);
                            for i in r {
                                gx[i] = k * (g[i] - sm - xhat[i] * dm);
                            }
                        } else {
                            for i in r {
                                gx[i] = k * g[i];
                            }
                        }
                    }
                }
                gx
            });
            vec![gx, Some(gdot), Some(gsum)]
        },
    ))
}
