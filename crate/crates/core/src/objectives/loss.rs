use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelOutput, MultiScaleOutput};
use crate::tensor::{ops, Scalar, Tensor};

fn check_pair<F: Scalar>(op: &'static str, pred: &Tensor<F>, target: &Tensor<F>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(op, pred.shape(), target.shape()));
    }
    Ok(())
}

/// Mean over pixels of the squared residual.
pub fn mse_loss<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
    check_pair("mse_loss", pred, target)?;
    let d = ops::sub(pred, target)?;
    Ok(ops::mean(&ops::mul(&d, &d)?))
}

/// Per-pixel terms `exp(1 - min(|y|, |y_hat|) / 255) * (y - y_hat)^2`. The
/// weight is largest where either image is dark.
fn forecaster_terms<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
    check_pair("forecaster_loss", pred, target)?;
    if let Some(i) = pred.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("forecaster_loss: prediction pixel {i}")));
    }
    let low = ops::min2(&ops::abs(pred), &ops::abs(target))?;
    let weight = ops::exp(&ops::shift(&ops::scale(&low, -1.0 / 255.0), 1.0));
    let d = ops::sub(pred, target)?;
    ops::mul(&weight, &ops::mul(&d, &d)?)
}

/// Weighted squared error summed over all pixels.
pub fn forecaster_loss<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
    Ok(ops::sum(&forecaster_terms(pred, target)?))
}

/// [`forecaster_loss`] divided by the pixel count.
pub fn forecaster_loss_mean<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
    Ok(ops::mean(&forecaster_terms(pred, target)?))
}

/// Training objective. Both variants are per-pixel means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Forecaster,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Forecaster => "forecaster",
        }
    }

    pub fn eval<F: Scalar>(self, pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
        match self {
            LossKind::Mse => mse_loss(pred, target),
            LossKind::Forecaster => forecaster_loss_mean(pred, target),
        }
    }

    /// Multi-scale sum for F-CLSTM outputs, plain loss otherwise.
    pub fn eval_output<F: Scalar>(self, out: &ModelOutput<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
        match out {
            ModelOutput::MultiScale(ms) => multiscale_loss(ms, target, self),
            ModelOutput::Single(p) => self.eval(p, target),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "forecaster" => Ok(LossKind::Forecaster),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

/// Sum of the base loss over every per-scale prediction and the fused one.
pub fn multiscale_loss<F: Scalar>(out: &MultiScaleOutput<F>, target: &Tensor<F>, base: LossKind) -> Result<Tensor<F>> {
    let mut total = base.eval(&out.fused_pred, target)?;
    for p in &out.per_scale_preds {
        total = ops::add(&total, &base.eval(p, target)?)?;
    }
    Ok(total)
}
