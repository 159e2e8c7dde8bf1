use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamTable;
use crate::tensor::Scalar;

/// Nesterov-accelerated Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nadam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Nadam {
    fn default() -> Self {
        Nadam {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Nadam {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    /// Updates one tensor in place given its moments and the new step count.
    pub fn update<F: Scalar>(&self, t: u64, theta: &mut [F], g: &[F], m: &mut [F], v: &mut [F]) {
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        for i in 0..theta.len() {
            let gi = g[i].as_f64();
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let step = self.lr * (b1 * m_hat + (1.0 - b1) * gi / bc1) / (v_hat.sqrt() + self.eps);
            m[i] = F::from_f64(mi);
            v[i] = F::from_f64(vi);
            theta[i] = F::from_f64(theta[i].as_f64() - step);
        }
    }
}

/// First and second moments of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<F: Scalar> {
    pub name: String,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

/// Optimizer state for every trainable tensor of a table, in table order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<F: Scalar = f32> {
    pub hyper: Nadam,
    pub step: u64,
    pub moments: Vec<Moments<F>>,
}

impl<F: Scalar> OptimState<F> {
    pub fn new(table: &ParamTable<F>, hyper: Nadam) -> Self {
        OptimState {
            hyper,
            step: 0,
            moments: table
                .trainable()
                .map(|e| Moments {
                    name: e.name.clone(),
                    m: vec![F::zero(); e.data.len()],
                    v: vec![F::zero(); e.data.len()],
                })
                .collect(),
        }
    }
}

/// One Nadam step over every trainable tensor. `grads` pairs names with
/// gradients in table order. Nothing is modified if any gradient is
/// non-finite or does not line up with the table.
pub fn nadam_step<F: Scalar>(
    table: &mut ParamTable<F>,
    grads: &[(String, Vec<F>)],
    state: &mut OptimState<F>,
) -> Result<()> {
    if grads.len() != state.moments.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gradients for {} trainable tensors",
            grads.len(),
            state.moments.len()
        )));
    }
    for ((name, g), mo) in grads.iter().zip(&state.moments) {
        if *name != mo.name || g.len() != mo.m.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient `{name}` ({} values) does not match optimizer slot `{}` ({} values)",
                g.len(),
                mo.name,
                mo.m.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{name}` at index {i}")));
        }
    }
    state.step += 1;
    let t = state.step;
    let hyper = state.hyper;
    for ((name, g), mo) in grads.iter().zip(state.moments.iter_mut()) {
        let entry = table.get_mut(name).ok_or_else(|| Error::UnknownParam(name.clone()))?;
        hyper.update(t, &mut entry.data, g, &mut mo.m, &mut mo.v);
    }
    Ok(())
}
