//! LSTM and convolutional LSTM cells.
//!
//! Both cells stack their four gates in the order input, forget, output,
//! candidate (`i, f, o, g`) along the leading axis of the fused kernels:
//!
//! ```text
//! i = σ(Wx_i * x + Wh_i * h + b_i [+ w_ci ∘ c])
//! f = σ(Wx_f * x + Wh_f * h + b_f [+ w_cf ∘ c])
//! g = tanh(Wx_g * x + Wh_g * h + b_g)
//! c' = f ∘ c + i ∘ g
//! o = σ(Wx_o * x + Wh_o * h + b_o [+ w_co ∘ c'])
//! h' = o ∘ tanh(c')
//! ```
//!
//! where `*` is a matrix product for [`lstm_cell`] and a same-padded
//! convolution for [`convlstm_cell`]. Peephole terms are optional.

use super::conv::{conv2d, Conv2dParams};
use super::linear::linear;
use crate::error::{Error, Result};
use crate::tensor::{ops, Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct LstmParams<F: Scalar> {
    /// `[4·hidden, input]`
    pub wx: Tensor<F>,
    /// `[4·hidden, hidden]`
    pub wh: Tensor<F>,
    /// `[4·hidden]`
    pub bias: Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct LstmState<F: Scalar> {
    pub h: Tensor<F>,
    pub c: Tensor<F>,
}

impl<F: Scalar> LstmState<F> {
    pub fn zeros(hidden: usize) -> Result<Self> {
        Ok(LstmState {
            h: Tensor::zeros(&[hidden])?,
            c: Tensor::zeros(&[hidden])?,
        })
    }
}

/// Elementwise (Hadamard) peephole weights, each `[hidden, H, W]`.
#[derive(Clone, Debug)]
pub struct Peephole<F: Scalar> {
    pub wci: Tensor<F>,
    pub wcf: Tensor<F>,
    pub wco: Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct ConvLstmParams<F: Scalar> {
    /// Input-to-state kernels `[4·hidden, Cin, k, k]`.
    pub wx: Tensor<F>,
    /// State-to-state kernels `[4·hidden, hidden, k, k]`.
    pub wh: Tensor<F>,
    /// `[4·hidden]`
    pub bias: Tensor<F>,
    pub peephole: Option<Peephole<F>>,
}

impl<F: Scalar> ConvLstmParams<F> {
    pub fn hidden(&self) -> usize {
        self.wh.shape()[1]
    }
}

/// Hidden map `h` and cell map `c`, both `[hidden, H, W]`.
#[derive(Clone, Debug)]
pub struct ConvLstmState<F: Scalar> {
    pub h: Tensor<F>,
    pub c: Tensor<F>,
}

impl<F: Scalar> ConvLstmState<F> {
    pub fn zeros(hidden: usize, height: usize, width: usize) -> Result<Self> {
        Ok(ConvLstmState {
            h: Tensor::zeros(&[hidden, height, width])?,
            c: Tensor::zeros(&[hidden, height, width])?,
        })
    }
}

fn gate_update<F: Scalar>(
    pre: &Tensor<F>,
    c: &Tensor<F>,
    peephole: Option<&Peephole<F>>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let gates = ops::chunk(pre, 4)?;
    let (mut i, mut f, mut o, g) = (gates[0].clone(), gates[1].clone(), gates[2].clone(), gates[3].clone());
    if let Some(p) = peephole {
        i = ops::add(&i, &ops::mul(&p.wci, c)?)?;
        f = ops::add(&f, &ops::mul(&p.wcf, c)?)?;
    }
    let i = ops::sigmoid(&i);
    let f = ops::sigmoid(&f);
    let g = ops::tanh(&g);
    let c_next = ops::add(&ops::mul(&f, c)?, &ops::mul(&i, &g)?)?;
    if let Some(p) = peephole {
        o = ops::add(&o, &ops::mul(&p.wco, &c_next)?)?;
    }
    let o = ops::sigmoid(&o);
    let h_next = ops::mul(&o, &ops::tanh(&c_next))?;
    Ok((h_next, c_next))
}

/// A constant all-zero state contributes nothing through its kernel.
fn is_inert<F: Scalar>(t: &Tensor<F>) -> bool {
    !t.requires_grad() && t.data().iter().all(|v| *v == F::zero())
}

pub fn lstm_cell<F: Scalar>(x: &Tensor<F>, state: &LstmState<F>, p: &LstmParams<F>) -> Result<LstmState<F>> {
    const OP: &str = "lstm_cell";
    let hidden = state.h.numel();
    if state.h.shape() != [hidden] || state.c.shape() != [hidden] {
        return Err(Error::shape(OP, state.h.shape(), state.c.shape()));
    }
    if p.wh.shape() != [4 * hidden, hidden] {
        return Err(Error::shape(OP, p.wh.shape(), &[4 * hidden, hidden]));
    }
    if p.wx.shape().first() != Some(&(4 * hidden)) {
        return Err(Error::shape(OP, p.wx.shape(), &[4 * hidden, x.numel()]));
    }
    let mut pre = linear(x, &p.wx, Some(&p.bias))?;
    if !is_inert(&state.h) {
        pre = ops::add(&pre, &linear(&state.h, &p.wh, None)?)?;
    }
    let (h, c) = gate_update(&pre, &state.c, None)?;
    Ok(LstmState { h, c })
}

/// One ConvLSTM step on `x: [Cin, H, W]`. Spatial extents are preserved, so
/// the kernel size must be odd.
pub fn convlstm_cell<F: Scalar>(
    x: &Tensor<F>,
    state: &ConvLstmState<F>,
    p: &ConvLstmParams<F>,
) -> Result<ConvLstmState<F>> {
    const OP: &str = "convlstm_cell";
    let hidden = p.hidden();
    let (xs, hs) = (x.shape(), state.h.shape());
    if xs.len() != 3 || hs.len() != 3 || xs[1..] != hs[1..] || state.c.shape() != hs {
        return Err(Error::shape(OP, xs, hs));
    }
    if hs[0] != hidden || p.wh.shape()[0] != 4 * hidden || p.wx.shape()[0] != 4 * hidden {
        return Err(Error::shape(OP, hs, p.wh.shape()));
    }
    let k = p.wx.shape()[2];
    if k.is_multiple_of(2) || p.wh.shape()[2] != k {
        return Err(Error::invalid_shape(
            OP,
            format!("kernels must share an odd size, got {k}"),
        ));
    }
    if let Some(peep) = &p.peephole {
        for w in [&peep.wci, &peep.wcf, &peep.wco] {
            if w.shape() != hs {
                return Err(Error::shape(OP, w.shape(), hs));
            }
        }
    }
    let mut pre = conv2d(x, &Conv2dParams::same(p.wx.clone(), Some(p.bias.clone())))?;
    if !is_inert(&state.h) {
        pre = ops::add(&pre, &conv2d(&state.h, &Conv2dParams::same(p.wh.clone(), None))?)?;
    }
    let (h, c) = gate_update(&pre, &state.c, p.peephole.as_ref())?;
    Ok(ConvLstmState { h, c })
}
