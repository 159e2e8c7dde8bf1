use super::fclstm::{declare_decoder, decode, DecoderWidths};
use super::params::Layout;
use super::{ClstmConfig, FcLstmConfig, Graph, MlpConfig, ParamTable, PIXEL_SCALE};
use crate::error::Result;
use crate::nn::{self, LstmState};
use crate::tensor::{ops, Scalar, Tensor};

impl DecoderWidths for ClstmConfig {
    fn kernel(&self) -> usize {
        self.kernel
    }

    fn hidden(&self, scale: usize) -> usize {
        self.channels[scale]
    }
}

pub(super) fn declare_clstm<F: Scalar>(cfg: &ClstmConfig, table: &mut ParamTable<F>) -> Result<()> {
    let (mut h, mut w) = cfg.input_hw;
    let mut layout = Layout(table);
    let mut cin = 1;
    for (i, &hid) in cfg.channels.iter().enumerate() {
        layout.convlstm(&format!("l{}.lstm", i + 1), cin, hid, cfg.kernel, cfg.peephole, h, w)?;
        cin = hid;
        h /= 2;
        w /= 2;
    }
    declare_decoder(&mut layout, "dec", cfg, cfg.channels.len() - 1)
}

pub(super) fn forward_clstm<F: Scalar>(
    cfg: &ClstmConfig,
    g: &mut Graph<'_, F>,
    frames: &Tensor<F>,
) -> Result<Tensor<F>> {
    let mut seq = ops::scale(frames, 1.0 / PIXEL_SCALE);
    let depth = cfg.channels.len();
    let mut last = None;
    for i in 0..depth {
        if i > 0 {
            seq = nn::maxpool2d(&seq, 2)?.0;
        }
        let hidden = g.convlstm_seq(&format!("l{}.lstm", i + 1), &seq)?;
        last = hidden.last().cloned();
        if i + 1 < depth {
            seq = ops::stack(&hidden)?;
        }
    }
    let pred = decode(g, "dec", depth - 1, &last.expect("at least one layer"))?;
    Ok(ops::scale(&pred, PIXEL_SCALE))
}

pub(super) fn declare_fc_lstm<F: Scalar>(cfg: &FcLstmConfig, table: &mut ParamTable<F>) -> Result<()> {
    let pixels = cfg.input_hw.0 * cfg.input_hw.1;
    let mut layout = Layout(table);
    layout.lstm("lstm", pixels, cfg.hidden)?;
    layout.linear("head", pixels, cfg.hidden, true)
}

pub(super) fn forward_fc_lstm<F: Scalar>(
    cfg: &FcLstmConfig,
    g: &mut Graph<'_, F>,
    frames: &Tensor<F>,
) -> Result<Tensor<F>> {
    let (h, w) = cfg.input_hw;
    let x = ops::scale(frames, 1.0 / PIXEL_SCALE);
    let p = g.lstm_params("lstm")?;
    let mut state = LstmState::zeros(cfg.hidden)?;
    for t in 0..cfg.input_frames {
        let xt = ops::reshape(&ops::select(&x, t)?, &[h * w])?;
        state = nn::lstm_cell(&xt, &state, &p)?;
    }
    let y = g.linear("head", &state.h)?;
    Ok(ops::scale(&ops::reshape(&y, &[1, h, w])?, PIXEL_SCALE))
}

pub(super) fn declare_mlp<F: Scalar>(cfg: &MlpConfig, table: &mut ParamTable<F>) -> Result<()> {
    let pixels = cfg.input_hw.0 * cfg.input_hw.1;
    let mut layout = Layout(table);
    let mut din = cfg.input_frames * pixels;
    for (i, &hid) in cfg.hidden.iter().enumerate() {
        layout.linear(&format!("fc{}", i + 1), hid, din, true)?;
        din = hid;
    }
    layout.linear("head", pixels, din, true)
}

pub(super) fn forward_mlp<F: Scalar>(cfg: &MlpConfig, g: &mut Graph<'_, F>, frames: &Tensor<F>) -> Result<Tensor<F>> {
    let (h, w) = cfg.input_hw;
    let mut x = ops::reshape(&ops::scale(frames, 1.0 / PIXEL_SCALE), &[frames.numel()])?;
    for i in 0..cfg.hidden.len() {
        x = ops::relu(&g.linear(&format!("fc{}", i + 1), &x)?);
    }
    let y = g.linear("head", &x)?;
    Ok(ops::scale(&ops::reshape(&y, &[1, h, w])?, PIXEL_SCALE))
}
