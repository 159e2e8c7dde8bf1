use super::params::Layout;
use super::{FclstmConfig, Graph, MultiScaleOutput, ParamTable, PIXEL_SCALE};
use crate::error::Result;
use crate::nn;
use crate::tensor::{ops, Scalar, Tensor};

pub(super) fn declare<F: Scalar>(cfg: &FclstmConfig, table: &mut ParamTable<F>) -> Result<()> {
    let k = cfg.kernel;
    let (mut h, mut w) = cfg.input_hw;
    let mut layout = Layout(table);
    let mut cin = 1;
    for s in 0..cfg.scales {
        let name = format!("s{}", s + 1);
        layout.conv(&format!("{name}.seq"), cfg.seq_width(s), cin, k, false)?;
        layout.batchnorm(&format!("{name}.seq.bn"), cfg.seq_width(s))?;
        layout.convlstm(
            &format!("{name}.lstm"),
            cfg.seq_width(s),
            cfg.hidden_width(s),
            k,
            cfg.peephole,
            h,
            w,
        )?;
        declare_decoder(&mut layout, &format!("{name}.dec"), cfg, s)?;
        cin = cfg.hidden_width(s);
        h /= 2;
        w /= 2;
    }
    layout.conv("fuse.hidden", cfg.fusion_hidden, cfg.scales, 1, false)?;
    layout.batchnorm("fuse.hidden.bn", cfg.fusion_hidden)?;
    layout.conv("fuse.out", 1, cfg.fusion_hidden, 1, true)
}

/// Decoder from scale `s` back to full resolution: one upsample + deconv
/// stage per pooling step, each narrowing to the hidden width of the scale
/// above, then a deconvolution to a single channel.
pub(super) fn declare_decoder<F: Scalar>(
    layout: &mut Layout<'_, F>,
    name: &str,
    cfg: &impl DecoderWidths,
    s: usize,
) -> Result<()> {
    let k = cfg.kernel();
    let mut cin = cfg.hidden(s);
    for (stage, target) in (0..s).rev().enumerate() {
        let cout = cfg.hidden(target);
        layout.deconv(&format!("{name}.{stage}"), cin, cout, k, false)?;
        layout.batchnorm(&format!("{name}.{stage}.bn"), cout)?;
        cin = cout;
    }
    layout.deconv(&format!("{name}.out"), cin, 1, k, true)
}

pub(super) fn decode<F: Scalar>(g: &mut Graph<'_, F>, name: &str, s: usize, h: &Tensor<F>) -> Result<Tensor<F>> {
    let mut x = h.clone();
    for stage in 0..s {
        let stage_name = format!("{name}.{stage}");
        x = nn::upsample_nearest(&x, 2)?;
        x = g.deconv(&stage_name, &x)?;
        x = ops::relu(&g.batchnorm(&format!("{stage_name}.bn"), &x)?);
    }
    g.deconv(&format!("{name}.out"), &x)
}

/// Widths a mirrored decoder needs.
pub(super) trait DecoderWidths {
    fn kernel(&self) -> usize;
    fn hidden(&self, scale: usize) -> usize;
}

impl DecoderWidths for FclstmConfig {
    fn kernel(&self) -> usize {
        self.kernel
    }

    fn hidden(&self, scale: usize) -> usize {
        self.hidden_width(scale)
    }
}

pub(super) fn forward<F: Scalar>(
    cfg: &FclstmConfig,
    g: &mut Graph<'_, F>,
    frames: &Tensor<F>,
) -> Result<MultiScaleOutput<F>> {
    let mut seq = ops::scale(frames, 1.0 / PIXEL_SCALE);
    let mut last_hidden = Vec::with_capacity(cfg.scales);
    for s in 0..cfg.scales {
        let name = format!("s{}", s + 1);
        if s > 0 {
            seq = nn::maxpool2d(&seq, 2)?.0;
        }
        let z = g.conv(&format!("{name}.seq"), &seq)?;
        let z = ops::relu(&g.batchnorm(&format!("{name}.seq.bn"), &z)?);
        let hidden = g.convlstm_seq(&format!("{name}.lstm"), &z)?;
        last_hidden.push(hidden.last().expect("at least one frame").clone());
        if s + 1 < cfg.scales {
            seq = ops::stack(&hidden)?;
        }
    }

    let mut unit_preds = Vec::with_capacity(cfg.scales);
    for (s, h) in last_hidden.iter().enumerate() {
        unit_preds.push(decode(g, &format!("s{}.dec", s + 1), s, h)?);
    }
    let stacked = ops::concat(&unit_preds)?;
    let z = g.conv("fuse.hidden", &stacked)?;
    let z = ops::relu(&g.batchnorm("fuse.hidden.bn", &z)?);
    let fused = g.conv("fuse.out", &z)?;

    Ok(MultiScaleOutput {
        per_scale_preds: unit_preds.iter().map(|p| ops::scale(p, PIXEL_SCALE)).collect(),
        fused_pred: ops::scale(&fused, PIXEL_SCALE),
    })
}
