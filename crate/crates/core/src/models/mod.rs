//! Network definitions: the multi-scale F-CLSTM forecaster and the stacked
//! ConvLSTM, fully connected LSTM and MLP baselines.
//!
//! Architectures are described by a serializable [`ModelSpec`]. Parameters
//! live in a flat, named [`ParamTable`]; a forward pass reads them through a
//! [`Graph`], which decides whether they become gradient leaves. All models
//! take frames on the 0..255 pixel scale, work internally on the unit scale
//! and return predictions on the pixel scale again.

mod baselines;
mod fclstm;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::BnMode;
use crate::tensor::{Scalar, Tensor};
use crate::train::init_uniform;

pub use params::{Graph, ParamEntry, ParamRole, ParamTable, StatsUpdate};

pub(crate) const PIXEL_SCALE: f64 = 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FclstmConfig {
    pub scales: usize,
    /// Per scale: seq-conv width then ConvLSTM hidden width.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub fusion_hidden: usize,
    pub peephole: bool,
    pub input_hw: (usize, usize),
    pub input_frames: usize,
}

impl FclstmConfig {
    /// Kernel 3, fusion width 16, no peepholes; the scale count follows the
    /// channel list.
    pub fn new(channels: Vec<usize>, input_hw: (usize, usize), input_frames: usize) -> Self {
        FclstmConfig {
            scales: channels.len() / 2,
            channels,
            kernel: 3,
            fusion_hidden: 16,
            peephole: false,
            input_hw,
            input_frames,
        }
    }

    pub fn seq_width(&self, scale: usize) -> usize {
        self.channels[2 * scale]
    }

    pub fn hidden_width(&self, scale: usize) -> usize {
        self.channels[2 * scale + 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.channels.len() != 2 * self.scales {
            return Err(Error::Config(format!(
                "{} scales need {} channel widths, got {}",
                self.scales,
                2 * self.scales,
                self.channels.len()
            )));
        }
        check_common(
            &self.channels,
            self.kernel,
            self.input_hw,
            self.input_frames,
            self.scales - 1,
        )?;
        if self.fusion_hidden == 0 {
            return Err(Error::Config("fusion width must be positive".into()));
        }
        Ok(())
    }
}

/// Three ConvLSTM layers with 2x2 pooling between them and a mirrored decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClstmConfig {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub peephole: bool,
    pub input_hw: (usize, usize),
    pub input_frames: usize,
}

impl ClstmConfig {
    pub fn new(channels: Vec<usize>, input_hw: (usize, usize), input_frames: usize) -> Self {
        ClstmConfig {
            channels,
            kernel: 3,
            peephole: false,
            input_hw,
            input_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("at least one ConvLSTM layer is required".into()));
        }
        check_common(
            &self.channels,
            self.kernel,
            self.input_hw,
            self.input_frames,
            self.channels.len() - 1,
        )
    }
}

/// One LSTM over flattened frames with a linear read-out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcLstmConfig {
    pub hidden: usize,
    pub input_hw: (usize, usize),
    pub input_frames: usize,
}

impl FcLstmConfig {
    pub fn new(input_hw: (usize, usize), input_frames: usize) -> Self {
        FcLstmConfig {
            hidden: 256,
            input_hw,
            input_frames,
        }
    }
}

/// Fully connected network on the concatenated flattened frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub input_hw: (usize, usize),
    pub input_frames: usize,
}

impl MlpConfig {
    pub fn new(input_hw: (usize, usize), input_frames: usize) -> Self {
        MlpConfig {
            hidden: vec![256, 256],
            input_hw,
            input_frames,
        }
    }
}

fn check_common(channels: &[usize], kernel: usize, (h, w): (usize, usize), frames: usize, pools: usize) -> Result<()> {
    if channels.contains(&0) {
        return Err(Error::Config("channel widths must be positive".into()));
    }
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::Config(format!("kernel must be odd, got {kernel}")));
    }
    let div = 1usize << pools;
    if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
        return Err(Error::Config(format!(
            "input {h}x{w} must be divisible by {div} for {pools} pooling stages"
        )));
    }
    if frames == 0 {
        return Err(Error::Config("at least one input frame is required".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fclstm,
    Clstm,
    FcLstm,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fclstm => "fclstm",
            ModelKind::Clstm => "clstm",
            ModelKind::FcLstm => "fc_lstm",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fclstm" => Ok(ModelKind::Fclstm),
            "clstm" => Ok(ModelKind::Clstm),
            "fc_lstm" | "fc-lstm" => Ok(ModelKind::FcLstm),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Fclstm(FclstmConfig),
    Clstm(ClstmConfig),
    FcLstm(FcLstmConfig),
    Mlp(MlpConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Fclstm(_) => ModelKind::Fclstm,
            ModelSpec::Clstm(_) => ModelKind::Clstm,
            ModelSpec::FcLstm(_) => ModelKind::FcLstm,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn input_hw(&self) -> (usize, usize) {
        match self {
            ModelSpec::Fclstm(c) => c.input_hw,
            ModelSpec::Clstm(c) => c.input_hw,
            ModelSpec::FcLstm(c) => c.input_hw,
            ModelSpec::Mlp(c) => c.input_hw,
        }
    }

    pub fn input_frames(&self) -> usize {
        match self {
            ModelSpec::Fclstm(c) => c.input_frames,
            ModelSpec::Clstm(c) => c.input_frames,
            ModelSpec::FcLstm(c) => c.input_frames,
            ModelSpec::Mlp(c) => c.input_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Fclstm(c) => c.validate(),
            ModelSpec::Clstm(c) => c.validate(),
            ModelSpec::FcLstm(c) => check_common(&[c.hidden], 1, c.input_hw, c.input_frames, 0),
            ModelSpec::Mlp(c) => {
                if c.hidden.is_empty() {
                    return Err(Error::Config("the MLP needs at least one hidden layer".into()));
                }
                check_common(&c.hidden, 1, c.input_hw, c.input_frames, 0)
            }
        }
    }

    /// Declares every parameter and buffer, with neutral values.
    pub fn declare<F: Scalar>(&self) -> Result<ParamTable<F>> {
        self.validate()?;
        let mut table = ParamTable::new();
        match self {
            ModelSpec::Fclstm(c) => fclstm::declare(c, &mut table)?,
            ModelSpec::Clstm(c) => baselines::declare_clstm(c, &mut table)?,
            ModelSpec::FcLstm(c) => baselines::declare_fc_lstm(c, &mut table)?,
            ModelSpec::Mlp(c) => baselines::declare_mlp(c, &mut table)?,
        }
        Ok(table)
    }

    fn check_frames<F: Scalar>(&self, frames: &Tensor<F>) -> Result<()> {
        let (h, w) = self.input_hw();
        let want = [self.input_frames(), 1, h, w];
        if frames.shape() != want {
            return Err(Error::shape("model input", frames.shape(), &want));
        }
        Ok(())
    }

    /// Runs the network on `frames: [T,1,H,W]` (pixel scale).
    pub fn forward<F: Scalar>(&self, g: &mut Graph<'_, F>, frames: &Tensor<F>) -> Result<ModelOutput<F>> {
        self.check_frames(frames)?;
        Ok(match self {
            ModelSpec::Fclstm(c) => ModelOutput::MultiScale(fclstm::forward(c, g, frames)?),
            ModelSpec::Clstm(c) => ModelOutput::Single(baselines::forward_clstm(c, g, frames)?),
            ModelSpec::FcLstm(c) => ModelOutput::Single(baselines::forward_fc_lstm(c, g, frames)?),
            ModelSpec::Mlp(c) => ModelOutput::Single(baselines::forward_mlp(c, g, frames)?),
        })
    }
}

/// Predictions of every F-CLSTM scale plus their fusion, each `[1,H,W]`.
#[derive(Clone, Debug)]
pub struct MultiScaleOutput<F: Scalar> {
    pub per_scale_preds: Vec<Tensor<F>>,
    pub fused_pred: Tensor<F>,
}

#[derive(Clone, Debug)]
pub enum ModelOutput<F: Scalar> {
    MultiScale(MultiScaleOutput<F>),
    Single(Tensor<F>),
}

impl<F: Scalar> ModelOutput<F> {
    /// The model's final next-frame prediction.
    pub fn prediction(&self) -> &Tensor<F> {
        match self {
            ModelOutput::MultiScale(m) => &m.fused_pred,
            ModelOutput::Single(t) => t,
        }
    }
}

/// A built network: its architecture plus current parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    pub spec: ModelSpec,
    pub params: ParamTable<f32>,
}

impl ModelGraph {
    /// Declares the parameters of `spec` and initializes them from `seed`.
    pub fn build(spec: ModelSpec, init_seed: u64) -> Result<Self> {
        let mut params = spec.declare()?;
        init_uniform(&mut params, init_seed);
        Ok(ModelGraph { spec, params })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Inference-mode forward pass without gradient tracking.
    pub fn forward(&self, frames: &Tensor<f32>) -> Result<ModelOutput<f32>> {
        let mut g = Graph::new(&self.params, BnMode::Eval, false);
        self.spec.forward(&mut g, frames)
    }

    pub fn predict(&self, frames: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.forward(frames)?.prediction().clone())
    }

    pub fn forward_fclstm(&self, frames: &Tensor<f32>) -> Result<MultiScaleOutput<f32>> {
        match self.forward(frames)? {
            ModelOutput::MultiScale(m) => Ok(m),
            ModelOutput::Single(_) => Err(Error::InvalidArgument(format!(
                "{} is not a multi-scale model",
                self.kind().name()
            ))),
        }
    }

    pub fn forward_baseline(&self, frames: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self.forward(frames)? {
            ModelOutput::Single(t) => Ok(t),
            ModelOutput::MultiScale(_) => Err(Error::InvalidArgument("fclstm is not a baseline model".into())),
        }
    }
}

pub fn build_fclstm(cfg: FclstmConfig, init_seed: u64) -> Result<ModelGraph> {
    ModelGraph::build(ModelSpec::Fclstm(cfg), init_seed)
}

/// Baseline with its default widths: ConvLSTM 16/32/64, LSTM 256, MLP 256x2.
pub fn build_baseline(kind: ModelKind, input_hw: (usize, usize), frames: usize, init_seed: u64) -> Result<ModelGraph> {
    let spec = match kind {
        ModelKind::Clstm => ModelSpec::Clstm(ClstmConfig::new(vec![16, 32, 64], input_hw, frames)),
        ModelKind::FcLstm => ModelSpec::FcLstm(FcLstmConfig::new(input_hw, frames)),
        ModelKind::Mlp => ModelSpec::Mlp(MlpConfig::new(input_hw, frames)),
        ModelKind::Fclstm => return Err(Error::InvalidArgument("fclstm is not a baseline model".into())),
    };
    ModelGraph::build(spec, init_seed)
}
