use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, BatchNormParams, BnMode, Conv2dParams, ConvLstmParams, Peephole};
use crate::tensor::{numel_of, ops, Scalar, Tensor};

/// What a stored tensor is for; drives initialization and optimizer updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamRole {
    Weight { fan_in: usize },
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    /// Running statistics are buffers, not trainable parameters.
    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<F: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
    pub data: Vec<F>,
}

/// Ordered, uniquely named tensors of a model (parameters and buffers).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamTable<F: Scalar> {
    entries: Vec<ParamEntry<F>>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> ParamTable<F> {
    pub fn new() -> Self {
        ParamTable {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds a tensor with its role's neutral value (gamma and running
    /// variance 1, everything else 0).
    pub fn declare(&mut self, name: impl Into<String>, shape: &[usize], role: ParamRole) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let fill = match role {
            ParamRole::Gamma | ParamRole::RunningVar => F::one(),
            _ => F::zero(),
        };
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            shape: shape.to_vec(),
            role,
            data: vec![fill; numel_of(shape)],
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<F>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<F>> {
        self.index.get(name).map(|&i| &mut self.entries[i])
    }

    pub fn entries(&self) -> &[ParamEntry<F>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<F>] {
        &mut self.entries
    }

    pub fn trainable(&self) -> impl Iterator<Item = &ParamEntry<F>> {
        self.entries.iter().filter(|e| e.role.trainable())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.trainable().map(|e| e.data.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ParamTable<G> {
        ParamTable {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    role: e.role,
                    data: e.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Declaration helpers shared by the architectures.
pub(crate) struct Layout<'a, F: Scalar>(pub &'a mut ParamTable<F>);

impl<F: Scalar> Layout<'_, F> {
    pub fn conv(&mut self, name: &str, cout: usize, cin: usize, k: usize, bias: bool) -> Result<()> {
        self.0.declare(
            format!("{name}.weight"),
            &[cout, cin, k, k],
            ParamRole::Weight { fan_in: cin * k * k },
        )?;
        if bias {
            self.0.declare(format!("{name}.bias"), &[cout], ParamRole::Bias)?;
        }
        Ok(())
    }

    /// Transposed convolution consuming `cin` channels.
    pub fn deconv(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> Result<()> {
        self.0.declare(
            format!("{name}.weight"),
            &[cin, cout, k, k],
            ParamRole::Weight { fan_in: cin * k * k },
        )?;
        if bias {
            self.0.declare(format!("{name}.bias"), &[cout], ParamRole::Bias)?;
        }
        Ok(())
    }

    pub fn batchnorm(&mut self, name: &str, c: usize) -> Result<()> {
        self.0.declare(format!("{name}.gamma"), &[c], ParamRole::Gamma)?;
        self.0.declare(format!("{name}.beta"), &[c], ParamRole::Beta)?;
        self.0
            .declare(format!("{name}.running_mean"), &[c], ParamRole::RunningMean)?;
        self.0
            .declare(format!("{name}.running_var"), &[c], ParamRole::RunningVar)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn convlstm(
        &mut self,
        name: &str,
        cin: usize,
        hidden: usize,
        k: usize,
        peephole: bool,
        h: usize,
        w: usize,
    ) -> Result<()> {
        self.0.declare(
            format!("{name}.wx"),
            &[4 * hidden, cin, k, k],
            ParamRole::Weight { fan_in: cin * k * k },
        )?;
        self.0.declare(
            format!("{name}.wh"),
            &[4 * hidden, hidden, k, k],
            ParamRole::Weight { fan_in: hidden * k * k },
        )?;
        self.0.declare(format!("{name}.b"), &[4 * hidden], ParamRole::Bias)?;
        if peephole {
            for gate in ["wci", "wcf", "wco"] {
                self.0.declare(
                    format!("{name}.{gate}"),
                    &[hidden, h, w],
                    ParamRole::Weight { fan_in: 1 },
                )?;
            }
        }
        Ok(())
    }

    pub fn linear(&mut self, name: &str, dout: usize, din: usize, bias: bool) -> Result<()> {
        self.0.declare(
            format!("{name}.weight"),
            &[dout, din],
            ParamRole::Weight { fan_in: din },
        )?;
        if bias {
            self.0.declare(format!("{name}.bias"), &[dout], ParamRole::Bias)?;
        }
        Ok(())
    }

    pub fn lstm(&mut self, name: &str, din: usize, hidden: usize) -> Result<()> {
        self.0.declare(
            format!("{name}.wx"),
            &[4 * hidden, din],
            ParamRole::Weight { fan_in: din },
        )?;
        self.0.declare(
            format!("{name}.wh"),
            &[4 * hidden, hidden],
            ParamRole::Weight { fan_in: hidden },
        )?;
        self.0.declare(format!("{name}.b"), &[4 * hidden], ParamRole::Bias)
    }
}

/// Running statistics produced by a train-mode batch-norm layer.
#[derive(Clone, Debug)]
pub struct StatsUpdate<F: Scalar> {
    pub name: String,
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

/// One forward pass worth of graph-building state: parameter leaves (created
/// once per name so recurrent weights share a single gradient slot), the
/// batch-norm mode and collected running-statistics updates.
pub struct Graph<'a, F: Scalar> {
    table: &'a ParamTable<F>,
    mode: BnMode,
    track: bool,
    leaves: HashMap<String, Tensor<F>>,
    stats: Vec<StatsUpdate<F>>,
}

impl<'a, F: Scalar> Graph<'a, F> {
    /// `track` makes trainable parameters gradient leaves.
    pub fn new(table: &'a ParamTable<F>, mode: BnMode, track: bool) -> Self {
        Graph {
            table,
            mode,
            track,
            leaves: HashMap::new(),
            stats: Vec::new(),
        }
    }

    /// Uses the supplied tensors in place of the table's values for the given
    /// names (which must exist in the table with matching shapes).
    pub fn with_leaves(table: &'a ParamTable<F>, mode: BnMode, leaves: HashMap<String, Tensor<F>>) -> Result<Self> {
        for (name, t) in &leaves {
            let e = table.get(name).ok_or_else(|| Error::UnknownParam(name.clone()))?;
            if e.shape != t.shape() {
                return Err(Error::shape("graph leaf", &e.shape, t.shape()));
            }
        }
        Ok(Graph {
            table,
            mode,
            track: true,
            leaves,
            stats: Vec::new(),
        })
    }

    pub fn mode(&self) -> BnMode {
        self.mode
    }

    pub fn param(&mut self, name: &str) -> Result<Tensor<F>> {
        if let Some(t) = self.leaves.get(name) {
            return Ok(t.clone());
        }
        let e = self
            .table
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        let t = if self.track && e.role.trainable() {
            Tensor::param(&e.shape, e.data.clone())?
        } else {
            Tensor::new(&e.shape, e.data.clone())?
        };
        self.leaves.insert(name.to_string(), t.clone());
        Ok(t)
    }

    fn has(&self, name: &str) -> bool {
        self.table.get(name).is_some()
    }

    /// Same-padded stride-1 convolution `name.weight` (+ `name.bias`).
    pub fn conv(&mut self, name: &str, x: &Tensor<F>) -> Result<Tensor<F>> {
        let w = self.param(&format!("{name}.weight"))?;
        let bias_name = format!("{name}.bias");
        let b = if self.has(&bias_name) {
            Some(self.param(&bias_name)?)
        } else {
            None
        };
        nn::conv2d(x, &Conv2dParams::same(w, b))
    }

    /// Same-shape transposed convolution.
    pub fn deconv(&mut self, name: &str, x: &Tensor<F>) -> Result<Tensor<F>> {
        let w = self.param(&format!("{name}.weight"))?;
        let bias_name = format!("{name}.bias");
        let b = if self.has(&bias_name) {
            Some(self.param(&bias_name)?)
        } else {
            None
        };
        nn::conv_transpose2d(x, &Conv2dParams::same(w, b))
    }

    pub fn batchnorm(&mut self, name: &str, x: &Tensor<F>) -> Result<Tensor<F>> {
        let gamma = self.param(&format!("{name}.gamma"))?;
        let beta = self.param(&format!("{name}.beta"))?;
        let rm = self.param(&format!("{name}.running_mean"))?;
        let rv = self.param(&format!("{name}.running_var"))?;
        let mut p = BatchNormParams::new(gamma.numel(), self.mode);
        p.gamma = gamma;
        p.beta = beta;
        p.running_mean = rm.data().to_vec();
        p.running_var = rv.data().to_vec();
        let y = nn::batchnorm2d(x, &mut p)?;
        if self.mode == BnMode::Train {
            self.stats.push(StatsUpdate {
                name: name.to_string(),
                mean: p.running_mean,
                var: p.running_var,
            });
        }
        Ok(y)
    }

    pub fn linear(&mut self, name: &str, x: &Tensor<F>) -> Result<Tensor<F>> {
        let w = self.param(&format!("{name}.weight"))?;
        let bias_name = format!("{name}.bias");
        let b = if self.has(&bias_name) {
            Some(self.param(&bias_name)?)
        } else {
            None
        };
        nn::linear(x, &w, b.as_ref())
    }

    pub fn convlstm_params(&mut self, name: &str) -> Result<ConvLstmParams<F>> {
        let peephole = if self.has(&format!("{name}.wci")) {
            Some(Peephole {
                wci: self.param(&format!("{name}.wci"))?,
                wcf: self.param(&format!("{name}.wcf"))?,
                wco: self.param(&format!("{name}.wco"))?,
            })
        } else {
            None
        };
        Ok(ConvLstmParams {
            wx: self.param(&format!("{name}.wx"))?,
            wh: self.param(&format!("{name}.wh"))?,
            bias: self.param(&format!("{name}.b"))?,
            peephole,
        })
    }

    /// Runs a ConvLSTM over `seq: [T, C, H, W]` from the zero state and
    /// returns the hidden map of every step.
    pub fn convlstm_seq(&mut self, name: &str, seq: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
        let p = self.convlstm_params(name)?;
        let &[steps, _, h, w] = seq.shape() else {
            return Err(Error::invalid_shape(
                "convlstm_seq",
                format!("expected [T,C,H,W], got {:?}", seq.shape()),
            ));
        };
        let mut state = nn::ConvLstmState::zeros(p.hidden(), h, w)?;
        let mut hidden = Vec::with_capacity(steps);
        for t in 0..steps {
            state = nn::convlstm_cell(&ops::select(seq, t)?, &state, &p)?;
            hidden.push(state.h.clone());
        }
        Ok(hidden)
    }

    pub fn lstm_params(&mut self, name: &str) -> Result<nn::LstmParams<F>> {
        Ok(nn::LstmParams {
            wx: self.param(&format!("{name}.wx"))?,
            wh: self.param(&format!("{name}.wh"))?,
            bias: self.param(&format!("{name}.b"))?,
        })
    }

    /// Gradients of every trainable parameter, in table order. Parameters the
    /// pass never touched report zeros.
    pub fn grads(&self) -> Vec<(String, Vec<F>)> {
        self.table
            .trainable()
            .map(|e| {
                let g = self
                    .leaves
                    .get(&e.name)
                    .and_then(Tensor::grad)
                    .unwrap_or_else(|| vec![F::zero(); e.data.len()]);
                (e.name.clone(), g)
            })
            .collect()
    }

    pub fn leaf(&self, name: &str) -> Option<&Tensor<F>> {
        self.leaves.get(name)
    }

    pub fn into_stats(self) -> Vec<StatsUpdate<F>> {
        self.stats
    }
}

impl<F: Scalar> ParamTable<F> {
    /// Writes running statistics collected by a train-mode pass.
    pub fn apply_stats(&mut self, updates: &[StatsUpdate<F>]) -> Result<()> {
        for u in updates {
            for (suffix, vals) in [("running_mean", &u.mean), ("running_var", &u.var)] {
                let name = format!("{}.{suffix}", u.name);
                let e = self.get_mut(&name).ok_or(Error::UnknownParam(name))?;
                e.data.copy_from_slice(vals);
            }
        }
        Ok(())
    }
}
