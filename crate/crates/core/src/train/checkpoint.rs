use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::{Nadam, OptimState};
use crate::error::{Error, Result};
use crate::models::{ModelGraph, ModelSpec, ParamTable};
use crate::objectives::LossKind;

const MAGIC: &[u8; 4] = b"SCKP";
const VERSION: u8 = 1;

/// Where a training run stands; enough to resume it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub loss: LossKind,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs_completed: usize,
    pub best_eval_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelSpec,
    optimizer: Nadam,
    progress: Option<TrainProgress>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelGraph,
    pub optim: OptimState<f32>,
    pub progress: Option<TrainProgress>,
}

/// Name, shape and values of one stored tensor.
type StoredTensor = (String, Vec<usize>, Vec<f32>);

struct Record<'a> {
    name: &'a str,
    shape: &'a [usize],
    data: &'a [f32],
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_records(out: &mut Vec<u8>, records: &[Record<'_>]) -> Result<()> {
    put_u32(out, records.len(), "tensor count")?;
    for r in records {
        put_u32(out, r.name.len(), "name length")?;
        out.extend_from_slice(r.name.as_bytes());
        let rank = u8::try_from(r.shape.len()).map_err(|_| Error::InvalidArgument(format!("rank of `{}`", r.name)))?;
        out.push(rank);
        for &d in r.shape {
            put_u32(out, d, "extent")?;
        }
        for v in r.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

/// Serializes a checkpoint: magic, version, length-prefixed JSON header,
/// parameter tensors, optimizer tensors (`m/<name>`, `v/<name>`), step count.
pub fn encode_checkpoint(
    model: &ModelGraph,
    optim: &OptimState<f32>,
    progress: Option<&TrainProgress>,
) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        model: model.spec.clone(),
        optimizer: optim.hyper,
        progress: progress.cloned(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_u32(&mut out, header.len(), "header length")?;
    out.extend_from_slice(&header);

    let params: Vec<Record> = model
        .params
        .entries()
        .iter()
        .map(|e| Record {
            name: &e.name,
            shape: &e.shape,
            data: &e.data,
        })
        .collect();
    put_records(&mut out, &params)?;

    let names: Vec<(String, String)> = optim
        .moments
        .iter()
        .map(|mo| (format!("m/{}", mo.name), format!("v/{}", mo.name)))
        .collect();
    let mut state = Vec::with_capacity(2 * optim.moments.len());
    for (mo, (mn, vn)) in optim.moments.iter().zip(&names) {
        let shape = &model
            .params
            .get(&mo.name)
            .ok_or_else(|| Error::UnknownParam(mo.name.clone()))?
            .shape;
        state.push(Record {
            name: mn,
            shape,
            data: &mo.m,
        });
        state.push(Record {
            name: vn,
            shape,
            data: &mo.v,
        });
    }
    put_records(&mut out, &state)?;
    out.extend_from_slice(&optim.step.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Format {
            what: self.what.to_string(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.err(self.bytes.len(), format!("truncated, needed {n} more bytes")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn records(&mut self) -> Result<Vec<StoredTensor>> {
        let count = self.u32()?;
        let mut out = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let at = self.pos;
            let len = self.u32()?;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| self.err(at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = self.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = self.take(n.checked_mul(4).ok_or_else(|| self.err(at, "tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            out.push((name, shape, data));
        }
        Ok(out)
    }
}

/// Copies stored tensors into a freshly declared table, requiring the same
/// names, order and shapes.
fn fill_table(mut table: ParamTable<f32>, stored: Vec<(String, Vec<usize>, Vec<f32>)>) -> Result<ParamTable<f32>> {
    let expected: Vec<(String, Vec<usize>)> = table
        .entries()
        .iter()
        .map(|e| (e.name.clone(), e.shape.clone()))
        .collect();
    for (i, (name, shape)) in expected.iter().enumerate() {
        match stored.get(i) {
            Some((n, s, _)) if n == name && s == shape => {}
            Some((n, s, _)) => {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {i}: expected `{name}` {shape:?}, found `{n}` {s:?}"
                )))
            }
            None => {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {i}: expected `{name}` {shape:?}, checkpoint has only {} tensors",
                    stored.len()
                )))
            }
        }
    }
    if let Some((n, s, _)) = stored.get(expected.len()) {
        return Err(Error::CheckpointMismatch(format!(
            "tensor {}: unexpected `{n}` {s:?}",
            expected.len()
        )));
    }
    for (entry, (_, _, data)) in table.entries_mut().iter_mut().zip(stored) {
        entry.data = data;
    }
    Ok(table)
}

pub fn decode_checkpoint(bytes: &[u8], what: &str) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, what };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(r.err(0, "bad magic, expected \"SCKP\""));
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(r.err(4, format!("unsupported version {version}")));
    }
    let len = r.u32()?;
    let at = r.pos;
    let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| r.err(at, format!("bad header: {e}")))?;
    let params = r.records()?;
    let state = r.records()?;
    let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let table = fill_table(header.model.declare()?, params)?;
    let model = ModelGraph {
        spec: header.model,
        params: table,
    };
    let mut optim = OptimState::new(&model.params, header.optimizer);
    optim.step = step;
    if state.len() != 2 * optim.moments.len() {
        return Err(Error::CheckpointMismatch(format!(
            "optimizer state holds {} tensors, expected {}",
            state.len(),
            2 * optim.moments.len()
        )));
    }
    let mut it = state.into_iter();
    for mo in &mut optim.moments {
        for (prefix, slot) in [("m", &mut mo.m), ("v", &mut mo.v)] {
            let (name, _, data) = it.next().expect("length checked");
            let want = format!("{prefix}/{}", mo.name);
            if name != want || data.len() != slot.len() {
                return Err(Error::CheckpointMismatch(format!(
                    "optimizer tensor `{name}` where `{want}` was expected"
                )));
            }
            *slot = data;
        }
    }
    Ok(Checkpoint {
        model,
        optim,
        progress: header.progress,
    })
}

/// Writes through a temporary file and renames, so an existing checkpoint
/// is only replaced by a complete one.
pub fn save_checkpoint(
    model: &ModelGraph,
    optim: &OptimState<f32>,
    progress: Option<&TrainProgress>,
    path: &Path,
) -> Result<()> {
    let bytes = encode_checkpoint(model, optim, progress)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?, &path.display().to_string())
}

/// Loads a checkpoint and requires it to hold the given architecture.
pub fn load_checkpoint_for(path: &Path, spec: &ModelSpec) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let what = path.display().to_string();
    let ck = decode_checkpoint(&bytes, &what)?;
    if ck.model.spec != *spec {
        // Report the first tensor that differs from what `spec` declares.
        let want: ParamTable<f32> = spec.declare()?;
        for (i, e) in want.entries().iter().enumerate() {
            match ck.model.params.entries().get(i) {
                Some(g) if g.name == e.name && g.shape == e.shape => {}
                Some(g) => {
                    return Err(Error::CheckpointMismatch(format!(
                        "tensor {i}: expected `{}` {:?}, found `{}` {:?}",
                        e.name, e.shape, g.name, g.shape
                    )))
                }
                None => {
                    return Err(Error::CheckpointMismatch(format!(
                        "tensor {i}: expected `{}` {:?}, checkpoint ends",
                        e.name, e.shape
                    )))
                }
            }
        }
        return Err(Error::CheckpointMismatch(format!(
            "architecture differs: expected {}, found {}",
            serde_json::to_string(spec)?,
            serde_json::to_string(&ck.model.spec)?
        )));
    }
    Ok(ck)
}
