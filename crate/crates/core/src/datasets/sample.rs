use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Where a sample came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub source: Option<String>,
    pub timestamps: Vec<String>,
}

/// A run of equally sized 8-bit frames; all but the last are model inputs and
/// the last is the prediction target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceSample {
    frames: Vec<u8>,
    len: usize,
    height: usize,
    width: usize,
    pub meta: Option<SampleMeta>,
}

impl SequenceSample {
    pub fn new(frames: Vec<u8>, len: usize, height: usize, width: usize) -> Result<Self> {
        if len < 2 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "a sample needs at least 2 frames of positive extent, got {len}x{height}x{width}"
            )));
        }
        if frames.len() != len * height * width {
            return Err(Error::InvalidArgument(format!(
                "{len} frames of {height}x{width} need {} pixels, got {}",
                len * height * width,
                frames.len()
            )));
        }
        Ok(SequenceSample {
            frames,
            len,
            height,
            width,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: SampleMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_frames(&self) -> usize {
        self.len - 1
    }

    pub fn pixels(&self) -> &[u8] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.frames[i * n..(i + 1) * n]
    }

    pub fn target_pixels(&self) -> &[u8] {
        self.frame(self.len - 1)
    }

    /// All frames as `[T+1,1,H,W]`.
    pub fn frames_tensor<F: Scalar>(&self) -> Tensor<F> {
        to_tensor(&self.frames, &[self.len, 1, self.height, self.width])
    }

    /// The input frames as `[T,1,H,W]`.
    pub fn inputs<F: Scalar>(&self) -> Tensor<F> {
        let n = self.height * self.width;
        to_tensor(
            &self.frames[..(self.len - 1) * n],
            &[self.len - 1, 1, self.height, self.width],
        )
    }

    /// The last `count` input frames as `[count,1,H,W]`.
    pub fn last_inputs<F: Scalar>(&self, count: usize) -> Result<Tensor<F>> {
        let avail = self.len - 1;
        if count == 0 || count > avail {
            return Err(Error::InvalidArgument(format!(
                "requested {count} input frames from a sample with {avail}"
            )));
        }
        let n = self.height * self.width;
        Ok(to_tensor(
            &self.frames[(avail - count) * n..avail * n],
            &[count, 1, self.height, self.width],
        ))
    }

    /// The target frame as `[1,H,W]`.
    pub fn target<F: Scalar>(&self) -> Tensor<F> {
        to_tensor(self.target_pixels(), &[1, self.height, self.width])
    }
}

fn to_tensor<F: Scalar>(px: &[u8], shape: &[usize]) -> Tensor<F> {
    Tensor::new(shape, px.iter().map(|&v| F::from_f64(v as f64)).collect()).expect("extents checked at construction")
}
