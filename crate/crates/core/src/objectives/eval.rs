use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics;
use crate::datasets::SequenceSample;
use crate::error::{Error, Result};
use crate::models::ModelGraph;

/// Anything that maps a sample's inputs to a next-frame prediction
/// (pixel scale, unclamped).
pub trait Predictor: Sync {
    fn predict_sample(&self, sample: &SequenceSample) -> Result<Vec<f64>>;
}

impl Predictor for ModelGraph {
    fn predict_sample(&self, sample: &SequenceSample) -> Result<Vec<f64>> {
        let x = sample.last_inputs::<f32>(self.spec.input_frames())?;
        Ok(self.predict(&x)?.to_f64_vec())
    }
}

/// Repeats the most recent input frame.
#[derive(Clone, Copy, Debug, Default)]
pub struct LastFramePredictor;

impl Predictor for LastFramePredictor {
    fn predict_sample(&self, sample: &SequenceSample) -> Result<Vec<f64>> {
        Ok(sample.frame(sample.len() - 2).iter().map(|&v| v as f64).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMetrics {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub eccr: f64,
}

impl SampleMetrics {
    pub fn compute(pred: &[f64], sample: &SequenceSample, tau: f64) -> Result<Self> {
        let target: Vec<f64> = sample.target_pixels().iter().map(|&v| v as f64).collect();
        let mse = metrics::mse(pred, &target)?;
        Ok(SampleMetrics {
            mse,
            psnr_db: metrics::psnr_from_mse(mse),
            ssim: metrics::ssim(pred, &target, sample.height(), sample.width())?,
            eccr: metrics::eccr(pred, tau)?,
        })
    }
}

/// Per-sample metrics averaged over an evaluation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub eccr: f64,
    pub n_samples: usize,
}

impl MetricsReport {
    pub fn mean_of(samples: &[SampleMetrics]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset("no samples to evaluate".into()));
        }
        let n = samples.len() as f64;
        let avg = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            mse: avg(|s| s.mse),
            psnr_db: avg(|s| s.psnr_db),
            ssim: avg(|s| s.ssim),
            eccr: avg(|s| s.eccr),
            n_samples: samples.len(),
        })
    }
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Text(s) => Err(serde::de::Error::custom(format!("invalid dB value `{s}`"))),
    }
}

/// Runs the predictor over every sample, in parallel, keeping sample order.
pub fn predict_set<P: Predictor + ?Sized>(model: &P, samples: &[SequenceSample]) -> Result<Vec<Vec<f64>>> {
    samples.par_iter().map(|s| model.predict_sample(s)).collect()
}

pub fn evaluate_predictions(preds: &[Vec<f64>], samples: &[SequenceSample], tau: f64) -> Result<MetricsReport> {
    if preds.len() != samples.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} samples",
            preds.len(),
            samples.len()
        )));
    }
    let per: Vec<SampleMetrics> = preds
        .par_iter()
        .zip(samples)
        .map(|(p, s)| SampleMetrics::compute(p, s, tau))
        .collect::<Result<_>>()?;
    MetricsReport::mean_of(&per)
}

pub fn evaluate_set<P: Predictor + ?Sized>(model: &P, samples: &[SequenceSample], tau: f64) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("evaluation set is empty".into()));
    }
    evaluate_predictions(&predict_set(model, samples)?, samples, tau)
}
