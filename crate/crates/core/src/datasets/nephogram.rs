use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::read_pgm;
use super::sample::{SampleMeta, SequenceSample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    /// Per-pixel minimum over the whole series.
    Min,
    /// Per-pixel median over the whole series.
    Median,
    /// A grayscale image read from disk.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NephoPipelineConfig {
    pub interval_minutes: i64,
    pub seq_len: usize,
    pub crop: usize,
    pub crops_per_window: usize,
    pub background: BackgroundMode,
    /// Crops whose mean intensity (after background removal) is below this
    /// are dropped.
    pub min_mean: f64,
}

impl Default for NephoPipelineConfig {
    fn default() -> Self {
        NephoPipelineConfig {
            interval_minutes: 30,
            seq_len: 7,
            crop: 200,
            crops_per_window: 4,
            background: BackgroundMode::Min,
            min_mean: 4.0,
        }
    }
}

/// Counts describing one pipeline run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepReport {
    pub files_seen: usize,
    pub files_skipped: usize,
    pub segments: usize,
    pub windows: usize,
    pub crops_rejected: usize,
    pub samples: usize,
}

/// A decoded grayscale frame with its acquisition time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedFrame {
    pub time: NaiveDateTime,
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Finds the first run of exactly twelve digits that reads as YYYYMMDDHHMM.
pub fn parse_timestamp(name: &str) -> Option<NaiveDateTime> {
    let b = name.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i - start == 12 {
            if let Ok(t) = NaiveDateTime::parse_from_str(&name[start..i], "%Y%m%d%H%M") {
                return Some(t);
            }
        }
    }
    None
}

/// Rec. 601 luma, rounded.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

fn load_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return read_pgm(path);
    }
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok((w, h, rgb.pixels().map(|p| luma(p[0], p[1], p[2])).collect()))
}

/// Reads every image in `dir` whose name carries a timestamp, sorted by time.
/// Files without one are skipped with a warning; so are repeated timestamps.
pub fn load_frames(dir: &Path, report: &mut PrepReport) -> Result<Vec<TimedFrame>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.retain(|p| p.is_file());
    entries.sort();
    let mut frames = Vec::new();
    for path in entries {
        report.files_seen += 1;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let Some(time) = parse_timestamp(&name) else {
            log::warn!("skipping {name}: no YYYYMMDDHHMM timestamp in the name");
            report.files_skipped += 1;
            continue;
        };
        let (width, height, pixels) = load_gray(&path)?;
        frames.push(TimedFrame {
            time,
            name,
            width,
            height,
            pixels,
        });
    }
    frames.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.name.cmp(&b.name)));
    let before = frames.len();
    frames.dedup_by(|b, a| {
        let dup = a.time == b.time;
        if dup {
            log::warn!("skipping {}: same timestamp as {}", b.name, a.name);
        }
        dup
    });
    report.files_skipped += before - frames.len();
    if let Some(f) = frames.first() {
        let (w, h) = (f.width, f.height);
        if let Some(bad) = frames.iter().find(|g| (g.width, g.height) != (w, h)) {
            return Err(Error::InvalidArgument(format!(
                "{} is {}x{}, other frames are {w}x{h}",
                bad.name, bad.width, bad.height
            )));
        }
    }
    Ok(frames)
}

/// Splits time-sorted frames into maximal runs with exactly `interval`
/// between neighbours; returns index ranges.
pub fn segments(times: &[NaiveDateTime], interval: Duration) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=times.len() {
        if i == times.len() || times[i] - times[i - 1] != interval {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

/// Consecutive non-overlapping windows of `len` frames inside each segment.
pub fn windows(segs: &[std::ops::Range<usize>], len: usize) -> Vec<std::ops::Range<usize>> {
    segs.iter()
        .flat_map(|s| {
            let n = (s.end - s.start) / len;
            (0..n).map(move |k| s.start + k * len..s.start + (k + 1) * len)
        })
        .collect()
}

pub fn background(frames: &[&[u8]], mode: &BackgroundMode, width: usize, height: usize) -> Result<Vec<u8>> {
    let n = width * height;
    match mode {
        BackgroundMode::Min => Ok((0..n).map(|i| frames.iter().map(|f| f[i]).min().unwrap_or(0)).collect()),
        BackgroundMode::Median => Ok((0..n)
            .map(|i| {
                let mut v: Vec<u8> = frames.iter().map(|f| f[i]).collect();
                v.sort_unstable();
                v.get(v.len().saturating_sub(1) / 2).copied().unwrap_or(0)
            })
            .collect()),
        BackgroundMode::File(path) => {
            let (w, h, px) = load_gray(path)?;
            if (w, h) != (width, height) {
                return Err(Error::InvalidArgument(format!(
                    "background {} is {w}x{h}, frames are {width}x{height}",
                    path.display()
                )));
            }
            Ok(px)
        }
    }
}

/// `frame - background`, clamped at zero.
pub fn subtract_background(frame: &[u8], bg: &[u8]) -> Vec<u8> {
    frame.iter().zip(bg).map(|(&f, &b)| f.saturating_sub(b)).collect()
}

/// Turns in-memory timed frames into shuffled, cropped training sequences.
pub fn build_sequences(
    frames: &[TimedFrame],
    cfg: &NephoPipelineConfig,
    seed: u64,
    report: &mut PrepReport,
) -> Result<Vec<SequenceSample>> {
    if cfg.interval_minutes <= 0 {
        return Err(Error::Config("interval must be positive".into()));
    }
    if cfg.seq_len < 2 || cfg.crop == 0 || cfg.crops_per_window == 0 {
        return Err(Error::Config(
            "need seq_len >= 2, a positive crop and at least one crop per window".into(),
        ));
    }
    let Some(first) = frames.first() else {
        return Err(Error::EmptyDataset("no timestamped frames".into()));
    };
    let (w, h) = (first.width, first.height);
    if cfg.crop > w || cfg.crop > h {
        return Err(Error::Config(format!("crop {} exceeds frame extent {w}x{h}", cfg.crop)));
    }

    let times: Vec<NaiveDateTime> = frames.iter().map(|f| f.time).collect();
    let segs = segments(&times, Duration::minutes(cfg.interval_minutes));
    let wins = windows(&segs, cfg.seq_len);
    report.segments = segs.len();
    report.windows = wins.len();

    let views: Vec<&[u8]> = frames.iter().map(|f| f.pixels.as_slice()).collect();
    let bg = background(&views, &cfg.background, w, h)?;
    let clean: Vec<Vec<u8>> = views.iter().map(|f| subtract_background(f, &bg)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.crop;
    let mut samples = Vec::new();
    for win in &wins {
        for _ in 0..cfg.crops_per_window {
            let (x0, y0) = (rng.gen_range(0..=w - c), rng.gen_range(0..=h - c));
            let mut px = Vec::with_capacity(cfg.seq_len * c * c);
            for f in &clean[win.clone()] {
                for y in y0..y0 + c {
                    px.extend_from_slice(&f[y * w + x0..y * w + x0 + c]);
                }
            }
            let mean = px.iter().map(|&v| v as f64).sum::<f64>() / px.len() as f64;
            if mean < cfg.min_mean {
                report.crops_rejected += 1;
                continue;
            }
            let meta = SampleMeta {
                source: Some(format!("{}@{x0},{y0}", frames[win.start].name)),
                timestamps: frames[win.clone()]
                    .iter()
                    .map(|f| f.time.format("%Y%m%d%H%M").to_string())
                    .collect(),
            };
            samples.push(SequenceSample::new(px, cfg.seq_len, c, c)?.with_meta(meta));
        }
    }
    samples.shuffle(&mut rng);
    report.samples = samples.len();
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no sequences survived ({} windows, {} crops rejected as background)",
            report.windows, report.crops_rejected
        )));
    }
    Ok(samples)
}

/// Loads a directory of timestamped images and runs [`build_sequences`].
pub fn prep_nephograms(dir: &Path, cfg: &NephoPipelineConfig, seed: u64) -> Result<(Vec<SequenceSample>, PrepReport)> {
    let mut report = PrepReport::default();
    let frames = load_frames(dir, &mut report)?;
    let samples = build_sequences(&frames, cfg, seed, &mut report)?;
    Ok((samples, report))
}
