use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{SampleMeta, SequenceSample};
use crate::error::{Error, Result};

/// A grayscale glyph bitmap, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Glyph {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Glyph {
    fn at(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.pixels[y as usize * self.width + x as usize] as f64
        }
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        let top = self.at(xi, yi) * (1.0 - fx) + self.at(xi + 1, yi) * fx;
        let bot = self.at(xi, yi + 1) * (1.0 - fx) + self.at(xi + 1, yi + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Half the diagonal: the radius of the disc that contains the glyph
    /// under any rotation about its center.
    pub fn radius(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt() / 2.0
    }
}

/// Seven-segment strokes per digit, as (x0, y0, x1, y1) on a 28x28 canvas.
fn digit_strokes(d: usize) -> Vec<(f64, f64, f64, f64)> {
    let (l, r, t, m, b) = (8.0, 19.0, 5.0, 14.0, 23.0);
    let seg = [
        (l, t, r, t), // top
        (r, t, r, m), // upper right
        (r, m, r, b), // lower right
        (l, b, r, b), // bottom
        (l, m, l, b), // lower left
        (l, t, l, m), // upper left
        (l, m, r, m), // middle
    ];
    let on: &[usize] = match d {
        0 => &[0, 1, 2, 3, 4, 5],
        1 => &[1, 2],
        2 => &[0, 1, 6, 4, 3],
        3 => &[0, 1, 6, 2, 3],
        4 => &[5, 6, 1, 2],
        5 => &[0, 5, 6, 2, 3],
        6 => &[0, 5, 6, 4, 2, 3],
        7 => &[0, 1, 2],
        8 => &[0, 1, 2, 3, 4, 5, 6],
        _ => &[0, 1, 5, 6, 2, 3],
    };
    on.iter().map(|&i| seg[i]).collect()
}

fn segment_distance(px: f64, py: f64, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    };
    ((px - x0 - t * dx).powi(2) + (py - y0 - t * dy).powi(2)).sqrt()
}

/// Procedurally drawn digits 0-9 as anti-aliased strokes on 28x28 canvases.
pub fn builtin_glyphs() -> Vec<Glyph> {
    const SIZE: usize = 28;
    const HALF_WIDTH: f64 = 1.6;
    (0..10)
        .map(|d| {
            let strokes = digit_strokes(d);
            let mut pixels = vec![0u8; SIZE * SIZE];
            for y in 0..SIZE {
                for x in 0..SIZE {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let dist = strokes
                        .iter()
                        .map(|&s| segment_distance(px, py, s))
                        .fold(f64::INFINITY, f64::min);
                    let cover = (HALF_WIDTH + 0.5 - dist).clamp(0.0, 1.0);
                    pixels[y * SIZE + x] = (cover * 255.0).round() as u8;
                }
            }
            Glyph {
                width: SIZE,
                height: SIZE,
                pixels,
            }
        })
        .collect()
}

/// Reads an IDX3 unsigned-byte image file (the format of the classic
/// handwritten digit sets). `limit` caps how many images are kept.
pub fn load_idx_glyphs(path: &Path, limit: Option<usize>) -> Result<Vec<Glyph>> {
    let bytes = fs::read(path)?;
    let what = path.display().to_string();
    let word = |off: usize| -> Result<usize> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| Error::Format {
                what: what.clone(),
                offset: off as u64,
                msg: "truncated header".into(),
            })
    };
    if word(0)? != 0x0803 {
        return Err(Error::Format {
            what,
            offset: 0,
            msg: "not an IDX3 unsigned-byte file".into(),
        });
    }
    let (count, rows, cols) = (word(4)?, word(8)?, word(12)?);
    let keep = limit.map_or(count, |l| l.min(count));
    let size = rows * cols;
    if size == 0 || bytes.len() < 16 + keep * size {
        return Err(Error::Format {
            what,
            offset: bytes.len() as u64,
            msg: format!("expected {keep} images of {rows}x{cols}"),
        });
    }
    Ok((0..keep)
        .map(|i| Glyph {
            width: cols,
            height: rows,
            pixels: bytes[16 + i * size..16 + (i + 1) * size].to_vec(),
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphSource {
    #[default]
    Builtin,
    Idx(PathBuf),
}

impl GlyphSource {
    pub fn load(&self) -> Result<Vec<Glyph>> {
        match self {
            GlyphSource::Builtin => Ok(builtin_glyphs()),
            GlyphSource::Idx(p) => load_idx_glyphs(p, None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnistPpConfig {
    pub patch: usize,
    pub frames: usize,
    pub digits_per_seq: usize,
    /// Speed in pixels per frame; direction is uniform.
    pub velocity: (f64, f64),
    /// Rotation rate in degrees per frame.
    pub rotation: (f64, f64),
    /// Per-frame multiplicative scale change and the cumulative bounds.
    pub scale_step: (f64, f64),
    pub scale_bounds: (f64, f64),
    /// Per-frame multiplicative brightness change and the cumulative bounds.
    pub illumination_step: (f64, f64),
    pub illumination_bounds: (f64, f64),
    pub glyphs: GlyphSource,
}

impl Default for MnistPpConfig {
    fn default() -> Self {
        MnistPpConfig {
            patch: 64,
            frames: 10,
            digits_per_seq: 2,
            velocity: (1.0, 3.6),
            rotation: (-6.0, 6.0),
            scale_step: (0.98, 1.02),
            scale_bounds: (0.5, 1.5),
            illumination_step: (0.97, 1.03),
            illumination_bounds: (0.6, 1.0),
            glyphs: GlyphSource::Builtin,
        }
    }
}

fn ordered(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{name} range [{lo}, {hi}] is not ordered")));
    }
    Ok(())
}

impl MnistPpConfig {
    /// Checks the ranges and that every glyph, rotated arbitrarily at the
    /// largest scale, fits inside the patch.
    pub fn validate(&self, glyphs: &[Glyph]) -> Result<()> {
        if glyphs.is_empty() {
            return Err(Error::Config("glyph source is empty".into()));
        }
        if self.frames < 2 || self.digits_per_seq == 0 || self.patch == 0 {
            return Err(Error::Config(
                "need at least 2 frames, 1 digit and a positive patch".into(),
            ));
        }
        ordered("velocity", self.velocity)?;
        ordered("rotation", self.rotation)?;
        ordered("scale step", self.scale_step)?;
        ordered("scale bounds", self.scale_bounds)?;
        ordered("illumination step", self.illumination_step)?;
        ordered("illumination bounds", self.illumination_bounds)?;
        if self.velocity.0 < 0.0 || self.scale_step.0 <= 0.0 || self.scale_bounds.0 <= 0.0 {
            return Err(Error::Config("speeds must be non-negative and scales positive".into()));
        }
        if self.illumination_step.0 < 0.0 || self.illumination_bounds.0 < 0.0 || self.illumination_bounds.1 > 1.0 {
            return Err(Error::Config("illumination must stay within [0, 1]".into()));
        }
        let radius = glyphs.iter().map(Glyph::radius).fold(0.0, f64::max);
        let span = 2.0 * radius * self.scale_bounds.1;
        if span > self.patch as f64 {
            return Err(Error::Config(format!(
                "glyphs span up to {span:.1} px at scale {} but the patch is {} px",
                self.scale_bounds.1, self.patch
            )));
        }
        Ok(())
    }
}

/// State of one digit in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DigitPose {
    pub glyph: usize,
    pub cx: f64,
    pub cy: f64,
    pub angle_deg: f64,
    pub scale: f64,
    pub illumination: f64,
    /// Radius of the disc containing the transformed glyph.
    pub radius: f64,
}

impl DigitPose {
    /// Axis-aligned box around the transformed glyph: (x0, y0, x1, y1).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.radius,
            self.cy - self.radius,
            self.cx + self.radius,
            self.cy + self.radius,
        )
    }
}

struct Motion {
    vx: f64,
    vy: f64,
    spin: f64,
    grow: f64,
    fade: f64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).sample(rng)
    }
}

/// Keeps a coordinate within `[r, patch - r]`, mirroring overshoot and the
/// velocity component.
fn reflect(pos: &mut f64, vel: &mut f64, r: f64, patch: f64) {
    let (lo, hi) = (r, patch - r);
    if *pos < lo {
        *pos = 2.0 * lo - *pos;
        *vel = -*vel;
    } else if *pos > hi {
        *pos = 2.0 * hi - *pos;
        *vel = -*vel;
    }
    *pos = pos.clamp(lo, hi);
}

/// Poses of every digit in every frame for sample `index`.
pub fn trajectory(cfg: &MnistPpConfig, glyphs: &[Glyph], seed: u64, index: u64) -> Vec<Vec<DigitPose>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let patch = cfg.patch as f64;
    let scale = 1.0_f64.clamp(cfg.scale_bounds.0, cfg.scale_bounds.1);
    let illumination = 1.0_f64.clamp(cfg.illumination_bounds.0, cfg.illumination_bounds.1);
    let mut poses = Vec::with_capacity(cfg.digits_per_seq);
    let mut motions = Vec::with_capacity(cfg.digits_per_seq);
    for _ in 0..cfg.digits_per_seq {
        let glyph = rng.gen_range(0..glyphs.len());
        let radius = glyphs[glyph].radius() * scale;
        let (cx, cy) = (
            uniform(&mut rng, (radius, patch - radius)),
            uniform(&mut rng, (radius, patch - radius)),
        );
        let speed = uniform(&mut rng, cfg.velocity);
        let dir = uniform(&mut rng, (0.0, 2.0 * PI));
        motions.push(Motion {
            vx: speed * dir.cos(),
            vy: speed * dir.sin(),
            spin: uniform(&mut rng, cfg.rotation),
            grow: uniform(&mut rng, cfg.scale_step),
            fade: uniform(&mut rng, cfg.illumination_step),
        });
        poses.push(DigitPose {
            glyph,
            cx,
            cy,
            angle_deg: 0.0,
            scale,
            illumination,
            radius,
        });
    }

    let mut frames = Vec::with_capacity(cfg.frames);
    frames.push(poses.clone());
    for _ in 1..cfg.frames {
        for (p, m) in poses.iter_mut().zip(motions.iter_mut()) {
            p.scale = (p.scale * m.grow).clamp(cfg.scale_bounds.0, cfg.scale_bounds.1);
            p.illumination = (p.illumination * m.fade).clamp(cfg.illumination_bounds.0, cfg.illumination_bounds.1);
            p.angle_deg += m.spin;
            p.radius = glyphs[p.glyph].radius() * p.scale;
            p.cx += m.vx;
            p.cy += m.vy;
            reflect(&mut p.cx, &mut m.vx, p.radius, patch);
            reflect(&mut p.cy, &mut m.vy, p.radius, patch);
        }
        frames.push(poses.clone());
    }
    frames
}

/// Draws the digits of one frame, combining overlaps by per-pixel maximum.
fn render(poses: &[DigitPose], glyphs: &[Glyph], patch: usize, out: &mut [u8]) {
    let mut canvas = vec![0.0f64; patch * patch];
    for p in poses {
        let g = &glyphs[p.glyph];
        let (sin, cos) = (-p.angle_deg.to_radians()).sin_cos();
        let (gcx, gcy) = (g.width as f64 / 2.0, g.height as f64 / 2.0);
        let (x0, y0, x1, y1) = p.bounds();
        let ys = (y0.floor().max(0.0) as usize)..(y1.ceil().min(patch as f64) as usize);
        for y in ys {
            let xs = (x0.floor().max(0.0) as usize)..(x1.ceil().min(patch as f64) as usize);
            for x in xs {
                let dx = (x as f64 + 0.5 - p.cx) / p.scale;
                let dy = (y as f64 + 0.5 - p.cy) / p.scale;
                let u = cos * dx - sin * dy + gcx - 0.5;
                let v = sin * dx + cos * dy + gcy - 0.5;
                let val = g.bilinear(u, v) * p.illumination;
                let c = &mut canvas[y * patch + x];
                *c = c.max(val);
            }
        }
    }
    for (o, c) in out.iter_mut().zip(canvas) {
        *o = c.round().clamp(0.0, 255.0) as u8;
    }
}

/// Renders sample `index` of the stream defined by `seed`.
pub fn mnistpp_sample(cfg: &MnistPpConfig, glyphs: &[Glyph], seed: u64, index: u64) -> SequenceSample {
    let traj = trajectory(cfg, glyphs, seed, index);
    let n = cfg.patch * cfg.patch;
    let mut frames = vec![0u8; cfg.frames * n];
    for (t, poses) in traj.iter().enumerate() {
        render(poses, glyphs, cfg.patch, &mut frames[t * n..(t + 1) * n]);
    }
    SequenceSample::new(frames, cfg.frames, cfg.patch, cfg.patch)
        .expect("validated configuration")
        .with_meta(SampleMeta {
            source: Some(format!("mnistpp:{seed}:{index}")),
            timestamps: Vec::new(),
        })
}

/// Generates `count` moving-digit sequences; sample `i` depends only on
/// `(seed, i)`.
pub fn gen_mnistpp(cfg: &MnistPpConfig, seed: u64, count: usize) -> Result<Vec<SequenceSample>> {
    let glyphs = cfg.glyphs.load()?;
    cfg.validate(&glyphs)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| mnistpp_sample(cfg, &glyphs, seed, i))
        .collect())
}
