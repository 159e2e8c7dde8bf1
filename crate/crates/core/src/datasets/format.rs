use std::fs;
use std::io::Write;
use std::path::Path;

use super::sample::SequenceSample;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SCSQ";
const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 25;

/// Serializes samples into the `.scsq` layout: magic, version, then little-
/// endian u32 count, frames, height, width, channels (always 1), then raw
/// pixels sample-major, frame-major, row-major.
pub fn encode_container(samples: &[SequenceSample]) -> Result<Vec<u8>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::EmptyDataset("container needs at least one sequence".into()))?;
    let (t, h, w) = (first.len(), first.height(), first.width());
    if let Some(i) = samples
        .iter()
        .position(|s| (s.len(), s.height(), s.width()) != (t, h, w))
    {
        let s = &samples[i];
        return Err(Error::InvalidArgument(format!(
            "sequence {i} is {}x{}x{}, expected {t}x{h}x{w}",
            s.len(),
            s.height(),
            s.width()
        )));
    }
    let dim = |v: usize| -> Result<[u8; 4]> {
        u32::try_from(v)
            .map(u32::to_le_bytes)
            .map_err(|_| Error::InvalidArgument(format!("extent {v} does not fit the header")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * t * h * w);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [samples.len(), t, h, w, 1] {
        out.extend_from_slice(&dim(v)?);
    }
    for s in samples {
        out.extend_from_slice(s.pixels());
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8], what: &str) -> Result<Vec<SequenceSample>> {
    let err = |offset: usize, msg: String| Error::Format {
        what: what.to_string(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err(0, "bad magic, expected \"SCSQ\"".into()));
    }
    match bytes.get(4) {
        Some(&VERSION) => {}
        Some(v) => return Err(err(4, format!("unsupported version {v}"))),
        None => return Err(err(4, "truncated header".into())),
    }
    let word = |i: usize| -> Result<usize> {
        let off = 5 + 4 * i;
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| err(bytes.len(), "truncated header".into()))
    };
    let (count, t, h, w, c) = (word(0)?, word(1)?, word(2)?, word(3)?, word(4)?);
    if c != 1 {
        return Err(err(21, format!("expected 1 channel, found {c}")));
    }
    if t < 2 || h == 0 || w == 0 {
        return Err(err(9, format!("invalid sequence shape {t}x{h}x{w}")));
    }
    let per = t * h * w;
    let expected = HEADER_LEN + count * per;
    if bytes.len() < expected {
        return Err(err(
            bytes.len(),
            format!("truncated payload, expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(err(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    (0..count)
        .map(|i| {
            let start = HEADER_LEN + i * per;
            SequenceSample::new(bytes[start..start + per].to_vec(), t, h, w)
        })
        .collect()
}

pub fn write_container(samples: &[SequenceSample], path: &Path) -> Result<()> {
    let bytes = encode_container(samples)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Vec<SequenceSample>> {
    decode_container(&fs::read(path)?, &path.display().to_string())
}

/// Binary (P5) 8-bit PGM.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height || width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} pixels do not form a {width}x{height} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Parses a P5 PGM with maxval up to 255; returns (width, height, pixels).
pub fn decode_pgm(bytes: &[u8], what: &str) -> Result<(usize, usize, Vec<u8>)> {
    let err = |offset: usize, msg: &str| Error::Format {
        what: what.to_string(),
        offset: offset as u64,
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(0, "bad magic, expected \"P5\""));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a header number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| err(start, "header number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(pos, "expected whitespace after the header"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(err(pos, "empty image"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(err(pos, "only 8-bit images are supported"));
    }
    let end = pos + w * h;
    if bytes.len() < end {
        return Err(err(bytes.len(), "truncated pixel data"));
    }
    Ok((w, h, bytes[pos..end].to_vec()))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, pixels)?)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    decode_pgm(&fs::read(path)?, &path.display().to_string())
}
