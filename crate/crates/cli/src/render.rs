//! Figure-style grids: one row per sample, one column per image.

/// Width of the white separator between cells and between rows.
pub const GUTTER: usize = 2;
const WHITE: u8 = 255;

/// A grayscale image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl Cell {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), height * width, "cell pixel count");
        Cell { height, width, pixels }
    }

    /// Clamps to [0, 255] and rounds.
    pub fn from_prediction(height: usize, width: usize, values: &[f64]) -> Self {
        let pixels = values.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect();
        Cell::new(height, width, pixels)
    }
}

/// Lays equally sized cells out in rows separated by white gutters.
/// Returns `(width, height, pixels)`.
pub fn layout(rows: &[Vec<Cell>]) -> (usize, usize, Vec<u8>) {
    let Some(first) = rows.first().and_then(|r| r.first()) else {
        return (0, 0, Vec::new());
    };
    let (ch, cw) = (first.height, first.width);
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width = cols * cw + (cols - 1) * GUTTER;
    let height = rows.len() * ch + (rows.len() - 1) * GUTTER;
    let mut out = vec![WHITE; width * height];
    for (r, row) in rows.iter().enumerate() {
        let y0 = r * (ch + GUTTER);
        for (c, cell) in row.iter().enumerate() {
            assert_eq!((cell.height, cell.width), (ch, cw), "cells must share one size");
            let x0 = c * (cw + GUTTER);
            for y in 0..ch {
                let dst = (y0 + y) * width + x0;
                out[dst..dst + cw].copy_from_slice(&cell.pixels[y * cw..(y + 1) * cw]);
            }
        }
    }
    (width, height, out)
}
