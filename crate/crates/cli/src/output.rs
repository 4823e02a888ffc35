// SPDX-License-Identifier: MIT OR Apache-2.0

//! File writers: binary PGM (P5) images and small CSV helpers.

use std::path::Path;

use crate::error::{CliError, CliResult};

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Gray {
    pub fn new(width: usize, height: usize) -> Self {
        Gray {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    fn blit(&mut self, tile: &Gray, x0: usize, y0: usize) {
        for y in 0..tile.height {
            let src = &tile.pixels[y * tile.width..(y + 1) * tile.width];
            let start = (y0 + y) * self.width + x0;
            self.pixels[start..start + tile.width].copy_from_slice(src);
        }
    }
}

/// `(width, height)` of the image a length-`m` vector is shown as: square
/// when `m` is a perfect square, otherwise a single row.
pub fn tile_shape(m: usize) -> (usize, usize) {
    let side = (m as f64).sqrt().round() as usize;
    if side * side == m {
        (side, side)
    } else {
        (m, 1)
    }
}

pub fn is_square_image(m: usize) -> bool {
    tile_shape(m).1 > 1
}

/// Maps `values` to bytes with `lo → 0`, `hi → 255`; a degenerate range
/// renders mid-gray.
pub fn render(values: &[f64], lo: f64, hi: f64) -> Gray {
    let (w, h) = tile_shape(values.len());
    let pixels = values
        .iter()
        .map(|&v| {
            if !(hi > lo) {
                128
            } else {
                (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
            }
        })
        .collect();
    Gray {
        width: w,
        height: h,
        pixels,
    }
}

pub fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Tiles laid out left to right with a shared intensity scale.
pub fn strip(rows: &[Vec<f64>]) -> Gray {
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let (lo, hi) = min_max(&all);
    let tiles: Vec<Gray> = rows.iter().map(|r| render(r, lo, hi)).collect();
    grid(&tiles, tiles.len())
}

/// Tiles in a `columns`-wide grid; each tile min-max normalized on its own.
pub fn atom_grid(atoms: &[Vec<f64>]) -> Gray {
    let tiles: Vec<Gray> = atoms
        .iter()
        .map(|a| {
            let (lo, hi) = min_max(a);
            render(a, lo, hi)
        })
        .collect();
    let columns = (atoms.len() as f64).sqrt().ceil().max(1.0) as usize;
    grid(&tiles, columns)
}

fn grid(tiles: &[Gray], columns: usize) -> Gray {
    let Some(first) = tiles.first() else {
        return Gray::new(0, 0);
    };
    let (tw, th) = (first.width, first.height);
    let rows = tiles.len().div_ceil(columns);
    let mut img = Gray::new(tw * columns, th * rows);
    for (i, t) in tiles.iter().enumerate() {
        img.blit(t, (i % columns) * tw, (i / columns) * th);
    }
    img
}

/// Formats an optional value, writing `NA` when absent.
pub fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| sparsedict_core::metrics::UNDEFINED.to_string(), |x| x.to_string())
}
